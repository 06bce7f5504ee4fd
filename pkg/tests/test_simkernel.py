import numpy as np
import pytest

from iotfed.attacks import AttackPlan, AttackSpec
from iotfed.logfmt import EntryKind, parse_log
from iotfed.nodes import (
    A,
    C,
    E1,
    EDGES,
    R1,
    R2,
    R3,
    ScenarioFamily,
    build_topology,
)
from iotfed.simkernel import (
    ConfigError,
    HopDelayModel,
    SimConfig,
    run_simulation,
    sample_hop_delay,
)

MIN = 60.0


class TestConfigValidation:
    @pytest.mark.parametrize("kwargs", [
        dict(seed=1, duration=0.0),
        dict(seed=1, duration=60.0, send_period=0.0),
        dict(seed=1, duration=60.0, send_jitter=-1.0),
        dict(seed=1, duration=60.0, drop_prob=1.5),
        dict(seed=1, duration=60.0, hop_delay_model=HopDelayModel(median_ms=0.0)),
        dict(seed=1, duration=60.0, hop_delay_model=HopDelayModel(sigma=-0.1)),
    ])
    def test_invalid_configs_rejected(self, kwargs):
        with pytest.raises(ConfigError):
            SimConfig(**kwargs).validate()


class TestHopDelay:
    def test_sigma_zero_is_exactly_the_median(self):
        rng = np.random.default_rng(0)
        model = HopDelayModel(median_ms=120.0, sigma=0.0)
        assert all(sample_hop_delay(rng, model) == 120.0 for _ in range(100))

    def test_empirical_median_near_configured(self):
        rng = np.random.default_rng(1)
        model = HopDelayModel()
        draws = [sample_hop_delay(rng, model) for _ in range(10_000)]
        assert abs(np.median(draws) - 120.0) < 12.0  # within 10%

    def test_draws_are_positive(self):
        rng = np.random.default_rng(2)
        model = HopDelayModel(sigma=2.0)
        assert all(sample_hop_delay(rng, model) > 0 for _ in range(1000))


class TestTraceGeneration:
    def test_one_minute_run_produces_240_traces(self, small_sim):
        topology, _, _ = small_sim
        cfg = SimConfig(seed=4, duration=60.0)
        result = run_simulation(topology, cfg)
        assert len(result.traces) == 240  # 4 edges x 60 sends

    def test_all_normal_traffic_reaches_coordinator(self, small_sim):
        _, _, result = small_sim
        assert all(t.delivered_to == C for t in result.traces)
        assert len(result.entries[C]) == len(result.traces)

    def test_edges_log_every_send(self, small_sim):
        _, cfg, result = small_sim
        n_sends = int(cfg.duration / cfg.send_period)
        for edge in EDGES:
            entries = result.entries[edge]
            assert len(entries) == n_sends
            assert all(e.kind is EntryKind.EDGE for e in entries)

    def test_routers_log_what_they_forward(self, small_sim):
        _, _, result = small_sim
        # Scenario III: R1 forwards E1+E2, R2 forwards E4, R3 forwards E3.
        assert len(result.entries[R1]) == 240
        assert len(result.entries[R2]) == 120
        assert len(result.entries[R3]) == 120


class TestDeterminism:
    def test_identical_seeds_render_identical_logs(self, small_sim):
        topology, cfg, result = small_sim
        again = run_simulation(topology, cfg)
        assert result.render_logs() == again.render_logs()

    def test_different_seeds_differ(self, small_sim):
        topology, cfg, result = small_sim
        other = run_simulation(topology, SimConfig(seed=cfg.seed + 1,
                                                   duration=cfg.duration))
        assert result.render_logs() != other.render_logs()

    def test_rendered_logs_parse_back(self, small_sim):
        _, _, result = small_sim
        for doc in result.render_logs().values():
            parse_log(doc)


@pytest.fixture(scope="module")
def attack_run():
    topology = build_topology(ScenarioFamily.III)
    plan = AttackPlan(AttackSpec(ScenarioFamily.III, E1, A))
    cfg = SimConfig(seed=9, duration=plan.total_duration)
    return run_simulation(topology, cfg, plan), plan


class TestAttackEffects:
    def test_no_redirected_traffic_reaches_coordinator(self, attack_run):
        result, plan = attack_run
        start, end = plan.attack_interval
        for entry in result.entries[C]:
            offset = (entry.segments[0].sent_at
                      - SimConfig(seed=0, duration=1.0).start_time).total_seconds()
            if entry.origin == E1:
                assert not (start <= offset < end)

    def test_redirected_traces_end_at_attacker(self, attack_run):
        result, plan = attack_run
        start, end = plan.attack_interval
        redirected = [t for t in result.traces
                      if t.origin == E1 and start <= t.send_time < end]
        assert redirected
        assert all(t.delivered_to == A for t in redirected)
        assert all(len(t.hops) == 1 for t in redirected)

    def test_attacker_logs_nothing(self, attack_run):
        result, _ = attack_run
        assert A not in result.entries

    def test_traffic_resumes_after_attack(self, attack_run):
        result, plan = attack_run
        _, end = plan.attack_interval
        late = [t for t in result.traces if t.origin == E1 and t.send_time >= end]
        assert late and all(t.delivered_to == C for t in late)


class TestDropsAndSkew:
    def test_full_drop_probability_stops_all_delivery(self):
        topology = build_topology(ScenarioFamily.III)
        cfg = SimConfig(seed=3, duration=10.0, drop_prob=1.0)
        result = run_simulation(topology, cfg)
        assert all(t.delivered_to is None for t in result.traces)
        assert C not in result.entries
        assert all(t.status_per_hop[-1] == 1 for t in result.traces)

    def test_node_skew_shifts_logged_timestamps(self):
        topology = build_topology(ScenarioFamily.III)
        base = SimConfig(seed=5, duration=5.0, send_jitter=0.0)
        skewed = SimConfig(seed=5, duration=5.0, send_jitter=0.0,
                           node_skew={E1: 2.0})
        t_base = run_simulation(topology, base).entries[E1][0].segments[0].sent_at
        t_skew = run_simulation(topology, skewed).entries[E1][0].segments[0].sent_at
        assert (t_skew - t_base).total_seconds() == pytest.approx(2.0)

    def test_jitter_zero_sends_exactly_on_ticks(self):
        topology = build_topology(ScenarioFamily.III)
        cfg = SimConfig(seed=6, duration=3.0, send_jitter=0.0)
        result = run_simulation(topology, cfg)
        for entry in result.entries[E1]:
            assert entry.segments[0].sent_at.microsecond == 0
