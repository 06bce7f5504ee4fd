"""End-to-end experiment orchestration.

Reproduces the full pipeline on simulated traffic: a pretraining hour of
normal behavior, a five-hour normal corpus for centralized and federated
training, per-attack 35-minute runs, k-sweep detection reports, and the
communication-overhead comparison. Every artifact is a pure function of
the experiment seed and config.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .attacks import AttackPlan, AttackSpec, enumerate_attacks, label_windows
from .autoencoder import (
    ModelWeights,
    TrainConfig,
    init_weights,
    per_sample_losses,
    save_weights,
    train,
)
from .detect import (
    DEFAULT_KS,
    DetectionReport,
    Threshold,
    calibrate_threshold,
    classify_window,
    report_csv,
    score,
    select_optimal_k,
)
from .features import (
    COORDINATOR_SCHEMA,
    ROUTER_SCHEMA,
    FeatureVector,
    ScalerParams,
    apply_scaler,
    extract_window,
    fit_scaler,
    make_windows,
    router_view,
    to_csv,
)
from .federated import FLConfig, run_federated_training, transfer_init
from .logfmt import LogEntry
from .nodes import ROUTERS, C, NodeId, ScenarioFamily, Topology, build_topology
from .simkernel import DEFAULT_START, HopDelayModel, SimConfig, SimResult, run_simulation

MODE_CENTRALIZED = "centralized"
MODE_FEDERATED = "federated"
MODES = (MODE_CENTRALIZED, MODE_FEDERATED)


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name for diagnostics."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def derive_seed(master: int, label: str) -> int:
    """Stable 64-bit sub-seed for a named pipeline stage."""
    digest = hashlib.sha256(f"{master}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 3
    scenario: ScenarioFamily = ScenarioFamily.III
    mode: str = "both"  # centralized | federated | both
    pretrain_duration: float = 3600.0
    normal_duration: float = 5 * 3600.0
    window_len: float = 60.0
    validation_fraction: float = 0.2
    fl_rounds: int = 5
    round_interval: float = 3600.0
    train: TrainConfig = field(default_factory=TrainConfig)
    ks: tuple[float, ...] = DEFAULT_KS
    hop_delay: HopDelayModel = field(default_factory=HopDelayModel)
    # Uniform per-send timing noise. Large enough that per-window packet
    # counts spread over many values: the scaler then maps a redirected
    # (emptied) destination count well below the typical normal window,
    # which is what makes single-flow redirections stand out.
    send_jitter: float = 6.0
    attack_tokens: tuple[str, ...] = ()  # empty selects the whole scenario
    # The pretrain corpus is one hour (180 windows across three routers),
    # so the shared starting model needs far more passes than the main
    # training phase to converge.
    pretrain_epochs: int = 400
    # Federated rounds gently fine-tune the transferred global model.
    # Long or aggressive local runs drift the clients into different
    # basins and the averaged global model stops reconstructing anything.
    fed_local_epochs: int = 5
    fed_local_lr: float = 1e-4

    @property
    def modes(self) -> tuple[str, ...]:
        return MODES if self.mode == "both" else (self.mode,)

    def sim_config(self, label: str, duration: float) -> SimConfig:
        return SimConfig(seed=derive_seed(self.seed, label), duration=duration,
                         hop_delay_model=self.hop_delay,
                         send_jitter=self.send_jitter)

    def selected_attacks(self) -> list[AttackSpec]:
        specs = enumerate_attacks(self.scenario)
        if not self.attack_tokens:
            return specs
        by_token = {s.token(): s for s in specs}
        try:
            return [by_token[t] for t in self.attack_tokens]
        except KeyError as exc:
            raise ValueError(f"unknown attack token {exc.args[0]!r} "
                             f"for scenario {self.scenario.value}") from None


def central_stream(result: SimResult, router: NodeId) -> list[LogEntry]:
    """Coordinator entries replayed for one router: those whose path crosses it."""
    entries = result.entries.get(C, [])
    out = []
    for e in entries:
        nodes = {e.segments[0].src} | {s.dst for s in e.segments}
        if router in nodes:
            out.append(e)
    return out


def federated_stream(result: SimResult, router: NodeId) -> list[LogEntry]:
    """The entries a router logged itself."""
    return router_view(result.entries.get(router, []), router)


def window_features(entries: Sequence[LogEntry], start: datetime, duration: float,
                    window_len: float, schema, device: NodeId) -> list[FeatureVector]:
    windows = make_windows(start, duration, window_len)
    return [extract_window(entries, w, schema, device) for w in windows]


def _matrix(vectors: Sequence[FeatureVector]) -> np.ndarray:
    return np.stack([v.values for v in vectors]).astype(np.float32)


@dataclass
class TrainedPipeline:
    """Everything detection needs for one mode: model, scalers, thresholds."""

    mode: str
    model: ModelWeights
    pretrained: ModelWeights
    scalers: dict[NodeId, ScalerParams]
    validation_losses: dict[NodeId, np.ndarray]
    per_round_globals: list[ModelWeights] = field(default_factory=list)
    ledger: list = field(default_factory=list)

    def thresholds(self, router: NodeId, ks: Sequence[float]) -> dict[float, Threshold]:
        return {k: calibrate_threshold(self.validation_losses[router], k, router)
                for k in ks}

    def window_losses(self, router: NodeId,
                      raw_vectors: Sequence[FeatureVector]) -> np.ndarray:
        scaled = [apply_scaler(v, self.scalers[router]) for v in raw_vectors]
        return per_sample_losses(self.model, _matrix(scaled))


def _stream_of(mode: str, result: SimResult, router: NodeId) -> list[LogEntry]:
    if mode == MODE_CENTRALIZED:
        return central_stream(result, router)
    return federated_stream(result, router)


def _schema_of(mode: str):
    return COORDINATOR_SCHEMA if mode == MODE_CENTRALIZED else ROUTER_SCHEMA


def build_pipeline(cfg: ExperimentConfig, mode: str, topology: Topology,
                   pretrain_result: SimResult, normal_result: SimResult) -> TrainedPipeline:
    """Fit scalers, pretrain, train (centrally or federated), calibrate losses."""
    schema = _schema_of(mode)
    n_windows = int(-(-cfg.normal_duration // cfg.window_len))
    n_train = round(n_windows * (1.0 - cfg.validation_fraction))

    raw: dict[NodeId, list[FeatureVector]] = {}
    raw_pre: dict[NodeId, list[FeatureVector]] = {}
    for router in ROUTERS:
        raw[router] = window_features(
            _stream_of(mode, normal_result, router), DEFAULT_START,
            cfg.normal_duration, cfg.window_len, schema, router)
        raw_pre[router] = window_features(
            _stream_of(mode, pretrain_result, router), DEFAULT_START,
            cfg.pretrain_duration, cfg.window_len, schema, router)

    # Per-router scalers in both modes. Each router normalizes against its
    # own traffic level, so clients look statistically alike after scaling
    # (which keeps weight averaging meaningful) and a redirected flow
    # clamps hard against the router's own training range.
    scalers = {r: fit_scaler(raw[r][:n_train]) for r in ROUTERS}

    def scaled(router: NodeId, vectors: Sequence[FeatureVector]) -> np.ndarray:
        return _matrix([apply_scaler(v, scalers[router]) for v in vectors])

    pretrain_pool = np.concatenate([scaled(r, raw_pre[r]) for r in ROUTERS])
    w0 = init_weights(seed=derive_seed(cfg.seed, f"{mode}-init"))
    pre_cfg = replace(cfg.train, epochs=cfg.pretrain_epochs,
                      seed=derive_seed(cfg.seed, f"{mode}-pretrain"))
    pretrained = train(w0, pretrain_pool, pre_cfg).weights

    per_round_globals: list[ModelWeights] = []
    ledger: list = []
    if mode == MODE_CENTRALIZED:
        pool = np.concatenate([scaled(r, raw[r][:n_train]) for r in ROUTERS])
        fit_cfg = replace(cfg.train, seed=derive_seed(cfg.seed, f"{mode}-fit"))
        model = train(transfer_init(pretrained), pool, fit_cfg).weights
    else:
        chunk = max(1, n_train // cfg.fl_rounds)
        streams = {}
        for router in ROUTERS:
            train_mat = scaled(router, raw[router][:n_train])
            streams[router] = [train_mat[i * chunk:(i + 1) * chunk]
                               for i in range(cfg.fl_rounds)]
        local_cfg = replace(cfg.train, epochs=cfg.fed_local_epochs,
                            learning_rate=cfg.fed_local_lr,
                            seed=derive_seed(cfg.seed, f"{mode}-local"))
        fl_cfg = FLConfig(local_train=local_cfg, rounds=cfg.fl_rounds,
                          round_interval=cfg.round_interval,
                          client_roster=tuple(ROUTERS))
        fed = run_federated_training(fl_cfg, pretrained, streams, topology)
        model = fed.final_global
        per_round_globals = fed.per_round_globals
        ledger = fed.ledger

    validation_losses = {}
    for router in ROUTERS:
        val = scaled(router, raw[router][n_train:])
        validation_losses[router] = per_sample_losses(model, val)

    return TrainedPipeline(mode, model, pretrained, scalers,
                           validation_losses, per_round_globals, ledger)


@dataclass
class AttackOutcome:
    spec: AttackSpec
    truths: list[bool]
    # mode -> router -> per-window losses
    losses: dict[str, dict[NodeId, np.ndarray]]
    # mode -> k -> per-router report
    router_reports: dict[str, dict[float, dict[NodeId, DetectionReport]]]
    # mode -> k -> aggregated (any-router) report
    aggregate_reports: dict[str, dict[float, DetectionReport]]
    sim: SimResult | None = None
    # mode -> router -> raw per-window feature vectors
    raw_features: dict[str, dict[NodeId, list[FeatureVector]]] = field(default_factory=dict)

    def optimal_k(self, mode: str) -> float:
        return select_optimal_k(self.aggregate_reports[mode])


def evaluate_attack(cfg: ExperimentConfig, topology: Topology, spec: AttackSpec,
                    pipelines: Mapping[str, TrainedPipeline]) -> AttackOutcome:
    """Run one 35-minute attack scenario and score both pipelines."""
    plan = AttackPlan(spec)
    sim_cfg = cfg.sim_config(f"attack-{spec.token()}", plan.total_duration)
    result = run_simulation(topology, sim_cfg, plan)
    truths = [w.attack for w in label_windows(plan, cfg.window_len)]

    losses: dict[str, dict[NodeId, np.ndarray]] = {}
    raw_features: dict[str, dict[NodeId, list[FeatureVector]]] = {}
    router_reports: dict[str, dict[float, dict[NodeId, DetectionReport]]] = {}
    aggregate_reports: dict[str, dict[float, DetectionReport]] = {}
    for mode in cfg.modes:
        pipe = pipelines[mode]
        schema = _schema_of(mode)
        losses[mode] = {}
        raw_features[mode] = {}
        verdicts_per_k: dict[float, dict[NodeId, list[bool]]] = {k: {} for k in cfg.ks}
        for router in ROUTERS:
            raw_vectors = window_features(
                _stream_of(mode, result, router), sim_cfg.start_time,
                plan.total_duration, cfg.window_len, schema, router)
            raw_features[mode][router] = raw_vectors
            losses[mode][router] = pipe.window_losses(router, raw_vectors)
            thresholds = pipe.thresholds(router, cfg.ks)
            for k in cfg.ks:
                verdicts_per_k[k][router] = [
                    classify_window(float(l), thresholds[k])
                    for l in losses[mode][router]]
        router_reports[mode] = {
            k: {r: score(verdicts_per_k[k][r], truths) for r in ROUTERS}
            for k in cfg.ks}
        aggregate_reports[mode] = {
            k: score([any(verdicts_per_k[k][r][i] for r in ROUTERS)
                      for i in range(len(truths))], truths)
            for k in cfg.ks}
    return AttackOutcome(spec, truths, losses, router_reports, aggregate_reports,
                         sim=result, raw_features=raw_features)


@dataclass(frozen=True)
class OverheadModel:
    weight_payload_bytes: float = 12.6e3
    rounds: int = 5
    router_count: int = 3
    centralized_per_router_bytes: float = 1.5e6

    def validate(self) -> None:
        for value in (self.weight_payload_bytes, self.rounds, self.router_count,
                      self.centralized_per_router_bytes):
            if value < 0:
                raise ValueError("overhead parameters must be nonnegative")


def overhead_report(model: OverheadModel) -> dict[str, float]:
    """Centralized vs federated transfer totals over the training period.

    Federated counts one uplink and one downlink of the weight payload per
    router per round; centralized counts each router's raw-data total.
    """
    model.validate()
    centralized = model.centralized_per_router_bytes * model.router_count
    federated = 2.0 * model.weight_payload_bytes * model.rounds * model.router_count
    ratio = centralized / federated if federated else float("inf")
    return {"centralized_bytes": centralized, "federated_bytes": federated,
            "ratio": ratio}


def emit_plot_data(truths: Sequence[bool],
                   series: Mapping[str, Sequence[float]],
                   thresholds: Mapping[str, Mapping[float, Threshold]]) -> str:
    """Time-indexed CSV of per-window losses and threshold lines for one device."""
    modes = sorted(series)
    header = ["window", "truth"]
    header += [f"{m}_loss" for m in modes]
    for m in modes:
        header += [f"{m}_threshold_k{k:g}" for k in sorted(thresholds[m])]
    lines = [",".join(header)]
    n = len(truths)
    for m in modes:
        if len(series[m]) != n:
            raise ValueError("loss series and truth labels must align")
    for i in range(n):
        row = [str(i), "attack" if truths[i] else "normal"]
        row += [repr(float(series[m][i])) for m in modes]
        for m in modes:
            row += [repr(thresholds[m][k].value) for k in sorted(thresholds[m])]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    topology: Topology
    pipelines: dict[str, TrainedPipeline]
    outcomes: list[AttackOutcome]
    overhead: dict[str, float]


def run_experiment(cfg: ExperimentConfig, out_dir: Path | str | None = None,
                   attack_specs: Sequence[AttackSpec] | None = None) -> ExperimentResult:
    """Execute the full pipeline; optionally write the artifact bundle."""
    try:
        topology = build_topology(cfg.scenario)
    except Exception as exc:
        raise StageError("topology", exc)
    try:
        pretrain_result = run_simulation(
            topology, cfg.sim_config("pretrain", cfg.pretrain_duration))
        normal_result = run_simulation(
            topology, cfg.sim_config("normal", cfg.normal_duration))
    except Exception as exc:
        raise StageError("simulate", exc)

    pipelines = {}
    for mode in cfg.modes:
        try:
            pipelines[mode] = build_pipeline(cfg, mode, topology,
                                             pretrain_result, normal_result)
        except Exception as exc:
            raise StageError(f"train-{mode}", exc)

    specs = list(attack_specs) if attack_specs is not None else cfg.selected_attacks()
    outcomes = []
    for spec in specs:
        try:
            outcomes.append(evaluate_attack(cfg, topology, spec, pipelines))
        except Exception as exc:
            raise StageError(f"attack-{spec.token()}", exc)

    payload = len(save_weights(init_weights(seed=0)))
    overhead = overhead_report(OverheadModel(weight_payload_bytes=payload,
                                             rounds=cfg.fl_rounds))
    result = ExperimentResult(cfg, topology, pipelines, outcomes, overhead)
    if out_dir is not None:
        try:
            write_bundle(result, Path(out_dir),
                         pretrain_result=pretrain_result,
                         normal_result=normal_result)
        except Exception as exc:
            raise StageError("emit", exc)
    return result


def write_bundle(result: ExperimentResult, out_dir: Path,
                 pretrain_result: SimResult | None = None,
                 normal_result: SimResult | None = None) -> None:
    """Write the versioned artifact bundle for one experiment."""
    cfg = result.config
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "BUNDLE_VERSION").write_text("1\n")

    for name, sim in (("pretrain", pretrain_result), ("normal", normal_result)):
        if sim is None:
            continue
        log_dir = out_dir / name / "logs"
        log_dir.mkdir(parents=True, exist_ok=True)
        for fname, text in sorted(sim.render_logs().items()):
            (log_dir / fname).write_text(text)

    model_dir = out_dir / "models"
    model_dir.mkdir(exist_ok=True)
    for mode, pipe in sorted(result.pipelines.items()):
        (model_dir / f"{mode}_pretrained.wts").write_bytes(save_weights(pipe.pretrained))
        (model_dir / f"{mode}.wts").write_bytes(save_weights(pipe.model))
        for i, g in enumerate(pipe.per_round_globals, start=1):
            (model_dir / f"global_r{i}.wts").write_bytes(save_weights(g))
        if pipe.ledger:
            lines = ["round,sender,receiver,bytes"]
            lines += [f"{rec.round},{rec.sender},{rec.receiver},{rec.bytes}"
                      for rec in pipe.ledger]
            (out_dir / "comms_ledger.csv").write_text("\n".join(lines) + "\n")

    threshold_lines = ["mode,device,k,mean,std,value"]
    for mode, pipe in sorted(result.pipelines.items()):
        for router in ROUTERS:
            for k, t in sorted(pipe.thresholds(router, cfg.ks).items()):
                threshold_lines.append(
                    f"{mode},{router},{k:g},{t.mean!r},{t.std!r},{t.value!r}")
    (out_dir / "thresholds.csv").write_text("\n".join(threshold_lines) + "\n")

    summary_rows = []
    for outcome in result.outcomes:
        attack_dir = out_dir / "attacks" / outcome.spec.token().replace(">", "_to_")
        attack_dir.mkdir(parents=True, exist_ok=True)
        if outcome.sim is not None:
            log_dir = attack_dir / "logs"
            log_dir.mkdir(exist_ok=True)
            for fname, text in sorted(outcome.sim.render_logs().items()):
                (log_dir / fname).write_text(text)
        for mode, per_router in sorted(outcome.raw_features.items()):
            for router, vectors in sorted(per_router.items(), key=lambda kv: str(kv[0])):
                (attack_dir / f"features_{mode}_{router}.csv").write_text(
                    to_csv(vectors, outcome.truths))
        for mode in cfg.modes:
            pipe = result.pipelines[mode]
            rows = [(r, k, outcome.router_reports[mode][k][r])
                    for k in cfg.ks for r in ROUTERS]
            (attack_dir / f"report_{mode}.csv").write_text(report_csv(rows))
        for router in ROUTERS:
            series = {m: outcome.losses[m][router] for m in cfg.modes}
            ths = {m: result.pipelines[m].thresholds(router, cfg.ks)
                   for m in cfg.modes}
            (attack_dir / f"plot_{router}.csv").write_text(
                emit_plot_data(outcome.truths, series, ths))
        for mode in cfg.modes:
            k_star = outcome.optimal_k(mode)
            rep = outcome.aggregate_reports[mode][k_star]
            summary_rows.append(
                f"{outcome.spec.token()},{mode},{k_star:g},{rep.accuracy:.4f},"
                f"{rep.precision:.4f},{rep.recall:.4f},{rep.f1:.4f}")

    (out_dir / "summary.csv").write_text(
        "attack,mode,optimal_k,accuracy,precision,recall,f1\n"
        + "\n".join(summary_rows) + ("\n" if summary_rows else ""))

    oh = result.overhead
    (out_dir / "overhead.csv").write_text(
        "centralized_bytes,federated_bytes,ratio\n"
        f"{oh['centralized_bytes']!r},{oh['federated_bytes']!r},{oh['ratio']!r}\n")
