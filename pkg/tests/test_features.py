import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import COORD_LINE, ROUTER_LINE, coordinator_entry, ts
from iotfed.features import (
    COORDINATOR_SCHEMA,
    ENTROPY_BINS,
    FEATURE_NAMES,
    N_FEATURES,
    ROUTER_SCHEMA,
    ROUTER_ZERO_SLOTS,
    FeatureVector,
    ScalerMismatch,
    ScalerParams,
    apply_scaler,
    extract_window,
    fit_scaler,
    make_windows,
    router_view,
    shannon_entropy,
    to_csv,
)
from iotfed.logfmt import parse_entry
from iotfed.nodes import C, E1, E3, R1, R3

SLOT = {name: i for i, name in enumerate(FEATURE_NAMES)}
WINDOW = (ts(0.0), ts(60.0))


class TestSchema:
    def test_31_slots_everywhere(self):
        assert N_FEATURES == 31
        assert len(FEATURE_NAMES) == 31

    def test_router_zero_slots_are_the_e2e_block(self):
        names = {FEATURE_NAMES[i] for i in ROUTER_ZERO_SLOTS}
        assert names == {"delay_mean", "delay_std", "delay_min", "delay_max",
                         "delay_q1", "delay_q2", "delay_q3", "delay_entropy"}

    def test_wrong_shape_rejected(self):
        with pytest.raises(ValueError):
            FeatureVector(WINDOW[0], C, np.zeros(30))


class TestShannonEntropy:
    def test_uniform_two_way_split(self):
        assert shannon_entropy([1, 1, 1, 1, 9, 9, 9, 9], bins=2) == pytest.approx(1.0)

    def test_constant_samples(self):
        assert shannon_entropy([5.0] * 10) == 0.0

    def test_empty_samples(self):
        assert shannon_entropy([]) == 0.0

    def test_three_bin_oracle(self):
        # {1,1,2,3} over 3 equal-width bins -> p = {1/2, 1/4, 1/4} -> 1.5 bits
        assert shannon_entropy([1, 1, 2, 3], bins=3) == pytest.approx(1.5)

    def test_bounds(self):
        rng = np.random.default_rng(0)
        samples = rng.normal(size=200)
        h = shannon_entropy(samples)
        assert 0.0 <= h <= np.log2(ENTROPY_BINS)

    def test_invalid_bins(self):
        with pytest.raises(ValueError):
            shannon_entropy([1.0], bins=0)


class TestExtractWindow:
    def test_single_reference_entry(self):
        entry = parse_entry(COORD_LINE)
        window = (entry.segments[0].sent_at.replace(second=0, microsecond=0),
                  entry.segments[0].sent_at.replace(second=0, microsecond=0)
                  + (WINDOW[1] - WINDOW[0]))
        v = extract_window([entry], window, COORDINATOR_SCHEMA).values
        assert v[SLOT["delay_mean"]] == pytest.approx(514.539, abs=1e-3)
        assert v[SLOT["first_hop_mean"]] == pytest.approx(63.568, abs=1e-3)
        assert v[SLOT["avg_hops"]] == 3.0
        assert v[SLOT["total_count"]] == 1.0
        assert v[SLOT["count_3hop"]] == 1.0

    def test_empty_window_is_all_zero(self):
        v = extract_window([], WINDOW, COORDINATOR_SCHEMA)
        assert not v.values.any()

    def test_two_entry_quartile_oracle(self):
        # end-to-end delays {100, 300} ms -> mean 200, Q1 150, Q2 200, Q3 250
        entries = [coordinator_entry(E1, [R1, C], ts(1.0), hop_ms=50.0),
                   coordinator_entry(E1, [R1, C], ts(2.0), hop_ms=150.0)]
        v = extract_window(entries, WINDOW, COORDINATOR_SCHEMA).values
        assert v[SLOT["delay_mean"]] == pytest.approx(200.0)
        assert v[SLOT["delay_q1"]] == pytest.approx(150.0)
        assert v[SLOT["delay_q2"]] == pytest.approx(200.0)
        assert v[SLOT["delay_q3"]] == pytest.approx(250.0)
        assert v[SLOT["delay_min"]] == pytest.approx(100.0)
        assert v[SLOT["delay_max"]] == pytest.approx(300.0)

    def test_segment_pair_counts(self):
        entries = [coordinator_entry(E1, [R1, C], ts(1.0))]
        v = extract_window(entries, WINDOW, COORDINATOR_SCHEMA).values
        assert v[SLOT["count_src_E1"]] == 1.0
        assert v[SLOT["count_src_R1"]] == 1.0
        assert v[SLOT["count_dst_R1"]] == 1.0
        assert v[SLOT["count_dst_C"]] == 1.0
        assert v[SLOT["count_dst_A"]] == 0.0
        assert v[SLOT["count_2hop"]] == 1.0

    def test_window_assignment_by_first_send(self):
        inside = coordinator_entry(E1, [R1, C], ts(59.9))
        outside = coordinator_entry(E1, [R1, C], ts(60.0))
        v = extract_window([inside, outside], WINDOW, COORDINATOR_SCHEMA).values
        assert v[SLOT["total_count"]] == 1.0

    def test_router_schema_zero_fills(self):
        entry = parse_entry(ROUTER_LINE)
        window = (entry.segments[0].sent_at.replace(second=0, microsecond=0),
                  entry.segments[0].sent_at.replace(second=0, microsecond=0)
                  + (WINDOW[1] - WINDOW[0]))
        v = extract_window([entry], window, ROUTER_SCHEMA, device=R3).values
        for slot in ROUTER_ZERO_SLOTS:
            assert v[slot] == 0.0
        assert v[SLOT["first_hop_mean"]] == pytest.approx(63.568, abs=1e-3)

    def test_permutation_invariance(self):
        entries = [coordinator_entry(E1, [R1, C], ts(i), hop_ms=40 + 7 * i)
                   for i in range(5)]
        forward = extract_window(entries, WINDOW, COORDINATOR_SCHEMA).values
        backward = extract_window(entries[::-1], WINDOW, COORDINATOR_SCHEMA).values
        np.testing.assert_array_equal(forward, backward)


class TestRouterView:
    def test_keeps_only_entries_the_router_forwarded(self):
        own = parse_entry(ROUTER_LINE)  # R3 forwards E3's packet
        assert router_view([own], R3) == [own]
        assert router_view([own], R1) == []

    def test_rejects_non_router(self):
        with pytest.raises(ValueError):
            router_view([], E3)


def vec(values, normalized=False):
    return FeatureVector(WINDOW[0], C, np.asarray(values, dtype=float),
                         normalized=normalized)


class TestScaler:
    def _params(self, lows, highs):
        return ScalerParams(np.asarray(lows, dtype=float),
                            np.asarray(highs, dtype=float))

    def test_midpoint_maps_to_half(self):
        params = self._params([0.0] * 31, [10.0] * 31)
        out = apply_scaler(vec([5.0] * 31), params)
        assert out.normalized
        np.testing.assert_allclose(out.values, 0.5)

    def test_constant_slot_maps_to_zero(self):
        lows = [0.0] * 31
        highs = [10.0] * 31
        highs[4] = 0.0  # slot 4 constant in training
        params = self._params(lows, highs)
        out = apply_scaler(vec([7.0] * 31), params)
        assert out.values[4] == 0.0

    def test_out_of_range_clamps(self):
        params = self._params([0.0] * 31, [10.0] * 31)
        high = apply_scaler(vec([15.0] * 31), params)
        low = apply_scaler(vec([-3.0] * 31), params)
        np.testing.assert_allclose(high.values, 1.0)
        np.testing.assert_allclose(low.values, 0.0)

    def test_fit_recovers_min_max(self):
        train = [vec([float(i)] * 31) for i in (2, 5, 9)]
        params = fit_scaler(train)
        np.testing.assert_allclose(params.mins, 2.0)
        np.testing.assert_allclose(params.maxs, 9.0)

    def test_fit_rejects_empty_or_normalized(self):
        with pytest.raises(ValueError):
            fit_scaler([])
        with pytest.raises(ScalerMismatch):
            fit_scaler([vec([0.5] * 31, normalized=True)])

    def test_params_shape_checked(self):
        with pytest.raises(ScalerMismatch):
            ScalerParams(np.zeros(30), np.ones(30))
        with pytest.raises(ScalerMismatch):
            ScalerParams(np.ones(31), np.zeros(31))

    @given(st.floats(min_value=-50, max_value=50),
           st.floats(min_value=-50, max_value=50))
    def test_scaling_is_order_preserving(self, x1, x2):
        params = self._params([-10.0] * 31, [10.0] * 31)
        lo, hi = sorted((x1, x2))
        a = apply_scaler(vec([lo] * 31), params).values[0]
        b = apply_scaler(vec([hi] * 31), params).values[0]
        assert a <= b


class TestWindowsAndCsv:
    def test_make_windows_counts(self):
        assert len(make_windows(ts(0), 3600.0)) == 60
        assert len(make_windows(ts(0), 90.0)) == 2  # ceil

    def test_windows_are_tumbling(self):
        windows = make_windows(ts(0), 180.0)
        for (s1, e1), (s2, _) in zip(windows, windows[1:]):
            assert e1 == s2
            assert (e1 - s1).total_seconds() == 60.0

    def test_csv_header_and_truth_labels(self):
        vectors = [vec([1.0] * 31), vec([2.0] * 31)]
        text = to_csv(vectors, truths=[False, True])
        lines = text.strip().split("\n")
        assert lines[0].startswith("window_start,device,truth,delay_mean")
        assert lines[0].count(",") == 3 + 30
        assert ",normal," in lines[1]
        assert ",attack," in lines[2]
