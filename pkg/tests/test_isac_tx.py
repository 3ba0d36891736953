import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from loraisac.errors import ConfigError, ScheduleInfeasibleError
from loraisac.framing import build_frame, decode_frame
from loraisac.isac_tx import (INDOOR, NodeConfig, duty_cycle_interval, emit_null_frame, emit_switched_frame,
                              max_window_duty_cycle, min_legal_interval, schedule_transmissions)
from loraisac.phy import ChirpParams

AIR = 30.72e-3


def brute_force_duty(starts, airtime, window, step):
    """Occupied fraction of every window position on a fine grid."""
    starts = np.asarray(starts)
    worst = 0.0
    for lo in np.arange(starts.min() - window, starts.max() + airtime + step, step):
        hi = lo + window
        busy = np.clip(np.minimum(starts + airtime, hi) - np.maximum(starts, lo), 0, None).sum()
        worst = max(worst, busy / window)
    return worst


class TestEmission:
    def test_switch_split_mid_preamble(self):
        cfg = NodeConfig("s", payload_len=5)
        em = emit_switched_frame(cfg, [1, 2, 3, 4, 5])
        active1 = np.flatnonzero(em.antenna1_samples.samples)
        active2 = np.flatnonzero(em.antenna2_samples.samples)
        assert active1.size == 4 * 128 and active1.max() == 4 * 128 - 1
        assert active2.size == (4 + 2 + 5) * 128 and active2.min() == 4 * 128

    def test_switch_index_one(self):
        em = emit_switched_frame(NodeConfig("s", switch_index=1), [])
        assert np.count_nonzero(em.antenna1_samples.samples) == 128

    @settings(max_examples=30, deadline=None)
    @given(switch=st.integers(1, 7), payload=st.lists(st.integers(0, 127), max_size=6))
    def test_mutual_exclusion_and_reassembly(self, switch, payload):
        em = emit_switched_frame(NodeConfig("s", switch_index=switch), payload)
        a, b = em.antenna1_samples.samples, em.antenna2_samples.samples
        assert not np.any((a != 0) & (b != 0))
        assert np.array_equal(a + b, build_frame(em.layout).samples)

    def test_summed_emission_decodes(self):
        em = emit_switched_frame(NodeConfig("s", payload_len=3), [100, 0, 64])
        fr = decode_frame(em.combined(), em.layout)
        assert fr.ok and fr.payload == (100, 0, 64)

    def test_null_frame(self):
        cfg = NodeConfig("r", INDOOR, sensing_packet_interval=0.1)
        em = emit_null_frame(cfg, 2.5)
        assert em.sensing_only and em.layout.n_symbols == 10 and em.t_start == 2.5
        assert not np.any(em.antenna2_samples.samples)
        fr = decode_frame(em.antenna1_samples, em.layout)
        assert fr.ok and fr.payload == ()

    def test_mode_guards(self):
        with pytest.raises(ConfigError):
            emit_switched_frame(NodeConfig("r", INDOOR, sensing_packet_interval=1.0), [])
        with pytest.raises(ConfigError):
            emit_null_frame(NodeConfig("s"))


class TestNodeConfig:
    @pytest.mark.parametrize("kwargs", [
        {"switch_index": 0}, {"switch_index": 8}, {"duty_cycle_limit": 0.02}, {"mode": "orbital"},
        {"mode": INDOOR}, {"mode": INDOOR, "sensing_packet_interval": 1.0, "switch_index": 3},
        {"freq_channel": -1}, {"payload_len": -1}, {"tx_interval": 0.0}, {"slot_offset": -0.5},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            NodeConfig("x", **kwargs)

    def test_defaults(self):
        cfg = NodeConfig("s", payload_len=20)
        assert cfg.switch_index == 4
        assert cfg.airtime == pytest.approx(AIR)

    def test_dict_roundtrip(self):
        for cfg in (NodeConfig("s", params=ChirpParams(9), payload_len=3, tx_interval=9.0),
                    NodeConfig("r", INDOOR, sensing_packet_interval=0.2, freq_channel=2, slot_offset=0.1)):
            assert NodeConfig.from_dict(cfg.to_dict()) == cfg


class TestSchedule:
    def test_long_run_interval(self):
        assert duty_cycle_interval(AIR, 0.01) == pytest.approx(3.072)

    def test_strict_interval(self):
        assert min_legal_interval(AIR, 0.01) == pytest.approx(6.11328)
        assert NodeConfig("s", payload_len=20).interval == pytest.approx(6.11328)

    def test_too_short_interval_names_minimum(self):
        cfg = NodeConfig("s", payload_len=20, tx_interval=3.072)
        with pytest.raises(ScheduleInfeasibleError) as info:
            schedule_transmissions(cfg, 60.0)
        assert info.value.min_interval == pytest.approx(6.11328)

    def test_indoor_accepts_high_duty(self):
        cfg = NodeConfig("r", INDOOR, sensing_packet_interval=0.05, payload_len=20)
        starts = schedule_transmissions(cfg, 10.0)
        duty = len(starts) * cfg.airtime / 10.0
        assert duty == pytest.approx(0.61, abs=0.01)

    def test_indoor_count(self):
        cfg = NodeConfig("r", INDOOR, sensing_packet_interval=0.1)
        assert len(schedule_transmissions(cfg, 10.0)) == 100

    def test_empty_horizon(self):
        assert schedule_transmissions(NodeConfig("s"), 0.0) == ()

    def test_packets_fit_inside_horizon(self):
        cfg = NodeConfig("r", INDOOR, sensing_packet_interval=1.0, slot_offset=0.3)
        starts = schedule_transmissions(cfg, 5.0)
        assert starts[0] == 0.3 and starts[-1] + cfg.airtime <= 5.0


class TestWindowDuty:
    @pytest.mark.parametrize("starts, window", [
        ([0.0, 1.0, 1.5, 7.0], 0.5), ([0.0, 0.05, 0.1], 1.0), ([3.0], 0.02), ([0.0, 6.11328, 12.22656], 3.072),
    ])
    def test_matches_brute_force(self, starts, window):
        fast = max_window_duty_cycle(starts, AIR, window)
        slow = brute_force_duty(starts, AIR, window, 1e-4)
        assert fast == pytest.approx(slow, abs=2e-3)
        assert fast >= slow - 1e-12

    def test_empty(self):
        assert max_window_duty_cycle([], AIR, 1.0) == 0.0

    def test_long_run_interval_breaks_window_limit(self):
        starts = np.arange(20) * duty_cycle_interval(AIR, 0.01)
        assert max_window_duty_cycle(starts, AIR, 101 * AIR) > 0.01

    @settings(max_examples=40, deadline=None)
    @given(starts=st.lists(st.floats(0, 10), min_size=1, max_size=8), window=st.floats(0.05, 3.0))
    def test_bounds(self, starts, window):
        d = max_window_duty_cycle(starts, AIR, window)
        assert min(AIR, window) / window - 1e-12 <= d <= len(starts) * AIR / window + 1e-12
