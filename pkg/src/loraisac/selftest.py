"""Fast invariant checks for every module, runnable from an installed package."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import (EPS_MAX, EPS_MIN, SPEED_OF_LIGHT, Impairments, SoilProfile, human_trajectory, impair,
                      permittivity_of_moisture, phase_for_permittivity, soil_phase_shift)
from .errors import LoraIsacError
from .framing import FrameLayout, build_frame, decode_frame
from .isac_rx import PhaseEstimate, RatioSeries, antenna_division, estimate_interantenna_phase, wrap_phase
from .isac_tx import (INDOOR, NodeConfig, emit_null_frame, emit_switched_frame, max_window_duty_cycle,
                      schedule_transmissions)
from .netsim import NetworkScenario, assign_channels_and_slots, build_ledger
from .phy import DOWN, ChirpParams, IqBuffer, dechirp, demod_symbol, gen_chirp
from .pipeline import receive_pair, room_scene
from .sensing import detect_presence, moisture_from_phase


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def _phy_roundtrip(params):
    errors = sum(demod_symbol(gen_chirp(params, k), params)[0] != k for k in range(params.n_bins))
    return errors == 0, f"{errors} symbol errors over {params.n_bins}"


def _phy_unit_modulus(params):
    x = gen_chirp(params, 5).samples
    dev = float(np.max(np.abs(np.abs(x) - 1)))
    return dev < 1e-12, f"max ||x|-1| = {dev:.2e}"


def _phy_dechirp_peak(params):
    spec = dechirp(gen_chirp(params, 0, DOWN), params, DOWN)
    peak = float(np.max(np.abs(spec)))
    return abs(peak - params.n_bins) < 1e-6, f"peak {peak:.6f}"


def _framing_roundtrip(params):
    rng = np.random.default_rng(7)
    layout = FrameLayout(params, payload=tuple(rng.integers(0, params.n_bins, 6).tolist()))
    frame = build_frame(layout).samples
    lead = 37
    y = np.concatenate([np.zeros(lead, complex), frame, np.zeros(params.samples_per_symbol, complex)])
    rx = impair(IqBuffer(y, params.sample_rate), Impairments(cfo=1.3 * params.bin_spacing))
    fr = decode_frame(rx, layout)
    ok = fr.ok and fr.payload == layout.payload and fr.sync_offset == lead
    return ok, f"offset {fr.sync_offset}, payload ok {fr.payload == layout.payload}"


def _topp_endpoints(params):
    ok = math.isclose(permittivity_of_moisture(0.0), 3.03) and EPS_MAX > EPS_MIN
    return ok, f"eps(0)={EPS_MIN}, eps(0.5)={EPS_MAX:.4f}"


def _free_space_wavelength(params):
    fc = params.carrier_freq
    phi = float(phase_for_permittivity(1.0, SPEED_OF_LIGHT / fc, fc))
    return abs(phi - 2 * math.pi) < 1e-12, f"phase over one wavelength {phi:.15f}"


def _awgn_calibration(params):
    n = 200_000
    x = np.exp(1j * np.linspace(0, 50, n))
    y = impair(IqBuffer(x, params.sample_rate), Impairments(snr_db=10.0, rng_seed=3)).samples
    snr = 10 * np.log10(1.0 / np.mean(np.abs(y - x) ** 2))
    return abs(snr - 10.0) < 0.1, f"measured {snr:.3f} dB"


def _antenna_exclusion(params):
    cfg = NodeConfig("s", params=params, payload_len=4)
    em = emit_switched_frame(cfg, [1, 2, 3, 4])
    a, b = em.antenna1_samples.samples, em.antenna2_samples.samples
    ok = not np.any((a != 0) & (b != 0)) and np.allclose(a + b, build_frame(em.layout).samples)
    return ok, "antenna buffers disjoint and complete"


def _outdoor_duty(params):
    cfg = NodeConfig("s", params=params, payload_len=20)
    starts = schedule_transmissions(cfg, 200 * cfg.interval)
    worst = max_window_duty_cycle(starts, cfg.airtime, 100 * cfg.airtime)
    return worst <= cfg.duty_cycle_limit + 1e-12, f"worst window duty {worst:.6f}"


def _indoor_exceeds(params):
    cfg = NodeConfig("r", INDOOR, params, sensing_packet_interval=0.05)
    starts = schedule_transmissions(cfg, 10.0)
    duty = max_window_duty_cycle(starts, cfg.airtime, 100 * cfg.airtime)
    return duty > 0.01, f"indoor duty {duty:.4f}"


def _phase_noise_free(params):
    cfg = NodeConfig("s", params=params, payload_len=4)
    em = emit_switched_frame(cfg, [9, 8, 7, 6])
    phi0 = 1.0
    y = em.antenna1_samples.samples + em.antenna2_samples.samples * np.exp(1j * phi0)
    y = np.concatenate([np.zeros(50, complex), y])
    rx = impair(IqBuffer(y, params.sample_rate), Impairments(cfo=200.0))
    est = estimate_interantenna_phase(decode_frame(rx, em.layout), cfg.switch_index)
    err = abs(wrap_phase(est.delta_phi_wrapped - phi0))
    return err < 1e-3, f"error {err:.2e} rad"


def _moisture_roundtrip(params):
    fc, worst = params.carrier_freq, 0.0
    for theta in np.linspace(0.02, 0.45, 12):
        soil = SoilProfile(float(theta))
        est = PhaseEstimate(wrap_phase(-soil_phase_shift(soil, fc)), 0.0, 0.0)
        worst = max(worst, abs(moisture_from_phase(est, soil.antenna_separation_d, fc).theta_hat - theta))
    return worst <= 1e-4, f"max error {worst:.2e}"


def _division_cancels(params):
    cfg = NodeConfig("r", INDOOR, params, sensing_packet_interval=0.05)
    scene = room_scene(human_trajectory("still", 1), None, 1000.0, 50.0, carrier_freq=params.carrier_freq)
    rx1, rx2 = zip(*(receive_pair(emit_null_frame(cfg, 0.05 * i), scene, i) for i in range(20)))
    rs = antenna_division(list(rx1), list(rx2), cfg.layout())
    spread = float(np.std(np.angle(rs.values / np.mean(rs.values))))
    return spread < 1e-6, f"ratio phase std {spread:.2e} rad"


def _still_is_flat(params):
    rs = RatioSeries(np.arange(40) * 0.05, np.full(40, 0.3 + 0.2j))
    states = detect_presence(rs, 1.0, 0.0)
    return all(s.state == "still" and s.metric == 0 for s in states), f"{len(states)} windows"


def _slots_collision_free(params):
    nodes = [NodeConfig(f"n{i}", INDOOR, params, sensing_packet_interval=3.072, payload_len=20) for i in range(3)]
    sc = assign_channels_and_slots(NetworkScenario(nodes, 1, duration=30.0))
    return not build_ledger(sc).collisions, "assigned offsets " + ", ".join(f"{n.slot_offset:.5f}" for n in sc.nodes)


def _channels_orthogonal(params):
    nodes = [NodeConfig(f"n{i}", INDOOR, params, sensing_packet_interval=0.5, freq_channel=i) for i in range(2)]
    return not build_ledger(NetworkScenario(nodes, 2, duration=10.0)).collisions, "same timing, two channels"


CHECKS = (
    ("phy_css.roundtrip_all_symbols", _phy_roundtrip),
    ("phy_css.unit_modulus", _phy_unit_modulus),
    ("phy_css.dechirp_peak_magnitude", _phy_dechirp_peak),
    ("framing.offset_and_payload_recovery", _framing_roundtrip),
    ("channel.topp_endpoints", _topp_endpoints),
    ("channel.free_space_wavelength_phase", _free_space_wavelength),
    ("channel.awgn_snr_calibration", _awgn_calibration),
    ("isac_tx.antenna_mutual_exclusion", _antenna_exclusion),
    ("isac_tx.outdoor_duty_cycle_limit", _outdoor_duty),
    ("isac_tx.indoor_duty_uncapped", _indoor_exceeds),
    ("isac_rx.phase_estimate_noise_free", _phase_noise_free),
    ("isac_rx.division_cancels_cfo_sfo", _division_cancels),
    ("sensing.moisture_forward_inverse", _moisture_roundtrip),
    ("sensing.still_series_flat", _still_is_flat),
    ("netsim.assigned_slots_collision_free", _slots_collision_free),
    ("netsim.channels_orthogonal", _channels_orthogonal),
)


def run_selftest(params: ChirpParams | None = None) -> list[CheckResult]:
    params = params or ChirpParams()
    results = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn(params)
        except (LoraIsacError, ValueError, ArithmeticError) as exc:
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(ok), detail))
    return results
