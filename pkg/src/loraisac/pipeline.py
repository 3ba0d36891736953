"""End-to-end chains: emission -> channel -> gateway -> sensing output."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .channel import SPEED_OF_LIGHT, ChannelScene, HumanTrajectory, Impairments, PathSpec, SoilProfile, impair, propagate
from .framing import DecodedFrame
from .isac_rx import PhaseEstimate, RatioSeries, antenna_division, estimate_interantenna_phase, receive_decode
from .isac_tx import Emission, NodeConfig, emit_null_frame, emit_switched_frame, schedule_transmissions
from .phy import IqBuffer
from .sensing import MoistureReading, moisture_from_phase


def derive_seed(*keys) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1, np.uint64)[0])


def guard_lengths(sps: int, seed: int) -> tuple[int, int]:
    """Silence before and after a packet: a random lead so the receiver
    must search for the frame, and one symbol of tail."""
    rng = np.random.default_rng(derive_seed(seed, 0x6A))
    return int(rng.integers(sps // 2, 3 * sps // 2)), sps


def receive_emission(em: Emission, scene: ChannelScene, seed: int = 0, rx_antenna: int = 1,
                     guard: tuple[int, int] | None = None) -> IqBuffer:
    """Both transmit antennas through ``scene`` into one gateway antenna.

    The two antenna paths are summed before impairments, so one noise
    realisation covers the packet.  ``guard`` zero samples are added around
    the frame; the result's ``start_time`` is the packet time.
    """
    t = em.t_start
    y = propagate(em.antenna1_samples, scene, 1, t, rx_antenna).samples
    y = y + propagate(em.antenna2_samples, scene, 2, t, rx_antenna).samples
    lead, tail = guard if guard is not None else (0, 0)
    y = np.concatenate([np.zeros(lead, complex), y, np.zeros(tail, complex)])
    imp = replace(scene.impairments, rng_seed=derive_seed(seed, rx_antenna))
    return impair(IqBuffer(y, em.antenna1_samples.sample_rate, t), imp, t)


# ---------------------------------------------------------------- soil mode

def soil_scene(soil: SoilProfile, distance: float = 10.0, snr_db: float | None = None, cfo: float = 0.0,
               sfo_ppm: float = 0.0, reference_distance: float = 10.0, path_loss_exponent: float = 2.0,
               carrier_freq: float = 868e6) -> ChannelScene:
    """Line-of-sight link from a buried node to a gateway ``distance`` metres away.

    ``snr_db`` is the SNR at ``reference_distance``; log-distance path loss
    lowers it further out.
    """
    ratio = distance / reference_distance
    snr = None
    if snr_db is not None:
        snr = snr_db - 10 * path_loss_exponent * np.log10(ratio)
    gain = min(1.0, ratio ** (-path_loss_exponent / 2))
    path = PathSpec("static", distance / SPEED_OF_LIGHT, gain)
    return ChannelScene((path,), soil, Impairments(snr, cfo, sfo_ppm), carrier_freq=carrier_freq)


@dataclass(frozen=True)
class SoilPacket:
    frame: DecodedFrame
    payload_ok: bool
    estimate: PhaseEstimate | None
    reading: MoistureReading | None
    error: str = ""


def soil_packet(cfg: NodeConfig, scene: ChannelScene, payload, t: float = 0.0, seed: int = 0,
                prior: float | None = None, max_projection: float = 0.0) -> SoilPacket:
    """One switched packet from node to decoded payload, phase step and,
    when the scene has a soil layer, a moisture reading."""
    em = emit_switched_frame(cfg, payload, t)
    sps = cfg.params.samples_per_symbol
    rx = receive_emission(em, scene, seed, 1, guard_lengths(sps, seed))
    frame = receive_decode(rx, em.layout)
    ok = frame.ok and frame.payload == em.layout.payload
    if not frame.ok:
        return SoilPacket(frame, False, None, None, frame.diagnostics)
    est = estimate_interantenna_phase(frame, cfg.switch_index)
    soil = scene.soil
    if soil is None:
        return SoilPacket(frame, ok, est, None)
    try:
        reading = moisture_from_phase(est, soil.antenna_separation_d, scene.carrier_freq, prior,
                                      max_projection)
    except Exception as exc:  # out-of-range phase; keep the decoded frame
        return SoilPacket(frame, ok, est, None, str(exc))
    return SoilPacket(frame, ok, est, reading)


# ------------------------------------------------------------ presence mode

def room_scene(trajectory: HumanTrajectory, snr_db: float | None = None, cfo: float = 0.0,
               sfo_ppm: float = 0.0, human_gain: float = 0.35, carrier_freq: float = 868e6) -> ChannelScene:
    """Direct path, one wall reflection and one person, seen by two RX
    antennas about half a wavelength apart."""
    c = SPEED_OF_LIGHT
    rx1 = (
        PathSpec("static", 10.0 / c, 0.8),
        PathSpec("static", 14.0 / c, 0.3 * np.exp(0.4j)),
        PathSpec("human", 12.0 / c, human_gain, trajectory),
    )
    rx2 = (
        PathSpec("static", 10.17 / c, 0.75),
        PathSpec("static", 13.9 / c, 0.35 * np.exp(-0.9j)),
        PathSpec("human", 12.12 / c, 0.85 * human_gain, trajectory),
    )
    return ChannelScene(rx1, None, Impairments(snr_db, cfo, sfo_ppm), rx2_paths=rx2, carrier_freq=carrier_freq)


def receive_pair(em: Emission, scene: ChannelScene, seed: int, guard=None) -> tuple[IqBuffer, IqBuffer]:
    """The same packet at both gateway antennas: shared clock, own noise."""
    return (receive_emission(em, scene, seed, 1, guard), receive_emission(em, scene, seed, 2, guard))


def presence_episode(cfg: NodeConfig, scene: ChannelScene, duration: float, seed: int,
                     t0: float = 0.0) -> RatioSeries:
    """Null packets for ``duration`` seconds, divided across the two RX antennas."""
    sps = cfg.params.samples_per_symbol
    rx1, rx2 = [], []
    for i, t in enumerate(schedule_transmissions(cfg, duration)):
        em = emit_null_frame(cfg, t0 + t)
        s = derive_seed(seed, i)
        a, b = receive_pair(em, scene, s, guard_lengths(sps, s))
        rx1.append(a)
        rx2.append(b)
    return antenna_division(rx1, rx2, cfg.layout())
