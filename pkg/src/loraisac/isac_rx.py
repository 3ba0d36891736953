"""
Gateway processing for both ISAC modes.

Soil mode compares preamble peak phases before and after the transmitter's
antenna switch.  Presence mode divides the dechirped preamble peaks of two
receive antennas that share one clock, which cancels modulation, CFO and
SFO and leaves only the difference between their multipath mixtures.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EstimationError
from .framing import DecodedFrame, FrameLayout, decode_frame, detect_preamble
from .phy import UP, IqBuffer, dechirp_rows

# Phase-fit residual (rad RMS) above which an estimate is flagged.
LOW_CONFIDENCE_RMS = 0.5
MAGNITUDE_FLOOR = 1e-6


def wrap_phase(phi):
    """Wrap to (-pi, pi]."""
    w = np.angle(np.exp(1j * np.asarray(phi, dtype=float)))
    w = np.where(w <= -np.pi, w + 2 * np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


@dataclass(frozen=True)
class PhaseEstimate:
    delta_phi_wrapped: float
    drift_slope: float
    quality: float
    low_confidence: bool = False

    def __post_init__(self):
        if not -np.pi < self.delta_phi_wrapped <= np.pi:
            raise ValueError(f"delta_phi_wrapped {self.delta_phi_wrapped} outside (-pi, pi]")
        if self.quality < 0:
            raise ValueError("quality must be non-negative")


@dataclass(frozen=True, eq=False)
class RatioSeries:
    timestamps: np.ndarray
    values: np.ndarray
    skipped: tuple = ()

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=float)
        vals = np.asarray(self.values, dtype=complex)
        if ts.shape != vals.shape or ts.ndim != 1:
            raise ValueError("timestamps and values must be equal-length 1-D sequences")
        if ts.size > 1 and np.any(np.diff(ts) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return self.timestamps.shape[0]

    @classmethod
    def concatenate(cls, parts):
        parts = list(parts)
        return cls(np.concatenate([p.timestamps for p in parts]),
                   np.concatenate([p.values for p in parts]),
                   tuple(s for p in parts for s in p.skipped))


def receive_decode(stream: IqBuffer, hint: FrameLayout) -> DecodedFrame:
    """Communication path of the gateway."""
    return decode_frame(stream, hint)


def estimate_interantenna_phase(frame: DecodedFrame, switch_index: int) -> PhaseEstimate:
    """Phase step introduced by the transmit-antenna switch.

    A line through the unwrapped peak phases of the pre-switch preamble
    symbols absorbs any frequency-offset drift; the estimate is the
    circular mean of the post-switch phases minus that line's extrapolation.
    """
    if not frame.ok:
        raise EstimationError(f"frame not decoded: {frame.diagnostics}")
    phases = frame.preamble_phases
    n_pre = phases.shape[0]
    if not 2 <= switch_index <= n_pre - 2:
        raise EstimationError(
            f"switch_index {switch_index} leaves fewer than two preamble symbols on one side "
            f"(need 2 <= switch_index <= {n_pre - 2})")
    idx = np.arange(n_pre)
    pre = np.unwrap(phases[:switch_index])
    slope, intercept = np.polyfit(idx[:switch_index], pre, 1)
    resid = pre - (slope * idx[:switch_index] + intercept)
    quality = float(np.sqrt(np.mean(resid ** 2)))
    extrap = slope * idx[switch_index:] + intercept
    delta = wrap_phase(np.angle(np.mean(np.exp(1j * (phases[switch_index:] - extrap)))))
    return PhaseEstimate(delta, float(slope), quality, quality > LOW_CONFIDENCE_RMS)


def _preamble_peaks(x, offset, layout, bins=None):
    p = layout.params
    sps = p.samples_per_symbol
    rows = x[offset: offset + layout.n_preamble * sps].reshape(layout.n_preamble, sps)
    spec = dechirp_rows(rows, p, UP)
    if bins is None:
        bins = np.argmax(np.abs(spec), axis=-1)
    return spec[np.arange(layout.n_preamble), bins], bins


def packet_ratio(rx1: IqBuffer, rx2: IqBuffer, layout: FrameLayout, offset: int | None = None):
    """Per-preamble-symbol ``rx2 / rx1`` peak ratios for one packet.

    Synchronisation runs on the reference antenna only; rx2 reuses its
    offset and peak bins.  Returns ``(ratios, reference_peaks)`` or
    ``(None, None)`` when the packet cannot be synchronised.
    """
    if offset is None:
        sync = detect_preamble(rx1, layout.params, n_preamble=layout.n_preamble, n_sfd=layout.n_sfd)
        if not sync.found:
            return None, None
        offset = sync.offset
    if offset + layout.n_preamble * layout.params.samples_per_symbol > min(len(rx1), len(rx2)):
        return None, None
    ref, bins = _preamble_peaks(rx1.samples, offset, layout)
    other, _ = _preamble_peaks(rx2.samples, offset, layout, bins)
    with np.errstate(divide="ignore", invalid="ignore"):
        return other / ref, ref


def antenna_division(rx1, rx2, layout: FrameLayout, timestamps=None,
                     magnitude_floor: float = MAGNITUDE_FLOOR) -> RatioSeries:
    """One complex ``rx2 / rx1`` ratio per packet, averaged over the preamble.

    ``rx1`` and ``rx2`` are sample-aligned buffers (or equal-length lists of
    buffers, one per packet) from two antennas sharing a clock; antenna 1
    is the reference.  Symbols whose reference peak falls below
    ``magnitude_floor`` times the mean reference peak are dropped; a packet
    with nothing left is listed in ``skipped`` by timestamp.
    """
    if isinstance(rx1, IqBuffer):
        rx1, rx2 = [rx1], [rx2]
    if len(rx1) != len(rx2):
        raise ValueError("rx1 and rx2 must hold the same number of packets")
    if timestamps is None:
        timestamps = [b.start_time for b in rx1]
    per_packet = [packet_ratio(a, b, layout) for a, b in zip(rx1, rx2)]
    mags = [np.abs(ref) for _, ref in per_packet if ref is not None]
    mean_mag = float(np.mean(np.concatenate(mags))) if mags else 0.0
    floor = magnitude_floor * mean_mag
    ts, vals, skipped = [], [], []
    for t, (ratios, ref) in zip(timestamps, per_packet):
        if ratios is None:
            skipped.append(float(t))
            continue
        keep = np.abs(ref) >= floor if floor > 0 else np.zeros(ref.shape, bool)
        if not keep.any():
            skipped.append(float(t))
            continue
        ts.append(float(t))
        vals.append(complex(np.mean(ratios[keep])))
    return RatioSeries(np.array(ts), np.array(vals, dtype=complex), tuple(skipped))


def write_ratio_csv(series: RatioSeries, path, extra_columns: dict | None = None) -> None:
    extra = extra_columns or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*extra, "timestamp", "re", "im"])
        for t, v in zip(series.timestamps, series.values):
            w.writerow([*extra.values(), f"{t:.6f}", f"{v.real:.9e}", f"{v.imag:.9e}"])


def write_phase_csv(rows: Sequence[tuple[float, PhaseEstimate]], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "delta_phi", "quality"])
        for t, est in rows:
            w.writerow([f"{t:.6f}", f"{est.delta_phi_wrapped:.9f}", f"{est.quality:.9e}"])
