"""Application outputs: soil moisture from phase, motion state from ratios."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .channel import EPS_MAX, EPS_MIN, SPEED_OF_LIGHT, THETA_MAX, permittivity_of_moisture, phase_for_permittivity
from .errors import CalibrationError, OutOfRangeError, SamplingRateError
from .isac_rx import PhaseEstimate, RatioSeries

MOVING = "moving"
STILL = "still"
# Walking is band-limited below 2 Hz; sample it at twice that at least.
MIN_PACKET_RATE = 4.0
# Metrics at or below this are treated as exactly flat.
METRIC_FLOOR = 1e-9


@dataclass(frozen=True)
class MoistureReading:
    theta_hat: float
    epsilon_hat: float
    delta_phi_used: float
    quality: float
    ambiguous: bool = False
    n_branches: int = 1
    projected: bool = False

    def __post_init__(self):
        if not 0 <= self.theta_hat <= THETA_MAX:
            raise ValueError(f"theta_hat {self.theta_hat} outside [0, {THETA_MAX}]")


@dataclass(frozen=True)
class PresenceState:
    state: str
    window_start: float
    window_end: float
    metric: float
    threshold_used: float

    def __post_init__(self):
        if not self.window_end > self.window_start:
            raise ValueError("window_end must be after window_start")


def invert_permittivity(eps_r: float, xtol: float = 1e-9) -> float:
    """Moisture whose permittivity is ``eps_r``, by bisection on [0, 0.5]."""
    eps_r = min(max(eps_r, EPS_MIN), EPS_MAX)
    lo, hi = 0.0, THETA_MAX
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if permittivity_of_moisture(mid) < eps_r:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def moisture_from_phase(est: PhaseEstimate, d: float, fc: float, prior: float | None = None,
                        max_projection: float = 0.0) -> MoistureReading:
    """Invert a measured inter-antenna phase to volumetric moisture.

    The deeper antenna lags, so the soil phase is ``-est.delta_phi_wrapped``
    plus an unknown multiple of 2*pi.  Every branch whose implied
    permittivity lies in the physical range is a candidate; the one closest
    to ``prior`` wins, else the lowest (flagged ambiguous if not unique).

    With ``max_projection > 0`` a phase that misses the physical range by at
    most that many radians is clamped to the nearest end instead of raising
    :class:`OutOfRangeError`.
    """
    if not d > 0:
        raise ValueError("antenna separation must be positive")
    lag = -est.delta_phi_wrapped
    phi_lo = float(phase_for_permittivity(EPS_MIN, d, fc))
    phi_hi = float(phase_for_permittivity(EPS_MAX, d, fc))
    tol = 1e-9
    k_lo = math.ceil((phi_lo - tol - lag) / (2 * math.pi))
    k_hi = math.floor((phi_hi + tol - lag) / (2 * math.pi))
    branches = [lag + 2 * math.pi * k for k in range(k_lo, k_hi + 1)]
    projected = False
    if not branches:
        near = [lag + 2 * math.pi * k for k in (k_lo - 1, k_lo)]
        dist = [max(phi_lo - b, b - phi_hi, 0.0) for b in near]
        i = int(np.argmin(dist))
        if dist[i] > max_projection:
            raise OutOfRangeError(
                f"phase {est.delta_phi_wrapped:.4f} rad maps to no permittivity in "
                f"[{EPS_MIN:.3f}, {EPS_MAX:.3f}] for d={d} m at {fc:.4g} Hz")
        branches = [min(max(near[i], phi_lo), phi_hi)]
        projected = True

    scale = SPEED_OF_LIGHT / (2 * math.pi * fc * d)
    thetas = [invert_permittivity((b * scale) ** 2) for b in branches]
    if prior is not None:
        i = int(np.argmin([abs(t - prior) for t in thetas]))
    else:
        i = 0
    phi = branches[i]
    return MoistureReading(
        theta_hat=thetas[i],
        epsilon_hat=float(min(max((phi * scale) ** 2, EPS_MIN), EPS_MAX)),
        delta_phi_used=float(phi),
        quality=est.quality,
        ambiguous=len(branches) > 1 and prior is None,
        n_branches=len(branches),
        projected=projected,
    )


def _windows(series: RatioSeries, window: float, hop: float | None):
    ts = series.timestamps
    if len(ts) < 2:
        raise ValueError("ratio series needs at least two samples")
    step = float(np.median(np.diff(ts)))
    hop = window if hop is None else hop
    t0 = ts[0]
    out = []
    while t0 + window <= ts[-1] + step + 1e-9:
        sel = (ts >= t0 - 1e-9) & (ts < t0 + window - 1e-9)
        out.append((t0, t0 + window, series.values[sel]))
        t0 += hop
    if not out:
        raise ValueError(f"series spans {ts[-1] - ts[0] + step:.3f} s, shorter than one {window} s window")
    return out, 1.0 / step


def window_metric(values: np.ndarray) -> float:
    """Standard deviation of the mean-normalised complex ratio."""
    if values.size < 2 or np.all(values == values[0]):
        return 0.0
    m = np.mean(values)
    if m == 0:
        return float("inf")
    return float(np.sqrt(np.mean(np.abs(values / m - 1.0) ** 2)))


def presence_metrics(series: RatioSeries, window: float, hop: float | None = None,
                     min_rate: float = MIN_PACKET_RATE):
    wins, rate = _windows(series, window, hop)
    if rate < min_rate * (1 - 1e-9):
        raise SamplingRateError(
            f"packet rate {rate:.3g} Hz is below the required minimum of {min_rate:.3g} Hz",
            required_rate=min_rate)
    return [(a, b, window_metric(v)) for a, b, v in wins]


def detect_presence(series: RatioSeries, window: float, threshold: float, hop: float | None = None,
                    min_rate: float = MIN_PACKET_RATE) -> list[PresenceState]:
    """Label each window ``moving`` iff its metric exceeds ``threshold``."""
    states = []
    for a, b, metric in presence_metrics(series, window, hop, min_rate):
        moving = metric > max(threshold, METRIC_FLOOR)
        states.append(PresenceState(MOVING if moving else STILL, float(a), float(b), metric, float(threshold)))
    return states


def calibrate_threshold(baseline: RatioSeries, multiplier: float = 5.0, window: float = 1.0,
                        hop: float | None = None, min_rate: float = MIN_PACKET_RATE) -> float:
    """``multiplier`` times the RMS window metric of a known-still recording."""
    try:
        metrics = [m for _, _, m in presence_metrics(baseline, window, hop, min_rate)]
    except ValueError as exc:
        if isinstance(exc, SamplingRateError):
            raise
        raise CalibrationError(f"baseline too short: {exc}") from exc
    if len(metrics) < 2:
        raise CalibrationError(f"baseline covers {len(metrics)} window(s); at least 2 are needed")
    return float(multiplier * np.sqrt(np.mean(np.square(metrics))))


def write_states_csv(states, path, extra_columns: dict | None = None) -> None:
    extra = extra_columns or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*extra, "window_start", "window_end", "metric", "threshold", "state"])
        for s in states:
            w.writerow([*extra.values(), f"{s.window_start:.6f}", f"{s.window_end:.6f}",
                        f"{s.metric:.9e}", f"{s.threshold_used:.9e}", s.state])


def write_jsonl(records, path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(asdict(r), sort_keys=True) + "\n")


def write_moisture_csv(rows, path) -> None:
    """``rows`` are ``(timestamp, MoistureReading)`` pairs."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "theta_hat", "epsilon_hat", "delta_phi_used", "quality", "ambiguous"])
        for t, r in rows:
            w.writerow([f"{t:.6f}", f"{r.theta_hat:.9f}", f"{r.epsilon_hat:.9f}",
                        f"{r.delta_phi_used:.9f}", f"{r.quality:.9e}", int(r.ambiguous)])
