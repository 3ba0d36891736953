"""
Chirp spread spectrum (CSS) symbols.

A symbol ``k`` is an up-chirp whose start frequency is shifted by ``k`` bins
of ``BW / 2**SF``.  The receiver multiplies by the conjugate base chirp,
which collapses the symbol to a tone, and reads ``k`` off the peak of an
unnormalised ``2**SF``-point DFT.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError, FrameAlignmentError

UP = "up"
DOWN = "down"


@dataclass(frozen=True)
class ChirpParams:
    """Modulation parameters.

    Parameters
    ----------
    spreading_factor : int
        log2 of the alphabet size, 7..12.
    bandwidth : float
        Swept bandwidth (Hz).
    carrier_freq : float
        RF carrier (Hz); only used for propagation phase.
    sample_rate : float
        Baseband sample rate (Hz), an integer multiple of ``bandwidth``.
    """

    spreading_factor: int = 7
    bandwidth: float = 125e3
    carrier_freq: float = 868e6
    sample_rate: float = 125e3

    def __post_init__(self):
        sf = self.spreading_factor
        if isinstance(sf, bool) or not isinstance(sf, (int, np.integer)) or not 7 <= sf <= 12:
            raise DomainError(f"spreading_factor must be an integer in 7..12, got {sf!r}")
        if not self.bandwidth > 0:
            raise DomainError(f"bandwidth must be positive, got {self.bandwidth!r}")
        if not self.sample_rate > 0:
            raise DomainError(f"sample_rate must be positive, got {self.sample_rate!r}")
        if not self.carrier_freq > 0:
            raise DomainError(f"carrier_freq must be positive, got {self.carrier_freq!r}")
        ratio = self.sample_rate / self.bandwidth
        if ratio < 1 - 1e-9 or abs(ratio - round(ratio)) > 1e-9:
            raise DomainError(
                f"sample_rate ({self.sample_rate}) must be a positive integer multiple "
                f"of bandwidth ({self.bandwidth})"
            )

    @property
    def n_bins(self) -> int:
        return 1 << int(self.spreading_factor)

    @property
    def oversampling(self) -> int:
        return int(round(self.sample_rate / self.bandwidth))

    @property
    def samples_per_symbol(self) -> int:
        return self.n_bins * self.oversampling

    @property
    def symbol_duration(self) -> float:
        return self.n_bins / self.bandwidth

    @property
    def bin_spacing(self) -> float:
        """Frequency of one DFT bin after dechirping (Hz)."""
        return self.bandwidth / self.n_bins

    def to_dict(self):
        return {
            "spreading_factor": int(self.spreading_factor),
            "bandwidth": float(self.bandwidth),
            "carrier_freq": float(self.carrier_freq),
            "sample_rate": float(self.sample_rate),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True, eq=False)
class IqBuffer:
    """Complex baseband samples tagged with their rate and start time (s)."""

    samples: np.ndarray
    sample_rate: float
    start_time: float = 0.0

    def __post_init__(self):
        arr = np.array(self.samples, dtype=np.complex128, copy=True)
        if arr.ndim != 1:
            raise DomainError(f"samples must be one-dimensional, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        if not self.sample_rate > 0:
            raise DomainError(f"sample_rate must be positive, got {self.sample_rate!r}")

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def with_samples(self, samples) -> "IqBuffer":
        return IqBuffer(samples, self.sample_rate, self.start_time)

    def scaled(self, gain) -> "IqBuffer":
        return self.with_samples(self.samples * gain)


def concat(*buffers: IqBuffer) -> IqBuffer:
    """Join buffers end to end; start times must be non-decreasing."""
    if not buffers:
        raise DomainError("concat needs at least one buffer")
    rate = buffers[0].sample_rate
    for prev, cur in zip(buffers, buffers[1:]):
        if cur.sample_rate != rate:
            raise DomainError("cannot concatenate buffers with different sample rates")
        if cur.start_time < prev.start_time:
            raise DomainError("buffers must be given in start_time order")
    return IqBuffer(np.concatenate([b.samples for b in buffers]), rate, buffers[0].start_time)


def check_symbol(params: ChirpParams, symbol) -> int:
    if isinstance(symbol, bool) or not isinstance(symbol, (int, np.integer)):
        raise DomainError(f"symbol must be an integer, got {symbol!r}")
    if not 0 <= symbol < params.n_bins:
        raise DomainError(f"symbol {symbol} outside [0, {params.n_bins}) for SF{params.spreading_factor}")
    return int(symbol)


@lru_cache(maxsize=64)
def _chirp_samples(sf: int, osr: int, symbol: int) -> np.ndarray:
    # Phase in cycles is num / (2 N osr^2) with an integer numerator, so the
    # reduction modulo one cycle is exact at every SF.
    n_bins = 1 << sf
    n = np.arange(n_bins * osr, dtype=np.int64)
    num = n * n + (2 * symbol - n_bins) * osr * n
    wrap = (n_bins - symbol) * osr
    num = num - np.where(n >= wrap, 2 * n_bins * osr * (n - wrap), 0)
    den = 2 * n_bins * osr * osr
    x = np.exp(2j * np.pi * (np.mod(num, den) / den))
    x.setflags(write=False)
    return x


def gen_chirp(params: ChirpParams, symbol: int = 0, direction: str = UP,
              start_time: float = 0.0) -> IqBuffer:
    """One symbol of unit-amplitude chirp.

    The up-chirp for symbol ``k`` starts at ``-BW/2 + k*BW/2**SF``, sweeps up
    at ``BW**2 / 2**SF`` Hz/s and wraps phase-continuously to ``-BW/2`` when
    it reaches ``+BW/2``.  The down-chirp is its complex conjugate.
    """
    k = check_symbol(params, symbol)
    x = _chirp_samples(int(params.spreading_factor), params.oversampling, k)
    if direction == DOWN:
        x = np.conj(x)
    elif direction != UP:
        raise DomainError(f"direction must be 'up' or 'down', got {direction!r}")
    return IqBuffer(x, params.sample_rate, start_time)


def dechirp_rows(rows: np.ndarray, params: ChirpParams, direction: str = UP) -> np.ndarray:
    """Dechirp and transform every row of a ``(m, samples_per_symbol)`` array."""
    base = _chirp_samples(int(params.spreading_factor), params.oversampling, 0)
    mixed = rows * (np.conj(base) if direction == UP else base)
    # Keeping the on-grid polyphase branch equals folding the osr*N-point
    # spectrum onto N bins and dividing by osr: the wrapped part of a chirp
    # aliases exactly onto the unwrapped tone.
    mixed = mixed[..., :: params.oversampling]
    return np.fft.fft(mixed, axis=-1)


def dechirp(buf: IqBuffer, params: ChirpParams, direction: str = UP) -> np.ndarray:
    """Unnormalised ``2**SF``-point spectrum of one dechirped symbol.

    A clean symbol ``k`` gives a single bin of magnitude ``2**SF`` at ``k``.
    ``direction='down'`` dechirps against the base down-chirp instead.
    """
    x = buf.samples if isinstance(buf, IqBuffer) else np.asarray(buf, dtype=np.complex128)
    if x.shape != (params.samples_per_symbol,):
        raise FrameAlignmentError(
            f"expected {params.samples_per_symbol} samples per symbol, got {x.shape[0]}"
        )
    return dechirp_rows(x, params, direction)


def demod_symbol(buf: IqBuffer, params: ChirpParams) -> tuple[int, float, float]:
    """Return ``(symbol, peak_phase, peak_magnitude)`` for one symbol window."""
    spec = dechirp(buf, params)
    k = int(np.argmax(np.abs(spec)))
    peak = spec[k]
    return k, float(np.angle(peak)), float(np.abs(peak))


def fine_bin(spectrum: np.ndarray) -> float:
    """Fractional peak position of a single-tone spectrum.

    Three-bin complex interpolation with the bias correction for a
    rectangular window (Candan 2011).
    """
    n = spectrum.shape[-1]
    k = int(np.argmax(np.abs(spectrum)))
    xm, x0, xp = spectrum[(k - 1) % n], spectrum[k], spectrum[(k + 1) % n]
    den = 2 * x0 - xm - xp
    if den == 0:
        return float(k)
    delta = np.real((xm - xp) / den) * np.tan(np.pi / n) / (np.pi / n)
    return float(k + np.clip(delta, -0.5, 0.5))


def wrap_bins(value, n_bins):
    """Map a bin offset into ``[-n_bins/2, n_bins/2)``."""
    return (value + n_bins / 2) % n_bins - n_bins / 2
