"""
Packet assembly, preamble synchronisation and frame decoding.

A frame is ``n_preamble`` base up-chirps, ``n_sfd`` base down-chirps and one
up-chirp per payload symbol.  Up-chirps cannot tell a timing offset from a
frequency offset (both shift the dechirped bin the same way), so the
receiver combines the preamble bin with the SFD bin, where a timing offset
shifts the other way.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .phy import DOWN, UP, ChirpParams, IqBuffer, check_symbol, dechirp_rows, fine_bin, gen_chirp, wrap_bins

# Peak-to-average power ratio a dechirped window must exceed to count as a
# chirp.  A clean symbol scores 2**SF; pure noise rarely passes 10.
PAPR_THRESHOLD = 10.0


@dataclass(frozen=True)
class FrameLayout:
    params: ChirpParams = field(default_factory=ChirpParams)
    n_preamble: int = 8
    n_sfd: int = 2
    payload: tuple = ()
    switch_index: int | None = None

    def __post_init__(self):
        if self.n_preamble < 2:
            raise ConfigError(f"n_preamble must be >= 2, got {self.n_preamble}")
        if self.n_sfd < 1:
            raise ConfigError(f"n_sfd must be >= 1, got {self.n_sfd}")
        payload = tuple(check_symbol(self.params, s) for s in self.payload)
        object.__setattr__(self, "payload", payload)
        if self.switch_index is not None and not 1 <= self.switch_index <= self.n_preamble - 1:
            raise ConfigError(
                f"switch_index {self.switch_index} must lie inside the preamble [1, {self.n_preamble - 1}]"
            )

    @property
    def n_symbols(self) -> int:
        return self.n_preamble + self.n_sfd + len(self.payload)

    @property
    def n_samples(self) -> int:
        return self.n_symbols * self.params.samples_per_symbol

    @property
    def airtime(self) -> float:
        return self.n_symbols * self.params.symbol_duration

    def to_dict(self):
        return {
            "params": self.params.to_dict(),
            "n_preamble": self.n_preamble,
            "n_sfd": self.n_sfd,
            "payload": list(self.payload),
            "switch_index": self.switch_index,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["params"] = ChirpParams.from_dict(d["params"]) if "params" in d else ChirpParams()
        d["payload"] = tuple(d.get("payload", ()))
        return cls(**d)


def airtime(params: ChirpParams, n_preamble=8, n_sfd=2, payload_len=0) -> float:
    return (n_preamble + n_sfd + payload_len) * params.symbol_duration


@dataclass(frozen=True)
class PreambleSymbol:
    bin: int
    phase: float
    magnitude: float


@dataclass(frozen=True)
class SyncResult:
    found: bool
    offset: int | None = None
    cfo_bins: float = 0.0
    sfd_start: int | None = None
    n_preamble_seen: int = 0
    reason: str = ""

    @property
    def coarse_bin_shift(self) -> int:
        """Integer part of the frequency offset, in dechirped bins."""
        return int(round(self.cfo_bins))


@dataclass(frozen=True)
class DecodedFrame:
    payload: tuple = ()
    preamble_metadata: tuple = ()
    sync_offset: int | None = None
    ok: bool = False
    cfo_bins: float = 0.0
    diagnostics: str = ""

    @property
    def preamble_phases(self) -> np.ndarray:
        return np.array([m.phase for m in self.preamble_metadata])

    @property
    def preamble_peaks(self) -> np.ndarray:
        return np.array([m.magnitude * np.exp(1j * m.phase) for m in self.preamble_metadata])


def build_frame(layout: FrameLayout, start_time: float = 0.0) -> IqBuffer:
    p = layout.params
    up = gen_chirp(p, 0).samples
    down = gen_chirp(p, 0, DOWN).samples
    parts = [up] * layout.n_preamble + [down] * layout.n_sfd
    parts += [gen_chirp(p, k).samples for k in layout.payload]
    return IqBuffer(np.concatenate(parts), p.sample_rate, start_time)


def _peak_stats(spec):
    power = np.abs(spec) ** 2
    bins = np.argmax(power, axis=-1)
    peak = np.take_along_axis(power, bins[..., None], axis=-1)[..., 0]
    energy = power.sum(axis=-1)
    n = spec.shape[-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        conc = np.where(energy > 0, peak / energy, 0.0)
    return bins, conc * n, conc


class _Windows:
    """Symbol windows of a stream at arbitrary sample positions."""

    def __init__(self, x, params):
        self.x = x
        self.p = params
        self.sps = params.samples_per_symbol

    def get(self, pos):
        if pos < 0 or pos + self.sps > self.x.shape[0]:
            return None
        return self.x[pos:pos + self.sps]

    def spectrum(self, pos, direction=UP):
        w = self.get(pos)
        return None if w is None else dechirp_rows(w, self.p, direction)

    def stats(self, pos, direction=UP):
        spec = self.spectrum(pos, direction)
        if spec is None:
            return None
        b, papr, conc = _peak_stats(spec)
        return int(b), float(papr), float(conc)


def _circ_dist(a, b, n):
    d = abs(int(a) - int(b)) % n
    return min(d, n - d)


def detect_preamble(stream: IqBuffer, params: ChirpParams, n_preamble: int | None = None,
                    n_sfd: int = 1, threshold: float = PAPR_THRESHOLD) -> SyncResult:
    """Locate the first frame in ``stream``.

    Coarse stage: stride through the stream one symbol at a time until two
    consecutive dechirped windows show the same strong peak bin, then shift
    the window grid by that bin.  The SFD is then located, and the
    preamble/SFD bin pair splits the residual into timing and frequency
    offset: a timing error moves up- and down-chirp tones in opposite
    directions, a frequency offset moves both the same way.  Spectral
    concentration cannot make this split at one sample per chip, because a
    one-sample slip there is just a one-bin tone shift.

    Returns a :class:`SyncResult`; failure is reported, never raised.
    """
    x = stream.samples
    n = params.n_bins
    osr = params.oversampling
    sps = params.samples_per_symbol
    n_win = x.shape[0] // sps
    if n_win < 2:
        return SyncResult(False, reason="stream shorter than two symbols")

    rows = x[: n_win * sps].reshape(n_win, sps)
    spec = dechirp_rows(rows, params, UP)
    bins, papr, _ = _peak_stats(spec)
    run = None
    for m in range(n_win - 1):
        if papr[m] > threshold and papr[m + 1] > threshold and _circ_dist(bins[m], bins[m + 1], n) <= 1:
            run = m + 1
            break
    if run is None:
        return SyncResult(False, reason="no stable preamble peak found")

    win = _Windows(x, params)
    # Symbol boundary nearest the run, assuming zero frequency offset.
    pos = run * sps - int(round(fine_bin(spec[run]) * osr))
    while pos < 0:
        pos += sps

    sfd = None
    m = 0
    while True:
        at = pos + m * sps
        up = win.stats(at, UP)
        down = win.stats(at, DOWN)
        if up is None:
            break
        if down[1] > threshold and down[2] > up[2]:
            sfd = at
            break
        if up[1] <= threshold:
            break
        m += 1
    if sfd is None or sfd - sps < 0:
        return SyncResult(False, reason="preamble found but no start frame delimiter")

    # Split the residual into timing (opposite sign on up/down) and CFO.
    for _ in range(3):
        f_up = fine_bin(win.spectrum(sfd - sps, UP))
        down_spec = win.spectrum(sfd, DOWN)
        if down_spec is None:
            return SyncResult(False, reason="stream ends inside the start frame delimiter")
        f_down = fine_bin(down_spec)
        delta = wrap_bins(f_up - f_down, n) / 2.0
        shift = int(round(delta * osr))
        if shift == 0 or sfd - shift - sps < 0:
            break
        sfd -= shift
    ref_bin = win.stats(sfd - sps, UP)[0]
    if n_preamble is None:
        count = 0
        at = sfd - sps
        while True:
            st = win.stats(at, UP)
            if st is None or st[1] <= threshold or _circ_dist(st[0], ref_bin, n) > 1:
                break
            count += 1
            at -= sps
        n_seen = count
    else:
        n_seen = n_preamble
    offset = sfd - n_seen * sps
    if offset < 0:
        return SyncResult(False, reason="stream starts after the beginning of the preamble")

    f_ups = [fine_bin(win.spectrum(offset + i * sps, UP)) for i in range(n_seen)]
    f_downs = [fine_bin(s) for s in (win.spectrum(sfd + i * sps, DOWN) for i in range(n_sfd)) if s is not None]
    anchor = f_ups[-1]
    mean_up = anchor + np.mean([wrap_bins(f - anchor, n) for f in f_ups])
    mean_down = anchor + np.mean([wrap_bins(f - anchor, n) for f in f_downs])
    cfo = wrap_bins(mean_up + wrap_bins(mean_down - mean_up, n) / 2.0, n)
    return SyncResult(True, offset=int(offset), cfo_bins=float(cfo), sfd_start=int(sfd),
                      n_preamble_seen=int(n_seen))


def decode_frame(stream: IqBuffer, layout_hint: FrameLayout) -> DecodedFrame:
    """Synchronise, correct the frequency offset and demodulate one frame.

    Per-preamble-symbol peak phase and magnitude are kept for sensing; the
    payload only depends on peak bins, so a phase step inside the preamble
    (antenna switch) cannot corrupt it.
    """
    p = layout_hint.params
    sps = p.samples_per_symbol
    n = p.n_bins
    sync = detect_preamble(stream, p, n_preamble=layout_hint.n_preamble, n_sfd=layout_hint.n_sfd)
    if not sync.found:
        return DecodedFrame(ok=False, diagnostics=f"sync failed: {sync.reason}")
    total = layout_hint.n_samples
    if sync.offset + total > len(stream):
        return DecodedFrame(
            ok=False, sync_offset=sync.offset, cfo_bins=sync.cfo_bins,
            diagnostics=f"insufficient samples: frame needs {total} from offset {sync.offset}, "
                        f"stream has {len(stream) - sync.offset}",
        )
    x = stream.samples[sync.offset: sync.offset + total]
    x = x * np.exp(-2j * np.pi * sync.cfo_bins * np.arange(total) / sps)
    spec = dechirp_rows(x.reshape(layout_hint.n_symbols, sps), p, UP)
    n_pre = layout_hint.n_preamble
    first = n_pre + layout_hint.n_sfd
    bins = np.argmax(np.abs(spec), axis=-1)
    peaks = spec[np.arange(spec.shape[0]), bins]

    meta = tuple(PreambleSymbol(int(bins[i]), float(np.angle(peaks[i])), float(np.abs(peaks[i])))
                 for i in range(n_pre))
    ref = int(np.round(np.median(wrap_bins(bins[:n_pre], n)))) % n
    payload = tuple(int((b - ref) % n) for b in bins[first:])
    return DecodedFrame(payload=payload, preamble_metadata=meta, sync_offset=sync.offset,
                        ok=True, cfo_bins=sync.cfo_bins)
