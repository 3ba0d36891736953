"""
Node-side ISAC behaviour.

Outdoor (soil) nodes reuse ordinary data packets: one RF chain feeds two
buried antennas through a switch that flips from antenna 1 to antenna 2 at
a preamble symbol boundary.  Indoor (presence) nodes send payload-free
packets at a fixed rate with no duty-cycle cap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ScheduleInfeasibleError
from .framing import FrameLayout, build_frame
from .phy import ChirpParams, IqBuffer

OUTDOOR = "outdoor_soil"
INDOOR = "indoor_presence"
MAX_OUTDOOR_DUTY = 0.01


@dataclass(frozen=True)
class NodeConfig:
    """Configuration of one node.

    ``tx_interval`` is the outdoor packet period (``None`` picks the shortest
    legal one); ``sensing_packet_interval`` is the indoor period.  In outdoor
    mode ``switch_index`` defaults to the middle of the preamble.
    """

    node_id: str
    mode: str = OUTDOOR
    params: ChirpParams = field(default_factory=ChirpParams)
    duty_cycle_limit: float = MAX_OUTDOOR_DUTY
    switch_index: int | None = None
    sensing_packet_interval: float | None = None
    freq_channel: int = 0
    n_preamble: int = 8
    n_sfd: int = 2
    payload_len: int = 0
    tx_interval: float | None = None
    slot_offset: float = 0.0

    def __post_init__(self):
        if self.mode == OUTDOOR:
            if not 0 < self.duty_cycle_limit <= MAX_OUTDOOR_DUTY:
                raise ConfigError(
                    f"{self.node_id}: outdoor duty_cycle_limit must lie in (0, {MAX_OUTDOOR_DUTY}], "
                    f"got {self.duty_cycle_limit}")
            if self.switch_index is None:
                object.__setattr__(self, "switch_index", self.n_preamble // 2)
            if not 1 <= self.switch_index <= self.n_preamble - 1:
                raise ConfigError(
                    f"{self.node_id}: switch_index {self.switch_index} outside preamble "
                    f"[1, {self.n_preamble - 1}]")
            if self.tx_interval is not None and not self.tx_interval > 0:
                raise ConfigError(f"{self.node_id}: tx_interval must be positive")
        elif self.mode == INDOOR:
            if self.switch_index is not None:
                raise ConfigError(f"{self.node_id}: switch_index is only valid in {OUTDOOR} mode")
            if self.sensing_packet_interval is None or not self.sensing_packet_interval > 0:
                raise ConfigError(f"{self.node_id}: indoor mode needs a positive sensing_packet_interval")
        else:
            raise ConfigError(f"{self.node_id}: unknown mode {self.mode!r}")
        if self.freq_channel < 0:
            raise ConfigError(f"{self.node_id}: freq_channel must be non-negative")
        if self.payload_len < 0:
            raise ConfigError(f"{self.node_id}: payload_len must be non-negative")
        if self.slot_offset < 0:
            raise ConfigError(f"{self.node_id}: slot_offset must be non-negative")

    def layout(self, payload=None) -> FrameLayout:
        payload = tuple(payload) if payload is not None else (0,) * self.payload_len
        return FrameLayout(self.params, self.n_preamble, self.n_sfd, payload, self.switch_index)

    @property
    def airtime(self) -> float:
        return (self.n_preamble + self.n_sfd + self.payload_len) * self.params.symbol_duration

    @property
    def interval(self) -> float:
        if self.mode == INDOOR:
            return self.sensing_packet_interval
        if self.tx_interval is None:
            return min_legal_interval(self.airtime, self.duty_cycle_limit)
        return self.tx_interval

    def to_dict(self):
        return {
            "node_id": self.node_id, "mode": self.mode, "params": self.params.to_dict(),
            "duty_cycle_limit": self.duty_cycle_limit, "switch_index": self.switch_index,
            "sensing_packet_interval": self.sensing_packet_interval,
            "freq_channel": self.freq_channel, "n_preamble": self.n_preamble, "n_sfd": self.n_sfd,
            "payload_len": self.payload_len, "tx_interval": self.tx_interval,
            "slot_offset": self.slot_offset,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "params" in d:
            d["params"] = ChirpParams.from_dict(d["params"])
        if d.get("mode", OUTDOOR) == INDOOR and "switch_index" in d and d["switch_index"] is None:
            del d["switch_index"]
        return cls(**d)


@dataclass(frozen=True, eq=False)
class Emission:
    antenna1_samples: IqBuffer
    antenna2_samples: IqBuffer
    t_start: float
    layout: FrameLayout
    sensing_only: bool = False

    def __post_init__(self):
        a, b = self.antenna1_samples.samples, self.antenna2_samples.samples
        if a.shape != b.shape:
            raise ConfigError("antenna buffers must have equal length")
        if np.any((a != 0) & (b != 0)):
            raise ConfigError("both antennas active at the same sample")

    def combined(self) -> IqBuffer:
        """The RF-chain output before the switch."""
        return self.antenna1_samples.with_samples(self.antenna1_samples.samples + self.antenna2_samples.samples)


def emit_switched_frame(cfg: NodeConfig, payload, t_start: float = 0.0) -> Emission:
    """Preamble symbols before ``switch_index`` go out on antenna 1, the rest
    of the packet on antenna 2.  The switch is back on antenna 1 for the
    next call."""
    if cfg.mode != OUTDOOR:
        raise ConfigError(f"{cfg.node_id}: switched frames need {OUTDOOR} mode")
    layout = cfg.layout(payload)
    frame = build_frame(layout, t_start).samples
    cut = layout.switch_index * cfg.params.samples_per_symbol
    a1 = np.zeros_like(frame)
    a2 = np.zeros_like(frame)
    a1[:cut] = frame[:cut]
    a2[cut:] = frame[cut:]
    fs = cfg.params.sample_rate
    return Emission(IqBuffer(a1, fs, t_start), IqBuffer(a2, fs, t_start), t_start, layout)


def emit_null_frame(cfg: NodeConfig, t_start: float = 0.0) -> Emission:
    """Sensing-only packet: preamble, SFD and ``payload_len`` zero symbols, on antenna 1."""
    if cfg.mode != INDOOR:
        raise ConfigError(f"{cfg.node_id}: null frames need {INDOOR} mode")
    layout = cfg.layout()
    frame = build_frame(layout, t_start)
    fs = cfg.params.sample_rate
    return Emission(frame, IqBuffer(np.zeros(len(frame), complex), fs, t_start), t_start, layout,
                    sensing_only=True)


def duty_cycle_interval(airtime: float, limit: float) -> float:
    """Packet period giving a long-run duty cycle of exactly ``limit``."""
    return airtime / limit


def min_legal_interval(airtime: float, limit: float) -> float:
    """Shortest period whose duty cycle stays within ``limit`` over every
    window of at least ``airtime / limit``.

    A window of length ``interval + airtime`` can hold two whole packets,
    so the periodic schedule needs ``2*airtime / (interval + airtime) <= limit``.
    """
    return (2.0 / limit - 1.0) * airtime


def schedule_transmissions(cfg: NodeConfig, horizon: float) -> tuple:
    """Start times of every packet that fits completely inside ``[0, horizon]``."""
    if not horizon > 0:
        return ()
    air = cfg.airtime
    interval = cfg.interval
    if cfg.mode == OUTDOOR:
        legal = min_legal_interval(air, cfg.duty_cycle_limit)
        if interval < legal * (1 - 1e-12):
            raise ScheduleInfeasibleError(
                f"{cfg.node_id}: interval {interval:.6g} s breaks the {cfg.duty_cycle_limit:.3%} duty cycle; "
                f"minimal legal interval is {legal:.6g} s",
                min_interval=legal,
            )
    last = horizon - air - cfg.slot_offset
    if last < -1e-12:
        return ()
    count = int(math.floor(last / interval + 1e-9)) + 1
    return tuple(cfg.slot_offset + i * interval for i in range(count))


def max_window_duty_cycle(starts, airtime: float, window: float) -> float:
    """Largest fraction of any ``window``-long interval spent transmitting.

    The occupied time is piecewise linear in the window position, so its
    maximum sits where a window edge meets a packet edge.
    """
    s = np.sort(np.asarray(starts, dtype=float))
    if s.size == 0:
        return 0.0
    e = s + airtime
    lo = np.concatenate([s, e, s - window, e - window])
    hi = lo + window
    busy = np.clip(np.minimum(e[None, :], hi[:, None]) - np.maximum(s[None, :], lo[:, None]), 0, None)
    return float(busy.sum(axis=1).max() / window)
