"""
Multi-node network simulation.

Nodes on different frequency channels never interfere.  Nodes sharing a
channel get static slot offsets so their airtimes never overlap; when they
do overlap anyway (hand-set offsets) both packets are lost, with no capture
effect.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelScene, SoilProfile
from .errors import ConfigError, ScheduleInfeasibleError
from .framing import decode_frame
from .isac_rx import antenna_division
from .isac_tx import OUTDOOR, NodeConfig, emit_null_frame, schedule_transmissions
from .pipeline import derive_seed, guard_lengths, receive_emission, receive_pair, soil_packet
from .sensing import detect_presence

_EPS = 1e-12


@dataclass(frozen=True)
class NetworkScenario:
    nodes: tuple
    n_freq_channels: int = 1
    gateway_rx_antennas: int = 1
    duration: float = 60.0
    seed: int = 0
    scenes: dict = field(default_factory=dict)
    presence_threshold: float | None = None
    presence_window: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        if self.n_freq_channels < 1:
            raise ConfigError("n_freq_channels must be >= 1")
        if self.gateway_rx_antennas not in (1, 2):
            raise ConfigError("gateway_rx_antennas must be 1 or 2")
        if not self.duration > 0:
            raise ConfigError("duration must be positive")
        ids = [n.node_id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ConfigError("node ids must be unique")
        for n in self.nodes:
            if n.freq_channel >= self.n_freq_channels:
                raise ConfigError(
                    f"{n.node_id}: freq_channel {n.freq_channel} >= n_freq_channels {self.n_freq_channels}")

    def scene_for(self, node: NodeConfig) -> ChannelScene:
        if node.node_id in self.scenes:
            return self.scenes[node.node_id]
        soil = SoilProfile(0.2) if node.mode == OUTDOOR else None
        return ChannelScene(soil=soil, carrier_freq=node.params.carrier_freq)


@dataclass(frozen=True)
class Transmission:
    node_id: str
    t_start: float
    t_end: float
    freq_channel: int
    index: int


@dataclass(frozen=True)
class Collision:
    node_a: str
    index_a: int
    node_b: str
    index_b: int
    overlap_start: float
    overlap_end: float
    freq_channel: int


@dataclass
class AirtimeLedger:
    transmissions: list = field(default_factory=list)
    collisions: list = field(default_factory=list)

    def intervals(self, node_id):
        return [(tx.t_start, tx.t_end) for tx in self.transmissions if tx.node_id == node_id]


@dataclass
class NodeStats:
    node_id: str
    scheduled: int = 0
    collided: int = 0
    decoded: int = 0

    @property
    def delivery_ratio(self) -> float:
        return self.decoded / self.scheduled if self.scheduled else 0.0


@dataclass(frozen=True)
class SensingReport:
    node_id: str
    timestamp: float
    kind: str
    value: float | str
    confidence: float


def channel_demand(nodes) -> float:
    return sum(n.airtime / n.interval for n in nodes)


def _overlaps(a, b):
    return a[0] < b[1] - _EPS and b[0] < a[1] - _EPS


def assign_channels_and_slots(scenario: NetworkScenario) -> NetworkScenario:
    """Round-robin nodes over channels, then stagger same-channel offsets.

    Offsets are searched greedily in node order among the ends of packets
    already placed; each candidate is checked against every placed packet
    over the scenario duration.
    """
    n_ch = scenario.n_freq_channels
    nodes = [replace(n, freq_channel=i % n_ch, slot_offset=0.0) for i, n in enumerate(scenario.nodes)]
    placed_nodes = []
    for ch in range(n_ch):
        members = [n for n in nodes if n.freq_channel == ch]
        demand = channel_demand(members)
        if demand > 1.0 + 1e-9:
            raise ScheduleInfeasibleError(
                f"channel {ch} is overloaded: airtime demand {demand:.3f} exceeds capacity 1.0",
                channel=ch, demand=demand)
        busy = []
        for node in members:
            offset = _find_offset(node, busy, scenario.duration)
            if offset is None:
                raise ScheduleInfeasibleError(
                    f"channel {ch}: no collision-free slot for {node.node_id} "
                    f"(demand {demand:.3f} of capacity 1.0)", channel=ch, demand=demand)
            node = replace(node, slot_offset=offset)
            busy.extend((t, t + node.airtime) for t in schedule_transmissions(node, scenario.duration))
            placed_nodes.append(node)
    order = {n.node_id: i for i, n in enumerate(scenario.nodes)}
    placed_nodes.sort(key=lambda n: order[n.node_id])
    return replace(scenario, nodes=tuple(placed_nodes))


def _find_offset(node, busy, duration):
    interval = node.interval
    cands = {0.0}
    for _, end in busy:
        cands.add(end % interval)
    for off in sorted(cands):
        if off + node.airtime > duration:
            continue
        trial = replace(node, slot_offset=off)
        mine = [(t, t + node.airtime) for t in schedule_transmissions(trial, duration)]
        if not any(_overlaps(a, b) for a in mine for b in busy):
            return off
    return None


def build_ledger(scenario: NetworkScenario) -> AirtimeLedger:
    ledger = AirtimeLedger()
    for node in scenario.nodes:
        for i, t in enumerate(schedule_transmissions(node, scenario.duration)):
            ledger.transmissions.append(Transmission(node.node_id, t, t + node.airtime, node.freq_channel, i))
    txs = sorted(ledger.transmissions, key=lambda tx: (tx.t_start, tx.node_id))
    for i, a in enumerate(txs):
        for b in txs[i + 1:]:
            if b.t_start >= a.t_end - _EPS:
                break
            if a.freq_channel == b.freq_channel and a.node_id != b.node_id:
                ledger.collisions.append(Collision(a.node_id, a.index, b.node_id, b.index, b.t_start,
                                                   min(a.t_end, b.t_end), a.freq_channel))
    return ledger


def collided_packets(ledger: AirtimeLedger) -> set:
    """``(node_id, packet_index)`` of every packet involved in a collision."""
    lost = set()
    for c in ledger.collisions:
        lost.add((c.node_a, c.index_a))
        lost.add((c.node_b, c.index_b))
    return lost


@dataclass
class NetworkResult:
    ledger: AirtimeLedger
    stats: dict
    reports: dict
    ratio_series: dict


def run_network(scenario: NetworkScenario, simulate_signals: bool = True) -> NetworkResult:
    """Simulate every scheduled packet.

    Collided packets are dropped; the rest pass through the node's channel
    scene and the gateway.  A packet counts as delivered when it decodes
    with the transmitted payload.  Soil nodes yield moisture reports;
    indoor nodes with a two-antenna gateway yield ratio series and, when
    ``presence_threshold`` is set, presence reports.
    """
    ledger = build_ledger(scenario)
    lost = collided_packets(ledger)
    stats = {n.node_id: NodeStats(n.node_id) for n in scenario.nodes}
    reports = {n.node_id: [] for n in scenario.nodes}
    series = {}
    for k, node in enumerate(scenario.nodes):
        st = stats[node.node_id]
        scene = scenario.scene_for(node)
        sps = node.params.samples_per_symbol
        rng = np.random.default_rng(derive_seed(scenario.seed, k, 0x9E7))
        rx1s, rx2s = [], []
        for i, t in enumerate(schedule_transmissions(node, scenario.duration)):
            st.scheduled += 1
            if (node.node_id, i) in lost:
                st.collided += 1
                continue
            seed = derive_seed(scenario.seed, k, i)
            if not simulate_signals:
                st.decoded += 1
                continue
            if node.mode == OUTDOOR:
                payload = rng.integers(0, node.params.n_bins, node.payload_len).tolist()
                pkt = soil_packet(node, scene, payload, t, seed, max_projection=np.pi)
                if pkt.payload_ok:
                    st.decoded += 1
                if pkt.reading is not None:
                    reports[node.node_id].append(SensingReport(
                        node.node_id, t, "moisture", pkt.reading.theta_hat, pkt.reading.quality))
            else:
                em = emit_null_frame(node, t)
                guard = guard_lengths(sps, seed)
                if scenario.gateway_rx_antennas == 2:
                    a, b = receive_pair(em, scene, seed, guard)
                    rx1s.append(a)
                    rx2s.append(b)
                else:
                    a = receive_emission(em, scene, seed, 1, guard)
                fr = decode_frame(a, em.layout)
                if fr.ok and fr.payload == em.layout.payload:
                    st.decoded += 1
        if rx1s:
            rs = antenna_division(rx1s, rx2s, node.layout())
            series[node.node_id] = rs
            if scenario.presence_threshold is not None and len(rs) >= 2:
                for s in detect_presence(rs, scenario.presence_window, scenario.presence_threshold):
                    reports[node.node_id].append(SensingReport(
                        node.node_id, s.window_start, "presence", s.state, s.metric))
    return NetworkResult(ledger, stats, reports, series)
