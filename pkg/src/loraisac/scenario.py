"""
Scenario files: strict JSON with one section per module.

Unknown keys, wrong types and out-of-range values are all reported as
:class:`ScenarioError` with the line of the offending key where it can be
found in the source text.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from .channel import SoilProfile
from .errors import ConfigError, LoraIsacError, SamplingRateError, ScenarioError
from .isac_tx import INDOOR, OUTDOOR, NodeConfig, schedule_transmissions
from .netsim import NetworkScenario, assign_channels_and_slots
from .phy import ChirpParams
from .sensing import MIN_PACKET_RATE

MODES = ("soil", "presence", "network", "phy_selftest")

_NUM = (int, float)
_OPT_NUM = (int, float, type(None))

# key -> (accepted types, default); a default of ``...`` marks a required key.
_TOP = {
    "mode": ((str,), ...),
    "seed": ((int,), 0),
    "output_dir": ((str, type(None)), None),
    "description": ((str,), ""),
    "phy": ((dict,), None),
    "frame": ((dict,), None),
    "soil": ((dict,), None),
    "sweep": ((dict,), None),
    "presence": ((dict,), None),
    "network": ((dict,), None),
}
_SECTIONS = {
    "soil": {"phy", "frame", "soil", "sweep"},
    "presence": {"phy", "frame", "presence"},
    "network": {"phy", "network"},
    "phy_selftest": {"phy"},
}
_PHY = {
    "spreading_factor": ((int,), 7),
    "bandwidth": (_NUM, 125e3),
    "carrier_freq": (_NUM, 868e6),
    "sample_rate": (_NUM, 125e3),
}
_FRAME = {
    "n_preamble": ((int,), 8),
    "n_sfd": ((int,), 2),
    "payload_len": ((int,), 8),
    "switch_index": ((int, type(None)), None),
}
_SOIL = {
    "antenna_separation_d": (_NUM, 0.05),
    "attenuation_per_meter": (_NUM, 0.0),
    "cfo_max_hz": (_NUM, 0.0),
    "sfo_max_ppm": (_NUM, 0.0),
    "max_projection": (_NUM, math.pi),
    "use_prior": ((bool,), False),
}
_SWEEP = {
    "distances": ((list,), [10.0]),
    "snr_db": ((list,), [None]),
    "moisture": ((list,), ...),
    "packets_per_point": ((int,), 10),
    "reference_distance": (_NUM, 10.0),
    "path_loss_exponent": (_NUM, 2.0),
}
_PRESENCE = {
    "packet_interval": (_NUM, 0.05),
    "episode_duration": (_NUM, 10.0),
    "n_walking": ((int,), 20),
    "n_still": ((int,), 20),
    "snr_db": (_OPT_NUM, 10.0),
    "window": (_NUM, 1.0),
    "hop": (_OPT_NUM, None),
    "threshold": (_OPT_NUM, None),
    "multiplier": (_NUM, 5.0),
    "calibration_duration": (_NUM, 10.0),
    "cfo_max_hz": (_NUM, 0.0),
    "sfo_max_ppm": (_NUM, 0.0),
    "human_gain": (_NUM, 0.35),
    "walking_speed": (_NUM, 1.0),
}
_NETWORK = {
    "n_freq_channels": ((int,), 1),
    "gateway_rx_antennas": ((int,), 1),
    "duration": (_NUM, 60.0),
    "assign_slots": ((bool,), True),
    "snr_db": (_OPT_NUM, None),
    "presence_threshold": (_OPT_NUM, None),
    "presence_window": (_NUM, 1.0),
    "nodes": ((list,), ...),
}
_NODE = {
    "node_id": ((str,), ...),
    "mode": ((str,), OUTDOOR),
    "duty_cycle_limit": (_NUM, 0.01),
    "switch_index": ((int, type(None)), None),
    "sensing_packet_interval": (_OPT_NUM, None),
    "tx_interval": (_OPT_NUM, None),
    "freq_channel": ((int,), 0),
    "slot_offset": (_NUM, 0.0),
    "n_preamble": ((int,), 8),
    "n_sfd": ((int,), 2),
    "payload_len": ((int,), 0),
    "moisture": (_NUM, 0.2),
    "distance": (_NUM, 10.0),
    "activity": ((str,), "still"),
}


@dataclass(frozen=True)
class Scenario:
    mode: str
    seed: int
    output_dir: str | None
    description: str
    sections: dict = field(default_factory=dict)
    path: str | None = None
    text: str = ""

    def section(self, name):
        return self.sections.get(name, {})

    def fail(self, message, *keys):
        """A :class:`ScenarioError` anchored at ``keys`` inside the file."""
        return ScenarioError(message, path=self.path, line=locate(self.text, keys))


def locate(text: str, keys) -> int | None:
    """Best-effort 1-based line of a nested key path.

    String elements are object keys, integers index into a list of
    objects (counted by opening braces, which holds for the flat node
    records used here).
    """
    pos = 0
    line = None
    for k in keys:
        if isinstance(k, int):
            start = text.find("[", pos)
            if start < 0:
                return line
            pos = start
            for _ in range(k + 1):
                pos = text.find("{", pos + 1)
                if pos < 0:
                    return line
        else:
            m = re.compile(r'"%s"\s*:' % re.escape(k)).search(text, pos)
            if m is None:
                return line
            pos = m.start()
        line = text.count("\n", 0, pos) + 1
    return line


def _type_name(types):
    names = {int: "integer", float: "number", str: "string", bool: "boolean", list: "list",
             dict: "object", type(None): "null"}
    return " or ".join(dict.fromkeys(names[t] for t in types))


def _check(value, types):
    if isinstance(value, bool):
        return bool in types
    return isinstance(value, types)


def _fill(raw: dict, schema: dict, keys: tuple, text: str, path) -> dict:
    out = {}
    for k in raw:
        if k not in schema:
            raise ScenarioError(f"unknown key {'.'.join(map(str, (*keys, k)))!r}; allowed: "
                                f"{', '.join(sorted(schema))}", path=path, line=locate(text, (*keys, k)))
    for k, (types, default) in schema.items():
        if k in raw:
            v = raw[k]
            if not _check(v, types):
                raise ScenarioError(f"{'.'.join(map(str, (*keys, k)))} must be {_type_name(types)}, "
                                    f"got {type(v).__name__}", path=path, line=locate(text, (*keys, k)))
            if isinstance(v, float) and not math.isfinite(v):
                raise ScenarioError(f"{'.'.join(map(str, (*keys, k)))} must be finite",
                                    path=path, line=locate(text, (*keys, k)))
            out[k] = float(v) if float in types and int in types and isinstance(v, int) else v
        elif default is ...:
            raise ScenarioError(f"missing required key {'.'.join(map(str, (*keys, k)))!r}",
                                path=path, line=locate(text, keys) if keys else 1)
        else:
            out[k] = default
    return out


def _list_of(values, types, keys, text, path, allow_empty=False):
    if not values and not allow_empty:
        raise ScenarioError(f"{'.'.join(keys)} must not be empty", path=path, line=locate(text, keys))
    for v in values:
        if not _check(v, types) or (isinstance(v, float) and not math.isfinite(v)):
            raise ScenarioError(f"{'.'.join(keys)} entries must be {_type_name(types)}, got {v!r}",
                                path=path, line=locate(text, keys))
    return [float(v) if isinstance(v, int) and not isinstance(v, bool) else v for v in values]


def parse_scenario(text: str, path=None) -> Scenario:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc.msg}", path=path, line=exc.lineno) from None
    if not isinstance(raw, dict):
        raise ScenarioError("top level must be a JSON object", path=path, line=1)
    top = _fill(raw, _TOP, (), text, path)
    mode = top["mode"]
    if mode not in MODES:
        raise ScenarioError(f"mode must be one of {', '.join(MODES)}, got {mode!r}",
                            path=path, line=locate(text, ("mode",)))
    if top["seed"] < 0 or top["seed"] >= 2 ** 64:
        raise ScenarioError("seed must be an unsigned 64-bit integer", path=path, line=locate(text, ("seed",)))
    schemas = {"phy": _PHY, "frame": _FRAME, "soil": _SOIL, "sweep": _SWEEP,
               "presence": _PRESENCE, "network": _NETWORK}
    sections = {}
    for name, schema in schemas.items():
        given = raw.get(name)
        if given is not None and name not in _SECTIONS[mode]:
            raise ScenarioError(f"section {name!r} is not used in {mode} mode",
                                path=path, line=locate(text, (name,)))
        if name in _SECTIONS[mode]:
            if given is None and any(d is ... for _, d in schema.values()):
                raise ScenarioError(f"{mode} mode needs a {name!r} section", path=path, line=1)
            sections[name] = _fill(given or {}, schema, (name,), text, path)

    if "sweep" in sections:
        sw = sections["sweep"]
        sw["distances"] = _list_of(sw["distances"], _NUM, ("sweep", "distances"), text, path)
        sw["snr_db"] = _list_of(sw["snr_db"], _OPT_NUM, ("sweep", "snr_db"), text, path)
        sw["moisture"] = _list_of(sw["moisture"], _NUM, ("sweep", "moisture"), text, path)
    if "network" in sections:
        net = sections["network"]
        nodes = []
        for i, node in enumerate(net["nodes"]):
            if not isinstance(node, dict):
                raise ScenarioError(f"network.nodes[{i}] must be an object",
                                    path=path, line=locate(text, ("network", "nodes")))
            nodes.append(_fill(node, _NODE, ("network", "nodes", i), text, path))
        if not nodes:
            raise ScenarioError("network.nodes must not be empty", path=path,
                                line=locate(text, ("network", "nodes")))
        net["nodes"] = nodes

    sc = Scenario(mode, top["seed"], top["output_dir"], top["description"], sections,
                  None if path is None else str(path), text)
    validate(sc)
    return sc


def load_scenario(path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc.strerror}", path=path) from None
    return parse_scenario(text, p)


def validate(sc: Scenario) -> None:
    try:
        build_objects(sc)
    except ScenarioError:
        raise
    except (LoraIsacError, ValueError) as exc:
        raise sc.fail(str(exc), *getattr(exc, "scenario_keys", ())) from exc


def _anchored(exc: Exception, *keys) -> Exception:
    exc.scenario_keys = keys
    return exc


def _build(keys, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (LoraIsacError, ValueError) as exc:
        if not hasattr(exc, "scenario_keys"):
            _anchored(exc, *keys)
        raise


def _require(ok, message, *keys):
    if not ok:
        raise _anchored(ConfigError(message), *keys)


def build_objects(sc: Scenario) -> dict:
    """Instantiate the module objects a scenario describes.

    Every invariant violation is re-raised tagged with the scenario key it
    belongs to, so the caller can point at the right line.
    """
    params = _build(("phy",), ChirpParams, **sc.section("phy"))
    out = {"params": params}
    if sc.mode == "soil":
        fr, so, sw = sc.section("frame"), sc.section("soil"), sc.section("sweep")
        out["node"] = _build(("frame",), NodeConfig, "soil", OUTDOOR, params, n_preamble=fr["n_preamble"],
                             n_sfd=fr["n_sfd"], payload_len=fr["payload_len"], switch_index=fr["switch_index"])
        _build(("frame", "switch_index"), _check_switch, out["node"])
        out["soils"] = [_build(("sweep", "moisture"), SoilProfile, m, so["antenna_separation_d"],
                               so["attenuation_per_meter"]) for m in sw["moisture"]]
        _require(all(d > 0 for d in sw["distances"]), "sweep.distances must be positive", "sweep", "distances")
        _require(sw["packets_per_point"] >= 1, "sweep.packets_per_point must be >= 1",
                 "sweep", "packets_per_point")
        _require(sw["reference_distance"] > 0, "sweep.reference_distance must be positive",
                 "sweep", "reference_distance")
        _require(so["cfo_max_hz"] >= 0, "soil.cfo_max_hz must be non-negative", "soil", "cfo_max_hz")
        _require(0 <= so["sfo_max_ppm"] <= 100, "soil.sfo_max_ppm must lie in [0, 100]", "soil", "sfo_max_ppm")
        _require(so["max_projection"] >= 0, "soil.max_projection must be non-negative", "soil", "max_projection")
    elif sc.mode == "presence":
        fr, pr = sc.section("frame"), sc.section("presence")
        _require(fr["switch_index"] is None, "frame.switch_index is only valid in soil mode",
                 "frame", "switch_index")
        out["node"] = _build(("presence", "packet_interval"), NodeConfig, "room", INDOOR, params,
                             sensing_packet_interval=pr["packet_interval"], n_preamble=fr["n_preamble"],
                             n_sfd=fr["n_sfd"], payload_len=fr["payload_len"])
        rate = 1.0 / pr["packet_interval"]
        if rate < MIN_PACKET_RATE * (1 - 1e-9):
            raise _anchored(SamplingRateError(
                f"packet rate {rate:.3g} Hz is below the required minimum of {MIN_PACKET_RATE:.3g} Hz",
                required_rate=MIN_PACKET_RATE), "presence", "packet_interval")
        _require(pr["window"] > 0, "presence.window must be positive", "presence", "window")
        _require(pr["hop"] is None or pr["hop"] > 0, "presence.hop must be positive", "presence", "hop")
        _require(pr["episode_duration"] >= pr["window"], "presence.episode_duration is shorter than one window",
                 "presence", "episode_duration")
        _require(pr["n_walking"] >= 0 and pr["n_still"] >= 0 and pr["n_walking"] + pr["n_still"] > 0,
                 "presence needs a non-negative number of episodes, at least one in total", "presence")
        _require(pr["multiplier"] > 0, "presence.multiplier must be positive", "presence", "multiplier")
        _require(pr["threshold"] is None or pr["threshold"] >= 0, "presence.threshold must be non-negative",
                 "presence", "threshold")
        if pr["threshold"] is None:
            _require(pr["calibration_duration"] >= 2 * pr["window"],
                     "presence.calibration_duration must cover at least two windows",
                     "presence", "calibration_duration")
        _require(pr["cfo_max_hz"] >= 0, "presence.cfo_max_hz must be non-negative", "presence", "cfo_max_hz")
        _require(0 <= pr["sfo_max_ppm"] <= 100, "presence.sfo_max_ppm must lie in [0, 100]",
                 "presence", "sfo_max_ppm")
        _require(0 < pr["human_gain"] <= 1, "presence.human_gain must lie in (0, 1]", "presence", "human_gain")
        _require(pr["walking_speed"] > 0, "presence.walking_speed must be positive", "presence", "walking_speed")
    elif sc.mode == "network":
        net = sc.section("network")
        nodes, extras = [], []
        for i, nd in enumerate(net["nodes"]):
            keys = ("network", "nodes", i)
            kw = {k: nd[k] for k in ("node_id", "mode", "duty_cycle_limit", "switch_index",
                                     "sensing_packet_interval", "tx_interval", "freq_channel",
                                     "slot_offset", "n_preamble", "n_sfd", "payload_len")}
            nodes.append(_build(keys, NodeConfig, params=params, **kw))
            _require(nd["activity"] in ("walking", "still"), "activity must be 'walking' or 'still'",
                     *keys, "activity")
            _require(nd["distance"] > 0, "distance must be positive", *keys, "distance")
            if nd["mode"] == OUTDOOR:
                _build((*keys, "switch_index"), _check_switch, nodes[-1])
                _build((*keys, "moisture"), SoilProfile, nd["moisture"])
            extras.append(nd)
        scenario = _build(("network",), NetworkScenario, tuple(nodes), net["n_freq_channels"],
                          net["gateway_rx_antennas"], net["duration"], sc.seed,
                          presence_threshold=net["presence_threshold"], presence_window=net["presence_window"])
        if net["assign_slots"]:
            scenario = _build(("network", "nodes"), assign_channels_and_slots, scenario)
        else:
            for node in scenario.nodes:
                _build(("network", "nodes"), schedule_transmissions, node, scenario.duration)
        out["network"] = scenario
        out["node_extras"] = {nd["node_id"]: nd for nd in extras}
    return out


def _check_switch(cfg):
    if not 2 <= cfg.switch_index <= cfg.n_preamble - 2:
        raise ConfigError(f"switch_index {cfg.switch_index} leaves fewer than two preamble symbols "
                          f"on one side (need 2..{cfg.n_preamble - 2})")
