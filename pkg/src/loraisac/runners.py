"""
Scenario runners.

Each runner takes a validated :class:`~loraisac.scenario.Scenario` and
returns its artifacts as ``{file name: text}`` without touching the disk,
so a failure part-way leaves nothing behind and reruns are byte-identical.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import replace

import numpy as np

from .channel import SoilProfile, human_trajectory
from .isac_tx import OUTDOOR
from .netsim import run_network
from .pipeline import derive_seed, presence_episode, room_scene, soil_packet, soil_scene
from .scenario import Scenario, build_objects
from .sensing import MOVING, STILL, calibrate_threshold, detect_presence

WALKING = "walking"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _f(x, digits=9):
    return "" if x is None else f"{x:.{digits}f}"


def _rmse(errs):
    return float(math.sqrt(np.mean(np.square(errs)))) if errs else None


# ---------------------------------------------------------------- soil

def run_soil(sc: Scenario) -> dict:
    objs = build_objects(sc)
    node, soils = objs["node"], objs["soils"]
    so, sw = sc.section("soil"), sc.section("sweep")
    n_bins = node.params.n_bins
    rows, conditions = [], []
    all_err, n_total, n_ok = [], 0, 0
    for di, dist in enumerate(sw["distances"]):
        for si, snr in enumerate(sw["snr_db"]):
            errs, ok, n_pk = [], 0, 0
            eff = None
            for mi, soil in enumerate(soils):
                prior = None
                for k in range(sw["packets_per_point"]):
                    seed = derive_seed(sc.seed, di, si, mi, k)
                    rng = np.random.default_rng(seed)
                    cfo = rng.uniform(-so["cfo_max_hz"], so["cfo_max_hz"])
                    sfo = rng.uniform(-so["sfo_max_ppm"], so["sfo_max_ppm"])
                    payload = rng.integers(0, n_bins, node.payload_len).tolist()
                    scene = soil_scene(soil, dist, snr, cfo, sfo, sw["reference_distance"],
                                       sw["path_loss_exponent"], node.params.carrier_freq)
                    eff = scene.impairments.snr_db
                    t = k * node.interval
                    pkt = soil_packet(node, scene, payload, t, seed, prior if so["use_prior"] else None,
                                      so["max_projection"])
                    n_pk += 1
                    ok += pkt.payload_ok
                    r = pkt.reading
                    err = None if r is None else r.theta_hat - soil.moisture
                    if r is not None:
                        errs.append(err)
                        prior = r.theta_hat
                    rows.append([_f(dist, 3), "" if snr is None else _f(snr, 3), "" if eff is None else _f(eff, 3),
                                 k, _f(t, 6), _f(soil.moisture), _f(None if r is None else r.theta_hat),
                                 _f(err), int(pkt.payload_ok), "" if r is None else int(r.projected),
                                 "" if r is None else f"{r.quality:.6e}"])
            n_total += n_pk
            n_ok += ok
            all_err += errs
            conditions.append({
                "distance_m": dist, "snr_db": snr, "effective_snr_db": eff, "n_packets": n_pk,
                "decoded": ok, "decode_accuracy": ok / n_pk, "n_readings": len(errs),
                "rmse": _rmse(errs), "max_abs_error": max(map(abs, errs)) if errs else None,
            })
    summary = {
        "mode": "soil", "seed": sc.seed, "n_packets": n_total, "decode_accuracy": n_ok / n_total,
        "n_readings": len(all_err), "rmse": _rmse(all_err),
        "max_abs_error": max(map(abs, all_err)) if all_err else None, "conditions": conditions,
    }
    header = ["distance_m", "snr_db", "effective_snr_db", "packet", "timestamp", "theta_true", "theta_hat",
              "error", "decoded", "projected", "quality"]
    return {"moisture_results.csv": _csv(header, rows), "summary.json": _json(summary)}


# ------------------------------------------------------------ presence

def presence_scene(sc: Scenario, kind: str, seed: int):
    """Room scene for one seeded episode: random standing spot and clock offsets."""
    pr = sc.section("presence")
    rng = np.random.default_rng(derive_seed(seed, 0x5C))
    traj = human_trajectory(kind, seed, base_length=float(rng.uniform(0.0, 1.0)), speed=pr["walking_speed"])
    cfo = float(rng.uniform(-pr["cfo_max_hz"], pr["cfo_max_hz"]))
    sfo = float(rng.uniform(-pr["sfo_max_ppm"], pr["sfo_max_ppm"]))
    return room_scene(traj, pr["snr_db"], cfo, sfo, pr["human_gain"], sc.section("phy")["carrier_freq"])


def run_presence(sc: Scenario) -> dict:
    objs = build_objects(sc)
    node = objs["node"]
    pr = sc.section("presence")
    threshold = pr["threshold"]
    if threshold is None:
        seed = derive_seed(sc.seed, 0)
        base = presence_episode(node, presence_scene(sc, STILL, seed), pr["calibration_duration"], seed)
        threshold = calibrate_threshold(base, pr["multiplier"], pr["window"], pr["hop"])
    episodes = [(WALKING, i) for i in range(pr["n_walking"])] + [(STILL, i) for i in range(pr["n_still"])]
    ratio_rows, state_rows = [], []
    confusion = {WALKING: {MOVING: 0, STILL: 0}, STILL: {MOVING: 0, STILL: 0}}
    episode_votes = {WALKING: {MOVING: 0, STILL: 0}, STILL: {MOVING: 0, STILL: 0}}
    for ep, (kind, i) in enumerate(episodes):
        seed = derive_seed(sc.seed, 1 if kind == WALKING else 2, i)
        series = presence_episode(node, presence_scene(sc, kind, seed), pr["episode_duration"], seed)
        states = detect_presence(series, pr["window"], threshold, pr["hop"])
        for t, v in zip(series.timestamps, series.values):
            ratio_rows.append([ep, kind, _f(t, 6), f"{v.real:.9e}", f"{v.imag:.9e}", f"{abs(v):.9e}",
                               f"{np.angle(v):.9f}"])
        n_moving = 0
        for s in states:
            confusion[kind][s.state] += 1
            n_moving += s.state == MOVING
            state_rows.append([ep, kind, _f(s.window_start, 6), _f(s.window_end, 6), f"{s.metric:.9e}",
                               f"{s.threshold_used:.9e}", s.state])
        episode_votes[kind][MOVING if 2 * n_moving > len(states) else STILL] += 1

    def acc(table, kind, right):
        n = sum(table[kind].values())
        return table[kind][right] / n if n else None

    summary = {
        "mode": "presence", "seed": sc.seed, "threshold": threshold,
        "n_episodes": {WALKING: pr["n_walking"], STILL: pr["n_still"]},
        "window_confusion": confusion,
        "per_class_accuracy": {WALKING: acc(confusion, WALKING, MOVING), STILL: acc(confusion, STILL, STILL)},
        "episode_confusion": episode_votes,
        "episode_accuracy": {WALKING: acc(episode_votes, WALKING, MOVING),
                             STILL: acc(episode_votes, STILL, STILL)},
    }
    return {
        "ratio_series.csv": _csv(["episode", "truth", "timestamp", "re", "im", "magnitude", "phase"], ratio_rows),
        "states.csv": _csv(["episode", "truth", "window_start", "window_end", "metric", "threshold", "state"],
                           state_rows),
        "summary.json": _json(summary),
    }


# ------------------------------------------------------------- network

def network_scenes(sc: Scenario, scenario, extras) -> dict:
    snr = sc.section("network")["snr_db"]
    scenes = {}
    for k, node in enumerate(scenario.nodes):
        ex = extras[node.node_id]
        fc = node.params.carrier_freq
        if node.mode == OUTDOOR:
            scenes[node.node_id] = soil_scene(SoilProfile(ex["moisture"]), ex["distance"], snr, carrier_freq=fc)
        else:
            traj = human_trajectory(ex["activity"], derive_seed(sc.seed, k, 0x77))
            scenes[node.node_id] = room_scene(traj, snr, carrier_freq=fc)
    return scenes


def run_network_scenario(sc: Scenario) -> dict:
    objs = build_objects(sc)
    scenario = objs["network"]
    scenario = replace(scenario, scenes=network_scenes(sc, scenario, objs["node_extras"]))
    result = run_network(scenario)
    lost = {(c.node_a, c.index_a) for c in result.ledger.collisions} | \
           {(c.node_b, c.index_b) for c in result.ledger.collisions}
    ledger_rows = [[tx.node_id, tx.index, tx.freq_channel, _f(tx.t_start), _f(tx.t_end),
                    int((tx.node_id, tx.index) in lost)]
                   for tx in sorted(result.ledger.transmissions, key=lambda tx: (tx.t_start, tx.node_id))]
    stat_rows, nodes_summary = [], []
    for node in scenario.nodes:
        st = result.stats[node.node_id]
        stat_rows.append([node.node_id, node.mode, node.freq_channel, _f(node.slot_offset), _f(node.interval),
                          st.scheduled, st.collided, st.decoded, f"{st.delivery_ratio:.6f}"])
        nodes_summary.append({"node_id": node.node_id, "mode": node.mode, "freq_channel": node.freq_channel,
                              "slot_offset": node.slot_offset, "interval": node.interval,
                              "scheduled": st.scheduled, "collided": st.collided, "decoded": st.decoded,
                              "delivery_ratio": st.delivery_ratio, "n_reports": len(result.reports[node.node_id])})
    report_rows = []
    for node in scenario.nodes:
        for r in result.reports[node.node_id]:
            value = r.value if isinstance(r.value, str) else f"{r.value:.9f}"
            report_rows.append([r.node_id, _f(r.timestamp, 6), r.kind, value, f"{r.confidence:.6e}"])
    scheduled = sum(s.scheduled for s in result.stats.values())
    decoded = sum(s.decoded for s in result.stats.values())
    summary = {
        "mode": "network", "seed": sc.seed, "duration": scenario.duration,
        "n_freq_channels": scenario.n_freq_channels, "gateway_rx_antennas": scenario.gateway_rx_antennas,
        "n_transmissions": len(result.ledger.transmissions), "n_collisions": len(result.ledger.collisions),
        "lost_packets": len(lost), "delivery_ratio": decoded / scheduled if scheduled else None,
        "nodes": nodes_summary,
    }
    return {
        "ledger.csv": _csv(["node_id", "packet", "freq_channel", "t_start", "t_end", "collided"], ledger_rows),
        "stats.csv": _csv(["node_id", "mode", "freq_channel", "slot_offset", "interval", "scheduled", "collided",
                           "decoded", "delivery_ratio"], stat_rows),
        "reports.csv": _csv(["node_id", "timestamp", "kind", "value", "confidence"], report_rows),
        "summary.json": _json(summary),
    }
