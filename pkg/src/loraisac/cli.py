"""
Command-line entry point.

Subcommands ``soil``, ``presence`` and ``network`` run a scenario file and
write plot-ready CSV plus a JSON summary; ``selftest`` runs the invariant
checks.  Every failure exits nonzero after printing one line of the form
``error: {json}`` on stderr.  Outputs are written only after the whole run
has succeeded.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import replace
from importlib import resources
from pathlib import Path

from .errors import LoraIsacError, ScenarioError, ScheduleInfeasibleError
from .phy import ChirpParams
from .runners import run_network_scenario, run_presence, run_soil
from .scenario import validate, load_scenario
from .selftest import run_selftest

EXIT_FAILED = 1
EXIT_INVALID = 2
EXIT_INFEASIBLE = 3

_RUNNERS = {"soil": run_soil, "presence": run_presence, "network": run_network_scenario}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _report({"type": "UsageError", "message": message})
        sys.exit(EXIT_INVALID)


def _report(fields: dict) -> None:
    print("error: " + json.dumps(fields, sort_keys=True), file=sys.stderr)


def _diagnostic(exc: Exception) -> dict:
    d = {"type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ScenarioError):
        d["message"] = exc.args[0]
        d["file"] = None if exc.path is None else str(exc.path)
        d["line"] = exc.line
        cause = exc.__cause__
        if cause is not None:
            d["cause"] = type(cause).__name__
            exc = cause
    for attr in ("required_rate", "min_interval", "channel", "demand"):
        value = getattr(exc, attr, None)
        if value is not None:
            d[attr] = value
    return d


def bundled_scenario(name: str) -> Path:
    """Path of a scenario shipped with the package, e.g. ``soil_baseline``."""
    return Path(str(resources.files("loraisac") / "scenarios" / f"{name}.json"))


def _scenario_path(arg: str) -> Path:
    # "@name" selects a bundled scenario
    return bundled_scenario(arg[1:]) if arg.startswith("@") else Path(arg)


def write_outputs(out_dir: Path, files: dict) -> None:
    """Write every file via a temporary name so none is left half-written."""
    out_dir.mkdir(parents=True, exist_ok=True)
    staged = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=out_dir)
            staged.append((tmp, out_dir / name))
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
        for tmp, final in staged:
            os.replace(tmp, final)
    finally:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)


def _run_scenario(args) -> int:
    sc = load_scenario(_scenario_path(args.scenario))
    if sc.mode != args.command:
        raise ScenarioError(f"scenario mode is {sc.mode!r}, expected {args.command!r}", path=sc.path,
                            line=1)
    if args.seed is not None:
        sc = replace(sc, seed=args.seed)
        validate(sc)
    out = args.out or sc.output_dir
    if out is None:
        raise ScenarioError("no output directory: pass --out or set output_dir", path=sc.path)
    files = _RUNNERS[sc.mode](sc)
    write_outputs(Path(out), files)
    summary = json.loads(files["summary.json"])
    print(json.dumps({k: v for k, v in summary.items() if not isinstance(v, (list, dict))}, sort_keys=True))
    return 0


def _run_selftest(args) -> int:
    params = ChirpParams()
    if args.scenario is not None:
        sc = load_scenario(_scenario_path(args.scenario))
        if sc.mode != "phy_selftest":
            raise ScenarioError(f"scenario mode is {sc.mode!r}, expected 'phy_selftest'", path=sc.path, line=1)
        params = ChirpParams(**sc.section("phy"))
    results = run_selftest(params)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} properties passed")
    if args.out:
        write_outputs(Path(args.out), {"selftest.json": json.dumps(
            [{"name": r.name, "passed": r.passed, "detail": r.detail} for r in results], indent=2) + "\n"})
    if n_fail:
        _report({"type": "SelftestFailure", "message": f"{n_fail} properties failed"})
        return EXIT_FAILED
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="loraisac", description="LoRa sensing-and-communication simulator")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_text in (("soil", "soil moisture sweep"), ("presence", "walking/still detection"),
                            ("network", "multi-node network simulation")):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--scenario", required=True, help="scenario JSON path, or @name for a bundled one")
        s.add_argument("--out", help="output directory (overrides output_dir)")
        s.add_argument("--seed", type=_u64, help="override the scenario seed")
    s = sub.add_parser("selftest", help="run module invariant checks")
    s.add_argument("--scenario", help="optional phy_selftest scenario")
    s.add_argument("--out", help="also write selftest.json here")
    s.add_argument("--seed", type=_u64, help="accepted for symmetry; the checks are fixed")
    return p


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "selftest":
            return _run_selftest(args)
        return _run_scenario(args)
    except ScenarioError as exc:
        _report(_diagnostic(exc))
        cause = exc.__cause__
        return EXIT_INFEASIBLE if isinstance(cause, ScheduleInfeasibleError) else EXIT_INVALID
    except ScheduleInfeasibleError as exc:
        _report(_diagnostic(exc))
        return EXIT_INFEASIBLE
    except (LoraIsacError, ValueError, OSError) as exc:
        _report(_diagnostic(exc))
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
