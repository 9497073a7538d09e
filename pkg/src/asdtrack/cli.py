"""Command-line entry point: ``asdtrack run`` and ``asdtrack verify``.

Exit codes: 0 success, 1 failed verification, 2 invalid request,
3 simulation abort.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from pathlib import Path

from .benchmarks import SCENARIOS, load_config, run_scenario, scenario_from_config
from .engine import CausalityError, SimulationAbort
from .verify import SUITES, format_report, run_suite

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_ABORT = 0, 1, 2, 3


def _write_atomic(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="asdtrack", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one scenario and write CSV traces plus metrics")
    run.add_argument("name", nargs="?", help=f"scenario ({', '.join(SCENARIOS)})")
    run.add_argument("--scenario", dest="scenario_flag")
    run.add_argument("--case", type=int)
    run.add_argument("--ref", choices=("step", "sine"))
    run.add_argument("--dt", type=float)
    run.add_argument("--horizon", type=float)
    run.add_argument("--seed", type=int)
    run.add_argument("--noise", choices=("on", "off"))
    run.add_argument("--out", help="output directory (default: current directory)")
    run.add_argument("--config", help="JSON file whose keys mirror these flags")

    ver = sub.add_parser("verify", help="run invariant suites and report each check")
    ver.add_argument("suite", nargs="?", default="all", choices=("all",) + tuple(SUITES))
    ver.add_argument("--horizon", type=float, default=20.0,
                     help="horizon of the closed-loop runs used by the suites")
    return p


def _request(args) -> dict:
    cfg = load_config(args.config) if args.config else {}
    if args.name and args.scenario_flag and args.name != args.scenario_flag:
        raise ValueError("scenario given twice with different values")
    flags = {
        "scenario": args.name or args.scenario_flag,
        "case": args.case, "ref": args.ref, "dt": args.dt, "horizon": args.horizon,
        "seed": args.seed, "out": args.out,
        "noise": None if args.noise is None else args.noise == "on",
    }
    cfg.update({k: v for k, v in flags.items() if v is not None})
    if "scenario" not in cfg:
        raise ValueError("no scenario given")
    cfg.setdefault("ref", "step")
    if cfg["ref"] not in ("step", "sine"):
        raise ValueError(f"ref must be 'step' or 'sine', got {cfg['ref']!r}")
    return cfg


def cmd_run(args) -> int:
    try:
        cfg = _request(args)
        sc = scenario_from_config(cfg)
    except (ValueError, TypeError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        res = run_scenario(sc, cfg["ref"])
    except (SimulationAbort, CausalityError, FloatingPointError) as exc:
        where = ""
        if isinstance(exc, SimulationAbort):
            where = f" [block={exc.block}, stage={exc.stage}, t={exc.time}]"
        print(f"simulation aborted: {exc}{where}", file=sys.stderr)
        return EXIT_ABORT
    out = Path(cfg.get("out") or ".")
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / res.filename
    _write_atomic(csv_path, res.csv())
    _write_atomic(csv_path.with_suffix(".metrics.json"), res.metrics_json() + "\n")
    m = res.metrics
    print(f"{sc.tag} ({cfg['ref']}): settled sup|y-r| = {m['settled_sup_error']:.4g}, "
          f"settled rms = {m['settled_rms_error']:.4g}, sup|xi| = {m['sup_xi']:.4g}")
    print(f"wrote {csv_path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    checks = run_suite(args.suite, horizon=args.horizon)
    print(format_report(checks))
    return EXIT_OK if all(c.passed is not False for c in checks) else EXIT_FAIL


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    return cmd_verify(args)


if __name__ == "__main__":
    sys.exit(main())
