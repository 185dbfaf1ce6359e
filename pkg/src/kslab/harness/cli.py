"""Command-line entry point ``kslab``.

Exit codes: 0 success, 1 config error, 2 run failure, 3 partial sweep failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Sequence

from ..errors import ConfigError, PreconditionError
from ..motility import check_assumptions, classify_regime, parse_motility
from .config import load_config
from .experiment import run_experiment
from .io import _jsonable, write_json
from .sweeps import sweep_critical_mass, sweep_decay_exponent

EXIT_OK, EXIT_CONFIG, EXIT_RUN, EXIT_PARTIAL = 0, 1, 2, 3


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--workers", type=int, default=1, help="parallel runs for sweeps")
    common.add_argument("--snapshot-every", type=int, default=None, help="write a field snapshot every N diagnostic samples")
    common.add_argument("--quiet", action="store_true", help="suppress the JSON summary on stdout")

    p = argparse.ArgumentParser(prog="kslab", description="Chemotaxis-with-signal-dependent-motility simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common], help="run one experiment config")
    r.add_argument("config", type=Path)
    r.add_argument("-o", "--out", type=Path, required=True)

    sm = sub.add_parser("sweep-mass", parents=[common], help="critical-mass sweep with gamma = exp(-chi v)")
    sm.add_argument("config", type=Path)
    sm.add_argument("--chi", type=float, default=1.0)
    sm.add_argument("--multipliers", type=_floats, default=[0.5, 0.8, 1.2, 2.0])
    sm.add_argument("-o", "--out", type=Path, required=True)

    sk = sub.add_parser("sweep-k", parents=[common], help="decay-exponent sweep with gamma = v^-k")
    sk.add_argument("config", type=Path)
    sk.add_argument("--k", type=_floats, required=True, dest="k_values")
    sk.add_argument("-o", "--out", type=Path, required=True)

    cm = sub.add_parser("check-motility", parents=[common], help="decide the structural assumptions for a motility")
    cm.add_argument("motility", help="e.g. power:k=1, exponential:chi=2, tabulated:path=g.csv")
    cm.add_argument("--n", type=int, default=2)
    cm.add_argument("--eps", type=float, default=0.0)

    cl = sub.add_parser("classify", parents=[common], help="predict the regime for (n, eps, motility, mass)")
    cl.add_argument("n", type=int)
    cl.add_argument("eps", type=float)
    cl.add_argument("motility")
    cl.add_argument("mass", type=float)
    return p


def _emit(obj, quiet: bool) -> None:
    if not quiet:
        print(json.dumps(_jsonable(obj), indent=2))


def _sweep(args, kind: str) -> int:
    cfg = load_config(args.config)
    sim = cfg.sim if args.seed is None else dataclasses.replace(cfg.sim, seed=args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    if kind == "mass":
        table = sweep_critical_mass(args.chi, args.multipliers, sim, args.workers, args.out / "sweep.csv")
    else:
        table = sweep_decay_exponent(args.k_values, sim, workers=args.workers, out=args.out / "sweep.csv")
    record = {"axis": table.axis, "values": table.values, "rows": table.rows, "notes": table.notes, "artifacts": ["sweep.csv"]}
    write_json(args.out / "sweep.json", record)
    _emit(record, args.quiet)
    if table.failures == len(table.rows):
        return EXIT_RUN
    return EXIT_PARTIAL if table.failures else EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            m = run_experiment(args.config, args.out, seed=args.seed, snapshot_every=args.snapshot_every)
            _emit({"status": m.status, "summary": m.summary, "classifier": m.classifier, "agreement": m.agreement, "error": m.error}, args.quiet)
            return EXIT_OK if m.status in ("finished", "blowup-flagged") else EXIT_RUN
        if args.command == "sweep-mass":
            return _sweep(args, "mass")
        if args.command == "sweep-k":
            return _sweep(args, "k")
        if args.command == "check-motility":
            rep = check_assumptions(parse_motility(args.motility), args.n, args.eps)
            _emit(rep.as_dict(), args.quiet)
            return EXIT_OK
        if args.command == "classify":
            v = classify_regime(args.n, args.eps, parse_motility(args.motility), args.mass)
            _emit(v.as_dict(), args.quiet)
            return EXIT_OK
    except (ConfigError, PreconditionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_RUN
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
