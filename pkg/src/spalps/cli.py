"""Command-line entry point.

Exit codes: 0 success, 1 model errors (diagnostics on standard error),
2 usage or I/O errors.
"""

from __future__ import annotations

import argparse
import sys
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

from . import FORMAT_VERSION, __version__
from .corpus import corpus_run
from .dsl import ModelError, parse
from .export import (
    ensemble_to_csv,
    equations_to_json,
    read_ensemble_csv,
    read_trajectory_csv,
    trajectory_to_csv,
    write_atomic,
)
from .meanfield import collapse_ticks, evaluate
from .montecarlo import RunConfig, compare, ensemble
from .pipeline import Compiled, compile_spec
from .statespace import StateSpaceError


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _param(text: str) -> tuple[str, Fraction]:
    name, sep, value = text.partition("=")
    if not sep or not name.strip():
        raise UsageError(f"--param expects name=value, got {text!r}")
    try:
        return name.strip(), Fraction(value.strip())
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"--param {name.strip()}: not a number: {value.strip()!r}") from None


def _load(args) -> Compiled:
    try:
        text = Path(args.model).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read model {args.model}: {exc.strerror or exc}") from None
    spec = parse(text, args.model)
    overrides = dict(_param(p) for p in getattr(args, "param", None) or [])
    declared = {p.name for p in spec.params}
    unknown = sorted(set(overrides) - declared)
    if unknown:
        raise UsageError(f"--param names undeclared parameter(s): {', '.join(unknown)}")
    compiled = compile_spec(spec, overrides)
    for w in compiled.model.warnings:
        print(w.format(), file=sys.stderr)
    return compiled


def _write(path: str, text: str) -> None:
    try:
        write_atomic(path, text)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror or exc}") from None


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None


def cmd_check(args) -> int:
    c = _load(args)
    named = len(c.named[1])
    print(f"valid: {named} states, {c.space.m} locations")
    if named != c.space.n:
        print(f"({c.space.n} micro-states before lumping anonymous intermediates)")
    return 0


def cmd_states(args) -> int:
    print(_load(args).space.render(), end="")
    return 0


def cmd_compile(args) -> int:
    c = _load(args)
    if args.emit == "stt":
        text = c.stt_text(args.view)
    elif args.emit == "eqs":
        text = c.equations_text()
    else:
        text = equations_to_json(c.equations)
    if args.out:
        _write(args.out, text)
    else:
        print(text, end="")
    return 0


def _summary(traj) -> str:
    last = traj.frames[-1]
    phases = traj.phases
    ticks = phases.count("tick")
    lines = [f"frames: {len(traj.frames)} ({ticks} ticks), last phase: {last.phase}"]
    totals = last.occupancy.sum(axis=1)
    width = max(len(label) for label in traj.labels)
    for label, value in zip(traj.labels, totals):
        if value:
            lines.append(f"  {label:<{width}}  {value:.6g}")
    lines.append(f"  {'total':<{width}}  {totals.sum():.6g}")
    return "\n".join(lines) + "\n"


def cmd_simulate(args) -> int:
    c = _load(args)
    if args.scale < 1:
        raise UsageError("--scale must be positive")
    traj = evaluate(c.table, c.init * args.scale, args.steps)
    if args.collapse_ticks:
        traj = collapse_ticks(traj)
    if args.out:
        _write(args.out, trajectory_to_csv(traj))
    print(_summary(traj), end="")
    return 0


def cmd_mc(args) -> int:
    c = _load(args)
    try:
        config = RunConfig(args.seed, args.steps, args.replicas, args.scale)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    stats = ensemble(c.model, c.space, config)
    if args.out:
        _write(args.out, ensemble_to_csv(stats))
    print(_summary(stats.as_trajectory()), end="")
    if stats.phase_disagreements:
        print(f"replicas disagree on the phase at {len(stats.phase_disagreements)} frame(s)")
    return 0


def cmd_compare(args) -> int:
    try:
        mf = read_trajectory_csv(_read(args.mf))
        ens = read_ensemble_csv(_read(args.mc))
        report = compare(mf, ens)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    text = report.render()
    if args.out:
        _write(args.out, text)
    else:
        print(text, end="")
    return 0


def cmd_corpus(args) -> int:
    try:
        report = corpus_run(args.directory, update=args.update)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None
    print(report.render(), end="")
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="spalps", description="Compile and simulate located population process models.")
    p.add_argument("--version", action="version", version=f"spalps {__version__} (format {FORMAT_VERSION})")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def model_cmd(name, func, help_text, params=False):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("model")
        if params:
            sp.add_argument("--param", action="append", metavar="NAME=VALUE",
                            help="override a declared parameter (repeatable)")
        sp.set_defaults(func=func)
        return sp

    model_cmd("check", cmd_check, "validate a model and count its states")
    model_cmd("states", cmd_states, "list the enumerated states")

    sp = model_cmd("compile", cmd_compile, "emit the transition table or equations", params=True)
    sp.add_argument("--emit", choices=["eqs", "stt", "json"], default="eqs")
    sp.add_argument("--view", choices=["micro", "named"], default="micro",
                    help="table view for --emit stt")
    sp.add_argument("--out")

    sp = model_cmd("simulate", cmd_simulate, "evaluate the mean-field equations", params=True)
    sp.add_argument("--steps", type=int, default=50)
    sp.add_argument("--scale", type=int, default=1, help="multiply initial counts")
    sp.add_argument("--collapse-ticks", action="store_true")
    sp.add_argument("--out", help="trajectory CSV")

    sp = model_cmd("mc", cmd_mc, "run a seeded Monte Carlo ensemble", params=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--replicas", type=int, default=100)
    sp.add_argument("--steps", type=int, default=50)
    sp.add_argument("--scale", type=int, default=1)
    sp.add_argument("--out", help="ensemble CSV")

    sp = sub.add_parser("compare", help="compare a mean-field trajectory with an ensemble")
    sp.add_argument("--mf", required=True)
    sp.add_argument("--mc", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("corpus", help="check corpus models against their goldens")
    sp.add_argument("directory", nargs="?", default="corpus")
    sp.add_argument("--update", action="store_true", help="rewrite the goldens")
    sp.set_defaults(func=cmd_corpus)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except SystemExit as exc:  # --help and --version
        return exc.code if isinstance(exc.code, int) else 0
    except UsageError as exc:
        print(f"spalps: error: {exc}", file=sys.stderr)
        return 2
    except ModelError as exc:
        for d in exc.diagnostics:
            print(d.format(), file=sys.stderr)
        return 1
    except StateSpaceError as exc:
        print(f"spalps: error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
