"""Command-line entry point.

Machine-readable result lines are printed as ``orsim: key=value``.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import Callable, Sequence, TextIO

from . import cbr, persistence
from .domain import DEFAULT_TAXONOMY, Solution, State, Taxonomy
from .sim import ConfigError, Simulation, batch

log = logging.getLogger("orsim")


class UsageError(Exception):
    pass


def _say(key: str, value: object, out: TextIO) -> None:
    print(f"orsim: {key}={'none' if value is None else value}", file=out)


def _out_dir(path: str) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


# ---------------------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace, out: TextIO) -> int:
    cfg = persistence.load_config(args.config)
    case_base = None
    if args.base:
        enc = cbr.CategoricalEncoding(cfg.cbr.encoding, cfg.cbr.sigma, cfg.taxonomy)
        case_base = persistence.load_casebase(args.base, cfg.cbr.acceptance_threshold, enc)
    sim = Simulation(cfg, case_base=case_base, seed=args.seed)
    trace = sim.run()
    out_dir = _out_dir(args.out)
    persistence.write_trace(trace, out_dir / "trace.csv")
    base_path = out_dir / "cases.jsonl"
    persistence.save_casebase(sim.case_base, base_path)
    persistence.save_pending(sim.pending, persistence.pending_path(base_path))
    _say("seed", sim.seed, out)
    _say("cycles", len(trace.rows), out)
    _say("first_individual_alert", trace.first_individual(), out)
    _say("first_collective_alert", trace.first_collective(), out)
    silent = next((r.cycle for r in trace.rows if r.collective_alert and not any(r.individual)), None)
    _say("first_collective_only_alert", silent, out)
    _say("cases", len(sim.case_base), out)
    _say("pending", len(sim.pending), out)
    _say("trace", out_dir / "trace.csv", out)
    return 0


def cmd_batch(args: argparse.Namespace, out: TextIO) -> int:
    if args.runs < 1:
        raise UsageError("--runs must be at least 1")
    cfg = persistence.load_config(args.config)
    base_seed = cfg.seed if args.base_seed is None else args.base_seed
    result = batch(cfg, args.runs, base_seed, keep_traces=True)
    out_dir = _out_dir(args.out)
    width = max(3, len(str(args.runs - 1)))
    for k, trace in enumerate(result.traces):
        persistence.write_trace(trace, out_dir / f"run_{k:0{width}d}.csv")
    persistence.write_batch_summary(result, out_dir / "summary.json")
    _say("runs", len(result.runs), out)
    _say("trigger_cycles", ",".join("none" if c is None else str(c) for c in result.trigger_cycles), out)
    _say("reference_cycle", result.reference_cycle, out)
    _say("score_mean", f"{result.score_mean:.6f}", out)
    _say("score_std", f"{result.score_std:.6f}", out)
    _say("trigger_mean", f"{result.trigger_mean:.3f}", out)
    _say("trigger_std", f"{result.trigger_std:.3f}", out)
    return 0


def _describe(c: cbr.Case) -> str:
    problem = " ".join(f"({q.entity},{q.attribute},{q.value:g},{q.cycle})" for q in c.problem)
    return f"#{c.id} [{c.provenance.value}] {problem} -> ({c.solution.state.value},{c.solution.recommendation})"


def cmd_list(args: argparse.Namespace, out: TextIO) -> int:
    cases = persistence.load_cases(args.base)
    for c in cases:
        print(_describe(c), file=out)
    _say("cases", len(cases), out)
    return 0


def cmd_show(args: argparse.Namespace, out: TextIO) -> int:
    for c in persistence.load_cases(args.base):
        if c.id == args.id:
            print(persistence.dumps_case(c), file=out)
            return 0
    raise UsageError(f"no case with id {args.id} in {args.base}")


def _prompt_verdict(p: cbr.PendingCase, ask: Callable[[str], str], out: TextIO) -> cbr.Verdict:
    print(_describe(p.case), file=out)
    while True:
        token = ask("accept / edit / reject [a/e/r]? ").strip().lower()
        if token in ("a", "accept"):
            return cbr.Accept()
        if token in ("r", "reject"):
            return cbr.Reject()
        if token in ("e", "edit"):
            while True:
                state = ask("state [O/N]? ").strip().upper()
                if state in ("O", "N"):
                    break
                print("state must be O or N", file=out)
            while True:
                rec = ask("recommendation? ").strip()
                if rec:
                    return cbr.Edit(Solution(State(state), rec))
                print("recommendation must be non-empty", file=out)
        print(f"invalid verdict {token!r}", file=out)


def cmd_review(args: argparse.Namespace, out: TextIO, ask: Callable[[str], str] = input) -> int:
    base_path = Path(args.base)
    queue_path = persistence.pending_path(base_path)
    base = persistence.load_casebase(base_path) if base_path.exists() else cbr.CaseBase()
    queue = persistence.load_pending(queue_path)
    todo = [p for p in queue if p.status is cbr.PendingStatus.PENDING]
    if not todo:
        print("nothing to review", file=out)
        return 0
    counts = {"accepted": 0, "edited": 0, "rejected": 0}
    for p in todo:
        if args.accept_all:
            verdict: cbr.Verdict = cbr.Accept()
        elif args.reject_all:
            verdict = cbr.Reject()
        else:
            verdict = _prompt_verdict(p, ask, out)
        reviewed = cbr.review(p, verdict)
        counts[p.status.value] += 1
        retained = p.case.id is not None and p.case.id in base
        if retained:
            base.amend(p.case.id, reviewed)
        elif reviewed is not None:
            base.append(reviewed if reviewed.id is None else dataclasses.replace(reviewed, id=None))
    persistence.save_casebase(base, base_path)
    persistence.save_pending([p for p in queue if p.status is cbr.PendingStatus.PENDING], queue_path)
    for k, v in counts.items():
        _say(k, v, out)
    _say("cases", len(base), out)
    return 0


def cmd_distance(args: argparse.Namespace, out: TextIO) -> int:
    target = persistence.load_problem(args.target)
    source = persistence.load_problem(args.source)
    taxonomy: Taxonomy = DEFAULT_TAXONOMY
    if args.config:
        taxonomy = persistence.load_config(args.config).taxonomy
    enc = cbr.CategoricalEncoding(cbr.EncodingPolicy(args.encoding), args.sigma, taxonomy)
    try:
        terms = cbr.distance_breakdown(target, source, enc)
    except cbr.CBRError as exc:
        raise UsageError(str(exc)) from None
    for i, j, term in terms:
        print(f"pair target[{i}] source[{j}]: {term:.4f}", file=out)
    _say("distance", f"{cbr.distance(target, source, enc):.4f}", out)
    return 0


def cmd_plot_data(args: argparse.Namespace, out: TextIO) -> int:
    from .plotdata import write_plot_data

    written = write_plot_data(Path(args.run), _out_dir(args.out), args.config)
    if not written:
        raise UsageError(f"no trace.csv, run_*.csv or summary.json under {args.run}")
    for p in written:
        _say("wrote", p, out)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orsim", description="Operating-room risk simulator with case-based reasoning")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    config_help = f"config file (default: ${persistence.CONFIG_ENV}, else the shipped demo config)"

    p = sub.add_parser("simulate", help="run one simulation")
    p.add_argument("--config", help=config_help)
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--base", help="start from this case base instead of the configured one")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("batch", help="run seeded replicate simulations")
    p.add_argument("--config", help=config_help)
    p.add_argument("--runs", type=int, default=25)
    p.add_argument("--base-seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("casebase-list", help="list retained cases")
    p.add_argument("--base", required=True)
    p.set_defaults(func=cmd_list)

    p = sub.add_parser("casebase-show", help="print one case record")
    p.add_argument("--base", required=True)
    p.add_argument("--id", type=int, required=True)
    p.set_defaults(func=cmd_show)

    p = sub.add_parser("casebase-review", help="expert review of the pending queue")
    p.add_argument("--base", required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--accept-all", action="store_true")
    g.add_argument("--reject-all", action="store_true")
    p.set_defaults(func=cmd_review)

    p = sub.add_parser("distance", help="distance between two case problems, with the pair breakdown")
    p.add_argument("--target", required=True)
    p.add_argument("--source", required=True)
    p.add_argument("--encoding", choices=[e.value for e in cbr.EncodingPolicy], default="strict")
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--config", help="take the taxonomy from this config")
    p.set_defaults(func=cmd_distance)

    p = sub.add_parser("plot-data", help="tidy CSV series for plotting a run or batch directory")
    p.add_argument("--run", required=True, help="directory written by simulate or batch")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="config used for the run (for attribute scales)")
    p.set_defaults(func=cmd_plot_data)
    return parser


def main(argv: Sequence[str] | None = None, out: TextIO | None = None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args, out)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"orsim: config error: {e}", file=sys.stderr)
        return 2
    except (UsageError, persistence.RecordError, cbr.CBRError, ValueError) as exc:
        print(f"orsim: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"orsim: I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
