"""Command-line harness: materialise, update, generate, decompose, check."""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .core import SYMBOLS, DatalogError, dump_facts, format_rule, parse_facts, parse_program
from .decomp import (MissingStatistics, RelationStats, SearchSpaceExceeded, check_decomposition,
                     decompose, estimate_cost, is_complex, width)
from .dred import MODES, InvariantViolation, MaterialisationState, UpdateRequest, dred_update, materialise
from .generators import CollabParams, ExpParams, exp_program_text, gen_collab, gen_exp, PC_RULE
from .seminaive import RoundStats, mat

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INVARIANT = 0, 1, 2, 3


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read(path) -> str:
    if path is None:
        raise InputError("missing required file argument")
    try:
        return Path(path).read_text()
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror}") from None


def _load(args):
    program = parse_program(_read(args.program))
    facts = parse_facts(_read(args.facts), arities=program.arities()) if args.facts else set()
    return program, facts


def _emit(lines: dict, args, out=None):
    out = out or sys.stdout
    for k, v in lines.items():
        out.write(f"{k}={v}\n")
    if args.stats:
        Path(args.stats).write_text(json.dumps(lines, indent=2, sort_keys=True) + "\n")


def _assignment_lines(state: MaterialisationState) -> dict:
    return {f"rule_{rid}": mod for rid, mod in sorted(state.assignment.items())}


def cmd_mat(args) -> int:
    program, facts = _load(args)
    stats = RoundStats()
    t = time.perf_counter()
    state = materialise(program, facts, args.mode, stats=stats)
    elapsed = time.perf_counter() - t
    rep = state.last_report
    lines = {"mode": args.mode, "facts_explicit": len(facts), "facts_total": len(state.store),
             "facts_derived": len(state.store) - len(facts), "rounds": stats.rounds,
             "substitutions_considered": stats.substitutions_considered,
             "time_total": f"{elapsed:.6f}"}
    lines.update({f"time_{k}": f"{v:.6f}" for k, v in rep.timings.items()})
    lines.update(_assignment_lines(state))
    if args.out:
        Path(args.out).write_text(dump_facts(state.facts))
    _emit(lines, args)
    return EXIT_OK


def cmd_update(args) -> int:
    program, facts = _load(args)
    add = parse_facts(_read(args.add), arities=program.arities()) if args.add else set()
    delete = parse_facts(_read(args.delete), arities=program.arities()) if args.delete else set()
    state = materialise(program, facts, args.mode)
    before = len(state.store)
    stats = RoundStats()
    dred_update(state, UpdateRequest(add=add, delete=delete), stats)
    rep = state.last_report
    lines = {"mode": args.mode, "facts_before": before, "facts_total": len(state.store),
             "overdeleted": rep.overdeleted, "rederived": rep.rederived, "added": rep.added,
             "rounds": rep.rounds, "substitutions_considered": rep.substitutions_considered}
    lines.update({f"time_{k}": f"{v:.6f}" for k, v in rep.timings.items()})
    lines.update(_assignment_lines(state))
    if args.out:
        Path(args.out).write_text(dump_facts(state.facts))
    _emit(lines, args)
    return EXIT_OK


def cmd_gen(args) -> int:
    if args.kind == "collab":
        try:
            params = CollabParams(args.n, args.k)
        except ValueError as e:
            raise InputError(str(e)) from None
        program, facts = gen_collab(params)
        text = PC_RULE
    else:
        try:
            params = ExpParams(args.expressions, args.value_sets, args.depth, seed=args.seed,
                               domain=args.domain)
        except ValueError as e:
            raise InputError(str(e)) from None
        program, facts = gen_exp(params)
        text = exp_program_text()
    prefix = args.out_prefix or args.kind
    Path(prefix + ".dl").write_text(text)
    Path(prefix + ".facts").write_text(dump_facts(facts))
    _emit({"rules": len(program), "facts": len(facts),
           "program_file": prefix + ".dl", "facts_file": prefix + ".facts"}, args)
    return EXIT_OK


def cmd_decompose(args) -> int:
    program, facts = _load(args)
    if facts:
        rstats = RelationStats.from_facts(facts, program)
    else:
        rstats = RelationStats.uniform(program.arities())
    try:
        for pred in program.arities():
            rstats.get(pred)
    except MissingStatistics as e:
        raise InputError(str(e)) from None
    rules = [program.rule(args.rule)] if args.rule else list(program)
    for r in rules:
        hd = decompose(r, rstats)
        ok = check_decomposition(r, hd)
        if not ok:
            raise InvariantViolation(f"rule {r.id}: {ok.message}")
        sys.stdout.write(f"rule {r.id} {format_rule(r)}\n")
        sys.stdout.write(f"complex={str(is_complex(r)).lower()} width={width(hd)} "
                         f"cost={estimate_cost(hd, rstats):.1f}\n")
        sys.stdout.write(hd.dump(SYMBOLS))
    return EXIT_OK


def cmd_check(args) -> int:
    program, facts = _load(args)
    state = materialise(program, facts, args.mode)
    reference = mat(program, facts).facts()
    problems = state.check()
    same = state.facts == reference
    lines = {"mode": args.mode, "facts_total": len(state.store), "facts_reference": len(reference),
             "equal": str(same).lower(), "problems": len(problems)}
    _emit(lines, args)
    for p in problems:
        sys.stderr.write(p + "\n")
    if not same or problems:
        return EXIT_INVARIANT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--program", help="rule file")
    common.add_argument("--facts", help="explicit fact file")
    common.add_argument("--mode", choices=MODES, default="combined")
    common.add_argument("--out", help="write the resulting materialisation here")
    common.add_argument("--stats", metavar="FILE", help="also write the report as JSON")
    common.add_argument("--seed", type=int, default=0)

    parser = _Parser(prog="hdlog", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("mat", parents=[common], help="materialise a program")
    p.set_defaults(func=cmd_mat, need_program=True)

    p = sub.add_parser("update", parents=[common], help="materialise, then apply one DRed update")
    p.add_argument("--add", metavar="FILE")
    p.add_argument("--del", dest="delete", metavar="FILE")
    p.set_defaults(func=cmd_update, need_program=True)

    p = sub.add_parser("gen", parents=[common], help="write a benchmark program and facts")
    p.add_argument("kind", choices=("collab", "exp"))
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--expressions", type=int, default=30)
    p.add_argument("--value-sets", type=int, default=30)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--domain", type=int, default=50)
    p.add_argument("--out-prefix")
    p.set_defaults(func=cmd_gen, need_program=False)

    p = sub.add_parser("decompose", parents=[common], help="print the chosen decomposition per rule")
    p.add_argument("--rule", help="only this rule id")
    p.set_defaults(func=cmd_decompose, need_program=True)

    p = sub.add_parser("check", parents=[common], help="compare against recomputation from scratch")
    p.set_defaults(func=cmd_check, need_program=True)
    return parser


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.need_program and not args.program:
            parser.error(f"{args.command} needs --program")
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (InputError, DatalogError, OSError, SearchSpaceExceeded) as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_INPUT
    except KeyError as e:
        sys.stderr.write(f"error: unknown {e.args[0]}\n")
        return EXIT_INPUT
    except InvariantViolation as e:
        sys.stderr.write(f"invariant violated: {e}\n")
        return EXIT_INVARIANT


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
