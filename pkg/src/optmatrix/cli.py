"""Command-line driver.

Exit codes: 0 all checks pass, 1 a property is violated, 2 inconclusive
(some budget ran out, nothing violated), 64 usage error.
"""
from __future__ import annotations

import argparse
import contextlib
import fcntl
import os
import sys
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import List, Optional, Sequence

from . import codec, matrix, oracle, treedec
from .codec import DomainError, StageId, UsageError
from .matrix import BlockRef, MatrixState, canonical_json

EXIT_OK, EXIT_VIOLATION, EXIT_INCONCLUSIVE, EXIT_USAGE = 0, 1, 2, 64
STORE_ENV = "OPTMATRIX_STORE_DIR"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def natural(text: str) -> int:
    """Natural number, scientific notation allowed (``1e6``)."""
    try:
        d = Decimal(text)
    except InvalidOperation:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not d.is_finite() or d != d.to_integral_value() or d < 0:
        raise argparse.ArgumentTypeError(f"not a natural number: {text!r}")
    return int(d)


def naturals(text: str) -> List[int]:
    return [natural(t) for t in text.split(",") if t.strip()]


def stage_arg(text: str) -> StageId:
    parts = naturals(text)
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"stage is ROW,COL, got {text!r}")
    return StageId(*parts)


def refs_arg(text: str) -> List[BlockRef]:
    out = []
    for item in text.split(","):
        bits = [natural(b) for b in item.split(":")]
        if len(bits) != 3:
            raise argparse.ArgumentTypeError(f"block is ROW:COL:INDEX, got {item!r}")
        out.append(BlockRef.of(*bits))
    return out


def nodes_arg(text: str) -> List[tuple]:
    return [tuple(naturals(part)) for part in text.split(";")]


# -- store handling --------------------------------------------------------------


def _store_path(args) -> Optional[Path]:
    if args.store:
        return Path(args.store)
    base = os.environ.get(STORE_ENV)
    if base:
        return Path(base) / f"optmatrix-n{args.n}.json"
    return None


@contextlib.contextmanager
def _open_state(args):
    """Load (or create) the store under an advisory lock, save on success."""
    path = _store_path(args)
    if path is None:
        yield MatrixState(args.n)
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(str(path) + ".lock", "w") as lock:
        fcntl.flock(lock, fcntl.LOCK_EX)
        try:
            if path.exists():
                state = MatrixState.load(path)
                if state.n != args.n:
                    raise UsageError(f"store {path} holds n={state.n}, not n={args.n}")
            else:
                state = MatrixState(args.n)
            yield state
            state.save(path)
        finally:
            fcntl.flock(lock, fcntl.LOCK_UN)


def _emit(args, obj) -> None:
    text = canonical_json(obj)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _report_exit(rep: oracle.Report) -> int:
    if rep.violations:
        return EXIT_VIOLATION
    if rep.undecided_instances:
        return EXIT_INCONCLUSIVE
    return EXIT_OK


# -- subcommands -----------------------------------------------------------------


def cmd_gen(args) -> int:
    with _open_state(args) as state:
        stages = []
        undecided = 0
        for k in range(args.rows):
            for m in range(args.n):
                owners = _owners(state, StageId(k, m), args.window, args.fuel)
                undecided += owners.count(None)
                stages.append({"row": k, "col": m, "owners": owners})
    _emit(args, {"n": args.n, "rows": args.rows, "window": args.window, "stages": stages, "undecided": undecided})
    return EXIT_INCONCLUSIVE if undecided else EXIT_OK


def _owners(state: MatrixState, stage: StageId, window: int, fuel) -> List[Optional[int]]:
    if stage.row == 0:
        return [codec.coordinate(v, stage.col, state.n) for v in range(window)]
    rep = oracle.check_partition(state, stage, window, fuel=fuel)
    if rep.violations:
        raise AssertionError(f"partition violated at {tuple(stage)}: {rep.violations[0]}")
    out = []
    for v in range(window):
        got = matrix.block_of(state, stage, v, fuel=0)
        out.append(got.block if got.decided else None)
    return out


def cmd_decide(args) -> int:
    with _open_state(args) as state:
        if args.block is None:
            verdict = matrix.block_of(state, args.stage, args.value, fuel=args.fuel)
        else:
            verdict = matrix.membership(state, BlockRef(args.stage, args.block), args.value, fuel=args.fuel)
    _emit(args, {"stage": list(args.stage), "value": args.value, "block": args.block, "verdict": verdict.to_json()})
    return EXIT_OK if verdict.decided else EXIT_INCONCLUSIVE


def cmd_verify(args) -> int:
    with _open_state(args) as state:
        what = args.property
        if what == "partition":
            rep = oracle.check_partition(state, args.stage, args.window, fuel=args.fuel)
        elif what == "agreement":
            rep = oracle.check_column_agreement(state, args.column, args.chain, args.window, fuel=args.fuel,
                                                witness_bounds=args.bounds)
        elif what == "optimality":
            rep = oracle.check_optimality(state, args.refs, args.window, fuel=args.fuel)
        elif what == "subtuple":
            rep = oracle.check_subtuple_infinite(state, args.refs, args.window, witness_bounds=args.bounds,
                                                 fuel=args.fuel)
        else:
            rep = oracle.sweep(state, args.max_row, args.max_index, args.window, fuel=args.fuel,
                               witness_bounds=args.bounds)
    _emit(args, rep.to_json())
    return _report_exit(rep)


def cmd_tree(args) -> int:
    with _open_state(args) as state:
        frag = treedec.TreeFragment.over(state, args.depth, args.branch, fuel=args.fuel)
        what = args.action
        if what == "decompose":
            _emit(args, treedec.decompose(frag))
            return EXIT_OK
        if what == "simple":
            labels = [list(frag.simple_split(node, args.column)) for node in args.nodes]
            _emit(args, {"column": args.column, "nodes": [list(x) for x in args.nodes], "labels": labels})
            return EXIT_OK
        if what == "check":
            parts = [treedec.check_equivalence(frag), treedec.check_niceness(frag),
                     treedec.check_product(frag), treedec.check_claims(frag)]
            rep = oracle.Report("tree", parts=parts)
            for p in parts:
                rep.absorb(p)
        elif what == "claim":
            members, undecided = frag.claim_witnesses(args.anchors, args.targets, args.columns)
            rep = oracle.Report("claim", instances=1,
                                details={"members": [list(x) for x in members], "undecided": len(undecided)})
            if not members:
                if undecided:
                    rep.undecided_instances = 1
                else:
                    rep.violations.append({"witness": {"anchors": [list(a) for a in args.anchors]}})
        else:
            rep = treedec.rigidity_probe(frag, args.s, args.q, args.column)
    _emit(args, rep.to_json())
    return _report_exit(rep)


def cmd_export(args) -> int:
    with _open_state(args) as state:
        _emit(args, state.to_json())
    return EXIT_OK


# -- grammar ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--n", type=int, required=True, help="arity n > 1")
    common.add_argument("--fuel", type=natural, default=None, help="work budget (default unlimited)")
    common.add_argument("--store", help=f"memo store file (default: ${STORE_ENV}/optmatrix-n<N>.json)")
    common.add_argument("--out", help="write the JSON result here instead of stdout")

    p = _Parser(prog="optmatrix", description="Build and check n-optimal matrices of partitions.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", parents=[common], help="block index of every value in a window")
    g.add_argument("--rows", type=natural, default=1)
    g.add_argument("--window", type=natural, default=100)
    g.set_defaults(func=cmd_gen)

    d = sub.add_parser("decide", parents=[common], help="one membership query")
    d.add_argument("--stage", type=stage_arg, required=True)
    d.add_argument("--value", type=natural, required=True)
    d.add_argument("--block", type=natural, default=None)
    d.set_defaults(func=cmd_decide)

    v = sub.add_parser("verify", help="brute-force property checks")
    vs = v.add_subparsers(dest="property", required=True, parser_class=_Parser)
    window = _Parser(add_help=False)
    window.add_argument("--window", type=natural, default=10_000)
    bounds = _Parser(add_help=False)
    bounds.add_argument("--bounds", type=naturals, default=list(oracle.DEFAULT_BOUNDS))
    x = vs.add_parser("partition", parents=[common, window])
    x.add_argument("--stage", type=stage_arg, required=True)
    x = vs.add_parser("agreement", parents=[common, window, bounds])
    x.add_argument("--column", type=natural, required=True)
    x.add_argument("--chain", type=naturals, required=True)
    x = vs.add_parser("optimality", parents=[common, window])
    x.add_argument("--refs", type=refs_arg, required=True)
    x = vs.add_parser("subtuple", parents=[common, window, bounds])
    x.add_argument("--refs", type=refs_arg, required=True)
    x = vs.add_parser("sweep", parents=[common, window, bounds])
    x.add_argument("--max-row", type=natural, required=True)
    x.add_argument("--max-index", type=natural, required=True)
    v.set_defaults(func=cmd_verify)

    t = sub.add_parser("tree", help="finite tree decomposition")
    ts = t.add_subparsers(dest="action", required=True, parser_class=_Parser)
    frag = _Parser(add_help=False)
    frag.add_argument("--depth", type=natural, default=2)
    frag.add_argument("--branch", type=natural, default=4)
    ts.add_parser("decompose", parents=[common, frag])
    ts.add_parser("check", parents=[common, frag])
    x = ts.add_parser("claim", parents=[common, frag])
    x.add_argument("--anchors", type=nodes_arg, required=True, help="nodes as 0,1;2,3")
    x.add_argument("--targets", type=nodes_arg, required=True)
    x.add_argument("--columns", type=naturals, required=True)
    x = ts.add_parser("probe", parents=[common, frag])
    x.add_argument("--s", type=lambda s: tuple(naturals(s)), required=True)
    x.add_argument("--q", type=lambda s: tuple(naturals(s)), required=True)
    x.add_argument("--column", type=natural, required=True)
    x = ts.add_parser("simple", parents=[common, frag])
    x.add_argument("--nodes", type=nodes_arg, required=True)
    x.add_argument("--column", type=natural, required=True)
    t.set_defaults(func=cmd_tree)

    e = sub.add_parser("export", parents=[common], help="dump the memo store")
    e.set_defaults(func=cmd_export)
    return p


def run_command(argv: Sequence[str]) -> int:
    try:
        args = build_parser().parse_args(list(argv))
        if args.n < 2:
            raise UsageError(f"n must be > 1, got {args.n}")
        return args.func(args)
    except (UsageError, DomainError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main(argv: Optional[Sequence[str]] = None) -> int:
    return run_command(sys.argv[1:] if argv is None else argv)
