"""Brute-force checks of the matrix properties on finite windows.

Every check works on [0, N).  A block is represented by the pair
(members, undecided) of its restriction to the window; an intersection of
blocks is then bracketed by ``definite`` (members of all) and ``possible``
(members-or-undecided of all).  Leftover candidates are refined one at a
time against an instance budget.  Undecided values never count as
evidence either way: an instance whose outcome depends on them is
reported as undecided.
"""
from __future__ import annotations

import weakref
from dataclasses import dataclass, field
from itertools import combinations, product
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from . import codec
from ._deep import deep
from .codec import StageId, UsageError
from .matrix import BlockRef, Fuel, MatrixState, restrict, stage_records, try_contains, try_owner

DEFAULT_BOUNDS = (10, 100, 1000)


@dataclass
class Report:
    property: str
    instances: int = 0
    violations: List[dict] = field(default_factory=list)
    undecided_instances: int = 0
    witnesses_found: Optional[int] = None
    details: Dict[str, object] = field(default_factory=dict)
    parts: List["Report"] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def witness_rate(self) -> Optional[float]:
        if self.witnesses_found is None or self.instances == 0:
            return None
        return self.witnesses_found / self.instances

    def absorb(self, other: "Report") -> None:
        self.instances += other.instances
        self.violations.extend(other.violations)
        self.undecided_instances += other.undecided_instances
        if other.witnesses_found is not None:
            self.witnesses_found = (self.witnesses_found or 0) + other.witnesses_found

    def to_json(self) -> dict:
        out = {
            "property": self.property,
            "instances": self.instances,
            "violations": self.violations,
            "undecided_instances": self.undecided_instances,
            "pass": self.passed,
        }
        if self.witnesses_found is not None:
            out["witnesses_found"] = self.witnesses_found
        if self.details:
            out["details"] = self.details
        if self.parts:
            out["parts"] = [p.to_json() for p in self.parts]
        return out


# -- window restrictions ------------------------------------------------------

Restriction = Tuple[Set[int], Set[int]]

# per state: (ref, N) -> [members, undecided]; refined in place as verdicts land
_cache: "weakref.WeakKeyDictionary[MatrixState, Dict[tuple, list]]" = weakref.WeakKeyDictionary()


def _norm_ref(state: MatrixState, ref) -> BlockRef:
    stage = state._check_stage(ref[0])
    if not isinstance(ref[1], int) or ref[1] < 0:
        raise UsageError(f"bad block index in {ref!r}")
    return BlockRef(stage, ref[1])


def _restriction(state: MatrixState, ref: BlockRef, N: int, fuel) -> list:
    table = _cache.setdefault(state, {})
    key = (ref, N)
    budget = float("inf") if fuel is None else fuel
    entry = table.get(key)
    if entry is None:
        members, undecided = restrict(state, ref, N, fuel=fuel)
        entry = table[key] = [members, undecided, budget]
    elif entry[1] and budget > entry[2]:
        # a bigger budget than last time: retry what is still open
        f = Fuel(fuel)
        for v in sorted(entry[1]):
            got = try_contains(state, ref, v, f)
            if got is None:
                continue
            entry[1].discard(v)
            if got:
                entry[0].add(v)
        entry[2] = budget
    return entry


def _refine(state: MatrixState, entries: Dict[BlockRef, list], v: int, fuel: Fuel) -> Optional[bool]:
    """Decide whether v lies in every block; None once the budget is gone."""
    verdict = True
    for ref, entry in entries.items():
        members, undecided = entry[0], entry[1]
        if v in members:
            continue
        if v not in undecided:
            return False
        got = try_contains(state, ref, v, fuel)
        if got is None:
            verdict = None
            break
        undecided.discard(v)
        if got:
            members.add(v)
        else:
            return False
    return verdict


class _Intersection:
    """Bracketing of a block intersection inside one window."""

    def __init__(self, state: MatrixState, refs: Sequence[BlockRef], N: int, fuel):
        self.state = state
        self.entries = {ref: _restriction(state, ref, N, fuel) for ref in refs}
        ordered = sorted(self.entries.values(), key=lambda e: len(e[0]) + len(e[1]))
        possible = set(ordered[0][0] | ordered[0][1])
        definite = set(ordered[0][0])
        for members, undecided, _ in ordered[1:]:
            possible &= members | undecided
            definite &= members
        self.definite = definite
        self.open = possible - definite  # candidates still to be decided

    def settle(self, v: int, fuel: Fuel) -> Optional[bool]:
        got = _refine(self.state, self.entries, v, fuel)
        if got is not None:
            self.open.discard(v)
            if got:
                self.definite.add(v)
        return got


def _check_window_monotone(values: Set[int], N: int) -> None:
    # a count over a prefix window can only grow with the window
    last = 0
    for cut in (N // 4, N // 2, N):
        c = sum(1 for v in values if v < cut)
        assert c >= last, "window monotonicity broken"
        last = c


# -- properties ---------------------------------------------------------------


def _budget(fuel) -> Fuel:
    return Fuel(fuel)


def _natural_arg(name: str, value) -> int:
    if not isinstance(value, int) or value < 0:
        raise UsageError(f"{name} must be a natural number, got {value!r}")
    return value


@deep
def check_partition(state: MatrixState, stage, N: int, fuel=None) -> Report:
    """Every v < N lies in exactly one block of the partition at ``stage``.

    Budget is spread over the window: a first pass gives each value an equal
    share of what is left, a second pass spends the remainder on values the
    first pass left open.
    """
    stage = state._check_stage(stage)
    _natural_arg("N", N)
    report = Report("partition", instances=N, details={"row": stage.row, "col": stage.col, "window": N})
    if stage.row == 0:
        # closed form: the m-th coordinate names the block
        return report
    total = Fuel(fuel)
    open_values: List[int] = []
    for pass_no in (0, 1):
        todo = list(range(N)) if pass_no == 0 else open_values
        open_values = []
        for idx, v in enumerate(todo):
            left = total.limit - total.spent
            share = left / (len(todo) - idx) if pass_no == 0 else left
            f = Fuel(share)
            o = try_owner(state, stage, v, f)
            total.spent += f.spent
            if o is None:
                open_values.append(v)
    report.undecided_instances = len(open_values)
    if open_values:
        report.details["undecided"] = open_values[:50]

    seen: Dict[int, int] = {}
    for index, steps in stage_records(state, stage):
        zs = {s.z for s in steps}
        for s in steps:
            for v in (s.x, s.y):
                prev = seen.setdefault(v, index)
                if prev != index:
                    report.violations.append({"witness": [v, prev, index], "window": N, "kind": "double"})
            if s.x in zs or s.y in zs:
                report.violations.append({"witness": [s.x, s.y, index], "window": N, "kind": "picked-z"})
    return report


def _chain_refs(m: int, chain: Sequence[int]) -> List[BlockRef]:
    return [BlockRef(StageId(row, m), i) for row, i in enumerate(chain)]


def _witness_bounds(inter: _Intersection, bounds: Sequence[int], N: int, fuel: Fuel) -> Tuple[List[int], List[int], List[int]]:
    """Split bounds into (met, missing, undecided) given the window."""
    met, missing, undecided = [], [], []
    top = max(inter.definite, default=-1)
    for B in sorted(set(bounds), reverse=True):
        if B + 1 >= N:
            undecided.append(B)
            continue
        if top > B:
            met.append(B)
            continue
        for v in sorted(u for u in inter.open if u > B):
            got = inter.settle(v, fuel)
            if got is None:
                break
            if got:
                top = max(top, v)
                break
        if top > B:
            met.append(B)
        elif any(u > B for u in inter.open):
            undecided.append(B)
        else:
            missing.append(B)
    return sorted(met), sorted(missing), sorted(undecided)


def _large_instance(state: MatrixState, prop: str, refs: List[BlockRef], N: int, bounds, fuel, label) -> Report:
    report = Report(prop, instances=1)
    inter = _Intersection(state, refs, N, fuel)
    met, missing, undecided = _witness_bounds(inter, bounds, N, _budget(fuel))
    report.details = {"instance": label, "met": met, "missing": missing, "undecided": undecided}
    if missing:
        report.violations.append({"witness": {"instance": label, "bounds": missing}, "window": N})
    elif undecided:
        report.undecided_instances = 1
    return report


@deep
def check_column_agreement(state: MatrixState, m: int, chain: Sequence[int], N: int, fuel=None,
                           witness_bounds: Sequence[int] = DEFAULT_BOUNDS) -> Report:
    """The chain intersection over rows 0..k-1 of column m has members above each bound."""
    if not 0 <= m < state.n:
        raise UsageError(f"column {m} out of range for n={state.n}")
    if len(chain) < 1:
        raise UsageError("chain must name at least one block")
    _natural_arg("N", N)
    refs = [_norm_ref(state, r) for r in _chain_refs(m, chain)]
    label = {"column": m, "chain": list(chain)}
    return _large_instance(state, "agreement", refs, N, witness_bounds, fuel, label)


def _check_distinct(refs: Sequence[BlockRef]) -> None:
    positions = [tuple(r.stage) for r in refs]
    if len(set(positions)) != len(positions):
        raise UsageError("blocks must come from pairwise distinct partitions")


@deep
def check_optimality(state: MatrixState, refs: Sequence, N: int, fuel=None) -> Report:
    """At most one common member of n blocks from distinct partitions."""
    refs = [_norm_ref(state, r) for r in refs]
    if len(refs) != state.n:
        raise UsageError(f"need exactly n={state.n} blocks, got {len(refs)}")
    _check_distinct(refs)
    if len({r.stage.col for r in refs}) < 2:
        raise UsageError("blocks must span at least two columns")
    _natural_arg("N", N)
    label = [[r.stage.row, r.stage.col, r.index] for r in refs]
    report = Report("optimality", instances=1, witnesses_found=0)
    inter = _Intersection(state, refs, N, fuel)
    budget = _budget(fuel)
    for v in sorted(inter.open):
        if len(inter.definite) >= 2:
            break
        if inter.settle(v, budget) is None:
            break
    found = sorted(inter.definite)
    _check_window_monotone(inter.definite, N)
    report.details = {"instance": label, "members": found[:3], "open": len(inter.open)}
    if len(found) >= 2:
        report.violations.append({"witness": {"instance": label, "members": found[:2]}, "window": N})
    elif inter.open:
        report.undecided_instances = 1
    if found:
        report.witnesses_found = 1
    return report


@deep
def check_subtuple_infinite(state: MatrixState, refs: Sequence, N: int,
                            witness_bounds: Sequence[int] = DEFAULT_BOUNDS, fuel=None) -> Report:
    """Fewer than n blocks from distinct partitions meet in an infinite set."""
    refs = [_norm_ref(state, r) for r in refs]
    if not 1 <= len(refs) < state.n:
        raise UsageError(f"need between 1 and n-1={state.n - 1} blocks, got {len(refs)}")
    _check_distinct(refs)
    _natural_arg("N", N)
    label = [[r.stage.row, r.stage.col, r.index] for r in refs]
    return _large_instance(state, "subtuple", refs, N, witness_bounds, fuel, label)


# -- exhaustive sweep -----------------------------------------------------------


def optimality_instances(n: int, max_row: int, max_index: int) -> Iterable[List[BlockRef]]:
    positions = [StageId(k, m) for k in range(max_row) for m in range(n)]
    for combo in combinations(positions, n):
        if len({p.col for p in combo}) < 2:
            continue
        for idx in product(range(max_index), repeat=n):
            yield [BlockRef(p, i) for p, i in zip(combo, idx)]


def chain_instances(n: int, max_row: int, max_index: int) -> Iterable[Tuple[int, Tuple[int, ...]]]:
    for m in range(n):
        for k in range(1, max_row + 1):
            for chain in product(range(max_index), repeat=k):
                yield m, chain


def subtuple_instances(n: int, max_row: int, max_index: int) -> Iterable[List[BlockRef]]:
    positions = [StageId(k, m) for k in range(max_row) for m in range(n)]
    for j in range(2, n):
        for combo in combinations(positions, j):
            for idx in product(range(max_index), repeat=j):
                yield [BlockRef(p, i) for p, i in zip(combo, idx)]


@deep
def sweep(state: MatrixState, max_row: int, max_index: int, N: int, fuel=None,
          witness_bounds: Sequence[int] = DEFAULT_BOUNDS,
          properties: Sequence[str] = ("optimality", "agreement", "subtuple")) -> Report:
    """All instances with rows < max_row and block indices < max_index."""
    for name, val in (("max_row", max_row), ("max_index", max_index), ("N", N)):
        _natural_arg(name, val)
    unknown = set(properties) - {"optimality", "agreement", "subtuple"}
    if unknown:
        raise UsageError(f"unknown properties {sorted(unknown)}")
    total = Report("sweep", details={"n": state.n, "max_row": max_row, "max_index": max_index, "window": N})
    if "optimality" in properties:
        part = Report("optimality", witnesses_found=0)
        for refs in optimality_instances(state.n, max_row, max_index):
            r = check_optimality(state, refs, N, fuel=fuel)
            part.absorb(r)
        total.parts.append(part)
    if "agreement" in properties:
        part = Report("agreement")
        for m, chain in chain_instances(state.n, max_row, max_index):
            part.absorb(check_column_agreement(state, m, chain, N, fuel=fuel, witness_bounds=witness_bounds))
        total.parts.append(part)
    if "subtuple" in properties:
        part = Report("subtuple")
        for refs in subtuple_instances(state.n, max_row, max_index):
            part.absorb(check_subtuple_infinite(state, refs, N, witness_bounds=witness_bounds, fuel=fuel))
        total.parts.append(part)
    for part in total.parts:
        total.absorb(part)
    total.witnesses_found = None
    return total
