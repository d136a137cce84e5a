"""Demand-driven construction of an n-optimal matrix of partitions.

Row 0 is closed form: block i of column m is the fiber of the m-th
coordinate of the tuple decoding over the value i.  Every later stage
(k, m) is built block by block; block i is the set of all x- and y-choices
of its transcript, with z-choices held back for later blocks.  Blocks are
only advanced as far as some query needs, and every query carries a fuel
budget so it always returns (possibly ``Undecided``).

Step rule for block i of stage (k, m), with e the union of blocks < i,
b(l) the column-m chain picked by the row selector and c(s) the
intersection named by index s = tau(l)::

    x_l = min b(l) - (e + picks + z's + d(picks))
    y_l = x_l                      if c(tau(l)) already meets the picks
          min c(tau(l)) - (e + z's + d(picks))     otherwise
    z_l = min b(l) - (e + picks + z's)

where d(p) is the union of all c(s) containing p.  Membership in d is
tested through "hit" keys: a block records, for each pick p, the key of
every c(s) with p in it, and a candidate u is in d(picks) exactly when one
of u's keys is recorded.

Decisions are final.  A value v is in block i once picked; it is out once
it is a z of block i, lies in d(picks of block i), or belongs to an
earlier block.  The construction never revisits either verdict.
"""
from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Set, Tuple

from . import codec
from ._deep import deep
from .codec import StageId, Triple, UsageError

STORE_FORMAT = "optmatrix-store"
STORE_VERSION = 1


class OutOfFuel(Exception):
    pass


class Fuel:
    """Work budget; one unit is one candidate probed by a scan."""

    __slots__ = ("limit", "spent")

    def __init__(self, limit: Optional[float] = None):
        if limit is not None and limit < 0:
            raise UsageError("fuel must be >= 0")
        self.limit = math.inf if limit is None else limit
        self.spent = 0

    def spend(self, units: int = 1) -> None:
        if self.spent + units > self.limit:
            raise OutOfFuel
        self.spent += units


@dataclass(frozen=True)
class Verdict:
    kind: str  # "in", "not_in" or "undecided"
    block: Optional[int] = None
    fuel_spent: int = 0

    @property
    def decided(self) -> bool:
        return self.kind != "undecided"

    def __bool__(self) -> bool:
        raise TypeError("a Verdict is three-valued; test .kind")

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.block is not None:
            out["block"] = self.block
        if self.kind == "undecided":
            out["fuel_spent"] = self.fuel_spent
        return out


def In(block: Optional[int] = None) -> Verdict:
    return Verdict("in", block)


NOT_IN = Verdict("not_in")


def Undecided(spent: int) -> Verdict:
    return Verdict("undecided", None, spent)


class BlockRef(NamedTuple):
    stage: StageId
    index: int

    @classmethod
    def of(cls, row: int, col: int, index: int) -> "BlockRef":
        return cls(StageId(row, col), index)


class Step(NamedTuple):
    x: int
    y: int
    z: int
    y_reused: bool


@dataclass
class Transcript:
    ref: BlockRef
    steps: List[Step]
    committed_bound: int

    def to_json(self) -> dict:
        return {
            "row": self.ref.stage.row,
            "col": self.ref.stage.col,
            "index": self.ref.index,
            "committed_bound": self.committed_bound,
            "steps": [[s.x, s.y, s.z, s.y_reused] for s in self.steps],
        }


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n"


# -- engine -----------------------------------------------------------------


@dataclass
class _Block:
    index: int
    steps: List[Step] = field(default_factory=list)
    picks: Set[int] = field(default_factory=set)
    zs: Set[int] = field(default_factory=set)
    hit: Set[tuple] = field(default_factory=set)
    xcur: Dict[tuple, int] = field(default_factory=dict)
    zcur: Dict[tuple, int] = field(default_factory=dict)


class _Stage:
    """Construction state of one partition P_{k,m} with k >= 1."""

    def __init__(self, state: "MatrixState", sid: StageId):
        self.state = state
        self.sid = sid
        self.k, self.m = sid
        n = state.n
        self.parts = codec.admissible_partitions(sid, n)
        # index subsets naming an n-1 fold intersection; colex order puts the
        # closed-form row-0 partitions first so cheap keys are tried first
        self.templates = [
            t
            for t in sorted(combinations(range(len(self.parts)), n - 1), key=lambda t: t[::-1])
            if any(self.parts[i].col != self.m for i in t)
        ]
        self.sigmas = codec.sigma_list(sid, n)
        self.blocks: List[_Block] = []
        self.owner: Dict[int, int] = {}
        self.neg: Dict[int, int] = {}  # v -> h: v lies in none of blocks < h
        self._sig: Dict[int, list] = {}

    # keys of the sets c(s) containing u

    def _part_owner(self, u: int, pi: int, fuel: Fuel) -> int:
        sig = self._sig.get(u)
        if sig is None:
            sig = self._sig[u] = [None] * len(self.parts)
        o = sig[pi]
        if o is None:
            o = sig[pi] = self.state.owner(self.parts[pi], u, fuel)
        return o

    def _key(self, u: int, t: Tuple[int, ...], fuel: Fuel) -> tuple:
        parts = self.parts
        return tuple((self._part_owner(u, pi, fuel), parts[pi].row, parts[pi].col) for pi in t)

    def keys(self, u: int, fuel: Fuel) -> List[tuple]:
        return [self._key(u, t, fuel) for t in self.templates]

    def d_excluded(self, hit: Set[tuple], u: int, fuel: Fuel, extra: Set[tuple] = frozenset()) -> bool:
        for t in self.templates:
            key = self._key(u, t, fuel)
            if key in hit or key in extra:
                return True
        return False

    # per-block verdicts

    def block(self, h: int) -> _Block:
        while len(self.blocks) <= h:
            self.blocks.append(_Block(len(self.blocks)))
        return self.blocks[h]

    def _status(self, h: int, v: int, fuel: Fuel) -> Optional[bool]:
        b = self.block(h)
        if v in b.picks:
            return True
        if v in b.zs:
            return False
        if self.d_excluded(b.hit, v, fuel):
            return False
        return None

    def _fate(self, h: int, v: int, fuel: Fuel) -> bool:
        """Whether v is in block h, given v is in no block below h."""
        while True:
            o = self.owner.get(v)
            if o is not None:
                return o == h
            s = self._status(h, v, fuel)
            if s is not None:
                return s
            self.advance(h, fuel)

    def in_earlier(self, v: int, h: int, fuel: Fuel) -> bool:
        o = self.owner.get(v)
        if o is not None:
            return o < h
        g = self.neg.get(v, 0)
        while g < h:
            if self._fate(g, v, fuel):
                return True
            g += 1
            self.neg[v] = g
        return False

    def contains(self, j: int, v: int, fuel: Fuel) -> bool:
        if self.in_earlier(v, j, fuel):
            return False
        if self._fate(j, v, fuel):
            return True
        self.neg[v] = max(self.neg.get(v, 0), j + 1)
        return False

    def owner_of(self, v: int, fuel: Fuel) -> int:
        o = self.owner.get(v)
        if o is not None:
            return o
        g = self.neg.get(v, 0)
        while not self._fate(g, v, fuel):
            g += 1
            self.neg[v] = g
        return g

    # candidate streams

    def _b_at(self, sel: Tuple[int, ...], pos: int, fuel: Fuel) -> Optional[int]:
        """Position ``pos`` of the row-0 fiber behind b(l), if it lies in b(l)."""
        fuel.spend()
        u = codec.fiber_list(self.state.n, ((self.m, sel[0]),))[pos]
        state, m = self.state, self.m
        for j in range(1, self.k):
            if not state.contains(StageId(j, m), sel[j], u, fuel):
                return None
        return u

    def _excluded(self, b: _Block, u: int, fuel: Fuel, extra: Set[tuple] = frozenset()) -> bool:
        # owned values are out: an owner other than b itself means b rejected u
        if u in self.owner or u in b.zs:
            return True
        if self.d_excluded(b.hit, u, fuel, extra):
            return True
        return self.in_earlier(u, b.index, fuel)

    def _scan_x(self, b: _Block, sel: Tuple[int, ...], fuel: Fuel) -> int:
        pos = b.xcur.get(sel, 0)
        while True:
            u = self._b_at(sel, pos, fuel)
            if u is not None and not self._excluded(b, u, fuel):
                return u
            pos += 1
            b.xcur[sel] = pos  # everything before pos is out for good

    def _scan_z(self, b: _Block, sel: Tuple[int, ...], x: int, y: int, fuel: Fuel) -> int:
        pos = b.zcur.get(sel, 0)
        permanent = True
        h = b.index
        while True:
            u = self._b_at(sel, pos, fuel)
            if u is not None:
                if u == x or u == y:
                    permanent = False
                else:
                    o = self.owner.get(u)
                    out = (o is not None and o <= h) or u in b.zs
                    if not out and not self.in_earlier(u, h, fuel):
                        return u
            pos += 1
            if permanent:
                b.zcur[sel] = pos

    def _scan_y(self, b: _Block, sigma: Sequence[Triple], kx: Set[tuple], fuel: Fuel) -> int:
        for u in self.state.c_iter(sigma, fuel):
            if not self._excluded(b, u, fuel, kx):
                return u
        raise AssertionError("unreachable: c(sigma) is infinite")

    # one step of the three-fold choice

    def advance(self, h: int, fuel: Fuel) -> Step:
        b = self.block(h)
        ell = len(b.steps)
        sel = codec.row_selector(self.k, ell)

        x = self._scan_x(b, sel, fuel)
        kx = set(self.keys(x, fuel))

        sigma = self.sigmas.get(ell)
        if sigma in b.hit or sigma in kx:
            y, reused, ky = x, True, kx
        else:
            y = self._scan_y(b, sigma, kx, fuel)
            reused = False
            ky = set(self.keys(y, fuel))

        z = self._scan_z(b, sel, x, y, fuel)
        return self._commit(b, Step(x, y, z, reused), kx | ky)

    def _commit(self, b: _Block, step: Step, keys: Set[tuple]) -> Step:
        for v in (step.x, step.y):
            prev = self.owner.get(v)
            if prev is not None and prev != b.index:
                raise AssertionError(f"{v} claimed by blocks {prev} and {b.index} of {tuple(self.sid)}")
            self.owner[v] = b.index
            self.neg[v] = b.index
        b.picks.add(step.x)
        b.picks.add(step.y)
        b.zs.add(step.z)
        b.hit |= keys
        b.steps.append(step)
        return step

    def replay(self, h: int, step: Step, fuel: Fuel) -> None:
        b = self.block(h)
        keys = set(self.keys(step.x, fuel)) | set(self.keys(step.y, fuel))
        self._commit(b, step, keys)


class MatrixState:
    """Memo store plus construction engine for one arity n > 1.

    All mutation goes through ``lock``; public helpers in this module take it.
    """

    def __init__(self, n: int):
        if not isinstance(n, int) or n < 2:
            raise UsageError(f"n must be an integer > 1, got {n!r}")
        self.n = n
        self.lock = threading.RLock()
        self._stages: Dict[StageId, _Stage] = {}

    def _check_stage(self, stage) -> StageId:
        stage = StageId(*stage)
        if stage.row < 0 or not 0 <= stage.col < self.n:
            raise UsageError(f"stage {tuple(stage)} out of range for n={self.n}")
        return stage

    def stage(self, stage) -> _Stage:
        stage = self._check_stage(stage)
        if stage.row == 0:
            raise UsageError("row 0 is closed form and has no construction state")
        st = self._stages.get(stage)
        if st is None:
            st = self._stages[stage] = _Stage(self, stage)
        return st

    def owner(self, stage: StageId, v: int, fuel: Fuel) -> int:
        if stage.row == 0:
            return codec.coordinate(v, stage.col, self.n)
        return self.stage(stage).owner_of(v, fuel)

    def contains(self, stage: StageId, j: int, v: int, fuel: Fuel) -> bool:
        if stage.row == 0:
            return codec.coordinate(v, stage.col, self.n) == j
        return self.stage(stage).contains(j, v, fuel)

    def c_iter(self, triples: Sequence[Triple], fuel: Fuel) -> Iterator[int]:
        """Increasing members of the intersection named by ``triples``."""
        fixed = {}
        rest = []
        for j, p, q in triples:
            if p == 0:
                if fixed.get(q, j) != j:
                    return
                fixed[q] = j
            else:
                rest.append((StageId(p, q), j))
        for u in codec.fiber(self.n, fixed):
            fuel.spend()
            if all(self.contains(s, j, u, fuel) for s, j in rest):
                yield u

    def built_stages(self) -> List[StageId]:
        return sorted(self._stages)

    # persistence

    def to_json(self) -> dict:
        stages = []
        for sid in self.built_stages():
            st = self._stages[sid]
            blocks = [
                {"index": b.index, "steps": [[s.x, s.y, s.z, s.y_reused] for s in b.steps]}
                for b in st.blocks
                if b.steps
            ]
            if blocks:
                stages.append({"row": sid.row, "col": sid.col, "blocks": blocks})
        return {
            "format": STORE_FORMAT,
            "version": STORE_VERSION,
            "convention": codec.CONVENTION,
            "n": self.n,
            "stages": stages,
        }

    @classmethod
    def from_json(cls, data: dict) -> "MatrixState":
        if data.get("format") != STORE_FORMAT or data.get("version") != STORE_VERSION:
            raise UsageError("not a version-1 optmatrix store")
        if data.get("convention") != codec.CONVENTION:
            raise UsageError(f"store uses convention {data.get('convention')!r}")
        state = cls(int(data["n"]))
        _replay(state, data)
        return state

    def save(self, path) -> None:
        with self.lock:
            text = canonical_json(self.to_json())
        tmp = Path(str(path) + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        tmp.replace(path)

    @classmethod
    def load(cls, path) -> "MatrixState":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


@deep
def _replay(state: MatrixState, data: dict) -> None:
    # stages in row-major order so the owners a replayed key needs exist
    entries = sorted(data["stages"], key=lambda s: (s["row"], s["col"]))
    fuel = Fuel()
    for entry in entries:
        st = state.stage((entry["row"], entry["col"]))
        for blk in sorted(entry["blocks"], key=lambda b: b["index"]):
            for x, y, z, reused in blk["steps"]:
                st.replay(blk["index"], Step(x, y, z, bool(reused)), fuel)


# -- public queries ---------------------------------------------------------


def _run(state: MatrixState, fuel_limit, body) -> Verdict:
    fuel = Fuel(fuel_limit)
    with state.lock:
        try:
            return body(fuel)
        except OutOfFuel:
            return Undecided(fuel.spent)


@deep
def block_of(state: MatrixState, stage, x: int, fuel=None) -> Verdict:
    """Index of the block of P_stage containing x."""
    stage = state._check_stage(stage)
    _natural(x)
    return _run(state, fuel, lambda f: In(state.owner(stage, x, f)))


@deep
def membership(state: MatrixState, ref: BlockRef, x: int, fuel=None) -> Verdict:
    ref = BlockRef(state._check_stage(ref[0]), ref[1])
    _natural(x)
    return _run(state, fuel, lambda f: In(ref.index) if state.contains(ref.stage, ref.index, x, f) else NOT_IN)


def resolve(query, *args, start: int = 10_000, cap: Optional[int] = None) -> Verdict:
    """Exact mode: rerun ``query`` with doubling fuel until it decides.

    Work done under a smaller budget is memoized, so each round resumes
    where the previous one stopped.
    """
    budget = start
    while True:
        v = query(*args, fuel=budget)
        if v.decided or (cap is not None and budget >= cap):
            return v
        budget *= 2


@deep
def advance_block(state: MatrixState, ref: BlockRef, steps: int, fuel=None) -> Transcript:
    """Extend block ``ref`` to at least ``steps`` steps (as far as fuel allows)."""
    ref = BlockRef(state._check_stage(ref[0]), ref[1])
    if ref.stage.row == 0:
        raise UsageError("row-0 blocks are closed form and have no transcript")
    st = state.stage(ref.stage)
    f = Fuel(fuel)
    with state.lock:
        st.block(ref.index)
        try:
            while len(st.blocks[ref.index].steps) < steps:
                st.advance(ref.index, f)
        except OutOfFuel:
            pass
        return transcript(state, ref)


def transcript(state: MatrixState, ref: BlockRef, upto: Optional[int] = None) -> Transcript:
    """Snapshot of the recorded steps of ``ref`` (first ``upto`` of them)."""
    ref = BlockRef(StageId(*ref[0]), ref[1])
    st = state.stage(ref.stage)
    with state.lock:
        b = st.block(ref.index)
        steps = list(b.steps[:upto] if upto is not None else b.steps)
        return Transcript(ref, steps, _committed_bound(state, ref))


@deep
def _committed_bound(state: MatrixState, ref: BlockRef) -> int:
    # first value whose verdict for this block needs more construction work
    st = state.stage(ref.stage)
    b = st.block(ref.index)
    top = max(b.picks | b.zs, default=-1) + 1
    v = 0
    while v <= top:
        try:
            st.contains(ref.index, v, Fuel(0))
        except OutOfFuel:
            return v
        v += 1
    return v


@deep
def b_member(state: MatrixState, stage, ell: int, v: int, fuel=None) -> Verdict:
    stage = state._check_stage(stage)
    if stage.row < 1:
        raise UsageError("b(l) is defined for rows >= 1")
    sel = codec.row_selector(stage.row, ell)

    def body(f):
        for j in range(stage.row):
            if not state.contains(StageId(j, stage.col), sel[j], v, f):
                return NOT_IN
        return In()

    return _run(state, fuel, body)


@deep
def c_member(state: MatrixState, sigma, v: int, fuel=None) -> Verdict:
    triples = sigma.triples if isinstance(sigma, codec.SigmaIndex) else sigma

    def body(f):
        for j, p, q in triples:
            if not state.contains(state._check_stage((p, q)), j, v, f):
                return NOT_IN
        return In()

    return _run(state, fuel, body)


@deep
def d_member(state: MatrixState, stage, x: int, v: int, fuel=None) -> Verdict:
    """Whether some c(s), s in I of ``stage``, contains both x and v."""
    stage = state._check_stage(stage)
    if stage.row < 1:
        raise UsageError("d(x) is defined for rows >= 1")
    parts = codec.admissible_partitions(stage, state.n)

    def body(f):
        agree = [p for p in parts if state.owner(p, x, f) == state.owner(p, v, f)]
        if len(agree) >= state.n - 1 and any(p.col != stage.col for p in agree):
            return In()
        return NOT_IN

    return _run(state, fuel, body)


@deep
def restrict(state: MatrixState, ref: BlockRef, window: int, fuel=None) -> Tuple[Set[int], Set[int]]:
    """(members, undecided) of block ``ref`` within [0, window)."""
    ref = BlockRef(state._check_stage(ref[0]), ref[1])
    if ref.stage.row == 0:
        members = set()
        for u in codec.fiber(state.n, {ref.stage.col: ref.index}):
            if u >= window:
                break
            members.add(u)
        return members, set()
    f = Fuel(fuel)
    members, undecided = set(), set()
    with state.lock:
        for v in range(window):
            try:
                if state.contains(ref.stage, ref.index, v, f):
                    members.add(v)
            except OutOfFuel:
                undecided.add(v)
    return members, undecided


def try_contains(state: MatrixState, ref: BlockRef, v: int, fuel: Fuel) -> Optional[bool]:
    """Membership under a caller-owned budget; None when it runs out.

    Must run inside a deep context (any ``@deep`` caller).
    """
    with state.lock:
        try:
            return state.contains(StageId(*ref[0]), ref[1], v, fuel)
        except OutOfFuel:
            return None


def try_owner(state: MatrixState, stage, v: int, fuel: Fuel) -> Optional[int]:
    with state.lock:
        try:
            return state.owner(StageId(*stage), v, fuel)
        except OutOfFuel:
            return None


def stage_records(state: MatrixState, stage) -> List[Tuple[int, List[Step]]]:
    """(index, steps) for every started block of a built stage."""
    st = state._stages.get(StageId(*stage))
    if st is None:
        return []
    with state.lock:
        return [(b.index, list(b.steps)) for b in st.blocks]


def _natural(x) -> None:
    if not isinstance(x, int) or x < 0:
        raise UsageError(f"expected a natural number, got {x!r}")
