"""Fixed enumerations behind the construction.

Everything here is a pure function of its arguments: the Cantor pairing and
its right-nested tuple extension, the row selector, ordered enumeration of
coordinate fibers, and the canonical enumeration of index sets ("sigmas").
"""
from __future__ import annotations

from functools import lru_cache
from itertools import count
from math import isqrt
from typing import Dict, Iterator, List, NamedTuple, Sequence, Tuple

CONVENTION = "cantor-right-nested/unpair-decode-selector/colex-sigma"


class UsageError(ValueError):
    """Bad arguments (maps to CLI exit 64)."""


class DomainError(ValueError):
    """Argument outside the domain of a partial map (e.g. not a member of I)."""


class StageId(NamedTuple):
    """Position (row, col) of one partition; tuple order is row-major."""

    row: int
    col: int


# (block index, row, column)
Triple = Tuple[int, int, int]


def pair(a: int, b: int) -> int:
    s = a + b
    return s * (s + 1) // 2 + b


def unpair(z: int) -> Tuple[int, int]:
    if z < 0:
        raise UsageError(f"negative code {z}")
    s = (isqrt(8 * z + 1) - 1) // 2
    b = z - s * (s + 1) // 2
    return s - b, b


def encode_tuple(t: Sequence[int]) -> int:
    """Right-nested Cantor encoding; arity 1 is the identity."""
    if len(t) == 0:
        raise UsageError("cannot encode the empty tuple")
    if any(v < 0 for v in t):
        raise UsageError(f"negative coordinate in {tuple(t)}")
    code = t[-1]
    for v in reversed(t[:-1]):
        code = pair(v, code)
    return code


def decode_tuple(c: int, arity: int) -> Tuple[int, ...]:
    if arity < 1:
        raise UsageError("arity must be >= 1")
    if c < 0:
        raise UsageError(f"negative code {c}")
    out = []
    for _ in range(arity - 1):
        a, c = unpair(c)
        out.append(a)
    out.append(c)
    return tuple(out)


def coordinate(c: int, m: int, arity: int) -> int:
    """h_m(c): the m-th coordinate of decode_tuple(c, arity)."""
    for _ in range(m):
        c = unpair(c)[1]
    if m < arity - 1:
        return unpair(c)[0]
    return c


def row_selector(k: int, ell: int) -> Tuple[int, ...]:
    """Onto map from naturals to k-tuples with every fiber infinite.

    The first pairing component of ``ell`` is a free counter, so each tuple
    recurs once per value of it.
    """
    if k < 1:
        raise UsageError("row selector needs k >= 1")
    return decode_tuple(unpair(ell)[1], k)


def fiber(arity: int, fixed: Dict[int, int]) -> Iterator[int]:
    """Codes c, increasing, with decode_tuple(c, arity)[m] == v for (m, v) in fixed."""
    if arity < 1:
        raise UsageError("arity must be >= 1")
    if any(m >= arity or m < 0 for m in fixed):
        raise UsageError(f"fixed coordinates {fixed} out of range for arity {arity}")
    return _fiber(arity, tuple(sorted(fixed.items())))


def _fiber(arity: int, fixed: Tuple[Tuple[int, int], ...]) -> Iterator[int]:
    if not fixed:
        yield from count()
        return
    if arity == 1:
        yield fixed[0][1]
        return
    head = None
    rest = []
    for m, v in fixed:
        if m == 0:
            head = v
        else:
            rest.append((m - 1, v))
    tail = _fiber(arity - 1, tuple(rest))
    if head is not None:
        for b in tail:
            yield pair(head, b)
        return
    # head free: walk diagonals a + b = s, b ascending within a diagonal
    pulled: List[int] = []
    nxt = next(tail, None)
    for s in count():
        while nxt is not None and nxt <= s:
            pulled.append(nxt)
            nxt = next(tail, None)
        base = s * (s + 1) // 2
        for b in pulled:
            yield base + b


class FiberList:
    """Lazily materialized, indexable view of ``fiber(arity, fixed)``."""

    def __init__(self, arity: int, fixed: Dict[int, int]):
        self._it = fiber(arity, fixed)
        self.items: List[int] = []

    def __getitem__(self, i: int) -> int:
        items = self.items
        while len(items) <= i:
            items.append(next(self._it))
        return items[i]


@lru_cache(maxsize=4096)
def fiber_list(arity: int, fixed: Tuple[Tuple[int, int], ...]) -> FiberList:
    return FiberList(arity, dict(fixed))


# -- index family I ---------------------------------------------------------


def admissible_partitions(stage: StageId, n: int) -> List[StageId]:
    """Partitions built before ``stage``, in row-major order."""
    k, m = stage
    if not 0 <= m < n:
        raise UsageError(f"column {m} out of range for n={n}")
    return [StageId(p, q) for p in range(k + 1) for q in range(n) if (p, q) < (k, m)]


def canonical_sigma(triples) -> Tuple[Triple, ...]:
    """Triples sorted by (row, column), the canonical key of a sigma."""
    return tuple(sorted((tuple(t) for t in triples), key=lambda t: (t[1], t[2], t[0])))


def sigma_problem(stage: StageId, n: int, triples: Sequence[Triple]) -> str | None:
    """Why ``triples`` is not in I for this stage, or None if it is."""
    k, m = stage
    if len(triples) != n - 1:
        return f"expected {n - 1} triples, got {len(triples)}"
    positions = set()
    for j, p, q in triples:
        if min(j, p, q) < 0 or q >= n:
            return f"malformed triple {(j, p, q)}"
        if not (p < k or (p == k and q < m)):
            return f"partition ({p},{q}) does not precede stage ({k},{m})"
        positions.add((p, q))
    if len(positions) != len(triples):
        return "two triples name the same partition"
    if all(q == m for _, _, q in triples):
        return f"all triples lie in column {m}"
    return None


class SigmaIndex(NamedTuple):
    stage: StageId
    triples: Tuple[Triple, ...]

    @classmethod
    def of(cls, stage, triples, n: int) -> "SigmaIndex":
        stage = StageId(*stage)
        canon = canonical_sigma(triples)
        why = sigma_problem(stage, n, canon)
        if why is not None:
            raise DomainError(why)
        return cls(stage, canon)


def _colex(items: List[int], r: int, upto: int) -> Iterator[Tuple[int, ...]]:
    """r-subsets of items[:upto] in colex order."""
    if r == 0:
        yield ()
        return
    for i in range(r - 1, upto):
        for rest in _colex(items, r - 1, i):
            yield rest + (items[i],)


class _SigmaList:
    """Members of I in increasing order of their finite-set code sum(2**code)."""

    def __init__(self, stage: StageId, n: int):
        self.stage = stage
        self.n = n
        self.size = n - 1
        self._parts = set(admissible_partitions(stage, n))
        self._codes: List[int] = []  # valid triple codes seen so far, increasing
        self._next_code = 0
        self.members: List[Tuple[Triple, ...]] = []
        self.position: Dict[Tuple[Triple, ...], int] = {}
        if not self._parts or all(q == stage.col for _, q in self._parts) or len(self._parts) < self.size:
            raise DomainError(f"I is empty at stage {tuple(stage)} for n={n}")

    def _triple_ok(self, code: int) -> bool:
        j, p, q = decode_tuple(code, 3)
        return (p, q) in self._parts

    def _grow(self) -> None:
        # next valid triple code becomes the new maximum; pair it with every
        # colex-ordered (size-1)-subset of the earlier valid codes
        while not self._triple_ok(self._next_code):
            self._next_code += 1
        top = self._next_code
        self._next_code += 1
        i = len(self._codes)
        self._codes.append(top)
        for rest in _colex(self._codes, self.size - 1, i):
            triples = [decode_tuple(c, 3) for c in rest + (top,)]
            if sigma_problem(self.stage, self.n, triples) is None:
                key = canonical_sigma(triples)
                self.position[key] = len(self.members)
                self.members.append(key)

    def get(self, ell: int) -> Tuple[Triple, ...]:
        while len(self.members) <= ell:
            self._grow()
        return self.members[ell]

    def index(self, key: Tuple[Triple, ...]) -> int:
        top = max(encode_tuple(t) for t in key)
        while self._next_code <= top:
            self._grow()
        return self.position[key]


@lru_cache(maxsize=None)
def sigma_list(stage: StageId, n: int) -> _SigmaList:
    return _SigmaList(StageId(*stage), n)


def sigma_enumerate(stage, ell: int, n: int) -> SigmaIndex:
    stage = StageId(*stage)
    if ell < 0:
        raise UsageError("negative index")
    return SigmaIndex(stage, sigma_list(stage, n).get(ell))


def sigma_index_of(stage, sigma, n: int) -> int:
    stage = StageId(*stage)
    triples = sigma.triples if isinstance(sigma, SigmaIndex) else sigma
    key = canonical_sigma(triples)
    why = sigma_problem(stage, n, key)
    if why is not None:
        raise DomainError(why)
    return sigma_list(stage, n).index(key)
