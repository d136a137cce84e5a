"""Finite-depth replay of the tree decomposition.

The tree is the full omega-branching tree; a fragment materializes the
nodes of height <= d whose coordinates are all < B.  The coherent maps are
prefix replacement, anchors are the all-zero nodes, so transferring a
partition to the successors of a node s means: child s+(j,) lies in block
i exactly when j lies in block i.

Classes of ``≡_m`` are named by keys (level, parent label, block).  A
per-column registry turns keys into labels, counting up from 1 (the root
has label 0) in breadth-first order over the fragment.  The label of a
class is the matrix row used to split its successors.  Labels must not
depend on how much fuel was available, so a level stops handing out new
labels at the first node whose class is still undecided.
"""
from __future__ import annotations

from itertools import combinations, product
from typing import Callable, Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple

from . import codec
from ._deep import deep
from .codec import StageId, UsageError
from .matrix import Fuel, MatrixState, canonical_json, try_owner
from .oracle import Report

NodeId = Tuple[int, ...]
ROOT: NodeId = ()

# (row, col, v) -> block index, or None when undecided
BlockSource = Callable[[int, int, int], Optional[int]]


class TerLabel(NamedTuple):
    column: int
    level: int
    label: int


def shift_map(s: NodeId, t: NodeId, x: NodeId) -> NodeId:
    """psi_{s,t}(x): replace the prefix s of x by t."""
    s, t, x = tuple(s), tuple(t), tuple(x)
    if len(s) != len(t):
        raise UsageError(f"heights differ: {s} vs {t}")
    if x[: len(s)] != s:
        raise UsageError(f"{x} does not extend {s}")
    return t + x[len(s):]


class MatrixSource:
    """Block lookups against a matrix with a fixed budget per lookup."""

    def __init__(self, state: MatrixState, fuel=None):
        self.state = state
        self.n = state.n
        self.fuel = fuel
        # undecided answers are kept too, so one budget is spent per lookup
        self._memo: Dict[Tuple[int, int, int], Optional[int]] = {}

    def __call__(self, row: int, col: int, v: int) -> Optional[int]:
        if row == 0:
            return codec.coordinate(v, col, self.n)
        key = (row, col, v)
        if key not in self._memo:
            self._memo[key] = try_owner(self.state, StageId(row, col), v, Fuel(self.fuel))
        return self._memo[key]


class _Registry:
    """Labels of one column, handed out level by level."""

    def __init__(self):
        self.labels: Dict[tuple, int] = {(0,): 0}
        self.order: List[tuple] = [(0,)]
        self._next = 1

    def assign(self, key: tuple) -> int:
        label = self.labels.get(key)
        if label is None:
            label = self.labels[key] = self._next
            self.order.append(key)
            self._next += 1
        return label


class TreeFragment:
    def __init__(self, n: int, depth: int, branch: int, source: BlockSource, search: int = 100_000):
        if n < 2:
            raise UsageError("n must be > 1")
        if depth < 1 or branch < 2:
            raise UsageError("need depth >= 1 and branch bound >= 2")
        self.n, self.depth, self.branch = n, depth, branch
        self.source = source
        self.search = search  # candidates probed per intersection search
        self._reg = [_Registry() for _ in range(n)]
        self._key: List[Dict[NodeId, Optional[tuple]]] = [{ROOT: (0,)} for _ in range(n)]
        self._built = 0

    @classmethod
    def over(cls, state: MatrixState, depth: int, branch: int, fuel=None, search: int = 100_000) -> "TreeFragment":
        return cls(state.n, depth, branch, MatrixSource(state, fuel), search)

    def level(self, alpha: int) -> Iterator[NodeId]:
        return product(range(self.branch), repeat=alpha)

    def materialized(self, node: NodeId) -> bool:
        return len(node) <= self.depth and all(0 <= c < self.branch for c in node)

    # class keys and labels

    def _build(self, upto: int) -> None:
        while self._built < min(upto, self.depth):
            alpha = self._built + 1
            for m in range(self.n):
                reg, keys = self._reg[m], self._key[m]
                frozen = False
                for node in self.level(alpha):
                    key = self._class_key(node, m)
                    if key is None or (frozen and key not in reg.labels):
                        frozen = True
                        keys[node] = key if key is not None and key in reg.labels else None
                        continue
                    reg.assign(key)
                    keys[node] = key
            self._built = alpha

    def _class_key(self, node: NodeId, m: int) -> Optional[tuple]:
        parent = self._label_of(node[:-1], m)
        if parent is None:
            return None
        block = self.source(parent, m, node[-1])
        if block is None:
            return None
        return (len(node), parent, block)

    def _label_of(self, node: NodeId, m: int) -> Optional[int]:
        if not node:
            return 0
        self._build(len(node))
        if node in self._key[m]:
            key = self._key[m][node]
        else:
            key = self._class_key(node, m)
        if key is None:
            return None
        return self._reg[m].labels.get(key)

    def label(self, node: NodeId, m: int) -> Optional[TerLabel]:
        """Label of the ``≡_m`` class of ``node``; None while undecided."""
        node = tuple(node)
        self._check_column(m)
        if len(node) > self.depth:
            raise UsageError(f"{node} lies above the fragment depth {self.depth}")
        got = self._label_of(node, m)
        if got is None:
            if node and not self.materialized(node) and self._decided_key(node, m):
                raise UsageError(f"class of {node} has no materialized member; raise the branch bound")
            return None
        return TerLabel(m, len(node), got)

    def _decided_key(self, node: NodeId, m: int) -> bool:
        return self._label_of(node[:-1], m) is not None and self._class_key(node, m) is not None

    def _check_column(self, m: int) -> None:
        if not 0 <= m < self.n:
            raise UsageError(f"column {m} out of range for n={self.n}")

    # the relations

    def same_class(self, s: NodeId, t: NodeId, m: int) -> Optional[bool]:
        s, t = tuple(s), tuple(t)
        self._check_column(m)
        if len(s) != len(t):
            raise UsageError("nodes of different heights are never compared")
        if not s:
            return True
        up = self.same_class(s[:-1], t[:-1], m)
        if up is not True:
            return up
        p = self._label_of(s[:-1], m)
        if p is None:
            return None
        a, b = self.source(p, m, s[-1]), self.source(p, m, t[-1])
        if a is None or b is None:
            return None
        return a == b

    def class_members(self, node: NodeId, m: int) -> Tuple[List[NodeId], List[NodeId]]:
        """(members, undecided) among materialized nodes of the same height."""
        node = tuple(node)
        members, undecided = [], []
        for other in self.level(len(node)):
            got = self.same_class(node, other, m)
            if got is None:
                undecided.append(other)
            elif got:
                members.append(other)
        return members, undecided

    def block_under(self, node: NodeId, m: int) -> Optional[Tuple[int, int]]:
        """(row, block) placing node's last coordinate below its parent."""
        p = self._label_of(node[:-1], m)
        if p is None:
            return None
        b = self.source(p, m, node[-1])
        return None if b is None else (p, b)

    def intersect_classes(self, nodes: Sequence[NodeId]) -> Optional[NodeId]:
        """The unique node in the class of nodes[m] under ``≡_m`` for every m."""
        nodes = [tuple(x) for x in nodes]
        if len(nodes) != self.n:
            raise UsageError(f"need n={self.n} nodes")
        if len({len(x) for x in nodes}) != 1 or not nodes[0]:
            raise UsageError("nodes must share a height >= 1")
        below = ROOT
        if len(nodes[0]) > 1:
            below = self.intersect_classes([x[:-1] for x in nodes])
            if below is None:
                return None
        targets = []
        for m, x in enumerate(nodes):
            pb = self.block_under(x, m)
            if pb is None:
                return None
            targets.append((pb[0], m, pb[1]))
        last = self._common_member(targets)
        return None if last is None else below + (last,)

    def _common_member(self, targets: List[Tuple[int, int, int]]) -> Optional[int]:
        fixed = {m: i for p, m, i in targets if p == 0}
        rest = [(p, m, i) for p, m, i in targets if p != 0]
        for probes, v in enumerate(codec.fiber(self.n, fixed)):
            if probes >= self.search:
                return None
            ok = True
            for p, m, i in rest:
                got = self.source(p, m, v)
                if got is None:
                    return None
                if got != i:
                    ok = False
                    break
            if ok:
                return v
        return None

    def claim_witnesses(self, anchors: Sequence[NodeId], targets: Sequence[NodeId],
                        column_map: Sequence[int]) -> Tuple[List[NodeId], List[NodeId]]:
        """Materialized nodes above anchors[0] in every shifted target class.

        Returns (members, undecided).
        """
        anchors = [tuple(a) for a in anchors]
        targets = [tuple(t) for t in targets]
        k = len(anchors)
        if k == 0 or len(targets) != k or len(column_map) != k:
            raise UsageError("anchors, targets and column map must have the same nonzero length")
        alpha, beta = len(anchors[0]), len(targets[0])
        if any(len(a) != alpha for a in anchors) or any(len(t) != beta for t in targets) or beta <= alpha:
            raise UsageError("anchors share one height, targets a strictly larger one")
        for a, t in zip(anchors, targets):
            if t[:alpha] != a:
                raise UsageError(f"{t} does not extend {a}")
        for m in column_map:
            self._check_column(m)
        if len(set(column_map)) > 1 and k > self.n:
            raise UsageError("a mixed column map takes at most n anchors")
        for i, j in combinations(range(k), 2):
            if column_map[i] == column_map[j]:
                same = self.same_class(anchors[i], anchors[j], column_map[i])
                if same is None:
                    return [], [anchors[0]]
                if same:
                    raise UsageError(f"anchors {anchors[i]} and {anchors[j]} are equivalent")
        members, undecided = [], []
        for tail in self.level(beta - alpha):
            u = anchors[0] + tail
            verdict = True
            for a, t, m in zip(anchors, targets, column_map):
                got = self.same_class(shift_map(anchors[0], a, u), t, m)
                if got is False:
                    verdict = False
                    break
                if got is None:
                    verdict = None
            if verdict is None:
                undecided.append(u)
            elif verdict:
                members.append(u)
        return members, undecided

    def simple_split(self, node: NodeId, m: int) -> Tuple[int, ...]:
        """Class label using the first row only: h_m of every coordinate."""
        self._check_column(m)
        node = tuple(node)
        if not node:
            raise UsageError("the root has no split label")
        return tuple(codec.coordinate(c, m, self.n) for c in node)


# -- checks -----------------------------------------------------------------------


def _note(report: Report, got: Optional[bool], witness) -> None:
    report.instances += 1
    if got is None:
        report.undecided_instances += 1
    elif not got:
        report.violations.append({"witness": witness})


@deep
def check_equivalence(frag: TreeFragment) -> Report:
    """same_class agrees with class-key equality, is reflexive and symmetric,
    and respects the tree order, on every materialized level."""
    rep = Report("equivalence")
    for m in range(frag.n):
        for alpha in range(1, frag.depth + 1):
            frag._build(alpha)
            keys = {x: frag._key[m].get(x) for x in frag.level(alpha)}
            # pairs are grouped by parent pair; a parent pair that is apart
            # keeps all its children apart, so one check covers the group
            parents = list(frag.level(alpha - 1))
            kids = {p: [p + (c,) for c in range(frag.branch)] for p in parents}
            for i, p in enumerate(parents):
                for q in parents[i:]:
                    up = frag.same_class(p, q, m) if p else True
                    if up is False:
                        s, t = kids[p][0], kids[q][0]
                        apart = frag.same_class(s, t, m) is False
                        if keys[s] is not None and keys[t] is not None:
                            apart = apart and keys[s] != keys[t]
                        _note(rep, apart, {"column": m, "nodes": [list(s), list(t)]})
                        continue
                    for s in kids[p]:
                        for t in kids[q]:
                            if p == q and t < s:
                                continue
                            got = frag.same_class(s, t, m)
                            back = frag.same_class(t, s, m)
                            if got is None or back is None:
                                _note(rep, None, None)
                                continue
                            ks, kt = keys[s], keys[t]
                            ok = got == back and (s != t or got)
                            if ks is not None and kt is not None:
                                ok = ok and got == (ks == kt)
                            if got and up is not True:
                                ok = False  # order compatibility
                            _note(rep, ok, {"column": m, "nodes": [list(s), list(t)]})
    return rep


@deep
def check_niceness(frag: TreeFragment) -> Report:
    """Equivalence lifts along the shift maps between equivalent nodes."""
    rep = Report("niceness")
    for m in range(frag.n):
        for alpha in range(1, frag.depth):
            nodes = list(frag.level(alpha))
            for i, s in enumerate(nodes):
                for r in nodes[i + 1:]:
                    same = frag.same_class(s, r, m)
                    if same is None:
                        _note(rep, None, None)
                        continue
                    if not same:
                        continue
                    for extra in range(1, frag.depth - alpha + 1):
                        for tail in frag.level(extra):
                            t = s + tail
                            got = frag.same_class(shift_map(s, r, t), t, m)
                            _note(rep, got, {"column": m, "s": list(s), "r": list(r), "t": list(t)})
    return rep


@deep
def check_product(frag: TreeFragment) -> Report:
    """Label tuples are injective per level and intersect_classes inverts them."""
    rep = Report("product")
    for alpha in range(1, frag.depth + 1):
        seen: Dict[tuple, NodeId] = {}
        reps: List[Dict[int, NodeId]] = [dict() for _ in range(frag.n)]
        for x in frag.level(alpha):
            labels = [frag._label_of(x, m) for m in range(frag.n)]
            for m, lab in enumerate(labels):
                if lab is not None:
                    reps[m].setdefault(lab, x)
            if any(lab is None for lab in labels):
                _note(rep, None, None)
                continue
            tup = tuple(labels)
            other = seen.setdefault(tup, x)
            _note(rep, other == x, {"level": alpha, "labels": list(tup), "nodes": [list(other), list(x)]})
        for tup, x in seen.items():
            # representatives of each column class, usually distinct from x
            got = frag.intersect_classes([reps[m][tup[m]] for m in range(frag.n)])
            _note(rep, None if got is None else got == x, {"level": alpha, "labels": list(tup), "expected": list(x)})
    return rep


def claim_configurations(frag: TreeFragment, anchors_per_case: int = 4) -> Iterator[Tuple[list, list, list]]:
    """Level-1 anchor pairs with targets one level up and at the top level.

    Every constant column map is tried; the mixed map only when n > 2, since
    for n = 2 two mixed classes meet in a single node that may lie outside
    the fragment.
    """
    firsts = [(a,) for a in range(min(anchors_per_case, frag.branch))]
    maps = [[m, m] for m in range(frag.n)] + ([[0, 1]] if frag.n > 2 else [])
    for s0, s1 in combinations(firsts, 2):
        for cmap in maps:
            for a, b in ((0, 0), (0, 1), (1, 0)):
                t = [s0 + (a,) + (0,) * (frag.depth - 2), s1 + (b,) + (0,) * (frag.depth - 2)]
                yield [s0, s1], t, cmap


@deep
def check_claims(frag: TreeFragment) -> Report:
    """The shifted class intersection has materialized members."""
    rep = Report("claim")
    if frag.depth < 2:
        return rep
    for anchors, targets, cmap in claim_configurations(frag):
        try:
            members, undecided = frag.claim_witnesses(anchors, targets, cmap)
        except UsageError:
            continue  # anchors equivalent in a shared column: not a configuration
        got = True if members else (None if undecided else False)
        _note(rep, got, {"anchors": [list(a) for a in anchors], "targets": [list(t) for t in targets], "columns": cmap})
    return rep


@deep
def rigidity_probe(frag: TreeFragment, s: NodeId, q: NodeId, ell: int) -> Report:
    """Shifted (n-1)-fold intersection meets each class of column ell at most
    once, while the unshifted side keeps >= 2 members."""
    s, q = tuple(s), tuple(q)
    if frag.n < 3:
        raise UsageError("the rigidity probe needs n >= 3")
    if len(s) != len(q) or len(s) + 1 > frag.depth:
        raise UsageError("s and q need one height with successors inside the fragment")
    frag._check_column(ell)
    ls, lq = frag._label_of(s, ell), frag._label_of(q, ell)
    if s == q or (ls is not None and ls == lq):
        raise UsageError("s and q must carry different labels in the probed column")
    rep = Report("rigidity", instances=1, details={"s": list(s), "q": list(q), "column": ell})
    if ls is None or lq is None:
        rep.undecided_instances = 1
        return rep
    r = s + (0,)
    cols = range(frag.n - 1)
    left, right, open_ = [], [], 0
    for a in range(frag.branch):
        lhs = [frag.same_class(s + (a,), r, i) for i in cols]
        rhs = [frag.same_class(q + (a,), q + (0,), i) for i in cols]
        if False not in lhs:
            if None in lhs:
                open_ += 1
            else:
                left.append(a)
        if False not in rhs:
            if None in rhs:
                open_ += 1
            else:
                right.append(a)
    classes: Dict[int, List[int]] = {}
    for a in left:
        b = frag.source(lq, ell, a)
        if b is None:
            open_ += 1
            continue
        classes.setdefault(b, []).append(a)
    crowded = {b: xs for b, xs in classes.items() if len(xs) > 1}
    rep.details.update({"left": left, "right": right, "classes": {str(b): xs for b, xs in sorted(classes.items())}})
    if crowded:
        b, xs = min(crowded.items())
        rep.violations.append({"witness": {"class": b, "members": [list(q + (a,)) for a in xs]}})
    elif open_ or len(right) < 2:
        rep.undecided_instances = 1
    return rep


@deep
def check_rigidity(frag: TreeFragment, ell: int) -> Report:
    """Every ordered pair of level-1 nodes with distinct labels in column ell."""
    rep = Report("rigidity")
    nodes = list(frag.level(1))
    for s in nodes:
        for q in nodes:
            if s == q:
                continue
            ls, lq = frag._label_of(s, ell), frag._label_of(q, ell)
            if ls is not None and ls == lq:
                continue
            r = rigidity_probe(frag, s, q, ell)
            rep.absorb(r)
    return rep


@deep
def decompose(frag: TreeFragment) -> dict:
    """Labels and class tables of the whole fragment, as a JSON object."""
    frag._build(frag.depth)
    levels = []
    for alpha in range(1, frag.depth + 1):
        rows = []
        for x in frag.level(alpha):
            rows.append({"node": list(x), "labels": [frag._label_of(x, m) for m in range(frag.n)]})
        levels.append(rows)
    classes = []
    for m, reg in enumerate(frag._reg):
        for key in reg.order:
            label = reg.labels[key]
            if key == (0,):
                classes.append({"column": m, "label": 0, "level": 0})
            else:
                level, parent, block = key
                classes.append({"column": m, "label": label, "level": level, "parent": parent,
                                "row": parent, "block": block})
    return {"n": frag.n, "depth": frag.depth, "branch": frag.branch, "levels": levels, "classes": classes}


def export(frag: TreeFragment, reports: Sequence[Report] = ()) -> str:
    data = decompose(frag)
    data["reports"] = [r.to_json() for r in reports]
    return canonical_json(data)
