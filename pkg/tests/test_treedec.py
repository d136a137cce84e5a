import pytest

from optmatrix import codec, treedec as T
from optmatrix.codec import UsageError
from optmatrix.matrix import MatrixState

from oracles import row0_block


def first_row_everywhere(n):
    """Every row repeats row 0: enough for the tree mechanics, all decided."""
    return lambda row, col, v: row0_block(v, col, n)


@pytest.fixture(scope="module")
def real2():
    return T.TreeFragment.over(MatrixState(2), 2, 4, fuel=2 * 10**5)


def test_shift_map():
    assert T.shift_map((1,), (2,), (1, 5)) == (2, 5)
    assert T.shift_map((3, 1), (3, 1), (3, 1, 4)) == (3, 1, 4)
    r, s, t, x = (0,), (1,), (2,), (0, 7, 7)
    assert T.shift_map(r, t, x) == T.shift_map(s, t, T.shift_map(r, s, x))
    with pytest.raises(UsageError):
        T.shift_map((1,), (1, 2), (1, 3))
    with pytest.raises(UsageError):
        T.shift_map((1,), (2,), (3, 3))


def test_root_label_is_zero(real2):
    assert real2.label((), 0) == T.TerLabel(0, 0, 0)


def test_level1_classes_follow_row0(real2):
    # h_0(0) = h_0(2) = 0, h_0(1) = 1
    assert real2.same_class((0,), (2,), 0) is True
    assert real2.same_class((0,), (1,), 0) is False
    assert real2.label((0,), 0) == real2.label((2,), 0)


def test_class_members_small():
    frag = T.TreeFragment.over(MatrixState(2), 1, 2)
    assert frag.class_members((0,), 0) == ([(0,)], [])
    assert frag.class_members((), 0) == ([()], [])


def test_enlarging_branch_keeps_members():
    state = MatrixState(2)
    small = T.TreeFragment.over(state, 1, 3).class_members((0,), 0)[0]
    big = T.TreeFragment.over(state, 1, 9).class_members((0,), 0)[0]
    assert set(small) <= set(big)


def test_intersect_level1(real2):
    assert real2.intersect_classes([(0,), (0,)]) == (0,)
    # classes of h_0 = 0 and h_1 = 1 meet in the code of (0, 1), which is 2
    r = real2.intersect_classes([(0,), (2,)])
    assert r == (2,)
    assert real2.same_class(r, (0,), 0) and real2.same_class(r, (2,), 1)


def test_intersect_may_leave_fragment():
    frag = T.TreeFragment(2, 1, 4, first_row_everywhere(2))
    # h_0(3) = 2 and h_1(2) = 1, so the common node is code(2, 1), past B = 4
    want = codec.encode_tuple((row0_block(3, 0, 2), row0_block(2, 1, 2)))
    assert want >= 4
    assert frag.intersect_classes([(3,), (2,)]) == (want,)


def test_intersect_usage():
    frag = T.TreeFragment(2, 2, 4, first_row_everywhere(2))
    with pytest.raises(UsageError):
        frag.intersect_classes([(0,), (0, 1)])
    with pytest.raises(UsageError):
        frag.intersect_classes([(0,)])


def test_simple_split():
    frag = T.TreeFragment(2, 2, 4, first_row_everywhere(2))
    assert frag.simple_split((7,), 1) == (row0_block(7, 1, 2),)
    assert frag.simple_split((0, 2), 0) == frag.simple_split((2, 5), 0) == (0, 0)
    # shifting keeps the coordinates past the prefix
    s, t, x = (0,), (2,), (0, 9)
    assert frag.simple_split(T.shift_map(s, t, x), 0)[1:] == frag.simple_split(x, 0)[1:]


@pytest.mark.parametrize("n, depth, branch", [(2, 3, 4), (3, 2, 4)])
def test_mechanics_all_decided(n, depth, branch):
    frag = T.TreeFragment(n, depth, branch, first_row_everywhere(n))
    for check in (T.check_equivalence, T.check_niceness, T.check_product):
        r = check(frag)
        assert r.passed and r.undecided_instances == 0 and r.instances > 0, r.property


def test_claim_rejects_equivalent_anchors():
    # (0,) and (1,) both have h_1 = 0
    frag = T.TreeFragment(2, 2, 6, first_row_everywhere(2))
    with pytest.raises(UsageError):
        frag.claim_witnesses([(0,), (1,)], [(0, 0), (1, 0)], [1, 1])


def test_claim_on_real_matrix(real2):
    # anchors (0,) and (1,) differ in column 0: rows 1 and 2 split their successors
    members, undecided = real2.claim_witnesses([(0,), (1,)], [(0, 0), (1, 0)], [0, 0])
    assert members or undecided


def test_rigidity_usage():
    frag2 = T.TreeFragment(2, 2, 4, first_row_everywhere(2))
    with pytest.raises(UsageError):
        T.rigidity_probe(frag2, (0,), (1,), 1)
    frag3 = T.TreeFragment(3, 2, 4, first_row_everywhere(3))
    with pytest.raises(UsageError):
        T.rigidity_probe(frag3, (0,), (0,), 2)


def test_rigidity_mechanics_decided():
    frag = T.TreeFragment(3, 2, 6, first_row_everywhere(3))
    r = T.check_rigidity(frag, 2)
    assert r.instances > 0 and r.undecided_instances == 0 and r.passed


def test_real_fragment_has_no_violations(real2):
    for check in (T.check_equivalence, T.check_niceness, T.check_product, T.check_claims):
        assert check(real2).passed


def test_export_is_canonical(real2):
    text = T.export(real2)
    assert text.endswith("\n") and '"levels"' in text
