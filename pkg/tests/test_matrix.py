import json
from pathlib import Path

import pytest

from optmatrix import codec, matrix as M
from optmatrix.codec import UsageError
from optmatrix.matrix import BlockRef, MatrixState

from oracles import NaiveStage10, row0_block

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="module")
def s2():
    return MatrixState(2)


def test_rejects_small_arity():
    for bad in (0, 1, 2.0):
        with pytest.raises(UsageError):
            MatrixState(bad)


def test_row0_block_of(s2):
    assert M.block_of(s2, (0, 0), 1).block == 1   # decode 1 = (1, 0)
    assert M.block_of(s2, (0, 1), 2).block == 1   # decode 2 = (0, 1)


def test_row0_membership(s2):
    assert M.membership(s2, BlockRef.of(0, 0, 0), 5).kind == "in"       # decode 5 = (0, 2)
    assert M.membership(s2, BlockRef.of(0, 0, 0), 1).kind == "not_in"


def test_zero_fuel_is_undecided():
    fresh = MatrixState(2)
    v = M.membership(fresh, BlockRef.of(1, 0, 0), 0, fuel=0)
    assert v.kind == "undecided" and v.fuel_spent == 0


def test_verdict_refuses_truthiness():
    with pytest.raises(TypeError):
        bool(M.NOT_IN)


def test_first_row1_value(s2):
    v = M.block_of(s2, (1, 0), 0, fuel=10**6)
    assert v.kind == "in" and v.block == 0


def test_restrict_examples(s2):
    assert M.restrict(s2, BlockRef.of(0, 0, 0), 10) == ({0, 2, 5, 9}, set())
    assert M.restrict(s2, BlockRef.of(0, 1, 0), 10) == ({0, 1, 3, 6}, set())
    assert M.restrict(s2, BlockRef.of(1, 0, 0), 0, fuel=10) == (set(), set())


def test_b_member(s2):
    # k = 1, m = 0, l = 0 selects the row-0 block 0 of column 0
    assert M.b_member(s2, (1, 0), 0, 5).kind == "in"
    assert M.b_member(s2, (1, 0), 0, 1).kind == "not_in"
    assert M.b_member(MatrixState(2), (2, 0), 0, 0, fuel=0).kind == "undecided"


def test_c_member(s2):
    assert M.c_member(s2, [(0, 0, 1)], 0).kind == "in"
    assert M.c_member(s2, [(0, 0, 1)], 2).kind == "not_in"
    # two row-0 blocks of different columns meet in one code
    v = codec.encode_tuple((3, 4))
    assert M.c_member(s2, [(3, 0, 0), (4, 0, 1)], v).kind == "in"


def test_d_member(s2):
    assert M.d_member(s2, (1, 0), 0, 0).kind == "in"
    assert M.d_member(s2, (1, 0), 0, 1).kind == "in"        # both in column-1 block 0
    assert M.d_member(s2, (1, 0), 0, 2).kind == "not_in"    # column-1 blocks 0 and 1


def test_row0_has_no_transcript(s2):
    with pytest.raises(UsageError):
        M.advance_block(s2, BlockRef.of(0, 0, 0), 3)


def test_empty_transcript():
    t = M.advance_block(MatrixState(2), BlockRef.of(1, 0, 0), 0)
    assert t.steps == []


def test_first_step_by_hand(s2):
    # f(0) = (0): b(0) = row-0 block 0 of column 0 = {0, 2, 5, 9, ...};
    # tau(0) = {(0, 0, 1)} contains 0, so y reuses x; z is the next element
    t = M.advance_block(s2, BlockRef.of(1, 0, 0), 3)
    assert tuple(t.steps[0]) == (0, 0, 2, True)


@pytest.mark.parametrize("h", [0, 1, 2, 3])
def test_matches_naive_construction(h):
    naive = NaiveStage10()
    state = MatrixState(2)
    want = naive.run(h, 15)
    got = [tuple(s) for s in M.advance_block(state, BlockRef.of(1, 0, h), 15).steps[:15]]
    assert got == want


def test_owners_match_naive():
    naive = NaiveStage10()
    state = MatrixState(2)
    assert [M.block_of(state, (1, 0), v).block for v in range(150)] == [naive.owner(v) for v in range(150)]


def _golden_run():
    state = MatrixState(2)
    out = []
    for i in range(3):
        ref = BlockRef.of(1, 0, i)
        M.advance_block(state, ref, 10)
        out.append(M.canonical_json(M.transcript(state, ref, 10).to_json()))
    return out


def test_golden_transcripts_reproduce():
    for i, text in enumerate(_golden_run()):
        assert (GOLDEN / f"n2_stage1_0_block{i}.json").read_text(encoding="utf-8") == text


def test_golden_agrees_with_naive():
    naive = NaiveStage10()
    for i in range(3):
        data = json.loads((GOLDEN / f"n2_stage1_0_block{i}.json").read_text(encoding="utf-8"))
        assert [tuple(s) for s in data["steps"]] == naive.run(i, 10)


@pytest.mark.parametrize("stage", [(1, 0), (1, 1)])
def test_transcript_invariants(stage):
    state = MatrixState(2)
    for i in range(3):
        ref = BlockRef(codec.StageId(*stage), i)
        t = M.advance_block(state, ref, 8, fuel=10**6)
        xs = [s.x for s in t.steps]
        zs = [s.z for s in t.steps]
        assert len(set(xs)) == len(xs) and len(set(zs)) == len(zs)
        for s in t.steps:
            assert M.membership(state, ref, s.x, fuel=0).kind == "in"
            assert M.membership(state, ref, s.y, fuel=0).kind == "in"
            assert M.membership(state, ref, s.z, fuel=10**6).kind == "not_in"


def test_x_is_recomputed_minimum():
    # each x is the least element of b(l) not excluded when the step ran:
    # every smaller element of b(l) is out of the block for a recorded reason
    state = MatrixState(2)
    ref = BlockRef.of(1, 0, 1)
    t = M.advance_block(state, ref, 10)
    picks, zs, cols = set(), set(), set()
    for ell, s in enumerate(t.steps):
        sel = codec.row_selector(1, ell)[0]
        for u in codec.fiber(2, {0: sel}):
            if u == s.x:
                break
            earlier = M.block_of(state, (1, 0), u).block < 1
            assert u in picks or u in zs or codec.coordinate(u, 1, 2) in cols or earlier
        picks |= {s.x, s.y}
        zs.add(s.z)
        cols |= {codec.coordinate(s.x, 1, 2), codec.coordinate(s.y, 1, 2)}


def test_disjoint_blocks_stage_1_0():
    state = MatrixState(2)
    seen = {}
    for i in range(8):
        members, undecided = M.restrict(state, BlockRef.of(1, 0, i), 10_000, fuel=10**7)
        assert not undecided
        for v in members:
            assert seen.setdefault(v, i) == i


def test_verdicts_final_under_more_fuel():
    small, big = MatrixState(2), MatrixState(2)
    for v in range(30):
        a = M.block_of(small, (1, 1), v, fuel=2_000)
        b = M.block_of(big, (1, 1), v, fuel=2 * 10**5)
        if a.decided:
            assert a == b


def test_resolve_doubles_until_decided():
    state = MatrixState(2)
    v = M.resolve(M.block_of, state, (1, 1), 7, start=1)
    assert v.decided


def test_consequence_one_sampled():
    # the n-fold set c(rho + tau) meets an earlier block at most once
    state = MatrixState(2)
    N = 3_000
    for ell in range(6):
        sel = codec.row_selector(1, ell)
        sigma = codec.sigma_enumerate((1, 1), ell, 2).triples
        cset = set()
        for u in codec.fiber(2, {1: sel[0]}):
            if u >= N:
                break
            if M.c_member(state, sigma, u, fuel=10**5).kind == "in":
                cset.add(u)
        for h in range(3):
            hits = [u for u in cset if M.membership(state, BlockRef.of(1, 1, h), u, fuel=10**5).kind == "in"]
            assert len(hits) <= 1


def test_store_round_trip(tmp_path):
    state = MatrixState(2)
    for i in range(3):
        M.advance_block(state, BlockRef.of(1, 0, i), 6)
    M.advance_block(state, BlockRef.of(1, 1, 0), 3, fuel=10**6)
    path = tmp_path / "store.json"
    state.save(path)
    again = MatrixState.load(path)
    assert M.canonical_json(again.to_json()) == path.read_text(encoding="utf-8")
    assert [M.block_of(again, (1, 0), v, fuel=0).block for v in range(20)] == \
           [M.block_of(state, (1, 0), v, fuel=0).block for v in range(20)]


def test_store_rejects_other_formats(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"format": "optmatrix-store", "version": 99, "n": 2, "stages": []}))
    with pytest.raises(UsageError):
        MatrixState.load(path)


def test_row0_closed_form_matches_scan():
    state = MatrixState(3)
    for v in range(500):
        for m in range(3):
            assert M.block_of(state, (0, m), v).block == row0_block(v, m, 3)
