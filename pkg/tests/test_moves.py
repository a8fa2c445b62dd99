import random
from collections import Counter

import numpy as np
import pytest
from scipy.stats import chisquare

from builders import constant, make_instance
from theatresched.capacity import compute_table
from theatresched.feasibility import check_feasibility
from theatresched.model import Schedule
from theatresched.moves import (INSERT, KINDS, REMOVE, SWAP_PATIENTS, TRANSFER, catalogue,
                                random_move, swap_pairs)
from theatresched.state import ScheduleState, StaleMoveError


def _slots(entries):
    """``entries`` are (surgeon, OR, block, patients)."""
    s = Schedule()
    for h, r, t, ps in entries:
        s.specialty_assign.add((0, r, t))
        s.surgeon_assign.add((h, r, t))
        s.patient_assign |= {(p, r, t) for p in ps}
    return s


def test_catalogue_has_seven_kinds():
    assert len(catalogue()) == 7 == len(set(KINDS))


def test_forced_insert():
    inst = make_instance([0], [[True]], np.ones((1, 21), bool),
                         [(0, (0,), 1, 0), (0, (0,), 1, 0)], [constant(2.5)])
    caps = compute_table(inst)
    st = ScheduleState(inst, caps, _slots([(0, 0, 0, [0])]))
    move = random_move(INSERT, st, random.Random(0))
    assert move.kind == INSERT
    assert st.apply(move) == 1
    assert st.to_schedule().patient_assign == {(0, 0, 0), (1, 0, 0)}


def test_insert_none_when_nothing_waits():
    inst = make_instance([0], [[True]], np.ones((1, 21), bool), [(0, (0,), 1, 0)],
                         [constant(2.5)])
    st = ScheduleState(inst, compute_table(inst), _slots([(0, 0, 0, [0])]))
    assert random_move(INSERT, st, random.Random(0)) is None


def test_insert_none_when_fully_booked():
    # one half-day slot holding two 2.5 h cases and a third patient waiting
    F = np.zeros((1, 21), bool)
    F[0, 1] = True
    inst = make_instance([0], [[True]], F, [(0, (0,), 1, 0)] * 3, [constant(2.5)])
    st = ScheduleState(inst, compute_table(inst), _slots([(0, 0, 1, [0, 1])]))
    assert random_move(INSERT, st, random.Random(0)) is None


def test_insert_takes_highest_priority():
    pts = [(0, (0,), 3, 500), (0, (0,), 1, 10), (0, (0,), 1, 90), (0, (0,), 2, 900)]
    inst = make_instance([0], [[True]], np.ones((1, 21), bool), pts, [constant(2.5)])
    st = ScheduleState(inst, compute_table(inst), _slots([(0, 0, 0, [0])]))
    move = random_move(INSERT, st, random.Random(0))
    st.apply(move)
    assert (2, 0, 0) in st.to_schedule().patient_assign


def test_transfer_keeps_objective():
    inst = make_instance([0], [[True]], np.ones((1, 21), bool), [(0, (0,), 1, 0)] * 2,
                         [constant(2.5)])
    st = ScheduleState(inst, compute_table(inst), _slots([(0, 0, 0, [0]), (0, 0, 3, [1])]))
    move = random_move(TRANSFER, st, random.Random(0))
    before = st.objective
    assert st.apply(move) == 0 and st.objective == before


def test_stale_moves_are_rejected(small):
    inst, caps, _, sched = small
    st = ScheduleState(inst, caps, sched)
    rng = random.Random(2)
    a, b = random_move(REMOVE, st, rng), random_move(REMOVE, st, rng)
    st.apply(a)
    with pytest.raises(StaleMoveError):
        st.apply(b)
    c = random_move(INSERT, st, rng)
    st.apply(c)
    with pytest.raises(StaleMoveError):
        st.undo(a)


def _swap_instance():
    # surgeons 0 and 1 share patients 0-3; patients 4 and 5 belong to one surgeon each
    pts = [(0, (0, 1), 1, 0)] * 4 + [(0, (0,), 1, 0), (0, (1,), 1, 0)]
    F = np.ones((2, 21), bool)
    return make_instance([0, 0], [[True], [True]], F, pts, [constant(2.0)])


def test_swap_operands_are_uniform():
    inst = _swap_instance()
    sched = _slots([(0, 0, 0, [0, 1, 4]), (1, 0, 3, [2, 3, 5]), (0, 0, 6, [])])
    sched.specialty_assign.discard((0, 0, 6))
    sched.surgeon_assign.discard((0, 0, 6))
    st = ScheduleState(inst, compute_table(inst), sched)
    pairs = swap_pairs(st)
    assert sorted(pairs) == [(0, 2), (0, 3), (1, 2), (1, 3)]
    rng = random.Random(5)
    seen = Counter()
    for _ in range(10**4):
        m = random_move(SWAP_PATIENTS, st, rng)
        a, b = m.ops[0][1], m.ops[1][1]
        seen[min(a, b), max(a, b)] += 1
    assert set(seen) == set(pairs)
    assert chisquare([seen[p] for p in pairs]).pvalue > 0.01


@pytest.mark.parametrize("kind", KINDS)
def test_delta_matches_objective_change(full, kind):
    inst, caps, _, sched = full
    st = ScheduleState(inst, caps, sched)
    rng = random.Random(KINDS.index(kind))
    for _ in range(60):  # constructive output is packed; free some room first
        st.apply(random_move(REMOVE, st, rng))
    applied = 0
    for _ in range(200):
        m = random_move(kind, st, rng)
        if m is None:
            continue
        before = len(st.to_schedule().patient_assign)
        d = st.apply(m)
        assert len(st.to_schedule().patient_assign) - before == d
        applied += 1
    assert applied > 0


def test_random_stream_stays_feasible(small):
    inst, caps, _, sched = small
    st = ScheduleState(inst, caps, sched)
    reserves = dict(sched.nonelective_reserve)
    rng = random.Random(7)
    for i in range(10**4):
        m = random_move(rng.choice(KINDS), st, rng)
        if m is not None:
            st.apply(m)
            out = st.to_schedule()
            assert check_feasibility(inst, out, caps) == [], (i, m.kind)
            assert out.nonelective_reserve == reserves


def test_apply_undo_restores_content(small):
    inst, caps, _, sched = small
    st = ScheduleState(inst, caps, sched)
    start = st.content_hash()
    rng = random.Random(8)
    for _ in range(10**4):
        m = random_move(rng.choice(KINDS), st, rng)
        if m is not None:
            st.apply(m)
            st.undo(m)
    assert st.content_hash() == start
    assert st.to_schedule() == sched


def test_frozen_blocks_are_never_touched(small):
    inst, caps, _, sched = small
    frozen = {t for t in range(inst.num_blocks) if t < 9}
    st = ScheduleState(inst, caps, sched, frozen=frozen)
    keep = {e for e in sched.patient_assign if e[2] in frozen}
    rng = random.Random(9)
    for _ in range(3000):
        m = random_move(rng.choice(KINDS), st, rng)
        if m is not None:
            st.apply(m)
    out = st.to_schedule()
    assert {e for e in out.patient_assign if e[2] in frozen} == keep


def test_move_from_an_undone_state_stays_stale(small):
    inst, caps, _, sched = small
    st = ScheduleState(inst, caps, sched)
    rng = random.Random(3)
    a = random_move(REMOVE, st, rng)
    st.apply(a)
    b = random_move(REMOVE, st, rng)  # generated after a
    st.undo(a)
    st.apply(random_move(REMOVE, st, rng))
    with pytest.raises(StaleMoveError):
        st.apply(b)


def test_undo_unwinds_a_chain(small):
    inst, caps, _, sched = small
    st = ScheduleState(inst, caps, sched)
    rng = random.Random(4)
    done = []
    for _ in range(50):
        m = random_move(rng.choice(KINDS), st, rng)
        if m is not None:
            st.apply(m)
            done.append(m)
    for m in reversed(done):
        st.undo(m)
    assert st.to_schedule() == sched
