"""Neighbourhood moves shared by every search engine.

Moves are generated feasible: a generator only returns a move whose
application keeps every constraint satisfied (including frozen blocks and
the rolling deviation budget), and returns ``None`` when the kind has no
feasible operands at all.  Baseline non-elective slots are never touched.

Sampling is two-level: a first-level operand (slot, cell or patient) is
drawn uniformly by rejection for a few attempts; if every attempt fails,
the candidates are scanned in random order so that ``None`` really means
"nothing feasible".
"""

from __future__ import annotations

from .state import ASSIGN, CLOSE, OPEN, UNASSIGN, Move, ScheduleState

INSERT = "insert"
REMOVE = "remove"
TRANSFER = "transfer"
SWAP_PATIENTS = "swap_patients"
SWAP_BLOCK_OR = "swap_block_or"
CHANGE_SURGEON = "change_surgeon"
REASSIGN_BLOCK = "reassign_block"

KINDS = (INSERT, REMOVE, TRANSFER, SWAP_PATIENTS, SWAP_BLOCK_OR, CHANGE_SURGEON,
         REASSIGN_BLOCK)

ATTEMPTS = 8
SWAP_ATTEMPTS = 30


def catalogue() -> tuple[str, ...]:
    return KINDS


def _finish(state: ScheduleState, kind, ops, delta, touched) -> Move | None:
    frozen = state.frozen
    if frozen and any(t in frozen for _, t in touched):
        return None
    if state.dev_budget is not None:
        final = {}
        for op in ops:
            if op[0] == ASSIGN:
                final[op[1]] = op[3]
            elif op[0] == UNASSIGN:
                final[op[1]] = None
        change = 0
        prev = state.prev_block
        for p, t in final.items():
            t0 = prev[p]
            if t0 >= 0:
                change += (t != t0) - state.is_deviating(p)
        if change > 0 and state.deviations + change > state.dev_budget:
            return None
    return state.make_move(kind, ops, delta, touched)


def _search(items, build, rng, attempts=ATTEMPTS):
    n = len(items)
    if n == 0:
        return None
    for _ in range(attempts):
        move = build(items[int(rng.random() * n)])
        if move is not None:
            return move
    order = list(items)
    rng.shuffle(order)
    for x in order:
        move = build(x)
        if move is not None:
            return move
    return None


def _empty_slot_ops(state, r, t, slot, leaving):
    """CLOSE op if the slot is left without patients."""
    if len(slot.patients) == leaving:
        return [(CLOSE, r, t, slot.surgeon, slot.specialty, 0)]
    return []


def gen_insert(state: ScheduleState, rng) -> Move | None:
    def build(rt):
        r, t = rt
        slot = state.slots[rt]
        if not state.pools[slot.surgeon]:
            return None
        p = state.top_patients(slot.surgeon, 1, rng)[0]
        return _finish(state, INSERT, [(ASSIGN, p, r, t)], 1, [rt])
    return _search(state.room_slots.items, build, rng)


def gen_remove(state: ScheduleState, rng) -> Move | None:
    def build(p):
        r, t = state.patient_at[p]
        slot = state.slots[r, t]
        ops = [(UNASSIGN, p, r, t)] + _empty_slot_ops(state, r, t, slot, 1)
        return _finish(state, REMOVE, ops, -1, [(r, t)])
    return _search(state.scheduled.items, build, rng)


def gen_transfer(state: ScheduleState, rng) -> Move | None:
    def build(target):
        r2, t2 = target
        slot2 = state.slots[target]
        h2 = slot2.surgeon
        frozen = state.frozen
        options = []
        for p in state.spec_scheduled[slot2.specialty]:
            at = state.patient_at[p]
            if at == target or at[1] in frozen or h2 not in state.patient_surgeons[p]:
                continue
            options.append(p)
        while options:
            i = int(rng.random() * len(options))
            p = options[i]
            r1, t1 = state.patient_at[p]
            slot1 = state.slots[r1, t1]
            ops = ([(UNASSIGN, p, r1, t1)] + _empty_slot_ops(state, r1, t1, slot1, 1)
                   + [(ASSIGN, p, r2, t2)])
            move = _finish(state, TRANSFER, ops, 0, [(r1, t1), target])
            if move is not None:
                return move
            options[i] = options[-1]
            options.pop()
        return None
    return _search(state.room_slots.items, build, rng)


def _swap_ok(state, p1, p2):
    a, b = state.patient_at[p1], state.patient_at[p2]
    if a == b:
        return False
    if state.frozen and (a[1] in state.frozen or b[1] in state.frozen):
        return False
    return (state.slots[b].surgeon in state.patient_surgeons[p1]
            and state.slots[a].surgeon in state.patient_surgeons[p2])


def _swap_move(state, p1, p2):
    a, b = state.patient_at[p1], state.patient_at[p2]
    ops = [(UNASSIGN, p1) + a, (UNASSIGN, p2) + b, (ASSIGN, p1) + b, (ASSIGN, p2) + a]
    return _finish(state, SWAP_PATIENTS, ops, 0, [a, b])


def swap_pairs(state: ScheduleState) -> list[tuple[int, int]]:
    """Every feasible unordered patient pair for a swap (p1 < p2)."""
    out = []
    for group in state.spec_scheduled:
        members = sorted(group)
        for i, p1 in enumerate(members):
            for p2 in members[i + 1:]:
                if _swap_ok(state, p1, p2) and _swap_move(state, p1, p2) is not None:
                    out.append((p1, p2))
    return out


def gen_swap_patients(state: ScheduleState, rng) -> Move | None:
    groups = state.spec_scheduled
    weights = [len(g) * len(g) for g in groups]
    if sum(weights) == 0:
        return None
    for _ in range(SWAP_ATTEMPTS):
        g = groups[rng.choices(range(len(groups)), weights)[0]]
        p1, p2 = g.choice(rng), g.choice(rng)
        if _swap_ok(state, p1, p2):
            move = _swap_move(state, p1, p2)
            if move is not None:
                return move
    # random scan; slower, but returns None only when no pair is feasible
    order = [g for g in groups if len(g) > 1]
    rng.shuffle(order)
    for g in order:
        members = list(g.items)
        rng.shuffle(members)
        for i, p1 in enumerate(members):
            for p2 in members[i + 1:]:
                if _swap_ok(state, p1, p2):
                    move = _swap_move(state, p1, p2)
                    if move is not None:
                        return move
    return None


def _relocate_ops(state, slot, r_from, r_to, t):
    ops = [(UNASSIGN, p, r_from, t) for p in slot.patients]
    ops.append((CLOSE, r_from, t, slot.surgeon, slot.specialty, 0))
    return ops, [(OPEN, r_to, t, slot.surgeon, slot.specialty, 0)] + [
        (ASSIGN, p, r_to, t) for p in slot.patients]


def gen_swap_block_or(state: ScheduleState, rng) -> Move | None:
    equipped = state.equipped

    def build(rt):
        r1, t = rt
        a = state.slots[rt]
        options = []
        for r2 in range(state.R):
            if r2 == r1 or not equipped[r2][a.specialty]:
                continue
            b = state.slots.get((r2, t))
            if b is None:
                if state.or_free(r2, t):
                    options.append(r2)
            elif b.elective and equipped[r1][b.specialty]:
                options.append(r2)
        if not options:
            return None
        r2 = options[int(rng.random() * len(options))]
        b = state.slots.get((r2, t))
        out_a, in_a = _relocate_ops(state, a, r1, r2, t)
        if b is None:
            ops = out_a + in_a
        else:
            out_b, in_b = _relocate_ops(state, b, r2, r1, t)
            ops = out_a + out_b + in_a + in_b
        return _finish(state, SWAP_BLOCK_OR, ops, 0, [(r1, t), (r2, t)])
    return _search(state.eslots.items, build, rng)


def gen_change_surgeon(state: ScheduleState, rng) -> Move | None:
    def build(rt):
        r, t = rt
        slot = state.slots[rt]
        h = slot.surgeon
        options = []
        for h2 in state.spec_surgeons[slot.specialty]:
            if h2 == h or not state.surgeon_free(h2, t):
                continue
            keep = [p for p in slot.patients if h2 in state.patient_surgeons[p]]
            if len(state.pools[h2]) >= len(slot.patients) - len(keep):
                options.append((h2, keep))
        while options:
            i = int(rng.random() * len(options))
            h2, keep = options[i]
            new = state.top_patients(h2, len(slot.patients) - len(keep), rng)
            ops = [(UNASSIGN, p, r, t) for p in slot.patients]
            ops.append((CLOSE, r, t, h, slot.specialty, 0))
            ops.append((OPEN, r, t, h2, slot.specialty, 0))
            ops += [(ASSIGN, p, r, t) for p in keep + new]
            move = _finish(state, CHANGE_SURGEON, ops, 0, [rt])
            if move is not None:
                return move
            options[i] = options[-1]
            options.pop()
        return None
    return _search(state.eslots.items, build, rng)


def gen_reassign_block(state: ScheduleState, rng) -> Move | None:
    """Give a weekday theatre block to a new surgeon and fill it greedily.

    Elective slots in the block (and overlapping half or full days of the
    same theatre) are emptied first; their patients go back on the list
    and may be picked again.
    """
    equipped = state.equipped
    slots = state.slots
    busy = state.busy

    def build(rt):
        r, t = rt
        cells = [(r, u) for u in (t, *state.overlaps[t]) if (r, u) in slots]
        if any(slots[c].reserve for c in cells):
            return None
        cleared = set(cells)
        released = [p for c in cells for p in slots[c].patients]
        options = []
        for h in state.avail_at[t]:
            s = state.surgeon_spec[h]
            if not equipped[r][s] or state.cap[s][state.kind[t]] <= 0:
                continue
            if cells == [rt] and slots[rt].surgeon == h:
                continue
            b = busy[h]
            if any(u in b and (b[u], u) not in cleared for u in (t, *state.overlaps[t])):
                continue
            if state.pools[h] or any(h in state.patient_surgeons[p] for p in released):
                options.append(h)
        if not options:
            return None
        h = options[int(rng.random() * len(options))]
        s = state.surgeon_spec[h]
        mine = [p for p in released if h in state.patient_surgeons[p]]
        patients = state.top_patients(h, state.cap[s][state.kind[t]], rng, extra=mine)
        ops = []
        for c in cells:
            slot = slots[c]
            ops += [(UNASSIGN, p) + c for p in slot.patients]
            ops.append((CLOSE,) + c + (slot.surgeon, slot.specialty, 0))
        ops.append((OPEN, r, t, h, s, 0))
        ops += [(ASSIGN, p, r, t) for p in patients]
        touched = cells if rt in cleared else cells + [rt]
        return _finish(state, REASSIGN_BLOCK, ops, len(patients) - len(released), touched)
    return _search(state.weekday_cells, build, rng)


GENERATORS = {
    INSERT: gen_insert,
    REMOVE: gen_remove,
    TRANSFER: gen_transfer,
    SWAP_PATIENTS: gen_swap_patients,
    SWAP_BLOCK_OR: gen_swap_block_or,
    CHANGE_SURGEON: gen_change_surgeon,
    REASSIGN_BLOCK: gen_reassign_block,
}


def random_move(kind: str, state: ScheduleState, rng) -> Move | None:
    """A random feasible move of ``kind`` or ``None`` if none exists."""
    return GENERATORS[kind](state, rng)


def apply(move: Move, state: ScheduleState) -> int:
    return state.apply(move)


def undo(move: Move, state: ScheduleState) -> None:
    state.undo(move)
