"""Greedy constructive heuristic with regret-based theatre choice.

The waiting list is grouped by (surgeon, specialty).  Repeatedly, the set
that can fill the biggest block is placed in its next free weekday block,
in the theatre where passing it over would cost the most, and filled with
its highest-priority patients.
"""

from __future__ import annotations

from dataclasses import dataclass

from .capacity import CapacityTable
from .model import FULL, Instance, Schedule
from .state import ScheduleState


@dataclass
class SurgeonSpecialtySet:
    surgeon: int
    specialty: int
    waiting_count: int
    full_day_available: tuple[bool, ...]  # per weekday of the horizon
    max_full: int
    max_half: int
    has_full: bool = False  # a full-day block is still usable
    has_half: bool = False

    @property
    def suppressed(self) -> bool:
        return full_day_suppressed(self)

    @property
    def actual_max(self) -> int:
        if self.has_full and not self.suppressed:
            cap = self.max_full
        elif self.has_half:
            cap = self.max_half
        else:
            cap = 0
        return min(cap, self.waiting_count)

    def actual_max_for(self, full_day: bool) -> int:
        return min(self.max_full if full_day else self.max_half, self.waiting_count)

    def sort_key(self):
        return (-self.actual_max, (self.max_full + self.max_half) / 2,
                self.has_full and not self.suppressed, -self.waiting_count,
                self.surgeon, self.specialty)


def full_day_suppressed(group: SurgeonSpecialtySet) -> bool:
    """Full days are withheld while the list fits in two half days."""
    return group.waiting_count <= 2 * group.max_half


def order_sets(sets: list[SurgeonSpecialtySet]) -> list[SurgeonSpecialtySet]:
    return sorted(sets, key=SurgeonSpecialtySet.sort_key)


def _weekday_full_blocks(instance: Instance) -> list[int]:
    cal = instance.calendar
    return [t for t in range(cal.num_blocks)
            if cal.block_kind[t] == FULL and not cal.is_weekend[t]]


def build_sets(instance: Instance, capacities: CapacityTable,
               state: ScheduleState | None = None) -> list[SurgeonSpecialtySet]:
    """One set per (surgeon, specialty) with at least one waiting patient."""
    if state is None:
        state = ScheduleState(instance, capacities)
    fulls = _weekday_full_blocks(instance)
    out = []
    for h, pool in enumerate(state.pools):
        if not pool:
            continue
        s = state.surgeon_spec[h]
        out.append(SurgeonSpecialtySet(
            h, s, len(pool), tuple(bool(state.avail[h][t]) for t in fulls),
            capacities.elective(s, True), capacities.elective(s, False)))
    return out


def regret_select_or(candidates: list[int], own: int, others: dict[int, list[int]]) -> int:
    """Theatre with the largest regret.

    ``own`` is what the selected set can place; ``others[r]`` lists what
    every other feasible set could place in theatre ``r``.  Regret is
    ``own`` minus the best alternative; ties go to the theatre whose
    next-best alternative is lower, then to the lowest id.
    """
    if not candidates:
        raise ValueError("no candidate theatre")

    def key(r):
        alt = sorted(others.get(r, ()), reverse=True) + [0, 0]
        return (-(own - alt[0]), alt[1], r)
    return min(candidates, key=key)


class _Constructor:
    def __init__(self, state: ScheduleState):
        self.st = state
        inst = state.instance
        cal = inst.calendar
        self.kind = state.kind
        # visitation order per set: weekdays ascending, full day before halves
        self.blocks = sorted((t for t in range(cal.num_blocks) if not state.weekend[t]),
                             key=lambda t: (state.week[t], state.day[t], self.kind[t]))
        self.sets = build_sets(inst, state.capacities, state)
        self.cursor = {g.surgeon: [0, 0] for g in self.sets}  # full / half pointers
        self.full_blocks = [t for t in self.blocks if self.kind[t] == FULL]
        self.half_blocks = [t for t in self.blocks if self.kind[t] != FULL]

    def usable(self, g: SurgeonSpecialtySet, t: int) -> bool:
        st = self.st
        if t in st.frozen or st.cap[g.specialty][self.kind[t]] <= 0:
            return False
        if not st.surgeon_free(g.surgeon, t):
            return False
        eq = st.equipped
        return any(eq[r][g.specialty] and st.or_free(r, t) for r in range(st.R))

    def refresh(self, g: SurgeonSpecialtySet) -> None:
        # usability only ever shrinks during construction, so pointers move forward
        g.waiting_count = len(self.st.pools[g.surgeon])
        cur = self.cursor[g.surgeon]
        for i, blocks in enumerate((self.full_blocks, self.half_blocks)):
            while cur[i] < len(blocks) and not self.usable(g, blocks[cur[i]]):
                cur[i] += 1
        g.has_full = cur[0] < len(self.full_blocks)
        g.has_half = cur[1] < len(self.half_blocks)

    def next_block(self, g: SurgeonSpecialtySet) -> int | None:
        allow_full = not g.suppressed
        for t in self.blocks:
            if self.kind[t] == FULL and not allow_full:
                continue
            if self.usable(g, t):
                return t
        return None

    def choose_or(self, g: SurgeonSpecialtySet, t: int) -> int:
        st = self.st
        full = self.kind[t] == FULL
        candidates = [r for r in range(st.R) if st.equipped[r][g.specialty] and st.or_free(r, t)]
        if len(candidates) == 1:
            return candidates[0]
        own = g.actual_max_for(full)
        by_spec: dict[int, list[int]] = {}
        for o in self.sets:
            if o is g or o.waiting_count == 0 or (full and o.suppressed):
                continue
            if st.cap[o.specialty][self.kind[t]] <= 0 or not st.surgeon_free(o.surgeon, t):
                continue
            by_spec.setdefault(o.specialty, []).append(o.actual_max_for(full))
        others = {r: [v for s, vals in by_spec.items() if st.equipped[r][s] for v in vals]
                  for r in candidates}
        return regret_select_or(candidates, own, others)

    def run(self) -> None:
        st = self.st
        for g in self.sets:
            self.refresh(g)
        active = [g for g in self.sets if g.actual_max > 0]
        while active:
            g = min(active, key=SurgeonSpecialtySet.sort_key)
            t = self.next_block(g)
            if t is None:
                active.remove(g)
                continue
            r = self.choose_or(g, t)
            k = min(st.cap[g.specialty][self.kind[t]], g.waiting_count)
            st.place(r, t, g.surgeon, g.specialty, st.top_patients(g.surgeon, k))
            for o in active:
                self.refresh(o)
            active = [o for o in active if o.actual_max > 0]


def construct_into(state: ScheduleState) -> ScheduleState:
    """Fill the free weekday capacity of ``state`` in place."""
    _Constructor(state).run()
    return state


def construct(instance: Instance, capacities: CapacityTable,
              baseline: Schedule | None = None) -> Schedule:
    """Constructive schedule on top of the baseline reservations."""
    if baseline is not None and hasattr(baseline, "to_schedule"):
        baseline = baseline.to_schedule()
    state = ScheduleState(instance, capacities, baseline)
    return construct_into(state).to_schedule()
