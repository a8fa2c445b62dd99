"""Mutable, indexed schedule used during construction and search.

A :class:`ScheduleState` keeps one slot per occupied (OR, block) plus the
indexes needed to sample and check moves in O(1)-ish time: surgeon
busy-maps, per-surgeon priority pools of waiting patients, and
swap-pop sets for uniform sampling.

All edits go through four primitives (open/close a slot, assign/unassign a
patient).  A move is a list of primitive ops; undo replays the inverses in
reverse order.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

import numpy as np

from .capacity import CapacityTable
from .feasibility import prev_overlap
from .model import FULL, Instance, Schedule

OPEN, CLOSE, ASSIGN, UNASSIGN = 0, 1, 2, 3
_INVERSE = {OPEN: CLOSE, CLOSE: OPEN, ASSIGN: UNASSIGN, UNASSIGN: ASSIGN}


class StaleMoveError(RuntimeError):
    """A move was applied to a state that changed since it was generated."""


class IndexedSet:
    """Set with O(1) add/remove and uniform random choice."""

    __slots__ = ("items", "pos")

    def __init__(self):
        self.items = []
        self.pos = {}

    def add(self, x):
        if x not in self.pos:
            self.pos[x] = len(self.items)
            self.items.append(x)

    def remove(self, x):
        i = self.pos.pop(x)
        last = self.items.pop()
        if i < len(self.items):
            self.items[i] = last
            self.pos[last] = i

    def choice(self, rng):
        return self.items[int(rng.random() * len(self.items))]

    def __len__(self):
        return len(self.items)

    def __contains__(self, x):
        return x in self.pos

    def __iter__(self):
        return iter(self.items)


def top_keys(pool: list, k: int, rng=None) -> list[int]:
    """First ``k`` patients of a sorted priority pool, random among cut-off ties."""
    if k <= 0:
        return []
    if k >= len(pool):
        return [x[2] for x in pool]
    boundary = pool[k - 1][:2]
    if rng is None or pool[k][:2] != boundary:
        return [x[2] for x in pool[:k]]
    lo = k - 1
    while lo > 0 and pool[lo - 1][:2] == boundary:
        lo -= 1
    hi = k
    while hi < len(pool) and pool[hi][:2] == boundary:
        hi += 1
    chosen = rng.sample([x[2] for x in pool[lo:hi]], k - lo)
    return [x[2] for x in pool[:lo]] + chosen


class Slot:
    __slots__ = ("specialty", "surgeon", "patients", "reserve")

    def __init__(self, specialty, surgeon, reserve=0):
        self.specialty = specialty
        self.surgeon = surgeon
        self.patients = []
        self.reserve = reserve

    @property
    def elective(self) -> bool:
        return self.reserve == 0


@dataclass(slots=True)
class Move:
    kind: str
    ops: list
    delta: int
    touched: tuple
    version: int
    applied_at: int = -1


class ScheduleState:
    def __init__(self, instance: Instance, capacities: CapacityTable,
                 schedule: Schedule | None = None, *, prev: Schedule | None = None,
                 rho: float | None = None, frozen=()):
        self.instance = instance
        self.capacities = capacities
        cal = instance.calendar
        self.R = instance.num_ors
        self.T = cal.num_blocks
        self.kind = cal.block_kind.tolist()
        self.weekend = cal.is_weekend.tolist()
        self.week = cal.block_week.tolist()
        self.day = cal.block_day.tolist()
        self.overlaps = cal.overlaps
        self.weekday_blocks = [t for t in range(self.T) if not self.weekend[t]]
        H, S, P = instance.num_surgeons, instance.num_specialties, instance.num_patients
        self.avail = instance.surgeon_available.tolist()
        self.avail_at = [[h for h in range(H) if self.avail[h][t]] for t in range(self.T)]
        self.surgeon_spec = instance.surgeon_specialty_index.tolist()
        self.spec_surgeons = [[h for h in range(H) if self.surgeon_spec[h] == s] for s in range(S)]
        self.patient_spec = instance.patient_specialty_index.tolist()
        surgeons_of = [[] for _ in range(P)]
        for p, h in zip(*np.nonzero(instance.can_treat)):
            surgeons_of[p].append(int(h))
        self.patient_surgeons = [tuple(x) for x in surgeons_of]
        self.equipped = instance.or_equipped.tolist()
        self.cap = [[capacities.elective(s, True), capacities.elective(s, False),
                     capacities.elective(s, False)] for s in range(S)]
        self.solo = capacities.solo_oversize.tolist()
        urg = instance.patient_urgency.tolist()
        wait = instance.patient_wait_days.tolist()
        self.key = [(urg[p], -wait[p], p) for p in range(P)]

        self.slots: dict[tuple[int, int], Slot] = {}
        self.busy: list[dict[int, int]] = [dict() for _ in range(H)]
        self.patient_at: list = [None] * P
        self.pools: list[list] = [[] for _ in range(H)]
        for p in range(P):
            for h in self.patient_surgeons[p]:
                self.pools[h].append(self.key[p])
        for pool in self.pools:
            pool.sort()
        self.scheduled = IndexedSet()
        self.spec_scheduled = [IndexedSet() for _ in range(S)]
        self.eslots = IndexedSet()
        self.surgeon_eslots = [IndexedSet() for _ in range(H)]
        self.room_slots = IndexedSet()  # elective slots below capacity
        self.free_cells = IndexedSet()  # weekday (r, t) with the theatre idle
        for r in range(self.R):
            for t in self.weekday_blocks:
                self.free_cells.add((r, t))
        self.weekday_cells = list(self.free_cells.items)
        self.frozen = frozenset(frozen)
        # every distinct content gets a fresh version; undo restores the earlier one
        self.version = 0
        self._clock = 0
        self._before: list[int] = []

        self.prev_block = [-1] * P
        self.prev_count = 0
        if prev is not None:
            for p, t in prev_overlap(instance, prev).items():
                self.prev_block[p] = t
            self.prev_count = sum(1 for t in self.prev_block if t >= 0)
        self.deviations = self.prev_count
        if rho is None or prev is None:
            self.dev_budget = None
        else:
            self.dev_budget = math.floor(rho * self.prev_count + 1e-9)
        if schedule is not None:
            self.load(schedule)

    # queries -------------------------------------------------------------
    @property
    def objective(self) -> int:
        return len(self.scheduled)

    def or_free(self, r: int, t: int) -> bool:
        slots = self.slots
        if (r, t) in slots:
            return False
        for u in self.overlaps[t]:
            if (r, u) in slots:
                return False
        return True

    def surgeon_free(self, h: int, t: int) -> bool:
        if not self.avail[h][t]:
            return False
        busy = self.busy[h]
        if t in busy:
            return False
        for u in self.overlaps[t]:
            if u in busy:
                return False
        return True

    def capacity(self, s: int, t: int) -> int:
        return self.cap[s][self.kind[t]]

    def room(self, r: int, t: int) -> int:
        slot = self.slots[r, t]
        return self.cap[slot.specialty][self.kind[t]] - len(slot.patients)

    def top_patients(self, h: int, k: int, rng=None, exclude=(), extra=()) -> list[int]:
        """Best ``k`` waiting patients of surgeon ``h`` by (urgency, longest wait).

        ``extra`` adds patients about to be released.  Patients tied on
        priority at the cut-off are drawn at random when an rng is given,
        otherwise by index.
        """
        pool = self.pools[h]
        if exclude:
            pool = [x for x in pool if x[2] not in exclude]
        if extra:
            pool = sorted(pool + [self.key[p] for p in extra])
        return top_keys(pool, k, rng)

    def is_deviating(self, p: int) -> bool:
        t0 = self.prev_block[p]
        if t0 < 0:
            return False
        at = self.patient_at[p]
        return at is None or at[1] != t0

    # primitives ----------------------------------------------------------
    def _open(self, r, t, h, s, reserve=0):
        self.slots[r, t] = Slot(s, h, reserve)
        self.busy[h][t] = r
        cells = self.free_cells
        for u in (t, *self.overlaps[t]):
            if (r, u) in cells:
                cells.remove((r, u))
        if reserve == 0:
            self.eslots.add((r, t))
            self.surgeon_eslots[h].add((r, t))
            if self.cap[s][self.kind[t]] > 0:
                self.room_slots.add((r, t))

    def _close(self, r, t, h, s, reserve=0):
        slot = self.slots.pop((r, t))
        assert not slot.patients
        del self.busy[h][t]
        for u in (t, *self.overlaps[t]):
            if not self.weekend[u] and self.or_free(r, u):
                self.free_cells.add((r, u))
        if reserve == 0:
            self.eslots.remove((r, t))
            self.surgeon_eslots[h].remove((r, t))
            if (r, t) in self.room_slots:
                self.room_slots.remove((r, t))

    def _assign(self, p, r, t):
        was = self.is_deviating(p)
        slot = self.slots[r, t]
        slot.patients.append(p)
        if len(slot.patients) >= self.cap[slot.specialty][self.kind[t]] and (r, t) in self.room_slots:
            self.room_slots.remove((r, t))
        self.patient_at[p] = (r, t)
        key = self.key[p]
        for h in self.patient_surgeons[p]:
            pool = self.pools[h]
            del pool[bisect.bisect_left(pool, key)]
        self.scheduled.add(p)
        self.spec_scheduled[self.patient_spec[p]].add(p)
        self.deviations += self.is_deviating(p) - was

    def _unassign(self, p, r, t):
        was = self.is_deviating(p)
        slot = self.slots[r, t]
        slot.patients.remove(p)
        if slot.reserve == 0 and len(slot.patients) < self.cap[slot.specialty][self.kind[t]]:
            self.room_slots.add((r, t))
        self.patient_at[p] = None
        key = self.key[p]
        for h in self.patient_surgeons[p]:
            bisect.insort(self.pools[h], key)
        self.scheduled.remove(p)
        self.spec_scheduled[self.patient_spec[p]].remove(p)
        self.deviations += self.is_deviating(p) - was

    def _run(self, op):
        code = op[0]
        if code == ASSIGN:
            self._assign(*op[1:])
        elif code == UNASSIGN:
            self._unassign(*op[1:])
        elif code == OPEN:
            self._open(*op[1:])
        else:
            self._close(*op[1:])

    # moves ---------------------------------------------------------------
    def make_move(self, kind: str, ops: list, delta: int, touched) -> Move:
        return Move(kind, ops, delta, tuple(touched), self.version)

    def apply(self, move: Move) -> int:
        if move.version != self.version:
            raise StaleMoveError(f"{move.kind} generated at v{move.version}, state at v{self.version}")
        for op in move.ops:
            self._run(op)
        self._before.append(self.version)
        self._bump(keep_history=True)
        move.applied_at = self.version
        return move.delta

    def undo(self, move: Move) -> None:
        """Revert the most recently applied move; repeat to unwind further."""
        if move.applied_at != self.version or not self._before:
            raise StaleMoveError(f"{move.kind} is not the last applied move")
        for op in reversed(move.ops):
            self._run((_INVERSE[op[0]],) + tuple(op[1:]))
        self.version = self._before.pop()
        move.applied_at = -1

    def _bump(self, keep_history: bool = False) -> None:
        self._clock += 1
        self.version = self._clock
        if not keep_history:
            self._before.clear()

    def place(self, r: int, t: int, h: int, s: int, patients=(), reserve: int = 0) -> None:
        """Open a slot and fill it; used by constructors, not undoable."""
        self._open(r, t, h, s, reserve)
        for p in patients:
            self._assign(p, r, t)
        self._bump()

    # conversion ----------------------------------------------------------
    def load(self, schedule: Schedule) -> None:
        surgeon_at = {}
        for h, r, t in schedule.surgeon_assign:
            surgeon_at[r, t] = h
        reserve = {}
        for (s, r, t), v in schedule.nonelective_reserve.items():
            if v > 0:
                reserve[r, t] = (s, v)
        for s, r, t in sorted(schedule.specialty_assign):
            if (r, t) not in surgeon_at:
                raise ValueError(f"specialty {s} at OR {r} block {t} has no surgeon")
            v = reserve.get((r, t), (s, 0))[1] if reserve.get((r, t), (s, 0))[0] == s else 0
            self._open(r, t, surgeon_at[r, t], s, v)
        for p, r, t in sorted(schedule.patient_assign):
            self._assign(p, r, t)
        self._bump()

    def to_schedule(self) -> Schedule:
        out = Schedule()
        for (r, t), slot in self.slots.items():
            out.specialty_assign.add((slot.specialty, r, t))
            out.surgeon_assign.add((slot.surgeon, r, t))
            if slot.reserve:
                out.nonelective_reserve[slot.specialty, r, t] = slot.reserve
            for p in slot.patients:
                out.patient_assign.add((p, r, t))
        return out

    def content_hash(self) -> str:
        return self.to_schedule().content_hash()

    def twd(self, r: int, t: int) -> tuple[int, int, int]:
        """(theatre, week, day) of an OR block."""
        return r, self.week[t], self.day[t]
