"""Weekly non-elective reservations using as few theatre blocks as possible.

Greedy: specialties that need the most blocks go first; each reservation
takes the first free cell (weekend before weekday, then earliest block,
lowest OR) where a surgeon of the specialty is free.  Half-day blocks are
used when the remaining need fits one.  A local pass then drops
reservations whose patients fit in the slack of the others and merges pairs
of half-day reservations into one full day.  Finally every reservation is
topped up to its block's capacity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .capacity import CapacityTable
from .model import AM, FULL, PM, Instance, Schedule


class BaselineError(ValueError):
    """Weekly targets cannot be met; ``shortfall`` maps (week, specialty) to missing patients."""

    def __init__(self, shortfall: dict[tuple[int, int], int]):
        self.shortfall = dict(shortfall)
        parts = ", ".join(f"week {w} specialty {s}: {n}" for (w, s), n in sorted(shortfall.items()))
        super().__init__(f"non-elective targets unreachable ({parts})")


@dataclass(frozen=True, order=True)
class Reservation:
    specialty: int
    ors: int
    block: int
    count: int
    surgeon: int


@dataclass
class BaselinePlan:
    reservations: list[Reservation] = field(default_factory=list)

    @property
    def objective(self) -> int:
        """Number of reserved (specialty, OR, block) entries."""
        return len(self.reservations)

    def to_schedule(self) -> Schedule:
        out = Schedule()
        for e in self.reservations:
            out.specialty_assign.add((e.specialty, e.ors, e.block))
            out.surgeon_assign.add((e.surgeon, e.ors, e.block))
            out.nonelective_reserve[e.specialty, e.ors, e.block] = e.count
        return out

    @classmethod
    def from_schedule(cls, schedule: Schedule) -> "BaselinePlan":
        surgeon_at = {(r, t): h for h, r, t in schedule.surgeon_assign}
        return cls(sorted(Reservation(s, r, t, v, surgeon_at[r, t])
                          for (s, r, t), v in schedule.nonelective_reserve.items() if v > 0))

    def reserved_capacity(self, instance: Instance, week: int | None = None) -> int:
        weeks = instance.calendar.block_week
        return sum(e.count for e in self.reservations if week is None or weeks[e.block] == week)


class _Week:
    """Occupancy of one week while reservations are placed."""

    def __init__(self, instance: Instance, capacities: CapacityTable, week: int):
        cal = instance.calendar
        self.inst = instance
        self.cap = capacities
        self.kind = cal.block_kind
        self.weekend = cal.is_weekend
        self.overlaps = cal.overlaps
        self.m_psi = instance.max_nonelective_per_block
        self.xi = instance.weekend_or_limit
        lo = week * cal.blocks_per_week
        blocks = range(lo, lo + cal.blocks_per_week)
        self.order = sorted(blocks, key=lambda t: (not self.weekend[t], t))
        self.or_busy: set = set()
        self.surgeon_busy: set = set()
        self.open_at: dict[int, int] = {}
        self.spec_surgeons = [list(map(int, instance.surgeon_specialty[:, s].nonzero()[0]))
                              for s in range(instance.num_specialties)]

    def capacity(self, s: int, t: int) -> int:
        return min(self.cap.nonelective(s, self.kind[t] == FULL), self.m_psi)

    def _cell_free(self, busy, key, t) -> bool:
        return (key, t) not in busy and all((key, u) not in busy for u in self.overlaps[t])

    def _weekend_ok(self, t) -> bool:
        if not self.weekend[t]:
            return True
        for u in (t, *self.overlaps[t]):
            n = self.open_at.get(u, 0) + sum(self.open_at.get(v, 0) for v in self.overlaps[u])
            if n + 1 > self.xi:
                return False
        return True

    def find(self, s: int, kinds) -> tuple[int, int, int] | None:
        F = self.inst.surgeon_available
        for t in self.order:
            if self.kind[t] not in kinds or self.capacity(s, t) <= 0 or not self._weekend_ok(t):
                continue
            h = next((h for h in self.spec_surgeons[s]
                      if F[h, t] and self._cell_free(self.surgeon_busy, h, t)), None)
            if h is None:
                continue
            for r in range(self.inst.num_ors):
                if self.inst.or_equipped[r, s] and self._cell_free(self.or_busy, r, t):
                    return r, t, h
        return None

    def take(self, r, t, h):
        self.or_busy.add((r, t))
        self.surgeon_busy.add((h, t))
        self.open_at[t] = self.open_at.get(t, 0) + 1

    def release(self, r, t, h):
        self.or_busy.discard((r, t))
        self.surgeon_busy.discard((h, t))
        self.open_at[t] -= 1


def _solve_week(instance, capacities, week) -> tuple[list[Reservation], dict[int, int]]:
    wk = _Week(instance, capacities, week)
    target = instance.weekly_nonelective_target
    S = instance.num_specialties

    def need_blocks(s):
        full = min(capacities.nonelective(s, True), instance.max_nonelective_per_block)
        return target[s] / full if full else float("inf")

    res: list[list] = []  # [s, r, t, count, h]
    shortfall = {}
    for s in sorted(range(S), key=lambda s: (-need_blocks(s), s)):
        left = int(target[s])
        half = min(capacities.nonelective(s, False), instance.max_nonelective_per_block)
        while left > 0:
            prefer = (AM, PM) if 0 < left <= half else (FULL,)
            other = (FULL,) if prefer != (FULL,) else (AM, PM)
            cell = wk.find(s, prefer) or wk.find(s, other)
            if cell is None:
                shortfall[s] = left
                break
            r, t, h = cell
            n = min(wk.capacity(s, t), left)
            wk.take(r, t, h)
            res.append([s, r, t, n, h])
            left -= n

    improved = True
    while improved:
        improved = _drop_one(res, wk) or _merge_one(res, wk)

    for e in res:
        e[3] = wk.capacity(e[0], e[2])
    return [Reservation(*e) for e in res], shortfall


def _drop_one(res, wk) -> bool:
    for e in reversed(res):
        s = e[0]
        others = [o for o in res if o is not e and o[0] == s]
        slack = sum(wk.capacity(s, o[2]) - o[3] for o in others)
        if slack >= e[3]:
            left = e[3]
            for o in others:
                add = min(left, wk.capacity(s, o[2]) - o[3])
                o[3] += add
                left -= add
            res.remove(e)
            wk.release(e[1], e[2], e[4])
            return True
    return False


def _merge_one(res, wk) -> bool:
    halves = [e for e in res if wk.kind[e[2]] != FULL]
    for i, a in enumerate(halves):
        for b in halves[i + 1:]:
            if a[0] != b[0]:
                continue
            s = a[0]
            wk.release(a[1], a[2], a[4])
            wk.release(b[1], b[2], b[4])
            cell = wk.find(s, (FULL,))
            if cell is not None and wk.capacity(s, cell[1]) >= a[3] + b[3]:
                r, t, h = cell
                wk.take(r, t, h)
                res.remove(a)
                res.remove(b)
                res.append([s, r, t, a[3] + b[3], h])
                return True
            wk.take(a[1], a[2], a[4])
            wk.take(b[1], b[2], b[4])
    return False


def solve_baseline(instance: Instance, capacities: CapacityTable) -> BaselinePlan:
    """Reservations meeting every weekly target; raises :class:`BaselineError` otherwise."""
    plan: list[Reservation] = []
    shortfall = {}
    for w in range(instance.num_weeks):
        found, short = _solve_week(instance, capacities, w)
        plan.extend(found)
        shortfall.update({(w, s): n for s, n in short.items()})
    if shortfall:
        raise BaselineError(shortfall)
    return BaselinePlan(sorted(plan))
