"""Constraint checking for schedules.

Each constraint family is checked on its own and every breach is reported;
nothing short-circuits.  Overlap families only visit block pairs that
overlap and have something assigned, so the cost is proportional to the
number of assignments rather than to R * T^2.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable

from .capacity import CapacityTable
from .model import Instance, Schedule

FAMILIES = ("C2", "C3", "C4", "C5", "C6", "C7", "C8", "C9", "C10", "C11", "C12",
            "C13", "C14", "C15", "C16", "SOLO")
BASELINE_FAMILIES = ("C2", "C3", "C4", "C5", "C6", "C7", "C8", "C9", "C10", "C12",
                     "C15", "C16")


class ScheduleStructureError(ValueError):
    """A schedule refers to entities outside the instance."""


@dataclass(frozen=True)
class Violation:
    constraint_id: str
    indices: tuple
    detail: str = field(default="", compare=False)

    @property
    def key(self) -> tuple:
        return self.constraint_id, self.indices


def check_structure(instance: Instance, schedule: Schedule) -> None:
    H, S, P, R, T = (instance.num_surgeons, instance.num_specialties, instance.num_patients,
                     instance.num_ors, instance.num_blocks)
    bounds = (("specialty_assign", schedule.specialty_assign, S),
              ("surgeon_assign", schedule.surgeon_assign, H),
              ("patient_assign", schedule.patient_assign, P),
              ("nonelective_reserve", schedule.nonelective_reserve.keys(), S))
    for name, entries, first in bounds:
        for e in entries:
            x, r, t = e
            if not (0 <= x < first and 0 <= r < R and 0 <= t < T):
                raise ScheduleStructureError(f"{name}: entry {e} out of bounds")
    for k, v in schedule.nonelective_reserve.items():
        if v < 0:
            raise ScheduleStructureError(f"nonelective_reserve: negative count at {k}")


def _pairs(occupied: Iterable[tuple[int, int]], overlaps) -> set[tuple[int, int, int]]:
    """Overlapping (r, t, tau) pairs with t < tau touching an occupied (r, t)."""
    out = set()
    for r, t in occupied:
        for u in overlaps[t]:
            out.add((r, min(t, u), max(t, u)))
    return out


def check_feasibility(instance: Instance, schedule: Schedule, capacities: CapacityTable,
                      families: Iterable[str] | None = None) -> list[Violation]:
    """Every violated constraint of the full model, empty iff feasible."""
    check_structure(instance, schedule)
    wanted = set(FAMILIES if families is None else families)
    cal = instance.calendar
    overlaps = cal.overlaps
    full = cal.is_full_day
    weekend = cal.is_weekend
    G = instance.surgeon_specialty
    spec_of_surgeon = instance.surgeon_specialty_index
    spec_of_patient = instance.patient_specialty_index
    E = instance.can_treat
    F = instance.surgeon_available
    M_psi = instance.max_nonelective_per_block
    out: list[Violation] = []

    X = defaultdict(set)  # (r, t) -> specialties
    for s, r, t in schedule.specialty_assign:
        X[r, t].add(s)
    Y = defaultdict(set)  # (r, t) -> surgeons
    for h, r, t in schedule.surgeon_assign:
        Y[r, t].add(h)
    Z = defaultdict(list)  # (r, t) -> patients
    for p, r, t in schedule.patient_assign:
        Z[r, t].append(p)
    Psi = {k: v for k, v in schedule.nonelective_reserve.items() if v > 0}
    psi_rt = Counter()
    for (s, r, t), v in Psi.items():
        psi_rt[r, t] += v

    if "C2" in wanted:
        counts = Counter(p for p, _, _ in schedule.patient_assign)
        for p, c in sorted(counts.items()):
            if c > 1:
                out.append(Violation("C2", (p,), f"patient {p} treated {c} times"))

    for fam, occ in (("C3", X), ("C4", Y)):
        if fam not in wanted:
            continue
        for r, t, u in sorted(_pairs(occ.keys(), overlaps)):
            n = len(occ.get((r, t), ())) + len(occ.get((r, u), ()))
            if n > 1:
                what = "specialties" if fam == "C3" else "surgeons"
                out.append(Violation(fam, (r, t, u), f"{n} {what} in OR {r} over blocks {t},{u}"))

    if "C5" in wanted:
        for h, r, t in sorted(schedule.surgeon_assign):
            if spec_of_surgeon[h] not in X.get((r, t), ()):
                out.append(Violation("C5", (h, r, t), f"surgeon {h} without own specialty"))

    if "C6" in wanted:
        for s, r, t in sorted(schedule.specialty_assign):
            if not instance.or_equipped[r, s]:
                out.append(Violation("C6", (s, r, t), f"OR {r} not equipped for {s}"))

    if "C7" in wanted or "C8" in wanted:
        for p, r, t in sorted(schedule.patient_assign):
            if "C7" in wanted and not any(E[p, h] for h in Y.get((r, t), ())):
                out.append(Violation("C7", (p, r, t), f"no compatible surgeon for patient {p}"))
            if "C8" in wanted and spec_of_patient[p] not in X.get((r, t), ()):
                out.append(Violation("C8", (p, r, t), f"specialty of patient {p} not assigned"))

    if "C9" in wanted:
        for (s, r, t), v in sorted(Psi.items()):
            present = sum(int(G[h, s]) for h in Y.get((r, t), ()))
            if v > M_psi * present:
                out.append(Violation("C9", (s, r, t), f"reserve {v} without a surgeon of {s}"))

    if "C10" in wanted:
        at = defaultdict(list)  # (h, t) -> ORs
        for h, r, t in schedule.surgeon_assign:
            at[h, t].append(r)
        for (h, t), rs in sorted(at.items()):
            if len(rs) > int(F[h, t]):
                out.append(Violation("C10", (h, t), f"surgeon {h} used {len(rs)}x at {t}"))
        # a surgeon cannot be in two theatres at once
        seen = set()
        for (h, t) in sorted(at):
            for u in overlaps[t]:
                if (h, u) in at and (h, min(t, u), max(t, u)) not in seen:
                    seen.add((h, min(t, u), max(t, u)))
                    out.append(Violation("C10", (h, min(t, u), max(t, u)),
                                         f"surgeon {h} in overlapping blocks {t},{u}"))

    if "C11" in wanted or "C12" in wanted:
        per = Counter()
        for p, r, t in schedule.patient_assign:
            per[spec_of_patient[p], r, t] += 1
        keys = set(per) | set(Psi)
        for s, r, t in sorted(keys):
            x = s in X.get((r, t), ())
            if "C11" in wanted and per.get((s, r, t), 0) > (capacities.elective(s, full[t]) if x else 0):
                out.append(Violation("C11", (s, r, t), f"{per[s, r, t]} electives over capacity"))
            v = Psi.get((s, r, t), 0)
            if "C12" in wanted and v > (capacities.nonelective(s, full[t]) if x else 0):
                out.append(Violation("C12", (s, r, t), f"reserve {v} over capacity"))

    if "C13" in wanted:
        for (r, t), v in sorted(psi_rt.items()):
            if v > M_psi or Z.get((r, t)):
                out.append(Violation("C13", (r, t), f"block shares reserve {v} with electives"))

    if "C14" in wanted:
        per_t = Counter(t for _, _, t in schedule.patient_assign)
        big = instance.num_ors * instance.max_elective_per_block
        for t, c in sorted(per_t.items()):
            if c > (0 if weekend[t] else big):
                out.append(Violation("C14", (t,), f"{c} electives in block {t}"))

    if "C15" in wanted:
        week = cal.block_week
        got = Counter()
        for (s, r, t), v in Psi.items():
            got[s, int(week[t])] += v
        target = instance.weekly_nonelective_target
        for w in range(instance.num_weeks):
            for s in range(instance.num_specialties):
                if got.get((s, w), 0) < target[s]:
                    out.append(Violation("C15", (s, w),
                                         f"reserved {got.get((s, w), 0)} < target {target[s]}"))

    if "C16" in wanted:
        per_t = Counter(t for _, _, t in schedule.specialty_assign)
        for t in range(instance.num_blocks):
            if not weekend[t]:
                continue
            n = per_t.get(t, 0) + sum(per_t.get(u, 0) for u in overlaps[t])
            if n > instance.weekend_or_limit:
                out.append(Violation("C16", (t,), f"{n} weekend theatres open around block {t}"))

    if "SOLO" in wanted:
        for (r, t), ps in sorted(Z.items()):
            if any(capacities.solo_oversize[spec_of_patient[p]] for p in ps):
                if len(ps) > 1 or psi_rt.get((r, t), 0) or not full[t]:
                    out.append(Violation("SOLO", (r, t), "solo-only surgery shares its block"))
        for (s, r, t), v in sorted(Psi.items()):
            if capacities.nonelective_solo[s] and (v > 1 or Z.get((r, t)) or not full[t]):
                out.append(Violation("SOLO", (r, t), "solo-only reservation shares its block"))

    return out


def prev_overlap(instance: Instance, prev: Schedule) -> dict[int, int]:
    """Patient -> previously scheduled block, for blocks outside the last week."""
    last = instance.num_weeks - 1
    week = instance.calendar.block_week
    return {p: t for p, _, t in prev.patient_assign if week[t] < last}


def deviations(instance: Instance, schedule: Schedule, prev: Schedule) -> dict[int, int]:
    """nu_p: 1 when a previously scheduled patient lost their block."""
    now = defaultdict(set)
    for p, _, t in schedule.patient_assign:
        now[p].add(t)
    return {p: int(t not in now.get(p, ())) for p, t in prev_overlap(instance, prev).items()}


def check_rolling(instance: Instance, schedule: Schedule, prev: Schedule, rho: float,
                  nu: dict[int, int] | None = None) -> list[Violation]:
    """Deviation constraints against the previous schedule ``prev``.

    ``prev`` must already be expressed in this horizon's block and patient
    indices.  Without an explicit ``nu`` the smallest consistent indicators
    are used, so only the budget can fail.
    """
    out = []
    needed = deviations(instance, schedule, prev)
    if nu is None:
        nu = needed
    else:
        for p, d in sorted(needed.items()):
            if d > nu.get(p, 0):
                out.append(Violation("C17", (p,), f"patient {p} moved but nu_p = 0"))
    budget = rho * len(prev_overlap(instance, prev))
    total = sum(nu.values())
    if total > budget + 1e-9:
        out.append(Violation("C18", (), f"{total} deviations exceed budget {budget:g}"))
    return out


@dataclass
class HoursReport:
    rows: list[dict]
    total_hours: float
    total_overtime: float

    @property
    def overtime_fraction(self) -> float:
        return self.total_overtime / self.total_hours if self.total_hours else 0.0

    def overtime_blocks(self) -> list[dict]:
        return [r for r in self.rows if r["overtime"] > 0]


def scheduled_hours(instance: Instance, schedule: Schedule,
                    capacities: CapacityTable) -> HoursReport:
    """q95 load and overtime of every occupied (OR, block)."""
    spec_of_patient = instance.patient_specialty_index
    loads: dict[tuple[int, int], list] = defaultdict(list)
    elective = Counter()
    for p, r, t in schedule.patient_assign:
        elective[spec_of_patient[p], r, t] += 1
    for (s, r, t), n in elective.items():
        loads[r, t].append((s, n, False))
    for (s, r, t), n in schedule.nonelective_reserve.items():
        if n > 0:
            loads[r, t].append((s, n, True))
    rows = []
    for (r, t), items in sorted(loads.items()):
        q = sum(capacities.q95(s, n, ne) for s, n, ne in items)
        length = instance.block_length(t)
        rows.append({"or": r, "block": t, "q95_hours": q, "length": length,
                     "overtime": max(0.0, q - length),
                     "nonelective": any(ne for _, _, ne in items),
                     "solo": any((capacities.nonelective_solo if ne else capacities.solo_oversize)[s]
                                 for s, _, ne in items)})
    return HoursReport(rows, sum(r["q95_hours"] for r in rows), sum(r["overtime"] for r in rows))


def validate(instance: Instance, schedule: Schedule, capacities: CapacityTable,
             prev: Schedule | None = None, rho: float = 0.1) -> list[Violation]:
    """Model constraints plus, given ``prev``, the deviation limit."""
    found = check_feasibility(instance, schedule, capacities)
    if prev is not None:
        found += check_rolling(instance, schedule, prev, rho)
    return found
