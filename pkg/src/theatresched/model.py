"""Instance and schedule data model.

Blocks are laid out day by day, three per day: the full-day block first,
then the morning and afternoon half-day blocks.  The full-day block
overlaps both halves; the halves do not overlap each other.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

FULL, AM, PM = 0, 1, 2
BLOCKS_PER_DAY = 3
KIND_NAMES = ("full", "am", "pm")

STANDARD_WEEK = (False, False, False, False, False, True, True)


class InstanceError(ValueError):
    """Raised when an instance breaks a structural invariant."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class Calendar:
    """Weekly day pattern (True marks a weekend day) repeated ``num_weeks`` times."""

    weekend_days: tuple[bool, ...] = STANDARD_WEEK
    num_weeks: int = 1

    @property
    def days_per_week(self) -> int:
        return len(self.weekend_days)

    @property
    def blocks_per_week(self) -> int:
        return BLOCKS_PER_DAY * self.days_per_week

    @property
    def num_blocks(self) -> int:
        return self.blocks_per_week * self.num_weeks

    def block_of(self, week: int, day: int, kind: int) -> int:
        return week * self.blocks_per_week + day * BLOCKS_PER_DAY + kind

    @cached_property
    def block_kind(self) -> np.ndarray:
        return np.arange(self.num_blocks) % BLOCKS_PER_DAY

    @cached_property
    def block_week(self) -> np.ndarray:
        return np.arange(self.num_blocks) // self.blocks_per_week

    @cached_property
    def block_day(self) -> np.ndarray:
        """Day-of-week index of each block."""
        return (np.arange(self.num_blocks) % self.blocks_per_week) // BLOCKS_PER_DAY

    @cached_property
    def is_full_day(self) -> np.ndarray:
        return self.block_kind == FULL

    @cached_property
    def is_weekend(self) -> np.ndarray:
        pattern = np.asarray(self.weekend_days, dtype=bool)
        return pattern[self.block_day]

    @cached_property
    def non_overlap(self) -> np.ndarray:
        """D matrix: 1 when two blocks do not overlap in time."""
        T = self.num_blocks
        absolute_day = np.arange(T) // BLOCKS_PER_DAY
        kind = self.block_kind
        same_day = absolute_day[:, None] == absolute_day[None, :]
        halves = (kind[:, None] != FULL) & (kind[None, :] != FULL)
        distinct_halves = halves & (kind[:, None] != kind[None, :])
        overlap = same_day & ~distinct_halves
        return ~overlap

    @cached_property
    def overlaps(self) -> tuple[tuple[int, ...], ...]:
        """For each block, the other blocks it overlaps."""
        D = self.non_overlap
        return tuple(
            tuple(int(u) for u in np.flatnonzero(~D[t]) if u != t)
            for t in range(self.num_blocks)
        )

    def block_week_matrix(self) -> np.ndarray:
        U = np.zeros((self.num_blocks, self.num_weeks), dtype=bool)
        U[np.arange(self.num_blocks), self.block_week] = True
        return U


@dataclass(frozen=True)
class PatientRecord:
    id: int
    specialty: int
    surgeons: tuple[int, ...]
    urgency: int = 3
    wait_days: int = 0


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Instance:
    """All sets and parameters of one scheduling horizon.

    Matrices are read-only numpy arrays.  ``surgeon_available`` covers every
    block of the horizon; :meth:`tile` stretches a one-week pattern over more
    weeks.  Patients carry stable ``patient_ids`` so schedules survive waiting
    list updates.
    """

    calendar: Calendar
    num_ors: int
    surgeon_specialty: np.ndarray  # H x S
    surgeon_available: np.ndarray  # H x T
    can_treat: np.ndarray  # P x H
    patient_specialty: np.ndarray  # P x S
    or_equipped: np.ndarray  # R x S
    weekly_nonelective_target: np.ndarray  # S
    duration_params: np.ndarray  # S x 2, (meanlog, sdlog) in hours
    patient_urgency: np.ndarray  # P
    patient_wait_days: np.ndarray  # P
    patient_ids: np.ndarray  # P
    nonelective_duration_params: np.ndarray | None = None  # S x 2, NaN rows fall back
    max_nonelective_per_block: int = 12
    max_elective_per_block: int = 12
    weekend_or_limit: int = 4
    full_day_hours: float = 10.0
    half_day_hours: float = 5.0
    specialty_names: tuple[str, ...] = ()
    arrival_rates: np.ndarray | None = None  # S, expected elective requests per week
    urgency_mix: tuple[float, float, float] = (0.1, 0.4, 0.5)

    def __post_init__(self):
        fix = lambda name, dtype: object.__setattr__(self, name, _frozen(getattr(self, name), dtype))
        for name in ("surgeon_specialty", "surgeon_available", "can_treat",
                     "patient_specialty", "or_equipped"):
            fix(name, bool)
        fix("weekly_nonelective_target", np.int64)
        fix("duration_params", float)
        fix("patient_urgency", np.int64)
        fix("patient_wait_days", np.int64)
        fix("patient_ids", np.int64)
        if self.nonelective_duration_params is not None:
            fix("nonelective_duration_params", float)
        if self.arrival_rates is not None:
            fix("arrival_rates", float)
        object.__setattr__(self, "specialty_names", tuple(self.specialty_names))
        object.__setattr__(self, "urgency_mix", tuple(float(x) for x in self.urgency_mix))
        # reshape empties so the patient axis is always present
        P = len(self.patient_ids)
        if self.can_treat.size == 0:
            object.__setattr__(self, "can_treat", _frozen(np.zeros((P, self.num_surgeons)), bool))
        if self.patient_specialty.size == 0:
            object.__setattr__(self, "patient_specialty",
                               _frozen(np.zeros((P, self.num_specialties)), bool))

    # sizes -------------------------------------------------------------
    @property
    def num_surgeons(self) -> int:
        return self.surgeon_specialty.shape[0]

    @property
    def num_specialties(self) -> int:
        return self.surgeon_specialty.shape[1]

    @property
    def num_patients(self) -> int:
        return len(self.patient_ids)

    @property
    def num_blocks(self) -> int:
        return self.calendar.num_blocks

    @property
    def num_weeks(self) -> int:
        return self.calendar.num_weeks

    # calendar shortcuts --------------------------------------------------
    @property
    def is_full_day(self) -> np.ndarray:
        return self.calendar.is_full_day

    @property
    def is_weekend(self) -> np.ndarray:
        return self.calendar.is_weekend

    @property
    def non_overlap(self) -> np.ndarray:
        return self.calendar.non_overlap

    @property
    def block_week(self) -> np.ndarray:
        return self.calendar.block_week_matrix()

    def block_length(self, t: int) -> float:
        return self.full_day_hours if self.calendar.is_full_day[t] else self.half_day_hours

    @cached_property
    def patient_specialty_index(self) -> np.ndarray:
        return np.argmax(self.patient_specialty, axis=1) if self.num_patients else np.zeros(0, int)

    @cached_property
    def surgeon_specialty_index(self) -> np.ndarray:
        return np.argmax(self.surgeon_specialty, axis=1)

    def nonelective_params(self, s: int) -> tuple[float, float]:
        ne = self.nonelective_duration_params
        if ne is not None and not np.isnan(ne[s]).any():
            return float(ne[s, 0]), float(ne[s, 1])
        return float(self.duration_params[s, 0]), float(self.duration_params[s, 1])

    # derived instances ---------------------------------------------------
    def tile(self, num_weeks: int) -> "Instance":
        """Same instance over ``num_weeks`` weeks, repeating weekly availability."""
        cal = Calendar(self.calendar.weekend_days, num_weeks)
        cols = np.arange(cal.num_blocks) % self.num_blocks
        return dataclasses.replace(self, calendar=cal,
                                   surgeon_available=self.surgeon_available[:, cols])

    def patient_records(self) -> list[PatientRecord]:
        spec = self.patient_specialty_index
        return [
            PatientRecord(int(self.patient_ids[p]), int(spec[p]),
                          tuple(int(h) for h in np.flatnonzero(self.can_treat[p])),
                          int(self.patient_urgency[p]), int(self.patient_wait_days[p]))
            for p in range(self.num_patients)
        ]

    def with_patients(self, records: Sequence[PatientRecord]) -> "Instance":
        P, H, S = len(records), self.num_surgeons, self.num_specialties
        E = np.zeros((P, H), dtype=bool)
        I = np.zeros((P, S), dtype=bool)
        for i, rec in enumerate(records):
            I[i, rec.specialty] = True
            E[i, list(rec.surgeons)] = True
        return dataclasses.replace(
            self,
            can_treat=E,
            patient_specialty=I,
            patient_urgency=np.array([r.urgency for r in records], dtype=np.int64),
            patient_wait_days=np.array([r.wait_days for r in records], dtype=np.int64),
            patient_ids=np.array([r.id for r in records], dtype=np.int64),
        )

    @cached_property
    def patient_index(self) -> dict[int, int]:
        return {int(pid): i for i, pid in enumerate(self.patient_ids)}

    def validate(self) -> None:
        """Raise :class:`InstanceError` listing every broken invariant."""
        problems = []
        H, S, P, R, T = (self.num_surgeons, self.num_specialties, self.num_patients,
                         self.num_ors, self.num_blocks)
        shapes = {
            "surgeon_specialty": (H, S), "surgeon_available": (H, T), "can_treat": (P, H),
            "patient_specialty": (P, S), "or_equipped": (R, S),
            "weekly_nonelective_target": (S,), "duration_params": (S, 2),
            "patient_urgency": (P,), "patient_wait_days": (P,),
        }
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                problems.append(f"{name}: shape {getattr(self, name).shape}, expected {shape}")
        if problems:
            raise InstanceError(problems)
        for h in np.flatnonzero(self.surgeon_specialty.sum(axis=1) != 1):
            problems.append(f"surgeon {h} must belong to exactly one specialty")
        for p in np.flatnonzero(self.patient_specialty.sum(axis=1) != 1):
            problems.append(f"patient {self.patient_ids[p]} must have exactly one specialty")
        for p in np.flatnonzero(self.can_treat.sum(axis=1) < 1):
            problems.append(f"patient {self.patient_ids[p]} has no compatible surgeon")
        mismatch = self.can_treat & ~(self.patient_specialty.astype(int)
                                      @ self.surgeon_specialty.T.astype(int)).astype(bool)
        for p, h in zip(*np.nonzero(mismatch)):
            problems.append(f"patient {self.patient_ids[p]} treatable by surgeon {h} of another specialty")
        if len(set(self.patient_ids.tolist())) != P:
            problems.append("patient ids are not unique")
        if not set(self.patient_urgency.tolist()) <= {1, 2, 3}:
            problems.append("urgency categories must be 1, 2 or 3")
        if (self.patient_wait_days < 0).any():
            problems.append("wait days must be nonnegative")
        if (self.weekly_nonelective_target < 0).any():
            problems.append("non-elective targets must be nonnegative")
        if (self.duration_params[:, 1] < 0).any():
            problems.append("sdlog must be nonnegative")
        if self.specialty_names and len(self.specialty_names) != S:
            problems.append("specialty_names length differs from specialty count")
        if problems:
            raise InstanceError(problems)


@dataclass
class Schedule:
    """Sparse decision variables; an absent key means zero.

    ``patient_assign`` stores instance-local patient indices.
    """

    specialty_assign: set[tuple[int, int, int]] = field(default_factory=set)
    surgeon_assign: set[tuple[int, int, int]] = field(default_factory=set)
    patient_assign: set[tuple[int, int, int]] = field(default_factory=set)
    nonelective_reserve: dict[tuple[int, int, int], int] = field(default_factory=dict)

    def copy(self) -> "Schedule":
        return Schedule(set(self.specialty_assign), set(self.surgeon_assign),
                        set(self.patient_assign), dict(self.nonelective_reserve))

    def merged(self, other: "Schedule") -> "Schedule":
        out = self.copy()
        out.specialty_assign |= other.specialty_assign
        out.surgeon_assign |= other.surgeon_assign
        out.patient_assign |= other.patient_assign
        for k, v in other.nonelective_reserve.items():
            out.nonelective_reserve[k] = out.nonelective_reserve.get(k, 0) + v
        return out

    def restrict_blocks(self, keep) -> "Schedule":
        """Entries whose block ``t`` satisfies ``keep(t)``."""
        return Schedule(
            {e for e in self.specialty_assign if keep(e[2])},
            {e for e in self.surgeon_assign if keep(e[2])},
            {e for e in self.patient_assign if keep(e[2])},
            {k: v for k, v in self.nonelective_reserve.items() if keep(k[2]) and v},
        )

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for part in (sorted(self.specialty_assign), sorted(self.surgeon_assign),
                     sorted(self.patient_assign),
                     sorted((k, v) for k, v in self.nonelective_reserve.items() if v)):
            h.update(repr(part).encode())
            h.update(b"|")
        return h.hexdigest()

    def __eq__(self, other):
        if not isinstance(other, Schedule):
            return NotImplemented
        return (self.specialty_assign == other.specialty_assign
                and self.surgeon_assign == other.surgeon_assign
                and self.patient_assign == other.patient_assign
                and {k: v for k, v in self.nonelective_reserve.items() if v}
                == {k: v for k, v in other.nonelective_reserve.items() if v})


def objective(schedule: Schedule) -> int:
    """Number of elective surgeries scheduled."""
    return len(schedule.patient_assign)


def blocks_with(entries: Iterable[tuple[int, int, int]]) -> dict[tuple[int, int], list[int]]:
    """Group (x, r, t) triples by (r, t)."""
    out: dict[tuple[int, int], list[int]] = {}
    for x, r, t in entries:
        out.setdefault((r, t), []).append(x)
    return out
