"""Rolling-horizon planning: solve a horizon, implement its first week, repeat.

Patients keep their ids across weeks; the previous horizon's schedule is
stored in absolute block numbers so it can be shifted onto the next
horizon.  Each step starts from that shifted schedule (overlap weeks kept
exactly) completed constructively over the free capacity, then runs the
chosen engine under the deviation budget.
"""

from __future__ import annotations

import logging
import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baseline import BaselinePlan, solve_baseline
from .capacity import CapacityTable, compute_table
from .constructive import construct_into
from .engines import EngineParams, search
from .feasibility import check_feasibility, check_rolling
from .generator import arrivals_stream
from .model import Instance, PatientRecord, Schedule
from .report import ExperimentReport, MethodResult
from .state import ScheduleState

log = logging.getLogger(__name__)

METHODS = ("constructive", "sa", "hyper_sa", "hyper_sa_ts")


class RollingError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class PlacedSlot:
    """One occupied (OR, absolute block) of an earlier horizon."""

    block: int
    ors: int
    surgeon: int
    specialty: int
    reserve: int
    patients: tuple[int, ...]  # stable patient ids


@dataclass
class RollingState:
    records: list[PatientRecord]
    week: int = 0
    rho: float = 0.1
    prev: list[PlacedSlot] | None = None
    implemented: list[tuple[int, int, int, int]] = field(default_factory=list)  # (week, id, r, t)
    treated: set[int] = field(default_factory=set)
    cancelled: set[int] = field(default_factory=set)
    next_id: int = 0
    log: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if not 0 <= self.rho <= 1:
            raise RollingError("rho must be in [0, 1]")
        if self.records:
            self.next_id = max(self.next_id, max(r.id for r in self.records) + 1)

    @property
    def waiting_ids(self) -> set[int]:
        return {r.id for r in self.records}

    @property
    def total_treated(self) -> int:
        return len(self.treated)


@dataclass
class StepResult:
    schedule: Schedule
    instance: Instance
    prev: Schedule | None
    objective: int
    treated: list[int]
    seconds: float


def horizon_instance(base: Instance, state: RollingState, horizon: int) -> Instance:
    return base.tile(horizon).with_patients(state.records)


def tiled_baseline(plan: BaselinePlan, base: Instance, horizon: int) -> Schedule:
    """The weekly reservations repeated over every week of the horizon."""
    bpw = base.calendar.blocks_per_week
    out = Schedule()
    week0 = [e for e in plan.reservations if e.block < bpw]
    for w in range(horizon):
        for e in week0:
            t = e.block + w * bpw
            out.specialty_assign.add((e.specialty, e.ors, t))
            out.surgeon_assign.add((e.surgeon, e.ors, t))
            out.nonelective_reserve[e.specialty, e.ors, t] = e.count
    return out


def _shifted(state: RollingState, inst: Instance, offset: int) -> Schedule:
    """Previous elective slots moved to this horizon's block numbers."""
    out = Schedule()
    if not state.prev:
        return out
    index = inst.patient_index
    for slot in state.prev:
        t = slot.block - offset
        if t < 0 or t >= inst.num_blocks or slot.reserve:
            continue
        patients = [index[i] for i in slot.patients if i in index]
        if not patients:
            continue
        out.specialty_assign.add((slot.specialty, slot.ors, t))
        out.surgeon_assign.add((slot.surgeon, slot.ors, t))
        out.patient_assign.update((p, slot.ors, t) for p in patients)
    return out


def to_absolute(schedule: Schedule, inst: Instance, offset: int) -> list[PlacedSlot]:
    ids = inst.patient_ids
    spec = {(r, t): s for s, r, t in schedule.specialty_assign}
    surgeon = {(r, t): h for h, r, t in schedule.surgeon_assign}
    patients: dict = {}
    for p, r, t in schedule.patient_assign:
        patients.setdefault((r, t), []).append(int(ids[p]))
    reserve = {(r, t): v for (s, r, t), v in schedule.nonelective_reserve.items() if v}
    return sorted(PlacedSlot(t + offset, r, surgeon[r, t], s, reserve.get((r, t), 0),
                             tuple(sorted(patients.get((r, t), ()))))
                  for (r, t), s in spec.items())


def step(state: RollingState, base: Instance, capacities: CapacityTable, plan: BaselinePlan,
         horizon: int, method: str, params: EngineParams | None = None, rng=None,
         verify: bool = False) -> StepResult:
    """Solve the horizon starting at ``state.week``; does not advance the state."""
    if method not in METHODS:
        raise RollingError(f"unknown method {method!r}")
    if not 1 <= horizon:
        raise RollingError("horizon must be at least one week")
    params = params or EngineParams()
    inst = horizon_instance(base, state, horizon)
    bpw = inst.calendar.blocks_per_week
    offset = state.week * bpw
    reserved = tiled_baseline(plan, base, horizon)

    started = time.perf_counter()
    shifted = _shifted(state, inst, offset)
    prev = shifted if state.prev is not None and horizon > 1 else None
    overlap_weeks = horizon - 1 if prev is not None else 0
    frozen = ()
    if prev is not None and state.rho == 0:
        frozen = range(overlap_weeks * bpw)
    st = ScheduleState(inst, capacities, reserved.merged(shifted), prev=prev, rho=state.rho,
                       frozen=frozen)
    construct_into(st)
    if method == "constructive":
        best = st.to_schedule()
    else:
        seed = params.seed if rng is None else rng
        best = search(st, params, random.Random(f"{seed}:{state.week}"), method, trace=False).best
    seconds = time.perf_counter() - started

    if verify:
        bad = check_feasibility(inst, best, capacities)
        if prev is not None:
            bad += check_rolling(inst, best, prev, state.rho)
        if bad:
            raise RollingError(f"step {state.week}: infeasible schedule {bad[:3]}")
    week0 = sorted(p for p, _, t in best.patient_assign if t < bpw)
    return StepResult(best, inst, prev, len(best.patient_assign),
                      [int(inst.patient_ids[p]) for p in week0], seconds)


def advance_week(state: RollingState, treated, arrivals=(), cancellations=()) -> RollingState:
    """Next week's waiting list: drop treated and cancelled, add arrivals, age by 7 days."""
    treated, cancellations = set(treated), set(cancellations)
    waiting = state.waiting_ids
    if treated - waiting:
        raise RollingError(f"treated patients not on the list: {sorted(treated - waiting)[:5]}")
    done = (treated | state.treated) & cancellations
    if done:
        raise RollingError(f"cannot cancel treated patients: {sorted(done)[:5]}")
    unknown = cancellations - waiting
    if unknown:
        raise RollingError(f"cancelled patients not on the list: {sorted(unknown)[:5]}")
    keep = [PatientRecord(r.id, r.specialty, r.surgeons, r.urgency, r.wait_days + 7)
            for r in state.records if r.id not in treated and r.id not in cancellations]
    next_id = state.next_id
    for a in arrivals:
        keep.append(PatientRecord(next_id, a.specialty, a.surgeons, a.urgency, a.wait_days))
        next_id += 1
    return RollingState(keep, state.week + 1, state.rho, state.prev, list(state.implemented),
                        state.treated | treated, state.cancelled | cancellations, next_id,
                        list(state.log))


@dataclass(frozen=True)
class PeriodConfig:
    weeks: int = 6
    horizon: int = 1
    method: str = "hyper_sa"
    rho: float = 0.1
    budget: str = "flat"
    arrival_seed: int = 0
    cancellation_prob: float = 0.0
    verify: bool = False


@dataclass
class PeriodResult:
    seed: int
    total: int
    seconds: float
    weekly: list[int]
    list_sizes: list[int]
    steps: list[dict]


def simulate(base: Instance, capacities: CapacityTable, plan: BaselinePlan, cfg: PeriodConfig,
             seed: int, params: EngineParams | None = None, on_step=None) -> PeriodResult:
    """One seed over the whole planning period."""
    if cfg.weeks < 1 or cfg.horizon < 1:
        raise RollingError("weeks and horizon must be positive")
    params = params or EngineParams.for_horizon(cfg.horizon, cfg.budget)
    params = params.with_seed(seed)
    state = RollingState(base.patient_records(), rho=cfg.rho)
    bpw = base.calendar.blocks_per_week
    weekly, sizes, seconds = [], [len(state.records)], 0.0
    for _ in range(cfg.weeks):
        res = step(state, base, capacities, plan, cfg.horizon, cfg.method, params,
                   verify=cfg.verify)
        if on_step is not None:
            on_step(state, res)
        seconds += res.seconds
        offset = state.week * bpw
        state.prev = to_absolute(res.schedule, res.instance, offset)
        for p, r, t in sorted(res.schedule.patient_assign):
            if t < bpw:
                state.implemented.append((state.week, int(res.instance.patient_ids[p]), r, t + offset))
        arrivals = arrivals_stream(base, state.week, seed=cfg.arrival_seed)
        cancelled = []
        if cfg.cancellation_prob > 0:
            crng = np.random.default_rng([cfg.arrival_seed, state.week, 1])
            left = sorted(state.waiting_ids - set(res.treated))
            cancelled = [i for i, u in zip(left, crng.random(len(left))) if u < cfg.cancellation_prob]
        state.log.append({"week": state.week, "objective": res.objective,
                          "treated": len(res.treated), "seconds": res.seconds})
        weekly.append(len(res.treated))
        state = advance_week(state, res.treated, arrivals, cancelled)
        sizes.append(len(state.records))
    return PeriodResult(seed, state.total_treated, seconds, weekly, sizes, state.log)


def _simulate_task(args):
    return simulate(*args)


def run_planning_period(base: Instance, cfg: PeriodConfig, seeds, params: EngineParams | None = None,
                        capacities: CapacityTable | None = None, plan: BaselinePlan | None = None,
                        workers: int = 1) -> ExperimentReport:
    """Report (mean, variance, worst, best, time) of total patients treated over the seeds."""
    capacities = capacities or compute_table(base)
    plan = plan or solve_baseline(base, capacities)  # not timed
    seeds = list(seeds)
    tasks = [(base, capacities, plan, cfg, s, params) for s in seeds]
    if workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_simulate_task, tasks))
    else:
        results = [_simulate_task(t) for t in tasks]
    out = MethodResult(cfg.horizon, cfg.method, cfg.budget, seeds,
                       [r.total for r in results], [r.seconds for r in results])
    return ExperimentReport([out])
