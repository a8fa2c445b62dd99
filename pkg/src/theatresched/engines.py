"""Simulated annealing and its hyper-heuristic variants.

All three engines share one loop over a :class:`ScheduleState`; they differ
in how a move kind is picked and how the temperature reacts:

* ``sa``: uniform kind, geometric cooling every iteration.
* ``hyper_sa``: kinds are tried in blocks of ``block_size`` iterations; the
  highest-ranked non-tabu kind is used, a block that improves the objective
  raises the kind's rank, one that does not makes it tabu.  Accepted moves
  cool, rejected ones reheat.
* ``hyper_sa_ts``: ``hyper_sa`` plus a tabu list of (theatre, week, day)
  cells that worsening moves touched.  Its maximum length shrinks by one
  every ``twd_shrink_period`` iterations.
"""

from __future__ import annotations

import csv
import math
import random
from collections import deque
from dataclasses import asdict, dataclass, field, replace

from .capacity import CapacityTable
from .model import Instance, Schedule
from .moves import KINDS, random_move
from .state import ScheduleState

ITERATIONS_PER_WEEK = 16000
TRACE_COLUMNS = ("iteration", "kind", "delta", "accepted", "temperature", "best")


@dataclass(frozen=True)
class EngineParams:
    total_iterations: int = ITERATIONS_PER_WEEK
    initial_temperature: float = 2.0
    cooling_factor: float = 0.999
    reheat_factor: float = 1.0001
    min_temperature: float = 1e-4
    max_temperature: float = 1e3
    block_size: int = 200
    neighborhood_tabu_tenure: int = 400
    twd_tabu_initial_length: int = 20
    twd_shrink_period: int = 800
    tabu_retries: int = 10
    seed: int = 0

    def __post_init__(self):
        problems = []
        if self.total_iterations < 0:
            problems.append("total_iterations must be >= 0")
        if not 0 < self.cooling_factor < 1:
            problems.append("cooling_factor must be in (0, 1)")
        if self.reheat_factor <= 1:
            problems.append("reheat_factor must be > 1")
        if not 0 < self.min_temperature <= self.initial_temperature <= self.max_temperature:
            problems.append("need 0 < min_temperature <= initial_temperature <= max_temperature")
        for name in ("block_size", "twd_shrink_period"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1")
        for name in ("neighborhood_tabu_tenure", "twd_tabu_initial_length", "tabu_retries"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be >= 0")
        if problems:
            raise ValueError("; ".join(problems))

    @classmethod
    def for_horizon(cls, weeks: int, budget: str = "flat", **overrides) -> "EngineParams":
        """Params whose iteration budget follows the flat or per-week regime."""
        if budget not in ("flat", "scaled"):
            raise ValueError(f"unknown budget mode {budget!r}")
        n = ITERATIONS_PER_WEEK * (weeks if budget == "scaled" else 1)
        return cls(**{"total_iterations": n, **overrides})

    def with_seed(self, seed: int) -> "EngineParams":
        return replace(self, seed=seed)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class RankState:
    """Rank and tabu expiry of every move kind."""

    kinds: tuple[str, ...]
    rank: dict = field(default_factory=dict)
    tabu_until: dict = field(default_factory=dict)
    improvements: dict = field(default_factory=dict)

    def __post_init__(self):
        for k in self.kinds:
            self.rank.setdefault(k, 0.0)
            self.tabu_until.setdefault(k, -1)
            self.improvements.setdefault(k, 0)

    def is_tabu(self, kind: str, it: int) -> bool:
        return it < self.tabu_until[kind]

    def select(self, it: int, rng) -> str:
        eligible = [k for k in self.kinds if not self.is_tabu(k, it)]
        if not eligible:
            # aspiration: release the kind that became tabu first
            oldest = min(self.kinds, key=lambda k: (self.tabu_until[k], self.kinds.index(k)))
            self.tabu_until[oldest] = -1
            eligible = [oldest]
        top = max(self.rank[k] for k in eligible)
        best = [k for k in eligible if self.rank[k] == top]
        return _pick(best, rng)

    def update(self, kind: str, improved: bool, it: int, tenure: int) -> None:
        if improved:
            self.rank[kind] += 1
            self.improvements[kind] += 1
        else:
            self.tabu_until[kind] = it + tenure


class TwdTabu:
    """Recently worsened (theatre, week, day) cells, oldest evicted first."""

    def __init__(self, max_length: int):
        self.max_length = max_length
        self.entries: deque = deque()
        self._members: set = set()

    def __contains__(self, twd) -> bool:
        return twd in self._members

    def __len__(self) -> int:
        return len(self.entries)

    def push(self, twd) -> None:
        if self.max_length <= 0:
            return
        if twd in self._members:
            self.entries.remove(twd)
        else:
            self._members.add(twd)
        self.entries.append(twd)
        self._trim()

    def shrink(self) -> None:
        self.max_length = max(0, self.max_length - 1)
        self._trim()

    def _trim(self):
        while len(self.entries) > self.max_length:
            self._members.discard(self.entries.popleft())


def _pick(options, rng):
    """Uniform choice that draws from ``rng`` only when there is a choice."""
    if len(options) == 1:
        return options[0]
    return options[int(rng.random() * len(options))]


def accept(delta: float, temperature: float, rng) -> bool:
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if delta >= 0:
        return True
    return rng.random() < math.exp(delta / temperature)


@dataclass
class Trace:
    rows: list = field(default_factory=list)
    objective: list = field(default_factory=list)

    @property
    def best(self) -> list[int]:
        return [r[5] for r in self.rows]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for it, kind, delta, ok, temp, best in self.rows:
                w.writerow([it, kind, "" if delta is None else delta, int(ok), repr(temp), best])


@dataclass
class RunResult:
    best: Schedule
    best_objective: int
    trace: Trace
    iterations: int
    ranks: dict | None = None
    tabu_cells: tuple | None = None  # (theatre, week, day) entries left on the list


def _as_rng(rng) -> random.Random:
    if isinstance(rng, random.Random):
        return rng
    return random.Random(rng)


def search(state: ScheduleState, params: EngineParams, rng, mode: str = "sa", *,
           kinds=KINDS, reheat: bool | None = None, target: int | None = None,
           trace: bool = True, on_iteration=None) -> RunResult:
    """Run one engine on ``state`` in place and return the best schedule seen.

    ``mode`` is ``"sa"``, ``"hyper_sa"`` or ``"hyper_sa_ts"``.  ``reheat``
    defaults to False for plain SA and True for the hyper variants.  The
    run stops early once the best objective reaches ``target``.
    ``on_iteration(it, move, accepted, state)`` is called after each step.
    """
    if mode not in ("sa", "hyper_sa", "hyper_sa_ts"):
        raise ValueError(f"unknown engine mode {mode!r}")
    rng = _as_rng(rng)
    kinds = tuple(kinds)
    if reheat is None:
        reheat = mode != "sa"
    hyper = mode != "sa"
    temp = params.initial_temperature
    lo, hi = params.min_temperature, params.max_temperature
    cool, warm = params.cooling_factor, params.reheat_factor
    ranks = RankState(kinds) if hyper else None
    twd = None
    if mode == "hyper_sa_ts":
        # a list covering every weekday cell would forbid all moves; keep half free
        cells = len({state.twd(r, t) for r, t in state.weekday_cells})
        twd = TwdTabu(min(params.twd_tabu_initial_length, cells // 2))

    out = Trace()
    obj = state.objective
    best_obj = obj
    best_snapshot = None  # None while the current state is the best one
    kind = None
    block_start_obj = obj

    it = 0
    while it < params.total_iterations:
        if target is not None and best_obj >= target:
            break
        if hyper and it % params.block_size == 0:
            if kind is not None:
                ranks.update(kind, obj > block_start_obj, it, params.neighborhood_tabu_tenure)
            kind = ranks.select(it, rng)
            block_start_obj = obj
        elif not hyper:
            kind = _pick(kinds, rng)

        move = random_move(kind, state, rng)
        if twd is not None and move is not None and len(twd):
            tries = 0
            # aspiration: a move reaching a new best ignores the tabu list
            while (move is not None and obj + move.delta <= best_obj
                   and any(state.twd(r, t) in twd for r, t in move.touched)):
                tries += 1
                move = random_move(kind, state, rng) if tries <= params.tabu_retries else None

        ok = False
        if move is not None and accept(move.delta, temp, rng):
            ok = True
            if move.delta < 0 and best_snapshot is None and obj == best_obj:
                best_snapshot = state.to_schedule()
            state.apply(move)
            obj += move.delta
            if obj > best_obj:
                best_obj = obj
                best_snapshot = None
            if twd is not None and move.delta < 0:
                for r, t in move.touched:
                    twd.push(state.twd(r, t))
        if move is None:
            pass  # nothing was tried, so the temperature stays put
        elif ok or not reheat:
            temp = max(lo, temp * cool)
        else:
            temp = min(hi, temp * warm)

        it += 1
        if twd is not None and it % params.twd_shrink_period == 0:
            twd.shrink()
        if trace:
            out.rows.append((it, kind, None if move is None else move.delta, ok, temp, best_obj))
            out.objective.append(obj)
        if on_iteration is not None:
            on_iteration(it, move, ok, state)

    best = state.to_schedule() if best_snapshot is None else best_snapshot
    return RunResult(best, best_obj, out, it, dict(ranks.rank) if ranks else None,
                     tuple(twd.entries) if twd is not None else None)


def _run(mode, instance, capacities, init, params, rng, **kw) -> tuple[Schedule, Trace]:
    state_kw = {k: kw.pop(k) for k in ("prev", "rho", "frozen") if k in kw}
    state = ScheduleState(instance, capacities, init, **state_kw)
    res = search(state, params, params.seed if rng is None else rng, mode, **kw)
    return res.best, res.trace


def sa_run(instance: Instance, capacities: CapacityTable, init: Schedule,
           params: EngineParams = EngineParams(), rng=None, **kw):
    return _run("sa", instance, capacities, init, params, rng, **kw)


def hyper_sa_run(instance: Instance, capacities: CapacityTable, init: Schedule,
                 params: EngineParams = EngineParams(), rng=None, **kw):
    return _run("hyper_sa", instance, capacities, init, params, rng, **kw)


def hyper_sa_ts_run(instance: Instance, capacities: CapacityTable, init: Schedule,
                    params: EngineParams = EngineParams(), rng=None, **kw):
    return _run("hyper_sa_ts", instance, capacities, init, params, rng, **kw)


ENGINES = {"sa": sa_run, "hyper_sa": hyper_sa_run, "hyper_sa_ts": hyper_sa_ts_run}
