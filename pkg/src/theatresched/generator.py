"""Synthetic instances at the scale of a large public hospital.

Each specialty is described by a :class:`SpecialtyProfile`; counts given as
weights (surgeons, waiting list, non-elective demand, arrivals) are scaled
to the totals in :class:`GeneratorConfig` by largest remainder.  Duration
medians are nudged down until every capacity sits clearly away from a
block-length boundary, so capacities do not depend on Monte-Carlo noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .capacity import DEFAULT_SAMPLES, DEFAULT_SEED, Z95, compute_table, q95_sum
from .model import Calendar, Instance, PatientRecord

# waiting-time draw (days) per urgency category
WAIT_RANGE = {1: 60, 2: 180, 3: 540}


@dataclass(frozen=True)
class SpecialtyProfile:
    name: str
    surgeons: float
    median_hours: float
    sdlog: float
    waiting: float
    nonelective: float
    arrivals: float
    ors: int | None = None  # theatres equipped for it; None means all
    solo_q95: float | None = None  # non-elective only, single-case q95 in hours


DEFAULT_PROFILES = (
    SpecialtyProfile("general_surgery", 12, 1.6, 0.45, 330, 22, 34),
    SpecialtyProfile("colorectal", 5, 2.8, 0.40, 120, 6, 12),
    SpecialtyProfile("upper_gi", 4, 3.0, 0.40, 90, 4, 9),
    SpecialtyProfile("hepatobiliary", 3, 3.5, 0.40, 60, 3, 6),
    SpecialtyProfile("liver_transplant", 2, 0, 0, 0, 1, 0, ors=4, solo_q95=11.82),
    SpecialtyProfile("orthopaedics", 10, 2.2, 0.40, 420, 15, 40),
    SpecialtyProfile("spinal", 3, 3.8, 0.35, 70, 2, 6, ors=4),
    SpecialtyProfile("hand", 3, 1.0, 0.45, 110, 2, 12),
    SpecialtyProfile("urology", 7, 1.3, 0.45, 260, 7, 26),
    SpecialtyProfile("gynaecology", 6, 1.4, 0.45, 240, 6, 24),
    SpecialtyProfile("ent", 5, 1.3, 0.45, 200, 3, 20),
    SpecialtyProfile("plastics", 4, 1.8, 0.50, 150, 4, 14),
    SpecialtyProfile("ophthalmology", 5, 0.98, 0.25, 300, 2, 36, ors=3),
    SpecialtyProfile("vascular", 4, 2.6, 0.40, 90, 6, 9),
    SpecialtyProfile("cardiac", 4, 4.2, 0.30, 60, 4, 5, ors=2),
    SpecialtyProfile("thoracic", 3, 3.2, 0.35, 50, 3, 5, ors=3),
    SpecialtyProfile("neurosurgery", 4, 3.6, 0.40, 70, 7, 6, ors=3),
    SpecialtyProfile("maxillofacial", 3, 1.8, 0.45, 70, 3, 7),
    SpecialtyProfile("breast_endocrine", 3, 1.9, 0.40, 90, 2, 9),
    SpecialtyProfile("paediatric_surgery", 3, 1.2, 0.45, 60, 4, 6),
    SpecialtyProfile("paediatric_orthopaedics", 2, 1.9, 0.40, 40, 2, 4),
    SpecialtyProfile("burns", 2, 2.0, 0.50, 20, 3, 2),
    SpecialtyProfile("trauma_orthopaedics", 3, 2.4, 0.45, 30, 8, 3),
    SpecialtyProfile("dental", 2, 0.9, 0.40, 40, 0, 5),
    SpecialtyProfile("bariatric", 2, 2.6, 0.35, 30, 0, 3),
    SpecialtyProfile("renal_transplant", 2, 3.8, 0.30, 20, 2, 2, ors=4),
    SpecialtyProfile("endoscopy", 2, 0.6, 0.50, 50, 0, 5),
)


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 2017
    num_surgeons: int = 108
    num_ors: int = 21
    waiting_list: int = 2871
    weeks: int = 1
    profiles: tuple[SpecialtyProfile, ...] = DEFAULT_PROFILES
    annual_electives: float = 15000.0
    annual_nonelectives: float = 6000.0
    full_day_prob: float = 0.22  # per surgeon and weekday
    half_day_prob: float = 0.22  # one half of the day only
    weekend_prob: float = 0.20
    urgency_mix: tuple[float, float, float] = (0.1, 0.4, 0.5)
    cancellation_prob: float = 0.0
    max_nonelective_per_block: int = 12
    max_elective_per_block: int = 12
    weekend_or_limit: int = 4
    full_day_hours: float = 10.0
    half_day_hours: float = 5.0
    capacity_margin: float = 0.01
    samples: int = DEFAULT_SAMPLES
    capacity_seed: int = DEFAULT_SEED
    solo_sdlog: float = 0.25

    def __post_init__(self):
        problems = []
        for name in ("full_day_prob", "half_day_prob", "weekend_prob", "cancellation_prob"):
            if not 0 <= getattr(self, name) <= 1:
                problems.append(f"{name} must be in [0, 1]")
        if self.full_day_prob + self.half_day_prob > 1:
            problems.append("full_day_prob + half_day_prob must not exceed 1")
        if self.annual_electives < 0 or self.annual_nonelectives < 0:
            problems.append("rates must be nonnegative")
        if abs(sum(self.urgency_mix) - 1) > 1e-9 or min(self.urgency_mix) < 0:
            problems.append("urgency_mix must be a probability vector")
        if self.num_surgeons < sum(1 for p in self.profiles if p.surgeons > 0):
            problems.append("need at least one surgeon per specialty")
        if problems:
            raise ValueError("; ".join(problems))


def _apportion(weights, total: int, minimum: int = 0) -> list[int]:
    """Integers proportional to ``weights`` summing to ``total`` (largest remainder)."""
    w = np.asarray(weights, dtype=float)
    floor = np.where(w > 0, minimum, 0)
    rest = total - int(floor.sum())
    if w.sum() == 0 or rest <= 0:
        return floor.astype(int).tolist()
    share = w / w.sum() * rest
    base = np.floor(share).astype(int)
    order = sorted(range(len(w)), key=lambda i: (-(share[i] - base[i]), i))
    for i in order[: rest - int(base.sum())]:
        base[i] += 1
    return (base + floor).astype(int).tolist()


def _fits_clearly(mu, sigma, cfg) -> bool:
    """Capacities are away from boundaries and full >= 2 x half."""
    caps = []
    for length in (cfg.full_day_hours, cfg.half_day_hours):
        n = 0
        while q95_sum(mu, sigma, n + 1, cfg.samples, cfg.capacity_seed) <= length:
            n += 1
            if n > 200:
                break
        above = q95_sum(mu, sigma, n + 1, cfg.samples, cfg.capacity_seed)
        below = q95_sum(mu, sigma, n, cfg.samples, cfg.capacity_seed)
        if above < length * (1 + cfg.capacity_margin):
            return False
        if n and below > length * (1 - cfg.capacity_margin):
            return False
        caps.append(n)
    return caps[0] >= 2 * caps[1]


def duration_parameters(cfg: GeneratorConfig, profile: SpecialtyProfile) -> tuple[float, float]:
    median = profile.median_hours
    for _ in range(40):
        mu = math.log(median)
        if _fits_clearly(mu, profile.sdlog, cfg):
            return mu, profile.sdlog
        median *= 0.985
    raise ValueError(f"no stable capacity for specialty {profile.name}")


def _availability(cfg: GeneratorConfig, rng, H: int, spec_of: list[int],
                  needs_cover: set[int]) -> np.ndarray:
    cal = Calendar(num_weeks=1)
    F = np.zeros((H, cal.num_blocks), dtype=bool)
    covered = set()
    for h in range(H):
        for day, weekend in enumerate(cal.weekend_days):
            full, am, pm = (cal.block_of(0, day, k) for k in range(3))
            u = rng.random()
            if weekend:
                on = u < cfg.weekend_prob or (spec_of[h] in needs_cover and spec_of[h] not in covered)
                if on:
                    F[h, [full, am, pm]] = True
                continue
            if u < cfg.full_day_prob:
                F[h, [full, am, pm]] = True
            elif u < cfg.full_day_prob + cfg.half_day_prob:
                F[h, am if rng.random() < 0.5 else pm] = True
        covered.add(spec_of[h])
    return F


def generate(config: GeneratorConfig = GeneratorConfig()) -> Instance:
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    profiles = cfg.profiles
    S, R = len(profiles), cfg.num_ors

    per_spec = _apportion([p.surgeons for p in profiles], cfg.num_surgeons, minimum=1)
    spec_of = [s for s in range(S) for _ in range(per_spec[s])]
    H = len(spec_of)
    G = np.zeros((H, S), dtype=bool)
    G[np.arange(H), spec_of] = True

    weekly_ne = round(cfg.annual_nonelectives / 52)
    psi = _apportion([p.nonelective for p in profiles], weekly_ne)
    elective_spec = [p.solo_q95 is None for p in profiles]
    rates = np.array([p.arrivals if e else 0.0 for p, e in zip(profiles, elective_spec)])
    if rates.sum() > 0:
        rates = rates / rates.sum() * cfg.annual_electives / 52

    params = np.zeros((S, 2))
    ne_params = np.full((S, 2), np.nan)
    for s, p in enumerate(profiles):
        if p.solo_q95 is not None:
            mu = math.log(p.solo_q95) - Z95 * cfg.solo_sdlog
            params[s] = ne_params[s] = mu, cfg.solo_sdlog
        else:
            params[s] = duration_parameters(cfg, p)

    equipped = np.zeros((R, S), dtype=bool)
    for s, p in enumerate(profiles):
        if p.ors is None or p.ors >= R:
            equipped[:, s] = True
        else:
            equipped[rng.choice(R, size=p.ors, replace=False), s] = True

    needs_cover = {s for s in range(S) if psi[s] > 0}
    F = _availability(cfg, rng, H, spec_of, needs_cover)

    waiting = _apportion([p.waiting if e else 0 for p, e in zip(profiles, elective_spec)],
                         cfg.waiting_list)
    records = []
    roster = [[h for h in range(H) if spec_of[h] == s] for s in range(S)]
    for s in range(S):
        records += _patients(rng, s, waiting[s], roster[s], cfg.urgency_mix, len(records))

    base = Instance(
        calendar=Calendar(num_weeks=1),
        num_ors=R,
        surgeon_specialty=G,
        surgeon_available=F,
        can_treat=np.zeros((0, H), dtype=bool),
        patient_specialty=np.zeros((0, S), dtype=bool),
        or_equipped=equipped,
        weekly_nonelective_target=np.array(psi),
        duration_params=params,
        patient_urgency=np.zeros(0),
        patient_wait_days=np.zeros(0),
        patient_ids=np.zeros(0),
        nonelective_duration_params=ne_params,
        max_nonelective_per_block=cfg.max_nonelective_per_block,
        max_elective_per_block=cfg.max_elective_per_block,
        weekend_or_limit=cfg.weekend_or_limit,
        full_day_hours=cfg.full_day_hours,
        half_day_hours=cfg.half_day_hours,
        specialty_names=tuple(p.name for p in profiles),
        arrival_rates=rates,
        urgency_mix=cfg.urgency_mix,
    )
    inst = _ensure_cover(base.with_patients(records), cfg)
    if cfg.weeks != 1:
        inst = inst.tile(cfg.weeks)
    inst.validate()
    return inst


def _ensure_cover(inst: Instance, cfg: GeneratorConfig, rounds: int = 50) -> Instance:
    """Extend rosters until the weekly non-elective targets can be reserved.

    Each round gives one more surgeon of every short specialty a full
    weekend day, falling back to a free weekday once weekends are used up.
    """
    from .baseline import BaselineError, solve_baseline

    caps = compute_table(inst, cfg.samples, cfg.capacity_seed)
    cal = inst.calendar
    days = sorted(range(cal.days_per_week), key=lambda d: (not cal.weekend_days[d], d))
    for _ in range(rounds):
        try:
            solve_baseline(inst, caps)
            return inst
        except BaselineError as err:
            short = {s for _, s in err.shortfall}
        F = inst.surgeon_available.copy()
        for s in sorted(short):
            roster = np.flatnonzero(inst.surgeon_specialty[:, s])
            done = False
            for d in days:
                blocks = [cal.block_of(0, d, k) for k in range(3)]
                for h in roster:
                    if not F[h, blocks].any():
                        F[h, blocks] = True
                        done = True
                        break
                if done:
                    break
        inst = replace(inst, surgeon_available=F)
    raise ValueError("could not build a roster covering the non-elective targets")


def _patients(rng, s, n, roster, mix, first_id, wait=True) -> list[PatientRecord]:
    out = []
    if n == 0:
        return out
    urg = rng.choice([1, 2, 3], size=n, p=mix)
    surgeon = rng.integers(len(roster), size=n)
    days = [int(rng.integers(WAIT_RANGE[int(u)] + 1)) if wait else 0 for u in urg]
    for i in range(n):
        out.append(PatientRecord(first_id + i, s, (roster[int(surgeon[i])],), int(urg[i]), days[i]))
    return out


def arrivals_stream(instance: Instance, week: int, rng=None, *, first_id: int = 0,
                    seed: int = 0) -> list[PatientRecord]:
    """New elective requests for one week: Poisson per specialty.

    Without an explicit ``rng`` the stream for ``(seed, week)`` is fixed, so
    any week can be replayed independently.
    """
    rates = instance.arrival_rates
    if rates is None:
        return []
    if rng is None:
        rng = np.random.default_rng([seed, week])
    spec_of = instance.surgeon_specialty_index
    out = []
    for s, lam in enumerate(rates):
        n = int(rng.poisson(lam)) if lam > 0 else 0
        roster = [int(h) for h in np.flatnonzero(spec_of == s)]
        if n and roster:
            out += _patients(rng, s, n, roster, instance.urgency_mix, first_id + len(out),
                             wait=False)
    return out


def scaled_config(fraction: float, **overrides) -> GeneratorConfig:
    """A smaller hospital with the same specialty mix (for quick runs)."""
    base = GeneratorConfig()
    return replace(base, num_surgeons=max(len(base.profiles), round(base.num_surgeons * fraction)),
                   num_ors=max(4, round(base.num_ors * fraction)),
                   waiting_list=round(base.waiting_list * fraction),
                   annual_electives=base.annual_electives * fraction,
                   annual_nonelectives=base.annual_nonelectives * fraction, **overrides)
