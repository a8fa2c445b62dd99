"""Block capacities from lognormal surgical durations.

A block of length ``L`` holds ``n`` surgeries of one specialty when the 95th
percentile of the sum of ``n`` independent lognormal durations is at most
``L``.  The percentile of a single duration has a closed form; sums are
estimated by Monte Carlo with a fixed seed.

Sums of ``exp(meanlog + sdlog * Z)`` factor as ``exp(meanlog) * sum(exp(sdlog * Z))``,
so the simulation only depends on ``sdlog``.  Standardised quantiles are
cached per ``(sdlog, samples, seed)``, and the partial sums for ``n`` are a
prefix of those for ``n + 1`` (same draws), which makes the capacity search
cost one extra draw per extra surgery.
"""

from __future__ import annotations

import math
import threading
from collections import OrderedDict
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .model import Instance

Z95 = NormalDist().inv_cdf(0.95)
DEFAULT_SAMPLES = 10**6
DEFAULT_SEED = 20171
MAX_PER_BLOCK = 200


class CapacityError(ValueError):
    def __init__(self, specialty: int, message: str):
        self.specialty = specialty
        super().__init__(message)


class _StandardSums:
    """Running quantiles of sum_{i<n} exp(sdlog * Z_i) for growing n."""

    def __init__(self, sdlog: float, samples: int, seed: int):
        self.sdlog = sdlog
        self.samples = samples
        self.seed = seed
        self.quantiles: list[float] = [0.0]  # index n -> q95 for n terms
        self._rng = None
        self._sums = None

    def get(self, n: int) -> float:
        while len(self.quantiles) <= n:
            if self._sums is None:
                # (re)start the stream; only reached after eviction or at creation
                self._rng = np.random.default_rng(self.seed)
                self._sums = np.zeros(self.samples)
                for _ in range(len(self.quantiles) - 1):
                    self._sums += np.exp(self.sdlog * self._rng.standard_normal(self.samples))
            self._sums += np.exp(self.sdlog * self._rng.standard_normal(self.samples))
            self.quantiles.append(float(np.quantile(self._sums, 0.95)))
        return self.quantiles[n]

    def release(self):
        self._sums = None
        self._rng = None


_cache: dict[tuple[float, int, int], _StandardSums] = {}
_live: OrderedDict = OrderedDict()
_lock = threading.Lock()
_MAX_LIVE = 4


def _standard_q95(sdlog: float, n: int, samples: int, seed: int) -> float:
    key = (float(sdlog), int(samples), int(seed))
    with _lock:
        entry = _cache.get(key)
        if entry is None:
            entry = _cache[key] = _StandardSums(*key)
        if n < len(entry.quantiles):
            return entry.quantiles[n]
        _live[key] = entry
        _live.move_to_end(key)
        value = entry.get(n)
        while len(_live) > _MAX_LIVE:
            _, old = _live.popitem(last=False)
            old.release()
        return value


def q95_sum(meanlog: float, sdlog: float, n: int, samples: int = DEFAULT_SAMPLES,
            seed: int = DEFAULT_SEED) -> float:
    """95th percentile (hours) of the sum of ``n`` iid lognormal durations."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return 0.0
    if sdlog < 0:
        raise ValueError("sdlog must be nonnegative")
    if sdlog == 0:
        return n * math.exp(meanlog)
    if n == 1:
        return math.exp(meanlog + Z95 * sdlog)
    if samples < 10**5:
        raise ValueError("at least 1e5 samples are required")
    return math.exp(meanlog) * _standard_q95(sdlog, n, samples, seed)


def block_capacity(meanlog: float, sdlog: float, block_length: float, full_day: bool = True,
                   samples: int = DEFAULT_SAMPLES, seed: int = DEFAULT_SEED) -> tuple[int, bool]:
    """Largest n whose q95 fits ``block_length``, plus the solo-oversize flag.

    A full-day block that cannot hold even one surgery still admits a single
    surgery on its own; that case returns ``(1, True)``.
    """
    if block_length <= 0:
        raise ValueError("block_length must be positive")
    n = 0
    while n < MAX_PER_BLOCK and q95_sum(meanlog, sdlog, n + 1, samples, seed) <= block_length:
        n += 1
    if n == 0 and full_day:
        return 1, True
    return n, False


@dataclass(frozen=True, eq=False)
class CapacityTable:
    """Per-specialty counts: elective/non-elective x full/half day."""

    elective_full: np.ndarray
    elective_half: np.ndarray
    nonelective_full: np.ndarray
    nonelective_half: np.ndarray
    solo_oversize: np.ndarray
    nonelective_solo: np.ndarray
    elective_params: np.ndarray
    nonelective_params: np.ndarray
    full_day_hours: float = 10.0
    half_day_hours: float = 5.0
    samples: int = DEFAULT_SAMPLES
    seed: int = DEFAULT_SEED

    @property
    def num_specialties(self) -> int:
        return len(self.elective_full)

    def elective(self, s: int, full_day: bool) -> int:
        return int(self.elective_full[s] if full_day else self.elective_half[s])

    def nonelective(self, s: int, full_day: bool) -> int:
        return int(self.nonelective_full[s] if full_day else self.nonelective_half[s])

    def q95(self, s: int, n: int, nonelective: bool = False) -> float:
        mu, sigma = (self.nonelective_params if nonelective else self.elective_params)[s]
        return q95_sum(float(mu), float(sigma), n, self.samples, self.seed)

    def as_rows(self) -> list[dict]:
        return [
            {"specialty": s, "elective_full": int(self.elective_full[s]),
             "elective_half": int(self.elective_half[s]),
             "nonelective_full": int(self.nonelective_full[s]),
             "nonelective_half": int(self.nonelective_half[s]),
             "solo_oversize": bool(self.solo_oversize[s])}
            for s in range(self.num_specialties)
        ]


def compute_table(instance: Instance, samples: int = DEFAULT_SAMPLES,
                  seed: int = DEFAULT_SEED, check: bool = True) -> CapacityTable:
    S = instance.num_specialties
    full, half = instance.full_day_hours, instance.half_day_hours
    cols = {k: np.zeros(S, dtype=np.int64) for k in ("ef", "eh", "nf", "nh")}
    solo = np.zeros(S, dtype=bool)
    ne_solo = np.zeros(S, dtype=bool)
    ne_params = np.zeros((S, 2))
    for s in range(S):
        mu, sigma = (float(x) for x in instance.duration_params[s])
        cols["ef"][s], solo[s] = block_capacity(mu, sigma, full, True, samples, seed)
        cols["eh"][s], _ = block_capacity(mu, sigma, half, False, samples, seed)
        nmu, nsigma = instance.nonelective_params(s)
        ne_params[s] = nmu, nsigma
        cols["nf"][s], ne_solo[s] = block_capacity(nmu, nsigma, full, True, samples, seed)
        cols["nh"][s], _ = block_capacity(nmu, nsigma, half, False, samples, seed)
        if check and cols["ef"][s] < 2 * cols["eh"][s]:
            name = instance.specialty_names[s] if instance.specialty_names else str(s)
            raise CapacityError(
                s, f"specialty {name}: full-day capacity {cols['ef'][s]} is below twice "
                   f"the half-day capacity {cols['eh'][s]}")
    return CapacityTable(cols["ef"], cols["eh"], cols["nf"], cols["nh"], solo, ne_solo,
                         np.array(instance.duration_params, dtype=float), ne_params,
                         full, half, samples, seed)
