"""Experiment summaries in the results-table layout and their statistics."""

from __future__ import annotations

import csv
import io
import math
import statistics
import warnings
from dataclasses import dataclass, field

from scipy import stats

COLUMNS = ("Horizon Length (weeks)", "Method", "Mean", "Variance", "Worst", "Best",
           "Time (seconds)", "Budget", "Seeds", "Totals")

METHOD_LABELS = {"sa": "SA", "hyper_sa": "Hyper SA", "hyper_sa_ts": "Hyper SA-TS",
                 "constructive": "Constructive"}


@dataclass
class MethodResult:
    """Per-seed totals of one (horizon, method, budget) configuration."""

    horizon: int
    method: str
    budget: str
    seeds: list[int] = field(default_factory=list)
    totals: list[int] = field(default_factory=list)
    times: list[float] = field(default_factory=list)

    @property
    def mean(self) -> float:
        return statistics.fmean(self.totals)

    @property
    def variance(self) -> float:
        return statistics.variance(self.totals) if len(self.totals) > 1 else 0.0

    @property
    def worst(self) -> int:
        return min(self.totals)

    @property
    def best(self) -> int:
        return max(self.totals)

    @property
    def time(self) -> float:
        return statistics.fmean(self.times) if self.times else 0.0

    def row(self, timing: bool = True) -> dict:
        return {
            "Horizon Length (weeks)": self.horizon,
            "Method": METHOD_LABELS.get(self.method, self.method),
            "Mean": f"{self.mean:.2f}",
            "Variance": f"{self.variance:.2f}",
            "Worst": self.worst,
            "Best": self.best,
            "Time (seconds)": f"{self.time:.2f}" if timing and self.times else "-",
            "Budget": self.budget,
            "Seeds": " ".join(map(str, self.seeds)),
            "Totals": ";".join(map(str, self.totals)),
        }


@dataclass
class ExperimentReport:
    results: list[MethodResult] = field(default_factory=list)

    def add(self, result: MethodResult) -> None:
        self.results.append(result)

    def find(self, method: str, horizon: int | None = None,
             budget: str | None = None) -> MethodResult:
        for r in self.results:
            if r.method == method and horizon in (None, r.horizon) and budget in (None, r.budget):
                return r
        raise KeyError((method, horizon, budget))

    def to_csv(self, timing: bool = True) -> str:
        """Delimited table; ``timing=False`` blanks the wall-clock column for reproducible output."""
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in self.results:
            w.writerow(r.row(timing))
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ExperimentReport":
        label_to_method = {v: k for k, v in METHOD_LABELS.items()}
        out = cls()
        for row in csv.DictReader(io.StringIO(text)):
            totals = [int(x) for x in row["Totals"].split(";") if x]
            seeds = [int(x) for x in row["Seeds"].split()]
            time = row["Time (seconds)"]
            times = [] if time == "-" else [float(time)] * len(totals)
            out.add(MethodResult(int(row["Horizon Length (weeks)"]),
                                 label_to_method.get(row["Method"], row["Method"]),
                                 row["Budget"], seeds, totals, times))
        return out

    def merged(self, other: "ExperimentReport") -> "ExperimentReport":
        return ExperimentReport(self.results + other.results)


def welch_greater(a, b) -> tuple[float, float]:
    """One-sided Welch test of mean(a) > mean(b): (statistic, p-value)."""
    a, b = list(map(float, a)), list(map(float, b))
    if len(a) < 2 or len(b) < 2:
        raise ValueError("need at least two samples per group")
    va, vb = statistics.variance(a), statistics.variance(b)
    diff = statistics.fmean(a) - statistics.fmean(b)
    if va == 0 and vb == 0:
        if diff == 0:
            return 0.0, 0.5
        return math.copysign(math.inf, diff), 0.0 if diff > 0 else 1.0
    with warnings.catch_warnings():
        # nearly constant samples trip scipy's precision warning; the statistic is still right
        warnings.simplefilter("ignore", RuntimeWarning)
        res = stats.ttest_ind(a, b, equal_var=False, alternative="greater")
    return float(res.statistic), float(res.pvalue)


def pooled_sd(a, b) -> float:
    na, nb = len(a), len(b)
    va = statistics.variance(a) if na > 1 else 0.0
    vb = statistics.variance(b) if nb > 1 else 0.0
    dof = na + nb - 2
    return math.sqrt(((na - 1) * va + (nb - 1) * vb) / dof) if dof > 0 else 0.0


def sign_test_greater(a, b) -> tuple[int, int, float]:
    """Paired sign test of a > b; ties dropped.  Returns (wins, losses, p)."""
    wins = sum(x > y for x, y in zip(a, b))
    losses = sum(x < y for x, y in zip(a, b))
    n = wins + losses
    p = float(stats.binomtest(wins, n, 0.5, alternative="greater").pvalue) if n else 1.0
    return wins, losses, p


def comparisons(report: ExperimentReport) -> list[dict]:
    """Pairwise one-sided Welch tests between methods at equal horizon and budget."""
    out = []
    rs = report.results
    for i, a in enumerate(rs):
        for b in rs[i + 1:]:
            if (a.horizon, a.budget) != (b.horizon, b.budget):
                continue
            if len(a.totals) < 2 or len(b.totals) < 2:
                continue
            t, p = welch_greater(a.totals, b.totals)
            out.append({"horizon": a.horizon, "budget": a.budget, "a": a.method,
                        "b": b.method, "statistic": t, "p_value": p})
    return out


def format_table(report: ExperimentReport) -> str:
    cols = COLUMNS[:7]
    rows = [[str(r.row()[c]) for c in cols] for r in report.results]
    widths = [max(len(c), *(len(x[i]) for x in rows)) if rows else len(c)
              for i, c in enumerate(cols)]
    line = lambda cells: "  ".join(c.ljust(w) for c, w in zip(cells, widths))
    return "\n".join([line(cols)] + [line(x) for x in rows])
