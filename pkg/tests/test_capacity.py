import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from builders import constant, make_instance
from theatresched.capacity import (CapacityError, Z95, block_capacity, compute_table, q95_sum)
from theatresched.generator import DEFAULT_PROFILES, GeneratorConfig, duration_parameters


def test_constant_durations_sum_exactly():
    assert q95_sum(math.log(2), 0.0, 5) == pytest.approx(10.0, abs=1e-9)
    assert q95_sum(1.0, 0.5, 0) == 0.0


def test_single_surgery_uses_closed_form():
    assert q95_sum(0.0, 1.0, 1) == pytest.approx(math.exp(1.6449), rel=0.01)
    assert q95_sum(0.0, 1.0, 1) == pytest.approx(5.180, rel=0.01)


def test_three_surgeries_match_oversampled_simulation():
    rng = np.random.default_rng(99)
    sums = np.zeros(10**7)
    for _ in range(3):
        sums += rng.lognormal(0.2, 0.5, size=10**7)
    oracle = float(np.quantile(sums, 0.95))
    assert q95_sum(0.2, 0.5, 3) == pytest.approx(oracle, rel=0.01)


def test_rejects_bad_arguments():
    with pytest.raises(ValueError):
        q95_sum(0, 0.3, -1)
    with pytest.raises(ValueError):
        q95_sum(0, 0.3, 3, samples=1000)
    with pytest.raises(ValueError):
        block_capacity(0, 0.3, 0.0)


def test_q95_is_deterministic():
    assert q95_sum(0.4, 0.45, 6, seed=5) == q95_sum(0.4, 0.45, 6, seed=5)


def test_block_capacity_examples():
    assert block_capacity(math.log(2), 0.0, 10.0) == (5, False)
    sigma = 0.25
    mu = math.log(11.82) - Z95 * sigma
    assert block_capacity(mu, sigma, 10.0, full_day=True) == (1, True)
    assert block_capacity(mu, sigma, 5.0, full_day=False) == (0, False)


def test_ophthalmology_fits_eight_per_full_day():
    cfg = GeneratorConfig()
    eye = next(p for p in DEFAULT_PROFILES if p.name == "ophthalmology")
    mu, sigma = duration_parameters(cfg, eye)
    assert block_capacity(mu, sigma, 10.0) == (8, False)


def test_constant_one_hour_table():
    inst = make_instance([0, 1], [[True, True]], np.ones((2, 21), bool), [],
                         [constant(1.0), constant(1.0)])
    caps = compute_table(inst)
    assert list(caps.elective_full) == [10, 10] and list(caps.elective_half) == [5, 5]
    assert list(caps.nonelective_full) == [10, 10] and list(caps.nonelective_half) == [5, 5]


def test_nonelective_parameters_default_to_elective():
    inst = make_instance([0], [[True]], np.ones((1, 21), bool), [], [constant(2.0)])
    caps = compute_table(inst)
    assert caps.nonelective_full[0] == caps.elective_full[0] == 5


def test_separate_nonelective_parameters():
    inst = make_instance([0], [[True]], np.ones((1, 21), bool), [], [constant(2.0)],
                         nonelective_durations=[constant(2.5)])
    caps = compute_table(inst)
    assert (caps.elective_full[0], caps.nonelective_full[0]) == (5, 4)


def test_full_day_below_twice_half_is_rejected():
    base = make_instance([0], [[True]], np.ones((1, 21), bool), [], [constant(3.0)])
    assert (compute_table(base).elective_full[0], compute_table(base).elective_half[0]) == (3, 1)
    # a 6.5 h half day holds two 3 h cases, but the 10 h full day only three
    with pytest.raises(CapacityError):
        compute_table(replace(base, half_day_hours=6.5))
    assert compute_table(replace(base, half_day_hours=6.5), check=False).elective_half[0] == 2


def test_default_table_matches_independent_rerun(full):
    inst, caps, _, _ = full
    oracle = compute_table(inst, samples=10**7, seed=777)
    for name in ("elective_full", "elective_half", "nonelective_full", "nonelective_half",
                 "solo_oversize", "nonelective_solo"):
        assert (getattr(caps, name) == getattr(oracle, name)).all(), name


@pytest.mark.parametrize("profile", [p for p in DEFAULT_PROFILES if p.solo_q95 is None][:8],
                         ids=lambda p: p.name)
def test_counts_do_not_increase_with_spread(profile):
    mu = math.log(profile.median_hours)
    counts = [block_capacity(mu, s, 10.0)[0] for s in (0.2, 0.3, 0.4, 0.5, 0.6)]
    assert counts == sorted(counts, reverse=True)


@settings(max_examples=30, deadline=None)
@given(mu=st.floats(-0.5, 1.5), sigma=st.floats(0.05, 0.6), length=st.floats(2.0, 12.0))
def test_capacity_monotone_in_mean_and_length(mu, sigma, length):
    n, _ = block_capacity(mu, sigma, length, samples=10**5)
    assert block_capacity(mu + 0.1, sigma, length, samples=10**5)[0] <= n
    assert block_capacity(mu, sigma, length + 1.0, samples=10**5)[0] >= n


@pytest.mark.parametrize("mu,sigma", [(math.log(1.6), 0.45), (math.log(0.98), 0.25),
                                      (math.log(3.0), 0.40)])
def test_capacity_overflow_rate_is_at_most_five_percent(mu, sigma):
    n, _ = block_capacity(mu, sigma, 10.0)
    rng = np.random.default_rng(11)
    sums = rng.lognormal(mu, sigma, size=(10**5, n)).sum(axis=1)
    rate = float((sums > 10.0).mean())
    assert rate <= 0.05 + 3 * math.sqrt(0.05 * 0.95 / 10**5)
