import math

import numpy as np
import pytest

from blowup import csp_probability
from errors import ConfigError, InvalidLaw, PopulationExplosionCap, StepRateTooLarge
from model import Constant, ModelConfig, RadialPower, StretchedExp, build_coefficients
from offspring import build_offspring_law
from particles import (
    BOUNDED_AWAY,
    VANISHING,
    Population,
    estimate_csp_probability,
    estimate_extinction,
    estimate_hitting,
    extinction_oracle,
    hitting_trend,
    loglaplace_check,
    loglaplace_oracle,
    particle_check,
    radial_function,
    simulate,
    step_population,
    support_radius_profile,
    time_step,
)
from stats import wilson_interval


def test_particle_systems_need_a_branching_law():
    with pytest.raises(InvalidLaw):
        particle_check(ModelConfig(p=2.5))
    with pytest.raises(ConfigError):
        particle_check(ModelConfig(d=2.5))


def test_population_starts_as_a_unit_mass():
    pop = Population.start(10, 3, [0.0, 0.0, 0.0])
    assert pop.d == 3
    assert pop.mass().tolist() == [1.0, 1.0, 1.0]
    assert np.all(pop.radius == 0)
    assert np.all(np.isnan(pop.extinct_at))


def test_time_step_respects_the_branching_rate():
    law = build_offspring_law(2.0, 10, Constant(1.0), Constant(0.0))
    dt = time_step(law, 1.0)
    assert law.rate * dt <= 0.05 + 1e-12
    assert (1.0 / dt) == pytest.approx(round(1.0 / dt))


def test_oversized_step_is_refused(brownian):
    law = build_offspring_law(2.0, 10, Constant(1.0), Constant(0.0))
    pop = Population.start(10, 1, [0.0, 0.0, 0.0])
    with pytest.raises(StepRateTooLarge):
        step_population(pop, 1.0, build_coefficients(brownian), law, np.random.default_rng(0))


def test_runs_do_not_depend_on_chunking_threads(brownian):
    one = simulate(brownian, 5, 20, 0.2, seed=3, chunk=5, threads=1)
    many = simulate(brownian, 5, 20, 0.2, seed=3, chunk=5, threads=4)
    np.testing.assert_array_equal(one.mass, many.mass)
    np.testing.assert_array_equal(one.radius, many.radius)
    assert len(one.to_rows()) == 20


def test_frozen_population_keeps_its_mass(brownian):
    result = simulate(brownian, 5, 10, 0.5, seed=1, branching=False)
    assert np.all(result.mass == 1.0)
    assert np.all(result.radius > 0)
    assert np.all(np.isnan(result.extinct_at))


def test_hard_cap_keeps_the_partial_population(brownian):
    with pytest.raises(PopulationExplosionCap) as info:
        simulate(brownian, 10, 2, 0.1, seed=1, hard_cap=5)
    assert info.value.partial is not None


def test_extinction_oracle_closed_forms(brownian):
    assert extinction_oracle(brownian, None, 1.0) == pytest.approx(math.exp(-1.0))
    assert extinction_oracle(brownian, 10, 1.0) == pytest.approx((10.0 / 11.0) ** 10)
    assert extinction_oracle(brownian, None, 0.0) == 0.0


def test_extinction_matches_the_finite_system(brownian):
    estimate = estimate_extinction(brownian, 10, 400, 1.0, seed=5)
    assert estimate.contains(extinction_oracle(brownian, 10, 1.0), slack=0.05)


def test_support_starts_inside_every_ball(brownian):
    assert estimate_csp_probability(brownian, 10, 20, 1.0, 0.0, seed=1).value == 1.0


def test_hitting_needs_two_distinct_points(brownian):
    with pytest.raises(ConfigError):
        estimate_hitting(ModelConfig(d=1), [1.0], [0.5, 0.2, 0.1], 5, 5, seed=1)
    with pytest.raises(ConfigError):
        estimate_hitting(brownian, [0.0, 0.0, 0.0], [0.5, 0.2, 0.1], 5, 5, seed=1)


def test_hitting_trend_reads_the_ladder():
    eps = [0.5, 0.25, 0.125, 0.0625]
    flat = [wilson_interval(40, 100)] * 4
    assert hitting_trend(eps, flat, 1.0)[0] == BOUNDED_AWAY
    none = [wilson_interval(0, 100)] * 4
    assert hitting_trend(eps, none, 1.0)[0] == VANISHING


def test_hitting_counts_shrink_with_the_ball(brownian):
    hit = estimate_hitting(brownian, [1.0, 0.0, 0.0], [0.8, 0.4, 0.2], 5, 40, seed=2, t=0.5)
    values = [est.value for est in hit.estimates]
    assert values == sorted(values, reverse=True)
    # the smallest ball sets the particle count
    assert hit.n == 100 and hit.note.endswith("n=100")
    rows = hit.to_rows()
    assert len(rows) == 3 and all(row["n"] == 100 for row in rows)


@pytest.mark.parametrize("spec, r, expected", [
    ({"kind": "constant", "value": 2.0}, 5.0, 2.0),
    ({"kind": "bump", "height": 3.0, "radius": 2.0}, 0.0, 3.0),
    ({"kind": "bump", "height": 3.0, "radius": 2.0}, 2.5, 0.0),
    ({"kind": "indicator", "height": 1.5, "radius": 1.0}, 0.5, 1.5),
])
def test_radial_functions(spec, r, expected):
    assert radial_function(spec)(np.array([r]))[0] == pytest.approx(expected)


def test_unknown_radial_function():
    with pytest.raises(ConfigError):
        radial_function({"kind": "sawtooth"})


def test_laplace_oracle_at_time_zero(brownian):
    f = radial_function({"kind": "constant", "value": 1.0})
    assert loglaplace_oracle(brownian, f, 0.0) == pytest.approx(math.exp(-1.0))


def test_laplace_oracle_for_constant_data(brownian):
    f = radial_function({"kind": "constant", "value": 1.0})
    # u stays spatially constant: 1 / (1 + t)
    assert loglaplace_oracle(brownian, f, 1.0, nodes=100) == pytest.approx(math.exp(-0.5), rel=5e-3)


def test_radius_quantiles_grow_in_time(brownian):
    rows = support_radius_profile(brownian, 5, 40, [0.1, 0.3], seed=4, branching=False)
    assert [row["t"] for row in rows] == [0.1, 0.3]
    assert rows[0]["q0.5"] <= rows[1]["q0.5"]
    assert rows[1]["q0.5"] <= rows[1]["q0.9"] <= rows[1]["q0.99"]


@pytest.mark.slow
def test_log_laplace_of_a_constant_test_function(brownian):
    report = loglaplace_check(brownian, {"kind": "constant", "value": 1.0}, 1.0, [5, 20], 200, seed=7,
                              tolerance=0.05)
    assert report.oracle == pytest.approx(math.exp(-0.5), rel=5e-3)
    assert report.within
    assert len(report.to_rows()) == 2


@pytest.mark.slow
def test_fast_motion_spreads_further(brownian):
    fast = brownian.replace(motion=RadialPower(m=1.0))
    slow_rows = support_radius_profile(brownian, 5, 40, [0.5], seed=6, branching=False)
    fast_rows = support_radius_profile(fast, 5, 40, [0.5], seed=6, branching=False)
    assert fast_rows[0]["q0.9"] >= slow_rows[0]["q0.9"]


@pytest.mark.slow
@pytest.mark.parametrize("d, trend", [(3, BOUNDED_AWAY), (4, VANISHING)])
def test_points_are_hit_only_below_four_dimensions(half_laplacian, d, trend):
    config = ModelConfig(d=d, p=2.0, motion=half_laplacian)
    start = np.zeros(d)
    start[0] = 1.0
    hit = estimate_hitting(config, np.zeros(d), [0.2, 0.1, 0.05], 100, 200, seed=13, x0=start)
    assert hit.n == 1600
    assert hit.trend == trend


@pytest.mark.slow
@pytest.mark.parametrize("alpha", [Constant(1.0), StretchedExp(1.0, 1.0, 2.0), StretchedExp(1.0, 1.0, 2.5)],
                         ids=["constant", "gaussian", "fast"])
@pytest.mark.parametrize("m", [2.0, 4.0])
def test_support_stays_in_the_ball_as_often_as_the_pde_says(alpha, m):
    config = ModelConfig(d=3, p=2.0, alpha=alpha)
    estimate = estimate_csp_probability(config, 2000, 1000, m, 1.0, seed=21)
    expected = csp_probability(config, m, 1.0)
    assert abs(estimate.value - expected) <= 3 * estimate.sigma + 1e-2
