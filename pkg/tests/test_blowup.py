import numpy as np
import pytest

from blowup import (
    BlowupProblem,
    beta_shift_check,
    check_nonincreasing,
    compare_solutions_monotonicity,
    csp_probability,
    default_levels,
    epsilon_limit,
    plateau_verdict,
    punctured_classify,
    solve_blowup_ball,
    umax_classify,
)
from errors import DimensionTooSmall, GridError, HypothesisUnmet, InvariantViolation, LadderTooCoarse, NoSaturation
from model import Constant, InverseSquareAt0, ModelConfig, Punctured, RadialPower, StretchedExp, build_coefficients
from theory import Outcome, predict_csp

FAST = dict(nodes=150, dt=0.02, rel_tol=1e-2, max_levels=6)


def test_problem_rejects_bad_levels(brownian):
    with pytest.raises(InvariantViolation):
        BlowupProblem(brownian, levels=(100.0, 10.0))
    with pytest.raises(GridError):
        BlowupProblem(brownian, lo=2.0, hi=1.0)
    with pytest.raises(InvariantViolation):
        BlowupProblem(brownian, initial=-1.0)


def test_problem_kind(brownian, punctured_d3):
    assert BlowupProblem(brownian).kind == "ball"
    assert not BlowupProblem(brownian).both_ends
    assert BlowupProblem(punctured_d3, lo=0.1, hi=2.0).kind == "annulus"


def test_default_levels_grow_geometrically(brownian):
    problem = BlowupProblem(brownian, hi=4.0, max_levels=5)
    grid = problem.make_grid()
    levels = default_levels(problem, grid, build_coefficients(brownian))
    assert len(levels) == 5
    # ten times the space-free solution 1 / t at the horizon
    assert levels[0] == pytest.approx(10.0)
    np.testing.assert_allclose(np.array(levels[1:]) / np.array(levels[:-1]), 10.0)


def test_default_levels_scale_with_the_power():
    config = ModelConfig(d=3, p=1.5)
    problem = BlowupProblem(config, hi=4.0, max_levels=4)
    levels = default_levels(problem, problem.make_grid(), build_coefficients(config))
    assert levels[0] == pytest.approx(40.0)
    np.testing.assert_allclose(np.array(levels[1:]) / np.array(levels[:-1]), 100.0)


def test_vanishing_alpha_at_the_boundary_is_reported(fast_decay):
    problem = BlowupProblem(fast_decay, hi=16.0)
    with pytest.raises(NoSaturation, match="r=16"):
        default_levels(problem, problem.make_grid(), build_coefficients(fast_decay))


def test_umax_ladder_reports_underflowing_alpha(fast_decay):
    with pytest.raises(NoSaturation):
        umax_classify(fast_decay, radii=(2.0, 4.0, 16.0), **FAST)


def test_probe_next_to_the_boundary_is_rejected(brownian):
    with pytest.raises(GridError):
        solve_blowup_ball(BlowupProblem(brownian, hi=2.0, probes=(2.0,), **FAST))


@pytest.mark.parametrize("sequence, expected", [
    ((1e-3, 1e-5, 1e-8), Outcome.HOLDS),
    ((0.8, 0.5, 0.5, 0.5), Outcome.FAILS),
    ((1.0, 0.5, 0.1), Outcome.UNDETERMINED),
])
def test_plateau_verdict(sequence, expected):
    assert plateau_verdict(sequence, "test").value == expected


def test_check_nonincreasing():
    check_nonincreasing([3.0, 2.0, 2.0, 1.0], "radius")
    with pytest.raises(InvariantViolation):
        check_nonincreasing([1.0, 2.0], "radius")


def test_epsilon_limit_reads_the_extrapolation():
    eps = [0.2, 0.1, 0.05, 0.025]
    flat = epsilon_limit(eps, [0.6, 0.6, 0.6, 0.6], 1.0, "test")
    assert flat.value == Outcome.FAILS
    decaying = [1.0 / np.log(1.0 / e) for e in eps]
    assert epsilon_limit(eps, decaying, 1.0, "test").value == Outcome.HOLDS
    assert epsilon_limit(eps, [1e-3, 1e-5, 1e-7, 1e-9], 1.0, "test").value == Outcome.HOLDS


def test_ladders_need_three_points(brownian, punctured_d3):
    with pytest.raises(LadderTooCoarse):
        umax_classify(brownian, radii=(2.0, 4.0))
    with pytest.raises(InvariantViolation):
        umax_classify(brownian, radii=(4.0, 2.0, 8.0))
    with pytest.raises(LadderTooCoarse):
        punctured_classify(punctured_d3, eps_ladder=(0.1, 0.05))


def test_punctured_ladder_checks_its_geometry(punctured_d3):
    with pytest.raises(DimensionTooSmall):
        punctured_classify(ModelConfig(d=1, domain=Punctured()))
    with pytest.raises(GridError):
        punctured_classify(punctured_d3, probe=3.0, radii=(2.0, 4.0, 8.0))


def test_csp_probability_is_one_at_time_zero(brownian):
    assert csp_probability(brownian, 4.0, 0.0) == 1.0


def test_comparison_needs_ordered_coefficients(brownian):
    with pytest.raises(HypothesisUnmet):
        compare_solutions_monotonicity(brownian, brownian.replace(alpha=Constant(2.0)))
    with pytest.raises(HypothesisUnmet):
        compare_solutions_monotonicity(brownian.replace(beta=Constant(1.0)), brownian)


def test_shift_must_be_non_negative(brownian):
    with pytest.raises(HypothesisUnmet):
        beta_shift_check(brownian, -1.0)


def test_ball_solution_saturates(brownian):
    field = solve_blowup_ball(BlowupProblem(brownian, hi=3.0, probes=(0.0, 1.0), **FAST))
    history = np.array(field.meta["probe_history"])
    assert history.shape[1] == 2
    assert history.shape[0] >= 2
    assert np.all(field.final() >= 0)
    # boundary value dominates the inside
    assert field.final()[0] < field.final()[-1]


@pytest.mark.slow
def test_brownian_ball_ladder_vanishes(brownian):
    verdict = umax_classify(brownian, radii=(3.0, 6.0, 12.0), threads=3, **FAST)
    assert verdict.value == Outcome.HOLDS


@pytest.mark.slow
def test_csp_probability_grows_with_the_ball(brownian):
    small = csp_probability(brownian, 2.0, 1.0, **FAST)
    large = csp_probability(brownian, 4.0, 1.0, **FAST)
    assert 0.0 <= small <= large <= 1.0


@pytest.mark.slow
def test_more_absorption_gives_smaller_solutions(brownian):
    report = compare_solutions_monotonicity(brownian.replace(alpha=Constant(2.0)), brownian, radius=3.0, **FAST)
    assert report.consistent
    assert report.verdict1.value == Outcome.HOLDS


@pytest.mark.slow
def test_constant_shift_is_dominated_by_exponential_growth(brownian):
    report = beta_shift_check(brownian, 1.0, radius=3.0, **FAST)
    assert report.shift == 1.0
    assert report.agree


def _stretched(m: float, s: float) -> ModelConfig:
    return ModelConfig(d=3, p=2.0, motion=RadialPower(m=m), alpha=StretchedExp(1.0, 1.0, s))


@pytest.mark.slow
@pytest.mark.parametrize("config, radii, expected", [
    (_stretched(0.0, 2.0), (2.0, 4.0, 8.0, 16.0), Outcome.HOLDS),
    (_stretched(1.0, 1.0), (2.0, 4.0, 8.0, 16.0), Outcome.HOLDS),
    (_stretched(0.0, 2.5), (3.0, 4.0, 5.0, 6.0), Outcome.FAILS),
    (_stretched(1.0, 1.5), (2.0, 4.0, 8.0, 16.0), Outcome.FAILS),
    (ModelConfig(d=3, p=2.0, motion=RadialPower(m=1.0)), (2.0, 4.0, 8.0, 16.0), Outcome.HOLDS),
], ids=["m0-gaussian", "m1-exponential", "m0-fast", "m1-fast", "m1-constant"])
def test_umax_ladder_matches_the_decay_threshold(config, radii, expected):
    verdict = umax_classify(config, radii=radii, threads=4)
    assert verdict.value == expected
    assert predict_csp(config).value == expected


@pytest.mark.slow
def test_points_are_hit_in_three_dimensions_only(punctured_d3, punctured_d4):
    assert punctured_classify(punctured_d3, radii=(4.0, 8.0), threads=4).value == Outcome.FAILS
    assert punctured_classify(punctured_d4, radii=(4.0, 8.0), threads=4).value == Outcome.HOLDS


@pytest.mark.slow
@pytest.mark.parametrize("kappa, expected", [(-0.5, Outcome.FAILS), (-2.0, Outcome.HOLDS)])
def test_inverse_square_killing_decides_point_hitting(punctured_d3, kappa, expected):
    config = punctured_d3.replace(beta=InverseSquareAt0(kappa))
    assert punctured_classify(config, radii=(4.0, 8.0), threads=4).value == expected


@pytest.mark.slow
@pytest.mark.parametrize("config, radii", [
    (ModelConfig(d=3, p=2.0), (2.0, 4.0, 8.0)),
    (_stretched(0.0, 2.5), (3.0, 4.0, 5.0, 6.0)),
], ids=["holds", "fails"])
def test_large_constant_creation_keeps_the_verdict(config, radii):
    report = beta_shift_check(config, 5.0, radius=5.0, radii=radii)
    assert report.verdict1.decisive
    assert report.verdict1.value == report.verdict2.value
    assert report.agree
