import math

import numpy as np
import pytest

from barrier import (
    M_RK,
    PSI_REPS,
    BarrierCandidate,
    StationaryCandidate,
    psi_grid,
    psi_ladder,
    search_m_rk,
    search_psi,
    stationary_residual,
    verify_barrier,
)
from chart import change_of_variables_line
from errors import ConfigError, NoValidParameters
from model import InverseSquareAt0, ModelConfig, Punctured, RadialPower


def test_candidate_validation():
    with pytest.raises(ConfigError):
        BarrierCandidate("Phi", R=1.0)
    with pytest.raises(ConfigError):
        BarrierCandidate(M_RK, R=1.0, p=1.0)
    with pytest.raises(ConfigError):
        BarrierCandidate(PSI_REPS, R=1.0, l=2.0)
    with pytest.raises(ConfigError):
        BarrierCandidate(PSI_REPS, R=1.0, log_eps=0.5)
    with pytest.raises(ConfigError):
        StationaryCandidate(kappa=0.0)


def test_m_rk_blows_up_at_the_radius():
    candidate = BarrierCandidate(M_RK, R=2.0)
    values = candidate.log_value(np.array([0.0, 1.0, 1.999999]))
    assert values[0] < values[1] < values[2]
    assert values[2] > 20


def test_psi_stays_finite_for_tiny_holes():
    log_eps = -3000 * math.log(10)
    candidate = BarrierCandidate(PSI_REPS, R=10.0, log_eps=log_eps)
    rho = psi_grid(10.0, log_eps)
    assert rho[0] > log_eps and rho[-1] < math.log(10.0)
    assert np.all(np.isfinite(candidate.log_value(rho)))


def test_m_rk_barrier_is_found_for_brownian_motion(brownian):
    fit = search_m_rk(brownian)
    assert fit.kind == M_RK
    assert fit.violation <= 0
    assert math.log2(fit.params["K"]).is_integer()
    candidate = BarrierCandidate(M_RK, R=10.0, K=fit.params["K"])
    assert verify_barrier(candidate, brownian) <= 0


def test_barriers_need_a_radial_motion(punctured_d3):
    line = change_of_variables_line(punctured_d3)
    with pytest.raises(ConfigError):
        verify_barrier(BarrierCandidate(M_RK, R=2.0), line)


def test_stationary_power_solves_the_equation():
    # W = c r^-2 solves Laplacian W = W^2 in d = 3 with c = 2
    config = ModelConfig(d=3, p=2.0, domain=Punctured())
    assert stationary_residual(StationaryCandidate(kappa=2.0), config) < 1e-10
    assert stationary_residual(StationaryCandidate(kappa=1.0), config) > 0.1


def test_stationary_residual_needs_positive_radii():
    with pytest.raises(ConfigError):
        stationary_residual(StationaryCandidate(kappa=1.0), ModelConfig(domain=Punctured()), grid=[0.0, 1.0])


def test_psi_ladder_ties_radius_and_hole_to_the_growth_rate():
    pairs = psi_ladder(2.0, 0.5, 4.0, t1=1.0)
    assert len(pairs) == 4
    for (R, log_eps), (m, j) in zip(pairs, [(4, 4), (4, 8), (8, 4), (8, 8)]):
        # R^2 = 10^m exp((p-1) gamma (t1+1)) and eps^l R^s = 10^-j
        assert 2 * math.log(R) == pytest.approx(8.0 + m * math.log(10))
        assert 0.5 * log_eps + 2 * math.log(R) == pytest.approx(-j * math.log(10))


def test_psi_ladder_grows_with_gamma():
    small = psi_ladder(2.0, 1.0, 1.0)
    large = psi_ladder(2.0, 1.0, 64.0)
    assert all(b[0] > a[0] and b[1] < a[1] for a, b in zip(small, large))
    rho = psi_grid(large[-1][0], large[-1][1])
    candidate = BarrierCandidate(PSI_REPS, R=large[-1][0], log_eps=large[-1][1], gamma=64.0)
    assert np.all(np.isfinite(candidate.log_value(rho)))


@pytest.mark.slow
@pytest.mark.parametrize("m", [0.0, 1.0, 2.0])
def test_m_rk_barrier_is_found_for_bounded_growth_motions(m):
    config = ModelConfig(d=3, p=2.0, motion=RadialPower(m=m))
    fit = search_m_rk(config)
    assert fit.violation <= 0


@pytest.mark.slow
def test_psi_barrier_is_found_for_strong_inverse_square_killing(punctured_d3_damped):
    fit = search_psi(punctured_d3_damped)
    assert fit.kind == PSI_REPS
    assert fit.violation <= 0
    # the tail exponent has to satisfy l (l + 3) <= 2
    assert fit.params["l"] <= 0.5


@pytest.mark.slow
@pytest.mark.parametrize("kappa", [-0.5, 0.0])
def test_psi_barrier_fails_for_weak_killing(half_laplacian, kappa):
    config = ModelConfig(d=3, p=2.0, motion=half_laplacian, beta=InverseSquareAt0(kappa), domain=Punctured())
    with pytest.raises(NoValidParameters):
        search_psi(config)
