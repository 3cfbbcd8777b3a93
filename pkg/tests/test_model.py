import numpy as np
import pytest

from errors import BadDomain, ConfigError, NonPositiveAlpha, UnboundedBeta
from model import (
    Annulus,
    Ball,
    Constant,
    InverseSquareAt0,
    ModelConfig,
    NegPower,
    PowerLaw,
    Punctured,
    RadialPower,
    StretchedExp,
    Sum,
    build_coefficients,
    chart_radius,
    config_from_dict,
    config_hash,
    numerically_bounded_above,
    validate_config,
    validation_grid,
)


def test_validation_grid_spans_six_decades():
    grid = validation_grid()
    assert grid.size == 1024
    assert grid[0] == pytest.approx(1e-6)
    assert grid[-1] == pytest.approx(1e6)


def test_validation_grid_is_clipped_to_the_domain():
    assert validation_grid(Ball(2.0)).max() < 2.0
    grid = validation_grid(Annulus(0.1, 10.0))
    assert grid.min() > 0.1 and grid.max() < 10.0


def test_chart_radius_inverts_the_chart():
    r = np.array([1e-3, 0.5, 1.0, 2.0, 1e3])
    z = 1.0 / r - r
    np.testing.assert_allclose(chart_radius(z), r, rtol=1e-12)


def test_bounded_above_detection():
    grid = validation_grid()
    assert numerically_bounded_above(np.ones_like(grid), grid)
    assert not numerically_bounded_above(grid, grid)
    assert not numerically_bounded_above(1.0 / grid, grid)


def test_default_config_validates(brownian):
    report = validate_config(brownian)
    assert report.ok
    assert build_coefficients(brownian).bounds["alpha"] == (1.0, 1.0)


@pytest.mark.parametrize("config, error", [
    (ModelConfig(alpha=Constant(0.0)), NonPositiveAlpha),
    (ModelConfig(beta=PowerLaw(1.0, 1.0)), UnboundedBeta),
    (ModelConfig(p=1.0), ConfigError),
    (ModelConfig(d=1, domain=Punctured()), BadDomain),
    (ModelConfig(motion=RadialPower(m=0.0, C0=1.0, coefficient=0.5)), ConfigError),
])
def test_build_coefficients_rejects_broken_assumptions(config, error):
    assert not validate_config(config).ok
    with pytest.raises(error):
        build_coefficients(config)


def test_validate_config_flags_particle_limits():
    report = validate_config(ModelConfig(p=2.5, d=2.5))
    assert any("particle module unavailable" in flag for flag in report.flags)
    assert any("integer dimension" in flag for flag in report.flags)


def test_inverse_square_part_of_a_sum():
    beta = Sum([InverseSquareAt0(-1.5), Constant(2.0)])
    k, remainder = beta.inverse_square_part()
    assert k == -1.5
    assert remainder(np.array([3.0]))[0] == 2.0


def test_coefficient_facts():
    assert StretchedExp(1.0, 1.0, 2.0).positive()
    assert not StretchedExp(1.0, 1.0, 2.0).inf_positive()
    assert NegPower(1.0, 2.0).nonpositive()
    assert not NegPower(1.0, 2.0).bounded_below()
    assert Sum([Constant(1.0), Constant(-3.0)]).bounded_above()


def test_config_round_trip_keeps_the_hash():
    config = ModelConfig(d=2, p=1.5, motion=RadialPower(m=1.0), alpha=StretchedExp(2.0, 1.0, 1.0),
                         beta=Sum([Constant(1.0), InverseSquareAt0(-0.5)]), domain=Annulus(0.1, 4.0))
    again = config_from_dict(config.to_dict())
    assert config_hash(again) == config_hash(config)
    assert len(config_hash(config)) == 12


def test_config_hash_distinguishes_models():
    assert config_hash(ModelConfig(d=3)) != config_hash(ModelConfig(d=4))


def test_drift_of_radial_laplacian(brownian):
    coeffs = build_coefficients(brownian)
    assert coeffs.drift(np.array([2.0]))[0] == pytest.approx(1.0)
    assert coeffs.P(np.array([2.0]))[0] == pytest.approx(1.0)
