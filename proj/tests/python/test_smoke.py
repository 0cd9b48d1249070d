import math

import numpy as np
import pytest

import brpp


def test_crps_gev_matches_quadrature():
    p = brpp.GevParams(0.1, 0.3, 1.2)
    x = 1.7
    grid = np.linspace(-20.0, 200.0, 400001)
    f = brpp.gev_cdf(grid, p)
    integrand = (f - (grid >= x)) ** 2
    ref = np.sum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(grid))
    assert abs(float(brpp.crps_gev(x, p)) - ref) < 1e-4


def test_gumbel_round_trip():
    p = brpp.GevParams(-0.1, 0.5, 0.8)
    v = np.array([2.0, 3.5, 5.0])
    back = brpp.from_gumbel(brpp.to_gumbel(v, 1.0, 2.0, p), 1.0, 2.0, p)
    assert np.allclose(back, v, rtol=0, atol=1e-12)


def test_simulation_is_seeded_and_gumbel():
    model = brpp.UnivariateModel(0.02, 1.0)
    locs = np.array([[0.0, 0.0], [30.0, 0.0]])
    a = brpp.simulate_br(model, locs, 4000, 7)
    b = brpp.simulate_br(model, locs, 4000, 7)
    assert a.shape == (4000, 2, 1)
    assert np.array_equal(a, b)
    # Standard Gumbel: mean is Euler's constant, variance pi^2 / 6.
    z = a[:, 0, 0]
    assert abs(z.mean() - 0.5772156649) < 4 * math.pi / math.sqrt(6 * 4000)


def test_extremal_coefficient_from_pairs():
    model = brpp.UnivariateModel(0.05, 1.0)
    locs = np.array([[0.0, 0.0], [20.0, 0.0]])
    z = brpp.simulate_br(model, locs, 6000, 3)[:, :, 0]
    theta_hat = brpp.theta_from_madogram(brpp.fmadogram(z[:, 0].tolist(), z[:, 1].tolist()))
    theta = brpp.extremal_coeff(model, (0.0, 0.0), (20.0, 0.0))
    assert abs(theta_hat - theta) < 0.05


def test_scores():
    assert brpp.crps_empirical([0.0, 1.0], 0.0) == pytest.approx(0.25)
    y = np.array([[0.0], [1.0]])
    assert brpp.energy_score(y, np.array([0.0])) == brpp.crps_empirical([0.0, 1.0], 0.0)


def test_conditional_simulation_reproduces_conditioning_value():
    model = brpp.BivariateModel()
    draws = brpp.conditional_simulate(model, np.array([[0.0, 0.0]]), [1.5], 1, np.array([[0.0, 0.0], [5.0, 5.0]]),
                                      [1, 0], 20, 11)
    assert draws.shape == (20, 2)
    assert np.all(draws[:, 0] == 1.5)


def test_postprocess_shapes():
    model = brpp.BivariateModel()
    sites = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    margins = [brpp.GevParams(0.0, 1.0, 0.5)] * 3
    out = brpp.postprocess(model, sites, [20.0, 18.0, 22.0], [15.0] * 3, [2.0] * 3, margins, margins, 10, 5)
    assert out.shape == (10, 3)
    assert np.all(np.isfinite(out))


def test_errors_carry_category():
    with pytest.raises(brpp.BrppError) as info:
        brpp.validate_model(brpp.UnivariateModel(-1.0, 1.0))
    assert info.value.category == "invalid_argument"
    with pytest.raises(brpp.BrppError):
        brpp.fit_gev([1.0, 2.0, 3.0])
