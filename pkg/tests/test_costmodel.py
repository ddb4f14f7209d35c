import numpy as np
import pytest

from rxindex.costmodel import CostFit, fit_cost_model
from rxindex.errors import DegenerateSystem


def test_exact_affine_data_recovers_coefficients():
    spans = [2 ** n for n in range(6)]
    obs = [(s, 100.0 + 36.0 * s) for s in spans]
    fit = fit_cost_model(obs)
    assert fit.traversal == pytest.approx(100.0, abs=1e-9)
    assert fit.intersect == pytest.approx(36.0, abs=1e-9)
    assert fit.residual == pytest.approx(0.0, abs=1e-7)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(fit.predict(spans), [o[1] for o in obs])


def test_noisy_fit_matches_unconstrained_least_squares():
    # When the true coefficients are well inside the positive orthant the
    # non-negative solver and a plain lstsq must land on the same answer.
    rng = np.random.default_rng(42)
    spans = np.repeat(np.geomspace(1, 1024, 11), 5)
    costs = 7.5 + 3.25 * spans + rng.normal(0, 0.5, spans.size)
    costs = np.maximum(costs, 0)
    fit = fit_cost_model(zip(spans, costs))
    design = np.column_stack([np.ones_like(spans), spans])
    free, *_ = np.linalg.lstsq(design, costs, rcond=None)
    assert fit.traversal == pytest.approx(free[0], rel=1e-9)
    assert fit.intersect == pytest.approx(free[1], rel=1e-9)
    assert fit.r_squared > 0.999


def test_negative_intercept_clamps_to_zero():
    spans = np.array([10.0, 20.0, 40.0, 80.0])
    costs = 2.0 * spans - 5.0  # free fit would want traversal = -5
    fit = fit_cost_model(zip(spans, costs))
    assert fit.traversal == 0.0
    assert fit.intersect > 0
    design = np.column_stack([np.ones_like(spans), spans])
    free, *_ = np.linalg.lstsq(design, costs, rcond=None)
    assert free[0] < 0  # confirms the clamp actually bound


def test_degenerate_systems_are_refused():
    with pytest.raises(DegenerateSystem):
        fit_cost_model([(4, 10.0)])
    with pytest.raises(DegenerateSystem):
        fit_cost_model([(4, 10.0), (4, 12.0), (4, 9.0)])
    with pytest.raises(DegenerateSystem):
        fit_cost_model([])


def test_invalid_costs_are_refused():
    with pytest.raises(ValueError):
        fit_cost_model([(1, -3.0), (2, 5.0)])
    with pytest.raises(ValueError):
        fit_cost_model([(1, np.nan), (2, 5.0)])
    with pytest.raises(ValueError):
        fit_cost_model([(np.inf, 1.0), (2, 5.0)])


def test_constant_costs_fit_exactly():
    fit = fit_cost_model([(1, 8.0), (2, 8.0), (4, 8.0)])
    assert fit.intersect == pytest.approx(0.0, abs=1e-12)
    assert fit.traversal == pytest.approx(8.0, abs=1e-12)
    assert fit.r_squared == 1.0  # zero total variance, zero residual


def test_predict_is_vectorized():
    fit = CostFit(traversal=3.0, intersect=2.0, residual=0.0, r_squared=1.0)
    out = fit.predict([0, 1, 10])
    assert np.array_equal(out, [3.0, 5.0, 23.0])
    assert float(fit.predict(4)) == 11.0
