import numpy as np
import pytest
from scipy.optimize import rosen, rosen_der

from monokin.errors import NumericalError, ValidationError
from monokin.optim import OptimizerConfig, adam, lbfgs, minimize


def rosen_fg(x):
    return float(rosen(x)), rosen_der(x)


def test_lbfgs_rosenbrock():
    res = lbfgs(rosen_fg, np.array([-1.2, 1.0, -0.5, 0.8]), OptimizerConfig(max_iter=500, gtol=1e-10))
    assert res.converged
    np.testing.assert_allclose(res.x, 1.0, atol=1e-5)
    assert all(b <= a for a, b in zip(res.trace, res.trace[1:]))


def test_quadratic_exact_minimum():
    a = np.diag([1.0, 10.0, 100.0])
    res = minimize(lambda x: (0.5 * x @ a @ x, a @ x), np.ones(3), OptimizerConfig(gtol=1e-12))
    np.testing.assert_allclose(res.x, 0.0, atol=1e-10)


def test_start_at_minimum_returns_immediately():
    res = lbfgs(lambda x: (float(x @ x), 2 * x), np.zeros(5))
    assert res.status == "converged_gradient" and res.n_iter == 0


def test_adam_decreases_and_tracks_best():
    res = adam(rosen_fg, np.array([-1.2, 1.0]), OptimizerConfig(max_iter=300, initial_step=0.05,
                                                                method="adam"))
    assert res.fun < rosen([-1.2, 1.0])
    assert all(b <= a for a, b in zip(res.trace, res.trace[1:]))


def test_max_iter_status():
    res = lbfgs(rosen_fg, np.array([-1.2, 1.0]), OptimizerConfig(max_iter=3))
    assert res.status == "max_iter" and res.n_iter == 3


def test_non_finite_gradient_names_index():
    def fg(x):
        g = 2 * x
        g[2] = np.nan
        return float(x @ x), g
    with pytest.raises(NumericalError, match="index 2"):
        lbfgs(fg, np.ones(4))


@pytest.mark.parametrize("kw", [dict(gtol=0), dict(xtol=-1), dict(max_iter=0),
                                dict(method="newton")])
def test_config_validation(kw):
    with pytest.raises(ValidationError):
        OptimizerConfig(**kw)
