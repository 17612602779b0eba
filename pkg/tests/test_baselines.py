import numpy as np
import pytest

from arclsr1.baselines import (
    METHODS,
    BaselineConfig,
    Lbfgs,
    baseline_step,
    first_order_minimize,
    lbfgs_minimize,
    make_first_order,
)
from arclsr1.errors import InvalidArgument, NumericFailure
from arclsr1.problems import Quadratic, random_spd, rosenbrock

e1 = np.array([1.0, 0.0])


def test_sgd_momentum_first_step():
    opt = make_first_order(2, BaselineConfig("sgd_momentum"))
    theta, opt = baseline_step(opt, e1, np.zeros(2))
    np.testing.assert_array_equal(theta, -0.1 * e1)
    np.testing.assert_array_equal(opt.velocity, -0.1 * e1)


def test_adam_first_step():
    opt = make_first_order(2, BaselineConfig("adam"))
    theta, _ = baseline_step(opt, e1, np.zeros(2))
    # bias-corrected moments are exactly g and g^2, so the step is lr / (1 + eps)
    assert theta[0] == -0.0009999990000010002
    assert theta[0] == pytest.approx(-1e-3 / (1 + 1e-6), rel=1e-15)
    assert theta[1] == 0.0


def test_adagrad_and_rmsprop_first_step():
    theta, _ = baseline_step(make_first_order(2, BaselineConfig("adagrad")), 2 * e1, np.zeros(2))
    assert theta[0] == pytest.approx(-1e-2 * 2 / (2 + 1e-10), rel=1e-15)
    theta, _ = baseline_step(make_first_order(2, BaselineConfig("rmsprop")), 2 * e1, np.zeros(2))
    assert theta[0] == pytest.approx(-1e-2 * 2 / (np.sqrt(0.01 * 4) + 1e-8), rel=1e-15)


@pytest.mark.parametrize("method", ["sgd_momentum", "adagrad", "rmsprop", "adam"])
def test_zero_gradient_leaves_theta(method):
    opt = make_first_order(3, BaselineConfig(method))
    theta = np.array([1.0, -2.0, 3.0])
    new, _ = baseline_step(opt, np.zeros(3), theta)
    np.testing.assert_array_equal(new, theta)


def test_nonfinite_gradient_and_shape_mismatch():
    opt = make_first_order(2, BaselineConfig("adam"))
    with pytest.raises(NumericFailure):
        baseline_step(opt, np.array([np.nan, 0.0]), np.zeros(2))
    with pytest.raises(InvalidArgument):
        baseline_step(opt, np.zeros(3), np.zeros(2))


@pytest.mark.parametrize("bad", [
    dict(method="sgd"), dict(method="adam", learning_rate=0.0), dict(method="sgd_momentum", momentum=1.0),
    dict(method="rmsprop", alpha_rms=1.0), dict(method="adam", beta2=1.0),
    dict(method="adagrad", eps_perturbation=0.0), dict(method="lbfgs", lbfgs_memory=0),
])
def test_config_validation(bad):
    with pytest.raises(InvalidArgument):
        BaselineConfig(**bad)


def test_defaults():
    assert BaselineConfig("sgd_momentum").learning_rate == 0.1
    assert BaselineConfig("adam").eps_perturbation == 1e-6
    assert BaselineConfig("lbfgs").learning_rate == 1.0
    assert BaselineConfig("lbfgs").lbfgs_tol == 1e-9


@pytest.mark.parametrize("method", METHODS)
def test_decrease_on_spd_quadratic_within_10_iterations(method):
    rng = np.random.default_rng(50)
    obj = Quadratic(random_spd(5, 10.0, rng), rng.standard_normal(5))
    x0 = np.zeros(5)
    if method == "lbfgs":
        res = lbfgs_minimize(obj, x0, BaselineConfig("lbfgs", max_iter=10))
    else:
        res = first_order_minimize(obj, x0, BaselineConfig(method), 10)
    assert res.trace[-1].f_value < obj.value(x0)


def test_lbfgs_quadratic_convergence():
    rng = np.random.default_rng(51)
    obj = Quadratic(random_spd(20, 10.0, rng), rng.standard_normal(20))
    res = lbfgs_minimize(obj, np.zeros(20), BaselineConfig("lbfgs", max_iter=60))
    assert res.trace[-1].grad_norm < 1e-8


def test_lbfgs_rosenbrock_convergence():
    res = lbfgs_minimize(rosenbrock(2), [-1.2, 1.0], BaselineConfig("lbfgs", max_iter=500))
    assert min(r.f_value for r in res.trace) < 1e-8


def test_lbfgs_stationary_start():
    res = lbfgs_minimize(Quadratic(np.eye(2)), np.zeros(2))
    assert res.stop_reason == "grad_tol" and res.trace == []


def test_lbfgs_direction_is_descent():
    obj = rosenbrock(4)
    opt = Lbfgs(BaselineConfig("lbfgs"))
    theta = -np.ones(4)
    f, g = obj.value_and_gradient(theta)
    for _ in range(30):
        if opt.s:
            assert g @ opt.direction(g) < 0
        theta, f, g, _, _ = opt.iterate(obj, theta, f, g)
    for s, y in zip(opt.s, opt.y):
        assert s @ y > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y)


def test_first_order_reports_divergence():
    obj = Quadratic(np.eye(2) * 1e3)
    res = first_order_minimize(obj, np.ones(2), BaselineConfig("sgd_momentum"), 2000)
    assert res.stop_reason == "numeric_failure"
    assert np.all(np.isfinite(res.theta))
