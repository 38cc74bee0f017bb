import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from coltkf.censored_moments import CensorBand
from coltkf.errors import DegenerateVariance, GainFloorHit
from coltkf.filters import (
    FilterKind,
    FilterState,
    filter_setup,
    linear_update,
    predict,
    predicted_measurement,
    read_trace_csv,
    run_filter,
    step_loglik,
    tobit_update,
)
from coltkf.gaussian_core import RngHandle
from coltkf.harness import builtin_experiment
from coltkf.state_space import ArParams, ColouredStateSpace, simulate

from conftest import EXAMPLE_COV, random_psd

INF = CensorBand()


def test_filter_kind_parse():
    assert FilterKind.parse("coltkf") is FilterKind.ColTKF
    assert FilterKind.parse("TKFC") is FilterKind.TKFc
    with pytest.raises(ValueError):
        FilterKind.parse("ukf")


def test_predict_examples():
    s = FilterState(np.array([1.0, 2.0]), np.eye(2))
    p = predict(s, np.eye(2), np.zeros((2, 2)))
    np.testing.assert_array_equal(p.z_hat, [1.0, 2.0])
    np.testing.assert_array_equal(p.P, np.eye(2))

    rot = np.array([[0.0, -1.0], [1.0, 0.0]])
    p = predict(FilterState(np.array([1.0, 0.0]), np.diag([1.0, 4.0])), rot, np.zeros((2, 2)))
    np.testing.assert_allclose(p.z_hat, [0.0, 1.0])
    np.testing.assert_allclose(p.P, np.diag([4.0, 1.0]))

    p = predict(s, 2.0 * np.eye(2), np.eye(2))
    np.testing.assert_array_equal(p.P, 5.0 * np.eye(2))


def test_predicted_measurement_example():
    prior = FilterState(np.ones(3), np.array(EXAMPLE_COV))
    pm = predicted_measurement(prior, np.array([0.0, 0.0, 1.0]), 0.0, CensorBand(0.5, 2.0))
    assert pm.mean_latent == 1.0 and pm.var_latent == 2.0
    assert pm.mean_censored == pytest.approx(1.1494, abs=5e-5)
    assert pm.var_censored == pytest.approx(0.4003, abs=5e-5)
    np.testing.assert_allclose(pm.cross_cov, [0.3984, 0.7968, 0.7968], atol=5e-5)


def test_predicted_measurement_degenerate():
    prior = FilterState(np.zeros(2), np.zeros((2, 2)))
    with pytest.raises(DegenerateVariance):
        predicted_measurement(prior, np.array([1.0, 0.0]), 0.0, INF)


def test_deep_censoring_measurement():
    prior = FilterState(np.array([-20.0]), np.array([[1.0]]))
    pm = predicted_measurement(prior, np.array([1.0]), 0.0, CensorBand(0.0, 1.0))
    assert pm.uncensored_prob < 1e-50
    assert pm.mean_censored == pytest.approx(0.0, abs=1e-50)
    s = tobit_update(prior, pm, 0.0)
    assert s.skipped
    np.testing.assert_array_equal(s.z_hat, prior.z_hat)
    with pytest.raises(GainFloorHit):
        tobit_update(prior, pm, 0.0, strict=True)


def test_tobit_update_scalar_against_quadrature():
    # prior N(0, 1), measurement y* = x + e with e ~ N(0, 1), band (-1, 1), y = 0.5
    prior = FilterState(np.array([0.0]), np.array([[1.0]]))
    pm = predicted_measurement(prior, np.array([1.0]), 1.0, CensorBand(-1.0, 1.0))
    dist = stats.norm(0.0, math.sqrt(2.0))
    clip = lambda x: min(max(x, -1.0), 1.0)
    mean_c = integrate.quad(lambda x: clip(x) * dist.pdf(x), -40, 40, points=[-1, 1])[0]
    var_c = integrate.quad(lambda x: (clip(x) - mean_c) ** 2 * dist.pdf(x), -40, 40, points=[-1, 1])[0]
    # E[x (y - E y)] with x | y* ~ linear: cov(x, y*) / var(y*) * E[y* clip(y*)]
    cross = 0.5 * integrate.quad(lambda x: x * (clip(x) - mean_c) * dist.pdf(x), -40, 40, points=[-1, 1])[0]
    assert pm.mean_censored == pytest.approx(mean_c, abs=1e-12)
    assert pm.var_censored == pytest.approx(var_c, rel=1e-10)
    assert pm.cross_cov[0] == pytest.approx(cross, rel=1e-10)
    post = tobit_update(prior, pm, 0.5)
    K = cross / var_c
    assert post.z_hat[0] == pytest.approx(K * 0.5, rel=1e-10)
    assert post.P[0, 0] == pytest.approx(1.0 - K * cross, rel=1e-10)


def test_linear_update_example():
    prior = FilterState(np.zeros(2), np.eye(2))
    post = linear_update(prior, np.array([1.0, 0.0]), 1.0, 2.0)
    np.testing.assert_allclose(post.z_hat, [1.0, 0.0])
    np.testing.assert_allclose(post.P, np.diag([0.5, 1.0]))


@settings(max_examples=50)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1), st.floats(0.0, 2.0), st.floats(-3, 3))
def test_tobit_reduces_to_linear_without_band(n, seed, R, y):
    rng = np.random.default_rng(seed)
    prior = FilterState(rng.normal(size=n), random_psd(rng, n))
    H = rng.normal(size=n)
    pm = predicted_measurement(prior, H, R, INF)
    a = tobit_update(prior, pm, y)
    b = linear_update(prior, H, R, y)
    np.testing.assert_allclose(a.z_hat, b.z_hat, atol=1e-12)
    np.testing.assert_allclose(a.P, b.P, atol=1e-12)


@settings(max_examples=50)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1), st.floats(-2, 2), st.floats(0.1, 3), st.floats(0, 1))
def test_tobit_update_properties(n, seed, a, w, frac):
    rng = np.random.default_rng(seed)
    prior = FilterState(rng.normal(size=n), random_psd(rng, n))
    H = rng.normal(size=n)
    band = CensorBand(a, a + w)
    pm = predicted_measurement(prior, H, 0.5, band)
    y = a + frac * w
    post = tobit_update(prior, pm, y)
    assert np.array_equal(post.P, post.P.T)
    if post.skipped:
        return
    assert np.trace(post.P) <= np.trace(prior.P) + 1e-12
    K = pm.cross_cov / pm.var_censored
    # the correction moves the estimate along K, signed by the censored innovation
    step = post.z_hat - prior.z_hat
    np.testing.assert_allclose(step, K * (y - pm.mean_censored), atol=1e-12)
    if abs(y - pm.mean_censored) > 1e-9:
        assert np.sign(H @ step) == np.sign(y - pm.mean_censored) or abs(H @ step) < 1e-12


def test_step_loglik_values():
    assert step_loglik(0.0, 0.0, 1.0, INF) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-15)
    band = CensorBand(0.0, 1.0)
    assert step_loglik(0.0, 0.0, 1.0, band) == pytest.approx(math.log(0.5), abs=1e-15)
    assert step_loglik(1.0, 0.0, 4.0, band) == pytest.approx(math.log(stats.norm.sf(0.5)), abs=1e-14)
    assert step_loglik(0.0, 50.0, 1.0, band) == pytest.approx(stats.norm.logcdf(-50.0), rel=1e-12)


@pytest.mark.parametrize("experiment", [1, 2])
@pytest.mark.parametrize("kind", list(FilterKind))
def test_compiled_matches_python(experiment, kind):
    model = builtin_experiment(experiment).model
    traj = simulate(model, 200, RngHandle(3, experiment))
    params = ArParams([0.5, -0.3], 0.7)
    a = run_filter(kind, model, traj.observed, assumed_params=params)
    b = run_filter(kind, model, traj.observed, assumed_params=params, engine="python")
    for name in ("prior_z", "prior_P", "post_z", "post_P", "mean_censored", "var_censored", "uncensored_prob", "cross_cov"):
        np.testing.assert_allclose(getattr(a, name), getattr(b, name), rtol=1e-9, atol=1e-11, err_msg=name)
    assert a.loglik == pytest.approx(b.loglik, rel=1e-10)
    assert a.n_skipped == b.n_skipped


def test_all_filters_agree_for_white_uncensored_noise():
    base = builtin_experiment(2).model
    model = ColouredStateSpace(**{**base.__dict__, "band": INF})
    traj = simulate(model, 300, RngHandle(2))
    traces = {k: run_filter(k, model, traj.observed) for k in FilterKind}
    for k in (FilterKind.TKFc, FilterKind.ColTKF):
        np.testing.assert_allclose(traces[k].x_hat, traces[FilterKind.AKF].x_hat, atol=1e-9)
    assert traces[FilterKind.ColTKF].loglik == pytest.approx(traces[FilterKind.AKF].loglik, abs=1e-9)


def test_filter_setup_shapes():
    model = builtin_experiment(1).model
    s = filter_setup("tkfc", model)
    assert s.A.shape == (2, 2) and s.R == 1.0 and s.tobit
    s = filter_setup("tkfc", model, tkfc_noise="stationary")
    assert s.R == pytest.approx(1 / (1 - 0.99**2))
    np.testing.assert_allclose(s.Q, 1e-4 / (1 - 0.81) * np.eye(2))
    s = filter_setup("akf", model)
    assert s.A.shape == (5, 5) and s.R == 0.0 and not s.tobit
    with pytest.raises(ValueError):
        filter_setup("tkfc", model, tkfc_noise="bogus")


def test_run_filter_input_checks():
    model = builtin_experiment(1).model
    with pytest.raises(ValueError):
        run_filter("coltkf", model, [0.0, math.nan])
    with pytest.raises(ValueError):
        run_filter("coltkf", model, [6.0])
    with pytest.raises(ValueError):
        run_filter("coltkf", model, [0.0], engine="gpu")


def test_trace_csv(tmp_path):
    model = builtin_experiment(1).model
    traj = simulate(model, 30, RngHandle(0))
    tr = run_filter("coltkf", model, traj.observed)
    path = tmp_path / "trace.csv"
    tr.to_csv(path)
    assert path.read_text().splitlines()[0] == (
        "t,zhat_1,zhat_2,zhat_3,zhat_4,zhat_5,loglik_step,mean_censored,var_censored,uncensored_prob"
    )
    back = read_trace_csv(path)
    assert np.array_equal(back["z_hat"], tr.post_z)
    assert np.array_equal(back["loglik_step"], tr.loglik_steps)
    assert len(tr) == 30 and tr.x_hat.shape == (30, 2)
    buf = io.StringIO()
    tr.to_csv(buf)
    assert buf.getvalue() == path.read_text()
