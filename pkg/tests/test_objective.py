import math

import numpy as np
import pytest

from specrisk import (Dataset, ObjectiveModel, SampleCounter, SpectralWeights, cvar_weights,
                      lmo, project, uniform_weights)
from specrisk.baselines import toy_model

from oracles import vertices


def _model(kind="least_squares", n=12, d=4, seed=0, **kw):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = rng.normal(size=n) if kind == "least_squares" else rng.choice([-1.0, 1.0], size=n)
    return ObjectiveModel(Dataset(X, y), loss_kind=kind, **kw)


def _fd_grad(f, w, h):
    g = np.zeros_like(w)
    for j in range(w.size):
        e = np.zeros_like(w)
        e[j] = h
        g[j] = (f(w + e) - f(w - e)) / (2 * h)
    return g


# -- dataset ------------------------------------------------------------------

def test_dataset_validation():
    ds = Dataset(np.ones((3, 2)), np.zeros(3))
    assert (ds.n, ds.d) == (3, 2)
    assert Dataset(np.arange(3.0), np.zeros(3)).d == 1
    with pytest.raises(ValueError):
        Dataset(np.ones((3, 2)), np.zeros(2))
    with pytest.raises(ValueError):
        Dataset(np.array([[np.nan, 1.0]]), np.zeros(1))
    with pytest.raises(ValueError):
        Dataset(np.ones((2, 2, 2)), np.zeros(2))


def test_model_validation():
    ds = Dataset(np.ones((3, 2)), np.array([0.0, 2.0, 1.0]))
    with pytest.raises(ValueError):
        ObjectiveModel(ds, loss_kind="hinge")
    with pytest.raises(ValueError):
        ObjectiveModel(ds, loss_kind="logistic")
    with pytest.raises(ValueError):
        ObjectiveModel(ds, reg_mu=-1.0)
    m = ObjectiveModel(ds)
    assert m.reg_mu == pytest.approx(1 / 3)


def test_constant_estimates():
    X = np.array([[3.0, 4.0], [1.0, 0.0]])
    y = np.array([1.0, -2.0])
    m = ObjectiveModel(Dataset(X, y), w_radius=2.0)
    assert m.smoothness_L == pytest.approx(25.0)
    assert m.lipschitz_G == pytest.approx(max(5 * (1 + 5 * 2), 1 * (2 + 1 * 2)))
    ml = ObjectiveModel(Dataset(X, np.array([1.0, -1.0])), loss_kind="logistic")
    assert ml.smoothness_L == pytest.approx(25 / 4)
    assert ml.lipschitz_G == pytest.approx(5.0)


def test_lipschitz_bound_holds_on_ball():
    m = _model(w_radius=3.0)
    rng = np.random.default_rng(1)
    for _ in range(200):
        w = rng.normal(size=m.d)
        w *= 3.0 * rng.random() / np.linalg.norm(w)
        i = int(rng.integers(m.n))
        assert np.linalg.norm(m.grad_at(i, w)) <= m.lipschitz_G + 1e-12


# -- losses and gradients ------------------------------------------------------

def test_loss_examples():
    m = ObjectiveModel(Dataset(np.array([[1.0, 0.0], [1.0, 1.0]]), np.array([0.0, 3.0])))
    assert m.loss_at(0, np.array([0.0, 5.0])) == 0.0
    assert m.loss_at(1, np.array([1.0, 0.0])) == 2.0
    np.testing.assert_array_equal(m.grad_at(0, np.array([0.0, 5.0])), [0.0, 0.0])
    np.testing.assert_allclose(m.grad_at(1, np.array([1.0, 0.0])), [-2.0, -2.0])
    ml = _model("logistic")
    assert ml.loss_at(3, np.zeros(ml.d)) == pytest.approx(math.log(2))


def test_index_errors():
    m = _model()
    with pytest.raises(IndexError):
        m.loss_at(m.n, np.zeros(m.d))
    with pytest.raises(IndexError):
        m.grad_at(-1, np.zeros(m.d))


@pytest.mark.parametrize("kind", ["least_squares", "logistic"])
def test_gradients_match_finite_differences(kind):
    m = _model(kind, n=20, d=5, seed=2)
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(250):
        i = int(rng.integers(m.n))
        w = rng.normal(size=m.d) * rng.choice([0.1, 1.0, 3.0])
        h = 1e-6 * (1 + np.linalg.norm(w))
        fd = _fd_grad(lambda u: m.loss_at(i, u), w, h)
        g = m.grad_at(i, w)
        worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(g), 1e-8))
    assert worst <= 1e-5


def test_full_loss_vector_and_counter():
    m = _model()
    w = np.random.default_rng(0).normal(size=m.d)
    c = SampleCounter(m.n)
    ell = m.full_loss_vector(w, c)
    np.testing.assert_allclose(ell, [m.loss_at(i, w) for i in range(m.n)], rtol=1e-14)
    assert c.passes == 1.0
    m.weighted_full_grad(np.full(m.n, 1 / m.n), w, c)
    assert c.samples == 2 * m.n


def test_full_loss_vector_interpolant_and_toy():
    X = np.eye(3)
    y = np.array([1.0, 2.0, 3.0])
    assert np.all(ObjectiveModel(Dataset(X, y)).full_loss_vector(y) == 0)
    np.testing.assert_allclose(toy_model().full_loss_vector(np.zeros(1)), [0.5, 0.5])


@pytest.mark.parametrize("kind", ["least_squares", "logistic"])
def test_weighted_full_grad(kind):
    m = _model(kind, n=6, d=3, seed=4)
    rng = np.random.default_rng(8)
    w = rng.normal(size=m.d)
    G = m.full_gradients(w)
    np.testing.assert_allclose(m.weighted_full_grad(np.full(m.n, 1 / m.n), w), G.mean(axis=0), atol=1e-14)
    e = np.zeros(m.n)
    e[2] = 1.0
    np.testing.assert_allclose(m.weighted_full_grad(e, w), m.grad_at(2, w), atol=1e-14)
    s = np.sort(rng.random(m.n))
    s /= s.sum()
    for _ in range(20):
        lam = project(rng.normal(size=m.n), s)
        w = rng.normal(size=m.d)
        h = 1e-6 * (1 + np.linalg.norm(w))
        fd = _fd_grad(lambda u: lam @ m.full_loss_vector(u), w, h)
        g = m.weighted_full_grad(lam, w)
        assert np.linalg.norm(g - fd) <= 1e-5 * max(np.linalg.norm(g), 1e-8)
    with pytest.raises(ValueError):
        m.weighted_full_grad(np.ones(m.n + 1), w)


# -- prox ---------------------------------------------------------------------------

def test_prox_examples():
    m0 = _model(reg_mu=0.0)
    wk = np.array([1.0, -2.0, 0.5, 3.0])
    np.testing.assert_allclose(m0.prox_step(wk, wk, 0.7, 2.0), wk, atol=1e-15)
    m = _model()
    x = np.array([1.0, 2.0, 3.0, 4.0])
    np.testing.assert_allclose(m.prox_step(x, np.zeros(4), 1e-12, 1.0), x, atol=1e-9)
    m1 = ObjectiveModel(Dataset(np.ones((2, 1)), np.zeros(2)), reg_mu=0.5)
    np.testing.assert_allclose(m1.prox_step(np.array([4.0]), np.array([1.0]), 1.0, 2.0), [2.25])


def test_prox_first_order_condition():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(200):
        mu = 10 ** rng.uniform(-4, 1)
        m = ObjectiveModel(Dataset(np.ones((1, 3)), np.zeros(1)), reg_mu=mu)
        x, anchor = rng.normal(size=3), rng.normal(size=3)
        alpha, tau = 10 ** rng.uniform(-3, 1), 10 ** rng.uniform(-2, 3)
        u = m.prox_step(x, anchor, alpha, tau)

        def obj(v):
            return 0.5 * mu * v @ v + (v - anchor) @ (v - anchor) / (2 * tau) + (v - x) @ (v - x) / (2 * alpha)

        h = 1e-5 * (1 + np.linalg.norm(u))
        resid = np.linalg.norm(_fd_grad(obj, u, h)) / (1 + 1 / alpha)
        worst = max(worst, resid)
    assert worst <= 1e-8


def test_prox_infinite_tau_and_errors():
    m = _model()
    x = np.ones(4)
    np.testing.assert_allclose(m.prox_step(x, np.zeros(4), 0.5, np.inf), x / (1 + 0.5 * m.reg_mu))
    with pytest.raises(ValueError):
        m.prox_step(x, x, 0.0, 1.0)
    with pytest.raises(ValueError):
        m.gradient_step(x, x, x, 1.0, -1.0)


def test_gradient_step_formula():
    m = _model()
    rng = np.random.default_rng(0)
    x, d, a = rng.normal(size=(3, 4))
    u = m.gradient_step(x, d, a, 0.1, 5.0)
    np.testing.assert_allclose(u, x - 0.1 * (d + (x - a) / 5.0 + m.reg_mu * x))


# -- composite objective ---------------------------------------------------------

def test_primal_objective_examples():
    m = _model(reg_mu=0.0)
    w = np.random.default_rng(0).normal(size=m.d)
    assert m.primal_objective(uniform_weights(m.n), w) == pytest.approx(m.full_loss_vector(w).mean(), rel=1e-14)
    toy = toy_model(0.0)
    assert toy.primal_objective(SpectralWeights(np.array([0.0, 1.0])), np.zeros(1)) == 0.5


def test_primal_objective_is_vertex_maximum():
    rng = np.random.default_rng(3)
    for n in (2, 3, 4, 5):
        m = _model(n=n, d=2, seed=n)
        s = np.sort(rng.random(n))
        sig = SpectralWeights(s / s.sum())
        for _ in range(10):
            w = rng.normal(size=2)
            brute = np.max(vertices(sig.weights) @ m.full_loss_vector(w)) + m.reg_value(w)
            assert m.primal_objective(sig, w) == pytest.approx(brute, abs=1e-13)
            lam = lmo(m.full_loss_vector(w), sig)
            assert m.weighted_objective(lam, w) == pytest.approx(brute, abs=1e-13)


@pytest.mark.parametrize("kind", ["least_squares", "logistic"])
def test_primal_objective_convex_along_segments(kind):
    m = _model(kind, n=30, d=3, seed=9)
    sig = cvar_weights(30, 0.3)
    rng = np.random.default_rng(2)
    for _ in range(100):
        a, b = rng.normal(size=(2, 3)) * 2
        mid = m.primal_objective(sig, (a + b) / 2)
        assert mid <= 0.5 * m.primal_objective(sig, a) + 0.5 * m.primal_objective(sig, b) + 1e-10


def test_uniform_objective_is_ridge():
    m = _model(n=15)
    w = np.random.default_rng(1).normal(size=m.d)
    X, y = m.dataset.features, m.dataset.targets
    ridge = 0.5 * np.mean((X @ w - y) ** 2) + 0.5 * m.reg_mu * w @ w
    assert m.primal_objective(uniform_weights(15), w) == pytest.approx(ridge, rel=1e-14)


@pytest.mark.parametrize("kind", ["least_squares", "logistic"])
def test_solve_weighted_stationarity(kind):
    m = _model(kind, n=25, d=4, seed=6)
    rng = np.random.default_rng(0)
    lam = project(rng.normal(size=m.n) * 0.1, cvar_weights(m.n, 0.4))
    anchor = rng.normal(size=m.d)
    for tau in (np.inf, 3.0):
        u = m.solve_weighted(lam, anchor, tau)
        grad = m.weighted_full_grad(lam, u) + m.reg_grad(u)
        if np.isfinite(tau):
            grad += (u - anchor) / tau
        assert np.linalg.norm(grad) <= 1e-10
