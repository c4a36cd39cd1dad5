import numpy as np
import pytest

from specrisk import (Dataset, ObjectiveModel, SpectralWeights, cvar_weights, esrm_weights,
                      extremile_weights, lmo, uniform_weights)
from specrisk.baselines import (BaselineConfig, ReferenceNotConverged, _SortedLosses,
                                oscillation_demo, reference_solution, run_lsvrg,
                                run_prospect, run_sgd, toy_model)
from specrisk.harness.data import make_synthetic
from specrisk.trace import suboptimality

from oracles import epigraph_reference, ridge_solution


def _ls_model(n=60, d=5, seed=0, **kw):
    return ObjectiveModel(make_synthetic(n, d, seed=seed), **kw)


def test_config_validation():
    with pytest.raises(ValueError):
        BaselineConfig("adam", 0.1)
    with pytest.raises(ValueError):
        BaselineConfig("sgd", 0.0)
    with pytest.raises(ValueError):
        BaselineConfig("sgd", 0.1, pass_budget=0)
    with pytest.raises(ValueError):
        BaselineConfig("sgd", 0.1, batch_size=0)
    with pytest.raises(ValueError):
        BaselineConfig("lsvrg", 0.1, epoch_length=0)
    m = _ls_model(n=10)
    with pytest.raises(ValueError):
        run_sgd(m, uniform_weights(10), BaselineConfig("sgd", 0.1, batch_size=11))


# -- uniform spectrum sanity ------------------------------------------------------------

@pytest.mark.parametrize("method", ["sgd", "lsvrg", "prospect"])
def test_uniform_spectrum_reaches_ridge(method):
    m = _ls_model()
    u = uniform_weights(m.n)
    ridge = ridge_solution(m.dataset.features, m.dataset.targets, m.reg_mu)
    if method == "sgd":
        tr = run_sgd(m, u, BaselineConfig("sgd", 0.1, batch_size=m.n, pass_budget=2000))
    elif method == "lsvrg":
        tr = run_lsvrg(m, u, BaselineConfig("lsvrg", 0.01, pass_budget=300))
    else:
        tr = run_prospect(m, u, BaselineConfig("prospect", 0.01, pass_budget=300))
    np.testing.assert_allclose(tr.w_final, ridge, atol=1e-6)


def test_full_batch_sgd_step_is_subgradient():
    m = _ls_model(n=30)
    s = esrm_weights(30, 2.0)
    w0 = np.random.default_rng(0).normal(size=m.d)
    alpha = 0.01
    tr = run_sgd(m, s, BaselineConfig("sgd", alpha, batch_size=30, pass_budget=1), w0=w0)
    lam = lmo(m.full_loss_vector(w0), s)
    expected = w0 - alpha * (m.weighted_full_grad(lam, w0) + m.reg_grad(w0))
    np.testing.assert_allclose(tr.w_final, expected, atol=1e-14)


def test_sgd_on_toy_keeps_oscillating():
    m = toy_model(0.0)
    s = cvar_weights(2, 0.5)  # [0, 1]; regenerated as [1] for a single-sample batch
    tr = run_sgd(m, s, BaselineConfig("sgd", 0.1, batch_size=1, pass_budget=1000))
    w_abs = np.sqrt(2 * tr.column("objective")) - 1  # objective = (|w| + 1)^2 / 2
    tail = w_abs[-100:]
    assert tail.max() - tail.min() >= 0.1


def test_lsvrg_on_toy_stalls():
    m = toy_model(1e-3)
    s = cvar_weights(2, 0.5)
    w0 = np.array([0.5])
    ref = reference_solution(m, s, 1e-10)
    tr = run_lsvrg(m, s, BaselineConfig("lsvrg", 0.1, pass_budget=400), w0=w0)
    f0 = m.primal_objective(s, w0)
    sub = [suboptimality(v, f0, ref.objective) for v in tr.column("objective")[-50:]]
    assert np.median(sub) > 1e-2


def test_prospect_table_refresh():
    m = _ls_model(n=12)
    s = extremile_weights(12, 2.0)
    rng = np.random.default_rng(0)
    w_old, w = rng.normal(size=(2, m.d))
    table = _SortedLosses(m.full_loss_vector(w_old), np.sort(s.weights))
    for i in rng.permutation(12):
        table.update(int(i), m.loss_at(int(i), w))
    per_sample = [m.loss_at(i, w) for i in range(12)]
    np.testing.assert_array_equal(table.values, per_sample)
    # the vectorised pass may differ from per-sample dot products in the last ulp
    np.testing.assert_allclose(table.values, m.full_loss_vector(w), rtol=1e-14)
    np.testing.assert_array_equal(table.lam, lmo(per_sample, s))


def test_prospect_small_problem_records_suboptimality():
    m = _ls_model(n=40, d=3)
    s = cvar_weights(40, 0.5)
    ref = reference_solution(m, s)
    tr = run_prospect(m, s, BaselineConfig("prospect", 0.005, pass_budget=40))
    f0 = m.primal_objective(s, np.zeros(3))
    tr.attach_reference(f0, ref.objective)
    sub = tr.column("subopt")
    assert sub[0] == 1.0 and np.all(np.isfinite(sub)) and sub[-1] < 1.0


@pytest.mark.parametrize("runner,method", [(run_sgd, "sgd"), (run_lsvrg, "lsvrg"),
                                           (run_prospect, "prospect")])
def test_baselines_deterministic_and_monotone(runner, method):
    m = _ls_model(n=50)
    s = cvar_weights(50, 0.3)
    cfg = BaselineConfig(method, 0.005, batch_size=8, pass_budget=5, seed=2)
    a, b = runner(m, s, cfg), runner(m, s, cfg)
    assert np.array_equal(a.w_final, b.w_final)
    assert a.column("objective").tolist() == b.column("objective").tolist()
    assert np.all(np.diff(a.column("passes")) >= 0)
    assert np.all(np.diff(a.column("seconds")) >= 0)


# -- reference solver ------------------------------------------------------------------------

def test_reference_uniform_is_ridge():
    m = _ls_model(n=80)
    ref = reference_solution(m, uniform_weights(80), tol=1e-10)
    ridge = ridge_solution(m.dataset.features, m.dataset.targets, m.reg_mu)
    assert ref.objective - m.primal_objective(uniform_weights(80), ridge) <= 1e-10
    np.testing.assert_allclose(ref.w, ridge, atol=1e-6)


def test_reference_toy_is_zero():
    m = toy_model(0.1)
    ref = reference_solution(m, SpectralWeights(np.array([0.0, 1.0])), tol=1e-10)
    assert abs(ref.w[0]) <= 1e-5
    assert ref.objective - 0.5 <= 1e-10


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_reference_matches_epigraph_oracle(n):
    rng = np.random.default_rng(n)
    for _ in range(3):
        X, y = rng.normal(size=(n, 2)), rng.normal(size=n)
        s = np.sort(rng.random(n))
        sig = SpectralWeights(s / s.sum())
        m = ObjectiveModel(Dataset(X, y), reg_mu=0.2)
        ref = reference_solution(m, sig, tol=1e-11)
        w_or, f_or = epigraph_reference(X, y, sig.weights, 0.2, w_init=ref.w + 0.1)
        assert ref.objective <= f_or + 1e-11
        assert ref.objective == pytest.approx(f_or, abs=1e-7)
        np.testing.assert_allclose(ref.w, w_or, atol=1e-4)


def test_reference_gap_is_certified():
    m = _ls_model(n=100)
    s = esrm_weights(100, 5.0)
    ref = reference_solution(m, s, tol=1e-9)
    assert 0 <= ref.gap <= 1e-9
    assert ref.objective == pytest.approx(m.primal_objective(s, ref.w), abs=1e-15)
    # the dual weights certify the bound: D(lam) = min_w lam^T l(w) + g(w)
    u = m.solve_weighted(ref.dual_weights)
    assert ref.objective - m.weighted_objective(ref.dual_weights, u) <= 1e-9 + 1e-14


def test_reference_reports_nonconvergence():
    m = _ls_model(n=60)
    with pytest.raises(ReferenceNotConverged) as info:
        reference_solution(m, cvar_weights(60, 0.2), tol=1e-14, max_iter=2)
    assert info.value.result.w.shape == (m.d,)
    with pytest.raises(ValueError):
        reference_solution(m, cvar_weights(60, 0.2), tol=0.0)


# -- oscillation example ---------------------------------------------------------------------

def test_oscillation_examples():
    np.testing.assert_allclose(oscillation_demo(1.0, 0.5, 500, 6), [0.5, -1, 1, -1, 1, -1, 1], atol=1e-12)
    np.testing.assert_allclose(oscillation_demo(1.0, -0.3, 500, 5), [-0.3, 1, -1, 1, -1, 1], atol=1e-12)
    np.testing.assert_allclose(oscillation_demo(1.0, 0.0, 500, 4), [0.0, 1, -1, 1, -1], atol=1e-12)


def test_oscillation_smaller_step():
    ws = oscillation_demo(0.1, 0.5, T=500, outer=8)
    assert all(abs(abs(w) - 1) <= 1e-6 for w in ws[2:])
    with pytest.raises(ValueError):
        oscillation_demo(2.0, 0.5)
