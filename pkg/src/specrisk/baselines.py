"""Comparison optimisers, the reference solver and the oscillation example.

SGD, LSVRG and Prospect are run without the smoothing term (``nu = 0``).
Their internals here are reimplementations at the level of detail needed
for comparison; they are not bit-for-bit ports of the original code.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

import numpy as np

from .objective import ObjectiveModel, SampleCounter
from .permutahedron import lmo, project
from .sorel import DIVERGENCE_NORM, DivergenceError
from .spectra import SpectralWeights
from .trace import Stopwatch, TrainingTrace

METHODS = ("sgd", "lsvrg", "prospect", "reference")


@dataclass(frozen=True)
class BaselineConfig:
    method: str
    step_size: float
    batch_size: int = 64
    epoch_length: int | None = None
    seed: int = 0
    pass_budget: float = 100.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown baseline {self.method!r}")
        if not self.step_size > 0:
            raise ValueError("step size must be positive")
        if not self.pass_budget > 0:
            raise ValueError("pass budget must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        if self.epoch_length is not None and self.epoch_length < 1:
            raise ValueError("epoch length must be at least 1")


def _rng(seed):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def _guard(w):
    if not np.all(np.isfinite(w)) or np.linalg.norm(w) > DIVERGENCE_NORM:
        raise DivergenceError("iterate diverged; reduce the step size")


class _Recorder:
    """Appends a trace row every time another full pass has been spent."""

    def __init__(self, model, sigma, method, config, w0):
        self.model, self.sigma = model, sigma
        self.counter = SampleCounter(model.n)
        self.clock = Stopwatch().start()
        self.trace = TrainingTrace(method=method, metadata={
            "seed": config.seed, "spectrum": sigma.describe(), "step_size": config.step_size,
        })
        self.next_mark = 1.0
        self.k = 0
        self.trace.record(0, 0.0, 0.0, model.primal_objective(sigma, w0))

    def maybe_record(self, w, force=False):
        if force or self.counter.passes >= self.next_mark:
            self.clock.pause()
            self.k += 1
            self.trace.record(self.k, self.counter.passes, self.clock.elapsed,
                              self.model.primal_objective(self.sigma, w))
            self.next_mark = math.floor(self.counter.passes) + 1.0
            self.clock.start()

    def finish(self, w):
        if self.trace.rows[-1].passes < self.counter.passes:
            self.maybe_record(w, force=True)
        self.trace.w_final = np.array(w, copy=True)
        return self.trace


def run_sgd(model: ObjectiveModel, sigma: SpectralWeights, config: BaselineConfig,
            w0=None) -> TrainingTrace:
    """Minibatch subgradient descent with a batch-size spectrum.

    Each step sorts the minibatch losses and weights them with the spectrum
    of the same family regenerated for the batch size, which makes the
    direction biased unless the batch is the whole dataset.
    """
    n, m = model.n, config.batch_size
    if m > n:
        raise ValueError(f"batch size {m} exceeds dataset size {n}")
    X, y = model.dataset.features, model.dataset.targets
    sigma_b = sigma.weights if m == n else sigma.resized(m).weights
    rng = _rng(config.seed)
    w = np.zeros(model.d) if w0 is None else np.array(w0, dtype=np.float64)
    rec = _Recorder(model, sigma, "sgd", config, w)
    alpha = config.step_size
    while rec.counter.passes < config.pass_budget:
        idx = np.arange(n) if m == n else rng.choice(n, size=m, replace=False)
        pred = X[idx] @ w
        order = np.argsort(model._loss_from_pred(pred, y[idx]), kind="stable")
        weights = np.empty(m)
        weights[order] = sigma_b
        grad = (weights * model.loss_derivative(pred, y[idx])) @ X[idx] + model.reg_grad(w)
        w = w - alpha * grad
        rec.counter.add(m)
        _guard(w)
        rec.maybe_record(w)
    return rec.finish(w)


def run_lsvrg(model: ObjectiveModel, sigma: SpectralWeights, config: BaselineConfig,
              w0=None) -> TrainingTrace:
    """SVRG on the spectral risk with weights frozen at each checkpoint.

    At every checkpoint the weights are reset to the vertex that is optimal
    for the current losses; between checkpoints the weighted objective is
    treated as smooth. No dual damping and no primal anchor.
    """
    n = model.n
    epoch = config.epoch_length or n
    X, y = model.dataset.features, model.dataset.targets
    rng = _rng(config.seed)
    w = np.zeros(model.d) if w0 is None else np.array(w0, dtype=np.float64)
    rec = _Recorder(model, sigma, "lsvrg", config, w)
    alpha = config.step_size
    t = 0
    while rec.counter.passes < config.pass_budget:
        if t % epoch == 0:
            w_ref = w.copy()
            lam = lmo(model.full_loss_vector(w_ref, rec.counter), sigma)
            ref_deriv = model.loss_derivative(X @ w_ref, y)
            g_bar = model.weighted_full_grad(lam, w_ref, rec.counter)
        i = int(rng.integers(n))
        xi = X[i]
        diff = model.loss_derivative(xi @ w, y[i]) - ref_deriv[i]
        w = w - alpha * (n * lam[i] * diff * xi + g_bar + model.reg_grad(w))
        rec.counter.add(1)
        t += 1
        if t % epoch == 0:
            _guard(w)
        rec.maybe_record(w)
    _guard(w)
    return rec.finish(w)


class _SortedLosses:
    """Loss table kept sorted by (value, index) with the matching lmo vertex."""

    def __init__(self, losses, sigma_sorted):
        self.values = np.array(losses, dtype=np.float64)
        self.sigma = sigma_sorted
        self.keys = sorted(zip(self.values.tolist(), range(self.values.size)))
        self.lam = np.empty_like(self.values)
        for r, (_, j) in enumerate(self.keys):
            self.lam[j] = sigma_sorted[r]

    def update(self, i, value):
        old = (self.values[i], i)
        r_old = bisect.bisect_left(self.keys, old)
        del self.keys[r_old]
        new = (float(value), i)
        r_new = bisect.bisect_left(self.keys, new)
        self.keys.insert(r_new, new)
        self.values[i] = value
        for r in range(min(r_old, r_new), max(r_old, r_new) + 1):
            self.lam[self.keys[r][1]] = self.sigma[r]


def run_prospect(model: ObjectiveModel, sigma: SpectralWeights, config: BaselineConfig,
                 w0=None) -> TrainingTrace:
    """SAGA-style method with a refreshed loss table and weights from it.

    Each step refreshes the sampled loss in the table, re-ranks it and steps
    along ``n lam_i grad_i(w) - n rho_i G_i + sum_j rho_j G_j + grad g(w)``
    where ``G_j`` and ``rho_j`` are the stored gradient and the weight it was
    stored with. With ``nu = 0`` there is no convergence guarantee.
    """
    n = model.n
    X, y = model.dataset.features, model.dataset.targets
    rng = _rng(config.seed)
    w = np.zeros(model.d) if w0 is None else np.array(w0, dtype=np.float64)
    rec = _Recorder(model, sigma, "prospect", config, w)
    alpha = config.step_size

    pred = X @ w
    table = _SortedLosses(model._loss_from_pred(pred, y), np.sort(sigma.weights))
    rec.counter.add(n)
    stored = model.loss_derivative(pred, y)
    rho = table.lam.copy()
    g_bar = X.T @ (rho * stored)
    t = 0
    while rec.counter.passes < config.pass_budget:
        i = int(rng.integers(n))
        xi = X[i]
        p = xi @ w
        table.update(i, model._loss_from_pred(p, y[i]))
        lam_i = table.lam[i]
        deriv = model.loss_derivative(p, y[i])
        old = rho[i] * stored[i]
        w = w - alpha * (n * (lam_i * deriv - old) * xi + g_bar + model.reg_grad(w))
        g_bar = g_bar + (lam_i * deriv - old) * xi
        stored[i], rho[i] = deriv, lam_i
        rec.counter.add(1)
        t += 1
        if t % n == 0:
            _guard(w)
        rec.maybe_record(w)
    _guard(w)
    return rec.finish(w)


# -- reference solution ----------------------------------------------------


class ReferenceNotConverged(RuntimeError):
    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


@dataclass
class ReferenceSolution:
    """High-accuracy minimiser with its optimality certificate.

    ``gap`` bounds ``objective - min objective`` from above (it is a
    primal-dual gap), ``dual_weights`` the matching permutahedron point.
    """

    w: np.ndarray
    objective: float
    gap: float
    iterations: int
    dual_weights: np.ndarray


def _subgradient_warm_start(model, sigma, steps):
    X, y = model.dataset.features, model.dataset.targets
    w = np.zeros(model.d)
    best_w, best_f = w, model.primal_objective(sigma, w)
    step0 = 1.0 / (model.smoothness_L + model.reg_mu)
    for t in range(steps):
        pred = X @ w
        lam = lmo(model._loss_from_pred(pred, y), sigma)
        g = X.T @ (lam * model.loss_derivative(pred, y)) + model.reg_grad(w)
        w = w - step0 / math.sqrt(t + 1.0) * g
        f = model.primal_objective(sigma, w)
        if f < best_f:
            best_w, best_f = w, f
    return best_w


def reference_solution(model: ObjectiveModel, sigma: SpectralWeights, tol: float = 1e-10,
                       *, max_iter: int = 50000, warm_steps: int = 200) -> ReferenceSolution:
    """Minimise the spectral objective to a certified accuracy ``tol``.

    A short full-batch subgradient run provides a starting vertex. The
    polish stage then runs accelerated projected ascent on the dual
    function ``D(lam) = min_w lam^T l(w) + g(w)``, solving each inner
    minimisation exactly (a linear solve for least squares). Since
    ``D(lam) <= min F <= F(w)``, the best primal/dual pair seen gives an
    upper bound on the suboptimality of the returned point; iteration stops
    once it is below ``tol``.

    Raises :class:`ReferenceNotConverged` (carrying the best point found)
    if ``max_iter`` is exhausted.
    """
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    if sigma.n != model.n:
        raise ValueError("spectrum and dataset sizes differ")

    def dual(lam):
        u = model.solve_weighted(lam)
        losses = model.full_loss_vector(u)
        return float(lam @ losses) + model.reg_value(u), losses, u

    w_warm = _subgradient_warm_start(model, sigma, warm_steps) if warm_steps else np.zeros(model.d)
    lam = lmo(model.full_loss_vector(w_warm), sigma)
    D, grad, u = dual(lam)
    best_D, best_lam = D, lam
    best_F, best_w = model.primal_objective(sigma, u), u
    z, Dz, gz = lam, D, grad
    prev, t_mom, step = lam, 1.0, 1.0
    it = 0
    while best_F - best_D > tol and it < max_iter:
        it += 1
        while True:
            cand = project(z + step * gz, sigma)
            Dc, gc, uc = dual(cand)
            diff = cand - z
            if Dc >= Dz + gz @ diff - diff @ diff / (2.0 * step) - 1e-15 * abs(Dz) or step < 1e-16:
                break
            step *= 0.5
        Fc = model.primal_objective(sigma, uc)
        if Fc < best_F:
            best_F, best_w = Fc, uc
        if Dc > best_D:
            best_D, best_lam = Dc, cand
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_mom * t_mom))
        if Dc < D:
            # objective went down: drop the momentum
            t_next, z = 1.0, cand
        else:
            z = cand + ((t_mom - 1.0) / t_next) * (cand - prev)
        prev, D, t_mom = cand, Dc, t_next
        Dz, gz, _ = (Dc, gc, uc) if z is cand else dual(z)
        step *= 1.5
    result = ReferenceSolution(w=best_w, objective=best_F, gap=max(best_F - best_D, 0.0),
                               iterations=it, dual_weights=best_lam)
    if best_F - best_D > tol:
        raise ReferenceNotConverged(
            f"reference gap {best_F - best_D:.3e} above tolerance {tol:.1e} after {it} iterations",
            result,
        )
    return result


# -- unstabilised alternation on a two-sample example ----------------------


def oscillation_demo(alpha: float, w0: float, T: int = 500, outer: int = 10) -> list[float]:
    """Alternate exact weight selection with gradient descent on a 1-D toy.

    Losses ``(w - 1)^2 / 2`` and ``(w + 1)^2 / 2`` with spectrum ``[0, 1]``:
    each outer step puts all weight on the currently larger loss (on the
    first one when they tie) and runs ``T`` gradient steps of size ``alpha``
    on it. Returns ``[w_0, w_1, ..., w_outer]``.
    """
    if not 0.0 < alpha < 2.0:
        raise ValueError("step size must lie in (0, 2)")
    centres = (1.0, -1.0)
    w = float(w0)
    out = [w]
    for _ in range(outer):
        l1, l2 = 0.5 * (w - 1.0) ** 2, 0.5 * (w + 1.0) ** 2
        lam = (1.0, 0.0) if l1 >= l2 else (0.0, 1.0)
        for _ in range(T):
            g = lam[0] * (w - centres[0]) + lam[1] * (w - centres[1])
            w = w - alpha * g
        out.append(w)
    return out


def toy_model(mu: float = 0.0, w_radius: float = 1.0) -> ObjectiveModel:
    """The two-sample least-squares problem used by :func:`oscillation_demo`."""
    from .objective import Dataset

    return ObjectiveModel(Dataset(np.ones((2, 1)), np.array([1.0, -1.0]), name="toy"),
                          reg_mu=mu, w_radius=w_radius)
