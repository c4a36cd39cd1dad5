"""Stochastic primal-dual optimisation of spectral risks with variance reduction.

Each outer iteration extrapolates the loss vector, takes a proximal step on
the dual weights (a projection onto the permutahedron) and then approximately
minimises the weighted, anchored primal subproblem

    P_k(w) = lam^T l(w) + g(w) + ||w - w_k||^2 / (2 tau_k)

with a prox-SVRG inner loop.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .objective import ObjectiveModel, SampleCounter
from .permutahedron import contains, lmo, project
from .spectra import SpectralWeights, spectral_risk
from .trace import Stopwatch, TrainingTrace

DIVERGENCE_NORM = 1e8
INNER_MEMBERSHIP_TOL = 1e-8


class DivergenceError(RuntimeError):
    """Iterates blew up; usually the step size is too large."""


@dataclass(frozen=True)
class ScheduleParams:
    """Per-outer-iteration parameters.

    The callables map the outer index ``k`` to the momentum ``theta``, dual
    step ``eta``, primal proximal parameter ``tau``, telescoping weight
    ``gamma``, subproblem accuracy ``delta``, epoch length ``m`` and inner
    step count ``T``. ``analysis_alpha`` is the auxiliary multiplier that only
    appears in the convergence analysis.

    Use :func:`theoretical_schedule` or :func:`practical_schedule` to build
    one, and :meth:`replace` to override pieces.
    """

    mode: str
    alpha: float
    theta: Callable[[int], float]
    eta: Callable[[int], float]
    tau: Callable[[int], float]
    gamma: Callable[[int], float]
    delta: Callable[[int], float]
    m: Callable[[int], int]
    T: Callable[[int], int]
    analysis_alpha: Callable[[int], float]
    inner: str = "stochastic"
    step: str = "prox"
    output: str = "average"
    batch_size: int = 1

    def __post_init__(self):
        if self.mode not in ("theoretical", "practical"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if self.inner not in ("stochastic", "exact"):
            raise ValueError(f"unknown inner solver {self.inner!r}")
        if self.step not in ("prox", "gradient"):
            raise ValueError(f"unknown inner step {self.step!r}")
        if self.output not in ("average", "last"):
            raise ValueError(f"unknown inner output {self.output!r}")
        if not self.alpha > 0:
            raise ValueError("inner step size must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")

    def replace(self, **changes) -> "ScheduleParams":
        return dataclasses.replace(self, **changes)


def theoretical_schedule(mu: float, L: float, G: float, *, c_T: float = 2.0,
                         m_rule: str = "theorem", inner: str = "stochastic") -> ScheduleParams:
    """Parameters under which the O(1/K^2) distance bound holds.

    ``m_rule="theorem"`` uses ``m_k = 384 L / ((k+5) mu) + 2``; ``"lemma"``
    uses ``m_k = 96 L / (mu + 1/tau_k) + 2``. Both are rounded up. The inner
    step count is ``T_k = ceil(c_T * m_k * log(1/delta_k))``, rounded up to a
    whole number of epochs.
    """
    if not (mu > 0 and L > 0 and G > 0):
        raise ValueError("mu, L and G must be positive")
    if m_rule not in ("theorem", "lemma"):
        raise ValueError(f"unknown epoch-length rule {m_rule!r}")

    def eta(k):
        return mu * (k + 1) / (8.0 * G**2)

    def tau(k):
        return 4.0 / (mu * (k + 1))

    def delta(k):
        return min(mu / (8.0 * (k + 5)), mu * (k + 1) ** -6.0)

    def m(k):
        if m_rule == "theorem":
            raw = 384.0 * L / ((k + 5) * mu) + 2.0
        else:
            raw = 96.0 * L / (mu + 1.0 / tau(k)) + 2.0
        return int(math.ceil(raw))

    def T(k):
        mk = m(k)
        raw = max(1.0, c_T * mk * math.log(1.0 / delta(k)))
        return int(math.ceil(raw / mk)) * mk

    def analysis_alpha(k):
        # alpha_{k+1} = G * eta_k; alpha_0 only multiplies theta_0 = 0
        return G * eta(max(k - 1, 0))

    return ScheduleParams(
        mode="theoretical",
        alpha=1.0 / (12.0 * L),
        theta=lambda k: k / (k + 1.0),
        eta=eta,
        tau=tau,
        gamma=lambda k: k + 1.0,
        delta=delta,
        m=m,
        T=T,
        analysis_alpha=analysis_alpha,
        inner=inner,
        step="prox",
        output="average",
    )


def practical_schedule(n: int, C: float, alpha: float, *, batch_size: int = 1,
                       G: float = 1.0) -> ScheduleParams:
    """Parameters used in experiments: one pass per outer iteration.

    ``tau_k = 20 n/(k+1)``, ``eta_k = C (k+1)/n``, ``theta_k = k/(k+1)``,
    last-iterate output and a plain gradient step for the ridge term. With
    ``batch_size > 1`` the epoch has ``ceil(n / batch_size)`` steps; this
    minibatch variant has no convergence guarantee.
    """
    if not (C > 0 and alpha > 0):
        raise ValueError("C and alpha must be positive")
    steps = int(math.ceil(n / batch_size))

    def eta(k):
        return C * (k + 1) / n

    return ScheduleParams(
        mode="practical",
        alpha=float(alpha),
        theta=lambda k: k / (k + 1.0),
        eta=eta,
        tau=lambda k: 20.0 * n / (k + 1),
        gamma=lambda k: k + 1.0,
        delta=lambda k: 0.0,
        m=lambda k: steps,
        T=lambda k: steps,
        analysis_alpha=lambda k: G * eta(max(k - 1, 0)),
        inner="stochastic",
        step="gradient",
        output="last",
        batch_size=batch_size,
    )


def momentum_scores(l_curr, l_prev, theta: float) -> np.ndarray:
    """Extrapolated loss vector ``(1 + theta) l_curr - theta l_prev``."""
    a = np.asarray(l_curr, dtype=np.float64)
    b = np.asarray(l_prev, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"loss vectors have shapes {a.shape} and {b.shape}")
    return (1.0 + theta) * a - theta * b


def dual_update(lam_k, v_k, eta: float, sigma) -> np.ndarray:
    """Maximiser over the permutahedron of ``v^T lam - ||lam - lam_k||^2 / (2 eta)``.

    Completing the square turns this into the projection of ``lam_k + eta v``.
    """
    if not eta > 0:
        raise ValueError("dual step must be positive")
    return project(np.asarray(lam_k) + eta * np.asarray(v_k), sigma)


def outer_rng(seed: int, k: int) -> np.random.Generator:
    """Independent counter-based stream for outer iteration ``k``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(k)])))


def _check_finite(w):
    if not np.all(np.isfinite(w)) or np.linalg.norm(w) > DIVERGENCE_NORM:
        raise DivergenceError("iterate diverged; reduce the step size")


def vr_direction(model: ObjectiveModel, lam, i, w, w_ref, g_bar) -> np.ndarray:
    """Variance-reduced direction for sample(s) ``i``.

    ``n lam_i (grad l_i(w) - grad l_i(w_ref)) + g_bar``, averaged over the
    indices when ``i`` is an array. At ``w == w_ref`` this is exactly ``g_bar``.
    """
    X, y = model.dataset.features, model.dataset.targets
    idx = np.atleast_1d(i)
    Xi, yi = X[idx], y[idx]
    diff = model.loss_derivative(Xi @ w, yi) - model.loss_derivative(Xi @ w_ref, yi)
    return (model.n * lam[idx] * diff) @ Xi / idx.size + g_bar


def inner_solve(model: ObjectiveModel, lam, w_k, schedule: ScheduleParams, k: int,
                rng: np.random.Generator, sigma=None,
                counter: SampleCounter | None = None) -> tuple[np.ndarray, int]:
    """Approximately minimise the anchored weighted subproblem.

    Returns the new primal point and the number of per-sample evaluations
    spent. With ``sigma`` given, ``lam`` is first checked for membership in
    its permutahedron.
    """
    if sigma is not None and not contains(lam, sigma, INNER_MEMBERSHIP_TOL):
        raise ValueError("dual weights are not in the permutahedron")
    n = model.n
    lam = np.asarray(lam, dtype=np.float64)
    w_k = np.asarray(w_k, dtype=np.float64)
    tau = schedule.tau(k)
    spent = 0

    if schedule.inner == "exact":
        w_next = model.solve_weighted(lam, w_k, tau)
        spent = n
        _check_finite(w_next)
        if counter is not None:
            counter.add(spent)
        return w_next, spent

    X, y = model.dataset.features, model.dataset.targets
    alpha, b = schedule.alpha, schedule.batch_size
    m, T = schedule.m(k), schedule.T(k)
    epochs = max(1, int(math.ceil(T / m)))
    use_prox = schedule.step == "prox"
    average = schedule.output == "average"

    w = w_k.copy()
    w_ref = w_k.copy()
    for e in range(epochs):
        g_bar = X.T @ (lam * model.loss_derivative(X @ w_ref, y))
        spent += n
        steps = m if e < epochs - 1 else T - m * (epochs - 1)
        draws = rng.integers(0, n, size=(steps, b)) if b > 1 else rng.integers(0, n, size=steps)
        acc = np.zeros_like(w)
        for t in range(steps):
            d = vr_direction(model, lam, draws[t], w, w_ref, g_bar)
            if use_prox:
                w = model.prox_step(w - alpha * d, w_k, alpha, tau)
            else:
                w = model.gradient_step(w, d, w_k, alpha, tau)
            if average:
                acc += w
        spent += steps * b
        _check_finite(w)
        w_ref = acc / steps if average else w.copy()
    if counter is not None:
        counter.add(spent)
    return w_ref, spent


class SorelState:
    """Mutable state of one optimisation run.

    Holds ``w_k``, ``w_{k-1}``, the dual weights ``lam_k``, the cached loss
    vectors at both primal points and the evaluation counter. ``step``
    advances one outer iteration.
    """

    def __init__(self, model: ObjectiveModel, sigma: SpectralWeights,
                 schedule: ScheduleParams, seed: int = 0, w0=None):
        if sigma.n != model.n:
            raise ValueError(f"spectrum has {sigma.n} weights but dataset has {model.n} rows")
        self.model = model
        self.sigma = sigma
        self.schedule = schedule
        self.seed = int(seed)
        self.counter = SampleCounter(model.n)
        w = np.zeros(model.d) if w0 is None else np.array(w0, dtype=np.float64).ravel()
        if w.shape != (model.d,):
            raise ValueError(f"initial point has shape {w.shape}, expected ({model.d},)")
        self.w_curr = w
        self.w_prev = w.copy()
        self.l_curr = model.full_loss_vector(w, self.counter)
        self.l_prev = self.l_curr
        self.lam = lmo(self.l_curr, sigma)
        self.k = 0

    @property
    def passes(self) -> float:
        return self.counter.passes

    @property
    def objective(self) -> float:
        return spectral_risk(self.l_curr, self.sigma) + self.model.reg_value(self.w_curr)

    def step(self) -> None:
        k, sched = self.k, self.schedule
        v = momentum_scores(self.l_curr, self.l_prev, sched.theta(k))
        self.lam = dual_update(self.lam, v, sched.eta(k), self.sigma)
        w_next, _ = inner_solve(self.model, self.lam, self.w_curr, sched, k,
                                outer_rng(self.seed, k), self.sigma, self.counter)
        l_next = self.model.full_loss_vector(w_next, self.counter)
        if not np.all(np.isfinite(l_next)):
            raise DivergenceError("non-finite loss encountered")
        self.w_prev, self.w_curr = self.w_curr, w_next
        self.l_prev, self.l_curr = self.l_curr, l_next
        self.k = k + 1


def run_sorel(model: ObjectiveModel, sigma: SpectralWeights, schedule: ScheduleParams,
              K: int, seed: int = 0, *, w0=None, pass_budget: float | None = None,
              record_iterates: bool = False) -> TrainingTrace:
    """Run ``K`` outer iterations (or until ``pass_budget`` passes are spent).

    The trace has one row per outer iteration plus the starting point. It is
    a deterministic function of the arguments.
    """
    if K < 1:
        raise ValueError("need at least one outer iteration")
    clock = Stopwatch().start()
    state = SorelState(model, sigma, schedule, seed=seed, w0=w0)
    trace = TrainingTrace(method="sorel", metadata={
        "seed": int(seed),
        "mode": schedule.mode,
        "spectrum": sigma.describe(),
    })
    trace.iterates = [state.w_curr.copy()] if record_iterates else None
    trace.record(0, state.passes, clock.elapsed, state.objective)
    while state.k < K:
        if pass_budget is not None and state.passes >= pass_budget:
            break
        state.step()
        clock.pause()
        trace.record(state.k, state.passes, clock.elapsed, state.objective)
        if record_iterates:
            trace.iterates.append(state.w_curr.copy())
        clock.start()
    trace.w_final = state.w_curr.copy()
    trace.metadata["final_lambda"] = state.lam.tolist() if model.n <= 16 else None
    return trace


@dataclass
class ConditionReport:
    """Outcome of checking the five parameter inequalities.

    ``first_violation`` maps each inequality label (``"a"``..``"e"``) to the
    first outer index where it fails, or ``None`` if it holds throughout.
    """

    horizon: int
    first_violation: dict

    @property
    def passed(self) -> dict:
        return {key: v is None for key, v in self.first_violation.items()}

    @property
    def all_passed(self) -> bool:
        return all(v is None for v in self.first_violation.values())

    def lines(self) -> list[str]:
        out = []
        for key, v in self.first_violation.items():
            status = "PASS" if v is None else f"FAIL at k={v}"
            out.append(f"({key}) {CONDITION_LABELS[key]}: {status}")
        return out


CONDITION_LABELS = {
    "a": "gamma_{k+1}/eta_{k+1} <= gamma_k/eta_k",
    "b": "gamma_{k+1}/tau_{k+1} <= gamma_k (1/tau_k + mu - sqrt(2 (mu + 1/tau_k) delta_k))",
    "c": "gamma_k = gamma_{k+1} theta_{k+1}",
    "d": "G alpha_{k+1} <= 1/tau_k",
    "e": "theta_k G / alpha_k <= 1/eta_k",
}


def _leq(a, b, rtol=1e-12):
    return a <= b + rtol * max(abs(a), abs(b), 1e-300)


def validate_condition1(schedule: ScheduleParams, G: float, mu: float, horizon: int) -> ConditionReport:
    """Check the parameter inequalities for ``k = 0..horizon``.

    Comparisons allow a relative slack of 1e-12 so that identities such as
    ``gamma_k = gamma_{k+1} theta_{k+1}`` survive rounding.
    """
    horizon = int(horizon)
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    s = schedule
    first = {key: None for key in CONDITION_LABELS}

    def fail(key, k):
        if first[key] is None:
            first[key] = k

    gam, eta, tau, th = s.gamma(0), s.eta(0), s.tau(0), s.theta(0)
    for k in range(horizon + 1):
        gam1, eta1, tau1, th1 = s.gamma(k + 1), s.eta(k + 1), s.tau(k + 1), s.theta(k + 1)
        delta = s.delta(k)
        alpha_k, alpha_k1 = s.analysis_alpha(k), s.analysis_alpha(k + 1)
        if not _leq(gam1 / eta1, gam / eta):
            fail("a", k)
        shrink = math.sqrt(max(2.0 * (mu + 1.0 / tau) * delta, 0.0))
        if not _leq(gam1 / tau1, gam * (1.0 / tau + mu - shrink)):
            fail("b", k)
        if abs(gam - gam1 * th1) > 1e-12 * max(abs(gam), 1.0):
            fail("c", k)
        if not _leq(G * alpha_k1, 1.0 / tau):
            fail("d", k)
        if not _leq(th * G / alpha_k, 1.0 / eta):
            fail("e", k)
        gam, eta, tau, th = gam1, eta1, tau1, th1
    return ConditionReport(horizon=horizon, first_violation=first)
