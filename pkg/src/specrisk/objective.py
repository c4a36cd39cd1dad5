"""Composite objective: spectral risk of per-sample losses plus a ridge term.

Only linear models are supported, so every per-sample gradient is a scalar
multiple of the sample's feature vector. The helpers below exploit this to
keep stochastic steps cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .spectra import SpectralWeights, spectral_risk

LOSS_KINDS = ("least_squares", "logistic")


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    targets: np.ndarray
    name: str = "data"

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64)
        y = np.array(self.targets, dtype=np.float64).ravel()
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise ValueError("features must be a 2-D array")
        if X.shape[0] != y.size:
            raise ValueError(f"{X.shape[0]} feature rows but {y.size} targets")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError("dataset must have at least one row and one feature")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("dataset has non-finite entries")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


class SampleCounter:
    """Counts per-sample loss/gradient evaluations.

    ``passes`` divides by the dataset size, which is the x-axis used to
    compare methods.
    """

    def __init__(self, n: int):
        self.n = n
        self.samples = 0

    def add(self, count: int) -> None:
        self.samples += int(count)

    @property
    def passes(self) -> float:
        return self.samples / self.n


def _count(counter, k):
    if counter is not None:
        counter.add(k)


@dataclass(frozen=True)
class ObjectiveModel:
    """Dataset, per-sample loss and the regulariser ``(mu/2)||w||^2``.

    ``reg_mu`` defaults to ``1/n``. ``smoothness_L`` and ``lipschitz_G`` are
    estimated from the data when not given; for least squares the Lipschitz
    bound holds on the ball of radius ``w_radius``.
    """

    dataset: Dataset
    loss_kind: str = "least_squares"
    reg_mu: float | None = None
    smoothness_L: float | None = None
    lipschitz_G: float | None = None
    w_radius: float = 100.0
    _row_norms: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.loss_kind!r}")
        X, y = self.dataset.features, self.dataset.targets
        if self.loss_kind == "logistic" and not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("logistic loss needs targets in {-1, +1}")
        mu = 1.0 / self.dataset.n if self.reg_mu is None else float(self.reg_mu)
        # mu = 0 is accepted for boundary checks; convergence theory needs mu > 0
        if not mu >= 0:
            raise ValueError("regularisation modulus must be nonnegative")
        norms = np.sqrt(np.einsum("ij,ij->i", X, X))
        object.__setattr__(self, "_row_norms", norms)
        object.__setattr__(self, "reg_mu", mu)
        if self.smoothness_L is None:
            curv = norms.max() ** 2
            if self.loss_kind == "logistic":
                curv /= 4.0
            object.__setattr__(self, "smoothness_L", float(max(curv, 1e-12)))
        if self.lipschitz_G is None:
            if self.loss_kind == "least_squares":
                G = np.max(norms * (np.abs(y) + norms * self.w_radius))
            else:
                G = norms.max()
            object.__setattr__(self, "lipschitz_G", float(max(G, 1e-12)))
        if not (self.smoothness_L > 0 and self.lipschitz_G > 0):
            raise ValueError("smoothness and Lipschitz constants must be positive")

    @property
    def n(self) -> int:
        return self.dataset.n

    @property
    def d(self) -> int:
        return self.dataset.d

    # -- scalar loss in terms of the prediction x_i^T w ------------------

    def _loss_from_pred(self, pred, y):
        if self.loss_kind == "least_squares":
            return 0.5 * (y - pred) ** 2
        return np.logaddexp(0.0, -y * pred)

    def loss_derivative(self, pred, y):
        """Derivative of the loss with respect to the prediction."""
        if self.loss_kind == "least_squares":
            return pred - y
        return -y * expit(-y * pred)

    def _check_index(self, i):
        if not 0 <= i < self.n:
            raise IndexError(f"sample index {i} out of range for n={self.n}")

    # -- per-sample evaluations -----------------------------------------

    def loss_at(self, i: int, w) -> float:
        self._check_index(i)
        x = self.dataset.features[i]
        return float(self._loss_from_pred(x @ w, self.dataset.targets[i]))

    def grad_at(self, i: int, w) -> np.ndarray:
        self._check_index(i)
        x = self.dataset.features[i]
        return self.loss_derivative(x @ w, self.dataset.targets[i]) * x

    def full_loss_vector(self, w, counter: SampleCounter | None = None) -> np.ndarray:
        _count(counter, self.n)
        return self._loss_from_pred(self.dataset.features @ w, self.dataset.targets)

    def full_gradients(self, w) -> np.ndarray:
        """Matrix whose row ``i`` is the gradient of sample ``i``'s loss."""
        X = self.dataset.features
        return self.loss_derivative(X @ w, self.dataset.targets)[:, None] * X

    def weighted_full_grad(self, lam, w, counter: SampleCounter | None = None) -> np.ndarray:
        lam = np.asarray(lam, dtype=np.float64)
        if lam.shape != (self.n,):
            raise ValueError(f"weight vector has shape {lam.shape}, expected ({self.n},)")
        _count(counter, self.n)
        X = self.dataset.features
        return X.T @ (lam * self.loss_derivative(X @ w, self.dataset.targets))

    # -- regulariser and composite objective ------------------------------

    def reg_value(self, w) -> float:
        return 0.5 * self.reg_mu * float(np.dot(w, w))

    def reg_grad(self, w) -> np.ndarray:
        return self.reg_mu * np.asarray(w, dtype=np.float64)

    def primal_objective(self, sigma: SpectralWeights, w) -> float:
        return spectral_risk(self.full_loss_vector(w), sigma) + self.reg_value(w)

    def weighted_objective(self, lam, w) -> float:
        """``lam^T l(w) + g(w)``; equals the primal objective when ``lam`` is optimal."""
        return float(np.dot(lam, self.full_loss_vector(w))) + self.reg_value(w)

    # -- proximal machinery -------------------------------------------------

    def prox_step(self, x, anchor, alpha: float, tau: float) -> np.ndarray:
        """Minimiser of ``g(u) + ||u - anchor||^2/(2 tau) + ||u - x||^2/(2 alpha)``.

        ``tau`` may be ``inf``, which drops the anchor term.
        """
        if not (alpha > 0 and tau > 0):
            raise ValueError("step size and proximal parameter must be positive")
        r = alpha / tau
        return (np.asarray(x) + r * np.asarray(anchor)) / (1.0 + alpha * self.reg_mu + r)

    def gradient_step(self, x, direction, anchor, alpha: float, tau: float) -> np.ndarray:
        """Plain gradient step on the anchored subproblem (differentiable ``g``)."""
        if not (alpha > 0 and tau > 0):
            raise ValueError("step size and proximal parameter must be positive")
        x = np.asarray(x)
        return x - alpha * (direction + (x - anchor) / tau + self.reg_mu * x)

    def solve_weighted(self, lam, anchor=None, tau: float = np.inf,
                       tol: float = 1e-13, max_iter: int = 100) -> np.ndarray:
        """Exact minimiser of ``lam^T l(w) + g(w) + ||w - anchor||^2/(2 tau)``.

        Least squares reduces to one linear solve; logistic uses damped Newton.
        """
        X, y = self.dataset.features, self.dataset.targets
        lam = np.asarray(lam, dtype=np.float64)
        d = self.d
        shift = self.reg_mu + (0.0 if np.isinf(tau) else 1.0 / tau)
        pull = np.zeros(d) if (anchor is None or np.isinf(tau)) else np.asarray(anchor) / tau
        if self.loss_kind == "least_squares":
            H = X.T @ (lam[:, None] * X) + shift * np.eye(d)
            return np.linalg.solve(H, X.T @ (lam * y) + pull)

        def value(u):
            return lam @ self._loss_from_pred(X @ u, y) + 0.5 * shift * (u @ u) - pull @ u

        w = np.zeros(d) if anchor is None else np.array(anchor, dtype=np.float64)
        for _ in range(max_iter):
            pred = X @ w
            grad = X.T @ (lam * self.loss_derivative(pred, y)) + shift * w - pull
            p = expit(y * pred)
            H = X.T @ ((lam * p * (1.0 - p))[:, None] * X) + shift * np.eye(d)
            step = np.linalg.solve(H, grad)
            t, f0, slope = 1.0, value(w), grad @ step
            while t > 1e-10 and value(w - t * step) > f0 - 0.25 * t * slope:
                t *= 0.5
            w = w - t * step
            if np.linalg.norm(t * step) <= tol * (1.0 + np.linalg.norm(w)):
                break
        return w
