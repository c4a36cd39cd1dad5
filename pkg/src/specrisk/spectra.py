"""Spectral weight vectors and the spectral risk they define.

A spectral risk of a loss vector ``l`` is ``sum_i sigma_i * l_[i]`` where
``l_[1] <= ... <= l_[n]`` are the order statistics and ``sigma`` is a
nonnegative, nondecreasing vector summing to one.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

FAMILIES = ("cvar", "esrm", "extremile", "custom")

SUM_TOL = 1e-12
# e^{rho} stays representable for rho/n up to ~709; keep a margin.
ESRM_MAX_RHO_PER_SAMPLE = 700.0


class SpectrumWarning(UserWarning):
    """Raised when a generated weight vector needed renormalisation."""


@dataclass(frozen=True)
class SpectralWeights:
    """Sorted weight vector ``sigma`` of a spectral risk.

    ``weights`` is stored as a read-only float64 array. ``family`` and
    ``param`` record how the vector was generated so that it can be
    regenerated at another sample size (see :meth:`resized`).
    """

    weights: np.ndarray
    family: str = "custom"
    param: float | None = None
    n: int = field(init=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).ravel()
        if w.size == 0:
            raise ValueError("spectrum must have at least one weight")
        if not np.all(np.isfinite(w)):
            raise ValueError("spectrum weights must be finite")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown spectrum family {self.family!r}")
        if np.any(w < -SUM_TOL):
            raise ValueError("spectrum weights must be nonnegative")
        if np.any(np.diff(w) < -SUM_TOL):
            raise ValueError("spectrum weights must be nondecreasing")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ValueError(f"spectrum weights sum to {w.sum()!r}, expected 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "n", int(w.size))

    def __len__(self):
        return self.n

    @property
    def is_uniform(self) -> bool:
        return bool(self.weights[-1] - self.weights[0] <= SUM_TOL)

    def resized(self, n: int) -> "SpectralWeights":
        """Regenerate this spectrum for ``n`` samples from the same family."""
        if self.family == "custom":
            if n == self.n:
                return self
            raise ValueError("a custom spectrum cannot be regenerated at another size")
        return make_spectrum(self.family, n, self.param)

    def describe(self) -> str:
        if self.family == "custom":
            return f"custom(n={self.n})"
        return f"{self.family}({self.param:g})"


def _finalize(weights, family, param):
    total = weights.sum()
    if abs(total - 1.0) > SUM_TOL:
        warnings.warn(
            f"{family} weights summed to {total!r}; renormalised",
            SpectrumWarning,
            stacklevel=3,
        )
        weights = weights / total
    return SpectralWeights(weights, family=family, param=param)


def _check_n(n):
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ValueError(f"sample count must be a positive integer, got {n!r}")
    return int(n)


def _robust_floor(x):
    # n*alpha for e.g. n=10, alpha=0.9 comes out as 8.999999999999998
    r = round(x)
    if abs(x - r) <= 1e-9 * max(1.0, abs(x)):
        return int(r)
    return math.floor(x)


def cvar_weights(n: int, alpha: float) -> SpectralWeights:
    """Weights of the alpha-CVaR (average of the top ``n*alpha`` losses).

    The ``floor(n*alpha)`` largest losses get ``1/(n*alpha)`` each. When
    ``n*alpha`` is fractional the remaining mass ``1 - floor(n*alpha)/(n*alpha)``
    goes to the loss just below them, i.e. index ``ceil(n*(1-alpha))``.
    """
    n = _check_n(n)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"CVaR level must lie in (0, 1), got {alpha!r}")
    top_mass = n * alpha
    full = _robust_floor(top_mass)
    w = np.zeros(n)
    if full > 0:
        w[n - full:] = 1.0 / top_mass
    if full < n and full != top_mass:
        remainder = 1.0 - full / top_mass
        if remainder > SUM_TOL:
            w[n - full - 1] = remainder
    return _finalize(w, "cvar", float(alpha))


def esrm_weights(n: int, rho: float) -> SpectralWeights:
    """Weights of the exponential spectral risk measure with rate ``rho``.

    Evaluated as ``exp(rho*(i/n - 1)) * (1 - exp(-rho/n)) / (1 - exp(-rho))``,
    which never forms ``exp(rho)``.
    """
    n = _check_n(n)
    if not rho > 0:
        raise ValueError(f"ESRM rate must be positive, got {rho!r}")
    if rho > ESRM_MAX_RHO_PER_SAMPLE * n:
        raise OverflowError(f"ESRM rate {rho!r} is out of range for n={n}")
    i = np.arange(1, n + 1)
    w = np.exp(rho * (i / n - 1.0)) * (np.expm1(-rho / n) / np.expm1(-rho))
    return _finalize(w, "esrm", float(rho))


def extremile_weights(n: int, r: float) -> SpectralWeights:
    """Weights ``(i/n)**r - ((i-1)/n)**r`` of the r-extremile."""
    n = _check_n(n)
    if not r >= 1:
        raise ValueError(f"extremile exponent must be >= 1, got {r!r}")
    if r == 1:
        return SpectralWeights(np.full(n, 1.0 / n), family="extremile", param=1.0)
    grid = np.arange(n + 1) / n
    w = np.diff(grid**r)
    return _finalize(w, "extremile", float(r))


def uniform_weights(n: int) -> SpectralWeights:
    n = _check_n(n)
    return SpectralWeights(np.full(n, 1.0 / n), family="custom")


_GENERATORS = {
    "cvar": cvar_weights,
    "esrm": esrm_weights,
    "extremile": extremile_weights,
}


def make_spectrum(family: str, n: int, param: float) -> SpectralWeights:
    """Dispatch to the generator for ``family`` ("cvar", "esrm", "extremile")."""
    try:
        gen = _GENERATORS[family]
    except KeyError:
        raise ValueError(f"unknown spectrum family {family!r}") from None
    return gen(n, param)


def _as_losses(losses):
    ell = np.asarray(losses, dtype=np.float64)
    if ell.ndim != 1:
        raise ValueError("loss vector must be one-dimensional")
    if not np.all(np.isfinite(ell)):
        raise ValueError("loss vector has non-finite entries")
    return ell


def sort_permutation(losses) -> np.ndarray:
    """Zero-based permutation ordering ``losses`` ascending; ties keep index order."""
    return np.argsort(_as_losses(losses), kind="stable")


def spectral_risk(losses, sigma: SpectralWeights) -> float:
    ell = _as_losses(losses)
    if ell.size != sigma.n:
        raise ValueError(f"loss vector has length {ell.size}, spectrum has {sigma.n}")
    return float(np.dot(sigma.weights, np.sort(ell, kind="stable")))
