"""Linear maximisation and Euclidean projection over the permutahedron.

The permutahedron of ``sigma`` is the convex hull of all permutations of
``sigma``. A point belongs to it iff it has the same total as ``sigma`` and
is majorised by it (every partial sum of its ``k`` largest entries is at most
the corresponding partial sum of ``sigma``).
"""

from __future__ import annotations

import numpy as np

from .spectra import SpectralWeights

MEMBERSHIP_TOL = 1e-10


def _weights(sigma):
    if isinstance(sigma, SpectralWeights):
        return sigma.weights
    return np.asarray(sigma, dtype=np.float64)


def _vector(x, n, name):
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if v.size != n:
        raise ValueError(f"{name} has length {v.size}, spectrum has {n}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    return v


def lmo(scores, sigma) -> np.ndarray:
    """Vertex of the permutahedron maximising ``<lambda, scores>``.

    The ``j``-th smallest score receives the ``j``-th smallest weight. Equal
    scores are ranked by index, so the earlier one gets the smaller weight.
    """
    w = np.sort(_weights(sigma))
    s = _vector(scores, w.size, "scores")
    out = np.empty_like(w)
    out[np.argsort(s, kind="stable")] = w
    return out


def isotonic_regression(y, direction: str = "nondecreasing") -> np.ndarray:
    """Least-squares fit of ``y`` by a monotone sequence (pool adjacent violators).

    Parameters
    ----------
    y : array_like
        Values to fit, all finite.
    direction : {"nondecreasing", "nonincreasing"}
        Monotonicity of the fitted sequence.

    Returns
    -------
    ndarray
        The projection of ``y`` onto the monotone cone.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    if not np.all(np.isfinite(y)):
        raise ValueError("isotonic regression input has non-finite entries")
    if direction == "nonincreasing":
        return -isotonic_regression(-y, "nondecreasing")
    if direction != "nondecreasing":
        raise ValueError(f"unknown direction {direction!r}")
    # Block stack of (sum, size); plain lists are much faster than numpy
    # scalar indexing inside this loop.
    sums: list[float] = []
    sizes: list[int] = []
    for v in y.tolist():
        s, c = v, 1
        # merge while the previous block mean exceeds the current one
        while sums and sums[-1] * c > s * sizes[-1]:
            s += sums.pop()
            c += sizes.pop()
        sums.append(s)
        sizes.append(c)
    return np.repeat(np.array(sums) / np.array(sizes), sizes)


def project(point, sigma) -> np.ndarray:
    """Euclidean projection of ``point`` onto the permutahedron of ``sigma``.

    Sort ``point`` descending, fit the differences to ``sigma`` (also sorted
    descending) by a nonincreasing isotonic regression and subtract the fit.
    Costs one sort plus a linear PAVA pass.
    """
    w = _weights(sigma)
    z = _vector(point, w.size, "point")
    w_desc = np.sort(w)[::-1]
    if w_desc[0] - w_desc[-1] <= 1e-15:
        # all weights equal: the permutahedron is a single point
        return np.full(w.size, w.sum() / w.size)
    order = np.argsort(-z, kind="stable")
    z_sorted = z[order]
    correction = isotonic_regression(z_sorted - w_desc, "nonincreasing")
    out = np.empty_like(z)
    out[order] = z_sorted - correction
    return out


def contains(point, sigma, tol: float = MEMBERSHIP_TOL) -> bool:
    """Whether ``point`` lies in the permutahedron of ``sigma`` up to ``tol``."""
    if tol < 0:
        raise ValueError("tolerance must be nonnegative")
    w = _weights(sigma)
    v = np.asarray(point, dtype=np.float64).ravel()
    if v.size != w.size or not np.all(np.isfinite(v)):
        return False
    if abs(v.sum() - w.sum()) > tol:
        return False
    top_v = np.cumsum(np.sort(v)[::-1])
    top_w = np.cumsum(np.sort(w)[::-1])
    return bool(np.all(top_v <= top_w + tol))
