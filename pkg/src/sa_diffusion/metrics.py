"""Sample-quality surrogates: sliced 2-Wasserstein distance and mode coverage."""

from __future__ import annotations

import numpy as np


def _w2_1d(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact 2-Wasserstein distance between 1-D empirical measures, column-wise.

    ``a`` is (n, P), ``b`` is (m, P); n and m may differ. The quantile
    functions are piecewise constant, so the integral over quantile levels is
    an exact finite sum over the merged breakpoints.
    """
    a = np.sort(a, axis=0)
    b = np.sort(b, axis=0)
    n, m = a.shape[0], b.shape[0]
    if n == m:
        return np.sqrt(np.mean((a - b) ** 2, axis=0))
    levels = np.union1d(np.arange(1, n + 1) / n, np.arange(1, m + 1) / m)
    widths = np.diff(np.concatenate([[0.0], levels]))
    mid = levels - widths / 2
    ia = np.minimum((mid * n).astype(np.int64), n - 1)
    ib = np.minimum((mid * m).astype(np.int64), m - 1)
    diff = a[ia] - b[ib]
    return np.sqrt(widths @ (diff * diff))


def sliced_wasserstein(a, b, n_projections: int = 128, seed: int = 0) -> float:
    """Mean over random unit directions of the 1-D W2 distance between projections."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("both batches must be non-empty")
    rng = np.random.default_rng([seed, 11])
    dirs = rng.standard_normal((a.shape[1], n_projections))
    dirs /= np.linalg.norm(dirs, axis=0, keepdims=True)
    return float(np.mean(_w2_1d(a @ dirs, b @ dirs)))


def mode_coverage(samples, centers, radius: float) -> int:
    """Number of centers with at least one sample within ``radius``."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    if centers.shape[0] == 0:
        raise ValueError("need at least one center")
    if samples.shape[0] == 0:
        return 0
    d2 = ((samples[:, None, :] - centers[None]) ** 2).sum(axis=2)
    return int(np.sum(d2.min(axis=0) <= radius * radius))
