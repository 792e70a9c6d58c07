"""Seeded 2-D toy datasets.

Models are trained on per-dimension standardised points; ``to_raw`` maps
model-space samples back so metrics use the original coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

KINDS = ("gaussian_ring", "swiss_roll", "checkerboard", "delta_point")
RING_STD = 0.05
RING_MODES = 8


def ring_centers(n_modes: int = RING_MODES) -> np.ndarray:
    angles = 2 * np.pi * np.arange(n_modes) / n_modes
    return np.stack([np.cos(angles), np.sin(angles)], axis=1)


@dataclass
class SyntheticDataset:
    kind: str
    raw: np.ndarray
    shift: np.ndarray
    scale: np.ndarray
    centers: np.ndarray | None = None

    @property
    def points(self) -> np.ndarray:
        return self.to_model(self.raw)

    @property
    def n_points(self) -> int:
        return self.raw.shape[0]

    @property
    def dim(self) -> int:
        return self.raw.shape[1]

    def to_model(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.shift) / self.scale

    def to_raw(self, x) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) * self.scale + self.shift


def _raw_points(kind: str, n: int, rng: np.random.Generator, dim: int, point=None):
    if kind == "gaussian_ring":
        centers = ring_centers()
        labels = rng.integers(0, RING_MODES, size=n)
        return centers[labels] + RING_STD * rng.standard_normal((n, 2)), centers
    if kind == "swiss_roll":
        u = 1.5 * np.pi * (1 + 2 * rng.random(n))
        x = np.stack([u * np.cos(u), u * np.sin(u)], axis=1) / 5.0
        return x + 0.1 * rng.standard_normal((n, 2)), None
    if kind == "checkerboard":
        x1 = rng.random(n) * 4 - 2
        x2 = rng.random(n) - rng.integers(0, 2, size=n) * 2
        x2 = x2 + np.floor(x1) % 2
        return np.stack([x1, x2], axis=1), None
    if point is None:
        point = np.linspace(0.8, -0.6, dim) if dim > 1 else np.array([0.8])
    point = np.asarray(point, dtype=np.float64)
    if point.shape != (dim,):
        raise ConfigError(f"delta_point point must have shape ({dim},), got {point.shape}")
    return np.tile(point, (n, 1)), point[None, :]


def generate_dataset(
    kind: str,
    n_points: int,
    seed: int = 0,
    dim: int = 2,
    normalize: bool | None = None,
    point=None,
) -> SyntheticDataset:
    """Generate ``n_points`` rows of the named toy distribution.

    ``normalize`` defaults to True except for ``delta_point``, which is kept
    at its fixed location.
    """
    if kind not in KINDS:
        raise ConfigError(f"unknown dataset kind {kind!r}; choose from {KINDS}")
    if n_points < 1:
        raise ConfigError(f"n_points must be >= 1, got {n_points}")
    if kind != "delta_point" and dim != 2:
        raise ConfigError(f"{kind} is 2-D only, got dim={dim}")
    rng = np.random.default_rng([seed, 7])
    raw, centers = _raw_points(kind, n_points, rng, dim, point)
    if normalize is None:
        normalize = kind != "delta_point"
    if normalize:
        shift = raw.mean(axis=0)
        scale = raw.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
    else:
        shift, scale = np.zeros(raw.shape[1]), np.ones(raw.shape[1])
    return SyntheticDataset(kind=kind, raw=raw, shift=shift, scale=scale, centers=centers)


def nearest_center_counts(points, centers) -> np.ndarray:
    d2 = ((np.asarray(points)[:, None, :] - np.asarray(centers)[None]) ** 2).sum(axis=2)
    return np.bincount(d2.argmin(axis=1), minlength=len(centers))
