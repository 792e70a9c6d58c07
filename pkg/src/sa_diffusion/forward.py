"""Closed-form forward diffusion and the exact posterior mean.

Timesteps are 1-based; ``t`` may be a scalar or an integer array with one
entry per batch row.
"""

from __future__ import annotations

import numpy as np

from .schedule import NoiseSchedule


def _column(coeffs: np.ndarray, t) -> np.ndarray | float:
    """Look up ``coeffs[t]`` shaped to broadcast against a (batch, dim) array."""
    if np.ndim(t) == 0:
        return float(coeffs[int(t)])
    return coeffs[np.asarray(t, dtype=np.int64)][:, None]


def _check_t(sched: NoiseSchedule, t, lo: int = 1) -> None:
    tt = np.asarray(t)
    if tt.size and (tt.min() < lo or tt.max() > sched.T):
        raise ValueError(f"timestep out of range [{lo}, {sched.T}]: {t}")


def _check_pair(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def _check_rows(x: np.ndarray, t) -> None:
    if np.ndim(t) == 1 and len(t) != x.shape[0]:
        raise ValueError(f"per-row timesteps have length {len(t)} but batch is {x.shape[0]}")


def diffuse(sched: NoiseSchedule, x0: np.ndarray, t, eps: np.ndarray) -> np.ndarray:
    """x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps."""
    x0, eps = np.asarray(x0, dtype=np.float64), np.asarray(eps, dtype=np.float64)
    _check_pair(x0, eps, "diffuse")
    _check_t(sched, t)
    _check_rows(x0, t)
    a = np.sqrt(_column(sched.alpha_bar, t))
    s = np.sqrt(_column(sched.one_minus_alpha_bar, t))
    return a * x0 + s * eps


def diffuse_random(sched: NoiseSchedule, x0: np.ndarray, t, rng: np.random.Generator):
    """Draw standard normal noise and diffuse; returns ``(x_t, eps)``."""
    eps = rng.standard_normal(np.shape(x0))
    return diffuse(sched, x0, t, eps), eps


def recover_noise(sched: NoiseSchedule, x0: np.ndarray, xt: np.ndarray, t) -> np.ndarray:
    """Invert :func:`diffuse` for the noise given the clean point."""
    x0, xt = np.asarray(x0, dtype=np.float64), np.asarray(xt, dtype=np.float64)
    _check_pair(x0, xt, "recover_noise")
    _check_t(sched, t)
    _check_rows(xt, t)
    a = np.sqrt(_column(sched.alpha_bar, t))
    s = np.sqrt(_column(sched.one_minus_alpha_bar, t))
    return (xt - a * x0) / s


def posterior_mean(sched: NoiseSchedule, x0: np.ndarray, xt: np.ndarray, t) -> np.ndarray:
    """Mean of q(x_{t-1} | x_t, x_0); the variance is ``sched.beta_tilde[t]``."""
    x0, xt = np.asarray(x0, dtype=np.float64), np.asarray(xt, dtype=np.float64)
    _check_pair(x0, xt, "posterior_mean")
    _check_t(sched, t, lo=2)
    _check_rows(xt, t)
    return _column(sched.gamma1, t) * x0 + _column(sched.gamma2, t) * xt
