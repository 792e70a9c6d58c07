"""Ancestral (DDPM) and deterministic (DDIM) samplers over full or strided timestep sequences.

For a DDPM jump from ``t`` to ``t_prev < t - 1`` the single-step coefficients
are replaced by their alpha_bar-ratio equivalents:

    alpha_eff = alpha_bar[t] / alpha_bar[t_prev],   beta_eff = 1 - alpha_eff
    mean      = (x_t - beta_eff / sqrt(1 - alpha_bar[t]) * f) / sqrt(alpha_eff)
    sigma^2   = (1 - alpha_bar[t_prev]) / (1 - alpha_bar[t]) * beta_eff   (beta_tilde)
              = beta_eff                                                  (beta)

which reduces to the usual update when ``t_prev == t - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .schedule import NoiseSchedule

VARIANCE_KINDS = ("beta_tilde", "beta")


@dataclass
class Trajectory:
    states: list
    timesteps: list
    noise_predictions: list | None = field(default=None)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def ddpm_sigma(sched: NoiseSchedule, t: int, t_prev: int | None = None, variance_kind: str = "beta_tilde") -> float:
    t_prev = t - 1 if t_prev is None else t_prev
    if variance_kind not in VARIANCE_KINDS:
        raise ValueError(f"variance_kind must be one of {VARIANCE_KINDS}, got {variance_kind!r}")
    if t_prev == t - 1:
        var = sched.beta_tilde[t] if variance_kind == "beta_tilde" else sched.beta[t]
    else:
        beta_eff = 1.0 - sched.alpha_bar[t] / sched.alpha_bar[t_prev]
        var = beta_eff
        if variance_kind == "beta_tilde":
            var = sched.one_minus_alpha_bar[t_prev] / sched.one_minus_alpha_bar[t] * beta_eff
    return float(np.sqrt(var))


def ddpm_step(model, sched: NoiseSchedule, xt, t: int, z, variance_kind: str = "beta_tilde", t_prev: int | None = None, eps_pred=None):
    """One ancestral step from ``t`` to ``t_prev`` (default ``t - 1``).

    ``z`` must be zero on the final step (``t_prev == 0``).
    """
    t_prev = t - 1 if t_prev is None else t_prev
    if not 0 <= t_prev < t <= sched.T:
        raise ValueError(f"need 0 <= t_prev < t <= T, got t={t}, t_prev={t_prev}")
    z = np.zeros_like(xt) if z is None else np.asarray(z, dtype=np.float64)
    if t_prev == 0 and np.any(z != 0):
        raise ValueError("z must be zero on the final sampling step")
    f = model(xt, t) if eps_pred is None else eps_pred
    if t_prev == t - 1:
        alpha_t = sched.alpha[t]
    else:
        alpha_t = sched.alpha_bar[t] / sched.alpha_bar[t_prev]
    coef = (1.0 - alpha_t) / np.sqrt(sched.one_minus_alpha_bar[t])
    mean = (xt - coef * f) / np.sqrt(alpha_t)
    return mean + ddpm_sigma(sched, t, t_prev, variance_kind) * z


def ddim_step(model, sched: NoiseSchedule, xt, t: int, t_prev: int, eps_pred=None):
    """Deterministic step: project to x0_hat, then re-noise to ``t_prev`` with the predicted noise."""
    if not 0 <= t_prev < t <= sched.T:
        raise ValueError(f"need 0 <= t_prev < t <= T, got t={t}, t_prev={t_prev}")
    f = model(xt, t) if eps_pred is None else eps_pred
    x0_hat = (xt - np.sqrt(sched.one_minus_alpha_bar[t]) * f) / np.sqrt(sched.alpha_bar[t])
    return np.sqrt(sched.alpha_bar[t_prev]) * x0_hat + np.sqrt(sched.one_minus_alpha_bar[t_prev]) * f


def make_subsequence(T: int, n_steps: int) -> list[int]:
    """``n_steps`` evenly spaced timesteps from T down to 1 (T always included)."""
    if not 1 <= n_steps <= T:
        raise ValueError(f"n_steps must be in [1, {T}], got {n_steps}")
    return [int(v) for v in np.round(np.linspace(T, 1, n_steps))]


def run_chain(
    model,
    sched: NoiseSchedule,
    x_start,
    timesteps,
    kind: str = "ddpm",
    rng: np.random.Generator | None = None,
    variance_kind: str = "beta_tilde",
    store_predictions: bool = False,
) -> Trajectory:
    """Denoise ``x_start`` (the state at ``timesteps[0]``) through ``timesteps`` down to step 0."""
    if kind not in ("ddpm", "ddim"):
        raise ValueError(f"sampler kind must be 'ddpm' or 'ddim', got {kind!r}")
    timesteps = [int(t) for t in timesteps]
    if any(a <= b for a, b in zip(timesteps, timesteps[1:])) or timesteps[-1] < 1:
        raise ValueError(f"timesteps must be strictly decreasing and >= 1: {timesteps}")
    if kind == "ddpm" and rng is None:
        raise ValueError("ddpm sampling needs an rng")
    x = np.asarray(x_start, dtype=np.float64)
    states, preds = [x], []
    for t, t_prev in zip(timesteps, timesteps[1:] + [0]):
        f = model(x, t)
        if store_predictions:
            preds.append(f)
        if kind == "ddpm":
            z = rng.standard_normal(x.shape) if t_prev > 0 else None
            x = ddpm_step(model, sched, x, t, z, variance_kind, t_prev=t_prev, eps_pred=f)
        else:
            x = ddim_step(model, sched, x, t, t_prev, eps_pred=f)
        states.append(x)
    return Trajectory(states=states, timesteps=timesteps, noise_predictions=preds if store_predictions else None)


def sample(
    model,
    sched: NoiseSchedule,
    kind: str,
    n_steps: int,
    batch: int,
    rng: np.random.Generator,
    dim: int | None = None,
    variance_kind: str = "beta_tilde",
    store_predictions: bool = False,
) -> Trajectory:
    """Draw x_T ~ N(0, I) and denoise over ``make_subsequence(T, n_steps)``."""
    if dim is None:
        dim = model.data_dim
    x_T = rng.standard_normal((batch, dim))
    return run_chain(
        model,
        sched,
        x_T,
        make_subsequence(sched.T, n_steps),
        kind=kind,
        rng=rng,
        variance_kind=variance_kind,
        store_predictions=store_predictions,
    )
