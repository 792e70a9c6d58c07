"""Noise schedules and every coefficient derived from them.

All arrays are stored with length ``T + 1`` so that they can be indexed with
1-based timesteps: ``sched.alpha_bar[t]`` is the cumulative signal retention
at step ``t``. Index 0 holds the clean-data sentinel (``alpha_bar[0] = 1``,
``beta[0] = 0``, and zero for every coefficient that is undefined there).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

CSV_HEADER = ["t", "beta", "alpha", "alpha_bar", "beta_tilde", "gamma1", "gamma2", "tau"]


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    one_minus_alpha_bar: np.ndarray
    beta_tilde: np.ndarray
    gamma1: np.ndarray
    gamma2: np.ndarray
    tau: np.ndarray
    kind: str = "custom"

    @classmethod
    def from_betas(cls, betas, kind: str = "custom") -> "NoiseSchedule":
        """Build a schedule from ``beta_1..beta_T`` (a length-T sequence)."""
        betas = np.asarray(betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size < 2:
            raise ConfigError(f"need at least 2 betas, got shape {betas.shape}")
        if not np.all((betas > 0) & (betas <= 1)):
            raise ConfigError("every beta must lie in (0, 1]")
        T = betas.size
        beta = np.concatenate([[0.0], betas])
        alpha = 1.0 - beta
        alpha_bar = np.cumprod(alpha)
        # 1 - alpha_bar without cancellation near t = 1
        with np.errstate(divide="ignore"):
            one_minus_ab = -np.expm1(np.cumsum(np.log1p(-beta)))
        one_minus_ab[0] = 0.0

        beta_tilde = np.zeros(T + 1)
        gamma1 = np.zeros(T + 1)
        gamma2 = np.zeros(T + 1)
        t = np.arange(1, T + 1)
        beta_tilde[t] = one_minus_ab[t - 1] / one_minus_ab[t] * beta[t]
        gamma1[t] = np.sqrt(alpha_bar[t - 1]) * beta[t] / one_minus_ab[t]
        gamma2[t] = np.sqrt(alpha[t]) * one_minus_ab[t - 1] / one_minus_ab[t]

        tau = np.zeros(T + 1)
        i = np.arange(2, T + 1)
        bracket = (np.sqrt(alpha_bar[i - 1]) * one_minus_ab[1]) / (
            np.sqrt(alpha[1]) * one_minus_ab[i - 1]
        )
        tau[i] = bracket * gamma1[i] * np.sqrt(one_minus_ab[i]) / np.sqrt(alpha_bar[i])

        arrays = dict(
            beta=beta,
            alpha=alpha,
            alpha_bar=alpha_bar,
            one_minus_alpha_bar=one_minus_ab,
            beta_tilde=beta_tilde,
            gamma1=gamma1,
            gamma2=gamma2,
            tau=tau,
        )
        for arr in arrays.values():
            arr.setflags(write=False)
        return cls(T=T, kind=kind, **arrays)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for t in range(1, self.T + 1):
            writer.writerow(
                [t]
                + [
                    repr(float(getattr(self, name)[t]))
                    for name in CSV_HEADER[1:]
                ]
            )
        return buf.getvalue()


def build_linear(T: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    if not isinstance(T, (int, np.integer)) or T < 2:
        raise ConfigError(f"T must be an integer >= 2, got {T!r}")
    if not 0 < beta_start:
        raise ConfigError(f"beta_start must be > 0, got {beta_start}")
    if not beta_start <= beta_end:
        raise ConfigError(f"beta_end must be >= beta_start, got beta_end={beta_end}")
    if not beta_end < 1:
        raise ConfigError(f"beta_end must be < 1, got {beta_end}")
    return NoiseSchedule.from_betas(np.linspace(beta_start, beta_end, int(T)), kind="linear")


def build_cosine(T: int, s_offset: float = 0.008, max_beta: float = 0.999) -> NoiseSchedule:
    """Cosine schedule: alpha_bar(t) = f(t) / f(0), f(t) = cos^2(((t/T + s)/(1 + s)) * pi/2).

    Betas are recovered from consecutive ratios and clipped at ``max_beta``;
    the stored ``alpha_bar`` is the cumulative product of the clipped betas so
    every derived coefficient stays mutually consistent.
    """
    if not isinstance(T, (int, np.integer)) or T < 2:
        raise ConfigError(f"T must be an integer >= 2, got {T!r}")
    if not s_offset > 0:
        raise ConfigError(f"s_offset must be > 0, got {s_offset}")
    steps = np.arange(T + 1, dtype=np.float64)
    f = np.cos(((steps / T + s_offset) / (1 + s_offset)) * math.pi / 2) ** 2
    ab = f / f[0]
    betas = np.minimum(1.0 - ab[1:] / ab[:-1], max_beta)
    return NoiseSchedule.from_betas(betas, kind="cosine")


def build_schedule(kind: str = "linear", T: int = 100, **kwargs) -> NoiseSchedule:
    if kind == "linear":
        return build_linear(T, **kwargs)
    if kind == "cosine":
        return build_cosine(T, **kwargs)
    raise ConfigError(f"unknown schedule kind {kind!r} (expected 'linear' or 'cosine')")


def tau_coefficient(sched: NoiseSchedule, i: int) -> float:
    """Weight of step ``i``'s noise error in the total gap; zero outside 2..T."""
    if not 2 <= i <= sched.T:
        return 0.0
    return float(sched.tau[i])


def gamma2_product(sched: NoiseSchedule, t: int, i: int) -> float:
    """prod_{s=t}^{i-1} gamma2[s] via its telescoped closed form.

    Equal to the literal product; the closed form avoids the O(i - t) loop.
    """
    if not 2 <= t < i <= sched.T:
        raise ValueError(f"gamma2_product needs 2 <= t < i <= T, got t={t}, i={i}, T={sched.T}")
    ab, omab = sched.alpha_bar, sched.one_minus_alpha_bar
    return float(np.sqrt(ab[i - 1]) * omab[t - 1] / (np.sqrt(ab[t - 1]) * omab[i - 1]))
