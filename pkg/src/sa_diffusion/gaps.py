"""Estimation gaps along the reverse chain and the loss sandwich check.

Notation: for a clean batch ``x0`` and per-step noises ``eps[t]``, the
state ``x_t = diffuse(x0, t, eps[t])``. The per-step gap is

    d_t = gamma1[t] * sqrt(1 - alpha_bar[t]) / sqrt(alpha_bar[t]) * (f(x_t, t) - eps[t])

and the cumulative gap obeys ``dbar_t = d_t + gamma2[t] * dbar_{t+1}``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .forward import diffuse, recover_noise
from .sampler import run_chain
from .schedule import NoiseSchedule

GAP_CSV_HEADER = ["t", "per_step_gap", "cumulative_gap"]
EXACT_MAX_T = 64
EXACT_MAX_DIM = 8


@dataclass
class GapReport:
    timesteps: list
    per_step_gap_norm: np.ndarray
    cumulative_gap_norm: np.ndarray
    terminal_gap_norm: float
    batch: int
    start_timestep: int
    terminal_gap: np.ndarray = field(repr=False, default=None)

    def to_csv(self) -> str:
        lines = [",".join(GAP_CSV_HEADER)]
        for t, p, c in zip(self.timesteps, self.per_step_gap_norm, self.cumulative_gap_norm):
            lines.append(f"{t},{float(p)!r},{float(c)!r}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())


@dataclass
class ReverseDistCoeffs:
    """Moments of q(x_{t-1} | x_T, x_0), indexed by t (entries below 1 unused).

    mean = mu_prime_x0_coeff[t] * x0 + mu_prime_eps_coeff[t] * eps_T,
    variance = beta_prime[t].
    """

    mu_prime_x0_coeff: np.ndarray
    mu_prime_eps_coeff: np.ndarray
    beta_prime: np.ndarray


@dataclass
class BoundsReport:
    mode: str
    T: int
    K: int
    l_simple_tau: float
    l_sa: float
    l_theta: float
    se_simple_tau: float
    se_sa: float
    se_theta: float
    upper_holds: bool
    lower_holds: bool

    @property
    def upper_lhs(self) -> float:
        return (self.T - 1) / (self.T + self.K) * self.l_simple_tau

    @property
    def lower_rhs(self) -> float:
        return self.l_theta / (self.T + self.K) ** 2

    def format(self) -> str:
        ok = {True: "PASS", False: "FAIL"}
        return "\n".join(
            [
                f"bounds-check mode={self.mode} T={self.T} K={self.K}",
                f"L_simple^tau = {self.l_simple_tau:.10g} (se {self.se_simple_tau:.3g})",
                f"L_sa         = {self.l_sa:.10g} (se {self.se_sa:.3g})",
                f"L_theta      = {self.l_theta:.10g} (se {self.se_theta:.3g})",
                f"(T-1)/(T+K) L_simple^tau >= L_sa      : {ok[self.upper_holds]} "
                f"({self.upper_lhs:.6g} vs {self.l_sa:.6g})",
                f"L_sa >= L_theta/(T+K)^2               : {ok[self.lower_holds]} "
                f"({self.l_sa:.6g} vs {self.lower_rhs:.6g})",
            ]
        )


def _gap_scale(sched: NoiseSchedule, t) -> np.ndarray:
    t = np.asarray(t)
    return sched.gamma1[t] * np.sqrt(sched.one_minus_alpha_bar[t]) / np.sqrt(sched.alpha_bar[t])


def step_gap(model, sched: NoiseSchedule, x0, eps_t, t: int) -> np.ndarray:
    if not 2 <= t <= sched.T:
        raise ValueError(f"step gap is defined for 2 <= t <= T, got t={t}")
    x0 = np.asarray(x0, dtype=np.float64)
    xt = diffuse(sched, x0, t, eps_t)
    return _gap_scale(sched, t) * (model(xt, t) - eps_t)


def _noise(eps_seq, t: int) -> np.ndarray:
    try:
        eps = eps_seq[t]
    except (KeyError, IndexError):
        raise ValueError(f"no noise supplied for visited step t={t}") from None
    if eps is None:
        raise ValueError(f"no noise supplied for visited step t={t}")
    return np.asarray(eps, dtype=np.float64)


def _residuals(model, sched, x0, eps_seq, steps) -> np.ndarray:
    """f(x_s, s) - eps_s for every s in ``steps``, evaluated in one stacked call."""
    B = x0.shape[0]
    eps = np.stack([_noise(eps_seq, s) for s in steps])
    t_rows = np.repeat(np.asarray(steps), B)
    xs = diffuse(sched, np.tile(x0, (len(steps), 1)), t_rows, eps.reshape(-1, x0.shape[1]))
    out = model(xs, t_rows)
    return out.reshape(eps.shape) - eps


def cumulative_gap(model, sched: NoiseSchedule, x0, eps_seq, t_start: int) -> GapReport:
    """Per-step and cumulative gaps from ``t_start`` down to 2.

    ``eps_seq[t]`` is the true noise at step t. The recursion starts with
    ``dbar_{t_start} = d_{t_start}``.
    """
    if not 2 <= t_start <= sched.T:
        raise ValueError(f"t_start must be in [2, {sched.T}], got {t_start}")
    x0 = np.asarray(x0, dtype=np.float64)
    steps = list(range(t_start, 1, -1))
    resid = _residuals(model, sched, x0, eps_seq, steps)
    d = _gap_scale(sched, steps)[:, None, None] * resid
    dbar = np.empty_like(d)
    dbar[0] = d[0]
    for k in range(1, len(steps)):
        dbar[k] = d[k] + sched.gamma2[steps[k]] * dbar[k - 1]
    per = np.linalg.norm(d, axis=2).mean(axis=1)
    cum = np.linalg.norm(dbar, axis=2).mean(axis=1)
    return GapReport(
        timesteps=steps,
        per_step_gap_norm=per,
        cumulative_gap_norm=cum,
        terminal_gap_norm=float(cum[-1]),
        batch=x0.shape[0],
        start_timestep=t_start,
        terminal_gap=dbar[-1],
    )


def total_gap(model, sched: NoiseSchedule, x0, eps_seq) -> np.ndarray:
    """sum_{i=2}^{T} tau_i (f(x_i, i) - eps_i), one row per batch row."""
    x0 = np.asarray(x0, dtype=np.float64)
    steps = list(range(2, sched.T + 1))
    resid = _residuals(model, sched, x0, eps_seq, steps)
    return np.einsum("s,sbd->bd", sched.tau[2:], resid)


def reverse_dist_coeffs(sched: NoiseSchedule) -> ReverseDistCoeffs:
    T = sched.T
    ab, omab = sched.alpha_bar, sched.one_minus_alpha_bar
    t = np.arange(1, T + 1)
    x0_coeff = np.zeros(T + 1)
    eps_coeff = np.zeros(T + 1)
    x0_coeff[t] = np.sqrt(ab[t - 1])
    eps_coeff[t] = np.sqrt(ab[T]) * omab[t - 1] / np.sqrt(ab[t - 1] * omab[T])
    beta_prime = np.zeros(T + 1)
    beta_prime[T] = sched.beta_tilde[T]
    for s in range(T - 1, 0, -1):
        beta_prime[s] = sched.gamma2[s] ** 2 * beta_prime[s + 1] + sched.beta_tilde[s]
    return ReverseDistCoeffs(x0_coeff, eps_coeff, beta_prime)


def _bound_terms(a: np.ndarray, K: int):
    """Per-row L_simple^tau, L_sa and L_theta from tau-weighted residuals.

    ``a`` has shape (T - 1, rows, dim) holding tau_s (f - eps) for s = 2..T.
    The SA average runs over window starts t = 1-K..T (T + K windows).
    """
    n_steps, rows, dim = a.shape
    T = n_steps + 1
    l_simple = np.mean(np.sum(a * a, axis=2), axis=0)
    # padded[j] holds the residual of step s = j + 1 - K; zero outside 2..T
    padded = np.zeros((T + 2 * K, rows, dim))
    padded[K + 1 : K + 1 + n_steps] = a
    idx = np.arange(1 - K, T + 1) + K - 1
    window = sum(padded[idx + k] for k in range(K)) / K
    l_sa = np.mean(np.sum(window * window, axis=2), axis=0)
    tot = a.sum(axis=0)
    l_theta = np.sum(tot * tot, axis=1)
    return l_simple, l_sa, l_theta


def bounds_check(
    model,
    sched: NoiseSchedule,
    K: int,
    x0,
    n_mc: int = 1024,
    rng: np.random.Generator | None = None,
    mode: str = "mc",
    eps_seq=None,
    slack: float = 1e-12,
    n_se: float = 3.0,
) -> BoundsReport:
    """Estimate the three losses and test both sandwich inequalities.

    ``mode='exact'`` evaluates finite sums over all t for the given ``x0``
    rows and one fixed noise sequence (``eps_seq`` of shape (T+1, rows, dim)
    or drawn from ``rng``); the inequalities must then hold up to ``slack``
    relative round-off. ``mode='mc'`` draws ``n_mc`` (x0 row, noise
    sequence) pairs and accepts each inequality when the paired difference is
    above ``-n_se`` standard errors.
    """
    if K < 2:
        raise ValueError(f"bounds check needs K >= 2, got {K}")
    if mode not in ("mc", "exact"):
        raise ValueError(f"mode must be 'mc' or 'exact', got {mode!r}")
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    T = sched.T
    rng = rng if rng is not None else np.random.default_rng(0)
    tau = sched.tau[2:, None, None]

    if mode == "exact":
        if T > EXACT_MAX_T or x0.shape[1] > EXACT_MAX_DIM:
            raise ValueError(f"exact mode is limited to T <= {EXACT_MAX_T} and dim <= {EXACT_MAX_DIM}")
        if eps_seq is None:
            eps_seq = rng.standard_normal((T + 1,) + x0.shape)
        a = tau * _residuals(model, sched, x0, eps_seq, list(range(2, T + 1)))
        ls, lsa, lth = (float(v.mean()) for v in _bound_terms(a, K))
        scale = max(abs(ls), abs(lsa), abs(lth), 1e-300)
        upper = (T - 1) / (T + K) * ls >= lsa - slack * scale
        lower = lsa >= lth / (T + K) ** 2 - slack * scale
        return BoundsReport("exact", T, K, ls, lsa, lth, 0.0, 0.0, 0.0, bool(upper), bool(lower))

    per = {"s": [], "sa": [], "th": []}
    chunk = max(1, 65536 // max(T, 1))
    remaining = n_mc
    while remaining > 0:
        n = min(chunk, remaining)
        rows = x0[rng.integers(0, x0.shape[0], size=n)]
        eps = rng.standard_normal((T + 1,) + rows.shape)
        a = tau * _residuals(model, sched, rows, eps, list(range(2, T + 1)))
        s, sa, th = _bound_terms(a, K)
        per["s"].append(s)
        per["sa"].append(sa)
        per["th"].append(th)
        remaining -= n
    s, sa, th = (np.concatenate(per[k]) for k in ("s", "sa", "th"))

    def se(v):
        return float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else float("inf")

    up_diff = (T - 1) / (T + K) * s - sa
    lo_diff = sa - th / (T + K) ** 2
    upper = up_diff.mean() >= -n_se * se(up_diff)
    lower = lo_diff.mean() >= -n_se * se(lo_diff)
    return BoundsReport(
        "mc", T, K, float(s.mean()), float(sa.mean()), float(th.mean()), se(s), se(sa), se(th), bool(upper), bool(lower)
    )


def gap_experiment_x_start(
    model,
    sched: NoiseSchedule,
    dataset,
    t_start: int,
    sampler_kind: str = "ddpm",
    batch: int = 512,
    rng: np.random.Generator | None = None,
    variance_kind: str = "beta_tilde",
    csv_path=None,
) -> GapReport:
    """Noise data rows to ``x_{t_start}``, denoise step by step, and trace the gap.

    At every visited t the true noise is recovered from the sampler's state
    and the known clean row, so the trace measures how far the model's
    trajectory drifts from the one consistent with that row.
    """
    if not 2 <= t_start <= sched.T:
        raise ValueError(f"t_start must be in [2, {sched.T}], got {t_start}")
    rng = rng if rng is not None else np.random.default_rng(0)
    data = np.asarray(dataset, dtype=np.float64)
    idx = rng.choice(data.shape[0], size=batch, replace=batch > data.shape[0])
    x0 = data[idx]
    x_start = diffuse(sched, x0, t_start, rng.standard_normal(x0.shape))
    steps = list(range(t_start, 0, -1))
    traj = run_chain(model, sched, x_start, steps, kind=sampler_kind, rng=rng, variance_kind=variance_kind)
    eps_seq = {t: recover_noise(sched, x0, state, t) for t, state in zip(steps, traj.states) if t >= 2}
    report = cumulative_gap(model, sched, x0, eps_seq, t_start)
    if csv_path is not None:
        report.write_csv(csv_path)
    return report
