"""Simple and sequence-aware losses, Adam, and the training loop.

Losses are averaged over batch rows. ``t`` may be one timestep for the whole
batch or an integer array with one timestep per row; the training loop draws
one per row.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .forward import diffuse
from .predictor import AdamState, EmaParams, MLPPredictor, ema_update
from .schedule import NoiseSchedule

log = logging.getLogger(__name__)

METRICS_HEADER = ["step", "l_simple", "l_sa", "l_total"]


@dataclass
class TrainConfig:
    loss_kind: str = "sequence_aware"
    K: int = 2
    lam: float = 1.0
    use_tau_weights: bool = False
    learning_rate: float = 2e-4
    batch_size: int = 128
    steps: int = 1000
    ema_decay: float = 0.9999
    seed: int = 0
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self):
        self.adam_betas = tuple(self.adam_betas)
        self.validate()

    def validate(self) -> None:
        if self.loss_kind not in ("simple", "sequence_aware"):
            raise ConfigError(f"loss_kind must be 'simple' or 'sequence_aware', got {self.loss_kind!r}")
        if self.K < 1:
            raise ConfigError(f"K must be >= 1, got {self.K}")
        if self.loss_kind == "sequence_aware" and self.K < 2:
            raise ConfigError(f"sequence_aware loss needs K >= 2, got K={self.K}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if self.batch_size < 1 or self.steps < 0:
            raise ConfigError("batch_size must be >= 1 and steps >= 0")
        if not 0 <= self.ema_decay <= 1:
            raise ConfigError(f"ema_decay must be in [0, 1], got {self.ema_decay}")
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown TrainConfig keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        d["adam_betas"] = list(self.adam_betas)
        return d


@dataclass
class LossBreakdown:
    l_simple: float
    l_sa: float
    l_total: float


def _rows(t, batch: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(t, dtype=np.int64), (batch,))


def window_weights(sched: NoiseSchedule, s: np.ndarray, use_tau_weights: bool) -> np.ndarray:
    """Per-term weight of step ``s`` in the SA window: tau_s, or 1 on {2..T}; 0 elsewhere."""
    s = np.asarray(s)
    inside = (s >= 2) & (s <= sched.T)
    if not use_tau_weights:
        return inside.astype(np.float64)
    return np.where(inside, sched.tau[np.clip(s, 0, sched.T)], 0.0)


def simple_loss(params, sched: NoiseSchedule, x0: np.ndarray, t, eps: np.ndarray):
    """mean_rows ||f(x_t, t) - eps||^2 and its parameter gradient."""
    x0 = np.asarray(x0, dtype=np.float64)
    xt = diffuse(sched, x0, t, eps)
    out, fwd_kw = _forward(params, xt, t)
    r = out - eps
    B = x0.shape[0]
    loss = float(np.sum(r * r) / B)
    grads = params.backward(xt, t, (2.0 / B) * r, **fwd_kw)
    return loss, grads


def _forward(params, xt, t):
    if isinstance(params, MLPPredictor):
        out, cache = params.forward(xt, t, return_cache=True)
        return out, {"cache": cache}
    return params(xt, t), {}


def _sa_terms(params, sched, x0, t, eps_seq, use_tau_weights, always_first=False):
    """Stacked evaluation of the K window positions that carry nonzero weight.

    Returns the averaged weighted residual S (batch, dim) plus what is needed
    to backpropagate through it.
    """
    K = len(eps_seq)
    B = x0.shape[0]
    t_rows = _rows(t, B)
    active, weights, xs, ts, epss = [], [], [], [], []
    for k in range(K):
        s = t_rows + k
        w = window_weights(sched, s, use_tau_weights)
        if not np.any(w) and not (always_first and k == 0):
            continue
        s_eval = np.clip(s, 1, sched.T)
        eps = np.asarray(eps_seq[k], dtype=np.float64)
        active.append(k)
        weights.append(w)
        xs.append(diffuse(sched, x0, s_eval, eps))
        ts.append(s_eval)
        epss.append(eps)
    if not active:
        return None
    x_stack = np.concatenate(xs)
    t_stack = np.concatenate(ts)
    out, fwd_kw = _forward(params, x_stack, t_stack)
    resid = (out - np.concatenate(epss)).reshape(len(active), B, -1)
    w_arr = np.stack(weights)[:, :, None]
    S = (w_arr * resid).sum(axis=0) / K
    return dict(active=active, w=w_arr, resid=resid, S=S, x=x_stack, t=t_stack, fwd_kw=fwd_kw, K=K)


def sa_loss(params, sched: NoiseSchedule, x0: np.ndarray, t, eps_seq, use_tau_weights: bool = False):
    """mean_rows ||(1/K) sum_{s=t}^{t+K-1} w_s (f(x_s, s) - eps_s)||^2 and its gradient.

    ``eps_seq[k]`` is the noise for step ``t + k``; every x_s is diffused
    from the same ``x0``. Window positions with zero weight (s < 2 or s > T)
    drop out; positions that are zero for the whole batch are not evaluated.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if len(eps_seq) < 1:
        raise ValueError("eps_seq must hold at least one noise batch")
    for eps in eps_seq:
        if np.shape(eps) != x0.shape:
            raise ValueError(f"noise shape {np.shape(eps)} does not match x0 shape {x0.shape}")
    terms = _sa_terms(params, sched, x0, t, eps_seq, use_tau_weights)
    if terms is None:
        return 0.0, [np.zeros_like(a) for a in _arrays(params)]
    B = x0.shape[0]
    S, K = terms["S"], terms["K"]
    loss = float(np.sum(S * S) / B)
    g = (terms["w"] * (2.0 / (K * B)) * S[None]).reshape(terms["x"].shape)
    grads = params.backward(terms["x"], terms["t"], g, **terms["fwd_kw"])
    return loss, grads


def _arrays(params):
    return params.arrays() if hasattr(params, "arrays") else []


def combined_loss(params, sched, x0, t, eps_seq, lam: float, use_tau_weights: bool = False):
    """L_simple(at t, eps_seq[0]) + lam * L_sa(window t..t+K-1), sharing one forward pass.

    Returns ``(LossBreakdown, grads)``.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    terms = _sa_terms(params, sched, x0, t, eps_seq, use_tau_weights, always_first=True)
    B = x0.shape[0]
    S, K, resid = terms["S"], terms["K"], terms["resid"]
    # position 0 is always evaluated first, so resid[0] is the simple-loss residual
    r0 = resid[0]
    l_simple = float(np.sum(r0 * r0) / B)
    l_sa = float(np.sum(S * S) / B)
    g = terms["w"] * (lam * 2.0 / (K * B)) * S[None]
    g[0] += (2.0 / B) * r0
    grads = params.backward(terms["x"], terms["t"], g.reshape(terms["x"].shape), **terms["fwd_kw"])
    return LossBreakdown(l_simple, l_sa, l_simple + lam * l_sa), grads


def adam_update(params: MLPPredictor, grads, state: AdamState, lr: float, betas=(0.9, 0.999), eps=1e-8):
    """One bias-corrected Adam step; returns ``(new_params, new_state)``."""
    b1, b2 = betas
    step = state.step + 1
    m = [b1 * mi + (1 - b1) * g for mi, g in zip(state.m, grads)]
    v = [b2 * vi + (1 - b2) * g * g for vi, g in zip(state.v, grads)]
    c1 = 1 - b1**step
    c2 = 1 - b2**step
    new = [p - lr * (mi / c1) / (np.sqrt(vi / c2) + eps) for p, mi, vi in zip(params.arrays(), m, v)]
    return params.with_arrays(new), AdamState(m=m, v=v, step=step)


def step_rng(seed: int, step: int) -> np.random.Generator:
    """Independent generator per (seed, step); the stream does not depend on earlier draws."""
    return np.random.default_rng([seed, 1, step])


def train_step(params, ema, opt_state, cfg: TrainConfig, x0, rng, sched: NoiseSchedule):
    """One update. Draws per-row t ~ U{1..T}, then K noises (eps_t first).

    With ``loss_kind='simple'`` or ``lam == 0`` the gradient is exactly the
    simple-loss gradient; L_sa is still evaluated for logging.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    B = x0.shape[0]
    t = rng.integers(1, sched.T + 1, size=B)
    if cfg.loss_kind == "simple":
        eps = rng.standard_normal(x0.shape)
        l_simple, grads = simple_loss(params, sched, x0, t, eps)
        losses = LossBreakdown(l_simple, 0.0, l_simple)
    else:
        eps_seq = [rng.standard_normal(x0.shape) for _ in range(cfg.K)]
        if cfg.lam == 0:
            l_simple, grads = simple_loss(params, sched, x0, t, eps_seq[0])
            terms = _sa_terms(params, sched, x0, t, eps_seq, cfg.use_tau_weights)
            l_sa = 0.0 if terms is None else float(np.sum(terms["S"] ** 2) / B)
            losses = LossBreakdown(l_simple, l_sa, l_simple)
        else:
            losses, grads = combined_loss(params, sched, x0, t, eps_seq, cfg.lam, cfg.use_tau_weights)
    if not math.isfinite(losses.l_total):
        raise FloatingPointError(
            f"non-finite loss at optimizer step {opt_state.step + 1} "
            f"(t range {t.min()}..{t.max()}): {losses}"
        )
    params, opt_state = adam_update(params, grads, opt_state, cfg.learning_rate, cfg.adam_betas, cfg.adam_eps)
    ema = ema_update(ema, params)
    return params, ema, opt_state, losses


@dataclass
class TrainResult:
    params: MLPPredictor
    ema: EmaParams
    opt_state: AdamState
    metrics: list


def _minibatches(n: int, batch: int, seed: int):
    rng = np.random.default_rng([seed, 0])
    while True:
        perm = rng.permutation(n)
        if batch > n:
            perm = np.concatenate([perm, rng.integers(0, n, size=batch - n)])
            yield perm
            continue
        for start in range(0, n - batch + 1, batch):
            yield perm[start : start + batch]


def write_metrics_csv(rows, path) -> None:
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(METRICS_HEADER)
            for step, lb in rows:
                w.writerow([step, repr(lb.l_simple), repr(lb.l_sa), repr(lb.l_total)])
    except OSError as exc:
        raise OSError(f"could not write metrics to {path}: {exc}") from exc


def train(
    cfg: TrainConfig,
    dataset: np.ndarray,
    sched: NoiseSchedule,
    params: MLPPredictor | None = None,
    model_kwargs: dict | None = None,
    out_dir=None,
    checkpoint_meta: dict | None = None,
    log_every: int = 0,
) -> TrainResult:
    """Run ``cfg.steps`` updates over shuffled minibatches of ``dataset``.

    When ``out_dir`` is given, writes ``metrics.csv`` and ``checkpoint.npz``
    there.
    """
    data = np.asarray(dataset, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError(f"dataset must be a non-empty (n, dim) array, got shape {data.shape}")
    if params is None:
        params = MLPPredictor.init(
            data.shape[1], sched.T, rng=np.random.default_rng([cfg.seed, 2]), **(model_kwargs or {})
        )
    ema = EmaParams.from_params(params, cfg.ema_decay)
    opt = AdamState.zeros_like(params)
    batches = _minibatches(data.shape[0], cfg.batch_size, cfg.seed)
    rows = []
    for step in range(1, cfg.steps + 1):
        idx = next(batches)
        params, ema, opt, losses = train_step(params, ema, opt, cfg, data[idx], step_rng(cfg.seed, step), sched)
        rows.append((step, losses))
        if log_every and step % log_every == 0:
            log.info("step %d  l_simple %.4f  l_sa %.4f", step, losses.l_simple, losses.l_sa)
    result = TrainResult(params=params, ema=ema, opt_state=opt, metrics=rows)
    if out_dir is not None:
        from .checkpoint import save_checkpoint

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_metrics_csv(rows, out / "metrics.csv")
        meta = {"train": cfg.to_dict(), **(checkpoint_meta or {})}
        save_checkpoint(out / "checkpoint.npz", result, meta=meta)
    return result
