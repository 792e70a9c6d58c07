"""Time-conditioned MLP noise predictor with hand-derived gradients.

Input is ``concat(x_t, embed_time(t))``; hidden layers apply a smooth
activation; the output layer is linear and zero-initialised, so an untrained
predictor returns zeros.

Anything exposing ``__call__(xt, t)`` and ``backward(xt, t, output_grad)``
can stand in for the MLP in losses, samplers and gap analysis (see
:mod:`sa_diffusion.oracles`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

ACTIVATIONS = ("silu", "tanh")


def embed_time(t, T: int, dim: int) -> np.ndarray:
    """Sinusoidal embedding of timestep(s) ``t``.

    ``t`` is rescaled to ``1000 * t / T`` so the embedding of a given fraction
    of the chain does not depend on T. Returns shape ``(dim,)`` for scalar t
    and ``(len(t), dim)`` for an array.
    """
    if dim % 2:
        raise ConfigError(f"time embedding dim must be even, got {dim}")
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half - 1, 1))
    pos = 1000.0 * np.asarray(t, dtype=np.float64) / T
    args = pos[..., None] * freqs
    return np.concatenate([np.sin(args), np.cos(args)], axis=-1)


def _act(name: str, z: np.ndarray):
    """Returns the activation and an auxiliary array reused by the derivative."""
    if name == "silu":
        sig = 1.0 / (1.0 + np.exp(-z))
        return z * sig, sig
    h = np.tanh(z)
    return h, None


def _act_grad(name: str, h: np.ndarray, aux) -> np.ndarray:
    if name == "silu":
        # d/dz [z * sig(z)] = sig + z * sig * (1 - sig) = sig + h * (1 - sig)
        return aux + h * (1.0 - aux)
    return 1.0 - h * h


@dataclass(eq=False)
class MLPPredictor:
    weights: list
    biases: list
    T: int
    time_embed_dim: int = 16
    activation: str = "silu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}; choose from {ACTIVATIONS}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ConfigError("weights and biases must be non-empty lists of equal length")
        fan_in = self.data_dim + self.time_embed_dim
        for W, b in zip(self.weights, self.biases):
            if W.shape[0] != fan_in or b.shape != (W.shape[1],):
                raise ConfigError(f"inconsistent layer shapes {W.shape} / {b.shape}")
            fan_in = W.shape[1]
        if fan_in != self.data_dim:
            raise ConfigError(f"output dim {fan_in} differs from data dim {self.data_dim}")

    @classmethod
    def init(
        cls,
        data_dim: int,
        T: int,
        hidden_sizes=(128, 128, 128),
        time_embed_dim: int = 16,
        activation: str = "silu",
        rng: np.random.Generator | None = None,
    ) -> "MLPPredictor":
        """Uniform fan-in init for hidden layers, zeros for the output layer."""
        rng = rng if rng is not None else np.random.default_rng(0)
        sizes = [data_dim + time_embed_dim, *hidden_sizes]
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
        weights.append(np.zeros((sizes[-1], data_dim)))
        biases.append(np.zeros(data_dim))
        return cls(weights, biases, T=T, time_embed_dim=time_embed_dim, activation=activation)

    @property
    def data_dim(self) -> int:
        return self.biases[-1].shape[0]

    @property
    def hidden_sizes(self) -> list[int]:
        return [b.shape[0] for b in self.biases[:-1]]

    def arrays(self) -> list[np.ndarray]:
        """Parameters in a fixed order: W0, b0, W1, b1, ..."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def with_arrays(self, arrays) -> "MLPPredictor":
        arrays = list(arrays)
        return MLPPredictor(
            weights=arrays[0::2],
            biases=arrays[1::2],
            T=self.T,
            time_embed_dim=self.time_embed_dim,
            activation=self.activation,
        )

    def copy(self) -> "MLPPredictor":
        return self.with_arrays([a.copy() for a in self.arrays()])

    def hyperparameters(self) -> dict:
        return {
            "data_dim": self.data_dim,
            "T": self.T,
            "hidden_sizes": self.hidden_sizes,
            "time_embed_dim": self.time_embed_dim,
            "activation": self.activation,
        }

    def _input(self, xt: np.ndarray, t) -> np.ndarray:
        xt = np.asarray(xt, dtype=np.float64)
        if xt.ndim != 2 or xt.shape[1] != self.data_dim:
            raise ValueError(f"expected input of shape (batch, {self.data_dim}), got {xt.shape}")
        emb = embed_time(t, self.T, self.time_embed_dim)
        if emb.ndim == 1:
            emb = np.broadcast_to(emb, (xt.shape[0], emb.shape[0]))
        elif emb.shape[0] != xt.shape[0]:
            raise ValueError(f"{emb.shape[0]} timesteps for a batch of {xt.shape[0]}")
        return np.concatenate([xt, emb], axis=1)

    def forward(self, xt: np.ndarray, t, return_cache: bool = False):
        h = self._input(xt, t)
        cache = [(h, None)]
        n = len(self.weights)
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            if k < n - 1:
                h, aux = _act(self.activation, z)
                cache.append((h, aux))
            else:
                h = z
        return (h, cache) if return_cache else h

    __call__ = forward

    def backward(self, xt: np.ndarray, t, output_grad: np.ndarray, cache=None) -> list[np.ndarray]:
        """Gradient of ``sum(forward(xt, t) * output_grad)`` w.r.t. every parameter.

        Returned in :meth:`arrays` order. Pass the ``cache`` from
        ``forward(..., return_cache=True)`` to skip recomputing activations.
        """
        if cache is None:
            _, cache = self.forward(xt, t, return_cache=True)
        g = np.asarray(output_grad, dtype=np.float64)
        expected = (cache[0][0].shape[0], self.data_dim)
        if g.shape != expected:
            raise ValueError(f"output_grad shape {g.shape} != forward output shape {expected}")
        grads = [None] * (2 * len(self.weights))
        for k in range(len(self.weights) - 1, -1, -1):
            h_in = cache[k][0]
            grads[2 * k] = h_in.T @ g
            grads[2 * k + 1] = g.sum(axis=0)
            if k == 0:
                break
            h, aux = cache[k]
            g = (g @ self.weights[k].T) * _act_grad(self.activation, h, aux)
        return grads


def forward(params: MLPPredictor, xt: np.ndarray, t) -> np.ndarray:
    return params.forward(xt, t)


def backward(params: MLPPredictor, xt: np.ndarray, t, output_grad: np.ndarray) -> list[np.ndarray]:
    return params.backward(xt, t, output_grad)


@dataclass(eq=False)
class EmaParams:
    shadow: MLPPredictor
    decay: float = 0.9999

    def __post_init__(self):
        if not 0.0 <= self.decay <= 1.0:
            raise ConfigError(f"EMA decay must be in [0, 1], got {self.decay}")

    @classmethod
    def from_params(cls, params: MLPPredictor, decay: float = 0.9999) -> "EmaParams":
        return cls(shadow=params.copy(), decay=decay)


def ema_update(ema: EmaParams, params: MLPPredictor) -> EmaParams:
    """shadow <- decay * shadow + (1 - decay) * params."""
    old, new = ema.shadow.arrays(), params.arrays()
    if [a.shape for a in old] != [a.shape for a in new]:
        raise ValueError("EMA shadow and params have different shapes")
    d = ema.decay
    mixed = [d * s + (1.0 - d) * p for s, p in zip(old, new)]
    return EmaParams(shadow=ema.shadow.with_arrays(mixed), decay=d)


@dataclass(eq=False)
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step: int = 0

    @classmethod
    def zeros_like(cls, params: MLPPredictor) -> "AdamState":
        arrs = params.arrays()
        return cls(m=[np.zeros_like(a) for a in arrs], v=[np.zeros_like(a) for a in arrs], step=0)
