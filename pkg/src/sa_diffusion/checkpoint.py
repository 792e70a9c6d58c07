"""Versioned ``.npz`` checkpoint container.

Layout (all arrays float64, names zero-padded by position in
``MLPPredictor.arrays()`` order):

    meta                JSON string: format version, model hyperparameters,
                        step counter, EMA decay, plus free-form metadata
    params/NNN          raw parameters
    ema/NNN             EMA shadow parameters
    adam_m/NNN          Adam first moments
    adam_v/NNN          Adam second moments
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .predictor import AdamState, EmaParams, MLPPredictor

FORMAT = "sa-diffusion-checkpoint"
VERSION = 1


def save_checkpoint(path, result, meta: dict | None = None) -> None:
    """Write params, EMA, and optimizer state of a ``TrainResult``-like object."""
    params, ema, opt = result.params, result.ema, result.opt_state
    header = {
        "format": FORMAT,
        "version": VERSION,
        "model": params.hyperparameters(),
        "step": int(opt.step),
        "ema_decay": float(ema.decay),
        "meta": meta or {},
    }
    arrays = {"meta": np.array(json.dumps(header, sort_keys=True))}
    for prefix, arrs in (
        ("params", params.arrays()),
        ("ema", ema.shadow.arrays()),
        ("adam_m", opt.m),
        ("adam_v", opt.v),
    ):
        for i, a in enumerate(arrs):
            arrays[f"{prefix}/{i:03d}"] = a
    path = Path(path)
    try:
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)
    except OSError as exc:
        raise OSError(f"could not write checkpoint {path}: {exc}") from exc


class Checkpoint:
    def __init__(self, params, ema, opt_state, header):
        self.params = params
        self.ema = ema
        self.opt_state = opt_state
        self.header = header

    @property
    def meta(self) -> dict:
        return self.header.get("meta", {})


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(str(z["meta"]))
        if header.get("format") != FORMAT:
            raise ValueError(f"{path} is not a {FORMAT} file")
        if header.get("version") != VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")

        def group(prefix):
            keys = sorted(k for k in z.files if k.startswith(prefix + "/"))
            return [z[k] for k in keys]

        hp = header["model"]
        weights_biases = group("params")
        params = MLPPredictor(
            weights=weights_biases[0::2],
            biases=weights_biases[1::2],
            T=hp["T"],
            time_embed_dim=hp["time_embed_dim"],
            activation=hp["activation"],
        )
        ema = EmaParams(shadow=params.with_arrays(group("ema")), decay=header["ema_decay"])
        opt = AdamState(m=group("adam_m"), v=group("adam_v"), step=header["step"])
    return Checkpoint(params, ema, opt, header)
