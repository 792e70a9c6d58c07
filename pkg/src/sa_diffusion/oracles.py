"""Parameter-free stand-ins for the noise predictor.

They know the clean data ``x0`` and return the exact noise (optionally plus a
constant offset), which turns losses, samplers and gap traces into
closed-form checks.
"""

from __future__ import annotations

import numpy as np

from .forward import recover_noise
from .schedule import NoiseSchedule


class OracleNoisePredictor:
    """Returns the exact noise that maps ``x0`` to ``xt`` at step ``t``, plus ``offset``.

    ``x0`` is either one point (broadcast to every row) or a full batch aligned
    with the inputs it will be queried on.
    """

    def __init__(self, sched: NoiseSchedule, x0, offset=0.0):
        self.sched = sched
        self.x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
        self.offset = np.asarray(offset, dtype=np.float64)

    def __call__(self, xt, t):
        xt = np.asarray(xt, dtype=np.float64)
        x0 = np.broadcast_to(self.x0, xt.shape) if self.x0.shape[0] == 1 else self.x0
        if x0.shape[0] != xt.shape[0]:
            # stacked evaluation of several timesteps for the same batch
            reps, rem = divmod(xt.shape[0], x0.shape[0])
            if rem:
                raise ValueError(f"cannot align {xt.shape[0]} rows with {x0.shape[0]} clean points")
            x0 = np.tile(x0, (reps, 1))
        return recover_noise(self.sched, x0, xt, t) + self.offset

    def backward(self, xt, t, output_grad):
        return []

    def arrays(self):
        return []
