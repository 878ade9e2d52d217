"""Central finite-difference gradient checking.

The checker is deliberately independent of the tape: it only re-evaluates
the forward function at perturbed parameter values.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def finite_difference_grad(loss_fn, param: Tensor, indices, step: float = 1e-5) -> np.ndarray:
    """Central differences d loss / d param[idx] for each flat index."""
    flat = param.data.reshape(-1)
    out = np.empty(len(indices))
    for n, idx in enumerate(indices):
        saved = flat[idx]
        flat[idx] = saved + step
        hi = float(loss_fn().data)
        flat[idx] = saved - step
        lo = float(loss_fn().data)
        flat[idx] = saved
        out[n] = (hi - lo) / (2.0 * step)
    return out


def max_relative_error(loss_fn, params: list[Tensor], rng: np.random.Generator,
                       probes_per_param: int = 3, step: float = 1e-5) -> float:
    """Backprop the loss once, then probe random scalar entries of each
    parameter against central differences. Returns the worst relative error,
    with |analytic| + |numeric| floored at 1 to keep near-zero gradients from
    blowing up the ratio."""
    for p in params:
        p.zero_grad()
    loss = loss_fn()
    loss.backward()
    worst = 0.0
    for p in params:
        size = p.data.size
        k = min(probes_per_param, size)
        indices = rng.choice(size, size=k, replace=False)
        analytic = p.grad.reshape(-1)[indices] if p.grad is not None else np.zeros(k)
        numeric = finite_difference_grad(loss_fn, p, indices, step)
        denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1.0)
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / denom)))
    return worst
