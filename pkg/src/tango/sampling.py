"""Exact sampling from a non-negative tensor train.

Draws index by index from the conditionals ``p(i_k | i_1..i_{k-1})``, which are
obtained by contracting the trailing cores against all-ones vectors.
"""

from __future__ import annotations

import numpy as np


class DegenerateDistributionError(ValueError):
    pass


def _right_marginals(cores):
    """``R[k]`` = cores k..d-1 summed over their mode indices, shape ``(r_k,)``."""
    d = len(cores)
    rights = [None] * (d + 1)
    rights[d] = np.ones(1)
    for k in range(d - 1, -1, -1):
        rights[k] = cores[k].sum(axis=1) @ rights[k + 1]
    return rights


def tt_sample(pdf, count, rng_seed=0):
    """Draw ``count`` i.i.d. multi-indices from the distribution proportional to ``pdf``.

    Negative conditional weights (approximation undershoot) are clamped to
    zero. Returns an ``(count, d)`` integer array.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(rng_seed)
    cores = pdf.cores
    rights = _right_marginals(cores)
    d = len(cores)
    out = np.empty((count, d), dtype=np.int64)
    left = np.ones((count, 1))
    u = rng.random((count, d))
    for k in range(d):
        # weights[s, i] = left[s] @ G_k[:, i, :] @ R_{k+1}
        w = left @ (cores[k] @ rights[k + 1])  # (count, n_k)
        w = np.maximum(w, 0.0)
        tot = w.sum(axis=1)
        if np.any(tot <= 0):
            raise DegenerateDistributionError(
                "density has no positive mass" if k == 0 else
                f"conditional at mode {k} has no positive mass"
            )
        cdf = np.cumsum(w, axis=1)
        choice = (cdf < (u[:, k] * tot)[:, None]).sum(axis=1)
        choice = np.minimum(choice, w.shape[1] - 1)
        # never land on a zero-weight bin through round-off at the cdf edge
        zero = w[np.arange(count), choice] <= 0
        if zero.any():
            choice[zero] = np.argmax(w[zero] > 0, axis=1)
        out[:, k] = choice
        left = np.einsum("sa,asb->sb", left, cores[k][:, choice, :])
        # rescale rows to avoid under/overflow in long trains
        scale = np.abs(left).max(axis=1, keepdims=True)
        scale[scale == 0] = 1.0
        left = left / scale
    return out
