"""TT-Cross approximation of black-box tensors.

Two-site (DMRG-style) cross interpolation: each step evaluates the function on
a supercore fibre set, splits it with a truncated SVD (which is where ranks
adapt) and picks the next interpolation indices with maxvol.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .tensor_train import TensorTrain, _truncation_rank, tt_eval

log = logging.getLogger(__name__)


class EvaluationError(ValueError):
    """Black-box function returned a non-finite value."""

    def __init__(self, index, value):
        super().__init__(f"non-finite value {value!r} at index {list(index)}")
        self.index = tuple(int(i) for i in index)
        self.value = value


class BlackBoxField:
    """Non-negative function on a tensor index set.

    ``evaluator`` maps an ``(N, d)`` integer array of multi-indices to ``(N,)``
    values. Calls are split into chunks of ``chunk_size`` rows to bound memory.
    """

    def __init__(self, evaluator, mode_sizes, chunk_size=1 << 18):
        self.evaluator = evaluator
        self.mode_sizes = [int(n) for n in mode_sizes]
        self.chunk_size = int(chunk_size)
        self.n_evals = 0

    @classmethod
    def on_grid(cls, func, grid, chunk_size=1 << 18):
        """Field on the virtual index set of ``grid``; ``func`` takes joint values."""

        def evaluator(vidx):
            return func(grid.virtual_to_value(vidx))

        field = cls(evaluator, grid.virtual_sizes, chunk_size)
        field.grid = grid
        return field

    @property
    def d(self):
        return len(self.mode_sizes)

    def __call__(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        out = np.empty(len(idx))
        for s in range(0, len(idx), self.chunk_size):
            part = idx[s : s + self.chunk_size]
            vals = np.asarray(self.evaluator(part), dtype=float).reshape(-1)
            bad = ~np.isfinite(vals)
            if bad.any():
                j = int(np.argmax(bad))
                raise EvaluationError(part[j], float(vals[j]))
            out[s : s + len(part)] = vals
        self.n_evals += len(idx)
        return out


def maxvol(a, tol=1.05, max_iters=100):
    """Row indices of a quasi-maximal-volume ``r x r`` submatrix of ``a`` (n x r)."""
    n, r = a.shape
    if r > n:
        raise ValueError("maxvol needs at least as many rows as columns")
    if r == 0:
        return np.zeros(0, dtype=int)
    # rows picked by LU with partial pivoting are a good starting set
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        _, swaps = scipy.linalg.lu_factor(a, check_finite=False)
    perm = np.arange(n)
    for i, p in enumerate(swaps[:r]):
        perm[i], perm[p] = perm[p], perm[i]
    piv = perm[:r].copy()
    sub = a[piv]
    try:
        b = np.linalg.solve(sub.T, a.T).T
    except np.linalg.LinAlgError:
        b = a @ np.linalg.pinv(sub)
    for _ in range(max_iters):
        i, j = np.unravel_index(np.argmax(np.abs(b)), b.shape)
        if abs(b[i, j]) <= tol:
            break
        # swap row i into slot j: Sherman-Morrison update of b
        bj = b[:, j].copy()
        bi = b[i, :].copy()
        bi[j] -= 1.0
        b -= np.outer(bj, bi / b[i, j])
        piv[j] = i
    return piv


@dataclass
class CrossResult:
    tt: TensorTrain
    heldout_error: float
    n_evals: int
    sweeps: int
    converged: bool
    elapsed: float
    history: list


def _fibre_indices(left, n1, n2, right):
    """All multi-indices ``(left[a], i, j, right[b])`` in C order of (a, i, j, b)."""
    ra, kl = left.shape
    rb, kr = right.shape
    out = np.empty((ra, n1, n2, rb, kl + 2 + kr), dtype=np.int64)
    out[..., :kl] = left[:, None, None, None, :]
    out[..., kl] = np.arange(n1)[None, :, None, None]
    out[..., kl + 1] = np.arange(n2)[None, None, :, None]
    out[..., kl + 2 :] = right[None, None, None, :, :]
    return out.reshape(-1, kl + 2 + kr)


def _random_indices(rng, sizes, count):
    return np.stack([rng.integers(0, n, size=count) for n in sizes], axis=1)


def _rel_error(tt, idx, ref):
    approx = tt_eval(tt, idx)
    den = np.linalg.norm(ref)
    err = np.linalg.norm(approx - ref)
    return float(err / den) if den > 0 else float(err)


def tt_cross(
    field,
    max_rank=20,
    n_sweeps=30,
    tol=1e-6,
    seed=0,
    init_rank=2,
    n_heldout=1000,
    n_check=500,
):
    """Approximate ``field`` by a tensor train.

    Parameters
    ----------
    field : BlackBoxField
    max_rank : int
        Cap on every interior rank.
    n_sweeps : int
        Maximum number of left-right-left sweeps.
    tol : float
        Relative truncation tolerance of the supercore SVDs. Sweeping stops
        early once the error on an internal check set drops below ``tol`` or
        stops improving at fixed ranks.
    seed : int
        Seeds the initial index sets and both random index sets.
    n_heldout : int
        Size of the held-out index set used only for the reported error.

    Returns
    -------
    CrossResult
    """
    sizes = list(field.mode_sizes)
    d = len(sizes)
    if any(n < 2 for n in sizes):
        raise ValueError("all mode sizes must be at least 2")
    if n_sweeps < 1:
        raise ValueError("n_sweeps must be >= 1")
    t0 = time.perf_counter()
    evals0 = field.n_evals
    init_ss, check_ss, heldout_ss = np.random.SeedSequence(seed).spawn(3)
    rng = np.random.default_rng(init_ss)
    check_rng = np.random.default_rng(check_ss)
    heldout_rng = np.random.default_rng(heldout_ss)

    if d == 1:
        vals = field(np.arange(sizes[0])[:, None])
        tt = TensorTrain([vals.reshape(1, -1, 1)])
        return CrossResult(tt, 0.0, field.n_evals - evals0, 0, True, time.perf_counter() - t0, [])

    check_idx = _random_indices(check_rng, sizes, n_check)
    check_val = field(check_idx)

    # right[k]: index sets for modes k..d-1, shape (r_k, d-k); left[k] for modes 0..k-1
    left = [None] * (d + 1)
    right = [None] * (d + 1)
    left[0] = np.zeros((1, 0), dtype=np.int64)
    right[d] = np.zeros((1, 0), dtype=np.int64)
    for k in range(d - 1, 0, -1):
        r = max(1, min(init_rank, math.prod(sizes[k:])))
        right[k] = _random_indices(rng, sizes[k:], r)

    cores = [None] * d
    delta = tol / np.sqrt(d - 1)
    history = []
    converged = False
    sweeps = 0
    prev_err = np.inf
    prev_ranks = None

    def supercore(k):
        idx = _fibre_indices(left[k], sizes[k], sizes[k + 1], right[k + 2])
        vals = field(idx)
        ra, rb = len(left[k]), len(right[k + 2])
        return vals.reshape(ra * sizes[k], sizes[k + 1] * rb)

    def split(mat):
        u, s, vt = np.linalg.svd(mat, full_matrices=False)
        nrm = np.linalg.norm(s)
        r = _truncation_rank(s, delta * nrm, max_rank)
        return u[:, :r], s[:r], vt[:r]

    for sweep in range(n_sweeps):
        sweeps = sweep + 1
        # left to right
        for k in range(d - 1):
            mat = supercore(k)
            u, s, vt = split(mat)
            piv = maxvol(u)
            uhat = u[piv]
            ra = len(left[k])
            cores[k] = np.linalg.solve(uhat.T, u.T).T.reshape(ra, sizes[k], len(s))
            a_idx, i_idx = np.divmod(piv, sizes[k])
            left[k + 1] = np.concatenate([left[k][a_idx], i_idx[:, None]], axis=1)
            rb = len(right[k + 2])
            cores[k + 1] = ((uhat * s) @ vt).reshape(len(s), sizes[k + 1], rb)
        # right to left
        for k in range(d - 2, -1, -1):
            mat = supercore(k)
            u, s, vt = split(mat)
            v = vt.T
            piv = maxvol(v)
            vhat = v[piv]
            rb = len(right[k + 2])
            cores[k + 1] = np.linalg.solve(vhat.T, v.T).reshape(len(s), sizes[k + 1], rb)
            i_idx, b_idx = np.divmod(piv, rb)
            right[k + 1] = np.concatenate([i_idx[:, None], right[k + 2][b_idx]], axis=1)
            ra = len(left[k])
            cores[k] = ((u * s) @ vhat.T).reshape(ra, sizes[k], len(s))

        tt = TensorTrain(cores)
        err = _rel_error(tt, check_idx, check_val)
        ranks = tt.ranks
        history.append({"sweep": sweeps, "check_error": err, "ranks": ranks, "n_evals": field.n_evals - evals0})
        log.debug("cross sweep %d: check error %.3e, ranks %s", sweeps, err, ranks)
        if err <= tol:
            converged = True
            break
        if ranks == prev_ranks and err >= 0.9 * prev_err:
            break
        prev_err, prev_ranks = err, ranks

    heldout_idx = _random_indices(heldout_rng, sizes, n_heldout)
    heldout_val = field(heldout_idx)
    heldout = _rel_error(tt, heldout_idx, heldout_val)
    n_evals = field.n_evals - evals0
    return CrossResult(tt, heldout, n_evals, sweeps, converged, time.perf_counter() - t0, history)
