"""Tensor-train container, evaluation, algebra and rounding.

A tensor train stores a d-way array ``A[i_1, ..., i_d]`` as a chain of cores
``G_k`` of shape ``(r_{k-1}, n_k, r_k)`` with ``r_0 = r_d = 1``; an entry is the
product of the matrix slices ``G_1[:, i_1, :] @ ... @ G_d[:, i_d, :]``.
"""

from __future__ import annotations

import io
import json
import struct

import numpy as np

FORMAT_MAGIC = b"TANGOTT\x00"
FORMAT_VERSION = 1


class TensorTrain:
    """Immutable tensor train.

    Parameters
    ----------
    cores : sequence of ndarray
        Three-way cores, core ``k`` shaped ``(r_{k-1}, n_k, r_k)``.
    """

    __slots__ = ("_cores",)

    def __init__(self, cores):
        cores = [np.array(c, dtype=float) for c in cores]
        if not cores:
            raise ValueError("a tensor train needs at least one core")
        for k, c in enumerate(cores):
            if c.ndim != 3:
                raise ValueError(f"core {k} has {c.ndim} axes, expected 3")
            c.setflags(write=False)
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ValueError("boundary ranks must be 1")
        for k in range(len(cores) - 1):
            if cores[k].shape[2] != cores[k + 1].shape[0]:
                raise ValueError(
                    f"rank mismatch between cores {k} and {k + 1}: "
                    f"{cores[k].shape[2]} != {cores[k + 1].shape[0]}"
                )
        self._cores = tuple(cores)

    @property
    def cores(self):
        return list(self._cores)

    @property
    def d(self):
        return len(self._cores)

    @property
    def mode_sizes(self):
        return [c.shape[1] for c in self._cores]

    @property
    def ranks(self):
        return [1] + [c.shape[2] for c in self._cores]

    def __repr__(self):
        return f"TensorTrain(mode_sizes={self.mode_sizes}, ranks={self.ranks})"

    def __getitem__(self, idx):
        return tt_eval(self, idx)

    def full(self):
        """Dense array. Only sensible at test scale."""
        res = self._cores[0].reshape(self._cores[0].shape[1], -1)
        for c in self._cores[1:]:
            r0, n, r1 = c.shape
            res = (res @ c.reshape(r0, n * r1)).reshape(-1, r1)
        return res.reshape(self.mode_sizes)

    def norm(self):
        """Frobenius norm, computed core by core."""
        gram = np.ones((1, 1))
        for c in self._cores:
            # gram_{k} = sum_i G[:, i, :]^T gram_{k-1} G[:, i, :]
            gram = np.einsum("ab,aic,bid->cd", gram, c, c)
        return float(np.sqrt(max(gram[0, 0], 0.0)))

    def sum(self):
        v = np.ones((1,))
        for c in self._cores:
            v = v @ c.sum(axis=1)
        return float(v[0])

    # ---------------------------------------------------------------- i/o
    def to_bytes(self):
        header = json.dumps(
            {
                "format_version": FORMAT_VERSION,
                "d": self.d,
                "mode_sizes": self.mode_sizes,
                "ranks": self.ranks,
                "dtype": "<f8",
                "order": "C",
            },
            sort_keys=True,
        ).encode()
        buf = io.BytesIO()
        buf.write(FORMAT_MAGIC)
        buf.write(struct.pack("<I", len(header)))
        buf.write(header)
        for c in self._cores:
            buf.write(np.ascontiguousarray(c, dtype="<f8").tobytes(order="C"))
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data):
        if data[: len(FORMAT_MAGIC)] != FORMAT_MAGIC:
            raise ValueError("not a tensor-train file")
        pos = len(FORMAT_MAGIC)
        (hlen,) = struct.unpack("<I", data[pos : pos + 4])
        pos += 4
        header = json.loads(data[pos : pos + hlen].decode())
        pos += hlen
        if header["format_version"] != FORMAT_VERSION:
            raise ValueError(f"unsupported tensor-train format {header['format_version']}")
        ranks, sizes = header["ranks"], header["mode_sizes"]
        cores = []
        for k, n in enumerate(sizes):
            shape = (ranks[k], n, ranks[k + 1])
            count = int(np.prod(shape))
            arr = np.frombuffer(data, dtype="<f8", count=count, offset=pos)
            cores.append(arr.reshape(shape).astype(float))
            pos += 8 * count
        if pos != len(data):
            raise ValueError("trailing bytes in tensor-train file")
        return cls(cores)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def parameter_count(tt):
    """Number of stored scalars, ``sum_k r_{k-1} n_k r_k``."""
    return int(sum(c.size for c in tt.cores))


def tt_eval(tt, idx):
    """Evaluate ``tt`` at one multi-index or at a batch of them.

    ``idx`` is either a length-d sequence (returns a float) or an ``(N, d)``
    integer array (returns an ``(N,)`` array).
    """
    idx = np.asarray(idx)
    single = idx.ndim == 1
    idx = np.atleast_2d(idx)
    if idx.shape[1] != tt.d:
        raise IndexError(f"expected {tt.d} indices, got {idx.shape[1]}")
    sizes = np.asarray(tt.mode_sizes)
    if np.any(idx < 0) or np.any(idx >= sizes):
        bad = np.argwhere((idx < 0) | (idx >= sizes))[0]
        raise IndexError(
            f"index {idx[bad[0]].tolist()} out of range for mode sizes {tt.mode_sizes}"
        )
    cores = tt.cores
    v = cores[0][0, idx[:, 0], :]  # (N, r1)
    for k in range(1, tt.d):
        v = np.einsum("na,anb->nb", v, cores[k][:, idx[:, k], :])
    out = v[:, 0]
    return float(out[0]) if single else out


def tt_constant(mode_sizes, value=1.0):
    """Rank-1 tensor train equal to ``value`` everywhere."""
    cores = [np.ones((1, n, 1)) for n in mode_sizes]
    cores[0] = cores[0] * value
    return TensorTrain(cores)


def _truncation_rank(s, delta, max_rank=None):
    """Smallest rank whose discarded tail has 2-norm <= delta."""
    tail = np.sqrt(np.cumsum((s**2)[::-1]))[::-1]  # tail[r] = ||s[r:]||
    r = int(np.sum(tail > delta))
    r = max(r, 1)
    if max_rank is not None:
        r = min(r, max_rank)
    return min(r, len(s))


def tt_from_dense(t, tol=1e-12, max_rank=None):
    """TT-SVD of a dense array with relative Frobenius accuracy ``tol``."""
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise ValueError("input tensor has non-finite entries")
    shape = t.shape
    d = len(shape)
    if d == 1:
        return TensorTrain([t.reshape(1, -1, 1)])
    nrm = np.linalg.norm(t)
    if nrm == 0.0:
        return TensorTrain([np.zeros((1, n, 1)) for n in shape])
    delta = tol * nrm / np.sqrt(d - 1)
    cores = []
    r = 1
    rest = t.reshape(1, -1)
    for k in range(d - 1):
        mat = rest.reshape(r * shape[k], -1)
        u, s, vt = np.linalg.svd(mat, full_matrices=False)
        rk = _truncation_rank(s, delta, max_rank)
        cores.append(u[:, :rk].reshape(r, shape[k], rk))
        rest = s[:rk, None] * vt[:rk]
        r = rk
    cores.append(rest.reshape(r, shape[-1], 1))
    return TensorTrain(cores)


def tt_add(a, b):
    """Entrywise sum in TT format (block construction, no rounding)."""
    if a.mode_sizes != b.mode_sizes:
        raise ValueError(f"mode sizes differ: {a.mode_sizes} vs {b.mode_sizes}")
    ca, cb = a.cores, b.cores
    d = a.d
    if d == 1:
        return TensorTrain([ca[0] + cb[0]])
    cores = [np.concatenate([ca[0], cb[0]], axis=2)]
    for k in range(1, d - 1):
        ra0, n, ra1 = ca[k].shape
        rb0, _, rb1 = cb[k].shape
        c = np.zeros((ra0 + rb0, n, ra1 + rb1))
        c[:ra0, :, :ra1] = ca[k]
        c[ra0:, :, ra1:] = cb[k]
        cores.append(c)
    cores.append(np.concatenate([ca[-1], cb[-1]], axis=0))
    return TensorTrain(cores)


def tt_scale_shift(a, alpha, beta, round_tol=1e-10):
    """TT evaluating to ``alpha * a + beta``.

    The shift goes through :func:`tt_add` with a rank-1 constant train and the
    result is rounded at ``round_tol`` (pass ``None`` to keep the raw ranks).
    ``tt_scale_shift(a, -1, 1)`` is the complementary density ``1 - a``.
    """
    cores = a.cores
    cores[0] = cores[0] * alpha
    out = TensorTrain(cores)
    if beta != 0:
        out = tt_add(out, tt_constant(a.mode_sizes, beta))
        if round_tol is not None:
            out = tt_round(out, round_tol)
    return out


def _orthogonalize_right(cores):
    """Right-orthogonalize cores 1..d-1 in place via QR; returns the list."""
    for k in range(len(cores) - 1, 0, -1):
        r0, n, r1 = cores[k].shape
        q, rr = np.linalg.qr(cores[k].reshape(r0, n * r1).T)
        cores[k] = q.T.reshape(-1, n, r1)
        cores[k - 1] = np.einsum("anb,cb->anc", cores[k - 1], rr)
    return cores


def tt_round(a, tol=1e-10, max_rank=None):
    """Recompress ``a`` so that the relative Frobenius error is at most ``tol``."""
    if tol < 0:
        raise ValueError("tol must be non-negative")
    if a.d == 1:
        return TensorTrain(a.cores)
    cores = _orthogonalize_right(a.cores)
    d = len(cores)
    nrm = np.linalg.norm(cores[0])
    delta = tol * nrm / np.sqrt(d - 1)
    for k in range(d - 1):
        r0, n, r1 = cores[k].shape
        u, s, vt = np.linalg.svd(cores[k].reshape(r0 * n, r1), full_matrices=False)
        if tol == 0 and max_rank is None:
            rk = len(s)
        else:
            rk = _truncation_rank(s, delta, max_rank)
        cores[k] = u[:, :rk].reshape(r0, n, rk)
        cores[k + 1] = np.einsum("ab,bnc->anc", s[:rk, None] * vt[:rk], cores[k + 1])
    return TensorTrain(cores)
