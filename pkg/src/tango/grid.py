"""Uniform configuration grids and their quantized (virtual) index layouts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Per-joint uniform binning of a box ``[lower, upper]``.

    ``reshape`` controls the virtual tensor the grid is presented as:

    * ``None`` -- one tensor mode per joint.
    * list of lists -- per-joint factorizations, e.g. ``[[8, 8, 2]] * 3``.
      Virtual digits of one joint are contiguous, least significant first.
    * flat list of ints -- a reshape of the whole C-ordered physical tensor,
      e.g. ``[8] * 7`` for a ``128**3`` grid. Only the total size must match.
    """

    lower: tuple
    upper: tuple
    bins: tuple
    reshape: tuple | None = None
    _per_joint: bool = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        lower = tuple(float(x) for x in self.lower)
        upper = tuple(float(x) for x in self.upper)
        bins = tuple(int(b) for b in self.bins)
        if not (len(lower) == len(upper) == len(bins)):
            raise ValueError("lower, upper and bins must have equal length")
        if any(b < 1 for b in bins):
            raise ValueError("bin counts must be positive")
        if any(hi <= lo for lo, hi in zip(lower, upper)):
            raise ValueError("each dimension needs lower < upper")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "bins", bins)
        per_joint = False
        reshape = self.reshape
        if reshape is not None:
            reshape = list(reshape)
            if reshape and isinstance(reshape[0], (list, tuple)):
                per_joint = True
                if len(reshape) != len(bins):
                    raise ValueError("per-joint reshape needs one factorization per joint")
                for j, (fac, b) in enumerate(zip(reshape, bins)):
                    if int(np.prod(fac)) != b:
                        raise ValueError(
                            f"reshape of joint {j}: {'*'.join(map(str, fac))} != {b} bins"
                        )
                reshape = tuple(tuple(int(f) for f in fac) for fac in reshape)
            else:
                total = int(np.prod(bins))
                if int(np.prod(reshape)) != total:
                    raise ValueError(
                        f"reshape {'*'.join(map(str, reshape))} does not match "
                        f"{'*'.join(map(str, bins))} = {total} cells"
                    )
                reshape = tuple(int(f) for f in reshape)
            flat = [f for fac in reshape for f in fac] if per_joint else list(reshape)
            if any(f < 1 for f in flat):
                raise ValueError("virtual mode sizes must be positive")
        object.__setattr__(self, "reshape", reshape)
        object.__setattr__(self, "_per_joint", per_joint)

    @classmethod
    def uniform(cls, limits, bins, reshape=None):
        limits = np.asarray(limits, dtype=float)
        if np.isscalar(bins):
            bins = [int(bins)] * len(limits)
        return cls(tuple(limits[:, 0]), tuple(limits[:, 1]), tuple(bins), reshape)

    @property
    def ndim(self):
        return len(self.bins)

    @property
    def widths(self):
        return (np.asarray(self.upper) - np.asarray(self.lower)) / np.asarray(self.bins)

    @property
    def virtual_sizes(self):
        if self.reshape is None:
            return list(self.bins)
        if self._per_joint:
            return [f for fac in self.reshape for f in fac]
        return list(self.reshape)

    # --------------------------------------------------- physical <-> value
    def index_to_value(self, idx):
        """Bin centres for physical indices (``(m,)`` or ``(N, m)``)."""
        idx = np.asarray(idx)
        return np.asarray(self.lower) + (idx + 0.5) * self.widths

    def value_to_index(self, q):
        """Physical bin of each configuration; values outside are clipped."""
        q = np.asarray(q, dtype=float)
        idx = np.floor((q - np.asarray(self.lower)) / self.widths).astype(np.int64)
        return np.clip(idx, 0, np.asarray(self.bins) - 1)

    # ------------------------------------------------- physical <-> virtual
    def to_virtual(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        single = idx.ndim == 1
        idx = np.atleast_2d(idx)
        if self.reshape is None:
            out = idx.copy()
        elif self._per_joint:
            cols = []
            for j, fac in enumerate(self.reshape):
                rem = idx[:, j]
                for f in fac:
                    cols.append(rem % f)
                    rem = rem // f
            out = np.stack(cols, axis=1)
        else:
            lin = np.ravel_multi_index(tuple(idx.T), self.bins)
            out = np.stack(np.unravel_index(lin, self.reshape), axis=1)
        return out[0] if single else out

    def to_physical(self, vidx):
        vidx = np.asarray(vidx, dtype=np.int64)
        single = vidx.ndim == 1
        vidx = np.atleast_2d(vidx)
        if self.reshape is None:
            out = vidx.copy()
        elif self._per_joint:
            cols = []
            pos = 0
            for fac in self.reshape:
                val = np.zeros(len(vidx), dtype=np.int64)
                mult = 1
                for f in fac:
                    val += vidx[:, pos] * mult
                    mult *= f
                    pos += 1
                cols.append(val)
            out = np.stack(cols, axis=1)
        else:
            lin = np.ravel_multi_index(tuple(vidx.T), self.reshape)
            out = np.stack(np.unravel_index(lin, self.bins), axis=1)
        return out[0] if single else out

    def virtual_to_value(self, vidx):
        return self.index_to_value(self.to_physical(vidx))

    def value_to_virtual(self, q):
        return self.to_virtual(self.value_to_index(q))

    def to_dict(self):
        reshape = self.reshape
        if reshape is not None:
            reshape = [list(r) for r in reshape] if self._per_joint else list(reshape)
        return {
            "lower": list(self.lower),
            "upper": list(self.upper),
            "bins": list(self.bins),
            "reshape": reshape,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(data["lower"]), tuple(data["upper"]), tuple(data["bins"]), data.get("reshape"))
