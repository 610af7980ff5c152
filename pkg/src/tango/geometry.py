"""H-representation polytopes, ellipsoids and the small LP/QP kernels behind them."""

from __future__ import annotations

import hashlib

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import HalfspaceIntersection

# bound on the depth variable so depth LPs of unbounded sets stay bounded
_DEPTH_CAP = 1e6


class Polytope:
    """``{x : A x <= b}`` with unit-norm rows.

    ``points`` optionally keeps a vertex (or generating point) set; obstacle
    hulls carry it so separating-plane redundancy checks need no LP.
    """

    __slots__ = ("A", "b", "points", "_bbox", "_depth")

    def __init__(self, A, b, points=None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).reshape(-1)
        if A.shape[0] != b.shape[0]:
            raise ValueError("A and b have different row counts")
        norms = np.linalg.norm(A, axis=1)
        zero = norms < 1e-14
        if np.any(zero & (b < 0)):
            # 0 <= negative: empty set; keep one impossible normalized row
            A = np.vstack([A[~zero] / norms[~zero, None], np.eye(A.shape[1])[:1], -np.eye(A.shape[1])[:1]])
            b = np.concatenate([b[~zero] / norms[~zero], [-1.0, -1.0]])
        else:
            A = A[~zero] / norms[~zero, None]
            b = b[~zero] / norms[~zero]
        A.setflags(write=False)
        b.setflags(write=False)
        self.A = A
        self.b = b
        self.points = None if points is None else np.asarray(points, dtype=float)
        self._bbox = None
        self._depth = None

    @classmethod
    def from_box(cls, lower, upper):
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        m = len(lower)
        A = np.vstack([np.eye(m), -np.eye(m)])
        b = np.concatenate([upper, -lower])
        box = cls(A, b, points=_box_corners(lower, upper))
        box._bbox = (lower.copy(), upper.copy())
        return box

    @property
    def dim(self):
        return self.A.shape[1]

    @property
    def n_facets(self):
        return self.A.shape[0]

    def __repr__(self):
        return f"Polytope(dim={self.dim}, facets={self.n_facets})"

    def contains(self, x, tol=1e-9):
        x = np.asarray(x, dtype=float)
        viol = x @ self.A.T - self.b
        return np.all(viol <= tol, axis=-1)

    def intersect(self, other):
        return Polytope(np.vstack([self.A, other.A]), np.concatenate([self.b, other.b]))

    def depth(self):
        """``(t, x)`` maximizing ``t`` subject to ``A x + t <= b``.

        ``t`` is the radius of the largest inscribed ball; negative ``t`` means
        the set is empty and measures how far apart the constraints are.
        """
        if self._depth is None:
            self._depth = depth_lp(self.A, self.b)
        return self._depth

    def chebyshev_center(self):
        t, x = self.depth()
        return x, t

    def is_empty(self, margin=0.0):
        return self.depth()[0] <= margin

    def bounding_box(self):
        if self._bbox is None:
            self._bbox = bounding_box_lp(self.A, self.b)
        return self._bbox

    def support(self, direction):
        """``max direction . x`` over the polytope."""
        res = linprog(-np.asarray(direction, dtype=float), A_ub=self.A, b_ub=self.b,
                      bounds=[(None, None)] * self.dim, method="highs")
        if res.status != 0:
            return np.inf if res.status == 3 else -np.inf
        return -res.fun

    def contains_polytope(self, other, tol=1e-7):
        """Exact check ``other ⊆ self`` via one support LP per facet of ``self``."""
        if other.is_empty():
            return True
        lo, hi = other.bounding_box()
        # facets implied by the box need no LP
        box_max = np.where(self.A > 0, self.A * hi, self.A * lo).sum(axis=1)
        for a, b, bm in zip(self.A, self.b, box_max):
            if bm <= b + tol:
                continue
            if other.support(a) > b + tol:
                return False
        return True

    def sample_uniform(self, n, rng, max_rounds=200):
        """``n`` uniform points by rejection from the bounding box."""
        lo, hi = self.bounding_box()
        out = []
        got = 0
        for _ in range(max_rounds):
            cand = rng.uniform(lo, hi, size=(max(2 * n, 64), self.dim))
            keep = cand[self.contains(cand)]
            out.append(keep)
            got += len(keep)
            if got >= n:
                break
        pts = np.concatenate(out)[:n] if out else np.zeros((0, self.dim))
        return pts

    def vertices_2d(self):
        """Ordered polygon vertices (2-D only, used for exports and plots)."""
        if self.dim != 2:
            raise ValueError("vertex enumeration is only provided in 2-D")
        t, x = self.depth()
        if t <= 0:
            return np.zeros((0, 2))
        hs = HalfspaceIntersection(np.hstack([self.A, -self.b[:, None]]), x)
        v = hs.intersections
        c = v.mean(axis=0)
        order = np.argsort(np.arctan2(v[:, 1] - c[1], v[:, 0] - c[0]))
        return v[order]

    def fingerprint(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.A).tobytes())
        h.update(np.ascontiguousarray(self.b).tobytes())
        return int.from_bytes(h.digest()[:8], "little")

    def to_dict(self):
        return {"A": self.A.tolist(), "b": self.b.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(data["A"], data["b"], data.get("points"))


def _box_corners(lo, hi):
    m = len(lo)
    return np.array(np.meshgrid(*zip(lo, hi), indexing="ij")).reshape(m, -1).T


class Ellipsoid:
    """``{C u + d : ||u|| <= 1}`` with symmetric positive-definite ``C``."""

    __slots__ = ("C", "d")

    def __init__(self, C, d):
        C = np.asarray(C, dtype=float)
        C = 0.5 * (C + C.T)
        np.linalg.cholesky(C)  # raises LinAlgError unless positive definite
        self.C = C
        self.d = np.asarray(d, dtype=float)

    @classmethod
    def ball(cls, center, radius):
        center = np.asarray(center, dtype=float)
        return cls(radius * np.eye(len(center)), center)

    @property
    def dim(self):
        return len(self.d)

    def log_volume(self):
        """``log det C`` (volume up to the unit-ball constant)."""
        return float(np.linalg.slogdet(self.C)[1])

    def contains(self, x, tol=1e-9):
        u = np.linalg.solve(self.C, (np.asarray(x, dtype=float) - self.d).T).T
        return np.linalg.norm(u, axis=-1) <= 1 + tol

    def to_dict(self):
        return {"C": self.C.tolist(), "d": self.d.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(data["C"], data["d"])


# --------------------------------------------------------------- kernels
def depth_lp(A, b):
    """Solve ``max t s.t. A x + t <= b`` (rows unit-norm); returns ``(t, x)``."""
    m = A.shape[1]
    c = np.zeros(m + 1)
    c[-1] = -1.0
    A_ub = np.hstack([A, np.ones((A.shape[0], 1))])
    res = linprog(c, A_ub=A_ub, b_ub=b, bounds=[(None, None)] * m + [(None, _DEPTH_CAP)], method="highs")
    if res.status != 0:
        return -np.inf, np.full(m, np.nan)
    return float(res.x[-1]), res.x[:m]


def bounding_box_lp(A, b):
    m = A.shape[1]
    lo = np.empty(m)
    hi = np.empty(m)
    for i in range(m):
        e = np.zeros(m)
        e[i] = 1.0
        for sign, store in ((1.0, lo), (-1.0, hi)):
            res = linprog(sign * e, A_ub=A, b_ub=b, bounds=[(None, None)] * m, method="highs")
            if res.status != 0:
                raise ValueError("bounding box of an empty or unbounded polytope")
            store[i] = sign * res.fun
    return lo, hi


def intersection_depth(p, q):
    """Depth of ``p ∩ q``; positive iff the intersection has interior."""
    return depth_lp(np.vstack([p.A, q.A]), np.concatenate([p.b, q.b]))[0]


def nnls(E, f, max_iter=None):
    """Lawson-Hanson active-set solution of ``min ||E u - f||`` with ``u >= 0``.

    Written out here because small, nearly degenerate instances from the
    least-distance reduction need the exact active-set result.
    """
    m, n = E.shape
    tol = 10 * np.finfo(float).eps * np.linalg.norm(E, 1) * max(m, n)
    max_iter = 30 * n + 100 if max_iter is None else max_iter
    passive = np.zeros(n, dtype=bool)
    # columns that just bounced straight back out; skipped until the iterate moves
    blocked = np.zeros(n, dtype=bool)
    u = np.zeros(n)
    w = E.T @ f
    it = 0
    while not passive.all() and it < max_iter:
        cand = np.where(passive | blocked, -np.inf, w)
        j = int(np.argmax(cand))
        if cand[j] <= tol:
            break
        passive[j] = True
        first = True
        while it < max_iter:
            it += 1
            s = np.zeros(n)
            s[passive] = np.linalg.lstsq(E[:, passive], f, rcond=None)[0]
            if np.all(s[passive] > 0):
                u = s
                blocked[:] = False
                break
            if first and s[j] <= 0:
                # degenerate entry: the new column cannot improve the fit
                passive[j] = False
                blocked[j] = True
                break
            first = False
            # step back to the boundary and release variables that hit zero
            mask = passive & (s <= 0)
            alpha = np.min(u[mask] / (u[mask] - s[mask]))
            u = u + alpha * (s - u)
            passive &= u > tol
            u[~passive] = 0.0
        w = E.T @ (f - E @ u)
    return u


def least_distance(G, h):
    """``argmin ||x|| s.t. G x >= h`` by the Lawson-Hanson NNLS reduction.

    Returns ``None`` when the constraints are infeasible.
    """
    n = G.shape[1]
    E = np.vstack([G.T, h[None, :]])
    f = np.zeros(n + 1)
    f[-1] = 1.0
    u = nnls(E, f)
    r = E @ u - f
    if np.linalg.norm(r) < 1e-12 or abs(r[-1]) < 1e-14:
        return None
    return -r[:n] / r[-1]


def closest_point(poly, y, metric=None):
    """Point of ``poly`` closest to ``y`` in the norm ``||metric^-1 (x - y)||``.

    ``metric`` is a square matrix (``None`` means Euclidean).
    """
    y = np.asarray(y, dtype=float)
    M = np.eye(len(y)) if metric is None else np.asarray(metric, dtype=float)
    # x = y + M z ; A (y + M z) <= b  <=>  (-A M) z >= A y - b
    G = -poly.A @ M
    h = poly.A @ y - poly.b
    z = least_distance(G, h)
    if z is None:
        return None
    return y + M @ z


def point_set_distance(poly, y):
    x = closest_point(poly, y)
    return np.inf if x is None else float(np.linalg.norm(x - y))
