"""Convex region inflation (IRIS), batched seeding and volume-ordered pruning."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .geometry import Ellipsoid, Polytope, closest_point, intersection_depth

log = logging.getLogger(__name__)


class SeedError(ValueError):
    """Seed lies inside an obstacle or outside the domain."""


class EllipsoidSolverError(RuntimeError):
    def __init__(self, msg, iterate=None):
        super().__init__(msg)
        self.iterate = iterate


# ------------------------------------------------------------------ MVIE
def _sym_basis(m):
    """Basis of symmetric matrices: E_ii and E_ij + E_ji."""
    basis = []
    for i in range(m):
        for j in range(i, m):
            e = np.zeros((m, m))
            e[i, j] = 1.0
            e[j, i] = 1.0
            basis.append(e)
    return np.array(basis)


def max_volume_inscribed_ellipsoid(A, b, x0=None, gap_tol=1e-8, max_newton=60):
    """Largest ellipsoid ``{C u + d : ||u|| <= 1}`` inside ``{x : A x <= b}``.

    Log-barrier interior-point method on ``max log det C`` subject to
    ``||C a_i|| + a_i . d <= b_i``. Stops when the duality-gap bound
    ``n_constraints / t`` falls below ``gap_tol``. ``x0`` is a strictly
    interior starting centre; the Chebyshev centre is used when omitted.

    Returns ``(Ellipsoid, info)``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    nc, m = A.shape
    E = _sym_basis(m)
    p = len(E)
    # Ba[i] = matrix whose columns are E_k a_i, so C a_i = Ba[i] @ c
    Ba = np.einsum("kij,nj->nik", E, A)

    if x0 is None:
        from .geometry import depth_lp

        r, x0 = depth_lp(A, b)
    else:
        r = float(np.min(b - A @ x0))
    if not r > 0:
        raise EllipsoidSolverError("polytope has no interior")
    c = np.zeros(p)
    k = 0
    for i in range(m):
        for j in range(i, m):
            if i == j:
                c[k] = 0.5 * r
            k += 1
    x = np.concatenate([c, np.asarray(x0, dtype=float)])

    # C = sum_k c_k E_k, so diagonal entries are the diagonal coordinates
    def cmat(x):
        return np.einsum("k,kij->ij", x[:p], E)

    def slacks(x):
        C = cmat(x)
        w = np.einsum("nik,k->ni", Ba, x[:p])
        nrm = np.linalg.norm(w, axis=1)
        return b - A @ x[p:] - nrm, w, nrm, C

    def feasible(x):
        s, _, _, C = slacks(x)
        if np.any(s <= 0):
            return False
        try:
            np.linalg.cholesky(C)
        except np.linalg.LinAlgError:
            return False
        return True

    def barrier(x, t):
        s, _, _, C = slacks(x)
        sign, logdet = np.linalg.slogdet(C)
        return -t * logdet - np.sum(np.log(s))

    t = 1.0
    mu = 50.0
    newton_total = 0
    while True:
        for _ in range(max_newton):
            s, w, nrm, C = slacks(x)
            Ci = np.linalg.inv(C)
            # objective -t log det C
            CiE = np.einsum("ij,kjl->kil", Ci, E)
            g0 = -np.einsum("kii->k", CiE)
            H0 = np.einsum("kij,lji->kl", CiE, CiE)
            # slack gradients: ds/dc = -Ba^T w / ||w||, ds/dd = -a
            nrm_safe = np.maximum(nrm, 1e-300)
            u = w / nrm_safe[:, None]
            gc = -np.einsum("nik,ni->nk", Ba, u)
            gs = np.hstack([gc, -A])  # (nc, p+m)
            # second derivative of ||w|| wrt c: Ba^T (I - u u^T) Ba / ||w||
            proj = np.eye(m)[None] - u[:, :, None] * u[:, None, :]
            Hn = np.einsum("nik,nij,njl->nkl", Ba, proj, Ba) / nrm_safe[:, None, None]
            grad = np.zeros(p + m)
            grad[:p] = t * g0
            grad += -(gs / s[:, None]).sum(axis=0)
            H = np.zeros((p + m, p + m))
            H[:p, :p] = t * H0
            H += np.einsum("ni,nj->ij", gs / s[:, None], gs / s[:, None])
            H[:p, :p] += (Hn / s[:, None, None]).sum(axis=0)
            try:
                step = -np.linalg.solve(H, grad)
            except np.linalg.LinAlgError:
                step = -np.linalg.lstsq(H, grad, rcond=None)[0]
            dec = float(-grad @ step)
            newton_total += 1
            if dec / 2 <= 1e-10:
                break
            f0 = barrier(x, t)
            alpha = 1.0
            while alpha > 1e-12:
                xn = x + alpha * step
                if feasible(xn) and barrier(xn, t) <= f0 - 0.25 * alpha * dec:
                    break
                alpha *= 0.5
            else:
                break
            x = xn
        if nc / t < gap_tol:
            break
        t *= mu
        if t > 1e16:
            raise EllipsoidSolverError("barrier parameter diverged", iterate=x.copy())
    C = cmat(x)
    try:
        ell = Ellipsoid(C, x[p:])
    except np.linalg.LinAlgError as exc:
        raise EllipsoidSolverError("ellipsoid shape lost definiteness", iterate=x.copy()) from exc
    return ell, {"newton_steps": newton_total, "gap": nc / t}


# ------------------------------------------------------------------ IRIS
class IrisRegion(NamedTuple):
    polytope: Polytope
    ellipsoid: Ellipsoid
    seed: np.ndarray


def _excluded(obstacle, a, b, gap):
    """True when the whole obstacle lies in ``{x : a . x >= b + gap}``."""
    if obstacle.points is not None and len(obstacle.points):
        return bool(np.all(obstacle.points @ a >= b + gap))
    return -obstacle.support(-a) >= b + gap


def separating_hyperplanes(ellipsoid, obstacles, margin=1e-5):
    """Tangent planes that cut every obstacle away from ``ellipsoid``.

    Obstacles are visited in order of increasing ellipsoidal distance; one
    already behind an accepted plane gets none of its own. Each plane touches
    the closest obstacle point, shifted ``margin`` towards the ellipsoid.
    """
    C, d = ellipsoid.C, ellipsoid.d
    Cinv = np.linalg.inv(C)
    found = []
    for i, obs in enumerate(obstacles):
        x = closest_point(obs, d, metric=C)
        if x is None:
            continue
        dist = float(np.linalg.norm(Cinv @ (x - d)))
        found.append((dist, i, x))
    found.sort(key=lambda t: (t[0], t[1]))
    rows, rhs = [], []
    for dist, i, x in found:
        obs = obstacles[i]
        # an obstacle merely touching an accepted plane still needs its own
        if any(_excluded(obs, a, bb, margin) for a, bb in zip(rows, rhs)):
            continue
        if dist <= 1e-12:
            raise SeedError("ellipsoid centre lies inside an obstacle")
        a = Cinv.T @ Cinv @ (x - d)
        a = a / np.linalg.norm(a)
        rows.append(a)
        rhs.append(float(a @ x) - margin)
    if not rows:
        return np.zeros((0, len(d))), np.zeros(0)
    return np.array(rows), np.array(rhs)


def iris(seed, obstacles, domain, n_iter=2, initial_radius=1e-3, margin=1e-5, growth_tol=2e-2):
    """Grow an obstacle-free polytope around ``seed``.

    Alternates separating-plane construction and maximum-volume inscribed
    ellipsoid fits ``n_iter`` times (or until the ellipsoid volume grows by
    less than ``growth_tol`` relative). If a later iteration would cut off the
    seed, the previous polytope is returned, so the result always contains it.

    Returns an :class:`IrisRegion`.
    """
    seed = np.asarray(seed, dtype=float)
    if not np.all(domain.b - domain.A @ seed > 0):
        raise SeedError(f"seed {seed.tolist()} is not strictly inside the domain")
    for obs in obstacles:
        if obs.contains(seed):
            raise SeedError(f"seed {seed.tolist()} lies inside an obstacle")
    return _iris(seed, relevant_obstacles(obstacles, domain), domain, n_iter, initial_radius, margin, growth_tol)


def relevant_obstacles(obstacles, domain):
    """Obstacles that touch or overlap ``domain``."""
    return [o for o in obstacles if intersection_depth(o, domain) > -1e-6]


def _iris(seed, obstacles, domain, n_iter, initial_radius, margin, growth_tol):
    slack = float(np.min(domain.b - domain.A @ seed))
    ell = Ellipsoid.ball(seed, min(initial_radius, 0.5 * slack))
    region = None
    for it in range(n_iter):
        A_new, b_new = separating_hyperplanes(ell, obstacles, margin)
        poly = Polytope(np.vstack([domain.A, A_new]), np.concatenate([domain.b, b_new]))
        bad = uncertified_obstacles(poly, obstacles)
        if bad:
            # safety net: plain Euclidean tangent planes at the closest points
            log.debug("iris: %d obstacles needed a fallback plane", len(bad))
            A_fb, b_fb = separating_hyperplanes(Ellipsoid.ball(ell.d, 1.0), [obstacles[i] for i in bad], margin)
            poly = Polytope(np.vstack([poly.A, A_fb]), np.concatenate([poly.b, b_fb]))
        if not poly.contains(seed, tol=0.0):
            if region is not None:
                log.debug("iris: iteration %d would exclude the seed; keeping previous region", it)
                break
            raise SeedError("seed is within the separation margin of an obstacle")
        new_ell, _ = max_volume_inscribed_ellipsoid(poly.A, poly.b, x0=_interior_start(poly, ell.d, seed))
        region = poly
        grown = new_ell.log_volume() - ell.log_volume()
        ell = new_ell
        if it > 0 and grown < np.log1p(growth_tol):
            break
    return IrisRegion(region, ell, seed)


def uncertified_obstacles(poly, obstacles, tol=1e-9):
    """Indices of obstacles whose intersection with ``poly`` is not certified empty.

    A facet of ``poly`` with the whole obstacle strictly behind it settles the
    pair; otherwise the depth LP of the intersection must be below ``-tol``.
    """
    bad = []
    for i, obs in enumerate(obstacles):
        if obs.points is not None and len(obs.points):
            if np.any(np.min(obs.points @ poly.A.T, axis=0) - poly.b > tol):
                continue
        if intersection_depth(poly, obs) >= -tol:
            bad.append(i)
    return bad


def _interior_start(poly, *candidates):
    for c in candidates:
        if np.all(poly.b - poly.A @ c > 1e-9):
            return c
    return None


@dataclass
class BatchResult:
    regions: list = field(default_factory=list)
    covered: list = field(default_factory=list)
    in_obstacle: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    def __len__(self):
        return len(self.regions)

    def __iter__(self):
        return iter(self.regions)


def iris_batch(seeds, obstacles, domain, n_iter=2, densities=None, **iris_kw):
    """Run :func:`iris` over ``seeds``, skipping seeds covered by earlier regions.

    Seeds are processed in descending ``densities`` order when given,
    otherwise in the given order. Seeds inside obstacles are skipped with a
    warning; numerical failures are recorded and do not stop the batch.
    """
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float)) if len(seeds) else np.zeros((0, domain.dim))
    order = np.arange(len(seeds))
    if densities is not None:
        order = np.argsort(-np.asarray(densities, dtype=float), kind="stable")
    iris_kw = {"initial_radius": 1e-3, "margin": 1e-5, "growth_tol": 2e-2, **iris_kw}
    live = relevant_obstacles(obstacles, domain)
    out = BatchResult()
    for i in order:
        s = seeds[i]
        if any(r.polytope.contains(s) for r in out.regions):
            out.covered.append(int(i))
            continue
        if any(o.contains(s) for o in live):
            log.debug("iris_batch: seed %d lies inside an obstacle; skipped", i)
            out.in_obstacle.append(int(i))
            continue
        try:
            out.regions.append(_iris(s, live, domain, n_iter, **iris_kw))
        except SeedError as exc:
            log.debug("iris_batch: seed %d rejected: %s", i, exc)
            out.in_obstacle.append(int(i))
        except (EllipsoidSolverError, np.linalg.LinAlgError) as exc:
            log.warning("iris_batch: seed %d failed: %s", i, exc)
            out.errors.append((int(i), str(exc)))
    if out.in_obstacle:
        log.warning("iris_batch: skipped %d of %d seeds inside obstacles", len(out.in_obstacle), len(seeds))
    return out


# ------------------------------------------------------------------ pruning
def _mc_samples(poly, n, seed):
    """Bounding-box draws for ``poly``; the stream depends only on the polytope and ``seed``."""
    rng = np.random.default_rng([seed, poly.fingerprint()])
    lo, hi = poly.bounding_box()
    pts = rng.uniform(lo, hi, size=(n, poly.dim))
    inside = pts[poly.contains(pts)]
    vol = float(np.prod(hi - lo)) * len(inside) / n
    return vol, inside


def prune_indices(regions, coverage_threshold=0.9, volume_samples=10_000, seed=0):
    """Indices of the regions kept by volume-ordered pruning, largest first.

    A region is dropped when it is contained in a kept region (exact LP check)
    or when at least ``coverage_threshold`` of its Monte-Carlo samples lie in
    one kept region of larger estimated volume.
    """
    if not 0 < coverage_threshold <= 1:
        raise ValueError("coverage_threshold must be in (0, 1]")
    est = [_mc_samples(r, volume_samples, seed) for r in regions]
    vols = np.array([v for v, _ in est])
    order = sorted(range(len(regions)), key=lambda i: (-vols[i], i))
    kept = []
    for i in order:
        pts = est[i][1]
        drop = False
        for j in kept:
            if len(pts):
                drop = regions[j].contains(pts).mean() >= coverage_threshold
            else:
                # too thin for the sample budget: fall back to the exact check
                drop = regions[j].contains_polytope(regions[i])
            if drop:
                break
        if not drop:
            kept.append(i)
    # near-equal volume estimates can order a subset before its superset
    final = []
    for pos, i in enumerate(kept):
        pts = est[i][1]
        contained = False
        for qos, j in enumerate(kept):
            if j == i:
                continue
            if len(pts) and not regions[j].contains(pts).all():
                continue
            if not regions[j].contains_polytope(regions[i]):
                continue
            # identical sets: the earlier one survives
            if qos > pos and regions[i].contains_polytope(regions[j]):
                continue
            contained = True
            break
        if not contained:
            final.append(i)
    return final, vols


def prune(regions, coverage_threshold=0.9, volume_samples=10_000, seed=0):
    """Volume-ordered pruning of candidate regions; returns the kept polytopes."""
    idx, _ = prune_indices(regions, coverage_threshold, volume_samples, seed)
    return [regions[i] for i in idx]
