"""Manipulator models, Jacobians, manipulability metrics and the induced density.

All functions accept a single joint vector ``(n,)`` or a batch ``(N, n)`` of
*active* joint values; locked joints are filled in from the model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from .cross import BlackBoxField

YOSHIKAWA = "yoshikawa"
RIEMANNIAN = "riemannian"


@dataclass(frozen=True)
class MetricConfig:
    kind: str = RIEMANNIAN
    gamma: float = 1.0
    sigma_radius: float = 1.0
    regularization_eps: float = 1e-9

    def __post_init__(self):
        if self.kind not in (YOSHIKAWA, RIEMANNIAN):
            raise ValueError(f"unknown metric kind {self.kind!r}")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.sigma_radius <= 0:
            raise ValueError("sigma_radius must be positive")
        if self.regularization_eps < 0:
            raise ValueError("regularization_eps must be non-negative")


@dataclass
class Manipulator:
    """Base class: joint bookkeeping shared by the planar and serial models."""

    joint_limits: np.ndarray
    locked_joints: list = field(default_factory=list)
    name: str = "arm"

    def __post_init__(self):
        self.joint_limits = np.asarray(self.joint_limits, dtype=float)
        self.locked_joints = [(int(j), float(v)) for j, v in self.locked_joints]
        locked = {j for j, _ in self.locked_joints}
        if any(j < 0 or j >= self.n_joints for j in locked):
            raise ValueError("locked joint index out of range")
        self.active = [j for j in range(self.n_joints) if j not in locked]
        lim = self.joint_limits[self.active]
        if np.any(lim[:, 0] >= lim[:, 1]):
            raise ValueError("joint limits need min < max for each active joint")

    @property
    def n_joints(self):
        raise NotImplementedError

    @property
    def n_active(self):
        return len(self.active)

    @property
    def active_limits(self):
        return self.joint_limits[self.active]

    def full_q(self, q):
        q = np.asarray(q, dtype=float)
        if q.shape[-1] != self.n_active:
            raise ValueError(f"expected {self.n_active} joint values, got {q.shape[-1]}")
        full = np.zeros(q.shape[:-1] + (self.n_joints,))
        full[..., self.active] = q
        for j, v in self.locked_joints:
            full[..., j] = v
        return full


@dataclass
class PlanarArm(Manipulator):
    link_lengths: tuple = (1.0, 1.0, 1.0)

    @property
    def n_joints(self):
        return len(self.link_lengths)

    @property
    def task_dim(self):
        return 2

    def fk(self, q):
        qf = self.full_q(q)
        ang = np.cumsum(qf, axis=-1)
        l = np.asarray(self.link_lengths)
        return np.stack([(l * np.cos(ang)).sum(-1), (l * np.sin(ang)).sum(-1)], axis=-1)

    def jacobian(self, q):
        qf = self.full_q(q)
        ang = np.cumsum(qf, axis=-1)
        l = np.asarray(self.link_lengths)
        # column j = sum over links i >= j of the link's derivative
        lx = np.cumsum((-l * np.sin(ang))[..., ::-1], axis=-1)[..., ::-1]
        ly = np.cumsum((l * np.cos(ang))[..., ::-1], axis=-1)[..., ::-1]
        jac = np.stack([lx, ly], axis=-2)
        return jac[..., self.active]


def _mdh(alpha, a, theta, d):
    """Modified (Craig) DH transforms, batched over ``theta``."""
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    t = np.zeros(theta.shape + (4, 4))
    t[..., 0, 0] = ct
    t[..., 0, 1] = -st
    t[..., 0, 3] = a
    t[..., 1, 0] = st * ca
    t[..., 1, 1] = ct * ca
    t[..., 1, 2] = -sa
    t[..., 1, 3] = -sa * d
    t[..., 2, 0] = st * sa
    t[..., 2, 1] = ct * sa
    t[..., 2, 2] = ca
    t[..., 2, 3] = ca * d
    t[..., 3, 3] = 1.0
    return t


@dataclass
class SerialArm(Manipulator):
    """Revolute serial chain in modified DH form; rows of ``dh`` are ``(a, d, alpha)``.

    ``flange`` is the final fixed ``(a, d, alpha)`` offset to the tool point.
    ``capsules`` lists ``(start_frame, end_frame, radius)`` link volumes and
    ``collision_pairs`` the capsule pairs checked for self-collision.
    """

    dh: tuple = ()
    flange: tuple = (0.0, 0.0, 0.0)
    capsules: tuple = ()
    collision_pairs: tuple = ()

    @property
    def n_joints(self):
        return len(self.dh)

    @property
    def task_dim(self):
        return 3

    def frames(self, q):
        """Homogeneous transforms of every joint frame plus the flange, ``(..., n+2, 4, 4)``."""
        qf = self.full_q(q)
        shape = qf.shape[:-1]
        out = [np.broadcast_to(np.eye(4), shape + (4, 4))]
        t = out[0]
        for j, (a, d, alpha) in enumerate(self.dh):
            t = t @ _mdh(alpha, a, qf[..., j], d)
            out.append(t)
        a, d, alpha = self.flange
        t = t @ _mdh(alpha, a, np.zeros(shape), d)
        out.append(t)
        return np.stack(out, axis=-3)

    def _chain(self):
        """Chain as merged constant transforms and ``("joint", j)`` rotations."""
        steps = []
        const = np.eye(4)
        for j, (a, d, alpha) in enumerate(self.dh):
            pre = _mdh(alpha, a, np.zeros(()), 0.0)
            post = np.eye(4)
            post[2, 3] = d
            if j in self.active:
                steps.append(("const", const @ pre))
                steps.append(("joint", j))
                const = post
            else:
                theta = dict(self.locked_joints)[j]
                const = const @ _mdh(alpha, a, np.asarray(theta), d)
        a, d, alpha = self.flange
        steps.append(("const", const @ _mdh(alpha, a, np.zeros(()), d)))
        return steps

    def _active_frames(self, q):
        """Rotation axes and origins of active joints plus the tool point."""
        qf = self.full_q(q)
        shape = qf.shape[:-1]
        rot = np.broadcast_to(np.eye(3), shape + (3, 3)).copy()
        pos = np.zeros(shape + (3,))
        axes, origins = [], []
        for kind, val in self._chain():
            if kind == "const":
                if np.allclose(val, np.eye(4)):
                    continue
                pos = pos + rot @ val[:3, 3]
                rot = rot @ val[:3, :3]
            else:
                c, s = np.cos(qf[..., val]), np.sin(qf[..., val])
                c0, c1 = rot[..., 0].copy(), rot[..., 1]
                rot[..., 0] = c[..., None] * c0 + s[..., None] * c1
                rot[..., 1] = -s[..., None] * c0 + c[..., None] * c1
                axes.append(rot[..., 2].copy())
                origins.append(pos.copy())
        return axes, origins, pos

    def fk(self, q):
        return self._active_frames(q)[2]

    def jacobian(self, q):
        axes, origins, pe = self._active_frames(q)
        cols = [np.cross(z, pe - p) for z, p in zip(axes, origins)]
        return np.stack(cols, axis=-1)

    def self_collision(self, q):
        """Boolean mask: any listed capsule pair overlaps."""
        if not self.collision_pairs:
            return np.zeros(np.asarray(q).shape[:-1], dtype=bool)
        pts = self.frames(q)[..., :3, 3]
        hit = np.zeros(pts.shape[:-2], dtype=bool)
        for i, j in self.collision_pairs:
            s0, s1, ri = self.capsules[i]
            t0, t1, rj = self.capsules[j]
            dist = segment_distance(pts[..., s0, :], pts[..., s1, :], pts[..., t0, :], pts[..., t1, :])
            hit |= dist < ri + rj
        return hit


def segment_distance(p0, p1, q0, q1):
    """Closest distance between segments ``p0p1`` and ``q0q1`` (batched)."""
    u = p1 - p0
    v = q1 - q0
    w = p0 - q0
    a = (u * u).sum(-1)
    b = (u * v).sum(-1)
    c = (v * v).sum(-1)
    d = (u * w).sum(-1)
    e = (v * w).sum(-1)
    den = a * c - b * b
    tiny = 1e-12
    s = np.where(den > tiny, (b * e - c * d) / np.where(den > tiny, den, 1.0), 0.0)
    s = np.clip(s, 0.0, 1.0)
    t = np.where(c > tiny, (b * s + e) / np.where(c > tiny, c, 1.0), 0.0)
    # re-clip t and recompute s for the clamped t
    t_cl = np.clip(t, 0.0, 1.0)
    s = np.where(a > tiny, np.clip((b * t_cl - d) / np.where(a > tiny, a, 1.0), 0.0, 1.0), 0.0)
    diff = w + u * s[..., None] - v * t_cl[..., None]
    return np.linalg.norm(diff, axis=-1)


# Franka Emika Panda, modified DH (a, d, alpha); tool point 0.107 m past joint 7.
PANDA_DH = (
    (0.0, 0.333, 0.0),
    (0.0, 0.0, -np.pi / 2),
    (0.0, 0.316, np.pi / 2),
    (0.0825, 0.0, np.pi / 2),
    (-0.0825, 0.384, -np.pi / 2),
    (0.0, 0.0, np.pi / 2),
    (0.088, 0.0, np.pi / 2),
)
PANDA_FLANGE = (0.0, 0.107, 0.0)
PANDA_LIMITS = (
    (-2.8973, 2.8973),
    (-1.7628, 1.7628),
    (-2.8973, 2.8973),
    (-3.0718, -0.0698),
    (-2.8973, 2.8973),
    (-0.0175, 3.7525),
    (-2.8973, 2.8973),
)
# frame indices: 0 base, j+1 joint j, 8 flange
PANDA_CAPSULES = (
    (0, 1, 0.08),  # base column
    (2, 3, 0.07),  # upper arm
    (4, 5, 0.07),  # forearm
    (6, 8, 0.06),  # wrist and hand
)
PANDA_COLLISION_PAIRS = ((0, 2), (0, 3), (1, 3))


def panda(locked=((4, 0.0), (5, 0.0), (6, 0.0))):
    """Panda arm with joints 5-7 locked (zero-based indices 4-6) by default."""
    return SerialArm(
        joint_limits=np.array(PANDA_LIMITS),
        locked_joints=list(locked),
        name="panda",
        dh=PANDA_DH,
        flange=PANDA_FLANGE,
        capsules=PANDA_CAPSULES,
        collision_pairs=PANDA_COLLISION_PAIRS,
    )


def planar_arm(link_lengths=(1.0, 1.0, 1.0), limits=None, locked=()):
    n = len(link_lengths)
    if limits is None:
        limits = [(-np.pi, np.pi)] * n
    return PlanarArm(
        joint_limits=np.asarray(limits, dtype=float),
        locked_joints=list(locked),
        name=f"planar{n}",
        link_lengths=tuple(float(x) for x in link_lengths),
    )


# ------------------------------------------------------------------- metrics
def forward_kinematics(m, q):
    return m.fk(q)


def jacobian(m, q):
    return m.jacobian(q)


def manipulability_matrix(m, q):
    jac = m.jacobian(q)
    return jac @ np.swapaxes(jac, -1, -2)


def yoshikawa(m, q):
    """``sqrt(det(J J^T))``; negative round-off in the determinant is clamped to 0."""
    det = np.linalg.det(manipulability_matrix(m, q))
    out = np.sqrt(np.maximum(det, 0.0))
    return float(out) if np.ndim(out) == 0 else out


def _eigvalsh_small(mat):
    """Eigenvalues of symmetric 2x2 blocks in closed form, otherwise LAPACK."""
    if mat.shape[-1] == 2:
        a, b, c = mat[..., 0, 0], mat[..., 0, 1], mat[..., 1, 1]
        mean = 0.5 * (a + c)
        rad = np.sqrt(0.25 * (a - c) ** 2 + b * b)
        return np.stack([mean - rad, mean + rad], axis=-1)
    return np.linalg.eigvalsh(mat)


def spd_log_distance(mat, sigma_radius=1.0, eps=1e-9):
    """``||log(S^-1/2 (M + eps I) S^-1/2)||_F^2`` with ``S = sigma_radius^2 I``."""
    k = mat.shape[-1]
    lam = _eigvalsh_small(mat + eps * np.eye(k))
    # guard against eigenvalues pushed to <= 0 by round-off when eps == 0
    lam = np.maximum(lam, np.finfo(float).tiny)
    return (np.log(lam / sigma_radius**2) ** 2).sum(-1)


def riemannian_index(m, q, cfg=MetricConfig()):
    xi = spd_log_distance(manipulability_matrix(m, q), cfg.sigma_radius, cfg.regularization_eps)
    return float(xi) if np.ndim(xi) == 0 else xi


def metric_cost(m, q, cfg):
    if cfg.kind == RIEMANNIAN:
        return riemannian_index(m, q, cfg)
    return yoshikawa(m, q)


def density_values(m, cfg, q):
    """Density at configurations ``q``.

    Riemannian: ``exp(-gamma * xi)``. Yoshikawa is a quality measure, so the
    map is ``1 - exp(-gamma * C_Y)`` (singular configurations get density 0).
    """
    c = metric_cost(m, q, cfg)
    if cfg.kind == RIEMANNIAN:
        return np.exp(-cfg.gamma * c)
    return -np.expm1(-cfg.gamma * c)


def density(m, cfg, grid, chunk_size=1 << 16):
    """The density as a :class:`BlackBoxField` on the virtual index set of ``grid``."""
    if grid.ndim != m.n_active:
        raise ValueError(f"grid has {grid.ndim} dims but the arm has {m.n_active} active joints")
    return BlackBoxField.on_grid(lambda q: density_values(m, cfg, q), grid, chunk_size)


# ------------------------------------------------------------ robot files
def robot_to_dict(m):
    base = {
        "schema_version": 1,
        "name": m.name,
        "joint_limits": m.joint_limits.tolist(),
        "locked_joints": [list(x) for x in m.locked_joints],
    }
    if isinstance(m, PlanarArm):
        base.update(kind="planar", link_lengths=list(m.link_lengths))
    else:
        base.update(
            kind="serial",
            dh=[list(r) for r in m.dh],
            flange=list(m.flange),
            capsules=[list(c) for c in m.capsules],
            collision_pairs=[list(p) for p in m.collision_pairs],
        )
    return base


def robot_from_dict(data):
    """Build a manipulator from a robot description mapping.

    Raises ``ValueError`` naming the offending field.
    """
    if data.get("schema_version", 1) != 1:
        raise ValueError(f"robot.schema_version: unsupported version {data.get('schema_version')}")
    kind = data.get("kind")
    if kind == "panda":
        locked = data.get("locked_joints", [[4, 0.0], [5, 0.0], [6, 0.0]])
        return panda(locked=[tuple(x) for x in locked])
    if kind == "planar":
        if "link_lengths" not in data:
            raise ValueError("robot.link_lengths: required for planar arms")
        return planar_arm(
            data["link_lengths"], data.get("joint_limits"), [tuple(x) for x in data.get("locked_joints", [])]
        )
    if kind == "serial":
        for key in ("dh", "joint_limits"):
            if key not in data:
                raise ValueError(f"robot.{key}: required for serial arms")
        return SerialArm(
            joint_limits=np.asarray(data["joint_limits"], dtype=float),
            locked_joints=[tuple(x) for x in data.get("locked_joints", [])],
            name=data.get("name", "serial"),
            dh=tuple(tuple(r) for r in data["dh"]),
            flange=tuple(data.get("flange", (0.0, 0.0, 0.0))),
            capsules=tuple(tuple(c) for c in data.get("capsules", ())),
            collision_pairs=tuple(tuple(p) for p in data.get("collision_pairs", ())),
        )
    raise ValueError(f"robot.kind: expected 'planar', 'serial' or 'panda', got {kind!r}")


def load_robot(path):
    with open(path) as fh:
        return robot_from_dict(yaml.safe_load(fh))
