"""Floating-base rigid-body dynamics on a kinematic tree.

Coordinate conventions used throughout the package:

* configuration ``q`` is a plain vector in ``R^{6+n}``:
  ``[base position (3), base ZYX Euler angles (roll, pitch, yaw), joint
  angles (n)]``.  Fixed-base models drop the first six entries.
* velocity ``qd`` is the literal time derivative of ``q``; in particular the
  orientation slots carry Euler-angle *rates*, not body angular velocity.
  This keeps the whole-body dynamics a genuine second-order ODE on a vector
  space, which the disturbance estimators rely on.
* world frame is z-up, gravity defaults to ``[0, 0, -9.81]``.

The Euler-rate parameterization degenerates at pitch = +-pi/2; every
operation that consumes a configuration raises :class:`GimbalLockError`
near that surface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

GIMBAL_MARGIN = 1e-3

FLOATING = "floating-base"
REVOLUTE = "revolute"
FIXED = "fixed"


class ModelError(ValueError):
    """Malformed model description or violated model invariant."""


class GimbalLockError(ValueError):
    """Base pitch within the guard band of +-pi/2."""


# ---------------------------------------------------------------------------
# rotation / Euler-rate utilities
# ---------------------------------------------------------------------------

def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_zyx_to_rot(e: np.ndarray) -> np.ndarray:
    """World-from-body rotation for ZYX Euler angles [roll, pitch, yaw]."""
    return rot_z(e[2]) @ rot_y(e[1]) @ rot_x(e[0])


def euler_rate_matrix(e: np.ndarray) -> np.ndarray:
    """Matrix T with world angular velocity = T(e) @ euler_rates."""
    _, pitch, yaw = e
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    return np.array([
        [cy * cp, -sy, 0.0],
        [sy * cp, cy, 0.0],
        [-sp, 0.0, 1.0],
    ])


def euler_rate_matrix_dot(e: np.ndarray, ed: np.ndarray) -> np.ndarray:
    """Time derivative of :func:`euler_rate_matrix` along euler rates ed."""
    _, pitch, yaw = e
    dp, dy = ed[1], ed[2]
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    return np.array([
        [-sy * dy * cp - cy * sp * dp, -cy * dy, 0.0],
        [cy * dy * cp - sy * sp * dp, -sy * dy, 0.0],
        [-cp * dp, 0.0, 0.0],
    ])


def rodrigues(axis: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    k = skew(axis)
    return np.eye(3) + s * k + (1.0 - c) * (k @ k)


def skew(v: np.ndarray) -> np.ndarray:
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def check_gimbal(q: np.ndarray, floating: bool) -> None:
    if floating and abs(q[4]) >= math.pi / 2.0 - GIMBAL_MARGIN:
        raise GimbalLockError(
            f"base pitch {q[4]:.4f} rad is within {GIMBAL_MARGIN} of +-pi/2")


# ---------------------------------------------------------------------------
# model description
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Body:
    name: str
    mass: float
    com: np.ndarray          # CoM offset in body frame, m
    inertia: np.ndarray      # 3x3 rotational inertia about CoM, body frame


@dataclass(frozen=True)
class Joint:
    parent: int              # parent body index, -1 for the world
    jtype: str               # FLOATING | REVOLUTE | FIXED
    origin: np.ndarray       # joint position in parent frame, m
    axis: np.ndarray | None  # revolute axis, child frame unit vector
    limits: tuple[float, float]
    torque_limit: float


@dataclass(frozen=True)
class RobotModel:
    """Validated kinematic tree; immutable and shareable across threads."""

    bodies: tuple[Body, ...]
    joints: tuple[Joint, ...]
    feet: tuple[tuple[int, np.ndarray], ...]   # (body index, offset in body frame)
    gravity: np.ndarray
    name: str = "model"

    @property
    def floating(self) -> bool:
        return self.joints[0].jtype == FLOATING

    @property
    def n(self) -> int:
        """Number of actuated joints."""
        return sum(1 for j in self.joints if j.jtype == REVOLUTE)

    @property
    def nv(self) -> int:
        """Dimension of the configuration / velocity vectors."""
        return (6 if self.floating else 0) + self.n

    @property
    def n_feet(self) -> int:
        return len(self.feet)

    @property
    def total_mass(self) -> float:
        return float(sum(b.mass for b in self.bodies))

    def joint_column(self, body_index: int) -> int:
        """Velocity-vector column of the revolute joint carrying a body."""
        base = 6 if self.floating else 0
        col = base
        for i in range(1, body_index):
            if self.joints[i].jtype == REVOLUTE:
                col += 1
        return col

    def torque_limits(self) -> tuple[np.ndarray, np.ndarray]:
        lims = np.array([j.torque_limit for j in self.joints if j.jtype == REVOLUTE])
        return -lims, lims

    def validate(self) -> None:
        if not self.bodies:
            raise ModelError("model has no bodies")
        if len(self.bodies) != len(self.joints):
            raise ModelError("every body needs exactly one joint")
        if self.joints[0].jtype not in (FLOATING, FIXED):
            raise ModelError("root joint must be floating-base or fixed")
        if self.joints[0].parent != -1:
            raise ModelError("root joint parent must be the world")
        for i, j in enumerate(self.joints[1:], start=1):
            if j.jtype != REVOLUTE:
                raise ModelError(
                    f"joint of body '{self.bodies[i].name}' must be revolute")
            if not (0 <= j.parent < i):
                raise ModelError(
                    f"parent of body '{self.bodies[i].name}' must precede it")
            if j.axis is None or abs(np.linalg.norm(j.axis) - 1.0) > 1e-9:
                raise ModelError(
                    f"axis of body '{self.bodies[i].name}' must be a unit vector")
        for b in self.bodies:
            if not b.mass > 0.0:
                raise ModelError(f"mass must be positive (body '{b.name}')")
            if np.linalg.norm(b.inertia - b.inertia.T, np.inf) > 1e-12:
                raise ModelError(f"inertia must be symmetric (body '{b.name}')")
            if np.min(np.linalg.eigvalsh(b.inertia)) <= 0.0:
                raise ModelError(f"inertia must be positive definite (body '{b.name}')")
        for bi, _ in self.feet:
            if not (0 <= bi < len(self.bodies)):
                raise ModelError(f"foot references missing body index {bi}")
        if self.gravity.shape != (3,):
            raise ModelError("gravity must be a 3-vector")


MODEL_HEADER = "legged-drc-model v1"


def build_model(description: str, name: str = "model") -> RobotModel:
    """Parse the ``legged-drc-model v1`` text format into a RobotModel.

    Grammar (one directive per line, '#' comments, indentation ignored)::

        legged-drc-model v1
        gravity gx gy gz                  # optional, default 0 0 -9.81
        body <name>
          parent <body name | world>
          joint  floating-base | revolute | fixed
          origin x y z                    # joint position in parent frame
          axis   x y z                    # revolute only
          limits lo hi                    # revolute, rad (optional)
          torque tmax                     # revolute, N*m  (optional)
          mass   m
          com    x y z
          inertia ixx iyy izz ixy ixz iyz
        foot <body name> x y z
    """
    lines = [ln.split("#", 1)[0].strip() for ln in description.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines or lines[0] != MODEL_HEADER:
        raise ModelError(f"first line must be '{MODEL_HEADER}'")

    gravity = np.array([0.0, 0.0, -9.81])
    names: list[str] = []
    bodies: list[Body] = []
    joints: list[Joint] = []
    feet: list[tuple[int, np.ndarray]] = []
    cur: dict | None = None

    def flush() -> None:
        nonlocal cur
        if cur is None:
            return
        for key in ("mass", "com", "inertia", "joint", "parent"):
            if key not in cur:
                raise ModelError(f"body '{cur['name']}' is missing field '{key}'")
        ine = cur["inertia"]
        imat = np.array([
            [ine[0], ine[3], ine[4]],
            [ine[3], ine[1], ine[5]],
            [ine[4], ine[5], ine[2]],
        ])
        bodies.append(Body(cur["name"], cur["mass"], np.asarray(cur["com"]), imat))
        jt = cur["joint"]
        if cur["parent"] == "world":
            parent = -1
        else:
            if cur["parent"] not in names:
                raise ModelError(
                    f"body '{cur['name']}' references unknown parent '{cur['parent']}'")
            parent = names.index(cur["parent"])
        axis = cur.get("axis")
        if jt == REVOLUTE and axis is None:
            raise ModelError(f"revolute body '{cur['name']}' is missing field 'axis'")
        joints.append(Joint(
            parent=parent,
            jtype=jt,
            origin=np.asarray(cur.get("origin", (0.0, 0.0, 0.0))),
            axis=None if axis is None else np.asarray(axis),
            limits=tuple(cur.get("limits", (-2.0 * math.pi, 2.0 * math.pi))),
            torque_limit=float(cur.get("torque", np.inf)),
        ))
        names.append(cur["name"])
        cur = None

    for ln in lines[1:]:
        tok = ln.split()
        key, args = tok[0], tok[1:]
        if key == "gravity":
            gravity = np.array([float(a) for a in args])
        elif key == "body":
            flush()
            cur = {"name": args[0]}
        elif key == "foot":
            flush()
            if args[0] not in names:
                raise ModelError(f"foot references unknown body '{args[0]}'")
            feet.append((names.index(args[0]), np.array([float(a) for a in args[1:4]])))
        elif cur is not None and key in ("parent", "joint"):
            cur[key] = args[0]
        elif cur is not None and key in ("origin", "com", "axis", "inertia", "limits"):
            cur[key] = tuple(float(a) for a in args)
        elif cur is not None and key in ("mass", "torque"):
            cur[key] = float(args[0])
        else:
            raise ModelError(f"unknown directive '{key}'")
    flush()

    model = RobotModel(tuple(bodies), tuple(joints), tuple(feet), gravity, name)
    model.validate()
    return model


# ---------------------------------------------------------------------------
# state containers
# ---------------------------------------------------------------------------

@dataclass
class GeneralizedState:
    """Configuration and its time derivative; validates on construction."""

    q: np.ndarray
    qd: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.qd = np.asarray(self.qd, dtype=float)
        if self.q.shape != self.qd.shape:
            raise ValueError("q and qd must have the same shape")
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.qd))):
            raise ValueError("state entries must be finite")


@dataclass
class CentroidalState:
    """Linear momentum, angular momentum about the CoM, configuration."""

    h: np.ndarray
    L: np.ndarray
    q: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.h, self.L, self.q])

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "CentroidalState":
        x = np.asarray(x, dtype=float)
        return cls(x[0:3].copy(), x[3:6].copy(), x[6:].copy())


@dataclass
class CentroidalInput:
    """Stacked contact forces (zero blocks for swing feet) and joint rates."""

    F: np.ndarray       # 3 * n_feet
    qdj: np.ndarray     # n

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.F, self.qdj])

    @classmethod
    def from_vector(cls, u: np.ndarray, n_feet: int) -> "CentroidalInput":
        u = np.asarray(u, dtype=float)
        return cls(u[: 3 * n_feet].copy(), u[3 * n_feet:].copy())

    def validate_swing_zero(self, stance: np.ndarray) -> None:
        for f in range(len(stance)):
            if not stance[f] and np.any(self.F[3 * f: 3 * f + 3] != 0.0):
                raise ValueError(f"force block of swing foot {f} must be zero")


# ---------------------------------------------------------------------------
# kinematics cache
# ---------------------------------------------------------------------------

class Kinematics:
    """Forward kinematics plus per-body world Jacobians for one (model, q)."""

    def __init__(self, model: RobotModel, q: np.ndarray):
        q = np.asarray(q, dtype=float)
        if q.shape != (model.nv,):
            raise ValueError(f"q must have dimension {model.nv}, got {q.shape}")
        check_gimbal(q, model.floating)
        self.model = model
        self.q = q
        nb = len(model.bodies)
        self.R = np.empty((nb, 3, 3))
        self.p = np.empty((nb, 3))       # joint (body frame) origins, world
        self.com = np.empty((nb, 3))     # body CoM positions, world
        self.axis_w = np.zeros((nb, 3))  # revolute joint axes, world
        self.iw = np.empty((nb, 3, 3))   # rotational inertias about CoM, world

        base = 6 if model.floating else 0
        if model.floating:
            self.T = euler_rate_matrix(q[3:6])
            self.R[0] = euler_zyx_to_rot(q[3:6])
            self.p[0] = q[0:3]
        else:
            self.T = None
            self.R[0] = np.eye(3)
            self.p[0] = model.joints[0].origin

        col = base
        self.col_of = np.full(nb, -1, dtype=int)
        for i in range(1, nb):
            j = model.joints[i]
            Rp, pp = self.R[j.parent], self.p[j.parent]
            self.R[i] = Rp @ rodrigues(j.axis, q[col])
            self.p[i] = pp + Rp @ j.origin
            self.axis_w[i] = self.R[i] @ j.axis
            self.col_of[i] = col
            col += 1

        for i, b in enumerate(model.bodies):
            self.com[i] = self.p[i] + self.R[i] @ b.com
            self.iw[i] = self.R[i] @ b.inertia @ self.R[i].T

        masses = np.array([b.mass for b in model.bodies])
        self.total_mass = float(masses.sum())
        self.com_total = masses @ self.com / self.total_mass

        # ancestor joint lists (revolute only), root-first
        self.ancestors: list[list[int]] = [[] for _ in range(nb)]
        for i in range(1, nb):
            self.ancestors[i] = self.ancestors[model.joints[i].parent] + [i]

    # -- jacobians ---------------------------------------------------------

    def point_jacobian(self, body: int, point_w: np.ndarray) -> np.ndarray:
        """Linear velocity Jacobian of a world point fixed in `body`."""
        m = self.model
        J = np.zeros((3, m.nv))
        if m.floating:
            J[:, 0:3] = np.eye(3)
            J[:, 3:6] = -skew(point_w - self.p[0]) @ self.T
        for bi in self.ancestors[body]:
            J[:, self.col_of[bi]] = np.cross(self.axis_w[bi], point_w - self.p[bi])
        return J

    def angular_jacobian(self, body: int) -> np.ndarray:
        m = self.model
        J = np.zeros((3, m.nv))
        if m.floating:
            J[:, 3:6] = self.T
        for bi in self.ancestors[body]:
            J[:, self.col_of[bi]] = self.axis_w[bi]
        return J

    def foot_position(self, foot: int) -> np.ndarray:
        bi, off = self.model.feet[foot]
        return self.p[bi] + self.R[bi] @ off

    def foot_jacobian(self, foot: int) -> np.ndarray:
        bi, _ = self.model.feet[foot]
        return self.point_jacobian(bi, self.foot_position(foot))

    # -- velocity propagation (independent of the Jacobians) ---------------

    def body_velocities(self, qd: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Recursively propagated (omega_i, v_com_i) for every body."""
        m = self.model
        nb = len(m.bodies)
        omega = np.zeros((nb, 3))
        v_origin = np.zeros((nb, 3))
        if m.floating:
            omega[0] = self.T @ qd[3:6]
            v_origin[0] = qd[0:3]
        for i in range(1, nb):
            par = m.joints[i].parent
            omega[i] = omega[par] + self.axis_w[i] * qd[self.col_of[i]]
            v_origin[i] = v_origin[par] + np.cross(omega[par], self.p[i] - self.p[par])
        v_com = v_origin + np.cross(omega, self.com - self.p)
        return omega, v_com


# ---------------------------------------------------------------------------
# dynamics operations
# ---------------------------------------------------------------------------

def _base_subspace(kin: Kinematics) -> np.ndarray:
    """World-origin spatial motion subspace [omega; v_O] of the base joint."""
    S = np.zeros((6, 6))
    S[0:3, 3:6] = kin.T
    S[3:6, 0:3] = np.eye(3)
    S[3:6, 3:6] = skew(kin.p[0]) @ kin.T
    return S


def _spatial_inertia_origin(mass: float, com_w: np.ndarray, iw: np.ndarray) -> np.ndarray:
    """6x6 spatial inertia about the world origin for v = [omega; v_O]."""
    cx = skew(com_w)
    I = np.empty((6, 6))
    I[0:3, 0:3] = iw + mass * (cx @ cx.T)
    I[0:3, 3:6] = mass * cx
    I[3:6, 0:3] = mass * cx.T
    I[3:6, 3:6] = mass * np.eye(3)
    return I


def mass_matrix(model: RobotModel, q: np.ndarray) -> np.ndarray:
    """Joint-space inertia matrix via the composite-rigid-body algorithm."""
    kin = Kinematics(model, q)
    nb = len(model.bodies)
    nv = model.nv

    Ic = [_spatial_inertia_origin(model.bodies[i].mass, kin.com[i], kin.iw[i])
          for i in range(nb)]
    for i in range(nb - 1, 0, -1):
        Ic[model.joints[i].parent] += Ic[i]

    # per-body motion subspace columns in the world-origin frame
    def subspace(i: int) -> tuple[np.ndarray, np.ndarray]:
        if i == 0:
            if model.floating:
                return _base_subspace(kin), np.arange(6)
            return np.zeros((6, 0)), np.arange(0)
        a, o = kin.axis_w[i], kin.p[i]
        return np.concatenate([a, np.cross(o, a)]).reshape(6, 1), \
            np.array([kin.col_of[i]])

    D = np.zeros((nv, nv))
    for i in range(nb - 1, -1, -1):
        Si, cols_i = subspace(i)
        if Si.shape[1] == 0:
            continue
        F = Ic[i] @ Si
        D[np.ix_(cols_i, cols_i)] = Si.T @ F
        j = model.joints[i].parent
        while j >= 0:
            Sj, cols_j = subspace(j)
            if Sj.shape[1]:
                block = F.T @ Sj
                D[np.ix_(cols_i, cols_j)] = block
                D[np.ix_(cols_j, cols_i)] = block.T
            j = model.joints[j].parent
    return D


def inverse_dynamics(model: RobotModel, q: np.ndarray, qd: np.ndarray,
                     qdd: np.ndarray, gravity: np.ndarray | None = None) -> np.ndarray:
    """Generalized forces D qdd + C qd + G via recursive Newton-Euler."""
    kin = Kinematics(model, q)
    g = model.gravity if gravity is None else np.asarray(gravity, dtype=float)
    nb = len(model.bodies)

    omega = np.zeros((nb, 3))
    domega = np.zeros((nb, 3))
    a_origin = np.zeros((nb, 3))
    if model.floating:
        e, ed, edd = q[3:6], qd[3:6], qdd[3:6]
        omega[0] = kin.T @ ed
        domega[0] = kin.T @ edd + euler_rate_matrix_dot(e, ed) @ ed
        a_origin[0] = qdd[0:3]
    for i in range(1, nb):
        par = model.joints[i].parent
        col = kin.col_of[i]
        aw = kin.axis_w[i]
        omega[i] = omega[par] + aw * qd[col]
        domega[i] = domega[par] + aw * qdd[col] + np.cross(omega[par], aw) * qd[col]
        r = kin.p[i] - kin.p[par]
        a_origin[i] = a_origin[par] + np.cross(domega[par], r) \
            + np.cross(omega[par], np.cross(omega[par], r))

    # net inertial wrench per body, moment taken about the world origin
    force = np.empty((nb, 3))
    moment_o = np.empty((nb, 3))
    for i, b in enumerate(model.bodies):
        rc = kin.com[i] - kin.p[i]
        a_com = a_origin[i] + np.cross(domega[i], rc) \
            + np.cross(omega[i], np.cross(omega[i], rc))
        force[i] = b.mass * (a_com - g)
        n_com = kin.iw[i] @ domega[i] + np.cross(omega[i], kin.iw[i] @ omega[i])
        moment_o[i] = n_com + np.cross(kin.com[i], force[i])

    # subtree wrench transmitted through each joint, leaf-to-root
    sub_f = force.copy()
    sub_n = moment_o.copy()
    for i in range(nb - 1, 0, -1):
        par = model.joints[i].parent
        sub_f[par] += sub_f[i]
        sub_n[par] += sub_n[i]

    tau = np.zeros(model.nv)
    if model.floating:
        S = _base_subspace(kin)
        tau[0:6] = S.T @ np.concatenate([sub_n[0], sub_f[0]])
    for i in range(1, nb):
        a, o = kin.axis_w[i], kin.p[i]
        tau[kin.col_of[i]] = a @ sub_n[i] + np.cross(o, a) @ sub_f[i]
    return tau


def bias_forces(model: RobotModel, q: np.ndarray, qd: np.ndarray) -> np.ndarray:
    """Coriolis/centrifugal plus gravity generalized forces, C qd + G."""
    return inverse_dynamics(model, q, qd, np.zeros(model.nv))


def contact_jacobian(model: RobotModel, q: np.ndarray,
                     stance: np.ndarray | list[bool]) -> np.ndarray:
    """Stacked world Jacobians of the feet flagged as stance, rows by foot index."""
    kin = Kinematics(model, q)
    stance = np.asarray(stance, dtype=bool)
    rows = [kin.foot_jacobian(f) for f in range(model.n_feet) if stance[f]]
    if not rows:
        return np.zeros((0, model.nv))
    return np.vstack(rows)


def foot_positions(model: RobotModel, q: np.ndarray) -> np.ndarray:
    kin = Kinematics(model, q)
    return np.array([kin.foot_position(f) for f in range(model.n_feet)])


def foot_velocities(model: RobotModel, q: np.ndarray, qd: np.ndarray) -> np.ndarray:
    kin = Kinematics(model, q)
    return np.array([kin.foot_jacobian(f) @ qd for f in range(model.n_feet)])


def com_position(model: RobotModel, q: np.ndarray) -> np.ndarray:
    return Kinematics(model, q).com_total


def centroidal_momentum_matrix(model: RobotModel, q: np.ndarray) -> np.ndarray:
    """6 x nv matrix A with [h; L] = A(q) qd, L about the whole-robot CoM."""
    kin = Kinematics(model, q)
    nv = model.nv
    A = np.zeros((6, nv))
    for i, b in enumerate(model.bodies):
        Jw = kin.angular_jacobian(i)
        Jv = kin.point_jacobian(i, kin.com[i])
        A[0:3] += b.mass * Jv
        A[3:6] += kin.iw[i] @ Jw + b.mass * skew(kin.com[i] - kin.com_total) @ Jv
    return A


def momentum_rate(model: RobotModel, q: np.ndarray, qd: np.ndarray,
                  qdd: np.ndarray, fd_step: float = 1e-6) -> np.ndarray:
    """[h_dot; L_dot] = A qdd + Adot qd, with Adot qd by directional FD."""
    A = centroidal_momentum_matrix(model, q)
    A_shift = centroidal_momentum_matrix(model, q + fd_step * qd)
    adot_qd = (A_shift - A) @ qd / fd_step
    return A @ qdd + adot_qd


def base_velocity_from_momentum(model: RobotModel, q: np.ndarray,
                                h: np.ndarray, L: np.ndarray,
                                qdj: np.ndarray) -> np.ndarray:
    """Solve the base-block partition A_b qd_b = [h; L] - A_j qd_j."""
    A = centroidal_momentum_matrix(model, q)
    Ab, Aj = A[:, :6], A[:, 6:]
    rhs = np.concatenate([h, L]) - Aj @ qdj
    try:
        qd_b = np.linalg.solve(Ab, rhs)
    except np.linalg.LinAlgError as exc:
        raise ValueError("base momentum mapping A_b is singular") from exc
    if not np.all(np.isfinite(qd_b)):
        raise ValueError("base momentum mapping A_b is singular")
    return qd_b


def centroidal_rhs(model: RobotModel, x_c: CentroidalState | np.ndarray,
                   u_c: CentroidalInput | np.ndarray,
                   stance: np.ndarray | list[bool]) -> np.ndarray:
    """Centroidal-dynamics state derivative [h_dot; L_dot; qd]."""
    if not isinstance(x_c, CentroidalState):
        x_c = CentroidalState.from_vector(x_c)
    if not isinstance(u_c, CentroidalInput):
        u_c = CentroidalInput.from_vector(u_c, model.n_feet)
    stance = np.asarray(stance, dtype=bool)

    kin = Kinematics(model, x_c.q)
    c = kin.com_total
    h_dot = model.total_mass * model.gravity.copy()
    L_dot = np.zeros(3)
    for f in range(model.n_feet):
        if stance[f]:
            fi = u_c.F[3 * f: 3 * f + 3]
            h_dot += fi
            L_dot += np.cross(kin.foot_position(f) - c, fi)
    qd_b = base_velocity_from_momentum(model, x_c.q, x_c.h, x_c.L, u_c.qdj)
    return np.concatenate([h_dot, L_dot, qd_b, u_c.qdj])


def forward_dynamics(model: RobotModel, q: np.ndarray, qd: np.ndarray,
                     tau: np.ndarray, F: np.ndarray,
                     stance: np.ndarray | list[bool],
                     extra_force: np.ndarray | None = None) -> np.ndarray:
    """Solve D qdd = -bias + S^T tau + J^T F + extra for qdd.

    ``F`` stacks one 3-vector per stance foot (matching the rows of
    :func:`contact_jacobian`); pass an empty array with no stance feet.
    """
    rhs = -bias_forces(model, q, qd)
    n = model.n
    if n:
        rhs[model.nv - n:] += tau
    J = contact_jacobian(model, q, stance)
    if J.shape[0]:
        rhs += J.T @ np.asarray(F, dtype=float)
    if extra_force is not None:
        rhs += extra_force
    D = mass_matrix(model, q)
    return cho_solve(cho_factor(D), rhs)


def stance_forces(F_full: np.ndarray, stance: np.ndarray | list[bool]) -> np.ndarray:
    """Extract the stance-foot blocks of an all-feet force vector."""
    stance = np.asarray(stance, dtype=bool)
    blocks = [F_full[3 * f: 3 * f + 3] for f in range(len(stance)) if stance[f]]
    if not blocks:
        return np.zeros(0)
    return np.concatenate(blocks)


def kinetic_energy(model: RobotModel, q: np.ndarray, qd: np.ndarray) -> float:
    return 0.5 * float(qd @ mass_matrix(model, q) @ qd)


def potential_energy(model: RobotModel, q: np.ndarray) -> float:
    kin = Kinematics(model, q)
    return -float(sum(b.mass * (model.gravity @ kin.com[i])
                      for i, b in enumerate(model.bodies)))
