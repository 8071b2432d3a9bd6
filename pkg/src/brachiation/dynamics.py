"""Closed-form rigid-body dynamics for the two-link underactuated arm.

The robot is a planar two-link chain hanging from a passive pivot (the
support hook), with a single motor at the elbow.  Conventions used across
the whole package:

* ``q1``: shoulder angle measured from the downward vertical,
  anticlockwise positive.
* ``q2``: elbow angle of the second link relative to the first.
* World frame at the support pivot, x forward, y up.
* State vector ``x = [q1, q2, qd1, qd2]``.
* Equations of motion ``M(q) qdd + C(q, qd) qd = tau_g(q) + B u`` with
  ``B = [0, 1]^T`` (elbow torque only).  Viscous joint damping is applied
  in :func:`forward_dynamics`, not in the conservative terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np


def wrap_to_pi(angle):
    """Wrap an angle (radians) to the interval (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(angle), 2.0 * np.pi)


class SingularMassMatrix(RuntimeError):
    """Mass matrix was numerically singular (cannot happen for valid params)."""


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the two-link arm.

    Lengths in m, masses in kg, inertias in kg m^2 about each link COM,
    damping in N m s/rad.  Defaults describe the symmetric robot: both
    links 0.31 m with COM at 0.16 m and mass 0.63 kg.  Link inertias are
    not independently known for the hardware, so the default is the
    uniform-rod value m*l^2/12; pass explicit values to override.
    """

    l1: float = 0.31
    l2: float = 0.31
    lc1: float = 0.16
    lc2: float = 0.16
    m1: float = 0.63
    m2: float = 0.63
    I1: float | None = None
    I2: float | None = None
    g: float = 9.81
    b_pivot: float = 0.044
    b_motor: float = 0.06

    def __post_init__(self):
        if self.I1 is None:
            object.__setattr__(self, "I1", self.m1 * self.l1**2 / 12.0)
        if self.I2 is None:
            object.__setattr__(self, "I2", self.m2 * self.l2**2 / 12.0)
        for name in ("l1", "l2", "m1", "m2", "lc1", "lc2"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")
        if self.I1 < 0.0 or self.I2 < 0.0:
            raise ValueError("inertias must be non-negative")
        if self.lc1 > self.l1 or self.lc2 > self.l2:
            raise ValueError("COM offsets must not exceed link lengths")
        if self.b_pivot < 0.0 or self.b_motor < 0.0:
            raise ValueError("damping must be non-negative")

    def to_dict(self) -> dict:
        return {f.name: float(getattr(self, f.name)) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model parameters: {sorted(unknown)}")
        return cls(**d)

    def with_damping(self, b_pivot: float, b_motor: float) -> "ModelParams":
        return replace(self, b_pivot=b_pivot, b_motor=b_motor)


@dataclass
class State:
    """Generalized positions and velocities [q1, q2, qd1, qd2]."""

    q1: float = 0.0
    q2: float = 0.0
    qd1: float = 0.0
    qd2: float = 0.0

    def __array__(self, dtype=None):
        arr = np.array([self.q1, self.q2, self.qd1, self.qd2])
        return arr if dtype is None else arr.astype(dtype)

    @classmethod
    def from_array(cls, x) -> "State":
        q1, q2, qd1, qd2 = np.asarray(x, dtype=float)
        return cls(float(q1), float(q2), float(qd1), float(qd2))

    def wrapped(self) -> "State":
        """Copy with angles wrapped to (-pi, pi] (use at behavior boundaries)."""
        return State(float(wrap_to_pi(self.q1)), float(wrap_to_pi(self.q2)),
                     self.qd1, self.qd2)


@dataclass
class DynamicsTerms:
    """Manipulator-equation terms evaluated at one state."""

    M: np.ndarray
    C: np.ndarray
    tau_g: np.ndarray
    B: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0]))


def _as_state_array(state) -> np.ndarray:
    x = np.asarray(state, dtype=float)
    if x.shape != (4,):
        raise ValueError(f"state must have shape (4,), got {x.shape}")
    return x


def compute_terms(params: ModelParams, state) -> DynamicsTerms:
    """Evaluate M, C (Christoffel convention), and gravity torque at a state.

    Damping is intentionally not folded in here; see :func:`forward_dynamics`.
    """
    q1, q2, qd1, qd2 = _as_state_array(state)
    s1, s2, s12 = math.sin(q1), math.sin(q2), math.sin(q1 + q2)
    c2 = math.cos(q2)

    a = params.I1 + params.I2 + params.m1 * params.lc1**2 \
        + params.m2 * (params.l1**2 + params.lc2**2)
    b = params.m2 * params.l1 * params.lc2
    d = params.I2 + params.m2 * params.lc2**2

    M = np.array([[a + 2.0 * b * c2, d + b * c2],
                  [d + b * c2, d]])

    h = -b * s2
    C = np.array([[h * qd2, h * (qd1 + qd2)],
                  [-h * qd1, 0.0]])

    g1 = params.g * (params.m1 * params.lc1 + params.m2 * params.l1)
    g2 = params.g * params.m2 * params.lc2
    tau_g = np.array([-g1 * s1 - g2 * s12, -g2 * s12])

    return DynamicsTerms(M=M, C=C, tau_g=tau_g)


def _accel(params: ModelParams, q1: float, q2: float, qd1: float, qd2: float,
           u: float) -> tuple[float, float]:
    """Scalar fast path for joint accelerations (hot loop of the integrators)."""
    s1 = math.sin(q1)
    s2 = math.sin(q2)
    c2 = math.cos(q2)
    s12 = math.sin(q1 + q2)

    a = params.I1 + params.I2 + params.m1 * params.lc1**2 \
        + params.m2 * (params.l1**2 + params.lc2**2)
    b = params.m2 * params.l1 * params.lc2
    d = params.I2 + params.m2 * params.lc2**2

    m11 = a + 2.0 * b * c2
    m12 = d + b * c2
    m22 = d

    g1 = params.g * (params.m1 * params.lc1 + params.m2 * params.l1)
    g2 = params.g * params.m2 * params.lc2

    # rhs = tau_g + B u - C qd - damping
    r1 = -g1 * s1 - g2 * s12 + b * s2 * (2.0 * qd1 * qd2 + qd2 * qd2) \
        - params.b_pivot * qd1
    r2 = -g2 * s12 - b * s2 * qd1 * qd1 + u - params.b_motor * qd2

    det = m11 * m22 - m12 * m12
    if abs(det) < 1e-12:
        raise SingularMassMatrix(f"det(M) = {det:.3e} at q2 = {q2:.3f}")
    inv_det = 1.0 / det
    return ((m22 * r1 - m12 * r2) * inv_det, (m11 * r2 - m12 * r1) * inv_det)


def forward_dynamics(params: ModelParams, state, u: float) -> np.ndarray:
    """Joint accelerations [qdd1, qdd2] under elbow torque `u` (with damping)."""
    q1, q2, qd1, qd2 = _as_state_array(state)
    return np.array(_accel(params, q1, q2, qd1, qd2, float(u)))


def state_derivative(params: ModelParams, state, u: float) -> np.ndarray:
    """Full state derivative f(x, u) = [qd1, qd2, qdd1, qdd2]."""
    q1, q2, qd1, qd2 = _as_state_array(state)
    a1, a2 = _accel(params, q1, q2, qd1, qd2, float(u))
    return np.array([qd1, qd2, a1, a2])


def forward_kinematics(params: ModelParams, q) -> tuple[np.ndarray, np.ndarray]:
    """Positions of the elbow and end effector in the pivot frame (x fwd, y up)."""
    q = np.asarray(q, dtype=float)
    q1, q2 = q[..., 0], q[..., 1]
    ex = params.l1 * np.sin(q1)
    ey = -params.l1 * np.cos(q1)
    px = ex + params.l2 * np.sin(q1 + q2)
    py = ey - params.l2 * np.cos(q1 + q2)
    elbow = np.stack(np.broadcast_arrays(ex, ey), axis=-1)
    ee = np.stack(np.broadcast_arrays(px, py), axis=-1)
    return elbow, ee


def end_effector(params: ModelParams, q) -> np.ndarray:
    """End-effector position only (convenience wrapper)."""
    return forward_kinematics(params, q)[1]


def end_effector_jacobian(params: ModelParams, q) -> np.ndarray:
    """2x2 Jacobian of the end-effector position w.r.t. [q1, q2]."""
    q1, q2 = np.asarray(q, dtype=float)[:2]
    c1, s1 = math.cos(q1), math.sin(q1)
    c12, s12 = math.cos(q1 + q2), math.sin(q1 + q2)
    return np.array([
        [params.l1 * c1 + params.l2 * c12, params.l2 * c12],
        [params.l1 * s1 + params.l2 * s12, params.l2 * s12],
    ])


def linearize(params: ModelParams, state, u: float) -> tuple[np.ndarray, np.ndarray]:
    """Analytic continuous-time Jacobians (A, B) of f(x, u) at a point.

    A is 4x4, B is 4x1.  Cross-checked against central finite differences
    in the test suite (see :func:`linearize_fd`).
    """
    q1, q2, qd1, qd2 = _as_state_array(state)
    u = float(u)
    s1, c1 = math.sin(q1), math.cos(q1)
    s2, c2 = math.sin(q2), math.cos(q2)
    s12, c12 = math.sin(q1 + q2), math.cos(q1 + q2)

    a = params.I1 + params.I2 + params.m1 * params.lc1**2 \
        + params.m2 * (params.l1**2 + params.lc2**2)
    b = params.m2 * params.l1 * params.lc2
    d = params.I2 + params.m2 * params.lc2**2
    g1 = params.g * (params.m1 * params.lc1 + params.m2 * params.l1)
    g2 = params.g * params.m2 * params.lc2

    M = np.array([[a + 2.0 * b * c2, d + b * c2], [d + b * c2, d]])
    Minv = np.linalg.inv(M)
    dM_dq2 = np.array([[-2.0 * b * s2, -b * s2], [-b * s2, 0.0]])

    r = np.array([
        -g1 * s1 - g2 * s12 + b * s2 * (2.0 * qd1 * qd2 + qd2**2)
        - params.b_pivot * qd1,
        -g2 * s12 - b * s2 * qd1**2 + u - params.b_motor * qd2,
    ])
    qdd = Minv @ r

    dr_dq1 = np.array([-g1 * c1 - g2 * c12, -g2 * c12])
    dr_dq2 = np.array([
        -g2 * c12 + b * c2 * (2.0 * qd1 * qd2 + qd2**2),
        -g2 * c12 - b * c2 * qd1**2,
    ])
    dr_dqd1 = np.array([2.0 * b * s2 * qd2 - params.b_pivot, -2.0 * b * s2 * qd1])
    dr_dqd2 = np.array([2.0 * b * s2 * (qd1 + qd2), -params.b_motor])

    dqdd = np.empty((2, 4))
    dqdd[:, 0] = Minv @ dr_dq1
    dqdd[:, 1] = Minv @ (dr_dq2 - dM_dq2 @ qdd)
    dqdd[:, 2] = Minv @ dr_dqd1
    dqdd[:, 3] = Minv @ dr_dqd2

    A = np.zeros((4, 4))
    A[0, 2] = 1.0
    A[1, 3] = 1.0
    A[2:, :] = dqdd

    B = np.zeros((4, 1))
    B[2:, 0] = Minv[:, 1]
    return A, B


def linearize_fd(params: ModelParams, state, u: float,
                 eps: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Central finite-difference Jacobians, the cross-check for :func:`linearize`."""
    x0 = _as_state_array(state)
    u = float(u)
    A = np.empty((4, 4))
    for i in range(4):
        dx = np.zeros(4)
        dx[i] = eps
        A[:, i] = (state_derivative(params, x0 + dx, u)
                   - state_derivative(params, x0 - dx, u)) / (2.0 * eps)
    B = ((state_derivative(params, x0, u + eps)
          - state_derivative(params, x0, u - eps)) / (2.0 * eps)).reshape(4, 1)
    return A, B


def total_energy(params: ModelParams, state) -> float:
    """Kinetic plus gravitational potential energy, zero level at the pivot."""
    x = _as_state_array(state)
    q1, q2 = x[0], x[1]
    qd = x[2:]
    M = compute_terms(params, x).M
    kinetic = 0.5 * qd @ M @ qd
    y_c1 = -params.lc1 * math.cos(q1)
    y_c2 = -params.l1 * math.cos(q1) - params.lc2 * math.cos(q1 + q2)
    potential = params.g * (params.m1 * y_c1 + params.m2 * y_c2)
    return float(kinetic + potential)


def rk4_step(params: ModelParams, x: np.ndarray, u: float, dt: float) -> np.ndarray:
    """One classical RK4 step of the damped dynamics under constant torque.

    This is the single integrator used by every rollout in the package so
    that trajectories are bit-comparable across modules.
    """
    q1, q2, qd1, qd2 = x
    u = float(u)

    a1, a2 = _accel(params, q1, q2, qd1, qd2, u)
    k1 = (qd1, qd2, a1, a2)

    h2 = 0.5 * dt
    b1, b2 = _accel(params, q1 + h2 * k1[0], q2 + h2 * k1[1],
                    qd1 + h2 * k1[2], qd2 + h2 * k1[3], u)
    k2 = (qd1 + h2 * k1[2], qd2 + h2 * k1[3], b1, b2)

    c1, c2 = _accel(params, q1 + h2 * k2[0], q2 + h2 * k2[1],
                    qd1 + h2 * k2[2], qd2 + h2 * k2[3], u)
    k3 = (qd1 + h2 * k2[2], qd2 + h2 * k2[3], c1, c2)

    d1, d2 = _accel(params, q1 + dt * k3[0], q2 + dt * k3[1],
                    qd1 + dt * k3[2], qd2 + dt * k3[3], u)
    k4 = (qd1 + dt * k3[2], qd2 + dt * k3[3], d1, d2)

    sixth = dt / 6.0
    return np.array([
        q1 + sixth * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        q2 + sixth * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        qd1 + sixth * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
        qd2 + sixth * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]),
    ])
