"""Direct-collocation swing optimization for the four atomic behaviors.

Transcribes the free-final-time optimal control problem onto N knot
points with Hermite-Simpson collocation (cubic states, first-order-hold
inputs), trapezoidal running cost, knot-wise state/torque bounds, and
end-effector clearance constraints around the two non-support bars.  The
resulting nonlinear program is solved with the in-repo SQP solver; see
:mod:`brachiation.sqp`.

Decision vector: ``z = [T, x_1 .. x_N, u_1 .. u_N]`` (1 + 5N entries).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import maneuvers
from .dynamics import ModelParams, end_effector, end_effector_jacobian, \
    linearize, state_derivative
from .sqp import NLP, SQPOptions, SQPResult, solve_sqp
from .trajectory import Trajectory, linear_ramp

BEHAVIOR_NAMES = ("ZB", "ZF", "FB", "BF")


class MaxIterations(RuntimeError):
    """Solver hit the iteration limit; carries the best iterate found."""

    def __init__(self, message: str, best: Trajectory):
        super().__init__(message)
        self.best = best


class Infeasible(RuntimeError):
    """Solver could not restore feasibility; carries the best iterate."""

    def __init__(self, message: str, best: Trajectory):
        super().__init__(message)
        self.best = best


@dataclass
class TrajOptConfig:
    """Transcription hyperparameters shared by all four behaviors."""

    N: int = 20
    W: float = 0.0
    Q: np.ndarray = field(default_factory=lambda: np.diag([0.0, 0.0, 1.0, 1.0]))
    R: float = 100.0
    x_lim: np.ndarray = field(
        default_factory=lambda: np.array([2.09, 2.88, 10.0, 10.0]))
    u_lim: float = 3.0
    T_bounds: tuple[float, float] = (0.3, 3.0)
    # Fraction of the horizon after which the target-bar clearance is
    # dropped so the end effector can enter the gripper's catch region.
    clearance_relax_fraction: float = 0.9

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        self.x_lim = np.asarray(self.x_lim, dtype=float)
        if self.N < 3:
            raise ValueError("need at least 3 knot points")
        if self.R <= 0.0 or self.W < 0.0:
            raise ValueError("R must be positive and W non-negative")
        if not np.allclose(self.Q, self.Q.T) or np.any(np.linalg.eigvalsh(self.Q) < -1e-12):
            raise ValueError("Q must be symmetric positive semidefinite")
        if self.T_bounds[0] <= 0.0 or self.T_bounds[1] <= self.T_bounds[0]:
            raise ValueError("invalid horizon bounds")


@dataclass
class WorldGeometry:
    """Bar layout in the support-pivot frame (support bar at the origin)."""

    gap: float = 0.34
    r_bar: float = 0.02

    @property
    def p_bar_F(self) -> np.ndarray:
        return np.array([self.gap, 0.0])

    @property
    def p_bar_B(self) -> np.ndarray:
        return np.array([-self.gap, 0.0])

    def to_dict(self) -> dict:
        return {"gap": float(self.gap), "r_bar": float(self.r_bar)}

    @classmethod
    def from_dict(cls, d: dict) -> "WorldGeometry":
        return cls(**d)


@dataclass
class BehaviorSpec:
    """Boundary states, weights, and geometry of one atomic swing."""

    name: str
    x0: np.ndarray
    xf: np.ndarray
    config: TrajOptConfig = field(default_factory=TrajOptConfig)
    world: WorldGeometry = field(default_factory=WorldGeometry)

    def __post_init__(self):
        if self.name not in BEHAVIOR_NAMES:
            raise ValueError(f"unknown behavior {self.name!r}")
        self.x0 = np.asarray(self.x0, dtype=float)
        self.xf = np.asarray(self.xf, dtype=float)

    @property
    def target_bar(self) -> str:
        """'F' for swings that catch the front bar, 'B' for the back bar."""
        return "F" if self.name in ("ZF", "BF") else "B"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "x0": [float(v) for v in self.x0],
            "xf": [float(v) for v in self.xf],
            "N": int(self.config.N),
            "W": float(self.config.W),
            "Q_diag": [float(v) for v in np.diag(self.config.Q)],
            "R": float(self.config.R),
            "x_lim": [float(v) for v in self.config.x_lim],
            "u_lim": float(self.config.u_lim),
            "T_bounds": [float(v) for v in self.config.T_bounds],
            "world": self.world.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BehaviorSpec":
        cfg = TrajOptConfig(
            N=d.get("N", 20), W=d.get("W", 0.0),
            Q=np.diag(d["Q_diag"]) if "Q_diag" in d else np.diag([0, 0, 1, 1]),
            R=d.get("R", 100.0),
            x_lim=np.asarray(d.get("x_lim", [2.09, 2.88, 10.0, 10.0]), float),
            u_lim=d.get("u_lim", 3.0),
            T_bounds=tuple(d.get("T_bounds", (0.3, 3.0))))
        world = WorldGeometry.from_dict(d["world"]) if "world" in d else WorldGeometry()
        return cls(name=d["name"], x0=np.asarray(d["x0"], float),
                   xf=np.asarray(d["xf"], float), config=cfg, world=world)


# Final states for swings that reach the back bar (ZB, FB) and the front
# bar (ZF, BF); the velocities aim the hook into the catch region.
XF_BACK = np.array([-0.55, -1.97, -0.5, -3.0])
XF_FRONT = np.array([0.73, 1.92, -3.0, -2.5])


def standard_behaviors(world: WorldGeometry | None = None,
                       N: int = 20) -> dict[str, BehaviorSpec]:
    """The four atomic swing specs with their standard boundary states."""
    world = world or WorldGeometry()
    zeros = np.zeros(4)

    def cfg(W):
        return TrajOptConfig(N=N, W=W)

    return {
        "ZB": BehaviorSpec("ZB", zeros.copy(), XF_BACK.copy(), cfg(0.0), world),
        "ZF": BehaviorSpec("ZF", zeros.copy(), XF_FRONT.copy(), cfg(50.0), world),
        "FB": BehaviorSpec("FB", maneuvers.X0_FRONT_RELEASE.copy(),
                           XF_BACK.copy(), cfg(0.0), world),
        "BF": BehaviorSpec("BF", maneuvers.X0_BACK_RELEASE.copy(),
                           XF_FRONT.copy(), cfg(50.0), world),
    }


class Transcription:
    """Hermite-Simpson NLP for one behavior spec.

    Exposes cost/constraint callables over the decision vector; equality
    constraints are the 4(N-1) collocation defects plus 8 boundary-pinning
    rows, inequalities are squared end-effector clearances at knots and
    interval midpoints.
    """

    def __init__(self, spec: BehaviorSpec, params: ModelParams):
        cfg = spec.config
        if np.any(np.abs(spec.x0) > cfg.x_lim + 1e-12) or \
                np.any(np.abs(spec.xf) > cfg.x_lim + 1e-12):
            raise ValueError(
                f"boundary state of {spec.name} violates the state bounds")
        self.spec = spec
        self.params = params
        self.N = cfg.N
        self.n_vars = 1 + 5 * self.N

        bars = {"F": spec.world.p_bar_F, "B": spec.world.p_bar_B}
        other = "B" if spec.target_bar == "F" else "F"
        relax = cfg.clearance_relax_fraction
        n_iv = self.N - 1
        # (bar position, knot index or None, interval index or None)
        self.clearance_pts: list[tuple[np.ndarray, int | None, int | None]] = []
        for k in range(self.N):
            frac = k / n_iv
            self.clearance_pts.append((bars[other], k, None))
            if frac < relax:
                self.clearance_pts.append((bars[spec.target_bar], k, None))
        for k in range(n_iv):
            frac = (k + 0.5) / n_iv
            self.clearance_pts.append((bars[other], None, k))
            if frac < relax:
                self.clearance_pts.append((bars[spec.target_bar], None, k))

    # -- packing ---------------------------------------------------------

    def pack(self, traj: Trajectory) -> np.ndarray:
        if traj.n_knots != self.N:
            times = np.linspace(traj.times[0], traj.times[-1], self.N)
            states = np.stack([traj.sample_state(t) for t in times])
            inputs = np.array([traj.sample_input(t) for t in times])
        else:
            states, inputs = traj.states, traj.inputs
        return np.concatenate([[traj.T], states.ravel(), inputs])

    def unpack(self, z: np.ndarray) -> Trajectory:
        T = float(z[0])
        states = z[1:1 + 4 * self.N].reshape(self.N, 4)
        inputs = z[1 + 4 * self.N:]
        traj = Trajectory(times=np.linspace(0.0, T, self.N),
                          states=states.copy(), inputs=inputs.copy())
        return traj.with_derivs_from(self.params)

    def _split(self, z):
        return float(z[0]), z[1:1 + 4 * self.N].reshape(self.N, 4), \
            z[1 + 4 * self.N:]

    # -- objective ---------------------------------------------------------

    def _quad_weights(self):
        w = np.ones(self.N)
        w[0] = w[-1] = 0.5
        return w

    def cost(self, z) -> float:
        T, X, U = self._split(z)
        cfg = self.spec.config
        h = T / (self.N - 1)
        g = np.einsum("ki,ij,kj->k", X, cfg.Q, X) + cfg.R * U**2
        return float(cfg.W * T + h * (self._quad_weights() @ g))

    def cost_grad(self, z) -> np.ndarray:
        T, X, U = self._split(z)
        cfg = self.spec.config
        h = T / (self.N - 1)
        w = self._quad_weights()
        g = np.einsum("ki,ij,kj->k", X, cfg.Q, X) + cfg.R * U**2
        grad = np.empty(self.n_vars)
        grad[0] = cfg.W + (w @ g) / (self.N - 1)
        grad[1:1 + 4 * self.N] = (2.0 * h * w[:, None] * (X @ cfg.Q)).ravel()
        grad[1 + 4 * self.N:] = 2.0 * h * w * cfg.R * U
        return grad

    # -- dynamics defects ---------------------------------------------------

    def _knot_dynamics(self, X, U, with_jac: bool):
        f = np.stack([state_derivative(self.params, x, u)
                      for x, u in zip(X, U)])
        if not with_jac:
            return f, None, None
        AB = [linearize(self.params, x, u) for x, u in zip(X, U)]
        A = np.stack([ab[0] for ab in AB])
        B = np.stack([ab[1][:, 0] for ab in AB])
        return f, A, B

    def _midpoints(self, T, X, U, f):
        h = T / (self.N - 1)
        xc = 0.5 * (X[:-1] + X[1:]) + (h / 8.0) * (f[:-1] - f[1:])
        uc = 0.5 * (U[:-1] + U[1:])
        return xc, uc

    def eq(self, z) -> np.ndarray:
        T, X, U = self._split(z)
        h = T / (self.N - 1)
        f, _, _ = self._knot_dynamics(X, U, with_jac=False)
        xc, uc = self._midpoints(T, X, U, f)
        fc = np.stack([state_derivative(self.params, x, u)
                       for x, u in zip(xc, uc)])
        defects = X[1:] - X[:-1] - (h / 6.0) * (f[:-1] + 4.0 * fc + f[1:])
        boundary = np.concatenate([X[0] - self.spec.x0, X[-1] - self.spec.xf])
        return np.concatenate([defects.ravel(), boundary])

    def eq_jac(self, z) -> np.ndarray:
        T, X, U = self._split(z)
        N = self.N
        n_iv = N - 1
        h = T / n_iv
        f, A, B = self._knot_dynamics(X, U, with_jac=True)
        xc, uc = self._midpoints(T, X, U, f)
        fc = np.empty_like(xc)
        Ac = np.empty((n_iv, 4, 4))
        Bc = np.empty((n_iv, 4))
        for k in range(n_iv):
            fc[k] = state_derivative(self.params, xc[k], uc[k])
            Ak, Bk = linearize(self.params, xc[k], uc[k])
            Ac[k] = Ak
            Bc[k] = Bk[:, 0]

        J = np.zeros((4 * n_iv + 8, self.n_vars))
        I4 = np.eye(4)
        xoff = 1
        uoff = 1 + 4 * N
        for k in range(n_iv):
            r = slice(4 * k, 4 * k + 4)
            A0, A1 = A[k], A[k + 1]
            B0, B1 = B[k], B[k + 1]
            dxc_dx0 = 0.5 * I4 + (h / 8.0) * A0
            dxc_dx1 = 0.5 * I4 - (h / 8.0) * A1
            J[r, xoff + 4 * k: xoff + 4 * k + 4] = \
                -I4 - (h / 6.0) * (A0 + 4.0 * Ac[k] @ dxc_dx0)
            J[r, xoff + 4 * (k + 1): xoff + 4 * (k + 2)] = \
                I4 - (h / 6.0) * (A1 + 4.0 * Ac[k] @ dxc_dx1)
            J[r, uoff + k] = -(h / 6.0) * (
                B0 + 4.0 * (Ac[k] @ ((h / 8.0) * B0) + 0.5 * Bc[k]))
            J[r, uoff + k + 1] = -(h / 6.0) * (
                B1 + 4.0 * (Ac[k] @ (-(h / 8.0) * B1) + 0.5 * Bc[k]))
            J[r, 0] = -(1.0 / n_iv) * (
                (f[k] + 4.0 * fc[k] + f[k + 1]) / 6.0
                + (h / 12.0) * (Ac[k] @ (f[k] - f[k + 1])))
        J[4 * n_iv: 4 * n_iv + 4, xoff: xoff + 4] = I4
        J[4 * n_iv + 4:, xoff + 4 * (N - 1): xoff + 4 * N] = I4
        return J

    # -- bar clearance ------------------------------------------------------

    def ineq(self, z) -> np.ndarray:
        T, X, U = self._split(z)
        f, _, _ = self._knot_dynamics(X, U, with_jac=False)
        xc, _ = self._midpoints(T, X, U, f)
        r2 = self.spec.world.r_bar**2
        vals = np.empty(len(self.clearance_pts))
        for i, (p_bar, k, iv) in enumerate(self.clearance_pts):
            q = X[k, :2] if k is not None else xc[iv, :2]
            p = end_effector(self.params, q)
            vals[i] = (p - p_bar) @ (p - p_bar) - r2
        return vals

    def ineq_jac(self, z) -> np.ndarray:
        T, X, U = self._split(z)
        N = self.N
        n_iv = N - 1
        h = T / n_iv
        f, A, B = self._knot_dynamics(X, U, with_jac=True)
        xc, uc = self._midpoints(T, X, U, f)
        J = np.zeros((len(self.clearance_pts), self.n_vars))
        xoff = 1
        uoff = 1 + 4 * N
        for i, (p_bar, k, iv) in enumerate(self.clearance_pts):
            if k is not None:
                q = X[k, :2]
                p = end_effector(self.params, q)
                dq = 2.0 * (p - p_bar) @ end_effector_jacobian(self.params, q)
                J[i, xoff + 4 * k: xoff + 4 * k + 2] = dq
            else:
                q = xc[iv, :2]
                p = end_effector(self.params, q)
                dq = 2.0 * (p - p_bar) @ end_effector_jacobian(self.params, q)
                A0, A1 = A[iv], A[iv + 1]
                B0, B1 = B[iv], B[iv + 1]
                dxc_dx0 = 0.5 * np.eye(4) + (h / 8.0) * A0
                dxc_dx1 = 0.5 * np.eye(4) - (h / 8.0) * A1
                J[i, xoff + 4 * iv: xoff + 4 * iv + 4] = dq @ dxc_dx0[:2]
                J[i, xoff + 4 * (iv + 1): xoff + 4 * (iv + 2)] = dq @ dxc_dx1[:2]
                J[i, uoff + iv] = dq @ ((h / 8.0) * B0[:2])
                J[i, uoff + iv + 1] = dq @ (-(h / 8.0) * B1[:2])
                J[i, 0] = dq @ ((f[iv, :2] - f[iv + 1, :2]) / (8.0 * n_iv))
        return J

    # -- bounds and NLP -------------------------------------------------------

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        cfg = self.spec.config
        lb = np.empty(self.n_vars)
        ub = np.empty(self.n_vars)
        lb[0], ub[0] = cfg.T_bounds
        lb[1:1 + 4 * self.N] = np.tile(-cfg.x_lim, self.N)
        ub[1:1 + 4 * self.N] = np.tile(cfg.x_lim, self.N)
        lb[1 + 4 * self.N:] = -cfg.u_lim
        ub[1 + 4 * self.N:] = cfg.u_lim
        return lb, ub

    def nlp(self, obj_scale: float = 1e-2) -> NLP:
        lb, ub = self.bounds()
        return NLP(
            n=self.n_vars,
            objective=lambda z: obj_scale * self.cost(z),
            gradient=lambda z: obj_scale * self.cost_grad(z),
            eq=self.eq, eq_jac=self.eq_jac,
            ineq=self.ineq, ineq_jac=self.ineq_jac,
            lb=lb, ub=ub)


def transcribe(spec: BehaviorSpec, params: ModelParams | None = None
               ) -> Transcription:
    """Build the NLP for a behavior spec (validates boundary states)."""
    return Transcription(spec, params or ModelParams())


def initial_guess(spec: BehaviorSpec) -> Trajectory:
    """Linear state ramp over 1 s with zero torque."""
    return linear_ramp(spec.x0, spec.xf, 1.0, spec.config.N)


def solve(spec: BehaviorSpec, params: ModelParams | None = None,
          seed_traj: Trajectory | None = None,
          options: SQPOptions | None = None, seed: int = 0) -> Trajectory:
    """Solve one behavior to a dynamically feasible optimal trajectory.

    Deterministic given the spec and initial guess (the solver uses no
    randomness; `seed` is kept in the reported metadata for provenance).
    Raises :class:`MaxIterations` or :class:`Infeasible` with the best
    iterate attached when the solve fails.
    """
    params = params or ModelParams()
    tr = transcribe(spec, params)
    guess = seed_traj or initial_guess(spec)
    z0 = tr.pack(guess)
    opts = options or SQPOptions(max_iter=500, tol_feas=1e-9, tol_stat=2e-4)
    result: SQPResult = solve_sqp(tr.nlp(), z0, opts)

    traj = tr.unpack(result.z)
    defect = _max_defect(tr, result.z)
    traj.meta.update({
        "behavior": spec.name,
        "status": result.status,
        "iterations": result.iterations,
        "max_defect": defect,
        "cost": tr.cost(result.z),
        "T": traj.T,
        "seed": seed,
    })

    if result.status == "converged" and defect <= 1e-6:
        return traj
    if result.status in ("max_iter", "stalled"):
        raise MaxIterations(
            f"{spec.name}: no convergence in {result.iterations} iterations "
            f"(max defect {defect:.2e})", traj)
    raise Infeasible(
        f"{spec.name}: restoration failed (max violation {result.max_viol:.2e})",
        traj)


def _max_defect(tr: Transcription, z) -> float:
    resid = tr.eq(z)
    return float(np.abs(resid[:4 * (tr.N - 1)]).max())
