"""Knot-point trajectories with the interpolation rules used everywhere.

States are interpolated with a cubic Hermite segment per interval whose
endpoint slopes come from the system dynamics; inputs use a first-order
hold.  The CSV format is ``t,q1,q2,qd1,qd2,u`` with 9 significant digits.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .dynamics import ModelParams, state_derivative

CSV_HEADER = "t,q1,q2,qd1,qd2,u"


@dataclass
class Trajectory:
    times: np.ndarray          # (N,), strictly increasing from 0
    states: np.ndarray         # (N, 4)
    inputs: np.ndarray         # (N,)
    derivs: np.ndarray | None = None   # (N, 4) knot state derivatives
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        self.inputs = np.asarray(self.inputs, dtype=float)
        n = len(self.times)
        if self.states.shape != (n, 4) or self.inputs.shape != (n,):
            raise ValueError("inconsistent knot array shapes")
        if n < 2 or np.any(np.diff(self.times) <= 0.0):
            raise ValueError("knot times must be strictly increasing")
        if self.derivs is not None:
            self.derivs = np.asarray(self.derivs, dtype=float)

    @property
    def T(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def n_knots(self) -> int:
        return len(self.times)

    def with_derivs_from(self, params: ModelParams) -> "Trajectory":
        derivs = np.stack([state_derivative(params, x, u)
                           for x, u in zip(self.states, self.inputs)])
        return Trajectory(self.times, self.states, self.inputs, derivs,
                          dict(self.meta))

    def _locate(self, t: float) -> tuple[int, float, float]:
        t = float(np.clip(t, self.times[0], self.times[-1]))
        k = int(np.searchsorted(self.times, t, side="right") - 1)
        k = min(max(k, 0), len(self.times) - 2)
        h = self.times[k + 1] - self.times[k]
        s = (t - self.times[k]) / h
        return k, s, h

    def sample_state(self, t: float) -> np.ndarray:
        """Cubic Hermite state interpolation (falls back to linear w/o derivs)."""
        k, s, h = self._locate(t)
        x0, x1 = self.states[k], self.states[k + 1]
        if self.derivs is None:
            return (1.0 - s) * x0 + s * x1
        f0, f1 = self.derivs[k], self.derivs[k + 1]
        s2, s3 = s * s, s * s * s
        return ((2.0 * s3 - 3.0 * s2 + 1.0) * x0
                + (s3 - 2.0 * s2 + s) * h * f0
                + (-2.0 * s3 + 3.0 * s2) * x1
                + (s3 - s2) * h * f1)

    def sample_input(self, t: float) -> float:
        """First-order-hold input interpolation."""
        k, s, _ = self._locate(t)
        return float((1.0 - s) * self.inputs[k] + s * self.inputs[k + 1])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        for t, x, u in zip(self.times, self.states, self.inputs):
            row = [t, x[0], x[1], x[2], x[3], u]
            buf.write(",".join(f"{v:.9g}" for v in row) + "\n")
        return buf.getvalue()

    def save_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.to_csv())

    @classmethod
    def from_csv(cls, text: str, params: ModelParams | None = None) -> "Trajectory":
        rows = [line.strip() for line in text.strip().splitlines()]
        if not rows or rows[0] != CSV_HEADER:
            raise ValueError(f"expected header '{CSV_HEADER}'")
        data = np.array([[float(v) for v in line.split(",")] for line in rows[1:]])
        traj = cls(times=data[:, 0], states=data[:, 1:5], inputs=data[:, 5])
        if params is not None:
            traj = traj.with_derivs_from(params)
        return traj

    @classmethod
    def load_csv(cls, path, params: ModelParams | None = None) -> "Trajectory":
        with open(path) as f:
            return cls.from_csv(f.read(), params)


def linear_ramp(x0, xf, duration: float, n_knots: int) -> Trajectory:
    """Straight-line state ramp with zero input (the default solver seed)."""
    x0 = np.asarray(x0, dtype=float)
    xf = np.asarray(xf, dtype=float)
    times = np.linspace(0.0, duration, n_knots)
    alphas = np.linspace(0.0, 1.0, n_knots)[:, None]
    states = (1.0 - alphas) * x0 + alphas * xf
    return Trajectory(times=times, states=states, inputs=np.zeros(n_knots))
