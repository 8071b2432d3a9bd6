"""Open-loop heuristic torque primitives for gripper release and catch.

The passive hooks are detached by short torque profiles at the elbow and
seated by a brief negative torque pulse.  Release controllers hand off to
a swing controller once the elbow speed crosses a threshold; the measured
mean handoff states (and their spread) double as the swing initial
conditions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Mean handoff state and standard deviation at the moment the back-release
# controller hands over to the forward swing, and likewise for the front
# release (which starts backward swings).
X0_BACK_RELEASE = np.array([-0.63, -1.87, -0.63, 1.45])
SIGMA0_BACK_RELEASE = np.array([0.03, 0.03, 0.08, 0.11])
X0_FRONT_RELEASE = np.array([0.51, 2.21, -0.63, 4.68])
SIGMA0_FRONT_RELEASE = np.array([0.03, 0.002, 0.42, 0.72])


class ReleaseTimeout(RuntimeError):
    """Release did not reach its exit condition within the allowed time."""


@dataclass
class ReleaseSpec:
    """Piecewise-constant elbow torque profile that frees the swing hook.

    ``profile`` is a list of (torque N*m, minimum duration s) segments; the
    last segment holds until the exit velocity is crossed.  ``kind`` is
    'BR' (back release) or 'FR' (front release).
    """

    kind: str
    profile: list[tuple[float, float]]
    exit_velocity: float
    x0_expected: np.ndarray
    sigma0: np.ndarray
    timeout: float = 1.0

    def __post_init__(self):
        if self.kind not in ("BR", "FR"):
            raise ValueError(f"unknown release kind {self.kind!r}")
        if not self.profile:
            raise ValueError("release profile must have at least one segment")
        self.x0_expected = np.asarray(self.x0_expected, dtype=float)
        self.sigma0 = np.asarray(self.sigma0, dtype=float)

    @classmethod
    def back(cls) -> "ReleaseSpec":
        return cls(kind="BR", profile=[(2.5, 0.05)], exit_velocity=1.45,
                   x0_expected=X0_BACK_RELEASE.copy(),
                   sigma0=SIGMA0_BACK_RELEASE.copy())

    @classmethod
    def front(cls) -> "ReleaseSpec":
        # The front hook must first be lifted off the bar, so a strong
        # negative kick precedes a sustained positive torque.  Magnitudes
        # tuned in simulation so the handoff lands near the measured mean.
        return cls(kind="FR", profile=[(-3.0, 0.05), (1.0, 0.0)],
                   exit_velocity=4.0,
                   x0_expected=X0_FRONT_RELEASE.copy(),
                   sigma0=SIGMA0_FRONT_RELEASE.copy())

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "profile": [[float(t), float(d)] for t, d in self.profile],
            "exit_velocity": float(self.exit_velocity),
            "x0_expected": [float(v) for v in self.x0_expected],
            "sigma0": [float(v) for v in self.sigma0],
            "timeout": float(self.timeout),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReleaseSpec":
        return cls(kind=d["kind"],
                   profile=[tuple(seg) for seg in d["profile"]],
                   exit_velocity=d["exit_velocity"],
                   x0_expected=np.asarray(d["x0_expected"], float),
                   sigma0=np.asarray(d["sigma0"], float),
                   timeout=d.get("timeout", 1.0))


@dataclass
class CatchSpec:
    """Seating pulse applied after a swing: idle, then a negative torque."""

    torque: float = -0.8
    duration: float = 0.1
    idle_before: float = 0.1

    def to_dict(self) -> dict:
        return {"torque": float(self.torque), "duration": float(self.duration),
                "idle_before": float(self.idle_before)}

    @classmethod
    def from_dict(cls, d: dict) -> "CatchSpec":
        return cls(**d)


def release_controller(spec: ReleaseSpec, x, t_since_start: float
                       ) -> tuple[float, bool]:
    """Torque command and done flag for a release in progress.

    Done requires every minimum segment duration to have elapsed and the
    elbow speed to have crossed the exit threshold with the expected sign
    (positive for both release kinds).
    """
    if t_since_start > spec.timeout:
        raise ReleaseTimeout(
            f"{spec.kind} release still active after {t_since_start:.3f} s")

    qd2 = float(np.asarray(x, dtype=float)[3])
    min_total = sum(d for _, d in spec.profile)

    elapsed = t_since_start
    torque = spec.profile[-1][0]
    for seg_torque, seg_dur in spec.profile:
        if elapsed < seg_dur or seg_dur == 0.0:
            torque = seg_torque
            break
        elapsed -= seg_dur

    sign = 1.0 if spec.exit_velocity >= 0.0 else -1.0
    done = (t_since_start >= min_total
            and sign * qd2 >= abs(spec.exit_velocity))
    return torque, done


def catch_controller(spec: CatchSpec, t_since_start: float) -> tuple[float, bool]:
    """Zero torque while idling, then the seating pulse, then done."""
    if t_since_start < spec.idle_before:
        return 0.0, False
    if t_since_start < spec.idle_before + spec.duration:
        return spec.torque, False
    return 0.0, True
