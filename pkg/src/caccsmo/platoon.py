"""Two-car CACC platoon: plant, controller and measurement generation.

The follower (car i) measures, relative to its predecessor (car i-1):

    y[0]  spacing          p_lead - p_fol - L          [m]
    y[1]  relative velocity v_lead - v_fol             [m/s]
    y[2]  own velocity      v_fol                      [m/s]
    y[3]  own acceleration  a_fol                      [m/s^2]

With this convention the spacing is positive while the follower is behind
the leader and y[1] is the time derivative of y[0], so the measured
spacing-error rate used by the controller is exact.  Each channel carries
additive bounded zero-mean noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CarParams",
    "PlatoonParams",
    "PlatoonState",
    "NoiseSpec",
    "car_derivative",
    "spacing_error",
    "controller_derivative",
    "measure",
    "sample_noise",
    "output_matrix",
]


@dataclass(frozen=True)
class CarParams:
    """Engine time constant [s] and car length [m]."""

    tau: float
    length: float

    def __post_init__(self):
        if not (self.tau > 0):
            raise ValueError(f"engine time constant must be positive, got {self.tau}")
        if not (self.length > 0):
            raise ValueError(f"car length must be positive, got {self.length}")


@dataclass(frozen=True)
class PlatoonParams:
    """Two-car platoon with a follower that only knows its own engine lag.

    The follower models the leader's lag as tau_hat = r_tau * leader.tau,
    with r_tau unknown but bounded by r_tau_bounds.
    """

    leader: CarParams
    follower: CarParams
    r_tau: float = 1.1
    r_tau_bounds: tuple[float, float] = (1.0, 1.2)
    h_ref: float = 0.7   # time headway [s]
    r: float = 1.5       # standstill distance [m]
    k_p: float = 0.2     # spacing gain [1/s^2]
    k_d: float = 0.7     # rate gain [1/s]

    def __post_init__(self):
        lo, hi = self.r_tau_bounds
        if not (self.h_ref > 0):
            raise ValueError("time headway must be positive")
        if not (lo > 0):
            raise ValueError("lower r_tau bound must be positive")
        if not (lo <= self.r_tau <= hi):
            raise ValueError(f"r_tau={self.r_tau} outside bounds {self.r_tau_bounds}")

    @property
    def tau_hat(self) -> float:
        """Leader engine lag as modelled by the follower."""
        return self.r_tau * self.leader.tau


@dataclass
class PlatoonState:
    """Physical state of both cars plus the follower's controller integrator."""

    p_lead: float
    v_lead: float
    a_lead: float
    p_fol: float
    v_fol: float
    a_fol: float
    u_fol: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.p_lead, self.v_lead, self.a_lead,
             self.p_fol, self.v_fol, self.a_fol, self.u_fol]
        )

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_array())):
            raise ValueError("platoon state must be finite")


@dataclass(frozen=True)
class NoiseSpec:
    """Per-channel noise bounds (measured-channel order) and a seed.

    distribution: "uniform" on [-bound, bound] or "truncated_gaussian"
    (std = bound/3, clipped at the bound).
    """

    bound_per_channel: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    seed: int = 0
    distribution: str = "uniform"

    def __post_init__(self):
        if any(b < 0 for b in self.bound_per_channel):
            raise ValueError("noise bounds must be non-negative")
        if self.distribution not in ("uniform", "truncated_gaussian"):
            raise ValueError(f"unknown noise distribution {self.distribution!r}")

    @property
    def bounds(self) -> np.ndarray:
        return np.asarray(self.bound_per_channel, dtype=float)


def car_derivative(state3, u: float, tau: float):
    """First-order-lag longitudinal model: returns (pdot, vdot, adot).

    adot = (u - a) / tau.
    """
    p, v, a = state3
    if not (tau > 0):
        raise ValueError("tau must be positive")
    vals = np.array([p, v, a, u], dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite car state or input")
    return (v, a, (u - a) / tau)


def spacing_error(meas, r: float, h_ref: float):
    """Spacing error e and its measured rate edot from one measurement vector.

    e    = y[0] - (r + h_ref * y[2])
    edot = y[1] - h_ref * y[3]
    """
    y = np.asarray(meas, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite measurement")
    e = y[0] - r - h_ref * y[2]
    edot = y[1] - h_ref * y[3]
    return e, edot


def controller_derivative(u_fol: float, e: float, edot: float,
                          u_lead_received: float, params: PlatoonParams) -> float:
    """CACC control law with feedforward of the received predecessor input."""
    h = params.h_ref
    return -u_fol / h + params.k_p * e + params.k_d * edot + u_lead_received / h


def output_matrix(length: float):
    """(C, c) of the linear measurement map y = C @ (x_lead, x_fol) + c."""
    C = np.array(
        [
            [1.0, 0.0, 0.0, -1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0, -1.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
        ]
    )
    c = np.array([-length, 0.0, 0.0, 0.0])
    return C, c


def measure(state: PlatoonState, length: float, noise=None) -> np.ndarray:
    """Four-channel measurement of the platoon state plus additive noise."""
    y = np.array(
        [
            state.p_lead - state.p_fol - length,
            state.v_lead - state.v_fol,
            state.v_fol,
            state.a_fol,
        ]
    )
    if noise is not None:
        y = y + np.asarray(noise, dtype=float)
    return y


def sample_noise(spec: NoiseSpec, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw bounded zero-mean noise; the caller owns the generator state.

    size=None gives one 4-vector, size=N gives an (N, 4) block drawn in one
    call so that pre-generated and per-step sampling agree for a fixed seed.
    """
    b = spec.bounds
    shape = (4,) if size is None else (size, 4)
    if spec.distribution == "uniform":
        draw = rng.uniform(-1.0, 1.0, size=shape)
    else:
        draw = np.clip(rng.normal(0.0, 1.0 / 3.0, size=shape), -1.0, 1.0)
    return draw * b
