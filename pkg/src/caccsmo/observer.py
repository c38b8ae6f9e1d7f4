"""Sliding-mode observer, switching injection and filtered equivalent output injection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .extended import PartitionedSystem

__all__ = [
    "ObserverParams",
    "ObserverState",
    "output_filter_derivative",
    "innovation",
    "switching_injection",
    "observer_derivative",
    "eoi_derivative",
]


@dataclass(frozen=True)
class ObserverParams:
    """Gains of the observer.

    rho: positive switching amplitudes, one per output channel.
    a22s: stable diagonal feedback part of the output-error dynamics.
    a_nu: stable diagonal gain of the EOI low-pass filter.
    epsilon: half-width of the linear boundary layer replacing sign(.)
    (0 gives the exact sign function with sign(0)=0).
    """

    rho: tuple[float, ...] = (11.5, 11.0, 11.0, 11.0)
    a22s: tuple[float, ...] = (-1.0, -1.0, -1.0, -1.0)
    a_nu: tuple[float, ...] = (-1.0, -1.0, -1.0, -1.0)
    epsilon: float = 1e-3

    def __post_init__(self):
        if any(r <= 0 for r in self.rho):
            raise ValueError("rho must be positive elementwise")
        if any(a >= 0 for a in self.a22s) or any(a >= 0 for a in self.a_nu):
            raise ValueError("a22s and a_nu must be strictly negative diagonals")
        if self.epsilon < 0:
            raise ValueError("boundary layer width must be non-negative")

    @property
    def rho_vec(self) -> np.ndarray:
        return np.asarray(self.rho, dtype=float)

    @property
    def A22s(self) -> np.ndarray:
        return np.diag(self.a22s)

    @property
    def A_nu(self) -> np.ndarray:
        return np.diag(self.a_nu)


@dataclass
class ObserverState:
    xhat1: np.ndarray
    xhat2: np.ndarray
    nu_fil: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        for arr in (self.xhat1, self.xhat2, self.nu_fil, self.z):
            if not np.all(np.isfinite(arr)):
                raise ValueError("observer state must be finite")


def output_filter_derivative(z, y2, A_f) -> np.ndarray:
    """zdot = A_f (z - y2); A_f strictly negative diagonal."""
    A_f = np.atleast_2d(A_f)
    if A_f.size and np.any(np.diag(A_f) >= 0):
        raise ValueError("output filter gain must be negative definite")
    return A_f @ (np.asarray(z, dtype=float) - np.asarray(y2, dtype=float))


def innovation(xhat2, y, c) -> np.ndarray:
    """e_y = (xhat2 + c) - y, the predicted-minus-measured output."""
    return np.asarray(xhat2, dtype=float) + np.asarray(c, dtype=float) - np.asarray(y, dtype=float)


def switching_injection(e_y, rho, epsilon: float = 0.0) -> np.ndarray:
    """nu = -rho * sign(e_y), linearly interpolated inside the boundary layer."""
    e_y = np.asarray(e_y, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise ValueError("rho must be positive")
    if epsilon > 0:
        return -rho * np.clip(e_y / epsilon, -1.0, 1.0)
    return -rho * np.sign(e_y)


def observer_derivative(obs: ObserverState, u, y, sys: PartitionedSystem,
                        params: ObserverParams):
    """One evaluation of the observer vector field; returns (xhat1_dot, xhat2_dot).

    u is the full known-input vector (received predecessor input, own input,
    filtered-channel offsets); y is the transformed output (direct channels,
    filter states).
    """
    u = np.asarray(u, dtype=float)
    e_y = innovation(obs.xhat2, y, sys.ext.c)
    nu = switching_injection(e_y, params.rho_vec, params.epsilon)
    A22ns = sys.A22 - params.A22s  # feedback part removed from the copy dynamics
    dx1 = sys.A11 @ obs.xhat1 + sys.A12 @ obs.xhat2 + sys.B1 @ u - sys.A12 @ e_y
    dx2 = sys.A21 @ obs.xhat1 + sys.A22 @ obs.xhat2 + sys.B2 @ u - A22ns @ e_y + nu
    return dx1, dx2


def eoi_derivative(nu_fil, nu, A_nu) -> np.ndarray:
    """Filtered equivalent output injection: nu_fil_dot = A_nu (nu_fil - nu)."""
    A_nu = np.atleast_2d(A_nu)
    if np.any(np.diag(A_nu) >= 0):
        raise ValueError("EOI filter gain must be negative definite")
    return A_nu @ (np.asarray(nu_fil, dtype=float) - np.asarray(nu, dtype=float))
