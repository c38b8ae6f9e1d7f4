"""Reconstruction of quantifiable attacks from the filtered injection.

The steady filtered injection of a constant attack (relative-velocity
channel untouched) is R @ Delta with R = F2 - A21 A11^+ F1; inverting R
recovers the attack up to a box whose half-width is set by the uncertainty
bounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .extended import PartitionedSystem, check_pole_pair, check_rank_condition
from .numerics import pseudo_inverse

__all__ = [
    "EstimatorGain",
    "EstimateInterval",
    "final_value_response",
    "build_estimator",
    "estimate",
    "containment_check",
]


@dataclass(frozen=True)
class EstimatorGain:
    G: np.ndarray       # maps nu_fil to the attack estimate
    delta: np.ndarray   # elementwise half-width of the containment box
    R: np.ndarray       # steady nu_fil response matrix, nu_fil -> R @ Delta


@dataclass(frozen=True)
class EstimateInterval:
    center: np.ndarray
    halfwidth: np.ndarray

    @property
    def lower(self) -> np.ndarray:
        return self.center - self.halfwidth

    @property
    def upper(self) -> np.ndarray:
        return self.center + self.halfwidth


def final_value_response(sys: PartitionedSystem) -> np.ndarray:
    """Steady map from a constant attack to the filtered injection.

    Derived from the error dynamics: e1 -> A11^+ F1 Delta and
    nu -> F2 Delta - A21 e1, hence R = F2 - A21 A11^+ F1.
    """
    return sys.F2 - sys.A21 @ pseudo_inverse(sys.A11) @ sys.F1


def build_estimator(sys: PartitionedSystem, eta_bar, rank_tol: float = 1e-10,
                    pole_tol: float = 1e-8, strict_poles: bool = False) -> EstimatorGain:
    """Gain and containment half-width; refuses rank-deficient designs."""
    rank = check_rank_condition(sys, tol=rank_tol)
    if not rank.passed:
        raise ValueError(
            "attack reconstruction undefined: rank condition fails "
            f"(estimator rank {rank.rank_estimator}, input-matrix rank {rank.rank_fe}, "
            f"required {rank.required}, outputs {sys.p})"
        )
    for name, col in (("uncertainty", sys.E1), ("attack", sys.F1)):
        rep = check_pole_pair(sys.A11, col, tol_marginal=pole_tol)
        if not rep.passed(strict_poles):
            raise ValueError(f"pole pair for the {name} channel is not admissible")
    eta_bar = np.asarray(eta_bar, dtype=float)
    R = final_value_response(sys)
    G = pseudo_inverse(R)
    A21_A11p = sys.A21 @ pseudo_inverse(sys.A11)
    delta = np.abs(G) @ (np.abs(A21_A11p) @ np.abs(sys.E1) + np.abs(sys.E2)) @ eta_bar
    return EstimatorGain(G=G, delta=delta, R=R)


def estimate(nu_fil, gain: EstimatorGain) -> EstimateInterval:
    """Attack estimate with its containment box; linear in the filtered injection."""
    nu_fil = np.asarray(nu_fil, dtype=float)
    return EstimateInterval(center=gain.G @ nu_fil, halfwidth=gain.delta)


def containment_check(est: EstimateInterval, true_delta, slack: float = 0.0) -> np.ndarray:
    """Componentwise |center - truth| <= halfwidth + slack."""
    true_delta = np.asarray(true_delta, dtype=float)
    if true_delta.shape != est.center.shape:
        raise ValueError("dimension mismatch between estimate and true attack")
    return np.abs(est.center - true_delta) <= est.halfwidth + slack
