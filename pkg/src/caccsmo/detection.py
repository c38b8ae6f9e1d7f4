"""Healthy-error envelopes, switching-gain admissibility, and the event-driven threshold.

The threshold is a per-channel scalar recursion updated whenever the
switching injection starts a confirmed positive interval; it propagates the
worst healthy duty cycle of the injection through the EOI filter, so the
filtered injection of an attack-free run can never cross it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .extended import PartitionedSystem
from .numerics import matrix_exponential, pseudo_inverse
from .observer import ObserverParams

__all__ = [
    "ErrorBounds",
    "healthy_error_bounds",
    "rho_lower_bound",
    "ThresholdState",
    "DetectionEvent",
    "track_sign_changes",
    "update_threshold",
    "detect",
    "threshold_trace",
]

log = logging.getLogger(__name__)


@dataclass
class ErrorBounds:
    """Envelopes of the healthy observer error.

    e1_upper/e1_lower are time evaluators; e1_abs is a conservative
    time-invariant bound (initial error plus the steady forcing response).
    e2_abs0 is the output-error band on sliding; the e2dot bounds require
    rho and exist only when it dominates the healthy forcing.
    """

    A11: np.ndarray
    forcing: np.ndarray          # |A12 D| zeta1_bar + |E1| eta_bar
    e1_init: np.ndarray
    e1_abs: np.ndarray
    e2_abs0: np.ndarray
    e2dot_upper0: np.ndarray | None
    e2dot_lower0: np.ndarray | None
    _A11_pinv: np.ndarray = field(repr=False, default=None)

    def e1_upper(self, t: float) -> np.ndarray:
        eat = matrix_exponential(self.A11, t)
        return eat @ self.e1_init - self._A11_pinv @ (np.eye(len(self.e1_init)) - eat) @ self.forcing

    def e1_lower(self, t: float) -> np.ndarray:
        eat = matrix_exponential(self.A11, t)
        return eat @ self.e1_init + self._A11_pinv @ (np.eye(len(self.e1_init)) - eat) @ self.forcing


def healthy_error_bounds(sys: PartitionedSystem, eta_bar, zeta1_bar, e1_init=None,
                         rho=None, a22s=None) -> ErrorBounds:
    """Build the healthy-error envelopes for one partitioned design.

    zeta1_bar: noise bounds of the direct output channels (length p-h).
    eta_bar: bounds of (model uncertainty, noise on filtered channels).
    rho/a22s are needed for the e2dot bounds; omit them to get only the
    e1/e2 envelopes.
    """
    eta_bar = np.asarray(eta_bar, dtype=float)
    zeta1_bar = np.atleast_1d(np.asarray(zeta1_bar, dtype=float))
    e1_init = np.zeros(sys.n1) if e1_init is None else np.asarray(e1_init, dtype=float)
    D = sys.ext.D
    b = np.abs(sys.A12 @ D) @ zeta1_bar + np.abs(sys.E1) @ eta_bar
    A11_pinv = pseudo_inverse(sys.A11)
    e1_abs = np.abs(e1_init) + np.abs(A11_pinv @ b)
    e2_abs0 = np.abs(D) @ zeta1_bar

    e2dot_up = e2dot_lo = None
    if rho is not None:
        rho = np.asarray(rho, dtype=float)
        if a22s is None:
            raise ValueError("e2dot bounds need the stable feedback diagonal a22s")
        A22s = np.diag(np.asarray(a22s, dtype=float))
        A22ns = sys.A22 - A22s
        zeta_term = (np.abs(A22ns @ D) + np.abs(A22s @ D)) @ zeta1_bar
        healthy = np.abs(sys.A21) @ e1_abs + zeta_term + np.abs(sys.E2) @ eta_bar
        e2dot_up = healthy + rho
        e2dot_lo = rho - healthy
        if np.any(e2dot_lo <= 0):
            raise ValueError(
                "switching gain too small: the healthy error rate bound is not "
                f"positive on channels {np.where(e2dot_lo <= 0)[0].tolist()}"
            )
    return ErrorBounds(
        A11=sys.A11, forcing=b, e1_init=e1_init, e1_abs=e1_abs, e2_abs0=e2_abs0,
        e2dot_upper0=e2dot_up, e2dot_lower0=e2dot_lo, _A11_pinv=A11_pinv,
    )


def rho_lower_bound(sys: PartitionedSystem, bounds: ErrorBounds, delta_bar,
                    eta_bar, zeta1_bar, a22s=None, attack_aware: bool = False,
                    dy1_bar=None, dy1dot_bar=None, warn_rho=None) -> np.ndarray:
    """Componentwise lower bound the switching gain must exceed.

    The base bound covers the healthy forcing plus any attack within
    delta_bar; attack_aware adds the direct output-attack terms bounded by
    dy1_bar / dy1dot_bar.  Pass warn_rho to log a warning when a configured
    gain sits below the bound.
    """
    delta_bar = np.asarray(delta_bar, dtype=float)
    eta_bar = np.asarray(eta_bar, dtype=float)
    zeta1_bar = np.atleast_1d(np.asarray(zeta1_bar, dtype=float))
    D = sys.ext.D
    lb = (np.abs(sys.A21) @ bounds.e1_abs
          + np.abs(sys.A22 @ D) @ zeta1_bar
          + np.abs(sys.E2) @ eta_bar
          + np.abs(sys.F2) @ delta_bar)
    if attack_aware:
        H = sys.ext.H
        dy1_bar = np.atleast_1d(np.asarray(dy1_bar if dy1_bar is not None else 0.0, dtype=float))
        dy1dot_bar = np.atleast_1d(np.asarray(dy1dot_bar if dy1dot_bar is not None else 0.0, dtype=float))
        if dy1_bar.size == 1:
            dy1_bar = np.full(H.shape[1], float(dy1_bar[0]))
        if dy1dot_bar.size == 1:
            dy1dot_bar = np.full(H.shape[1], float(dy1dot_bar[0]))
        lb = lb + np.abs(H) @ dy1dot_bar + np.abs(sys.A22 @ H) @ dy1_bar
    if warn_rho is not None:
        warn_rho = np.asarray(warn_rho, dtype=float)
        short = np.where(warn_rho <= lb)[0]
        if short.size:
            log.warning(
                "configured switching gain is below its admissibility bound on "
                "channels %s (rho=%s, bound=%s); sliding is only guaranteed for "
                "smaller attacks", short.tolist(), warn_rho.tolist(),
                np.round(lb, 3).tolist(),
            )
    return lb


@dataclass
class DetectionEvent:
    time: float
    channel: int
    nu_fil: float
    threshold: float


@dataclass
class ThresholdState:
    """Per-channel threshold recursion state driven by sign-change events.

    Events are confirmed only after the new sign persists for dwell_min;
    sub-dwell chattering is coalesced.  The value holds at rho until the
    first full negative/positive event pair.
    """

    rho: float
    a_nu: float
    t_bar: float
    rate_ratio: float     # e2dot_upper0 / e2dot_lower0
    dwell_min: float
    value: float = None
    cur_sign: int = 0
    pend_sign: int = 0
    pend_start: float = 0.0
    last_neg_event: float | None = None
    events: list = field(default_factory=list)

    def __post_init__(self):
        if self.a_nu >= 0:
            raise ValueError("EOI filter gain must be negative")
        if self.rate_ratio < 1.0:
            # upper rate below lower rate means the bounds are inconsistent
            raise ValueError("rate ratio must be >= 1")
        if self.value is None:
            self.value = self.rho


def update_threshold(state: ThresholdState, t_minus: float) -> float:
    """Advance the recursion at a confirmed start of a positive interval.

    t_minus is the measured duration of the preceding negative interval;
    the positive interval is bounded by the worst-case rate ratio.
    """
    a = state.a_nu
    rho = state.rho
    t_plus = state.rate_ratio * t_minus
    t_tilde = t_minus + t_plus
    nubar0 = np.exp(a * t_tilde) * state.value + (1.0 - 2.0 * np.exp(a * t_plus) + np.exp(a * t_tilde)) * rho
    state.value = np.exp(a * state.t_bar) * nubar0 + (1.0 - np.exp(a * state.t_bar)) * rho
    return state.value


def track_sign_changes(nu_sample: float, t: float, state: ThresholdState) -> ThresholdState:
    """Feed one switching-injection sample; confirms events after the dwell time."""
    s = int(np.sign(nu_sample))
    if s == 0 or s == state.cur_sign:
        state.pend_sign = 0
        return state
    if s != state.pend_sign:
        state.pend_sign = s
        state.pend_start = t
        return state
    if t - state.pend_start >= state.dwell_min:
        t_ev = state.pend_start
        first = state.cur_sign == 0
        state.cur_sign = s
        state.pend_sign = 0
        if not first:
            state.events.append(t_ev)
            if s > 0:
                if state.last_neg_event is not None:
                    update_threshold(state, t_ev - state.last_neg_event)
            else:
                state.last_neg_event = t_ev
    return state


def detect(nu_fil: float, state: ThresholdState, t: float, channel: int = 0) -> DetectionEvent | None:
    """Symmetric two-sided test of the filtered injection against the threshold."""
    if abs(nu_fil) > state.value:
        return DetectionEvent(time=t, channel=channel, nu_fil=float(nu_fil),
                              threshold=float(state.value))
    return None


def threshold_trace(t: np.ndarray, nu: np.ndarray, nu_fil: np.ndarray,
                    bounds: ErrorBounds, obs: ObserverParams,
                    dwell_min: float | None = None):
    """Run the event tracker over a full record.

    Returns (threshold array shaped like nu, detection events, sign events).
    Detection reports the first crossing per channel.
    """
    if bounds.e2dot_upper0 is None:
        raise ValueError("threshold needs the e2dot bounds (build them with rho)")
    t = np.asarray(t, dtype=float)
    nu = np.atleast_2d(np.asarray(nu, dtype=float))
    nu_fil = np.atleast_2d(np.asarray(nu_fil, dtype=float))
    p = nu.shape[1]
    if dwell_min is None:
        dwell_min = 2.0 * (t[1] - t[0] if len(t) > 1 else 1e-3)
    rho = obs.rho_vec
    thr = np.empty_like(nu)
    detections: list[DetectionEvent] = []
    sign_events = []
    for ch in range(p):
        with np.errstate(divide="ignore", invalid="ignore"):
            t_bar = 2.0 * bounds.e2_abs0[ch] / bounds.e2dot_upper0[ch]
        state = ThresholdState(
            rho=float(rho[ch]), a_nu=float(obs.a_nu[ch]), t_bar=float(t_bar),
            rate_ratio=float(bounds.e2dot_upper0[ch] / bounds.e2dot_lower0[ch]),
            dwell_min=dwell_min,
        )
        fired = False
        for k in range(len(t)):
            track_sign_changes(nu[k, ch], t[k], state)
            thr[k, ch] = state.value
            if not fired:
                ev = detect(nu_fil[k, ch], state, t[k], channel=ch)
                if ev is not None:
                    detections.append(ev)
                    fired = True
        sign_events.append(list(state.events))
    return thr, detections, sign_events
