"""Attack signals: definition, evaluation, injection, synthesis, classification.

A scenario holds one signal for the communicated predecessor input and one
per measured channel.  Analytic kinds expose exact derivatives and running
integrals, which the stealthy generator and the classifier rely on.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .extended import OutputPartition, REL_VELOCITY_CHANNEL
from .platoon import PlatoonParams

__all__ = [
    "SignalSpec",
    "AttackScenario",
    "AttackClass",
    "eval_attack",
    "inject",
    "make_stealthy",
    "classify",
    "zero_scenario",
]

_ANALYTIC_KINDS = ("zero", "step", "ramp", "sinusoid", "filtered_ramp")
_KINDS = _ANALYTIC_KINDS + ("sampled", "stealth_input", "stealth_integral")


@dataclass(frozen=True)
class SignalSpec:
    """One time-parameterized injection signal.

    kinds:
      zero
      step(amplitude, onset)
      ramp(slope, onset)
      sinusoid(amplitude, frequency [Hz], phase, onset)
      filtered_ramp(slope, pole<0, onset): ramp fed through a first-order lag
      sampled(times, values): linear interpolation, no derivatives
      stealth_input / stealth_integral: companions derived from a profile
        (see make_stealthy); params: profile, sign, tau_hat
    """

    kind: str = "zero"
    amplitude: float = 0.0
    slope: float = 0.0
    frequency: float = 0.0
    phase: float = 0.0
    onset: float = 0.0
    pole: float = -1.0
    times: tuple[float, ...] | None = None
    values: tuple[float, ...] | None = None
    profile: "SignalSpec | None" = None
    sign: float = 1.0
    tau_hat: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown signal kind {self.kind!r}")
        if self.onset < 0:
            raise ValueError("onset must be non-negative")
        if self.kind == "filtered_ramp" and not (self.pole < 0):
            raise ValueError("filtered_ramp pole must be negative")
        if self.kind == "sampled" and (self.times is None or self.values is None):
            raise ValueError("sampled signal needs times and values")
        for v in (self.amplitude, self.slope, self.frequency, self.phase):
            if not np.isfinite(v):
                raise ValueError("signal parameters must be finite")
        if self.kind in ("stealth_input", "stealth_integral") and self.profile is None:
            raise ValueError(f"{self.kind} needs a profile signal")

    # -- evaluation ---------------------------------------------------------

    @property
    def is_zero(self) -> bool:
        if self.kind == "zero":
            return True
        if self.kind == "step":
            return self.amplitude == 0.0
        if self.kind == "ramp":
            return self.slope == 0.0
        if self.kind == "sinusoid":
            return self.amplitude == 0.0
        if self.kind == "filtered_ramp":
            return self.slope == 0.0
        if self.kind in ("stealth_input", "stealth_integral"):
            return self.profile.is_zero
        return False

    @property
    def differentiable(self) -> bool:
        """Twice differentiable with derivatives available in closed form."""
        return self.kind in ("zero", "ramp", "sinusoid", "filtered_ramp")

    def _local(self, t):
        t = np.asarray(t, dtype=float)
        return t - self.onset, t >= self.onset

    def value(self, t):
        """Pointwise evaluation, exactly zero before onset."""
        tl, on = self._local(t)
        tl = np.where(on, tl, 0.0)
        if self.kind == "zero":
            out = np.zeros_like(tl)
        elif self.kind == "step":
            out = self.amplitude * np.ones_like(tl)
        elif self.kind == "ramp":
            out = self.slope * tl
        elif self.kind == "sinusoid":
            w = 2.0 * np.pi * self.frequency
            out = self.amplitude * np.sin(w * tl + self.phase)
        elif self.kind == "filtered_ramp":
            a = -self.pole
            out = self.slope * (tl - (1.0 - np.exp(-a * tl)) / a)
        elif self.kind == "sampled":
            tt = np.asarray(self.times, dtype=float)
            vv = np.asarray(self.values, dtype=float)
            t_arr = np.asarray(t, dtype=float)
            if np.any(t_arr < tt[0] - 1e-12) or np.any(t_arr > tt[-1] + 1e-12):
                raise ValueError("sampled signal queried outside its table")
            return np.interp(t_arr, tt, vv) if t_arr.ndim else float(np.interp(t_arr, tt, vv))
        elif self.kind == "stealth_input":
            out = self.sign * (self.tau_hat * self.profile.deriv2(t) + self.profile.deriv(t))
            return out
        else:  # stealth_integral
            out = self.sign * self.profile.integral(t)
            return out
        out = np.where(on, out, 0.0)
        return float(out) if out.ndim == 0 else out

    def deriv(self, t):
        """First time derivative (analytic kinds only)."""
        tl, on = self._local(t)
        tl = np.where(on, tl, 0.0)
        if self.kind == "zero" or self.kind == "step":
            out = np.zeros_like(tl)  # step: zero a.e., onset jump excluded
        elif self.kind == "ramp":
            out = self.slope * np.ones_like(tl)
        elif self.kind == "sinusoid":
            w = 2.0 * np.pi * self.frequency
            out = self.amplitude * w * np.cos(w * tl + self.phase)
        elif self.kind == "filtered_ramp":
            a = -self.pole
            out = self.slope * (1.0 - np.exp(-a * tl))
        else:
            raise ValueError(f"{self.kind} signal has no analytic derivative")
        out = np.where(on, out, 0.0)
        return float(out) if out.ndim == 0 else out

    def deriv2(self, t):
        """Second time derivative (analytic kinds only)."""
        tl, on = self._local(t)
        tl = np.where(on, tl, 0.0)
        if self.kind in ("zero", "step", "ramp"):
            out = np.zeros_like(tl)
        elif self.kind == "sinusoid":
            w = 2.0 * np.pi * self.frequency
            out = -self.amplitude * w * w * np.sin(w * tl + self.phase)
        elif self.kind == "filtered_ramp":
            a = -self.pole
            out = self.slope * a * np.exp(-a * tl)
        else:
            raise ValueError(f"{self.kind} signal has no analytic second derivative")
        out = np.where(on, out, 0.0)
        return float(out) if out.ndim == 0 else out

    def integral(self, t):
        """Running integral from 0 (zero before onset; analytic kinds only)."""
        tl, on = self._local(t)
        tl = np.where(on, tl, 0.0)
        if self.kind == "zero":
            out = np.zeros_like(tl)
        elif self.kind == "step":
            out = self.amplitude * tl
        elif self.kind == "ramp":
            out = 0.5 * self.slope * tl**2
        elif self.kind == "sinusoid":
            w = 2.0 * np.pi * self.frequency
            if w == 0.0:
                out = self.amplitude * np.sin(self.phase) * tl
            else:
                out = self.amplitude * (np.cos(self.phase) - np.cos(w * tl + self.phase)) / w
        elif self.kind == "filtered_ramp":
            a = -self.pole
            out = self.slope * (0.5 * tl**2 - tl / a + (1.0 - np.exp(-a * tl)) / a**2)
        else:
            raise ValueError(f"{self.kind} signal has no analytic integral")
        out = np.where(on, out, 0.0)
        return float(out) if out.ndim == 0 else out


def zero_scenario() -> "AttackScenario":
    z = SignalSpec()
    return AttackScenario(du=z, dy=(z, z, z, z))


@dataclass(frozen=True)
class AttackScenario:
    """Injections on the communicated input and the four measured channels."""

    du: SignalSpec
    dy: tuple[SignalSpec, SignalSpec, SignalSpec, SignalSpec]

    def __post_init__(self):
        if len(self.dy) != 4:
            raise ValueError("a scenario carries exactly four measurement signals")

    @property
    def is_zero(self) -> bool:
        return self.du.is_zero and all(s.is_zero for s in self.dy)

    def scaled(self, factor: float) -> "AttackScenario":
        """Scenario with all signal magnitudes scaled by a factor."""
        def _scale(s: SignalSpec) -> SignalSpec:
            if s.kind in ("zero",):
                return s
            if s.kind == "sampled":
                return replace(s, values=tuple(factor * v for v in s.values))
            if s.kind in ("stealth_input", "stealth_integral"):
                return replace(s, profile=_scale(s.profile))
            return replace(s, amplitude=factor * s.amplitude, slope=factor * s.slope)
        return AttackScenario(du=_scale(self.du), dy=tuple(_scale(s) for s in self.dy))


def eval_attack(sc: AttackScenario, t):
    """(du, dy[0..3]) at time t (scalar or array)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("attack evaluation requires t >= 0")
    du = sc.du.value(t)
    dy = np.stack([s.value(t) for s in sc.dy], axis=-1)
    return du, dy


def inject(u_lead, y, sc: AttackScenario, t):
    """Additive man-in-the-middle injection on the communicated input and outputs."""
    du, dy = eval_attack(sc, t)
    return u_lead + du, np.asarray(y, dtype=float) + dy


def make_stealthy(dy1_profile: SignalSpec, params: PlatoonParams,
                  sign_input: float = 1.0, sign_integral: float = 1.0) -> AttackScenario:
    """Build the stealthy scenario riding the relative-velocity channel.

    Given the profile injected on the relative-velocity measurement, the
    companion signals are

        du      = sign_input    * (tau_hat * profile_ddot + profile_dot)
        dy_gap  = sign_integral * integral(profile)

    with the own-velocity and own-acceleration channels untouched.  The
    default signs are the ones consistent with this package's measurement
    convention; both are configurable so the alternative can be exercised.
    """
    if not dy1_profile.differentiable:
        raise ValueError(
            "stealthy generation needs a twice-differentiable profile "
            f"(got kind {dy1_profile.kind!r})"
        )
    zero = SignalSpec()
    du = SignalSpec(kind="stealth_input", profile=dy1_profile, sign=sign_input,
                    tau_hat=params.tau_hat)
    d_gap = SignalSpec(kind="stealth_integral", profile=dy1_profile, sign=sign_integral)
    return AttackScenario(du=du, dy=(d_gap, dy1_profile, zero, zero))


@dataclass(frozen=True)
class AttackClass:
    label: str  # healthy | stealthy | quantifiable | non-stealthy
    reason: str

    def __str__(self):
        return f"{self.label}: {self.reason}"


def _max_abs(values) -> float:
    return float(np.max(np.abs(values))) if np.size(values) else 0.0


def classify(sc: AttackScenario, design: OutputPartition, params: PlatoonParams,
             horizon: float = 60.0, n_samples: int = 4001,
             tol: float = 1e-9) -> AttackClass:
    """Classify a scenario for the split that keeps the relative velocity direct.

    quantifiable: the relative-velocity channel is untouched (and something
    else is);  stealthy: the signals satisfy the stealth relations
    du = tau_hat*ddot + dot, d/dt(dy_gap) = dy_relvel, dy_own = 0;
    non-stealthy: everything else.  Relations are checked on a sample grid
    with analytic derivatives where available.
    """
    if not (design.h == 3 and design.kept_channels == (REL_VELOCITY_CHANNEL,)):
        raise ValueError("classification is defined for the split keeping only "
                         "the relative-velocity channel direct")
    if sc.is_zero:
        return AttackClass("healthy", "all injection signals are identically zero")

    t = np.linspace(0.0, horizon, n_samples)
    dy_rv = sc.dy[REL_VELOCITY_CHANNEL - 1]
    rv_vals = dy_rv.value(t)
    if _max_abs(rv_vals) <= tol:
        return AttackClass(
            "quantifiable",
            "relative-velocity channel untouched; remaining injections are "
            "reconstructible from the filtered injection",
        )

    # stealth relations
    scale = max(1.0, _max_abs(rv_vals))
    if not (sc.dy[2].is_zero and sc.dy[3].is_zero):
        return AttackClass("non-stealthy",
                           "own-velocity/own-acceleration channels attacked "
                           "alongside the relative velocity")
    if not dy_rv.differentiable:
        return AttackClass("non-stealthy",
                           "relative-velocity injection lacks the derivatives "
                           "needed for the stealth relations")
    try:
        du_expected = params.tau_hat * dy_rv.deriv2(t) + dy_rv.deriv(t)
        gap_expected = dy_rv.integral(t)
    except ValueError:
        return AttackClass("non-stealthy", "stealth relations not evaluable")
    res_du = _max_abs(sc.du.value(t) - du_expected)
    res_gap = _max_abs(sc.dy[0].value(t) - gap_expected)
    if res_du <= tol * scale and res_gap <= tol * scale:
        return AttackClass("stealthy",
                           "injections satisfy the stealth relations on the "
                           "communicated input and spacing channels")
    return AttackClass(
        "non-stealthy",
        f"stealth relation residuals (input {res_du:.2e}, spacing {res_gap:.2e}) "
        "exceed tolerance",
    )
