"""Extended and partitioned state space for observer-based attack detection.

The measured channels selected by the output split are low-pass filtered
(z-states) so the attacks on them reappear in the state equation; the state
is then transformed so the remaining outputs read the last p coordinates
directly.  All admissibility checks for a candidate split (pole pairs, rank
condition, dimension count) live here.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .numerics import controllable_subspace, numeric_rank, pseudo_inverse
from .platoon import PlatoonParams, output_matrix

__all__ = [
    "OutputPartition",
    "ExtendedMatrices",
    "PartitionedSystem",
    "PolePairReport",
    "RankReport",
    "DesignReport",
    "build_extended",
    "build_partitioned",
    "check_pole_pair",
    "check_rank_condition",
    "enumerate_valid_designs",
    "SingularCompletionError",
]

# Natural physical coordinates, in completion preference order.
_COORD_NAMES = ("p_lead", "v_lead", "a_lead", "p_fol", "v_fol", "a_fol")
_CHANNEL_NAMES = ("spacing", "rel_velocity", "own_velocity", "own_accel")
REL_VELOCITY_CHANNEL = 2  # 1-based measured-channel index


class SingularCompletionError(ValueError):
    """Raised when no selector completion makes the state transform invertible."""


@dataclass(frozen=True)
class OutputPartition:
    """Output permutation (1-based measured-channel order) and split size h.

    The first p-h permuted channels stay in the output equation; the last h
    are filtered into the state equation.
    """

    order: tuple[int, int, int, int]
    h: int

    def __post_init__(self):
        if sorted(self.order) != [1, 2, 3, 4]:
            raise ValueError(f"order must be a permutation of 1..4, got {self.order}")
        if not 0 <= self.h <= 4:
            raise ValueError(f"h must lie in 0..4, got {self.h}")

    @property
    def p(self) -> int:
        return 4

    @property
    def ty_matrix(self) -> np.ndarray:
        T = np.zeros((4, 4))
        for i, ch in enumerate(self.order):
            T[i, ch - 1] = 1.0
        return T

    @property
    def kept_channels(self) -> tuple[int, ...]:
        """Channels remaining in the output equation (direct feed)."""
        return self.order[: 4 - self.h]

    @property
    def filtered_channels(self) -> tuple[int, ...]:
        """Channels moved to the state equation through the output filter."""
        return self.order[4 - self.h:]

    @property
    def relvel_in_direct(self) -> bool:
        return REL_VELOCITY_CHANNEL in self.kept_channels

    def describe(self) -> str:
        kept = ",".join(_CHANNEL_NAMES[c - 1] for c in self.kept_channels) or "-"
        fil = ",".join(_CHANNEL_NAMES[c - 1] for c in self.filtered_channels) or "-"
        return f"direct[{kept}] filtered[{fil}]"


@dataclass
class ExtendedMatrices:
    """State-space blocks of the filter-extended model.

    State x = (x_lead, x_fol, z), input u = (u_lead_received, u_fol, c2),
    disturbance eta = (eta_model, noise on filtered channels),
    attack Delta = (du, attacks on filtered channels).
    """

    part: OutputPartition
    A_e: np.ndarray
    B_e: np.ndarray
    E_e: np.ndarray
    F_e: np.ndarray
    C_e: np.ndarray
    c: np.ndarray
    D: np.ndarray
    H: np.ndarray
    A_f: np.ndarray
    # pre-extension pieces, kept for the simulator and counterfactual replay
    A_hat: np.ndarray
    B_hat: np.ndarray
    E: np.ndarray
    F: np.ndarray
    C: np.ndarray
    c_tilde: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    tau_hat: float

    @property
    def n(self) -> int:
        return self.A_e.shape[0]

    @property
    def p(self) -> int:
        return 4

    @property
    def h(self) -> int:
        return self.part.h


@dataclass
class PartitionedSystem:
    """Similarity-transformed blocks with the outputs as the last p coordinates."""

    ext: ExtendedMatrices
    T: np.ndarray
    Tinv: np.ndarray
    A11: np.ndarray
    A12: np.ndarray
    A21: np.ndarray
    A22: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    E1: np.ndarray
    E2: np.ndarray
    F1: np.ndarray
    F2: np.ndarray
    x1_labels: tuple[str, ...]

    @property
    def n(self) -> int:
        return self.ext.n

    @property
    def p(self) -> int:
        return 4

    @property
    def h(self) -> int:
        return self.ext.h

    @property
    def n1(self) -> int:
        return self.n - self.p


def _single_car(tau: float):
    A = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, -1.0 / tau]])
    b = np.array([[0.0], [0.0], [1.0 / tau]])
    return A, b


def build_extended(params: PlatoonParams, part: OutputPartition, a_fil: float | np.ndarray = -5.0) -> ExtendedMatrices:
    """Assemble the filter-extended system for one output split.

    a_fil: filter gain, scalar (expanded to a_fil * I_h) or diagonal h-vector;
    must be strictly negative.
    """
    h = part.h
    a_fil = np.atleast_1d(np.asarray(a_fil, dtype=float))
    if a_fil.size == 1:
        a_fil = np.full(h, float(a_fil[0]))
    if a_fil.size != h:
        raise ValueError(f"filter gain needs {h} diagonal entries, got {a_fil.size}")
    if h and not np.all(a_fil < 0):
        raise ValueError("output filter gain must be strictly negative definite")
    A_f = np.diag(a_fil) if h else np.zeros((0, 0))

    tau_hat = params.tau_hat
    A_lead, b_lead = _single_car(tau_hat)  # follower's model of the leader
    A_fol, b_fol = _single_car(params.follower.tau)

    A_hat = np.block([[A_lead, np.zeros((3, 3))], [np.zeros((3, 3)), A_fol]])
    B_hat = np.block([[b_lead, np.zeros((3, 1))], [np.zeros((3, 1)), b_fol]])
    E = np.zeros((6, 1))
    E[2, 0] = 1.0 / tau_hat
    F = np.zeros((6, 1))
    F[2, 0] = -1.0 / tau_hat

    C, c_tilde = output_matrix(params.follower.length)
    Ty = part.ty_matrix
    Cp = Ty @ C
    cp = Ty @ c_tilde
    q = 4 - h  # direct output channels
    C1, C2 = Cp[:q], Cp[q:]
    c1, c2 = cp[:q], cp[q:]

    n = 6 + h
    A_e = np.zeros((n, n))
    A_e[:6, :6] = A_hat
    if h:
        A_e[6:, :6] = -A_f @ C2
        A_e[6:, 6:] = A_f

    B_e = np.zeros((n, 2 + h))
    B_e[:6, :2] = B_hat
    if h:
        B_e[6:, 2:] = -A_f

    E_e = np.zeros((n, 1 + h))
    E_e[:6, :1] = E
    F_e = np.zeros((n, 1 + h))
    F_e[:6, :1] = F
    if h:
        E_e[6:, 1:] = -A_f
        F_e[6:, 1:] = -A_f

    C_e = np.zeros((4, n))
    C_e[:q, :6] = C1
    if h:
        C_e[q:, 6:] = np.eye(h)
    c = np.concatenate([c1, np.zeros(h)])
    D = np.vstack([np.eye(q), np.zeros((h, q))])
    H = np.vstack([np.eye(q), np.zeros((h, q))])  # unit direct feed of the output attack

    return ExtendedMatrices(
        part=part, A_e=A_e, B_e=B_e, E_e=E_e, F_e=F_e, C_e=C_e, c=c, D=D, H=H,
        A_f=A_f, A_hat=A_hat, B_hat=B_hat, E=E, F=F, C=C, c_tilde=c_tilde,
        C1=C1, C2=C2, c1=c1, c2=c2, tau_hat=tau_hat,
    )


def _selector_completion(ext: ExtendedMatrices, tol: float = 1e-9):
    """Greedy natural-coordinate completion of C_e to an invertible transform."""
    n, p = ext.n, ext.p
    need = n - p
    rows: list[np.ndarray] = []
    labels: list[str] = []
    rejected: list[str] = []
    base = [r for r in ext.C_e]
    for idx, name in enumerate(_COORD_NAMES):
        if len(rows) == need:
            break
        cand = np.zeros(n)
        cand[idx] = 1.0
        trial = np.vstack(rows + [cand] + base)
        if np.linalg.matrix_rank(trial, tol=tol) == trial.shape[0]:
            rows.append(cand)
            labels.append(name)
        else:
            rejected.append(name)
    if len(rows) != need:
        raise SingularCompletionError(
            "cannot complete the output transform to an invertible matrix; "
            f"colliding coordinates: {', '.join(rejected)} (split {ext.part.describe()})"
        )
    return np.vstack(rows) if rows else np.zeros((0, n)), tuple(labels)


def _orthonormal_completion(ext: ExtendedMatrices, rotate_seed: int | None = None):
    import scipy.linalg

    N = scipy.linalg.null_space(ext.C_e).T  # rows orthonormal, orthogonal to C_e rows
    if rotate_seed is not None:
        rng = np.random.default_rng(rotate_seed)
        Q, _ = np.linalg.qr(rng.standard_normal((N.shape[0], N.shape[0])))
        N = Q @ N
    labels = tuple(f"w{i}" for i in range(N.shape[0]))
    return N, labels


def build_partitioned(ext: ExtendedMatrices, completion: str = "selectors",
                      rotate_seed: int | None = None) -> PartitionedSystem:
    """Partition the extended system so that y = x2 (+ offsets).

    completion: "selectors" keeps natural physical coordinates in x1;
    "orthonormal" uses an orthonormal basis of the complement (optionally
    rotated by rotate_seed, for invariance checks).
    """
    if completion == "selectors":
        R, labels = _selector_completion(ext)
    elif completion == "orthonormal":
        R, labels = _orthonormal_completion(ext, rotate_seed)
    else:
        raise ValueError(f"unknown completion {completion!r}")

    T = np.vstack([R, ext.C_e])
    cond = np.linalg.cond(T)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularCompletionError(
            f"state transform is numerically singular (cond={cond:.3g})"
        )
    Tinv = np.linalg.inv(T)

    m = ext.n - ext.p
    Abar = T @ ext.A_e @ Tinv
    Bbar = T @ ext.B_e
    Ebar = T @ ext.E_e
    Fbar = T @ ext.F_e
    return PartitionedSystem(
        ext=ext, T=T, Tinv=Tinv,
        A11=Abar[:m, :m], A12=Abar[:m, m:], A21=Abar[m:, :m], A22=Abar[m:, m:],
        B1=Bbar[:m], B2=Bbar[m:], E1=Ebar[:m], E2=Ebar[m:],
        F1=Fbar[:m], F2=Fbar[m:], x1_labels=labels,
    )


@dataclass
class PolePairReport:
    eigenvalues: np.ndarray
    classifications: tuple[str, ...]
    subspace_dim: int
    pass_lenient: bool
    pass_strict: bool

    def passed(self, strict: bool) -> bool:
        return self.pass_strict if strict else self.pass_lenient


def check_pole_pair(A11: np.ndarray, G: np.ndarray, tol_marginal: float = 1e-8,
                    rank_tol: float = 1e-10) -> PolePairReport:
    """Classify the eigenvalues of A11 restricted to the subspace reachable from G.

    Modes that the disturbance column cannot excite are excluded.  A mode is
    marginal when |Re| <= tol_marginal; lenient passing allows marginal
    modes, strict passing does not.
    """
    A11 = np.atleast_2d(np.asarray(A11, dtype=float))
    if A11.shape[0] != A11.shape[1]:
        raise ValueError("A11 must be square")
    G = np.atleast_2d(np.asarray(G, dtype=float))
    if G.shape[0] != A11.shape[0]:
        raise ValueError("dimension mismatch between A11 and the input block")
    U = controllable_subspace(A11, G, tol=rank_tol)
    if U.shape[1] == 0:
        return PolePairReport(np.zeros(0, dtype=complex), (), 0, True, True)
    eigs = np.linalg.eigvals(U.T @ A11 @ U)
    labels = []
    for lam in eigs:
        if lam.real < -tol_marginal:
            labels.append("stable")
        elif lam.real <= tol_marginal:
            labels.append("marginal")
        else:
            labels.append("unstable")
    return PolePairReport(
        eigenvalues=eigs,
        classifications=tuple(labels),
        subspace_dim=U.shape[1],
        pass_lenient="unstable" not in labels,
        pass_strict=all(l == "stable" for l in labels),
    )


@dataclass
class RankReport:
    rank_estimator: int
    rank_fe: int
    required: int
    dim_ok: bool

    @property
    def passed(self) -> bool:
        return self.dim_ok and self.rank_estimator == self.required and self.rank_fe == self.required


def check_rank_condition(sys: PartitionedSystem, tol: float = 1e-10) -> RankReport:
    """Rank of (A21 A11^+ F1 - F2) and of F_e against the attack count 1+h."""
    M = sys.A21 @ pseudo_inverse(sys.A11, tol=1e-12) @ sys.F1 - sys.F2
    required = 1 + sys.h
    return RankReport(
        rank_estimator=numeric_rank(M, tol=tol),
        rank_fe=numeric_rank(sys.ext.F_e, tol=tol),
        required=required,
        dim_ok=sys.p >= required,
    )


@dataclass
class DesignReport:
    part: OutputPartition
    constructible: bool
    reason: str
    poles_E: PolePairReport | None
    poles_F: PolePairReport | None
    rank: RankReport | None
    relvel_in_direct: bool

    def admissible(self, strict: bool = False) -> bool:
        if not self.constructible:
            return False
        return (
            self.poles_E.passed(strict)
            and self.poles_F.passed(strict)
            and self.rank.passed
        )

    def record(self, strict: bool = False) -> dict:
        def _poles(rep):
            if rep is None:
                return None
            return {
                "eigenvalues": [[float(l.real), float(l.imag)] for l in rep.eigenvalues],
                "classes": list(rep.classifications),
                "pass_lenient": rep.pass_lenient,
                "pass_strict": rep.pass_strict,
            }

        return {
            "order": list(self.part.order),
            "h": self.part.h,
            "split": self.part.describe(),
            "constructible": self.constructible,
            "reason": self.reason,
            "poles_E": _poles(self.poles_E),
            "poles_F": _poles(self.poles_F),
            "rank": None if self.rank is None else {
                "estimator": self.rank.rank_estimator,
                "F_e": self.rank.rank_fe,
                "required": self.rank.required,
                "dim_ok": self.rank.dim_ok,
                "pass": self.rank.passed,
            },
            "relvel_in_direct": self.relvel_in_direct,
            "admissible": self.admissible(strict),
        }


def _table_row(rep: DesignReport, strict: bool) -> str:
    part = rep.part
    if not rep.constructible:
        gates = "T-singular"
    else:
        bits = []
        bits.append("polesE:" + ("ok" if rep.poles_E.passed(strict) else "FAIL"))
        bits.append("polesF:" + ("ok" if rep.poles_F.passed(strict) else "FAIL"))
        bits.append("rank:" + ("ok" if rep.rank.passed else "FAIL"))
        gates = " ".join(bits)
    mark = "ADMISSIBLE" if rep.admissible(strict) else "rejected"
    rv = "y1" if rep.relvel_in_direct else "y2"
    return f"{str(part.order):>14} h={part.h}  relvel@{rv}  {gates:<34} {mark}"


def format_design_table(reports: list[DesignReport], strict: bool = False) -> str:
    head = f"{'order':>14} {'':>4} {'':>10} {'gates':<36} verdict"
    return "\n".join([head] + [_table_row(r, strict) for r in reports])


def enumerate_valid_designs(params: PlatoonParams, a_fil: float = -5.0,
                            tol_marginal: float = 1e-8) -> list[DesignReport]:
    """Run every output split (4! orderings x h in 0..4) through all gates."""
    reports = []
    for order in itertools.permutations((1, 2, 3, 4)):
        for h in range(5):
            part = OutputPartition(order=order, h=h)
            ext = build_extended(params, part, a_fil)
            try:
                sys = build_partitioned(ext)
            except SingularCompletionError as exc:
                reports.append(DesignReport(part, False, str(exc), None, None, None,
                                            part.relvel_in_direct))
                continue
            reports.append(
                DesignReport(
                    part=part,
                    constructible=True,
                    reason="",
                    poles_E=check_pole_pair(sys.A11, sys.E1, tol_marginal),
                    poles_F=check_pole_pair(sys.A11, sys.F1, tol_marginal),
                    rank=check_rank_condition(sys),
                    relvel_in_direct=part.relvel_in_direct,
                )
            )
    return reports
