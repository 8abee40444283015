"""SCA-based penalized relaxation of the subarray-activation problem.

The binary activation problem is relaxed to [0,1] with linearized binarity
penalties; each iteration solves a convex subproblem whose constraints are
inner approximations of the exact QoS set (signal terms lower-bounded by
tangents, interference pair products upper-bounded by sign-matched bilinear
bounds) and is tight at the expansion point. The subproblem is built once per
scenario with cvxpy parameters so the iteration loop re-solves a cached
canonicalization.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass

import cvxpy as cp
import numpy as np

from .metrics import (
    ActivationState,
    QoSTargets,
    audit_constraints,
    total_power,
)
from .scenario import Scenario
from .surrogates import (
    linearized_binary_penalty,
    pair_matrices,
    signed_pair_bound,
    tangent_square_lb,
    taylor_lb_quadratic,
)


class InfeasibleInstanceError(RuntimeError):
    """The all-active state violates the exact constraints; no instance to solve."""

    def __init__(self, audit: dict):
        super().__init__(f"all-on state infeasible: {audit}")
        self.audit = audit


class SubproblemInfeasibleError(RuntimeError):
    """The convex subproblem itself has no feasible point."""


class SolverFailureError(RuntimeError):
    """The convex backend failed (numerical breakdown, unbounded, ...)."""


@dataclass
class SurrogatePoint:
    """Expansion point of iteration n plus the current penalty weights."""

    a_bar_n: np.ndarray
    a_tilde_n: np.ndarray
    a_n: np.ndarray
    penalty: tuple[float, float, float]

    @classmethod
    def all_on(cls, S: int, penalty) -> "SurrogatePoint":
        return cls(np.ones(S), np.ones(S), np.ones(S), tuple(penalty))

    @classmethod
    def from_state(cls, state: ActivationState, penalty) -> "SurrogatePoint":
        return cls(state.a_bar.copy(), state.a_tilde.copy(), state.a.copy(), tuple(penalty))

    def as_state(self) -> ActivationState:
        return ActivationState(self.a_bar_n.copy(), self.a_tilde_n.copy(), self.a_n.copy())


def penalized_objective(state, point: SurrogatePoint, precoders, moments, config) -> float:
    """Exact power plus the linearized binarity penalties at the expansion point."""
    pc = total_power(state, precoders, moments, config)
    l1, l2, l3 = point.penalty
    pen = (
        l1 * np.sum(linearized_binary_penalty(state.a_bar, point.a_bar_n))
        + l2 * np.sum(linearized_binary_penalty(state.a_tilde, point.a_tilde_n))
        + l3 * np.sum(linearized_binary_penalty(state.a, point.a_n))
    )
    return float(pc + pen)


# ---------------------------------------------------------------------------
# static constraint coefficients
# ---------------------------------------------------------------------------


def _herm_diag_cross(M: np.ndarray, iu) -> tuple[np.ndarray, np.ndarray]:
    """Split a Hermitian (S,S) coefficient matrix into diagonal weights and the
    real pair coefficients 2 Re{M[s,s']} for s < s'."""
    diag = np.real(np.diagonal(M))
    cross = 2.0 * np.real(M[iu])
    return diag, cross


@dataclass(frozen=True, eq=False)
class ConstraintCoefficients:
    """Expansion-point-independent coefficient arrays of the subproblem.

    Each QoS constraint is normalized so its terms are O(1): the NFUE/FFUE
    constraints are divided by eta_k (and beta_k), the beampattern constraint
    by kappa. Cross-pair coefficients follow the (s < s') ordering of
    ``pair_matrices``.
    """

    S: int
    K_N: int
    K_F: int
    noise: float
    A_plus: np.ndarray
    A_minus: np.ndarray
    # NFUE constraints
    nf_c: np.ndarray
    nf_diag_abar: np.ndarray
    nf_cross_abar: np.ndarray
    nf_diag_atil: np.ndarray
    nf_cross_atil: np.ndarray
    nf_diag_a: np.ndarray
    nf_const: np.ndarray
    nf_emit: np.ndarray
    # FFUE constraints
    ff_c: np.ndarray
    ff_diag_abar: np.ndarray
    ff_diag_atil: np.ndarray
    ff_cross_atil: np.ndarray
    ff_diag_a: np.ndarray
    ff_const: np.ndarray
    ff_emit: np.ndarray
    # beampattern constraint (scaled by 1/kappa)
    sen_c: np.ndarray
    sen_w: np.ndarray
    sen_diag_atil: np.ndarray
    sen_cross_atil: np.ndarray
    sen_diag_a: np.ndarray
    sen_emit: bool
    # power model
    p_bar: np.ndarray
    p_til: np.ndarray
    p_sen: np.ndarray
    P_t: float
    P_s: float
    zeta: float
    P_syn: float
    Ms_Pct: float


def build_coefficients(scn: Scenario, targets: QoSTargets) -> ConstraintCoefficients:
    cfg = scn.config
    m = scn.moments
    eta_near, eta_far, eta_sense = scn.precoders.etas
    S, K_N, K_F = cfg.S, cfg.K_N, cfg.K_F
    _, A_plus, A_minus = pair_matrices(S)
    iu = np.triu_indices(S, k=1)
    P = iu[0].size
    sigma2 = cfg.noise_power_W

    # NFUE constraint k: |c_k . a_bar|^2 >= (R_k/eta_k) * (interference + sigma^2)
    nf_c = m.nfue_signal if K_N else np.zeros((0, S), dtype=complex)
    nf_diag_abar = np.zeros((K_N, S))
    nf_cross_abar = np.zeros((K_N, P))
    nf_diag_atil = np.zeros((K_N, S))
    nf_cross_atil = np.zeros((K_N, P))
    nf_diag_a = np.zeros((K_N, S))
    nf_const = np.zeros(K_N)
    nf_emit = np.zeros(K_N, dtype=bool)
    for k in range(K_N):
        floor = targets.r_bar[k]
        nf_emit[k] = floor > 0
        scale = floor / eta_near[k]
        M_intra = np.zeros((S, S), dtype=complex)
        for i in range(K_N):
            if i == k:
                continue
            b = m.nfue_cross[k, i, :]
            M_intra += eta_near[i] * np.outer(b, b.conj())
        d, c = _herm_diag_cross(M_intra, iu)
        nf_diag_abar[k], nf_cross_abar[k] = scale * d, scale * c
        if K_F:
            M_inter = np.einsum("j,jst->st", eta_far, m.rho[k])
            d, c = _herm_diag_cross(M_inter, iu)
            nf_diag_atil[k], nf_cross_atil[k] = scale * d, scale * c
        nf_diag_a[k] = scale * eta_sense * m.nfue_sense_gain[k]
        nf_const[k] = scale * sigma2

    # FFUE constraint k, normalized by eta_k * beta_k
    beta = scn.beta
    ff_c = (
        m.far_signal_mean / np.sqrt(beta)[:, None] if K_F else np.zeros((0, S), dtype=complex)
    )
    ff_diag_abar = np.zeros((K_F, S))
    ff_diag_atil = np.zeros((K_F, S))
    ff_cross_atil = np.zeros((K_F, P))
    ff_diag_a = np.zeros((K_F, S))
    ff_const = np.zeros(K_F)
    ff_emit = np.zeros(K_F, dtype=bool)
    for k in range(K_F):
        floor = targets.r_tilde[k]
        ff_emit[k] = floor > 0
        scale = floor / (eta_far[k] * beta[k])
        ff_diag_atil[k] = scale * eta_far[k] * m.eps[k]
        if K_F > 1:
            M_cross = np.einsum(
                "j,jst->st",
                eta_far * (np.arange(K_F) != k),
                m.varrho[k],
            )
            d, c = _herm_diag_cross(M_cross, iu)
            ff_diag_atil[k] = ff_diag_atil[k] + scale * d
            ff_cross_atil[k] = scale * c
        if K_N:
            ff_diag_abar[k] = scale * np.einsum("i,is->s", eta_near, m.t[k])
        ff_diag_a[k] = scale * beta[k] * eta_sense * m.w_sense_norm2
        ff_const[k] = scale * sigma2

    # beampattern constraint, scaled by 1/kappa so the floor becomes 1
    sen_emit = targets.kappa > 0
    kap = targets.kappa if sen_emit else 1.0
    sen_c = m.sen_near if K_N else np.zeros((0, S), dtype=complex)
    sen_w = (eta_near / kap) if K_N else np.zeros(0)
    if K_F:
        M_sen = np.einsum("j,jst->st", eta_far, m.sen_far) / kap
        sen_diag_atil, sen_cross_atil = _herm_diag_cross(M_sen, iu)
    else:
        sen_diag_atil, sen_cross_atil = np.zeros(S), np.zeros(P)
    sen_diag_a = eta_sense * m.sen_match / kap

    p_bar = m.psi_bar @ eta_near if K_N else np.zeros(S)
    p_til = m.psi_tilde @ eta_far if K_F else np.zeros(S)
    p_sen = eta_sense * m.w_sense_norm2

    return ConstraintCoefficients(
        S=S,
        K_N=K_N,
        K_F=K_F,
        noise=sigma2,
        A_plus=A_plus,
        A_minus=A_minus,
        nf_c=nf_c,
        nf_diag_abar=nf_diag_abar,
        nf_cross_abar=nf_cross_abar,
        nf_diag_atil=nf_diag_atil,
        nf_cross_atil=nf_cross_atil,
        nf_diag_a=nf_diag_a,
        nf_const=nf_const,
        nf_emit=nf_emit,
        ff_c=ff_c,
        ff_diag_abar=ff_diag_abar,
        ff_diag_atil=ff_diag_atil,
        ff_cross_atil=ff_cross_atil,
        ff_diag_a=ff_diag_a,
        ff_const=ff_const,
        ff_emit=ff_emit,
        sen_c=sen_c,
        sen_w=sen_w,
        sen_diag_atil=sen_diag_atil,
        sen_cross_atil=sen_cross_atil,
        sen_diag_a=sen_diag_a,
        sen_emit=sen_emit,
        p_bar=p_bar,
        p_til=p_til,
        p_sen=p_sen,
        P_t=cfg.P_t_W,
        P_s=cfg.P_s_W,
        zeta=cfg.zeta,
        P_syn=cfg.P_syn_W,
        Ms_Pct=cfg.M_s * cfg.P_ct_W,
    )


# ---------------------------------------------------------------------------
# numpy-side surrogate / exact evaluation (shared with tests and the rounding
# repair; the cvxpy builder renders the same coefficient arrays)
# ---------------------------------------------------------------------------


def evaluate_surrogate(co: ConstraintCoefficients, point: SurrogatePoint, Abar, Atil, Aa) -> dict:
    """Surrogate constraint sides for a batch of states, as (lhs, rhs) pairs.

    Feasibility for the subproblem means lhs >= rhs for the QoS families and
    value <= cap for the power families.
    """
    Abar = np.atleast_2d(Abar)
    Atil = np.atleast_2d(Atil)
    Aa = np.atleast_2d(Aa)
    N = Abar.shape[0]
    out = {}

    nf_lhs = np.full((co.K_N, N), np.inf)
    nf_rhs = np.zeros((co.K_N, N))
    for k in range(co.K_N):
        if not co.nf_emit[k]:
            continue
        nf_lhs[k] = taylor_lb_quadratic(co.nf_c[k], Abar, point.a_bar_n)
        nf_rhs[k] = (
            (Abar**2) @ co.nf_diag_abar[k]
            + signed_pair_bound(co.nf_cross_abar[k], Abar, point.a_bar_n, co.A_plus, co.A_minus, "upper")
            + (Atil**2) @ co.nf_diag_atil[k]
            + signed_pair_bound(co.nf_cross_atil[k], Atil, point.a_tilde_n, co.A_plus, co.A_minus, "upper")
            + (Aa**2) @ co.nf_diag_a[k]
            + co.nf_const[k]
        )
    out["nfue"] = (nf_lhs, nf_rhs)

    ff_lhs = np.full((co.K_F, N), np.inf)
    ff_rhs = np.zeros((co.K_F, N))
    for k in range(co.K_F):
        if not co.ff_emit[k]:
            continue
        ff_lhs[k] = taylor_lb_quadratic(co.ff_c[k], Atil, point.a_tilde_n)
        ff_rhs[k] = (
            (Abar**2) @ co.ff_diag_abar[k]
            + (Atil**2) @ co.ff_diag_atil[k]
            + signed_pair_bound(co.ff_cross_atil[k], Atil, point.a_tilde_n, co.A_plus, co.A_minus, "upper")
            + (Aa**2) @ co.ff_diag_a[k]
            + co.ff_const[k]
        )
    out["ffue"] = (ff_lhs, ff_rhs)

    if co.sen_emit:
        beam = np.zeros(N)
        for k in range(co.K_N):
            beam += co.sen_w[k] * taylor_lb_quadratic(co.sen_c[k], Abar, point.a_bar_n)
        beam += tangent_square_lb(Atil, point.a_tilde_n) @ co.sen_diag_atil
        beam += signed_pair_bound(co.sen_cross_atil, Atil, point.a_tilde_n, co.A_plus, co.A_minus, "lower")
        beam += tangent_square_lb(Aa, point.a_n) @ co.sen_diag_a
        out["beampattern"] = (beam, np.ones(N))
    else:
        out["beampattern"] = (np.full(N, np.inf), np.ones(N))

    gamma = _gamma_batch(co, Abar, Atil, Aa)
    out["total_power"] = (np.full(N, co.P_t), gamma.sum(axis=1))
    out["subarray_power"] = (np.full(N, co.P_s), gamma.max(axis=1))
    return out


def _pair_exact(C, x, A_plus, A_minus):
    if C.size == 0:
        return np.zeros(np.shape(x)[:-1])
    return 0.25 * (((x @ A_plus.T) ** 2 - (x @ A_minus.T) ** 2)) @ C


def evaluate_exact(co: ConstraintCoefficients, Abar, Atil, Aa) -> dict:
    """Exact counterparts of the surrogate constraint sides (same scaling)."""
    Abar = np.atleast_2d(Abar)
    Atil = np.atleast_2d(Atil)
    Aa = np.atleast_2d(Aa)
    N = Abar.shape[0]
    out = {}

    nf_lhs = np.full((co.K_N, N), np.inf)
    nf_rhs = np.zeros((co.K_N, N))
    for k in range(co.K_N):
        if not co.nf_emit[k]:
            continue
        nf_lhs[k] = np.abs(Abar @ co.nf_c[k]) ** 2
        nf_rhs[k] = (
            (Abar**2) @ co.nf_diag_abar[k]
            + _pair_exact(co.nf_cross_abar[k], Abar, co.A_plus, co.A_minus)
            + (Atil**2) @ co.nf_diag_atil[k]
            + _pair_exact(co.nf_cross_atil[k], Atil, co.A_plus, co.A_minus)
            + (Aa**2) @ co.nf_diag_a[k]
            + co.nf_const[k]
        )
    out["nfue"] = (nf_lhs, nf_rhs)

    ff_lhs = np.full((co.K_F, N), np.inf)
    ff_rhs = np.zeros((co.K_F, N))
    for k in range(co.K_F):
        if not co.ff_emit[k]:
            continue
        ff_lhs[k] = np.abs(Atil @ co.ff_c[k]) ** 2
        ff_rhs[k] = (
            (Abar**2) @ co.ff_diag_abar[k]
            + (Atil**2) @ co.ff_diag_atil[k]
            + _pair_exact(co.ff_cross_atil[k], Atil, co.A_plus, co.A_minus)
            + (Aa**2) @ co.ff_diag_a[k]
            + co.ff_const[k]
        )
    out["ffue"] = (ff_lhs, ff_rhs)

    if co.sen_emit:
        beam = np.zeros(N)
        for k in range(co.K_N):
            beam += co.sen_w[k] * np.abs(Abar @ co.sen_c[k]) ** 2
        beam += (Atil**2) @ co.sen_diag_atil
        beam += _pair_exact(co.sen_cross_atil, Atil, co.A_plus, co.A_minus)
        beam += (Aa**2) @ co.sen_diag_a
        out["beampattern"] = (beam, np.ones(N))
    else:
        out["beampattern"] = (np.full(N, np.inf), np.ones(N))

    gamma = _gamma_batch(co, Abar, Atil, Aa)
    out["total_power"] = (np.full(N, co.P_t), gamma.sum(axis=1))
    out["subarray_power"] = (np.full(N, co.P_s), gamma.max(axis=1))
    return out


def _gamma_batch(co: ConstraintCoefficients, Abar, Atil, Aa) -> np.ndarray:
    return (Abar**2) * co.p_bar + (Atil**2) * co.p_til + (Aa**2) * co.p_sen


# ---------------------------------------------------------------------------
# cvxpy subproblem
# ---------------------------------------------------------------------------


@dataclass
class ConvexSubproblem:
    """Assembled convex subproblem with its bookkeeping counts.

    Counting convention: each [0,1] box is one (two-sided) linear row and the
    per-subarray power cap is one quadratic block, which yields A_v = 3S
    variables, A_l = 6S linear rows (3S box + 3S coupling), and A_q = K + 3
    quadratic constraints (K SINR floors, beampattern, total power, subarray
    power block). Vacuous floors (zero targets) stay in the count but emit no
    cut.
    """

    builder: "SubproblemBuilder"
    point: SurrogatePoint
    n_variables: int
    n_linear: int
    n_quadratic: int
    manifest: tuple

    @property
    def counts(self) -> dict:
        return {"A_v": self.n_variables, "A_l": self.n_linear, "A_q": self.n_quadratic}


class SubproblemBuilder:
    """Parametrized convex subproblem; assemble() re-points it in microseconds."""

    def __init__(self, scn: Scenario, targets: QoSTargets, solver: str | None = None):
        self.scn = scn
        self.targets = targets
        self.coeffs = build_coefficients(scn, targets)
        self.solver = solver or "CLARABEL"
        self._build()

    def _build(self):
        co = self.coeffs
        S = co.S
        P = co.A_plus.shape[0]
        self.x_bar = cp.Variable(S, nonneg=True, name="a_bar")
        self.x_til = cp.Variable(S, nonneg=True, name="a_tilde")
        self.x_a = cp.Variable(S, nonneg=True, name="a")

        # per-iteration parameters
        self.p_nf_lin = cp.Parameter((co.K_N, S)) if co.K_N else None
        self.p_nf_const = cp.Parameter(co.K_N) if co.K_N else None
        self.p_ff_lin = cp.Parameter((co.K_F, S)) if co.K_F else None
        self.p_ff_const = cp.Parameter(co.K_F) if co.K_F else None
        self.p_sen_lin = cp.Parameter(S)
        self.p_sen_const = cp.Parameter()
        self.p_atil_n = cp.Parameter(S)
        self.p_atil_n_sq = cp.Parameter(S, nonneg=True)
        self.p_a_n = cp.Parameter(S)
        self.p_a_n_sq = cp.Parameter(S, nonneg=True)
        if P:
            self.p_dbar = cp.Parameter(P)
            self.p_d2bar = cp.Parameter(P, nonneg=True)
            self.p_sbar = cp.Parameter(P, nonneg=True)
            self.p_s2bar = cp.Parameter(P, nonneg=True)
            self.p_dtil = cp.Parameter(P)
            self.p_d2til = cp.Parameter(P, nonneg=True)
            self.p_stil = cp.Parameter(P, nonneg=True)
            self.p_s2til = cp.Parameter(P, nonneg=True)
        else:  # S = 1: no cross pairs, the bound helpers return 0 untouched
            self.p_dbar = self.p_d2bar = self.p_sbar = self.p_s2bar = None
            self.p_dtil = self.p_d2til = self.p_stil = self.p_s2til = None
        self.p_pen_bar = cp.Parameter(S)
        self.p_pen_til = cp.Parameter(S)
        self.p_pen_a = cp.Parameter(S)
        self.p_pen_const = cp.Parameter()

        def pair_ub(C, x, dpar, d2par, spar, s2par):
            if P == 0 or not np.any(C):
                return 0.0
            pos = np.clip(C, 0.0, None)
            neg = np.clip(-C, 0.0, None)
            expr = 0.0
            if pos.any():
                expr = expr + 0.25 * (
                    cp.sum_squares(cp.multiply(np.sqrt(pos), co.A_plus @ x))
                    - 2.0 * cp.sum(cp.multiply(pos, cp.multiply(dpar, co.A_minus @ x)))
                    + pos @ d2par
                )
            if neg.any():
                expr = expr + 0.25 * (
                    cp.sum_squares(cp.multiply(np.sqrt(neg), co.A_minus @ x))
                    - 2.0 * cp.sum(cp.multiply(neg, cp.multiply(spar, co.A_plus @ x)))
                    + neg @ s2par
                )
            return expr

        def pair_lb(C, x, dpar, d2par, spar, s2par):
            if P == 0 or not np.any(C):
                return 0.0
            pos = np.clip(C, 0.0, None)
            neg = np.clip(-C, 0.0, None)
            expr = 0.0
            if pos.any():
                expr = expr + 0.25 * (
                    2.0 * cp.sum(cp.multiply(pos, cp.multiply(spar, co.A_plus @ x)))
                    - pos @ s2par
                    - cp.sum_squares(cp.multiply(np.sqrt(pos), co.A_minus @ x))
                )
            if neg.any():
                expr = expr - 0.25 * (
                    cp.sum_squares(cp.multiply(np.sqrt(neg), co.A_plus @ x))
                    - 2.0 * cp.sum(cp.multiply(neg, cp.multiply(dpar, co.A_minus @ x)))
                    + neg @ d2par
                )
            return expr

        constraints = []
        manifest = []

        for k in range(co.K_N):
            if co.nf_emit[k]:
                rhs = (
                    co.nf_diag_abar[k] @ cp.square(self.x_bar)
                    + pair_ub(co.nf_cross_abar[k], self.x_bar, self.p_dbar, self.p_d2bar, self.p_sbar, self.p_s2bar)
                    + co.nf_diag_atil[k] @ cp.square(self.x_til)
                    + pair_ub(co.nf_cross_atil[k], self.x_til, self.p_dtil, self.p_d2til, self.p_stil, self.p_s2til)
                    + co.nf_diag_a[k] @ cp.square(self.x_a)
                    + co.nf_const[k]
                )
                constraints.append(rhs <= self.p_nf_lin[k] @ self.x_bar + self.p_nf_const[k])
            manifest.append(("nfue_sinr", k, "quadratic", bool(co.nf_emit[k])))

        for k in range(co.K_F):
            if co.ff_emit[k]:
                rhs = (
                    co.ff_diag_abar[k] @ cp.square(self.x_bar)
                    + co.ff_diag_atil[k] @ cp.square(self.x_til)
                    + pair_ub(co.ff_cross_atil[k], self.x_til, self.p_dtil, self.p_d2til, self.p_stil, self.p_s2til)
                    + co.ff_diag_a[k] @ cp.square(self.x_a)
                    + co.ff_const[k]
                )
                constraints.append(rhs <= self.p_ff_lin[k] @ self.x_til + self.p_ff_const[k])
            manifest.append(("ffue_sinr", k, "quadratic", bool(co.ff_emit[k])))

        if co.sen_emit:
            beam = self.p_sen_lin @ self.x_bar + self.p_sen_const
            beam = beam + co.sen_diag_atil @ (
                2.0 * cp.multiply(self.p_atil_n, self.x_til) - self.p_atil_n_sq
            )
            beam = beam + pair_lb(co.sen_cross_atil, self.x_til, self.p_dtil, self.p_d2til, self.p_stil, self.p_s2til)
            beam = beam + co.sen_diag_a @ (2.0 * cp.multiply(self.p_a_n, self.x_a) - self.p_a_n_sq)
            constraints.append(beam >= 1.0)
        manifest.append(("beampattern", 0, "quadratic", co.sen_emit))

        gamma = (
            cp.multiply(co.p_bar, cp.square(self.x_bar))
            + cp.multiply(co.p_til, cp.square(self.x_til))
            + cp.multiply(co.p_sen, cp.square(self.x_a))
        )
        constraints.append(cp.sum(gamma) <= co.P_t)
        manifest.append(("total_power", 0, "quadratic", True))
        constraints.append(gamma <= co.P_s)
        manifest.append(("subarray_power", 0, "quadratic", True))

        # box rows (one two-sided row per variable; nonnegativity lives in the
        # variable domain) and the relaxed min-coupling rows
        constraints += [self.x_bar <= 1, self.x_til <= 1, self.x_a <= 1]
        for name in ("box_a_bar", "box_a_tilde", "box_a"):
            manifest.append((name, -1, "linear_block", True))
        constraints += [
            self.x_a >= self.x_bar,
            self.x_a >= self.x_til,
            self.x_a <= self.x_bar + self.x_til,
        ]
        for name in ("couple_ge_bar", "couple_ge_tilde", "couple_le_sum"):
            manifest.append((name, -1, "linear_block", True))

        objective = (
            cp.sum(gamma) / co.zeta
            + 2.0 * co.P_syn
            + co.Ms_Pct * cp.sum(self.x_a)
            + self.p_pen_bar @ self.x_bar
            + self.p_pen_til @ self.x_til
            + self.p_pen_a @ self.x_a
            + self.p_pen_const
        )
        self.problem = cp.Problem(cp.Minimize(objective), constraints)
        self.manifest = tuple(manifest)
        self.n_variables = 3 * co.S
        self.n_linear = 6 * co.S
        self.n_quadratic = sum(1 for m in manifest if m[2] == "quadratic")

    def assemble(self, point: SurrogatePoint) -> ConvexSubproblem:
        co = self.coeffs
        ab, at, aa = point.a_bar_n, point.a_tilde_n, point.a_n
        if co.K_N:
            u = co.nf_c @ ab
            self.p_nf_lin.value = 2.0 * np.real(np.conj(u)[:, None] * co.nf_c)
            self.p_nf_const.value = -np.abs(u) ** 2
        if co.K_F:
            u = co.ff_c @ at
            self.p_ff_lin.value = 2.0 * np.real(np.conj(u)[:, None] * co.ff_c)
            self.p_ff_const.value = -np.abs(u) ** 2
        if co.K_N:
            u = co.sen_c @ ab
            self.p_sen_lin.value = np.einsum("k,ks->s", co.sen_w, 2.0 * np.real(np.conj(u)[:, None] * co.sen_c))
            self.p_sen_const.value = -float(co.sen_w @ np.abs(u) ** 2)
        else:
            self.p_sen_lin.value = np.zeros(co.S)
            self.p_sen_const.value = 0.0
        self.p_atil_n.value = at
        self.p_atil_n_sq.value = at**2
        self.p_a_n.value = aa
        self.p_a_n_sq.value = aa**2
        if co.A_plus.shape[0]:
            self.p_dbar.value = co.A_minus @ ab
            self.p_d2bar.value = (co.A_minus @ ab) ** 2
            self.p_sbar.value = co.A_plus @ ab
            self.p_s2bar.value = (co.A_plus @ ab) ** 2
            self.p_dtil.value = co.A_minus @ at
            self.p_d2til.value = (co.A_minus @ at) ** 2
            self.p_stil.value = co.A_plus @ at
            self.p_s2til.value = (co.A_plus @ at) ** 2
        l1, l2, l3 = point.penalty
        self.p_pen_bar.value = l1 * (1.0 - 2.0 * ab)
        self.p_pen_til.value = l2 * (1.0 - 2.0 * at)
        self.p_pen_a.value = l3 * (1.0 - 2.0 * aa)
        self.p_pen_const.value = float(l1 * np.sum(ab**2) + l2 * np.sum(at**2) + l3 * np.sum(aa**2))
        return ConvexSubproblem(
            builder=self,
            point=point,
            n_variables=self.n_variables,
            n_linear=self.n_linear,
            n_quadratic=self.n_quadratic,
            manifest=self.manifest,
        )

    def solve(self) -> tuple[ActivationState, float]:
        try:
            self.problem.solve(solver=self.solver)
        except cp.error.SolverError as err:
            raise SolverFailureError(str(err)) from err
        status = self.problem.status
        if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            raise SubproblemInfeasibleError(f"subproblem status {status}")
        if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            raise SolverFailureError(f"subproblem status {status}")
        if status == cp.OPTIMAL_INACCURATE:
            warnings.warn("subproblem solved to reduced accuracy", stacklevel=2)
        state = ActivationState(
            np.clip(self.x_bar.value, 0.0, 1.0),
            np.clip(self.x_til.value, 0.0, 1.0),
            np.clip(self.x_a.value, 0.0, 1.0),
        )
        return state, float(self.problem.value)


def assemble_subproblem(
    point: SurrogatePoint,
    scn: Scenario,
    targets: QoSTargets,
    builder: SubproblemBuilder | None = None,
    solver: str | None = None,
) -> ConvexSubproblem:
    """Build (or re-point) the convex subproblem at the given expansion point."""
    if builder is None:
        builder = SubproblemBuilder(scn, targets, solver=solver)
    return builder.assemble(point)


def solve_subproblem(sp: ConvexSubproblem) -> ActivationState:
    """Solve an assembled subproblem; the optimal value lands in sp.objective_value."""
    state, value = sp.builder.solve()
    sp.objective_value = value
    return state


# ---------------------------------------------------------------------------
# rounding and the SCA loop
# ---------------------------------------------------------------------------


def round_and_repair(relaxed: ActivationState, scn: Scenario, targets: QoSTargets) -> ActivationState:
    """Threshold at 0.5, then re-activate largest-relaxed-value entries until feasible.

    Terminates because the all-on state is feasible whenever the instance is.
    Re-activation is per (service, subarray) entry; ties break to the lowest
    index with a_bar entries before a_tilde.
    """
    a_bar = (relaxed.a_bar >= 0.5).astype(float)
    a_til = (relaxed.a_tilde >= 0.5).astype(float)
    relaxed_vals = np.concatenate([relaxed.a_bar, relaxed.a_tilde])
    S = relaxed.S
    while True:
        state = ActivationState.from_services(a_bar, a_til)
        audit = audit_constraints(
            state, scn.precoders, scn.moments, scn.config, targets, scn.beta
        )
        if audit["feasible"]:
            return state
        flat = np.concatenate([a_bar, a_til])
        off = np.flatnonzero(flat == 0.0)
        if off.size == 0:
            return state  # all-on; caller guarantees feasibility there
        pick = off[np.argmax(relaxed_vals[off])]
        if pick < S:
            a_bar[pick] = 1.0
        else:
            a_til[pick - S] = 1.0


@dataclass
class SolveResult:
    """Converged activation with traces and an exact-metric feasibility audit."""

    activation: ActivationState
    relaxed_final: ActivationState
    objective_trace: list[float]
    power_trace: list[float]
    gap_trace: list[float]
    penalty_trace: list[float]
    iterations: int
    converged: bool
    degraded: bool
    feasible: bool
    audit: dict
    power_W: float
    counts: dict
    binarity_gap: float

    def to_json(self) -> str:
        payload = {
            "activation": {
                "a_bar": self.activation.a_bar.tolist(),
                "a_tilde": self.activation.a_tilde.tolist(),
                "a": self.activation.a.tolist(),
            },
            "relaxed_final": {
                "a_bar": self.relaxed_final.a_bar.tolist(),
                "a_tilde": self.relaxed_final.a_tilde.tolist(),
                "a": self.relaxed_final.a.tolist(),
            },
            "objective_trace": self.objective_trace,
            "power_trace": self.power_trace,
            "iterations": self.iterations,
            "converged": self.converged,
            "degraded": self.degraded,
            "feasible": self.feasible,
            "audit": self.audit,
            "power_W": self.power_W,
            "counts": self.counts,
            "binarity_gap": self.binarity_gap,
        }
        return json.dumps(payload, indent=2)

    def write_trace_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "P_C1", "P_C", "max_binarity_gap", "penalty"])
            for i, (obj, pc, gap, lam) in enumerate(
                zip(self.objective_trace, self.power_trace, self.gap_trace, self.penalty_trace),
                start=1,
            ):
                writer.writerow([i, repr(obj), repr(pc), repr(gap), repr(lam)])


def run_sca(scn: Scenario, targets: QoSTargets, solver: str | None = None) -> SolveResult:
    """Penalized SCA loop: all-on start, growing penalties, round-and-repair finish."""
    cfg = scn.config
    S = cfg.S
    all_on = ActivationState.all_on(S)
    audit0 = audit_constraints(all_on, scn.precoders, scn.moments, cfg, targets, scn.beta)
    if not audit0["feasible"]:
        raise InfeasibleInstanceError(audit0)

    builder = SubproblemBuilder(scn, targets, solver=solver)
    lam = (cfg.penalty_init,) * 3
    point = SurrogatePoint.all_on(S, lam)
    objective_trace: list[float] = []
    power_trace: list[float] = []
    gap_trace: list[float] = []
    penalty_trace: list[float] = []
    relaxed = all_on
    degraded = False
    converged = False
    prev_obj = None

    prev_state = all_on
    for _ in range(cfg.I1):
        builder.assemble(point)
        try:
            state, obj = builder.solve()
        except (SubproblemInfeasibleError, SolverFailureError):
            degraded = True
            break
        relaxed = state
        objective_trace.append(obj)
        power_trace.append(total_power(state, scn.precoders, scn.moments, cfg))
        gap_trace.append(state.binarity_gap())
        penalty_trace.append(lam[0])
        lam = tuple(min(l * cfg.penalty_growth, cfg.penalty_cap) for l in lam)
        point = SurrogatePoint.from_state(state, lam)
        # Stop on stabilized objective, or on a frozen near-binary iterate (the
        # growing penalty constant keeps moving P_C1 even when the variables
        # are done). A frozen fractional iterate is left to iterate: the rising
        # penalty can still push entries pinned above 1/2 back up to 1.
        obj_settled = prev_obj is not None and abs(obj - prev_obj) < cfg.tol_eps1 * max(
            abs(prev_obj), 1e-12
        )
        point_settled = (
            len(objective_trace) > 1
            and np.max(np.abs(state.stacked() - prev_state.stacked())) < 1e-5
            and state.binarity_gap() <= 0.01
        )
        if obj_settled or point_settled:
            converged = True
            break
        prev_obj = obj
        prev_state = state

    binary = round_and_repair(relaxed, scn, targets)
    audit = audit_constraints(binary, scn.precoders, scn.moments, cfg, targets, scn.beta)
    return SolveResult(
        activation=binary,
        relaxed_final=relaxed,
        objective_trace=objective_trace,
        power_trace=power_trace,
        gap_trace=gap_trace,
        penalty_trace=penalty_trace,
        iterations=len(objective_trace),
        converged=converged,
        degraded=degraded,
        feasible=audit["feasible"],
        audit=audit,
        power_W=total_power(binary, scn.precoders, scn.moments, cfg),
        counts={"A_v": builder.n_variables, "A_l": builder.n_linear, "A_q": builder.n_quadratic},
        binarity_gap=relaxed.binarity_gap(),
    )
