"""SINRs, beampattern gain, power consumption, and QoS audits for any activation.

Every far-field expectation is a Monte Carlo sample mean over the ZF precoder
realizations; deterministic near-field quantities are computed exactly. The
batched helpers evaluate many activation states at once and are the single
source of the metric formulas (audits, baselines, and the exhaustive oracle all
route through them).
"""

from __future__ import annotations

import numpy as np
from dataclasses import dataclass

from .config import SystemConfig
from .precoding import PrecoderSet
from .scene import ChannelSet

# Relative slack below which a constraint counts as violated in audits.
AUDIT_REL_TOL = 1e-9


class EstimationError(ValueError):
    """Second-moment estimation is impossible (fewer than 2 realizations)."""


@dataclass
class ActivationState:
    """Per-subarray activation levels: a_bar (NFUE), a_tilde (FFUE), a (RF chain).

    Relaxed states live in [0,1]^S with a_s >= a_bar_s, a_s >= a_tilde_s,
    a_s <= a_bar_s + a_tilde_s. Binary states satisfy a_s = min(1, a_bar_s +
    a_tilde_s).
    """

    a_bar: np.ndarray
    a_tilde: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        self.a_bar = np.asarray(self.a_bar, dtype=float)
        self.a_tilde = np.asarray(self.a_tilde, dtype=float)
        self.a = np.asarray(self.a, dtype=float)

    @classmethod
    def all_on(cls, S: int) -> "ActivationState":
        return cls(np.ones(S), np.ones(S), np.ones(S))

    @classmethod
    def all_off(cls, S: int) -> "ActivationState":
        return cls(np.zeros(S), np.zeros(S), np.zeros(S))

    @classmethod
    def from_services(cls, a_bar, a_tilde) -> "ActivationState":
        """Couple the RF-chain flag as a = min(1, a_bar + a_tilde)."""
        a_bar = np.asarray(a_bar, dtype=float)
        a_tilde = np.asarray(a_tilde, dtype=float)
        return cls(a_bar, a_tilde, np.minimum(1.0, a_bar + a_tilde))

    @property
    def S(self) -> int:
        return self.a_bar.size

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.a_bar, self.a_tilde, self.a])

    def binarity_gap(self) -> float:
        """max_s min(v_s, 1 - v_s) over all three activation vectors."""
        v = self.stacked()
        return float(np.max(np.minimum(v, 1.0 - v))) if v.size else 0.0

    def is_binary(self, tol: float = 1e-6) -> bool:
        return self.binarity_gap() <= tol

    def copy(self) -> "ActivationState":
        return ActivationState(self.a_bar.copy(), self.a_tilde.copy(), self.a.copy())


@dataclass(frozen=True)
class SecondMoments:
    """Deterministic link terms plus Monte Carlo second moments of the ZF precoders.

    Shapes: rho (K_N, K_F, S, S), varrho (K_F, K_F, S, S), eps (K_F, S),
    t (K_F, K_N, S), psi_bar (S, K_N), psi_tilde (S, K_F). The nfue_* and sen_*
    fields cache the exact near-field inner products entering the SINR and
    beampattern expressions; far_signal_mean is E{g_sk^H w_sk} per FFUE and
    subarray.
    """

    rho: np.ndarray
    varrho: np.ndarray
    eps: np.ndarray
    t: np.ndarray
    psi_bar: np.ndarray
    psi_tilde: np.ndarray
    far_signal_mean: np.ndarray  # (K_F, S) complex
    nfue_cross: np.ndarray  # (K_N, K_N, S): g_sk^H w_si
    nfue_sense_gain: np.ndarray  # (K_N, S): |g_sk^H w_s^r|^2
    sen_near: np.ndarray  # (K_N, S): v_s^T w_sk
    sen_far: np.ndarray  # (K_F, S, S): E{(v_s^T w_sj)(v_s'^T w_s'j)^*}
    sen_match: np.ndarray  # (S,): |v_s^T w_s^r|^2
    w_sense_norm2: np.ndarray  # (S,)
    n_samples: int

    @property
    def nfue_signal(self) -> np.ndarray:
        """(K_N, S) desired-signal slices c_k[s] = g_sk^H w_sk."""
        K_N = self.nfue_cross.shape[0]
        idx = np.arange(K_N)
        return self.nfue_cross[idx, idx, :]


@dataclass(frozen=True)
class QoSTargets:
    """Linear SINR floors per user plus the beampattern-gain floor."""

    r_bar: np.ndarray
    r_tilde: np.ndarray
    kappa: float


def estimate_second_moments(
    channels: ChannelSet,
    precoders: PrecoderSet,
    geometry,
    steering_slices: np.ndarray,
) -> SecondMoments:
    """Replace every far-field expectation by its sample mean over realizations."""
    R = channels.far_realizations.shape[0]
    if R < 2:
        raise EstimationError("need at least 2 far-field realizations")
    S, M_s = geometry.S, geometry.M_s
    K_N = channels.h_near.shape[1]
    K_F = channels.beta.size

    Hs = channels.h_near.reshape(S, M_s, K_N)
    Ws = precoders.W_near.reshape(S, M_s, K_N)
    Vs = steering_slices  # (S, M_s)

    # exact near-field terms
    nfue_cross = np.einsum("smk,smi->kis", Hs.conj(), Ws)
    sense_inner = np.einsum("smk,sm->ks", Hs.conj(), precoders.w_sense)
    nfue_sense_gain = np.abs(sense_inner) ** 2
    sen_near = np.einsum("sm,smk->ks", Vs, Ws)
    sen_match = np.abs(np.einsum("sm,sm->s", Vs, precoders.w_sense)) ** 2
    w_sense_norm2 = np.sum(np.abs(precoders.w_sense) ** 2, axis=1)

    # Monte Carlo accumulation, deterministic realization order
    rho = np.zeros((K_N, K_F, S, S), dtype=complex)
    varrho = np.zeros((K_F, K_F, S, S), dtype=complex)
    sen_far = np.zeros((K_F, S, S), dtype=complex)
    u_mean = np.zeros((K_F, S), dtype=complex)
    u_abs2 = np.zeros((K_F, S))
    sqrt_beta = np.sqrt(channels.beta)
    for i in range(R):
        Wr = precoders.W_far[i].reshape(S, M_s, K_F)
        Gr = channels.far_realizations[i].reshape(S, M_s, K_F)
        # z[k,j,s] = g_bar_sk^H w_tilde_sj
        z = np.einsum("smk,smj->kjs", Hs.conj(), Wr)
        rho += np.einsum("kjs,kjt->kjst", z, z.conj())
        # u[k,j,s] = g_tilde_sk^H w_tilde_sj, physical channel sqrt(beta_k) h_k
        u = sqrt_beta[:, None, None] * np.einsum("smk,smj->kjs", Gr.conj(), Wr)
        varrho += np.einsum("kjs,kjt->kjst", u, u.conj())
        kk = np.arange(K_F)
        u_self = u[kk, kk, :]
        u_mean += u_self
        u_abs2 += np.abs(u_self) ** 2
        # y[j,s] = v_s^T w_tilde_sj
        y = np.einsum("sm,smj->js", Vs, Wr)
        sen_far += np.einsum("js,jt->jst", y, y.conj())
    rho /= R
    varrho /= R
    sen_far /= R
    u_mean /= R
    u_abs2 /= R
    eps = np.maximum(u_abs2 - np.abs(u_mean) ** 2, 0.0)

    t = channels.beta[:, None, None] * precoders.psi_bar.T[None, :, :]  # (K_F, K_N, S)
    return SecondMoments(
        rho=rho,
        varrho=varrho,
        eps=eps,
        t=t,
        psi_bar=precoders.psi_bar,
        psi_tilde=precoders.psi_tilde,
        far_signal_mean=u_mean,
        nfue_cross=nfue_cross,
        nfue_sense_gain=nfue_sense_gain,
        sen_near=sen_near,
        sen_far=sen_far,
        sen_match=sen_match,
        w_sense_norm2=w_sense_norm2,
        n_samples=R,
    )


# ---------------------------------------------------------------------------
# batched metric cores: activation batches have shape (N, S)
# ---------------------------------------------------------------------------


def _as_batch(state: ActivationState):
    return (
        state.a_bar.reshape(1, -1),
        state.a_tilde.reshape(1, -1),
        state.a.reshape(1, -1),
    )


def nfue_sinr_batch(
    moments: SecondMoments,
    precoders: PrecoderSet,
    config: SystemConfig,
    Abar: np.ndarray,
    Atil: np.ndarray,
    Aa: np.ndarray,
) -> np.ndarray:
    """(K_N, N) NFUE SINRs for a batch of activation states."""
    eta_near, eta_far, eta_sense = precoders.etas
    K_N = moments.nfue_cross.shape[0]
    N = Abar.shape[0]
    if K_N == 0:
        return np.zeros((0, N))
    U = moments.nfue_cross @ Abar.T  # (K_N, K_N, N)
    idx = np.arange(K_N)
    num = eta_near[:, None] * np.abs(U[idx, idx, :]) ** 2
    weighted = eta_near[None, :, None] * np.abs(U) ** 2
    intra = weighted.sum(axis=1) - weighted[idx, idx, :]
    if moments.rho.shape[1]:
        rho_w = np.einsum("j,kjst->kst", eta_far, moments.rho.real)
        inter = np.einsum("kst,ns,nt->kn", rho_w, Atil, Atil)
    else:
        inter = 0.0
    sense = (moments.nfue_sense_gain * eta_sense[None, :]) @ (Aa**2).T
    return num / (intra + inter + sense + config.noise_power_W)


def ffue_sinr_batch(
    moments: SecondMoments,
    precoders: PrecoderSet,
    config: SystemConfig,
    Abar: np.ndarray,
    Atil: np.ndarray,
    Aa: np.ndarray,
    beta: np.ndarray,
) -> np.ndarray:
    """(K_F, N) FFUE SINRs for a batch of activation states."""
    eta_near, eta_far, eta_sense = precoders.etas
    K_F = beta.size
    N = Abar.shape[0]
    if K_F == 0:
        return np.zeros((0, N))
    num = eta_far[:, None] * np.abs(moments.far_signal_mean @ Atil.T) ** 2
    # self-variance and cross-FFUE terms carry the activation squared, matching
    # the quadratic structure of the surrogate bounds
    self_var = eta_far[:, None] * (moments.eps @ (Atil**2).T)
    t_bar = np.einsum("i,kis->ks", eta_near, moments.t) if eta_near.size else np.zeros((K_F, moments.t.shape[2]))
    leak = t_bar @ (Abar**2).T
    if K_F > 1:
        mask = 1.0 - np.eye(K_F)
        var_w = np.einsum("j,kj,kjst->kst", eta_far, mask, moments.varrho.real)
        cross = np.einsum("kst,ns,nt->kn", var_w, Atil, Atil)
    else:
        cross = 0.0
    sense = beta[:, None] * ((eta_sense * moments.w_sense_norm2) @ (Aa**2).T)[None, :]
    return num / (self_var + leak + cross + sense + config.noise_power_W)


def beampattern_gain_batch(
    moments: SecondMoments,
    precoders: PrecoderSet,
    Abar: np.ndarray,
    Atil: np.ndarray,
    Aa: np.ndarray,
) -> np.ndarray:
    """(N,) transmit beampattern gain toward the target for each state."""
    eta_near, eta_far, eta_sense = precoders.etas
    N = Abar.shape[0]
    gain = np.zeros(N)
    if eta_near.size:
        NU = moments.sen_near @ Abar.T  # (K_N, N)
        gain += (eta_near[:, None] * np.abs(NU) ** 2).sum(axis=0)
    if eta_far.size:
        F_w = np.einsum("j,jst->st", eta_far, moments.sen_far.real)
        gain += np.einsum("st,ns,nt->n", F_w, Atil, Atil)
    gain += (eta_sense * moments.sen_match) @ (Aa**2).T
    return gain


def subarray_power_batch(
    moments: SecondMoments,
    precoders: PrecoderSet,
    Abar: np.ndarray,
    Atil: np.ndarray,
    Aa: np.ndarray,
) -> np.ndarray:
    """(S, N) per-subarray transmit powers gamma_s."""
    eta_near, eta_far, eta_sense = precoders.etas
    p_bar = moments.psi_bar @ eta_near if eta_near.size else 0.0
    p_til = moments.psi_tilde @ eta_far if eta_far.size else 0.0
    p_sen = eta_sense * moments.w_sense_norm2
    gamma = p_sen[:, None] * (Aa**2).T
    if np.ndim(p_bar):
        gamma = gamma + p_bar[:, None] * (Abar**2).T
    if np.ndim(p_til):
        gamma = gamma + p_til[:, None] * (Atil**2).T
    return gamma


def total_power_batch(
    moments: SecondMoments,
    precoders: PrecoderSet,
    config: SystemConfig,
    Abar: np.ndarray,
    Atil: np.ndarray,
    Aa: np.ndarray,
) -> np.ndarray:
    """(N,) total consumed power: transmit/zeta + 2 P_syn + circuit."""
    gamma = subarray_power_batch(moments, precoders, Abar, Atil, Aa)
    circuit = config.M_s * config.P_ct_W * Aa.sum(axis=1)
    return gamma.sum(axis=0) / config.zeta + 2.0 * config.P_syn_W + circuit


# ---------------------------------------------------------------------------
# single-state interfaces
# ---------------------------------------------------------------------------


def nfue_sinr(k, state, precoders, moments, config) -> float:
    """Linear SINR of NFUE k under the given activation."""
    Abar, Atil, Aa = _as_batch(state)
    return float(nfue_sinr_batch(moments, precoders, config, Abar, Atil, Aa)[k, 0])


def ffue_sinr(k, state, precoders, moments, config, beta) -> float:
    """Linear SINR of FFUE k under the given activation."""
    Abar, Atil, Aa = _as_batch(state)
    return float(ffue_sinr_batch(moments, precoders, config, Abar, Atil, Aa, beta)[k, 0])


def beampattern_gain(state, precoders, moments, config=None) -> float:
    Abar, Atil, Aa = _as_batch(state)
    return float(beampattern_gain_batch(moments, precoders, Abar, Atil, Aa)[0])


def subarray_powers(state, precoders, moments) -> np.ndarray:
    Abar, Atil, Aa = _as_batch(state)
    return subarray_power_batch(moments, precoders, Abar, Atil, Aa)[:, 0]


def total_power(state, precoders, moments, config) -> float:
    Abar, Atil, Aa = _as_batch(state)
    return float(total_power_batch(moments, precoders, config, Abar, Atil, Aa)[0])


def derive_qos_targets(precoders, moments, config, beta) -> QoSTargets:
    """QoS floors as qos_fraction times the full-activation metric values."""
    S = config.S
    full = ActivationState.all_on(S)
    Abar, Atil, Aa = _as_batch(full)
    q = config.qos_fraction
    r_bar = q * nfue_sinr_batch(moments, precoders, config, Abar, Atil, Aa)[:, 0]
    r_tilde = q * ffue_sinr_batch(moments, precoders, config, Abar, Atil, Aa, beta)[:, 0]
    kappa = q * float(beampattern_gain_batch(moments, precoders, Abar, Atil, Aa)[0])
    return QoSTargets(r_bar=r_bar, r_tilde=r_tilde, kappa=kappa)


def constraint_slacks_batch(
    moments: SecondMoments,
    precoders: PrecoderSet,
    config: SystemConfig,
    targets: QoSTargets,
    beta: np.ndarray,
    Abar: np.ndarray,
    Atil: np.ndarray,
    Aa: np.ndarray,
) -> dict[str, np.ndarray]:
    """Normalized slacks of every constraint; feasible iff all >= -AUDIT_REL_TOL.

    SINR and beampattern slacks are metric/floor - 1; power slacks are the
    remaining cap fraction.
    """
    gamma = subarray_power_batch(moments, precoders, Abar, Atil, Aa)
    sl = {
        "total_power": (config.P_t_W - gamma.sum(axis=0)) / config.P_t_W,
        "subarray_power": ((config.P_s_W - gamma) / config.P_s_W).min(axis=0),
    }
    def floor_slack(values, floors):
        # floor 0 means the constraint is vacuous: slack +inf
        safe = np.where(floors > 0, floors, 1.0)[:, None]
        ratio = np.where(floors[:, None] > 0, values / safe - 1.0, np.inf)
        return ratio.min(axis=0)

    if targets.r_bar.size:
        sinr = nfue_sinr_batch(moments, precoders, config, Abar, Atil, Aa)
        sl["nfue_sinr"] = floor_slack(sinr, targets.r_bar)
    if targets.r_tilde.size:
        sinr = ffue_sinr_batch(moments, precoders, config, Abar, Atil, Aa, beta)
        sl["ffue_sinr"] = floor_slack(sinr, targets.r_tilde)
    if targets.kappa > 0:
        gain = beampattern_gain_batch(moments, precoders, Abar, Atil, Aa)
        sl["beampattern"] = gain / targets.kappa - 1.0
    return sl


def feasible_mask(slacks: dict[str, np.ndarray], tol: float = AUDIT_REL_TOL) -> np.ndarray:
    mask = None
    for v in slacks.values():
        ok = v >= -tol
        mask = ok if mask is None else (mask & ok)
    return mask


def audit_constraints(state, precoders, moments, config, targets, beta) -> dict:
    """Exact-metric audit of one activation state against every constraint."""
    Abar, Atil, Aa = _as_batch(state)
    slacks = constraint_slacks_batch(moments, precoders, config, targets, beta, Abar, Atil, Aa)
    flat = {k: float(v[0]) for k, v in slacks.items()}
    flat["feasible"] = bool(feasible_mask(slacks)[0])
    return flat


def metric_report(state, precoders, moments, config, beta) -> dict:
    """JSON-serializable audit: per-user SINRs in dB, gain, power breakdown."""
    Abar, Atil, Aa = _as_batch(state)
    nf = nfue_sinr_batch(moments, precoders, config, Abar, Atil, Aa)[:, 0]
    ff = ffue_sinr_batch(moments, precoders, config, Abar, Atil, Aa, beta)[:, 0]
    gain = float(beampattern_gain_batch(moments, precoders, Abar, Atil, Aa)[0])
    gamma = subarray_power_batch(moments, precoders, Abar, Atil, Aa)[:, 0]

    def to_db(x):
        return [10.0 * np.log10(v) if v > 0 else -np.inf for v in x]

    return {
        "nfue_sinr_db": to_db(nf),
        "ffue_sinr_db": to_db(ff),
        "beampattern_gain": gain,
        "power_breakdown_W": {
            "transmit": float(gamma.sum() / config.zeta),
            "synthesizer": 2.0 * config.P_syn_W,
            "circuit": float(config.M_s * config.P_ct_W * state.a.sum()),
        },
        "total_power_W": total_power(state, precoders, moments, config),
    }
