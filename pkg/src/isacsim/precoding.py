"""Zero-forcing precoders, sensing beamformers, and power-allocation coefficients.

Precoders are computed once at full array and sliced per subarray; deactivating
a subarray zeroes its contribution through the activation variables rather than
re-deriving ZF on the active sub-matrix.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .config import ConfigurationError, SystemConfig
from .scene import ArrayGeometry, ChannelSet, GeometryError

# Gram matrices with condition number above this are treated as singular.
_COND_LIMIT = 1e12


class SingularChannelError(ValueError):
    """Channel matrix is (numerically) rank deficient; ZF undefined."""


@dataclass(frozen=True)
class PrecoderSet:
    """ZF slices, sensing beamformers, and power coefficients.

    ``W_near`` is the stacked M_t x K_N pseudo-inverse precoder (subarray s owns
    rows [(s-1)M_s, sM_s)); ``W_far`` holds one stacked M_t x K_F precoder per
    fading realization. ``w_sense`` is (S, M_s) with unit-norm rows. The eta
    vectors are the per-user / per-subarray power-allocation coefficients,
    identical across subarrays. ``psi_bar``/``psi_tilde`` cache the precoder
    trace powers per (subarray, user).
    """

    W_near: np.ndarray
    W_far: np.ndarray
    w_sense: np.ndarray
    psi_bar: np.ndarray
    psi_tilde: np.ndarray
    eta_near: np.ndarray | None = None
    eta_far: np.ndarray | None = None
    eta_sense: np.ndarray | None = None

    @property
    def etas(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if self.eta_near is None:
            raise ValueError("power coefficients not allocated yet")
        return self.eta_near, self.eta_far, self.eta_sense


def zf_stacked(H: np.ndarray) -> np.ndarray:
    """Stacked ZF precoder H (H^H H)^-1 satisfying H^H W = I."""
    M, K = H.shape
    if K == 0:
        return np.zeros((M, 0), dtype=complex)
    if K > M:
        raise SingularChannelError(f"more users ({K}) than antennas ({M})")
    gram = H.conj().T @ H
    if np.linalg.cond(gram) > _COND_LIMIT:
        raise SingularChannelError("channel Gram matrix is numerically singular")
    try:
        return np.linalg.solve(gram, H.conj().T).conj().T
    except np.linalg.LinAlgError as err:
        raise SingularChannelError(str(err)) from err


def zf_near(h_near: np.ndarray, geometry: ArrayGeometry) -> np.ndarray:
    """Per-subarray NFUE ZF slices, shape (S, M_s, K_N)."""
    return geometry.split_subarrays(zf_stacked(h_near))


def zf_far(g_realization: np.ndarray, geometry: ArrayGeometry) -> np.ndarray:
    """Per-subarray FFUE ZF slices for one fading realization, shape (S, M_s, K_F)."""
    return geometry.split_subarrays(zf_stacked(g_realization))


def sensing_beamformer(steering_slices: np.ndarray) -> np.ndarray:
    """Unit-norm conjugate matched beamformer per subarray, shape (S, M_s).

    Maximizes |v_s^T w| over unit vectors, so |v_s^T w_s| equals ||v_s||.
    """
    norms = np.linalg.norm(steering_slices, axis=1)
    if np.any(norms == 0):
        raise GeometryError("zero steering slice; sensing beamformer undefined")
    return np.conj(steering_slices) / norms[:, None]


def build_precoders(
    channels: ChannelSet,
    steering_slices: np.ndarray,
    geometry: ArrayGeometry,
    config: SystemConfig,
) -> PrecoderSet:
    """ZF precoders + sensing beamformers with trace powers cached (etas unset)."""
    W_near = zf_stacked(channels.h_near)
    R = channels.far_realizations.shape[0]
    W_far = np.zeros((R, geometry.M_t, config.K_F), dtype=complex)
    for i in range(R):
        W_far[i] = zf_stacked(channels.far_realizations[i])
    w_sense = sensing_beamformer(steering_slices)

    S, M_s = geometry.S, geometry.M_s
    psi_bar = np.sum(np.abs(W_near.reshape(S, M_s, -1)) ** 2, axis=1)
    psi_tilde = np.mean(
        np.sum(np.abs(W_far.reshape(R, S, M_s, -1)) ** 2, axis=2), axis=0
    )
    return PrecoderSet(
        W_near=W_near,
        W_far=W_far,
        w_sense=w_sense,
        psi_bar=psi_bar,
        psi_tilde=psi_tilde,
    )


def allocate_powers(config: SystemConfig, precoders: PrecoderSet):
    """Equal-split power coefficients scaled to meet both power caps at full activation.

    A fraction rho_sense of P_t feeds the S sensing streams equally; the rest is
    split equally across the K communication users. All coefficients are then
    scaled by the largest common factor keeping sum_s gamma_s <= P_t and
    gamma_s <= P_s when every subarray is active.
    """
    if not (config.P_s_W > 0) or not np.isfinite(config.P_s_W):
        raise ConfigurationError("per-subarray power cap P_s_W must be positive")
    S, K_N, K_F = config.S, config.K_N, config.K_F
    K = K_N + K_F
    sense_budget = config.rho_sense * config.P_t_W if K else config.P_t_W
    eta_sense = np.full(S, sense_budget / S)
    user_share = (config.P_t_W - sense_budget) / K if K else 0.0

    psi_bar_tot = precoders.psi_bar.sum(axis=0)  # (K_N,)
    psi_tilde_tot = precoders.psi_tilde.sum(axis=0)  # (K_F,)
    if np.any(psi_bar_tot <= 0) or np.any(psi_tilde_tot <= 0):
        raise ConfigurationError("degenerate precoder trace power")
    eta_near = user_share / psi_bar_tot if K_N else np.zeros(0)
    eta_far = user_share / psi_tilde_tot if K_F else np.zeros(0)

    w_norm2 = np.sum(np.abs(precoders.w_sense) ** 2, axis=1)
    gamma_full = (
        precoders.psi_bar @ eta_near + precoders.psi_tilde @ eta_far + eta_sense * w_norm2
    )
    scale = min(config.P_t_W / gamma_full.sum(), float(np.min(config.P_s_W / gamma_full)))
    if not np.isfinite(scale) or scale <= 0:
        raise ConfigurationError("per-subarray cap infeasible for any power scaling")
    scale = min(scale, 1.0)
    return eta_near * scale, eta_far * scale, eta_sense * scale


def with_allocated_powers(config: SystemConfig, precoders: PrecoderSet) -> PrecoderSet:
    eta_near, eta_far, eta_sense = allocate_powers(config, precoders)
    return replace(precoders, eta_near=eta_near, eta_far=eta_far, eta_sense=eta_sense)


def dump_precoder_norms(precoders: PrecoderSet, path) -> None:
    """Diagnostic CSV of per-subarray precoder norms."""
    S = precoders.psi_bar.shape[0]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subarray", "kind", "user", "norm_sq"])
        for s in range(S):
            for k, val in enumerate(precoders.psi_bar[s]):
                writer.writerow([s, "nfue", k, repr(float(val))])
            for j, val in enumerate(precoders.psi_tilde[s]):
                writer.writerow([s, "ffue", j, repr(float(val))])
            wn = float(np.sum(np.abs(precoders.w_sense[s]) ** 2))
            writer.writerow([s, "sense", 0, repr(wn)])
