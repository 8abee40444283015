"""Planar array geometry, spherical-wavefront channels, and steering vectors.

All scene objects are immutable after construction and safe to share across
threads. Far-field fading realizations use per-realization seed substreams so
sampling order (or parallel sampling) never changes the result.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig


class GeometryError(ValueError):
    """Invalid scene geometry (nonpositive range, degenerate steering slice...)."""


@dataclass(frozen=True)
class ArrayGeometry:
    """Element coordinates of the M_x x M_y planar array plus the subarray partition.

    ``mx``/``my`` hold, per flat element index, the signed offsets from the
    array center in units of the element spacing (half-integers for even
    counts). Flat ordering runs the x index fastest, matching the channel
    stacking g_(1,1), ..., g_(M_x,1), ..., g_(M_x,M_y). Subarray s owns the
    contiguous index block [(s-1)*M_s, s*M_s).
    """

    M_x: int
    M_y: int
    M_s: int
    S: int
    spacing_m: float
    mx: np.ndarray
    my: np.ndarray

    @property
    def M_t(self) -> int:
        return self.M_x * self.M_y

    @property
    def subarray_slices(self) -> tuple[slice, ...]:
        return tuple(slice(s * self.M_s, (s + 1) * self.M_s) for s in range(self.S))

    def flat_index(self, ix: int, iy: int) -> int:
        """Flat element index of grid position (ix, iy), 0-based."""
        if not (0 <= ix < self.M_x and 0 <= iy < self.M_y):
            raise IndexError("grid position out of range")
        return iy * self.M_x + ix

    def grid_position(self, flat: int) -> tuple[int, int]:
        if not 0 <= flat < self.M_t:
            raise IndexError("flat index out of range")
        return flat % self.M_x, flat // self.M_x

    def split_subarrays(self, x: np.ndarray) -> np.ndarray:
        """Reshape a leading M_t axis into (S, M_s) subarray blocks."""
        return np.asarray(x).reshape(self.S, self.M_s, *np.shape(x)[1:])


def build_geometry(config: SystemConfig) -> ArrayGeometry:
    mx_vals = np.arange(config.M_x) - (config.M_x - 1) / 2.0
    my_vals = np.arange(config.M_y) - (config.M_y - 1) / 2.0
    mx = np.tile(mx_vals, config.M_y)
    my = np.repeat(my_vals, config.M_x)
    return ArrayGeometry(
        M_x=config.M_x,
        M_y=config.M_y,
        M_s=config.M_s,
        S=config.S,
        spacing_m=config.spacing_m,
        mx=mx,
        my=my,
    )


def near_field_distance(r, theta, phi, m_x, m_y, d):
    """Distance from the (m_x, m_y) element center to a point at (r, theta, phi).

    Spherical-wavefront geometry: sqrt(r^2 - 2 r m_x d cos(theta) sin(phi)
    - 2 r m_y d sin(theta) + (m_x^2 + m_y^2) d^2). Vectorized over m_x/m_y.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise GeometryError("range r must be positive")
    m_x = np.asarray(m_x, dtype=float)
    m_y = np.asarray(m_y, dtype=float)
    omega = (m_x**2 + m_y**2) * d**2
    radicand = r**2 - 2.0 * r * d * (m_x * np.cos(theta) * np.sin(phi) + m_y * np.sin(theta)) + omega
    if np.any(radicand < 0):
        raise GeometryError("negative radicand: point inside/through the array")
    return np.sqrt(radicand)


def spherical_channel(geometry: ArrayGeometry, wavelength: float, r, theta, phi) -> np.ndarray:
    """Per-element channel (lambda / (4 pi r_m)) * exp(-j 2 pi r_m / lambda)."""
    dist = near_field_distance(r, theta, phi, geometry.mx, geometry.my, geometry.spacing_m)
    amp = wavelength / (4.0 * np.pi * dist)
    return amp * np.exp(-2j * np.pi / wavelength * dist)


def near_field_channel(geometry: ArrayGeometry, config: SystemConfig, user_index: int) -> np.ndarray:
    """Deterministic spherical-wavefront channel of one NFUE, length M_t."""
    r, theta, phi = config.nfue_params[user_index]
    return spherical_channel(geometry, config.wavelength_m, r, theta, phi)


def steering_vector(geometry: ArrayGeometry, config: SystemConfig):
    """Transmit steering vector toward the sensing target.

    Same element form as the NFUE channel, evaluated at the target placement.
    Returns the full length-M_t vector and its (S, M_s) per-subarray slices.
    """
    r_s, theta_s, phi_s = config.target
    v = spherical_channel(geometry, config.wavelength_m, r_s, theta_s, phi_s)
    return v, geometry.split_subarrays(v)


def far_field_large_scale(d_k: float) -> float:
    """Large-scale gain 10^-0.53 / d^2 of an FFUE at distance d (meters)."""
    if d_k <= 0:
        raise ValueError("FFUE distance must be positive")
    if not 110.0 <= d_k <= 160.0:
        warnings.warn(
            f"FFUE distance {d_k} m outside the calibrated range [110, 160] m",
            stacklevel=2,
        )
    return 10.0 ** (-0.53) / d_k**2


def far_realization_rng(seed: int, index: int) -> np.random.Generator:
    """Independent substream for the index-th fading realization of a seed."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def sample_far_field(rng: np.random.Generator, M_t: int, K_F: int) -> np.ndarray:
    """One M_t x K_F matrix of i.i.d. CN(0,1) entries (unit total variance)."""
    scale = np.sqrt(0.5)
    return scale * (rng.standard_normal((M_t, K_F)) + 1j * rng.standard_normal((M_t, K_F)))


@dataclass(frozen=True)
class ChannelSet:
    """Deterministic NFUE channels plus Monte Carlo far-field fading draws.

    ``h_near`` is M_t x K_N. ``far_realizations`` is (mc_samples, M_t, K_F)
    with unit-variance entries; the physical FFUE channel is sqrt(beta_k) times
    a column. ``beta`` holds the K_F large-scale gains.
    """

    h_near: np.ndarray
    far_realizations: np.ndarray
    beta: np.ndarray


def build_channels(geometry: ArrayGeometry, config: SystemConfig) -> ChannelSet:
    K_N, K_F = config.K_N, config.K_F
    h_near = np.zeros((geometry.M_t, K_N), dtype=complex)
    for k in range(K_N):
        h_near[:, k] = near_field_channel(geometry, config, k)
    if K_N and not np.all(np.isfinite(h_near)):
        raise GeometryError("non-finite NFUE channel")
    if K_N and np.any(np.linalg.norm(h_near, axis=0) == 0):
        raise GeometryError("zero NFUE channel column")

    far = np.zeros((config.mc_samples, geometry.M_t, K_F), dtype=complex)
    for i in range(config.mc_samples):
        far[i] = sample_far_field(far_realization_rng(config.rng_seed, i), geometry.M_t, K_F)
    beta = np.array([far_field_large_scale(d) for d in config.ffue_distances_m])
    return ChannelSet(h_near=h_near, far_realizations=far, beta=beta)
