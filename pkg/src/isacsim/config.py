"""System configuration, unit handling, and reference parameter profiles."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace

import numpy as np


class ConfigurationError(ValueError):
    """A configuration field violates a structural invariant."""


def dbm_to_watts(p_dbm: float) -> float:
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


def watts_to_dbm(p_w: float) -> float:
    return 10.0 * math.log10(p_w) + 30.0


# Power fields that may be given in watts ("_W") or dBm ("_dBm") in JSON.
_POWER_FIELDS = ("noise_power_W", "P_t_W", "P_s_W", "P_syn_W", "P_ct_W")


@dataclass(frozen=True)
class SystemConfig:
    """All physical, power, QoS, and algorithm parameters in SI units.

    Angles are radians, distances meters, powers watts. The planar array has
    M_x * M_y = M_t elements split into S contiguous subarrays of M_s elements
    each (M_t = S * M_s).
    """

    # array geometry
    M_x: int = 8
    M_y: int = 8
    M_s: int = 8
    S: int = 8
    wavelength_m: float = 0.01
    spacing_m: float | None = None  # None -> half wavelength

    # users and target: nfue_params entries are (r_k, theta_k, phi_k)
    nfue_params: tuple[tuple[float, float, float], ...] = (
        (8.0, 0.9, -0.4),
        (12.0, 0.6, 0.5),
    )
    ffue_distances_m: tuple[float, ...] = (120.0, 145.0)
    target: tuple[float, float, float] = (10.0, 0.8, 0.2)

    # powers
    noise_power_W: float = dbm_to_watts(-104.0)
    P_t_W: float = 1.0
    P_s_W: float | None = None  # None -> 1.5 * P_t / S
    P_syn_W: float = 0.05
    P_ct_W: float = 0.0482
    zeta: float = 0.35
    rho_sense: float = 0.3  # fraction of P_t reserved for the sensing streams

    # QoS and algorithm
    qos_fraction: float = 0.7
    penalty_init: float = 0.01
    penalty_growth: float = 1.5
    penalty_cap: float = 1e6
    tol_eps1: float = 1e-3
    I1: int = 50
    mc_samples: int = 200
    rng_seed: int = 0

    def __post_init__(self):
        if self.spacing_m is None:
            object.__setattr__(self, "spacing_m", self.wavelength_m / 2.0)
        if self.P_s_W is None:
            object.__setattr__(self, "P_s_W", 1.5 * self.P_t_W / self.S)
        if self.M_x < 1 or self.M_y < 1 or self.M_s < 1 or self.S < 1:
            raise ConfigurationError("array dimensions must be positive")
        if self.M_x * self.M_y != self.S * self.M_s:
            raise ConfigurationError(
                f"M_x*M_y = {self.M_x * self.M_y} but S*M_s = {self.S * self.M_s}"
            )
        if self.wavelength_m <= 0 or self.spacing_m <= 0:
            raise ConfigurationError("wavelength and spacing must be positive")
        for name in _POWER_FIELDS:
            value = getattr(self, name)
            if not (value > 0) or not math.isfinite(value):
                raise ConfigurationError(f"{name} must be a positive finite power")
        if not 0.0 < self.zeta <= 1.0:
            raise ConfigurationError("zeta must lie in (0, 1]")
        if not 0.0 <= self.rho_sense < 1.0:
            raise ConfigurationError("rho_sense must lie in [0, 1)")
        if not 0.0 < self.qos_fraction <= 1.0:
            raise ConfigurationError("qos_fraction must lie in (0, 1]")
        r_s, theta_s, phi_s = self.target
        if r_s <= 0:
            raise ConfigurationError("target range must be positive")
        if not 0.0 < theta_s < math.pi / 2 or not -math.pi / 2 < phi_s < math.pi / 2:
            raise ConfigurationError(
                "target angles must satisfy theta in (0, pi/2), phi in (-pi/2, pi/2)"
            )
        if self.penalty_init <= 0 or self.penalty_growth < 1.0:
            raise ConfigurationError("penalty_init > 0 and penalty_growth >= 1 required")
        if self.mc_samples < 1 or self.I1 < 1:
            raise ConfigurationError("mc_samples and I1 must be positive")

    @property
    def M_t(self) -> int:
        return self.M_x * self.M_y

    @property
    def K_N(self) -> int:
        return len(self.nfue_params)

    @property
    def K_F(self) -> int:
        return len(self.ffue_distances_m)

    @property
    def K(self) -> int:
        return self.K_N + self.K_F

    # -- JSON interface -----------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        d["K_N"] = self.K_N
        d["K_F"] = self.K_F
        d["nfue_params"] = [list(u) for u in self.nfue_params]
        d["ffue_distances_m"] = list(self.ffue_distances_m)
        d["target"] = list(self.target)
        return d

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, raw: dict) -> "SystemConfig":
        data = dict(raw)
        for name in _POWER_FIELDS:
            dbm_key = name[:-2] + "_dBm"
            if dbm_key in data:
                if name in data:
                    raise ConfigurationError(f"give {name} or {dbm_key}, not both")
                data[name] = dbm_to_watts(float(data.pop(dbm_key)))
        if "nfue_params" in data:
            data["nfue_params"] = tuple(tuple(float(x) for x in u) for u in data["nfue_params"])
        if "ffue_distances_m" in data:
            data["ffue_distances_m"] = tuple(float(x) for x in data["ffue_distances_m"])
        if "target" in data:
            data["target"] = tuple(float(x) for x in data["target"])
        # K_N / K_F are derived from the placement lists; accept them in JSON
        # but require consistency.
        for key, listname in (("K_N", "nfue_params"), ("K_F", "ffue_distances_m")):
            if key in data:
                declared = int(data.pop(key))
                if listname in data and declared != len(data[listname]):
                    raise ConfigurationError(f"{key}={declared} does not match {listname}")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "SystemConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def config_hash(self) -> str:
        import hashlib

        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def desk_config(**overrides) -> SystemConfig:
    """Small configuration that solves in seconds (64 antennas, 8 subarrays).

    Derived fields (spacing, per-subarray cap) are recomputed from the
    overrides unless given explicitly.
    """
    return SystemConfig(**overrides)


def paper_config(**overrides) -> SystemConfig:
    """Full-size profile: 400 antennas in subarrays of 50 (minutes, not seconds)."""
    fields = dict(
        M_x=20,
        M_y=20,
        M_s=50,
        S=8,
        P_t_W=1.0,
        nfue_params=((8.0, 0.9, -0.4), (12.0, 0.6, 0.5)),
        ffue_distances_m=(120.0, 145.0),
        mc_samples=200,
    )
    fields.update(overrides)
    return SystemConfig(**fields)


def randomize_users(
    config: SystemConfig,
    seed: int,
    nf_range: tuple[float, float] = (5.0, 20.0),
    ff_range: tuple[float, float] = (110.0, 160.0),
    target_range: tuple[float, float] | None = None,
) -> SystemConfig:
    """Redraw user and target placements for one Monte Carlo instance.

    NFUE ranges are uniform in ``nf_range``; elevation/azimuth are uniform in
    (0, pi/2) and (-pi/2, pi/2). FFUE distances are uniform in ``ff_range``.
    The returned config also carries ``rng_seed=seed`` so channel fading is
    tied to the same seed.
    """
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, 0x9E37)))
    margin = 1e-3  # keep angles strictly inside the open intervals
    if target_range is None:
        target_range = nf_range

    def draw_angles():
        theta = rng.uniform(margin, math.pi / 2 - margin)
        phi = rng.uniform(-math.pi / 2 + margin, math.pi / 2 - margin)
        return theta, phi

    nfue = []
    for _ in range(config.K_N):
        r = rng.uniform(*nf_range)
        nfue.append((r, *draw_angles()))
    ffue = tuple(rng.uniform(*ff_range) for _ in range(config.K_F))
    target = (rng.uniform(*target_range), *draw_angles())
    return replace(
        config,
        nfue_params=tuple(nfue),
        ffue_distances_m=ffue,
        target=target,
        rng_seed=seed,
    )
