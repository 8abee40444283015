"""One fully built simulation instance: geometry, channels, precoders, moments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig
from .metrics import QoSTargets, SecondMoments, derive_qos_targets, estimate_second_moments
from .precoding import PrecoderSet, build_precoders, with_allocated_powers
from .scene import ArrayGeometry, ChannelSet, build_channels, build_geometry, steering_vector


@dataclass(frozen=True)
class Scenario:
    config: SystemConfig
    geometry: ArrayGeometry
    channels: ChannelSet
    steering: np.ndarray
    steering_slices: np.ndarray
    precoders: PrecoderSet
    moments: SecondMoments

    @property
    def beta(self) -> np.ndarray:
        return self.channels.beta


def build_scenario(config: SystemConfig) -> Scenario:
    """Deterministic pipeline from config to evaluable scenario (given the seed)."""
    geometry = build_geometry(config)
    channels = build_channels(geometry, config)
    v, v_slices = steering_vector(geometry, config)
    precoders = build_precoders(channels, v_slices, geometry, config)
    precoders = with_allocated_powers(config, precoders)
    moments = estimate_second_moments(channels, precoders, geometry, v_slices)
    return Scenario(
        config=config,
        geometry=geometry,
        channels=channels,
        steering=v,
        steering_slices=v_slices,
        precoders=precoders,
        moments=moments,
    )


def scenario_targets(scn: Scenario) -> QoSTargets:
    return derive_qos_targets(scn.precoders, scn.moments, scn.config, scn.beta)
