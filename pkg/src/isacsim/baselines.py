"""Comparison schemes: all-subarrays, random activation, and the exhaustive oracle.

All audits route through the batched metric evaluators, so the baselines share
the exact constraint formulas with the solver and the harness.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .metrics import (
    ActivationState,
    QoSTargets,
    audit_constraints,
    constraint_slacks_batch,
    feasible_mask,
    total_power,
    total_power_batch,
)
from .scenario import Scenario

# Beyond this many subarrays the 4^S enumeration is refused.
ORACLE_MAX_S = 12
# States evaluated per vectorized chunk.
_CHUNK = 1 << 14


@dataclass
class BaselineResult:
    scheme: str
    activation: ActivationState
    power_W: float
    feasible: bool
    audit: dict
    evaluations: int | None = None


def all_subarrays(scn: Scenario, targets: QoSTargets) -> BaselineResult:
    """Every subarray active for both communication and sensing."""
    state = ActivationState.all_on(scn.config.S)
    audit = audit_constraints(state, scn.precoders, scn.moments, scn.config, targets, scn.beta)
    return BaselineResult(
        scheme="all_subarrays",
        activation=state,
        power_W=total_power(state, scn.precoders, scn.moments, scn.config),
        feasible=audit["feasible"],
        audit=audit,
    )


def random_activation(
    rng: np.random.Generator, n_start: int, scn: Scenario, targets: QoSTargets
) -> BaselineResult:
    """Uniformly random subset of n subarrays driving both services.

    If the audit fails, n grows by one with a fresh subset until feasible
    (n = S reduces to the all-subarrays scheme).
    """
    S = scn.config.S
    if not 1 <= n_start <= S:
        raise ValueError("n_start must lie in [1, S]")
    n = n_start
    while True:
        subset = rng.choice(S, size=n, replace=False)
        services = np.zeros(S)
        services[subset] = 1.0
        state = ActivationState.from_services(services, services.copy())
        audit = audit_constraints(state, scn.precoders, scn.moments, scn.config, targets, scn.beta)
        if audit["feasible"] or n == S:
            return BaselineResult(
                scheme="random",
                activation=state,
                power_W=total_power(state, scn.precoders, scn.moments, scn.config),
                feasible=audit["feasible"],
                audit=audit,
            )
        n += 1


def exhaustive_oracle(scn: Scenario, targets: QoSTargets) -> BaselineResult:
    """Ground-truth minimum over all 4^S binary (a_bar, a_tilde) activations.

    The RF-chain flag follows a_s = min(1, a_bar_s + a_tilde_s). Ties in power
    resolve to the lexicographically smallest (a_bar, a_tilde) pattern because
    states are scanned in lexicographic order and only strict improvements are
    kept.
    """
    cfg = scn.config
    S = cfg.S
    if S > ORACLE_MAX_S:
        raise ValueError(f"oracle refuses S={S} > {ORACLE_MAX_S} (4^S states)")
    patterns = np.array(list(itertools.product((0.0, 1.0), repeat=S)))
    n_pat = patterns.shape[0]
    best_power = np.inf
    best = None
    evaluations = 0

    per_abar = max(1, _CHUNK // n_pat)
    for start in range(0, n_pat, per_abar):
        block = patterns[start : start + per_abar]  # (B, S) a_bar patterns
        B = block.shape[0]
        Abar = np.repeat(block, n_pat, axis=0)
        Atil = np.tile(patterns, (B, 1))
        Aa = np.minimum(1.0, Abar + Atil)
        slacks = constraint_slacks_batch(
            scn.moments, scn.precoders, cfg, targets, scn.beta, Abar, Atil, Aa
        )
        mask = feasible_mask(slacks)
        evaluations += Abar.shape[0]
        if not mask.any():
            continue
        powers = total_power_batch(scn.moments, scn.precoders, cfg, Abar, Atil, Aa)
        powers = np.where(mask, powers, np.inf)
        idx = int(np.argmin(powers))  # first occurrence = lex smallest in chunk
        if powers[idx] < best_power:
            best_power = float(powers[idx])
            best = ActivationState(Abar[idx].copy(), Atil[idx].copy(), Aa[idx].copy())

    if best is None:
        # no feasible state at all; report the all-on audit
        state = ActivationState.all_on(S)
        audit = audit_constraints(state, scn.precoders, scn.moments, cfg, targets, scn.beta)
        return BaselineResult(
            scheme="oracle",
            activation=state,
            power_W=total_power(state, scn.precoders, scn.moments, cfg),
            feasible=False,
            audit=audit,
            evaluations=evaluations,
        )
    audit = audit_constraints(best, scn.precoders, scn.moments, cfg, targets, scn.beta)
    return BaselineResult(
        scheme="oracle",
        activation=best,
        power_W=best_power,
        feasible=True,
        audit=audit,
        evaluations=evaluations,
    )
