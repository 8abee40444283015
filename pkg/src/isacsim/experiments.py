"""Seeded Monte Carlo experiment runner with CSV + manifest output.

Three experiments mirror the headline studies: solver convergence traces,
power versus subarray count at fixed aperture, and power versus user mix.
Seeds can be dispatched to a process pool; results are sorted by (sweep value,
seed) before writing so worker count never changes the output bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import ORACLE_MAX_S, all_subarrays, exhaustive_oracle, random_activation
from .config import SystemConfig, desk_config, paper_config, randomize_users
from .metrics import total_power
from .scenario import build_scenario, scenario_targets
from .solver import run_sca

EXPERIMENTS = ("convergence", "power_vs_S", "power_vs_users")

# (M_x, M_y, M_s) sweep points for the convergence experiment
_DESK_GEOMETRIES = ((8, 4, 8), (8, 6, 8), (8, 8, 8))
_PAPER_GEOMETRIES = ((20, 20, 50), (25, 20, 50), (30, 20, 50))
# S sweep at fixed M_t
_DESK_S_SWEEP = (4, 8, 16)
_PAPER_S_SWEEP = (8, 10, 16, 20)
# (K_N, K_F) sweep
_DESK_USER_SWEEP = ((0, 2), (1, 1), (2, 1), (2, 2))
_PAPER_USER_SWEEP = ((1, 1), (2, 2), (3, 3), (4, 4))


@dataclass
class ExperimentSpec:
    experiment: str
    base_config: SystemConfig
    sweep: tuple
    seeds: tuple[int, ...]
    out_dir: Path
    with_oracle: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; pick from {EXPERIMENTS}")
        self.out_dir = Path(self.out_dir)


def default_spec(
    experiment: str,
    out_dir,
    seeds=range(20),
    profile: str = "desk",
    base_config: SystemConfig | None = None,
    with_oracle: bool = False,
    workers: int = 1,
) -> ExperimentSpec:
    if profile not in ("desk", "paper"):
        raise ValueError("profile must be 'desk' or 'paper'")
    desk = profile == "desk"
    if base_config is None:
        base_config = desk_config() if desk else paper_config()
    sweeps = {
        "convergence": _DESK_GEOMETRIES if desk else _PAPER_GEOMETRIES,
        "power_vs_S": _DESK_S_SWEEP if desk else _PAPER_S_SWEEP,
        "power_vs_users": _DESK_USER_SWEEP if desk else _PAPER_USER_SWEEP,
    }
    return ExperimentSpec(
        experiment=experiment,
        base_config=base_config,
        sweep=tuple(sweeps[experiment]),
        seeds=tuple(seeds),
        out_dir=Path(out_dir),
        with_oracle=with_oracle,
        workers=workers,
    )


def _instance_config(base: SystemConfig, seed: int) -> SystemConfig:
    return randomize_users(base, seed)


def _resize_users(config: SystemConfig, K_N: int, K_F: int) -> SystemConfig:
    # placeholder placements; randomize_users redraws them per seed
    nfue = tuple((10.0, 0.8, 0.2) for _ in range(K_N))
    ffue = tuple(130.0 for _ in range(K_F))
    return replace(config, nfue_params=nfue, ffue_distances_m=ffue)


def _convergence_task(args):
    base, geom, seed = args
    M_x, M_y, M_s = geom
    cfg = replace(base, M_x=M_x, M_y=M_y, M_s=M_s, S=(M_x * M_y) // M_s, P_s_W=None)
    cfg = _instance_config(cfg, seed)
    scn = build_scenario(cfg)
    result = run_sca(scn, scenario_targets(scn))
    rows = []
    for i, (obj, pc) in enumerate(zip(result.objective_trace, result.power_trace), start=1):
        rows.append((cfg.M_t, seed, i, obj, pc))
    return rows


def _sweep_task(args):
    """One (sweep point, seed) cell of a power comparison experiment."""
    base, label, seed, with_oracle = args
    cfg = _instance_config(base, seed)
    scn = build_scenario(cfg)
    targets = scenario_targets(scn)
    proposed = run_sca(scn, targets)
    allon = all_subarrays(scn, targets)
    n_active = int(np.sum(proposed.activation.a > 0.5))
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, 0x7A4D)))
    rand = random_activation(rng, max(1, n_active), scn, targets)
    row = {
        "sweep": label,
        "seed": seed,
        "proposed": proposed.power_W,
        "all_subarrays": allon.power_W,
        "random": rand.power_W,
        "iterations": proposed.iterations,
        "proposed_feasible": proposed.feasible,
    }
    if with_oracle and cfg.S <= ORACLE_MAX_S:
        row["oracle"] = exhaustive_oracle(scn, targets).power_W
    # re-audit the emitted powers against the exact power model
    assert abs(proposed.power_W - total_power(proposed.activation, scn.precoders, scn.moments, cfg)) < 1e-12
    return row


def _run_tasks(task_fn, tasks, workers: int):
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(task_fn, tasks))
    return [task_fn(t) for t in tasks]


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _write_manifest(spec: ExperimentSpec, csv_paths: list[Path]) -> Path:
    digests = {}
    for p in csv_paths:
        digests[p.name] = hashlib.sha256(p.read_bytes()).hexdigest()
    manifest = {
        "experiment": spec.experiment,
        "version": __version__,
        "config_hash": spec.base_config.config_hash(),
        "sweep": [list(s) if isinstance(s, (tuple, list)) else s for s in spec.sweep],
        "seeds": list(spec.seeds),
        "with_oracle": spec.with_oracle,
        "outputs": digests,
    }
    path = spec.out_dir / f"{spec.experiment}_manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return path


def run_convergence(spec: ExperimentSpec) -> Path:
    """Per-iteration objective traces over array sizes; rows (M_t, seed, iter, P_C1, P_C)."""
    spec.out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [(spec.base_config, geom, seed) for geom in spec.sweep for seed in spec.seeds]
    chunks = _run_tasks(_convergence_task, tasks, spec.workers)
    rows = [row for chunk in chunks for row in chunk]
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    path = spec.out_dir / "convergence.csv"
    _write_csv(path, ["M_t", "seed", "iteration", "P_C1_W", "P_C_W"], rows)
    _write_manifest(spec, [path])
    return path


def _aggregate(results, schemes):
    by_sweep: dict = {}
    for row in results:
        by_sweep.setdefault(row["sweep"], []).append(row)
    agg_rows = []
    for label in sorted(by_sweep):
        group = by_sweep[label]
        for scheme in schemes:
            vals = [r[scheme] for r in group if scheme in r]
            if not vals:
                continue
            agg_rows.append((label, scheme, float(np.mean(vals)), float(np.std(vals))))
    return agg_rows


def _detail_rows(results, schemes):
    rows = []
    for row in sorted(results, key=lambda r: (r["sweep"], r["seed"])):
        for scheme in schemes:
            if scheme in row:
                rows.append((row["sweep"], row["seed"], scheme, row[scheme]))
    return rows


def run_power_vs_s(spec: ExperimentSpec) -> Path:
    """Mean/std power per scheme at fixed M_t; rows (S, scheme, mean, std)."""
    spec.out_dir.mkdir(parents=True, exist_ok=True)
    base = spec.base_config
    tasks = []
    for S in spec.sweep:
        if base.M_t % S:
            raise ValueError(f"S={S} does not divide M_t={base.M_t}")
        cfg = replace(base, S=S, M_s=base.M_t // S, P_s_W=None)
        tasks += [(cfg, S, seed, spec.with_oracle) for seed in spec.seeds]
    results = _run_tasks(_sweep_task, tasks, spec.workers)
    schemes = ("proposed", "all_subarrays", "random", "oracle")
    path = spec.out_dir / "power_vs_S.csv"
    _write_csv(path, ["S", "scheme", "mean_power_W", "std_power_W"], _aggregate(results, schemes))
    detail = spec.out_dir / "power_vs_S_detail.csv"
    _write_csv(detail, ["S", "seed", "scheme", "power_W"], _detail_rows(results, schemes))
    _write_manifest(spec, [path, detail])
    return path


def run_power_vs_users(spec: ExperimentSpec) -> Path:
    """Mean/std power per scheme across (K_N, K_F) mixes."""
    spec.out_dir.mkdir(parents=True, exist_ok=True)
    tasks = []
    for K_N, K_F in spec.sweep:
        cfg = _resize_users(spec.base_config, K_N, K_F)
        tasks += [(cfg, f"{K_N}+{K_F}", seed, spec.with_oracle) for seed in spec.seeds]
    results = _run_tasks(_sweep_task, tasks, spec.workers)
    schemes = ("proposed", "all_subarrays", "random", "oracle")
    path = spec.out_dir / "power_vs_users.csv"
    _write_csv(
        path, ["users", "scheme", "mean_power_W", "std_power_W"], _aggregate(results, schemes)
    )
    detail = spec.out_dir / "power_vs_users_detail.csv"
    _write_csv(detail, ["users", "seed", "scheme", "power_W"], _detail_rows(results, schemes))
    _write_manifest(spec, [path, detail])
    return path


def run_experiment(spec: ExperimentSpec) -> Path:
    runner = {
        "convergence": run_convergence,
        "power_vs_S": run_power_vs_s,
        "power_vs_users": run_power_vs_users,
    }[spec.experiment]
    return runner(spec)
