"""Monte-Carlo experiment driver: trial generation, estimator comparison,
RMSE/CDF aggregation, and CSV export.

Every trial draws a hidden node and one range vector; all enabled
estimators consume that identical vector, so per-trial comparisons are
paired. Randomness is fully determined by (seed, trial_id): each trial owns
a derived generator stream, which makes any single trial reproducible in
isolation, bit for bit.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .bias import BiasTable, COMPOSITE, FLOORWISE, build_bias_table
from .config import default_anchors, default_building
from .errors import ConfigError, SingularGeometryError
from .estimators import (
    BatchEstimates,
    IppaVariant,
    SolverSettings,
    ippa_estimate_batch,
    lls_estimate_batch,
    nls_estimate_batch,
)
from .geometry import AnchorConfig, BuildingModel, node_z
from .measurement import NoiseModel, generate_measurements, sample_node

ESTIMATOR_NAMES = ("lls", "ippa-id", "ippa-idmin", "ippa-idmean", "nls")
_IPPA_BY_NAME = {f"ippa-{v.value}": v for v in IppaVariant}

# Spawn-key stream id for per-trial generators (bias streams use 1).
TRIAL_STREAM = 0


def trial_rng(seed: int, trial_id: int) -> np.random.Generator:
    """The generator stream owned by one trial under a root seed."""
    return np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(TRIAL_STREAM, trial_id))
    )


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Everything one Monte-Carlo comparison run depends on."""

    building: BuildingModel = field(default_factory=default_building)
    anchors: AnchorConfig = field(default_factory=default_anchors)
    noise: NoiseModel = NoiseModel(sigma=0.1)
    n_trials: int = 10_000
    edge_prob: float = 0.5
    bias_mode: str = FLOORWISE
    estimators: tuple = ESTIMATOR_NAMES
    seed: int = 0
    bias_samples: int = 100_000
    settings: SolverSettings = SolverSettings()
    output_dir: str | None = None

    def __post_init__(self):
        if self.n_trials < 1:
            raise ConfigError(f"n_trials must be >= 1, got {self.n_trials}")
        if not 0.0 <= self.edge_prob <= 1.0:
            raise ConfigError(f"edge_prob must be in [0, 1], got {self.edge_prob}")
        if self.bias_mode not in (FLOORWISE, COMPOSITE):
            raise ConfigError(f"unknown bias_mode {self.bias_mode!r}")
        if not self.estimators:
            raise ConfigError("estimators must be non-empty")
        unknown = [e for e in self.estimators if e not in ESTIMATOR_NAMES]
        if unknown:
            raise ConfigError(f"unknown estimators {unknown}; choose from {ESTIMATOR_NAMES}")

    def needs_bias_table(self) -> bool:
        return any(e in ("ippa-idmin", "ippa-idmean") for e in self.estimators)

    def to_dict(self) -> dict:
        return {
            "building": {
                "num_floors": self.building.num_floors,
                "floor_height_m": self.building.floor_height,
                "length_m": self.building.length,
                "breadth_m": self.building.breadth,
                "window_height_m": self.building.window_height,
            },
            "anchors": self.anchors.positions.tolist(),
            "noise_sigma_m": self.noise.sigma,
            "n_trials": self.n_trials,
            "edge_prob": self.edge_prob,
            "bias_mode": self.bias_mode,
            "estimators": list(self.estimators),
            "seed": self.seed,
            "bias_samples": self.bias_samples,
            "solver": {
                "delta_m": self.settings.delta,
                "max_iterations": self.settings.max_iterations,
                "init_mode": self.settings.init_mode,
                "damping": self.settings.damping,
                "residual_form": self.settings.residual_form,
                "distance_mode": self.settings.distance_mode,
            },
        }


@dataclass(eq=False)
class EstimatorResult:
    """Per-trial error samples for one estimator (inf marks a failed trial)."""

    errors_3d: np.ndarray
    errors_z: np.ndarray
    floor_hits: np.ndarray
    failures: int

    @property
    def n_trials(self) -> int:
        return self.errors_3d.size

    @property
    def rmse_3d(self) -> float:
        ok = np.isfinite(self.errors_3d)
        return float(np.sqrt(np.mean(self.errors_3d[ok] ** 2))) if ok.any() else float("inf")

    @property
    def rmse_z(self) -> float:
        ok = np.isfinite(self.errors_z)
        return float(np.sqrt(np.mean(self.errors_z[ok] ** 2))) if ok.any() else float("inf")

    @property
    def floor_accuracy(self) -> float:
        return float(self.floor_hits.mean())

    def cdf(self, metric: str = "3d") -> tuple[np.ndarray, np.ndarray]:
        """Empirical CDF: sorted error samples (failures at +inf) vs fraction."""
        errors = self.errors_3d if metric == "3d" else self.errors_z
        abscissae = np.sort(errors)
        fractions = np.arange(1, abscissae.size + 1) / abscissae.size
        return abscissae, fractions


@dataclass(eq=False)
class RmseReport:
    config: ExperimentConfig
    results: dict  # estimator name -> EstimatorResult


def _generate_trials(config: ExperimentConfig):
    t = config.n_trials
    m = config.anchors.m
    ranges = np.empty((t, m))
    truth = np.empty((t, 3))
    floors = np.empty(t, dtype=int)
    for i in range(t):
        rng = trial_rng(config.seed, i)
        node = sample_node(config.building, rng)
        rv = generate_measurements(
            node, config.anchors, config.building, config.noise, config.edge_prob, rng
        )
        ranges[i] = rv.ranges
        truth[i] = (node.x, node.y, node_z(config.building, node.floor))
        floors[i] = node.floor
    return ranges, truth, floors


def _run_estimator(
    name: str,
    ranges: np.ndarray,
    config: ExperimentConfig,
    bias_table: BiasTable | None,
) -> BatchEstimates | None:
    if name == "lls":
        try:
            return lls_estimate_batch(ranges, config.anchors, config.building)
        except SingularGeometryError:
            return None
    if name == "nls":
        return nls_estimate_batch(ranges, config.anchors, config.building, config.settings)
    variant = _IPPA_BY_NAME[name]
    table = bias_table if variant.stat is not None else None
    return ippa_estimate_batch(
        ranges, config.anchors, config.building, table, variant, config.settings
    )


def _score(batch: BatchEstimates | None, truth, floors, n) -> EstimatorResult:
    if batch is None:
        return EstimatorResult(
            errors_3d=np.full(n, np.inf),
            errors_z=np.full(n, np.inf),
            floor_hits=np.zeros(n, dtype=bool),
            failures=n,
        )
    e3 = np.sqrt(
        (batch.x - truth[:, 0]) ** 2
        + (batch.y - truth[:, 1]) ** 2
        + (batch.z - truth[:, 2]) ** 2
    )
    ez = np.abs(batch.z - truth[:, 2])
    hits = (batch.floor == floors) & ~batch.failed
    e3 = np.where(batch.failed, np.inf, e3)
    ez = np.where(batch.failed, np.inf, ez)
    return EstimatorResult(
        errors_3d=e3, errors_z=ez, floor_hits=hits, failures=int(batch.failed.sum())
    )


def prepare_bias_table(config: ExperimentConfig, bias_table: BiasTable | None) -> BiasTable | None:
    """Build (or validate) the bias table the configured estimators need."""
    if not config.needs_bias_table():
        return bias_table
    if bias_table is None:
        return build_bias_table(
            config.building,
            config.anchors,
            config.bias_mode,
            n_samples=config.bias_samples,
            seed=config.seed,
        )
    if bias_table.mode != config.bias_mode:
        raise ConfigError(
            f"bias table mode {bias_table.mode!r} does not match configured "
            f"{config.bias_mode!r}"
        )
    if bias_table.n_anchors != config.anchors.m:
        raise ConfigError("bias table anchor count does not match the scenario")
    return bias_table


def run_experiment(config: ExperimentConfig, bias_table: BiasTable | None = None) -> RmseReport:
    """Run all trials through every enabled estimator on shared range vectors."""
    bias_table = prepare_bias_table(config, bias_table)
    ranges, truth, floors = _generate_trials(config)
    results = {}
    for name in config.estimators:
        batch = _run_estimator(name, ranges, config, bias_table)
        results[name] = _score(batch, truth, floors, config.n_trials)
    return RmseReport(config=config, results=results)


def run_single_trial(
    config: ExperimentConfig, trial_id: int, bias_table: BiasTable | None = None
) -> dict:
    """Reproduce one trial in isolation; returns per-estimator error records.

    Uses the same derived stream as the batch run, so the returned errors
    match the batch report's row `trial_id` exactly.
    """
    if not 0 <= trial_id < config.n_trials:
        raise ConfigError(f"trial_id {trial_id} outside [0, {config.n_trials})")
    bias_table = prepare_bias_table(config, bias_table)
    rng = trial_rng(config.seed, trial_id)
    node = sample_node(config.building, rng)
    rv = generate_measurements(
        node, config.anchors, config.building, config.noise, config.edge_prob, rng
    )
    truth = np.array([[node.x, node.y, node_z(config.building, node.floor)]])
    floors = np.array([node.floor])
    out = {}
    for name in config.estimators:
        batch = _run_estimator(name, rv.ranges[None, :], config, bias_table)
        res = _score(batch, truth, floors, 1)
        out[name] = {
            "error_3d": float(res.errors_3d[0]),
            "error_z": float(res.errors_z[0]),
            "floor_hit": bool(res.floor_hits[0]),
        }
    return out


def _write_csv(path, header, rows):
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")
    os.replace(tmp, path)


def _fmt(x: float) -> str:
    return repr(float(x))


def export_report(report: RmseReport, output_dir) -> list:
    """Write summary, per-estimator CDFs, and the resolved config echo.

    Returns the list of file paths written. Files land via rename so a
    failure never leaves a partially written file behind.
    """
    os.makedirs(output_dir, exist_ok=True)
    written = []

    summary_path = os.path.join(output_dir, "summary.csv")
    rows = []
    for name, res in report.results.items():
        rows.append(
            [name, _fmt(res.rmse_3d), _fmt(res.rmse_z), _fmt(res.floor_accuracy),
             str(res.failures), str(res.n_trials)]
        )
    _write_csv(
        summary_path,
        ["estimator", "rmse_3d_m", "rmse_z_m", "floor_accuracy", "failures", "n_trials"],
        rows,
    )
    written.append(summary_path)

    for name, res in report.results.items():
        for metric in ("3d", "z"):
            abscissae, fractions = res.cdf(metric)
            path = os.path.join(output_dir, f"cdf_{metric}_{name}.csv")
            _write_csv(
                path,
                ["error_m", "cumulative_fraction"],
                ([_fmt(e), _fmt(f)] for e, f in zip(abscissae, fractions)),
            )
            written.append(path)

    config_path = os.path.join(output_dir, "config.json")
    tmp = f"{config_path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(report.config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, config_path)
    written.append(config_path)
    return written
