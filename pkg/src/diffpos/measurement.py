"""Simulated time-of-flight range measurements through the window edges.

Each anchor's measurement rides one of the two diffraction paths of the
node's floor (upper or lower window edge, picked at random per anchor) plus
additive Gaussian noise. The ground-truth node travels with the range
vector for scoring only; estimators receive just the ranges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffraction import _path_length_arrays
from .errors import MeasurementUnavailableError
from .geometry import (
    AnchorConfig,
    BuildingModel,
    EdgeKind,
    NodePosition,
    edges_for_floor,
    node_z,
)


@dataclass(frozen=True)
class NoiseModel:
    """Additive range noise. Only zero-mean Gaussian is supported."""

    sigma: float = 0.1  # m
    kind: str = "gaussian"
    seed: int | None = None

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.kind != "gaussian":
            raise ValueError(f"unsupported noise kind {self.kind!r}")


@dataclass(frozen=True, eq=False)
class RangeVector:
    """One trial's noisy ranges, one entry per anchor.

    `true_node` exists for scoring only; estimators must not read it (the
    estimator entry points accept plain arrays precisely so they cannot).
    """

    ranges: np.ndarray
    edge_choices: tuple[EdgeKind, ...]
    true_node: NodePosition | None = None

    def __post_init__(self):
        r = np.asarray(self.ranges, dtype=float)
        if r.ndim != 1 or r.size != len(self.edge_choices):
            raise ValueError("ranges and edge_choices must have matching length")
        object.__setattr__(self, "ranges", r)


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample_node(building: BuildingModel, rng=None) -> NodePosition:
    """Uniform node: floor uniform over [1, N], (x, y) uniform over the footprint.

    Draw order is pinned (floor, then x, then y) so a seed fully determines
    the node. y maps through 1 - U[0,1) to stay strictly inside (0, B].
    """
    g = _as_generator(rng)
    floor = int(g.integers(1, building.num_floors + 1))
    x = float(g.uniform(0.0, building.length))
    y = float(building.breadth * (1.0 - g.random()))
    return NodePosition(x, y, floor)


def _both_edge_paths(node: NodePosition, anchors: AnchorConfig, building: BuildingModel):
    """Upper and lower path lengths to every anchor (NaN where unavailable)."""
    upper, lower = edges_for_floor(building, node.floor)
    zn = node_z(building, node.floor)
    xa = anchors.positions[:, 0]
    ya = anchors.positions[:, 1]
    za = anchors.positions[:, 2]
    pu, _, _, _ = _path_length_arrays(
        xa, ya, za, node.x, node.y, zn, upper.z, upper.endpoint_1.x, upper.endpoint_2.x
    )
    pl, _, _, _ = _path_length_arrays(
        xa, ya, za, node.x, node.y, zn, lower.z, lower.endpoint_1.x, lower.endpoint_2.x
    )
    return pu, pl


def generate_measurements(
    node: NodePosition,
    anchors: AnchorConfig,
    building: BuildingModel,
    noise: NoiseModel,
    edge_prob: float = 0.5,
    rng=None,
) -> RangeVector:
    """Draw one range vector from a hidden node.

    Per anchor, independently: the upper edge is chosen with probability
    `edge_prob` (else lower), the chosen edge's path length is computed, and
    a noise draw is added. If the chosen edge yields no diffraction the
    other edge is used instead (the recorded choice is the edge actually
    used); if both fail, MeasurementUnavailableError.

    Draw order is pinned: M edge picks first, then M noise draws.
    """
    if not 0.0 <= edge_prob <= 1.0:
        raise ValueError(f"edge_prob must be in [0, 1], got {edge_prob}")
    node.validate(building)
    g = _as_generator(rng if rng is not None else noise.seed)

    want_upper = g.random(anchors.m) < edge_prob
    eps = g.normal(0.0, noise.sigma, anchors.m)

    pu, pl = _both_edge_paths(node, anchors, building)
    primary = np.where(want_upper, pu, pl)
    secondary = np.where(want_upper, pl, pu)
    fallback = ~np.isfinite(primary)
    chosen = np.where(fallback, secondary, primary)
    if not np.all(np.isfinite(chosen)):
        bad = np.flatnonzero(~np.isfinite(chosen))
        raise MeasurementUnavailableError(
            f"no diffraction path from node {node} to anchors {bad.tolist()}"
        )
    used_upper = want_upper ^ fallback
    kinds = tuple(EdgeKind.UPPER if u else EdgeKind.LOWER for u in used_upper)
    return RangeVector(ranges=chosen + eps, edge_choices=kinds, true_node=node)
