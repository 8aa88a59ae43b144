"""Empirical NLOS bias characterization.

The bias of a range measurement is the excess of the diffraction path
length over the straight-line anchor-node distance. It depends on where
the node stands, so it is characterized offline by uniformly sampling node
positions over a floor footprint and differencing the upper-edge path
against the Euclidean distance. Statistics can be kept per (anchor, floor)
pair ("floorwise") or pooled across floors per anchor ("composite").
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .diffraction import _path_length_arrays
from .errors import BiasGeometryError, ConfigError
from .geometry import AnchorConfig, BuildingModel, Point3, edges_for_floor, node_z

FLOORWISE = "floorwise"
COMPOSITE = "composite"

# Spawn-key stream id so bias draws never collide with trial draws that
# share the same root seed.
BIAS_STREAM = 1

DEFAULT_N_SAMPLES = 100_000
DEFAULT_BIN_WIDTH = 0.05  # m


@dataclass(frozen=True, eq=False)
class BiasDistribution:
    """Empirical bias samples for one (anchor, floor) pair, meters."""

    samples: np.ndarray   # (n,) nonnegative draws; empty when loaded from CSV
    min_bias: float
    mean_bias: float
    bin_edges: np.ndarray
    counts: np.ndarray
    n_samples: int
    n_discarded: int


def bias_rng(seed: int, anchor_index: int, floor: int) -> np.random.Generator:
    """Independent stream for one (anchor, floor) pair under a root seed."""
    return np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(BIAS_STREAM, anchor_index, floor))
    )


def _histogram(samples: np.ndarray, bin_width: float):
    top = max(float(samples.max()) if samples.size else bin_width, bin_width)
    n_bins = int(np.ceil(top / bin_width)) + 1
    edges = np.linspace(0.0, n_bins * bin_width, n_bins + 1)
    counts = np.histogram(samples, bins=edges)[0]
    return edges, counts


def sample_bias(
    anchor: Point3,
    floor: int,
    building: BuildingModel,
    n_samples: int = DEFAULT_N_SAMPLES,
    rng=None,
    bin_width: float = DEFAULT_BIN_WIDTH,
) -> BiasDistribution:
    """Sample the upper-edge NLOS bias over the floor footprint.

    Draws (x_n, y_n) uniformly, computes upper-edge path length minus the
    3D anchor-node distance with the node at the floor's midpoint height.
    Draws whose diffraction point leaves the edge are discarded and redrawn;
    more than 50% discards raises BiasGeometryError since that signals an
    anchor placed where the window geometry barely applies.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    g = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    upper, _ = edges_for_floor(building, floor)
    zn = node_z(building, floor)
    xa, ya, za = anchor.x, anchor.y, anchor.z

    kept = []
    n_kept = 0
    n_drawn = 0
    n_discarded = 0
    while n_kept < n_samples:
        batch = max(n_samples - n_kept, 1)
        xs = g.uniform(0.0, building.length, batch)
        ys = building.breadth * (1.0 - g.random(batch))  # (0, B]
        p, _, _, _ = _path_length_arrays(
            xa, ya, za, xs, ys, zn, upper.z, upper.endpoint_1.x, upper.endpoint_2.x
        )
        euclid = np.sqrt((xs - xa) ** 2 + (ys - ya) ** 2 + (zn - za) ** 2)
        b = p - euclid
        good = np.isfinite(b)
        n_drawn += batch
        n_discarded += int((~good).sum())
        if good.any():
            kept.append(b[good])
            n_kept += int(good.sum())
        if n_drawn >= n_samples and n_discarded > 0.5 * n_drawn:
            raise BiasGeometryError(
                f"{n_discarded}/{n_drawn} bias draws had no edge diffraction "
                f"for anchor {anchor} on floor {floor}"
            )
    samples = np.concatenate(kept)[:n_samples]
    edges, counts = _histogram(samples, bin_width)
    return BiasDistribution(
        samples=samples,
        min_bias=float(samples.min()),
        mean_bias=float(samples.mean()),
        bin_edges=edges,
        counts=counts,
        n_samples=int(samples.size),
        n_discarded=n_discarded,
    )


@dataclass(frozen=True, eq=False)
class BiasTable:
    """Bias statistics per anchor, either floorwise or pooled across floors.

    Floorwise entries are keyed (anchor_index, floor); composite entries
    are keyed (anchor_index, None) and apply to every floor.
    """

    mode: str
    entries: dict
    n_anchors: int
    n_floors: int

    def distribution(self, anchor_index: int, floor: int) -> BiasDistribution:
        key = (anchor_index, floor if self.mode == FLOORWISE else None)
        return self.entries[key]

    def corrections(self, stat: str, floor: int) -> np.ndarray:
        """Per-anchor range corrections for a floor hypothesis.

        stat "min" returns the lower support of each bias distribution,
        "mean" its mean.
        """
        if stat not in ("min", "mean"):
            raise ValueError(f"stat must be 'min' or 'mean', got {stat!r}")
        out = np.empty(self.n_anchors)
        for j in range(self.n_anchors):
            dist = self.distribution(j, floor)
            out[j] = dist.min_bias if stat == "min" else dist.mean_bias
        return out

    def to_csv(self, path, histogram_path=None) -> None:
        keys = sorted(self.entries, key=lambda k: (k[0], -1 if k[1] is None else k[1]))
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["mode", "anchor_index", "floor_index", "n", "n_discarded", "min_m", "mean_m"]
            )
            for j, fl in keys:
                d = self.entries[(j, fl)]
                writer.writerow(
                    [self.mode, j, "ALL" if fl is None else fl, d.n_samples,
                     d.n_discarded, repr(d.min_bias), repr(d.mean_bias)]
                )
        if histogram_path is not None:
            with open(histogram_path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["anchor_index", "floor_index", "bin_lo_m", "bin_hi_m", "count"])
                for j, fl in keys:
                    d = self.entries[(j, fl)]
                    for lo, hi, n in zip(d.bin_edges[:-1], d.bin_edges[1:], d.counts):
                        writer.writerow(
                            [j, "ALL" if fl is None else fl, repr(float(lo)),
                             repr(float(hi)), int(n)]
                        )

    @classmethod
    def from_csv(cls, path) -> "BiasTable":
        """Reload statistics (samples and histograms are not round-tripped)."""
        entries = {}
        mode = None
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                mode = row["mode"]
                fl = None if row["floor_index"] == "ALL" else int(row["floor_index"])
                entries[(int(row["anchor_index"]), fl)] = BiasDistribution(
                    samples=np.empty(0),
                    min_bias=float(row["min_m"]),
                    mean_bias=float(row["mean_m"]),
                    bin_edges=np.empty(0),
                    counts=np.empty(0, dtype=np.int64),
                    n_samples=int(row["n"]),
                    n_discarded=int(row["n_discarded"]),
                )
        if mode not in (FLOORWISE, COMPOSITE) or not entries:
            raise ConfigError(f"not a bias table CSV: {path}")
        anchors = {k[0] for k in entries}
        floors = {k[1] for k in entries if k[1] is not None}
        return cls(
            mode=mode,
            entries=entries,
            n_anchors=len(anchors),
            n_floors=max(floors) if floors else 0,
        )


def build_bias_table(
    building: BuildingModel,
    anchors: AnchorConfig,
    mode: str = FLOORWISE,
    n_samples: int = DEFAULT_N_SAMPLES,
    seed: int = 0,
    bin_width: float = DEFAULT_BIN_WIDTH,
) -> BiasTable:
    """Characterize the bias for every anchor, floorwise or composite.

    Each (anchor, floor) pair draws from its own seeded stream, so the
    composite table pools exactly the samples the floorwise table would
    have produced under the same seed.
    """
    if mode not in (FLOORWISE, COMPOSITE):
        raise ConfigError(f"bias mode must be '{FLOORWISE}' or '{COMPOSITE}', got {mode!r}")
    per_pair = {}
    for j in range(anchors.m):
        anchor = anchors.point(j)
        for fl in range(1, building.num_floors + 1):
            per_pair[(j, fl)] = sample_bias(
                anchor, fl, building, n_samples, bias_rng(seed, j, fl), bin_width
            )
    if mode == FLOORWISE:
        entries = per_pair
    else:
        entries = {}
        for j in range(anchors.m):
            pooled = np.concatenate(
                [per_pair[(j, fl)].samples for fl in range(1, building.num_floors + 1)]
            )
            edges, counts = _histogram(pooled, bin_width)
            entries[(j, None)] = BiasDistribution(
                samples=pooled,
                min_bias=float(pooled.min()),
                mean_bias=float(pooled.mean()),
                bin_edges=edges,
                counts=counts,
                n_samples=int(pooled.size),
                n_discarded=sum(
                    per_pair[(j, fl)].n_discarded
                    for fl in range(1, building.num_floors + 1)
                ),
            )
    return BiasTable(
        mode=mode,
        entries=entries,
        n_anchors=anchors.m,
        n_floors=building.num_floors,
    )
