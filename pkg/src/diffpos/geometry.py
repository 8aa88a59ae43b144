"""Building, window-edge, anchor, and node geometry.

Coordinate convention, fixed here once and relied on everywhere else:
the window facade lies in the plane y = 0, the building interior occupies
0 < y <= breadth, anchors hover outside at y < 0, and the window edges run
parallel to the x-axis. The origin sits at the ground-floor corner of the
facade with z measured upward.

Each floor carries a single full-width window band centered at the floor's
vertical midpoint, so every floor contributes exactly two horizontal
diffracting edges (upper and lower). Nodes are constrained to the vertical
midpoint of their floor.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class EdgeKind(enum.Enum):
    UPPER = "upper"
    LOWER = "lower"


@dataclass(frozen=True)
class Point3:
    """A point in building coordinates, meters."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        for v in (self.x, self.y, self.z):
            if not math.isfinite(v):
                raise ValueError(f"non-finite coordinate in {(self.x, self.y, self.z)}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)


@dataclass(frozen=True)
class BuildingModel:
    """Rectangular multi-storey building with one window band per floor."""

    num_floors: int
    floor_height: float  # m
    length: float        # m, x extent (edges span it fully)
    breadth: float       # m, y extent of the interior
    window_height: float  # m, vertical opening of the window band

    def __post_init__(self):
        if self.num_floors < 1:
            raise ValueError(f"num_floors must be >= 1, got {self.num_floors}")
        if not self.floor_height > self.window_height > 0:
            raise ValueError(
                f"need floor_height > window_height > 0, got "
                f"{self.floor_height} and {self.window_height}"
            )
        if self.length <= 0 or self.breadth <= 0:
            raise ValueError("length and breadth must be positive")


@dataclass(frozen=True)
class Edge:
    """One horizontal diffracting edge of a floor's window band."""

    endpoint_1: Point3
    endpoint_2: Point3
    kind: EdgeKind
    floor: int

    def __post_init__(self):
        if self.endpoint_1.y != 0.0 or self.endpoint_2.y != 0.0:
            raise ValueError("edge endpoints must lie in the facade plane y = 0")
        if self.endpoint_1.z != self.endpoint_2.z:
            raise ValueError("edge must be horizontal (equal endpoint z)")

    @property
    def z(self) -> float:
        return self.endpoint_1.z


@dataclass(frozen=True)
class NodePosition:
    """In-plane node coordinates plus the floor the node stands on.

    The vertical coordinate is implied by the floor (see :func:`node_z`);
    footprint bounds depend on a building, so use :meth:`validate`.
    """

    x: float
    y: float
    floor: int

    def __post_init__(self):
        if self.floor < 1:
            raise ValueError(f"floor index must be >= 1, got {self.floor}")
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("non-finite node coordinates")

    def validate(self, building: BuildingModel) -> "NodePosition":
        _check_floor(building, self.floor)
        if not 0.0 <= self.x <= building.length:
            raise ValueError(f"x_n={self.x} outside [0, {building.length}]")
        if not 0.0 < self.y <= building.breadth:
            raise ValueError(f"y_n={self.y} outside (0, {building.breadth}]")
        return self

    def z(self, building: BuildingModel) -> float:
        return node_z(building, self.floor)

    def position3(self, building: BuildingModel) -> np.ndarray:
        return np.array([self.x, self.y, self.z(building)], dtype=float)


@dataclass(frozen=True, eq=False)
class AnchorConfig:
    """Known anchor positions, all outside the facade (y < 0)."""

    positions: np.ndarray  # (M, 3)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError(f"anchor positions must have shape (M, 3), got {pos.shape}")
        if pos.shape[0] < 3:
            raise ValueError(f"need at least 3 anchors, got {pos.shape[0]}")
        if not np.all(np.isfinite(pos)):
            raise ValueError("non-finite anchor coordinates")
        if not np.all(pos[:, 1] < 0.0):
            raise ValueError("all anchors must sit outside the facade (y < 0)")
        object.__setattr__(self, "positions", pos)

    @classmethod
    def from_points(cls, points) -> "AnchorConfig":
        return cls(np.array([[p.x, p.y, p.z] for p in points], dtype=float))

    @property
    def m(self) -> int:
        return self.positions.shape[0]

    def point(self, index: int) -> Point3:
        x, y, z = self.positions[index]
        return Point3(float(x), float(y), float(z))


def _check_floor(building: BuildingModel, floor: int) -> None:
    if not 1 <= floor <= building.num_floors:
        raise ValueError(
            f"floor {floor} outside [1, {building.num_floors}]"
        )


def node_z(building: BuildingModel, floor: int) -> float:
    """Vertical coordinate of a node on `floor`: the floor's midpoint height."""
    _check_floor(building, floor)
    return (floor - 1) * building.floor_height + 0.5 * building.floor_height


def edges_for_floor(building: BuildingModel, floor: int) -> tuple[Edge, Edge]:
    """The (upper, lower) window edges of `floor`, spanning x in [0, length]."""
    _check_floor(building, floor)
    zc = node_z(building, floor)
    half_w = 0.5 * building.window_height
    upper = Edge(
        Point3(0.0, 0.0, zc + half_w),
        Point3(building.length, 0.0, zc + half_w),
        EdgeKind.UPPER,
        floor,
    )
    lower = Edge(
        Point3(0.0, 0.0, zc - half_w),
        Point3(building.length, 0.0, zc - half_w),
        EdgeKind.LOWER,
        floor,
    )
    return upper, lower


def edge_for_kind(building: BuildingModel, floor: int, kind: EdgeKind) -> Edge:
    upper, lower = edges_for_floor(building, floor)
    return upper if kind is EdgeKind.UPPER else lower
