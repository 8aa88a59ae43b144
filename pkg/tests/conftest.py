import numpy as np
import pytest

from diffpos import AnchorConfig, BuildingModel, NodePosition, Point3, edges_for_floor


@pytest.fixture
def building():
    """Seven 3.5 m floors, 20 x 20 m footprint, 1 m window band."""
    return BuildingModel(7, 3.5, 20.0, 20.0, 1.0)


@pytest.fixture
def anchors():
    return AnchorConfig(
        np.array([[2.0, -3.0, 24.0], [18.0, -8.0, 3.0], [5.0, -14.0, 15.0], [15.0, -20.0, 9.0]])
    )


def random_configuration(rng, building):
    """One random non-degenerate (anchor, node, edge) triple."""
    floor = int(rng.integers(1, building.num_floors + 1))
    anchor = Point3(
        float(rng.uniform(0.0, building.length)),
        float(rng.uniform(-30.0, -2.0)),
        float(rng.uniform(0.5, 30.0)),
    )
    node = NodePosition(
        float(rng.uniform(0.0, building.length)),
        float(rng.uniform(0.05, building.breadth)),
        floor,
    )
    upper, lower = edges_for_floor(building, floor)
    edge = upper if rng.random() < 0.5 else lower
    return anchor, node, edge
