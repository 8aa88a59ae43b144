import numpy as np
import pytest

from diffpos import (
    AnchorConfig,
    EdgeKind,
    MeasurementUnavailableError,
    NodePosition,
    NoiseModel,
    Point3,
    edges_for_floor,
    generate_measurements,
    path_length,
    sample_node,
)


def test_noise_model_validation():
    NoiseModel(sigma=0.0)
    with pytest.raises(ValueError):
        NoiseModel(sigma=-0.1)
    with pytest.raises(ValueError):
        NoiseModel(sigma=0.1, kind="laplace")


def test_noiseless_upper_identity(building, anchors):
    node = NodePosition(12.0, 8.0, 5)
    rv = generate_measurements(node, anchors, building, NoiseModel(sigma=0.0), 1.0, rng=0)
    expected = np.array(
        [path_length(anchors.point(j), node, EdgeKind.UPPER, building) for j in range(anchors.m)]
    )
    assert np.array_equal(rv.ranges, expected)  # bit-level, same kernel
    assert all(k is EdgeKind.UPPER for k in rv.edge_choices)
    assert rv.true_node == node


def test_mixed_edges_are_one_of_the_two_paths(building, anchors):
    node = NodePosition(4.0, 13.0, 2)
    pu = np.array([path_length(anchors.point(j), node, EdgeKind.UPPER, building) for j in range(4)])
    pl = np.array([path_length(anchors.point(j), node, EdgeKind.LOWER, building) for j in range(4)])
    seen_lower = False
    for seed in range(20):
        rv = generate_measurements(node, anchors, building, NoiseModel(sigma=0.0), 0.5, rng=seed)
        for j in range(4):
            assert rv.ranges[j] in (pu[j], pl[j])
            # lower-edge draws sit within the window-height bound of the upper path
            assert abs(rv.ranges[j] - pu[j]) <= building.window_height + 1e-9
            seen_lower |= rv.edge_choices[j] is EdgeKind.LOWER
    assert seen_lower


def test_noise_reproducible_and_unbiased(building, anchors):
    node = NodePosition(12.0, 8.0, 5)
    noise = NoiseModel(sigma=0.1)
    a = generate_measurements(node, anchors, building, noise, 1.0, rng=123)
    b = generate_measurements(node, anchors, building, noise, 1.0, rng=123)
    assert np.array_equal(a.ranges, b.ranges)

    n = 4000
    acc = np.zeros(anchors.m)
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence(77, spawn_key=(0, i)))
        acc += generate_measurements(node, anchors, building, noise, 1.0, rng=rng).ranges
    noiseless = generate_measurements(node, anchors, building, NoiseModel(0.0), 1.0, rng=0).ranges
    assert np.abs(acc / n - noiseless).max() < 3 * 0.1 / np.sqrt(n)


def test_edge_choice_frequency(building, anchors):
    node = NodePosition(10.0, 10.0, 4)
    p = 0.7
    n = 2500
    upper_count = 0
    for i in range(n):
        rv = generate_measurements(
            node, anchors, building, NoiseModel(0.0), p,
            rng=np.random.default_rng(np.random.SeedSequence(3, spawn_key=(0, i))),
        )
        upper_count += sum(k is EdgeKind.UPPER for k in rv.edge_choices)
    total = n * anchors.m
    sigma = np.sqrt(p * (1 - p) / total)
    assert abs(upper_count / total - p) < 3 * sigma


def test_edge_prob_validation(building, anchors):
    node = NodePosition(10.0, 10.0, 4)
    with pytest.raises(ValueError):
        generate_measurements(node, anchors, building, NoiseModel(0.0), 1.5, rng=0)


def test_fallback_to_other_edge(building):
    # first anchor sits level with floor 1's upper edge just past x = 0, so
    # the upper diffraction point falls off the edge but the lower one holds
    upper, lower = edges_for_floor(building, 1)
    special = Point3(-0.4, -0.1, upper.z)
    cfg = AnchorConfig.from_points(
        [special, Point3(2, -3, 24), Point3(18, -8, 3), Point3(5, -14, 15)]
    )
    node = NodePosition(2.0, 0.05, 1)
    rv = generate_measurements(node, cfg, building, NoiseModel(0.0), 1.0, rng=0)
    assert rv.edge_choices[0] is EdgeKind.LOWER
    assert rv.ranges[0] == pytest.approx(path_length(special, node, EdgeKind.LOWER, building))
    assert all(k is EdgeKind.UPPER for k in rv.edge_choices[1:])


def test_both_edges_unavailable(building):
    cfg = AnchorConfig(
        np.array([[-1e4, -10.0, 5.0], [-1e4, -12.0, 12.0], [-1e4, -8.0, 20.0]])
    )
    with pytest.raises(MeasurementUnavailableError):
        generate_measurements(
            NodePosition(10.0, 10.0, 1), cfg, building, NoiseModel(0.0), 1.0, rng=0
        )


def test_sample_node_uniformity(building):
    n = 20_000
    floors = np.empty(n, dtype=int)
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence(1, spawn_key=(0, i)))
        node = sample_node(building, rng)
        node.validate(building)
        floors[i] = node.floor
    target = 1.0 / building.num_floors
    freq = np.bincount(floors, minlength=8)[1:] / n
    assert np.abs(freq - target).max() < 0.02 * target + 3 * np.sqrt(target * (1 - target) / n)


def test_sample_node_deterministic(building):
    assert sample_node(building, 42) == sample_node(building, 42)
