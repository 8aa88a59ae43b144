import math

import numpy as np
import pytest

from diffpos import (
    AnchorConfig,
    BuildingModel,
    Edge,
    EdgeKind,
    NoEdgeDiffraction,
    NodePosition,
    Point3,
    edges_for_floor,
    fermat_oracle,
    node_z,
    path_difference_scan,
    path_length,
    quadratic_coefficients,
    solve_diffraction_point,
)
from conftest import random_configuration

# Reference configuration: anchor at the facade corner height 30, node deep
# on floor 5. Coefficients verified by direct hand substitution; lam and the
# path lengths frozen from the grid-search oracle (agreement asserted below).
REF_ANCHOR = Point3(0.0, -10.0, 30.0)
REF_NODE = NodePosition(12.0, 8.0, 5)
REF_COEFFS = (-89925.0, 41100.0, 7200.0)
REF_LAM = 0.5922404667522321
REF_PATH_UPPER = 27.74657996533003
REF_PATH_LOWER = 28.486722789374927


def test_reference_coefficients(building):
    upper, _ = edges_for_floor(building, 5)
    q = quadratic_coefficients(REF_ANCHOR, REF_NODE, upper, building)
    assert (q.a, q.b, q.c) == REF_COEFFS


def test_reference_root_against_oracle(building):
    upper, _ = edges_for_floor(building, 5)
    sol = solve_diffraction_point(REF_ANCHOR, REF_NODE, upper, building)
    assert sol.lam == pytest.approx(REF_LAM, abs=1e-12)
    oracle = fermat_oracle(REF_ANCHOR, REF_NODE, upper, building, resolution=1e-6)
    assert abs(sol.lam - oracle) < 1e-5
    # the frozen lam really is a root of the frozen quadratic
    a, b, c = REF_COEFFS
    assert abs(a * sol.lam**2 + b * sol.lam + c) < 1e-6 * max(abs(a), abs(b), abs(c))


def test_reference_path_lengths(building):
    pu = path_length(REF_ANCHOR, REF_NODE, EdgeKind.UPPER, building)
    pl = path_length(REF_ANCHOR, REF_NODE, EdgeKind.LOWER, building)
    assert pu == pytest.approx(REF_PATH_UPPER, abs=1e-9)
    assert pl == pytest.approx(REF_PATH_LOWER, abs=1e-9)
    # oracle two-leg minimum reproduces the upper path within 1e-4 m
    upper, _ = edges_for_floor(building, 5)
    lam = fermat_oracle(REF_ANCHOR, REF_NODE, upper, building, resolution=1e-6)
    qx = (1.0 - lam) * building.length
    leg1 = math.dist((REF_ANCHOR.x, REF_ANCHOR.y, REF_ANCHOR.z), (qx, 0.0, upper.z))
    leg2 = math.sqrt((REF_NODE.x - qx) ** 2 + REF_NODE.y**2 + 0.25)
    assert pu == pytest.approx(leg1 + leg2, abs=1e-4)


def test_symmetric_discriminant_nonnegative(building):
    upper, _ = edges_for_floor(building, 4)
    for za in (5.0, 12.0, 28.0):
        q = quadratic_coefficients(
            Point3(7.0, -9.0, za), NodePosition(7.0, 6.0, 4), upper, building
        )
        assert q.b**2 - 4.0 * q.a * q.c >= -1e-9 * q.b**2


def test_symmetric_configuration_pins_qx(building):
    upper, _ = edges_for_floor(building, 3)
    sol = solve_diffraction_point(
        Point3(10.0, -10.0, 20.0), NodePosition(10.0, 5.0, 3), upper, building
    )
    assert sol.point.x == pytest.approx(10.0, abs=1e-9)
    assert sol.law_residual < 1e-9


def test_mirror_swaps_lambda(building):
    upper, _ = edges_for_floor(building, 2)
    l = building.length
    sol = solve_diffraction_point(
        Point3(3.0, -8.0, 17.0), NodePosition(14.0, 6.0, 2), upper, building
    )
    mirrored = solve_diffraction_point(
        Point3(l - 3.0, -8.0, 17.0), NodePosition(l - 14.0, 6.0, 2), upper, building
    )
    assert mirrored.lam == pytest.approx(1.0 - sol.lam, abs=1e-9)


def test_mirror_preserves_path_length(building):
    l = building.length
    rng = np.random.default_rng(3)
    for _ in range(50):
        anchor, node, _ = random_configuration(rng, building)
        kind = EdgeKind.UPPER if rng.random() < 0.5 else EdgeKind.LOWER
        p = path_length(anchor, node, kind, building)
        p_m = path_length(
            Point3(l - anchor.x, anchor.y, anchor.z),
            NodePosition(l - node.x, node.y, node.floor),
            kind,
            building,
        )
        assert p_m == pytest.approx(p, abs=1e-9)


def test_degenerate_edge_rejected(building):
    edge = Edge(Point3(5.0, 0.0, 2.25), Point3(5.0, 0.0, 2.25), EdgeKind.UPPER, 1)
    with pytest.raises(ValueError):
        quadratic_coefficients(REF_ANCHOR, NodePosition(5.0, 5.0, 1), edge, building)


def test_node_far_outside_gives_no_edge_diffraction(building):
    upper, _ = edges_for_floor(building, 1)
    with pytest.raises(NoEdgeDiffraction):
        solve_diffraction_point(
            Point3(-40.0, -10.0, 10.0), NodePosition(-30.0, 5.0, 1), upper, building
        )


def test_path_exceeds_euclidean(building):
    rng = np.random.default_rng(11)
    for _ in range(200):
        anchor, node, edge = random_configuration(rng, building)
        p = path_length(anchor, node, edge.kind, building)
        d = np.linalg.norm(anchor.as_array() - node.position3(building))
        assert p >= d - 1e-12


def test_node_under_edge_limit(building):
    # node at the diffraction point's x with y -> 0: the node leg collapses
    # to the half-window vertical offset
    anchor = Point3(9.0, -12.0, 18.0)
    node = NodePosition(9.0, 1e-9, 2)
    p = path_length(anchor, node, EdgeKind.UPPER, building)
    upper, _ = edges_for_floor(building, 2)
    leg1 = math.dist((anchor.x, anchor.y, anchor.z), (9.0, 0.0, upper.z))
    assert p - leg1 == pytest.approx(0.5, abs=1e-6)


def test_collinear_geometry_has_zero_bias(building):
    # anchor, edge point, and node aligned: the bent path degenerates to the
    # straight line
    node = NodePosition(10.0, 10.0, 3)
    anchor = Point3(10.0, -10.0, 9.75)
    p = path_length(anchor, node, EdgeKind.UPPER, building)
    d = np.linalg.norm(anchor.as_array() - node.position3(building))
    assert p - d == pytest.approx(0.0, abs=1e-9)


def test_law_residual_small_over_random_configs(building):
    rng = np.random.default_rng(5)
    for _ in range(500):
        anchor, node, edge = random_configuration(rng, building)
        sol = solve_diffraction_point(anchor, node, edge, building)
        assert 0.0 <= sol.lam <= 1.0
        assert sol.law_residual < 1e-9
        # the point is the stated combination of the endpoints
        q = sol.lam * edge.endpoint_1.as_array() + (1 - sol.lam) * edge.endpoint_2.as_array()
        assert np.allclose(q, sol.point.as_array(), atol=1e-9)


def test_oracle_matches_solver(building):
    rng = np.random.default_rng(8)
    for _ in range(300):
        anchor, node, edge = random_configuration(rng, building)
        sol = solve_diffraction_point(anchor, node, edge, building)
        lam = fermat_oracle(anchor, node, edge, building, resolution=1e-6)
        assert abs(sol.lam - lam) < 1e-5


def test_oracle_symmetric_case(building):
    upper, _ = edges_for_floor(building, 4)
    lam = fermat_oracle(
        Point3(6.0, -15.0, 25.0), NodePosition(6.0, 9.0, 4), upper, building
    )
    qx = lam * upper.endpoint_1.x + (1 - lam) * upper.endpoint_2.x
    assert qx == pytest.approx(6.0, abs=1e-5)


def test_oracle_boundary_agreement(building):
    # minimizer beyond the edge end: oracle pins the boundary, solver refuses
    anchor = Point3(-40.0, -10.0, 10.0)
    node = NodePosition(-30.0, 5.0, 1)
    upper, _ = edges_for_floor(building, 1)
    lam = fermat_oracle(anchor, node, upper, building)
    assert lam == pytest.approx(1.0, abs=1e-5)  # endpoint_1 sits at x = 0
    with pytest.raises(NoEdgeDiffraction):
        solve_diffraction_point(anchor, node, upper, building)


def test_oracle_resolution_validation(building):
    upper, _ = edges_for_floor(building, 1)
    for bad in (0.0, -1e-6, 1e-2):
        with pytest.raises(ValueError):
            fermat_oracle(REF_ANCHOR, NodePosition(5.0, 5.0, 1), upper, building, bad)


def test_scan_max_bounded_by_window_height(building, anchors):
    scan = path_difference_scan(building, anchors, spacing=0.5)
    assert scan.n_skipped == 0
    assert scan.max_diff <= building.window_height + 1e-9
    edges, fractions = scan.cdf()
    assert np.all(np.diff(fractions) >= 0)
    assert fractions[-1] == pytest.approx(1.0)


def test_scan_thin_window_differences_vanish(anchors):
    thin = BuildingModel(3, 3.5, 20.0, 20.0, 0.01)
    scan = path_difference_scan(thin, anchors, spacing=1.0, bin_width=0.001)
    assert scan.max_diff <= 0.01 + 1e-9


def test_scan_grid_refinement_stability(building, anchors):
    coarse = path_difference_scan(building, anchors, spacing=0.4)
    fine = path_difference_scan(building, anchors, spacing=0.2)
    assert abs(coarse.max_diff - fine.max_diff) < 0.05


def test_scan_rows_csv(building, anchors, tmp_path):
    rows = tmp_path / "rows.csv"
    scan = path_difference_scan(
        BuildingModel(2, 3.5, 20.0, 20.0, 1.0), anchors, spacing=2.0, rows_path=rows
    )
    lines = rows.read_text().splitlines()
    assert lines[0] == "floor,x_n,y_n,anchor_index,upper_len_m,lower_len_m,diff_m"
    assert len(lines) == scan.n_evaluated + 1
    floor, x_n, y_n, j, pu, pl, diff = lines[1].split(",")
    assert abs(abs(float(pu) - float(pl)) - float(diff)) < 1e-12


def test_scan_rejects_bad_spacing(building, anchors):
    with pytest.raises(ValueError):
        path_difference_scan(building, anchors, spacing=0.0)
