"""Diffraction points on horizontal window edges and NLOS path lengths.

A ray from an anchor A that reaches an indoor node B by bending over a
horizontal edge does so at the unique edge point Q where the angle between
the incoming ray and the edge equals the angle between the outgoing ray and
the edge (the cone condition for edge-diffracted rays). Writing
Q = lam * X1 + (1 - lam) * X2 for edge endpoints X1, X2 and squaring the
angle condition yields a quadratic in lam; exactly one root satisfies the
signed (same-direction) form of the condition, the other is a mirror
artifact of the squaring. Equivalently, the physical root minimizes the
two-leg length |A - Q| + |Q - B| along the edge line, which provides the
independent grid-search oracle used by the test suite.

All kernels here are vectorized over numpy arrays; the public single-shot
operations wrap them with 0-d inputs so every caller shares one code path.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DiffractionSolveError, NoEdgeDiffraction
from .geometry import (
    AnchorConfig,
    BuildingModel,
    Edge,
    EdgeKind,
    NodePosition,
    Point3,
    edge_for_kind,
    edges_for_floor,
    node_z,
)

# A root counts as law-satisfying when the signed cosine mismatch is below
# this; the mirror root's mismatch is 2*cos(incidence) and only approaches
# zero where the two roots coalesce anyway.
LAW_TOLERANCE = 1e-6
# Roundoff slack before an edge parameter is declared out of [0, 1].
LAMBDA_SLACK = 1e-9
# |discriminant| below this (relative) makes the analytic derivative
# formulas unreliable (they divide by sqrt(disc)).
NEAR_SINGULAR_REL = 1e-12
# All three quadratic coefficients below this absolute scale (m^4) means the
# symmetric x_a = x_n, equal-clearance limit where every lam solves the
# squared law; the signed law then pins q_x at the shared x coordinate.
DEGENERATE_SCALE = 1e-9

_STATUS_OK = 0
_STATUS_OUT_OF_RANGE = 1
_STATUS_NO_LAW_ROOT = 2


@dataclass(frozen=True)
class QuadraticCoefficients:
    """Coefficients of a*lam^2 + b*lam + c = 0 locating the diffraction point."""

    a: float
    b: float
    c: float


@dataclass(frozen=True)
class DiffractionSolution:
    """Selected edge parameter, its 3D point, and the angle-law mismatch."""

    lam: float
    point: Point3
    law_residual: float


def _edge_quadratic(xa, ya, za, xn, yn, zn, ze, x1, x2):
    """Quadratic coefficients in the edge parameter (vectorized).

    dn2/da2 are the squared clearances of node and anchor from the edge
    line measured in the y-z plane (the edge sits at y = 0, z = ze).
    """
    dn2 = yn * yn + (ze - zn) ** 2
    da2 = ya * ya + (ze - za) ** 2
    x12 = x1 - x2
    a = x12 * x12 * ((yn * yn - ya * ya) + (zn * zn - za * za) + 2.0 * ze * (za - zn))
    b = 2.0 * x12 * ((x2 - xa) * dn2 - (x2 - xn) * da2)
    c = (x2 - xa) ** 2 * dn2 - (x2 - xn) ** 2 * da2
    return a, b, c


def _law_residuals(lam, xa, ya, za, xn, yn, zn, ze, x1, x2):
    """Signed and absolute cosine mismatch of the angle law at Q(lam)."""
    qx = lam * x1 + (1.0 - lam) * x2
    da2 = ya * ya + (ze - za) ** 2
    dn2 = yn * yn + (ze - zn) ** 2
    leg_in = np.sqrt((qx - xa) ** 2 + da2)
    leg_out = np.sqrt((xn - qx) ** 2 + dn2)
    ex = np.sign(x2 - x1)
    cos_in = (qx - xa) * ex / leg_in
    cos_out = (xn - qx) * ex / leg_out
    return cos_in - cos_out, np.abs(np.abs(cos_in) - np.abs(cos_out))


def _solve_lambda_arrays(xa, ya, za, xn, yn, zn, ze, x1, x2):
    """Solve for the edge parameter at every input point.

    Returns (lam, abs_residual, status) with lam clipped into [0, 1] where a
    law-satisfying root exists; status is one of the module _STATUS codes.
    """
    a, b, c = _edge_quadratic(xa, ya, za, xn, yn, zn, ze, x1, x2)

    disc = b * b - 4.0 * a * c
    # Tangent geometries can push the discriminant a hair negative.
    floor = -1e-9 * np.maximum(b * b, np.abs(4.0 * a * c))
    disc = np.where((disc < 0.0) & (disc >= floor), 0.0, disc)
    disc_ok = disc >= 0.0
    s = np.sqrt(np.where(disc_ok, disc, 0.0))

    sign_b = np.where(b >= 0.0, 1.0, -1.0)
    qq = -0.5 * (b + sign_b * s)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam1 = qq / a
        lam2 = np.where(qq != 0.0, c / np.where(qq != 0.0, qq, 1.0), 0.0)

    signed1, abs1 = _law_residuals(lam1, xa, ya, za, xn, yn, zn, ze, x1, x2)
    signed2, abs2 = _law_residuals(lam2, xa, ya, za, xn, yn, zn, ze, x1, x2)
    score1 = np.where(np.isfinite(signed1), np.abs(signed1), np.inf)
    score2 = np.where(np.isfinite(signed2), np.abs(signed2), np.inf)
    take2 = score2 < score1
    lam = np.where(take2, lam2, lam1)
    abs_res = np.where(take2, abs2, abs1)

    # Where the two roots (nearly) coincide the quadratic formula loses half
    # its digits, so refine with the signed angle condition, which is linear
    # in q_x at fixed clearances and therefore solves exactly. This also
    # covers the fully degenerate all-coefficients-zero limit.
    scale = np.maximum(np.abs(a), np.maximum(np.abs(b), np.abs(c)))
    near_double = disc < 1e-6 * np.maximum(b * b, np.abs(4.0 * a * c))
    polish = disc_ok & (near_double | (scale < DEGENERATE_SCALE))
    if np.any(polish):
        dn = np.sqrt(yn * yn + (ze - zn) ** 2)
        da = np.sqrt(ya * ya + (ze - za) ** 2)
        q_star = (xa * dn + xn * da) / (dn + da)
        lam_star = (x2 - q_star) / (x2 - x1)
        lam = np.where(polish, lam_star, lam)
        _, abs_star = _law_residuals(lam_star, xa, ya, za, xn, yn, zn, ze, x1, x2)
        abs_res = np.where(polish, abs_star, abs_res)

    signed, _ = _law_residuals(lam, xa, ya, za, xn, yn, zn, ze, x1, x2)
    score = np.where(np.isfinite(signed), np.abs(signed), np.inf)
    law_ok = disc_ok & (score < LAW_TOLERANCE)
    in_range = (lam >= -LAMBDA_SLACK) & (lam <= 1.0 + LAMBDA_SLACK)
    status = np.where(
        law_ok,
        np.where(in_range, _STATUS_OK, _STATUS_OUT_OF_RANGE),
        _STATUS_NO_LAW_ROOT,
    )
    lam = np.clip(lam, 0.0, 1.0)
    return lam, abs_res, status, (a, b, c, disc, s)


def _path_length_arrays(xa, ya, za, xn, yn, zn, ze, x1, x2):
    """Two-leg diffraction path length, NaN where no edge diffraction exists."""
    lam, abs_res, status, _ = _solve_lambda_arrays(xa, ya, za, xn, yn, zn, ze, x1, x2)
    qx = lam * x1 + (1.0 - lam) * x2
    leg_anchor = np.sqrt((xa - qx) ** 2 + ya * ya + (za - ze) ** 2)
    leg_node = np.sqrt((xn - qx) ** 2 + yn * yn + (ze - zn) ** 2)
    p = np.where(status == _STATUS_OK, leg_anchor + leg_node, np.nan)
    return p, lam, qx, status


def _jacobian_arrays(xa, ya, za, xn, yn, zn, ze, x1, x2):
    """Partials of the path length w.r.t. (x_n, y_n), chain-ruled through lam.

    Uses the same quadratic-root branch the solver selected. Entries are NaN
    and flagged invalid where no diffraction point exists or where the
    discriminant is too close to zero for the branch formulas.
    """
    lam, _, status, (a, b, c, disc, s) = _solve_lambda_arrays(
        xa, ya, za, xn, yn, zn, ze, x1, x2
    )
    qx = lam * x1 + (1.0 - lam) * x2
    x12 = x1 - x2
    da2 = ya * ya + (ze - za) ** 2
    dn2 = yn * yn + (ze - zn) ** 2
    leg_anchor = np.sqrt((xa - qx) ** 2 + ya * ya + (za - ze) ** 2)
    leg_node = np.sqrt((xn - qx) ** 2 + yn * yn + (ze - zn) ** 2)

    near_singular = disc < NEAR_SINGULAR_REL * np.maximum(b * b, np.abs(4.0 * a * c))
    scale = np.maximum(np.abs(a), np.maximum(np.abs(b), np.abs(c)))
    tiny_a = np.abs(a) < 1e-12 * scale
    valid = (status == _STATUS_OK) & ~near_singular & ~tiny_a

    safe_a = np.where(valid, a, 1.0)
    safe_s = np.where(valid & (s > 0.0), s, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam_plus = (-b + s) / (2.0 * safe_a)
        lam_minus = (-b - s) / (2.0 * safe_a)
    sigma = np.where(np.abs(lam - lam_plus) <= np.abs(lam - lam_minus), 1.0, -1.0)

    # coefficient partials; a does not depend on x_n
    dady = 2.0 * yn * x12 * x12
    dbdx = 2.0 * x12 * da2
    dbdy = 4.0 * yn * x12 * (x2 - xa)
    dcdx = 2.0 * (x2 - xn) * da2
    dcdy = 2.0 * yn * (x2 - xa) ** 2

    half = x12 / (2.0 * safe_a)
    dqdx = half * (-dbdx + sigma * (b * dbdx - 2.0 * a * dcdx) / safe_s)
    dqdy = half * (
        dady * (b - sigma * s) / safe_a
        - dbdy
        + sigma * (b * dbdy - 2.0 * c * dady - 2.0 * a * dcdy) / safe_s
    )

    dpdx = (qx - xa) * dqdx / leg_anchor + (xn - qx) * (1.0 - dqdx) / leg_node
    dpdy = (qx - xa) * dqdy / leg_anchor + ((qx - xn) * dqdy + yn) / leg_node
    dpdx = np.where(valid, dpdx, np.nan)
    dpdy = np.where(valid, dpdy, np.nan)
    return dpdx, dpdy, valid


def _scalar_inputs(anchor: Point3, node: NodePosition, edge: Edge, building: BuildingModel):
    zn = node_z(building, node.floor)
    return (
        anchor.x,
        anchor.y,
        anchor.z,
        node.x,
        node.y,
        zn,
        edge.z,
        edge.endpoint_1.x,
        edge.endpoint_2.x,
    )


def quadratic_coefficients(
    anchor: Point3, node: NodePosition, edge: Edge, building: BuildingModel
) -> QuadraticCoefficients:
    """Coefficients of the edge-parameter quadratic for one anchor/node/edge."""
    if edge.endpoint_1.x == edge.endpoint_2.x:
        raise ValueError("degenerate edge: endpoints share the same x coordinate")
    xa, ya, za, xn, yn, zn, ze, x1, x2 = _scalar_inputs(anchor, node, edge, building)
    a, b, c = _edge_quadratic(xa, ya, za, xn, yn, zn, ze, x1, x2)
    return QuadraticCoefficients(float(a), float(b), float(c))


def solve_diffraction_point(
    anchor: Point3, node: NodePosition, edge: Edge, building: BuildingModel
) -> DiffractionSolution:
    """Locate the diffraction point on `edge` between `anchor` and `node`.

    Of the two quadratic roots, returns the one satisfying the signed angle
    law with the edge parameter inside [0, 1]. Raises NoEdgeDiffraction when
    the law-satisfying point falls beyond the edge extremities, and
    DiffractionSolveError when neither root satisfies the law at all.
    """
    if edge.endpoint_1.x == edge.endpoint_2.x:
        raise ValueError("degenerate edge: endpoints share the same x coordinate")
    xa, ya, za, xn, yn, zn, ze, x1, x2 = _scalar_inputs(anchor, node, edge, building)
    lam, abs_res, status, _ = _solve_lambda_arrays(
        np.float64(xa), np.float64(ya), np.float64(za),
        np.float64(xn), np.float64(yn), np.float64(zn),
        np.float64(ze), np.float64(x1), np.float64(x2),
    )
    status = int(status)
    if status == _STATUS_NO_LAW_ROOT:
        raise DiffractionSolveError(
            f"no quadratic root satisfies the angle law for anchor {anchor}"
        )
    if status == _STATUS_OUT_OF_RANGE:
        raise NoEdgeDiffraction(
            f"diffraction point beyond edge extremities (floor {edge.floor})"
        )
    lam = float(lam)
    qx = lam * x1 + (1.0 - lam) * x2
    return DiffractionSolution(lam, Point3(qx, 0.0, ze), float(abs_res))


def path_length(
    anchor: Point3, node: NodePosition, edge_kind: EdgeKind, building: BuildingModel
) -> float:
    """NLOS path length anchor -> edge diffraction point -> node, meters.

    The node leg always carries the half-window vertical offset since the
    node sits half a window height below the upper edge (or above the lower
    one). Always at least the straight-line anchor-node distance.
    """
    edge = edge_for_kind(building, node.floor, edge_kind)
    xa, ya, za, xn, yn, zn, ze, x1, x2 = _scalar_inputs(anchor, node, edge, building)
    p, _, _, status = _path_length_arrays(
        np.float64(xa), np.float64(ya), np.float64(za),
        np.float64(xn), np.float64(yn), np.float64(zn),
        np.float64(ze), np.float64(x1), np.float64(x2),
    )
    status = int(status)
    if status == _STATUS_NO_LAW_ROOT:
        raise DiffractionSolveError(
            f"no quadratic root satisfies the angle law for anchor {anchor}"
        )
    if status == _STATUS_OUT_OF_RANGE:
        raise NoEdgeDiffraction(
            f"diffraction point beyond edge extremities (floor {node.floor})"
        )
    return float(p)


def fermat_oracle(
    anchor: Point3,
    node: NodePosition,
    edge: Edge,
    building: BuildingModel,
    resolution: float = 1e-6,
) -> float:
    """Edge parameter minimizing the two-leg length, by grid + golden section.

    Deliberately independent of the quadratic solver: evaluates
    |A - Q(lam)| + |Q(lam) - B| on a uniform 1001-point grid over [0, 1],
    then shrinks the bracketing cell with golden-section steps until its
    width drops below `resolution`. The two-leg length is strictly convex in
    lam, so the bracket always contains the true minimizer.
    """
    if not 0.0 < resolution <= 1e-3:
        raise ValueError(f"resolution must be in (0, 1e-3], got {resolution}")
    xa, ya, za, xn, yn, zn, ze, x1, x2 = _scalar_inputs(anchor, node, edge, building)

    def total(lam):
        qx = lam * x1 + (1.0 - lam) * x2
        return np.sqrt((xa - qx) ** 2 + ya * ya + (za - ze) ** 2) + np.sqrt(
            (xn - qx) ** 2 + yn * yn + (zn - ze) ** 2
        )

    grid = np.linspace(0.0, 1.0, 1001)
    k = int(np.argmin(total(grid)))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, grid.size - 1)]

    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c_ = hi - invphi * (hi - lo)
    d_ = lo + invphi * (hi - lo)
    fc, fd = total(c_), total(d_)
    while hi - lo > resolution:
        if fc < fd:
            hi, d_, fd = d_, c_, fc
            c_ = hi - invphi * (hi - lo)
            fc = total(c_)
        else:
            lo, c_, fc = c_, d_, fd
            d_ = lo + invphi * (hi - lo)
            fd = total(d_)
    return float(0.5 * (lo + hi))


@dataclass(frozen=True)
class PathDifferenceScan:
    """Histogram of |upper - lower| path-length differences over a node grid."""

    bin_edges: np.ndarray
    counts: np.ndarray
    max_diff: float
    n_evaluated: int
    n_skipped: int

    def cdf(self) -> tuple[np.ndarray, np.ndarray]:
        """Cumulative fraction at each right bin edge."""
        total = self.counts.sum()
        fractions = np.cumsum(self.counts) / max(total, 1)
        return self.bin_edges[1:], fractions

    def write_histogram_csv(self, path) -> None:
        abscissae, fractions = self.cdf()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_lo_m", "bin_hi_m", "count", "cumulative_fraction"])
            for lo, hi, n, frac in zip(
                self.bin_edges[:-1], self.bin_edges[1:], self.counts, fractions
            ):
                writer.writerow([repr(float(lo)), repr(float(hi)), int(n), repr(float(frac))])


def path_difference_scan(
    building: BuildingModel,
    anchors: AnchorConfig,
    spacing: float,
    bin_width: float = 0.01,
    rows_path=None,
) -> PathDifferenceScan:
    """Scan |upper - lower| path difference over a uniform node grid.

    Evaluates both edge paths for every anchor at every grid node
    (x in [0, L] and y in (0, B] stepped by `spacing`, all floors). Grid
    points where either edge yields no diffraction are skipped and counted.
    When `rows_path` is given, per-point rows
    (floor, x_n, y_n, anchor_index, upper_len_m, lower_len_m, diff_m)
    stream to that CSV.
    """
    if spacing <= 0:
        raise ValueError(f"spacing must be positive, got {spacing}")
    w = building.window_height
    n_bins = int(np.ceil(w / bin_width)) + 1
    bin_edges = np.linspace(0.0, n_bins * bin_width, n_bins + 1)
    counts = np.zeros(n_bins, dtype=np.int64)

    xs = np.arange(0.0, building.length + 0.5 * spacing, spacing)
    ys = np.arange(spacing, building.breadth + 0.5 * spacing, spacing)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    gx = gx.ravel()
    gy = gy.ravel()

    writer = None
    fh = None
    if rows_path is not None:
        fh = open(rows_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(
            ["floor", "x_n", "y_n", "anchor_index", "upper_len_m", "lower_len_m", "diff_m"]
        )

    max_diff = 0.0
    n_eval = 0
    n_skip = 0
    try:
        for floor in range(1, building.num_floors + 1):
            zn = node_z(building, floor)
            upper, lower = edges_for_floor(building, floor)
            for j in range(anchors.m):
                xa, ya, za = anchors.positions[j]
                pu, _, _, _ = _path_length_arrays(
                    xa, ya, za, gx, gy, zn, upper.z,
                    upper.endpoint_1.x, upper.endpoint_2.x,
                )
                pl, _, _, _ = _path_length_arrays(
                    xa, ya, za, gx, gy, zn, lower.z,
                    lower.endpoint_1.x, lower.endpoint_2.x,
                )
                diff = np.abs(pu - pl)
                good = np.isfinite(diff)
                n_eval += int(good.sum())
                n_skip += int((~good).sum())
                if good.any():
                    d = diff[good]
                    counts += np.histogram(d, bins=bin_edges)[0]
                    max_diff = max(max_diff, float(d.max()))
                    if writer is not None:
                        for xi, yi, pui, pli, di in zip(
                            gx[good], gy[good], pu[good], pl[good], d
                        ):
                            writer.writerow(
                                [floor, repr(float(xi)), repr(float(yi)), j,
                                 repr(float(pui)), repr(float(pli)), repr(float(di))]
                            )
    finally:
        if fh is not None:
            fh.close()
    return PathDifferenceScan(bin_edges, counts, max_diff, n_eval, n_skip)
