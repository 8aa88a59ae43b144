"""Position estimators: linear least squares, projection averaging, and
per-floor Gauss-Newton under the diffraction path model.

Four estimator families share the same inputs (a range vector and the
anchor configuration):

* ``lls_estimate`` - squared-range differencing against a reference anchor,
  solved in closed form with z left free. The bias-blind baseline.
* ``ippa_*`` - per-floor iterative projection averaging: each anchor's
  (bias-corrected) range defines a sphere, the estimate is repeatedly
  replaced by the average of its projections onto the spheres it currently
  violates. Three variants differ only in the bias correction subtracted
  from the ranges: none, the distribution minimum, or the distribution mean.
* ``nls_*`` - per-floor Gauss-Newton on the upper-edge diffraction path
  model, using the analytic path-length Jacobian.

The floor-hypothesis estimators run one 2D solve per floor and pick the
floor with the smallest residual; that floor's midpoint height is the z
estimate.

Every estimator has a batch entry point operating on a (trials, anchors)
range matrix; the single-shot functions wrap batch size 1 so both paths
produce bit-identical results.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .bias import BiasTable
from .diffraction import _jacobian_arrays, _path_length_arrays, _STATUS_OK
from .errors import (
    EstimationFailureError,
    NearSingularDerivativeError,
    NoEdgeDiffraction,
    SingularGeometryError,
)
from .geometry import AnchorConfig, BuildingModel, edges_for_floor, node_z
from .measurement import RangeVector

DAMPING_FLOOR = 1e-3   # first damping value after a rejected Gauss-Newton step
DAMPING_CAP = 1e6
CONDITION_LIMIT = 1e12


class IppaVariant(enum.Enum):
    """How much bias knowledge the projection estimator consumes."""

    ID = "id"            # NLOS identified only; no range correction
    ID_MIN = "idmin"     # subtract the bias distribution's lower support
    ID_MEAN = "idmean"   # subtract the bias distribution's mean

    @property
    def stat(self) -> str | None:
        return {"id": None, "idmin": "min", "idmean": "mean"}[self.value]


@dataclass(frozen=True)
class SolverSettings:
    """Iteration controls shared by the floor estimators."""

    delta: float = 1e-4                  # m, stop threshold
    max_iterations: int = 1000
    init_mode: str = "floor-centroid"    # or "custom"
    init_point: tuple[float, float] | None = None
    damping: float = 0.0                 # initial Gauss-Newton damping
    residual_form: str = "range-mismatch"   # or "verbatim-product"
    distance_mode: str = "3d"            # or "2d": anchors projected in-plane

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.damping < 0:
            raise ValueError(f"damping must be >= 0, got {self.damping}")
        if self.init_mode not in ("floor-centroid", "custom"):
            raise ValueError(f"unknown init_mode {self.init_mode!r}")
        if self.init_mode == "custom" and self.init_point is None:
            raise ValueError("init_mode 'custom' requires init_point")
        if self.residual_form not in ("range-mismatch", "verbatim-product"):
            raise ValueError(f"unknown residual_form {self.residual_form!r}")
        if self.distance_mode not in ("3d", "2d"):
            raise ValueError(f"unknown distance_mode {self.distance_mode!r}")


@dataclass(frozen=True)
class PositionEstimate:
    """One estimator's answer plus convergence diagnostics."""

    x: float
    y: float
    floor: int
    z: float
    residual: float
    iterations: int
    converged: bool
    clamped: bool = False


@dataclass(eq=False)
class BatchEstimates:
    """Struct-of-arrays result of a batch estimator run."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    floor: np.ndarray
    residual: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    clamped: np.ndarray
    failed: np.ndarray

    @property
    def n(self) -> int:
        return self.x.size

    def positions(self) -> np.ndarray:
        return np.stack([self.x, self.y, self.z], axis=1)

    def single(self, i: int = 0) -> PositionEstimate:
        if self.failed[i]:
            raise EstimationFailureError("no floor estimator produced a solution")
        return PositionEstimate(
            x=float(self.x[i]),
            y=float(self.y[i]),
            floor=int(self.floor[i]),
            z=float(self.z[i]),
            residual=float(self.residual[i]),
            iterations=int(self.iterations[i]),
            converged=bool(self.converged[i]),
            clamped=bool(self.clamped[i]),
        )


def _range_matrix(ranges) -> np.ndarray:
    """Accept a RangeVector, a (M,) vector, or a (T, M) matrix of ranges."""
    if isinstance(ranges, RangeVector):
        r = ranges.ranges[None, :]
    else:
        r = np.asarray(ranges, dtype=float)
        if r.ndim == 1:
            r = r[None, :]
    if r.ndim != 2:
        raise ValueError(f"ranges must be 1-D or 2-D, got shape {r.shape}")
    return r


def _init_alpha(building: BuildingModel, settings: SolverSettings, n: int) -> np.ndarray:
    if settings.init_mode == "custom":
        pt = settings.init_point
    else:
        pt = (0.5 * building.length, 0.5 * building.breadth)
    return np.tile(np.asarray(pt, dtype=float), (n, 1))


def _clamp_footprint(x, y, building: BuildingModel):
    cx = np.clip(x, 0.0, building.length)
    cy = np.clip(y, 0.0, building.breadth)
    clamped = (cx != x) | (cy != y)
    return cx, cy, clamped


# ---------------------------------------------------------------------------
# Linear least squares baseline
# ---------------------------------------------------------------------------

def lls_estimate_batch(
    ranges, anchors: AnchorConfig, building: BuildingModel | None = None
) -> BatchEstimates:
    """Squared-range differencing solved by pseudoinverse, z unconstrained.

    Differencing each squared-range equation against anchor 0 linearizes the
    multilateration system. With anchors spanning fewer than 3 independent
    directions the pseudoinverse returns the minimum-norm solution; below 2
    (collinear anchors) the geometry is rejected outright.
    """
    r = _range_matrix(ranges)
    X = anchors.positions
    if X.shape[0] < 4:
        raise ValueError(f"LLS needs at least 4 anchors for 3D, got {X.shape[0]}")
    A = 2.0 * (X[1:] - X[0])
    svals = np.linalg.svd(A, compute_uv=False)
    rank = int((svals > 1e-10 * svals[0]).sum())
    if rank < 2:
        raise SingularGeometryError("anchor geometry is (near-)collinear")
    pinv = np.linalg.pinv(A, rcond=1e-10)  # (3, M-1)
    norms2 = (X * X).sum(axis=1)
    bvec = (r[:, :1] ** 2 - r[:, 1:] ** 2) + (norms2[1:] - norms2[0])[None, :]
    # explicit broadcast-sum keeps batch and single-trial runs bit-identical
    pos = (pinv[None, :, :] * bvec[:, None, :]).sum(axis=2)  # (T, 3)

    d = np.sqrt(((pos[:, None, :] - X[None, :, :]) ** 2).sum(axis=2))
    residual = np.sqrt(np.mean((d - r) ** 2, axis=1))

    t = r.shape[0]
    if building is not None:
        cx, cy, clamped = _clamp_footprint(pos[:, 0], pos[:, 1], building)
        implied = pos[:, 2] / building.floor_height + 0.5
        floor = np.clip(np.round(implied).astype(int), 1, building.num_floors)
    else:
        cx, cy, clamped = pos[:, 0], pos[:, 1], np.zeros(t, dtype=bool)
        floor = np.zeros(t, dtype=int)
    return BatchEstimates(
        x=cx,
        y=cy,
        z=pos[:, 2],
        floor=floor,
        residual=residual,
        iterations=np.ones(t, dtype=int),
        converged=np.ones(t, dtype=bool),
        clamped=clamped,
        failed=np.zeros(t, dtype=bool),
    )


def lls_estimate(
    ranges, anchors: AnchorConfig, building: BuildingModel | None = None
) -> PositionEstimate:
    """Single-shot linear least squares (see lls_estimate_batch)."""
    return lls_estimate_batch(ranges, anchors, building).single()


# ---------------------------------------------------------------------------
# Iterative projection averaging (per floor, three bias-knowledge variants)
# ---------------------------------------------------------------------------

def _ippa_distances(alpha, X, dz2):
    dx = alpha[:, 0:1] - X[:, 0][None, :]
    dy = alpha[:, 1:2] - X[:, 1][None, :]
    return np.sqrt(dx * dx + dy * dy + dz2[None, :]), dx, dy


def _ippa_residual(r, r_eff, d, settings: SolverSettings):
    if settings.residual_form == "range-mismatch":
        return np.mean(np.abs(r_eff - d), axis=1)
    return np.mean(r_eff * d, axis=1)


def ippa_floor_batch(
    ranges,
    anchors: AnchorConfig,
    floor: int,
    corrections: np.ndarray,
    building: BuildingModel,
    settings: SolverSettings = SolverSettings(),
):
    """One floor's projection-averaging estimate for a batch of range vectors.

    Per iteration, each anchor whose corrected ranging sphere excludes the
    current estimate contributes its sphere projection
    ``X_j + (r_j - rb_j) * u_j`` (u_j the unit vector from the anchor toward
    the estimate lifted to the floor height); the estimate moves to the mean
    of those contributions, in-plane. Anchors whose sphere already contains
    the estimate sit out. If every sphere contains it, the estimate stays
    put. Stops when the residual changes by less than `delta`.

    Returns (alpha (T,2), residual (T,), iterations (T,), converged (T,)).
    """
    r = _range_matrix(ranges)
    X = anchors.positions
    corrections = np.asarray(corrections, dtype=float)
    if corrections.shape != (X.shape[0],):
        raise ValueError(
            f"need one correction per anchor, got shape {corrections.shape}"
        )
    zi = node_z(building, floor)
    if settings.distance_mode == "3d":
        dz2 = (zi - X[:, 2]) ** 2
    else:
        dz2 = np.zeros(X.shape[0])

    t = r.shape[0]
    alpha = _init_alpha(building, settings, t)
    d, _, _ = _ippa_distances(alpha, X, dz2)
    phi = _ippa_residual(r, r - corrections[None, :], d, settings)

    iterations = np.zeros(t, dtype=int)
    converged = np.zeros(t, dtype=bool)
    live = np.arange(t)

    for k in range(1, settings.max_iterations + 1):
        # compact to unconverged rows; per-row math is unaffected by batching
        r_l = r[live]
        r_eff = r_l - corrections[None, :]
        a_l = alpha[live]
        d, dx, dy = _ippa_distances(a_l, X, dz2)
        safe_d = np.maximum(d, 1e-12)
        shift = (r_eff - d) / safe_d
        bx = a_l[:, 0:1] + shift * dx
        by = a_l[:, 1:2] + shift * dy
        active = r_eff <= d
        count = active.sum(axis=1)
        safe_count = np.maximum(count, 1)
        new_x = np.where(count > 0, np.where(active, bx, 0.0).sum(axis=1) / safe_count,
                         a_l[:, 0])
        new_y = np.where(count > 0, np.where(active, by, 0.0).sum(axis=1) / safe_count,
                         a_l[:, 1])
        new_alpha = np.stack([new_x, new_y], axis=1)
        d_new, _, _ = _ippa_distances(new_alpha, X, dz2)
        phi_new = _ippa_residual(r_l, r_eff, d_new, settings)

        done = np.abs(phi_new - phi[live]) < settings.delta
        alpha[live] = new_alpha
        phi[live] = phi_new
        iterations[live] = k
        converged[live[done]] = True
        live = live[~done]
        if live.size == 0:
            break
    return alpha, phi, iterations, converged


def ippa_floor_estimate(
    ranges,
    anchors: AnchorConfig,
    floor: int,
    bias_corrections,
    settings: SolverSettings = SolverSettings(),
    building: BuildingModel | None = None,
):
    """Single-shot per-floor projection estimate; returns (alpha, residual)."""
    if building is None:
        raise ValueError("building is required (floor height and centroid init)")
    alpha, phi, _, _ = ippa_floor_batch(
        ranges, anchors, floor, np.asarray(bias_corrections, dtype=float),
        building, settings,
    )
    return alpha[0], float(phi[0])


def _ippa_corrections(
    variant: IppaVariant, bias_table: BiasTable | None, floor: int, m: int
) -> np.ndarray:
    if variant.stat is None:
        return np.zeros(m)
    if bias_table is None:
        raise ValueError(f"variant {variant.value} requires a bias table")
    return bias_table.corrections(variant.stat, floor)


def ippa_estimate_batch(
    ranges,
    anchors: AnchorConfig,
    building: BuildingModel,
    bias_table: BiasTable | None,
    variant: IppaVariant,
    settings: SolverSettings = SolverSettings(),
) -> BatchEstimates:
    """Run the projection estimator on every floor and keep the best residual.

    Residual ties break toward the lowest floor index. The winning floor's
    midpoint height becomes z; (x, y) are clamped into the footprint with the
    clamp flagged.
    """
    r = _range_matrix(ranges)
    t = r.shape[0]
    n_floors = building.num_floors
    alphas = np.empty((t, n_floors, 2))
    phis = np.empty((t, n_floors))
    iters = np.empty((t, n_floors), dtype=int)
    convs = np.empty((t, n_floors), dtype=bool)
    for fl in range(1, n_floors + 1):
        corr = _ippa_corrections(variant, bias_table, fl, anchors.m)
        a, p, it, cv = ippa_floor_batch(r, anchors, fl, corr, building, settings)
        alphas[:, fl - 1] = a
        phis[:, fl - 1] = p
        iters[:, fl - 1] = it
        convs[:, fl - 1] = cv

    best = np.argmin(phis, axis=1)
    rows = np.arange(t)
    ax = alphas[rows, best, 0]
    ay = alphas[rows, best, 1]
    cx, cy, clamped = _clamp_footprint(ax, ay, building)
    floor = best + 1
    z = (floor - 1) * building.floor_height + 0.5 * building.floor_height
    return BatchEstimates(
        x=cx,
        y=cy,
        z=z,
        floor=floor,
        residual=phis[rows, best],
        iterations=iters[rows, best],
        converged=convs[rows, best],
        clamped=clamped,
        failed=np.zeros(t, dtype=bool),
    )


def ippa_estimate(
    ranges,
    anchors: AnchorConfig,
    building: BuildingModel,
    bias_table: BiasTable | None,
    variant: IppaVariant,
    settings: SolverSettings = SolverSettings(),
) -> PositionEstimate:
    """Single-shot projection estimate with floor selection."""
    return ippa_estimate_batch(
        ranges, anchors, building, bias_table, variant, settings
    ).single()


# ---------------------------------------------------------------------------
# Per-floor Gauss-Newton on the diffraction path model
# ---------------------------------------------------------------------------

def _floor_model(building: BuildingModel, floor: int):
    upper, _ = edges_for_floor(building, floor)
    zn = node_z(building, floor)
    return zn, upper.z, upper.endpoint_1.x, upper.endpoint_2.x


def _paths_at(alpha, X, zn, ze, x1, x2):
    p, _, _, status = _path_length_arrays(
        X[:, 0][None, :], X[:, 1][None, :], X[:, 2][None, :],
        alpha[:, 0:1], alpha[:, 1:2], zn, ze, x1, x2,
    )
    return p, status == _STATUS_OK


def _jacobian_at(alpha, X, zn, ze, x1, x2):
    hx, hy, valid = _jacobian_arrays(
        X[:, 0][None, :], X[:, 1][None, :], X[:, 2][None, :],
        alpha[:, 0:1], alpha[:, 1:2], zn, ze, x1, x2,
    )
    return hx, hy, valid


def nls_jacobian(
    alpha, floor: int, anchors: AnchorConfig, building: BuildingModel
) -> np.ndarray:
    """Analytic (M, 2) Jacobian of the upper-edge path lengths at `alpha`.

    Uses the quadratic-root branch the diffraction solver selects. Raises
    NoEdgeDiffraction if any anchor loses its diffraction point at `alpha`
    and NearSingularDerivativeError where the discriminant is too small for
    the branch derivative (callers should fall back to a damped step).
    """
    a = np.asarray(alpha, dtype=float).reshape(1, 2)
    zn, ze, x1, x2 = _floor_model(building, floor)
    X = anchors.positions
    _, path_ok = _paths_at(a, X, zn, ze, x1, x2)
    if not path_ok.all():
        raise NoEdgeDiffraction(
            f"no diffraction point for anchors {np.flatnonzero(~path_ok[0]).tolist()}"
        )
    hx, hy, valid = _jacobian_at(a, X, zn, ze, x1, x2)
    if not valid.all():
        raise NearSingularDerivativeError(
            f"discriminant near zero for anchors {np.flatnonzero(~valid[0]).tolist()}"
        )
    return np.stack([hx[0], hy[0]], axis=1)


def nls_floor_batch(
    ranges,
    anchors: AnchorConfig,
    floor: int,
    building: BuildingModel,
    settings: SolverSettings = SolverSettings(),
):
    """Gauss-Newton fit of (x_n, y_n) on one floor for a batch of trials.

    Minimizes the sum of squared range-vs-path mismatches under the
    upper-edge model. Anchors without a valid diffraction point or with a
    near-singular derivative drop out of the normal equations for that
    iteration; fewer than 2 usable anchors fails the floor (residual +inf).
    Steps that increase the residual are rejected and retried with damping
    escalated tenfold (capped); ill-conditioned normal matrices escalate the
    same way. Stops when the accepted step is shorter than `delta`.

    Returns (alpha (T,2), residual (T,), iterations (T,), converged (T,)).
    """
    r = _range_matrix(ranges)
    X = anchors.positions
    if X.shape[0] < 2:
        raise ValueError("per-floor fit needs at least 2 anchors")
    zn, ze, x1, x2 = _floor_model(building, floor)
    t = r.shape[0]

    alpha = _init_alpha(building, settings, t)
    mu = np.full(t, float(settings.damping))
    iterations = np.zeros(t, dtype=int)
    converged = np.zeros(t, dtype=bool)
    failed = np.zeros(t, dtype=bool)
    live = np.arange(t)

    for k in range(1, settings.max_iterations + 1):
        if live.size == 0:
            break
        # compact to still-iterating rows; per-row math is batch-size neutral
        a_l = alpha[live]
        r_l = r[live]
        p, p_ok = _paths_at(a_l, X, zn, ze, x1, x2)
        hx, hy, j_ok = _jacobian_at(a_l, X, zn, ze, x1, x2)
        usable = p_ok & j_ok

        die = usable.sum(axis=1) < 2
        if die.any():
            rows = live[die]
            failed[rows] = True
            iterations[rows] = k

        g = np.where(usable, r_l - np.where(usable, p, 0.0), 0.0)
        hx = np.where(usable, hx, 0.0)
        hy = np.where(usable, hy, 0.0)
        h11 = (hx * hx).sum(axis=1)
        h12 = (hx * hy).sum(axis=1)
        h22 = (hy * hy).sum(axis=1)
        g1 = (hx * g).sum(axis=1)
        g2 = (hy * g).sum(axis=1)
        res_here = (g * g).sum(axis=1)

        pending = ~die
        accepted = np.zeros(live.size, dtype=bool)
        stalled = np.zeros(live.size, dtype=bool)
        new_alpha = a_l.copy()
        step_norm = np.zeros(live.size)
        mu_try = mu[live]
        while pending.any():
            a11 = h11 + mu_try
            a22 = h22 + mu_try
            det = a11 * a22 - h12 * h12
            tr = a11 + a22
            gap = np.sqrt(np.maximum((a11 - a22) ** 2 + 4.0 * h12 * h12, 0.0))
            eig_min = 0.5 * (tr - gap)
            eig_max = 0.5 * (tr + gap)
            ill = (eig_min <= 0.0) | (eig_max > CONDITION_LIMIT * eig_min)
            safe_det = np.where(ill | (det == 0.0), 1.0, det)
            sx = (a22 * g1 - h12 * g2) / safe_det
            sy = (a11 * g2 - h12 * g1) / safe_det
            cand = a_l + np.stack([sx, sy], axis=1)
            p_c, ok_c = _paths_at(cand, X, zn, ze, x1, x2)
            cand_valid = usable & ok_c
            res_cand = np.where(
                cand_valid, (r_l - np.where(cand_valid, p_c, 0.0)) ** 2, 0.0
            ).sum(axis=1)
            # a candidate that loses an anchor is not comparable; reject it
            comparable = (cand_valid == usable).all(axis=1)
            ok = pending & ~ill & comparable & (res_cand <= res_here + 1e-12)
            new_alpha = np.where(ok[:, None], cand, new_alpha)
            step_norm = np.where(ok, np.hypot(sx, sy), step_norm)
            accepted |= ok
            reject = pending & ~ok
            at_cap = reject & (mu_try >= DAMPING_CAP)
            mu_try = np.where(
                reject & ~at_cap,
                np.minimum(np.where(mu_try == 0.0, DAMPING_FLOOR, mu_try * 10.0), DAMPING_CAP),
                mu_try,
            )
            # persistent rejection even fully damped: stall with the current
            # (finite-residual) iterate
            stalled |= at_cap
            pending = reject & ~at_cap

        alpha[live] = np.where(accepted[:, None], new_alpha, a_l)
        mu[live] = np.where(accepted, np.where(mu_try > 1e-6, mu_try / 10.0, 0.0), mu_try)
        done = accepted & (step_norm < settings.delta)
        iterations[live[accepted | stalled]] = k
        converged[live[done]] = True
        retire = die | stalled | done
        live = live[~retire]

    p, p_ok = _paths_at(alpha, X, zn, ze, x1, x2)
    residual = np.where(p_ok, (r - np.where(p_ok, p, 0.0)) ** 2, 0.0).sum(axis=1)
    residual = np.where(failed, np.inf, residual)
    return alpha, residual, iterations, converged


def nls_floor_estimate(
    ranges,
    anchors: AnchorConfig,
    floor: int,
    building: BuildingModel,
    settings: SolverSettings = SolverSettings(),
):
    """Single-shot per-floor Gauss-Newton; returns (alpha, residual)."""
    alpha, res, _, _ = nls_floor_batch(ranges, anchors, floor, building, settings)
    return alpha[0], float(res[0])


def nls_estimate_batch(
    ranges,
    anchors: AnchorConfig,
    building: BuildingModel,
    settings: SolverSettings = SolverSettings(),
) -> BatchEstimates:
    """Per-floor Gauss-Newton with smallest-residual floor selection."""
    r = _range_matrix(ranges)
    t = r.shape[0]
    n_floors = building.num_floors
    alphas = np.empty((t, n_floors, 2))
    resids = np.empty((t, n_floors))
    iters = np.empty((t, n_floors), dtype=int)
    convs = np.empty((t, n_floors), dtype=bool)
    for fl in range(1, n_floors + 1):
        a, res, it, cv = nls_floor_batch(r, anchors, fl, building, settings)
        alphas[:, fl - 1] = a
        resids[:, fl - 1] = res
        iters[:, fl - 1] = it
        convs[:, fl - 1] = cv

    best = np.argmin(resids, axis=1)
    rows = np.arange(t)
    failed = ~np.isfinite(resids[rows, best])
    ax = alphas[rows, best, 0]
    ay = alphas[rows, best, 1]
    cx, cy, clamped = _clamp_footprint(ax, ay, building)
    floor = best + 1
    z = (floor - 1) * building.floor_height + 0.5 * building.floor_height
    return BatchEstimates(
        x=cx,
        y=cy,
        z=z,
        floor=floor,
        residual=resids[rows, best],
        iterations=iters[rows, best],
        converged=convs[rows, best],
        clamped=clamped,
        failed=failed,
    )


def nls_estimate(
    ranges,
    anchors: AnchorConfig,
    building: BuildingModel,
    settings: SolverSettings = SolverSettings(),
) -> PositionEstimate:
    """Single-shot Gauss-Newton estimate with floor selection."""
    return nls_estimate_batch(ranges, anchors, building, settings).single()
