"""Through-window diffraction path modeling and NLOS-aware 3D positioning."""

from .bias import (
    BiasDistribution,
    BiasTable,
    COMPOSITE,
    FLOORWISE,
    build_bias_table,
    sample_bias,
)
from .config import default_anchors, default_building, load_scenario
from .diffraction import (
    DiffractionSolution,
    PathDifferenceScan,
    QuadraticCoefficients,
    fermat_oracle,
    path_difference_scan,
    path_length,
    quadratic_coefficients,
    solve_diffraction_point,
)
from .errors import (
    BiasGeometryError,
    ConfigError,
    DiffractionSolveError,
    EstimationFailureError,
    MeasurementUnavailableError,
    NearSingularDerivativeError,
    NoEdgeDiffraction,
    PositioningError,
    SingularGeometryError,
)
from .estimators import (
    BatchEstimates,
    IppaVariant,
    PositionEstimate,
    SolverSettings,
    ippa_estimate,
    ippa_estimate_batch,
    ippa_floor_estimate,
    lls_estimate,
    lls_estimate_batch,
    nls_estimate,
    nls_estimate_batch,
    nls_floor_estimate,
    nls_jacobian,
)
from .geometry import (
    AnchorConfig,
    BuildingModel,
    Edge,
    EdgeKind,
    NodePosition,
    Point3,
    edges_for_floor,
    node_z,
)
from .harness import (
    ESTIMATOR_NAMES,
    EstimatorResult,
    ExperimentConfig,
    RmseReport,
    export_report,
    run_experiment,
    run_single_trial,
    trial_rng,
)
from .measurement import NoiseModel, RangeVector, generate_measurements, sample_node

__version__ = "0.1.0"
