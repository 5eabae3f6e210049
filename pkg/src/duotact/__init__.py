"""Digital twin of a hemispherical two-layer color-marker tactile sensor.

Forward chain: uniform marker layouts on concentric hemispheres, a
quasi-static contact model, and an equal-area fisheye renderer with
subtractive color mixing. Inverse chain: frame preprocessing, hue
segmentation, pseudo-inverse calibration of sub-images to normal
displacement, Gaussian contact fitting, and curvature recovery.
"""

from ._kernels import active_backend
from .calibration import (
    CalibrationMatrix,
    DesignMatrix,
    apply_calibration,
    build_design_matrix,
    ground_truth_targets,
    load_calibration,
    save_calibration,
    solve_calibration,
)
from .config import ExperimentConfig, default_config, load_config, parse_config
from .errors import (
    AmbiguousMatchError,
    ConfigError,
    DataError,
    DuotactError,
    FitFailedError,
    GeometryInfeasibleError,
    InsufficientDataError,
    InvalidArgumentError,
    NoContactError,
)
from .estimation import (
    CurvatureEstimate,
    GaussianFit,
    SampledField,
    estimate_curvature,
    fit_gaussian,
    interpolate_grid,
    reconstruct_field,
)
from .geometry import (
    MarkerLayout,
    SensorGeometry,
    build_layout,
    generate_uniform_points,
    nearest_neighbor_stats,
)
from .imaging import (
    HsvImage,
    MarkerObservation,
    hsv_to_rgb,
    match_observations,
    preprocess,
    rgb_to_hsv,
    segment_markers,
)
from .mechanics import (
    ContactScenario,
    ContactState,
    DisplacementField,
    ForwardModel,
    marker_displacements,
    sensitivity,
    solve_contact,
    subsurface_normal_field,
    surface_normal_profile,
)
from .rendering import (
    CameraModel,
    OpticalFilterModel,
    RadialLighting,
    RasterImage,
    compose_marker_color,
    project,
    render_frame,
)

__version__ = "0.1.0"
