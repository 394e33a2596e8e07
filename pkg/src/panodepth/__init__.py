"""High-resolution spherical disparity stitching from per-view estimates."""

from .alignment import (
    AlignmentConfig,
    DeformationGrid,
    OverlapSet,
    align_multiscale,
    apply_deformation,
    build_overlap_sets,
    energy,
    energy_gradient,
    optimize_scale,
    overlap_rms,
)
from .blending import (
    BlendConfig,
    BlendWeightField,
    blend_poisson,
    blend_weighted,
    compute_weights,
    stitch_nn,
)
from .disparity import (
    PERSPECTIVE,
    SPHERICAL,
    DisparityMap,
    convert_to_spherical,
    median_and_mad,
    standardize,
)
from .errors import DegenerateInputError, ParameterError, ProviderError, SemanticsError
from .evaluation import MetricReport, compute_metrics, evaluate_pipeline, fit_affine_disparity
from .geometry import (
    IcosahedronLayout,
    SphericalCoord,
    TangentCamera,
    build_icosahedron_layout,
    coverage_map,
    erp_pixel_to_spherical,
    gnomonic_forward,
    gnomonic_inverse,
    spherical_to_erp_pixel,
)
from .resampling import ErpImage, TangentImage, erp_to_tangent, tangent_to_erp
from .synthetic import SyntheticScene, generate_synthetic

__version__ = "0.1.0"
