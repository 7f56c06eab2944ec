"""Spectral pruning of Gaussian-splat fields."""
from .errors import (
    CapacityError,
    DegenerateInputError,
    EmptySelectionError,
    PlyFormatError,
    ShapeError,
    SplatPruneError,
    TruncatedPayloadError,
    UnsupportedEncodingError,
)
from .graph import (
    PrimitiveGraph,
    build_graph,
    default_tau,
    min_nn_distance,
    normalized_shift_apply,
    spectral_norm_estimate,
)
from .metrics import psnr, ssim
from .pruner import PruneConfig, PruneReport, memory_report, prune_once, prune_schedule
from .rasterizer import CameraModel, RenderTarget, evaluate_sh, project_center, project_covariance, render
from .spectral import (
    FilterResponse,
    PruneSelection,
    band_limited_select,
    high_pass,
    low_pass,
    response_magnitudes,
)
from .splat_model import GaussianField, GaussianPrimitive, compact, covariance_of, load_field, save_field

__version__ = "0.1.0"
