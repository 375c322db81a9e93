"""Redundant tree-based wavelet transform and patch-based image denoising."""
from .denoise import DenoiseConfig, DenoiseResult, add_awgn, denoise, psnr, run_denoise
from .filters import WaveletFilterPair, analysis_step, make_filter, split_even_odd, synthesis_step
from .geometry import (
    DistanceCounter,
    DistanceMetric,
    FeaturePoint,
    Permutation,
    PointSet,
    apply_permutation,
    counting,
    distance,
    invert_permutation,
    nn_path,
    path_cost,
    smoothness_report,
    total_variation,
)
from .transform import (
    CoefficientPyramid,
    OperatorSet,
    build_operators,
    closed_form_counts,
    decompose,
    propagate_features,
    reconstruct,
)

__version__ = "0.1.0"
