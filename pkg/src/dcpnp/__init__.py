"""Dual-coupled plug-and-play ADMM with spectral homogenization.

Solver library and benchmark harness for linear imaging inverse problems
(sparse-view / limited-angle CT, accelerated MRI) with pluggable denoiser
priors, ablation variants, and whitening / fixed-point diagnostics.
"""

from .fidelity import CgConfig, CgResult, prox_data_consistency
from .grid_core import (
    forward_dft,
    inverse_dft,
    load_grid,
    make_rng,
    sample_white_gaussian,
    save_grid,
    save_pgm,
)
from .metrics import psnr, ssim
from .experiment import (
    ExperimentConfig,
    MetricRow,
    ablate,
    default_config,
    load_config,
    run_experiment,
    sweep_nfe,
)
from .operators import (
    CartesianMask,
    DenseOperator,
    FourierMaskOperator,
    IdentityOperator,
    LinearOperator,
    RadonGeometry,
    RadonOperator,
    dot_test,
    fbp,
    fourier_mask_apply,
    load_mask,
    make_cartesian_mask,
    make_limited_angle_geometry,
    make_sparse_view_geometry,
    radon_adjoint,
    radon_forward,
    save_mask,
)
from .phantoms import PhantomSpec, flat_disk, make_phantom, mri_phantom, random_ellipses, shepp_logan
from .priors import (
    Denoiser,
    DenoiserError,
    ExternalDenoiser,
    GaussianPriorDenoiser,
    IdentityDenoiser,
    NoiseSchedule,
    TvProxDenoiser,
    make_denoiser,
    schedule_sigma,
    tweedie_consistency_check,
)
from .solver import (
    ABLATION_GRID,
    FULL_METHOD,
    HQS_BASELINE,
    IterationTrace,
    SolverDivergence,
    SolverState,
    VariantSpec,
    certify_fixed_point,
    dual_update,
    initialize,
    run,
)
from .spectral import (
    ShConfig,
    SmoothingKernel,
    SpectralReport,
    dominance_report,
    estimate_psd,
    estimate_residual,
    homogenize,
    naive_inject,
    spectral_deficit,
    synthesize_complementary_noise,
)

__version__ = "0.1.0"
