"""Motion- and appearance-controlled video generation from crude warped
references via region-dependent dual-clock diffusion denoising."""

from .diffusion import (
    AnalyticGaussianDenoiser,
    DenoiserAdapter,
    NoiseSchedule,
    VideoState,
    ddpm_step,
    forward_noise,
    make_schedule,
)
from .motion import (
    Keyframe,
    MotionSpec,
    SourceImage,
    SpecValidationError,
    WarpedReference,
    build_warped_reference,
    forward_warp,
    nn_inpaint,
    rasterize_trajectory,
)
from .sampler import (
    GuidanceMask,
    SampleResult,
    SamplerConfig,
    app_a_settings,
    project_mask,
    run_ablation_grid,
    sample,
    sdedit_baseline,
)

__version__ = "0.1.0"

__all__ = [
    "AnalyticGaussianDenoiser",
    "DenoiserAdapter",
    "NoiseSchedule",
    "VideoState",
    "ddpm_step",
    "forward_noise",
    "make_schedule",
    "Keyframe",
    "MotionSpec",
    "SourceImage",
    "SpecValidationError",
    "WarpedReference",
    "build_warped_reference",
    "forward_warp",
    "nn_inpaint",
    "rasterize_trajectory",
    "GuidanceMask",
    "SampleResult",
    "SamplerConfig",
    "app_a_settings",
    "project_mask",
    "run_ablation_grid",
    "sample",
    "sdedit_baseline",
    "__version__",
]
