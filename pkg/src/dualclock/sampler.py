"""Region-dependent dual-clock denoising over a warped reference video.

Sampling starts from the reference noised to t_weak. While t stays above
t_strong, the masked region is overridden each step with the reference
noised to t-1:

    x_{t-1} = (1 - M) * xhat_{t-1}(x_t, t, I) + M * xw_{t-1}

Below t_strong the override stops and the whole state denoises normally.
Two independent rng streams are derived from the seed: the main stream
drives initialization and ancestral-step noise, the reference stream drives
the override noising, so degenerate configurations (zero mask, equal clocks)
are bitwise identical to their plain-SDEdit counterparts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .diffusion import DenoiserAdapter, NoiseSchedule, VideoState, ddpm_step, forward_noise
from .motion import WarpedReference

REGIMES = ("dual_clock", "single_clock", "repaint_style", "unconstrained_bg")
NOISE_MODES = ("fresh_per_step", "shared_epsilon")


class SamplerConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    t_weak: int
    t_strong: int
    regime: str = "dual_clock"
    seed: int = 0
    reference_noise_mode: str = "fresh_per_step"

    def validate(self, T: int) -> None:
        if self.regime not in REGIMES:
            raise SamplerConfigError(f"unknown regime {self.regime!r}")
        if self.reference_noise_mode not in NOISE_MODES:
            raise SamplerConfigError(f"unknown reference_noise_mode {self.reference_noise_mode!r}")
        if not 0 <= self.t_strong <= self.t_weak <= T:
            raise SamplerConfigError("need 0 <= t_strong <= t_weak <= T")
        if self.regime == "single_clock" and self.t_strong != self.t_weak:
            raise SamplerConfigError("single_clock requires t_strong == t_weak")
        if self.regime == "repaint_style" and self.t_strong != 0:
            raise SamplerConfigError("repaint_style requires t_strong == 0")
        if self.regime == "unconstrained_bg" and self.t_weak != T:
            raise SamplerConfigError("unconstrained_bg requires t_weak == T")

    def to_dict(self) -> dict:
        return {
            "t_weak": self.t_weak,
            "t_strong": self.t_strong,
            "regime": self.regime,
            "seed": self.seed,
            "reference_noise_mode": self.reference_noise_mode,
        }


@dataclass(frozen=True)
class GuidanceMask:
    """Binary mask aligned with the sampling state's (F, H, W) shape."""

    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask)
        if m.dtype != bool:
            vals = np.unique(m)
            if not np.all(np.isin(vals, (0, 1))):
                raise SamplerConfigError("guidance mask values must be 0/1")
            m = m.astype(bool)
        if m.ndim != 3:
            raise SamplerConfigError("guidance mask must be (F, H, W)")
        object.__setattr__(self, "mask", m)

    @classmethod
    def zeros(cls, shape) -> "GuidanceMask":
        return cls(np.zeros(shape, dtype=bool))

    @classmethod
    def ones(cls, shape) -> "GuidanceMask":
        return cls(np.ones(shape, dtype=bool))


def project_mask(
    mask: np.ndarray,
    target_shape: tuple[int, int, int],
    temporal_factor: float = 1.0,
    spatial_factor: float = 1.0,
) -> GuidanceMask:
    """Nearest-neighbor project a (F, H, W) mask down to the state resolution.

    Upsampling is refused; each target index maps to floor(i * source/target).
    """
    m = np.asarray(mask).astype(bool)
    F, H, W = m.shape
    Ft, Ht, Wt = target_shape
    if Ft > F or Ht > H or Wt > W:
        raise SamplerConfigError("project_mask cannot upsample")
    for name, src, dst, factor in (
        ("temporal", F, Ft, temporal_factor),
        ("spatial", H, Ht, spatial_factor),
        ("spatial", W, Wt, spatial_factor),
    ):
        if factor and abs(src / dst - factor) > 0.5:
            raise SamplerConfigError(f"{name} factor {factor} inconsistent with {src}->{dst}")
    fi = np.minimum((np.arange(Ft) * (F / Ft)).astype(np.int64), F - 1)
    hi = np.minimum((np.arange(Ht) * (H / Ht)).astype(np.int64), H - 1)
    wi = np.minimum((np.arange(Wt) * (W / Wt)).astype(np.int64), W - 1)
    return GuidanceMask(m[np.ix_(fi, hi, wi)])


@dataclass
class StepSnapshot:
    t: int  # the step consuming x_t and producing x_{t-1}
    x_hat: Optional[np.ndarray]  # denoised candidate at t-1
    x_ref: Optional[np.ndarray]  # reference noised to t-1 (override window only)
    x_out: np.ndarray  # the state actually carried to t-1


@dataclass
class SampleResult:
    video: np.ndarray
    denoiser_calls: int
    override_writes: dict  # t -> number of overridden elements at that step
    config: SamplerConfig
    snapshots: list = field(default_factory=list)


def _reference_values(reference) -> np.ndarray:
    if isinstance(reference, WarpedReference):
        return reference.frames
    return np.asarray(reference)


def _rng_pair(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    main_seq, ref_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.Generator(np.random.PCG64(main_seq)), np.random.Generator(
        np.random.PCG64(ref_seq)
    )


def sample(
    denoiser: DenoiserAdapter,
    reference,
    mask: Optional[GuidanceMask],
    config: SamplerConfig,
    schedule: NoiseSchedule,
    condition: np.ndarray,
    text: Optional[str] = None,
    on_step: Optional[Callable[[StepSnapshot], None]] = None,
    keep_snapshots: bool = False,
) -> SampleResult:
    """Run dual-clock sampling and return the generated video with run stats.

    `reference` is the warped reference (WarpedReference or raw (F, C, H, W)
    array, possibly latent-encoded); `mask` must match its non-channel shape
    and may be None for an all-zero (pure SDEdit) mask.
    """
    ref = _reference_values(reference)
    if ref.ndim != 4:
        raise SamplerConfigError("reference must be (F, C, H, W)")
    config.validate(schedule.T)
    F, C, H, W = ref.shape
    if mask is None:
        mask = GuidanceMask.zeros((F, H, W))
    if mask.mask.shape != (F, H, W):
        raise SamplerConfigError(
            f"mask shape {mask.mask.shape} does not match reference {(F, H, W)}"
        )
    m = mask.mask[:, None, :, :]  # broadcast over channels
    writes_per_step = int(mask.mask.sum()) * C

    rng_main, rng_ref = _rng_pair(config.seed)
    ref0 = VideoState(values=ref, t=0)
    x = forward_noise(ref0, config.t_weak, schedule, rng_main)

    shared_eps = None
    if config.reference_noise_mode == "shared_epsilon":
        shared_eps = rng_ref.standard_normal(
            ref.shape, dtype=ref.dtype if ref.dtype == np.float32 else np.float64
        )

    calls = 0
    override_writes: dict[int, int] = {}
    snapshots: list[StepSnapshot] = []

    def reference_at(t: int) -> np.ndarray:
        if t == 0:
            return ref
        if shared_eps is not None:
            ab = schedule.alpha_bar[t]
            return (np.sqrt(ab, dtype=ref.dtype) * ref
                    + np.sqrt(1.0 - ab, dtype=ref.dtype) * shared_eps.astype(ref.dtype, copy=False))
        return forward_noise(ref0, t, schedule, rng_ref).values

    for t in range(config.t_weak, config.t_strong, -1):
        eps_hat = denoiser.predict(x, t, condition, text)
        calls += 1
        x_hat = ddpm_step(x, eps_hat, schedule, rng_main)
        x_ref = reference_at(t - 1)
        values = np.where(m, x_ref, x_hat.values)
        override_writes[t] = writes_per_step
        x = VideoState(values=values, t=t - 1)
        if on_step or keep_snapshots:
            snap = StepSnapshot(t=t, x_hat=x_hat.values, x_ref=x_ref, x_out=values)
            if keep_snapshots:
                snapshots.append(snap)
            if on_step:
                on_step(snap)

    for t in range(config.t_strong, 0, -1):
        eps_hat = denoiser.predict(x, t, condition, text)
        calls += 1
        x = ddpm_step(x, eps_hat, schedule, rng_main)
        override_writes[t] = 0
        if on_step or keep_snapshots:
            snap = StepSnapshot(t=t, x_hat=x.values, x_ref=None, x_out=x.values)
            if keep_snapshots:
                snapshots.append(snap)
            if on_step:
                on_step(snap)

    return SampleResult(
        video=x.values,
        denoiser_calls=calls,
        override_writes=override_writes,
        config=config,
        snapshots=snapshots,
    )


def sdedit_baseline(
    denoiser: DenoiserAdapter,
    reference,
    t_star: int,
    condition: np.ndarray,
    seed: int,
    schedule: NoiseSchedule,
    text: Optional[str] = None,
) -> np.ndarray:
    """Plain SDEdit: noise the reference to t_star, then denoise it fully.

    Uses the same rng-stream discipline as sample(), so the output is bitwise
    identical to sample() with an all-zero mask and t_weak = t_star.
    """
    if not 0 <= t_star <= schedule.T:
        raise SamplerConfigError(f"t_star must lie in [0, {schedule.T}]")
    ref = _reference_values(reference)
    rng_main, _ = _rng_pair(seed)
    x = forward_noise(VideoState(values=ref, t=0), t_star, schedule, rng_main)
    for t in range(t_star, 0, -1):
        eps_hat = denoiser.predict(x, t, condition, text)
        x = ddpm_step(x, eps_hat, schedule, rng_main)
    return x.values


def infer_regime(t1: int, t2: int, T: int) -> str:
    if t1 == t2:
        return "single_clock"
    if t2 == 0:
        return "repaint_style"
    if t1 == T:
        return "unconstrained_bg"
    return "dual_clock"


def app_a_settings(T: int, t_weak: int, t_strong: int) -> list[tuple[int, int, str]]:
    """The eight canonical ablation rows over the two clock ticks."""
    rows = [
        (t_weak, t_weak),
        (t_strong, t_strong),
        (T, 0),
        (t_weak, 0),
        (t_strong, 0),
        (T, t_weak),
        (T, t_strong),
        (t_weak, t_strong),
    ]
    return [(t1, t2, infer_regime(t1, t2, T)) for t1, t2 in rows]


@dataclass
class AblationRun:
    t1: int
    t2: int
    regime: str
    result: SampleResult


def run_ablation_grid(
    denoiser: DenoiserAdapter,
    reference,
    mask: Optional[GuidanceMask],
    settings: Sequence[tuple[int, int, str]],
    condition: np.ndarray,
    schedule: NoiseSchedule,
    seed: int = 0,
    text: Optional[str] = None,
) -> list[AblationRun]:
    """Execute every (t1, t2, regime) setting with a shared seed."""
    runs = []
    for t1, t2, regime in settings:
        config = SamplerConfig(
            t_weak=t1, t_strong=t2, regime=regime, seed=seed
        )
        result = sample(denoiser, reference, mask, config, schedule, condition, text)
        runs.append(AblationRun(t1=t1, t2=t2, regime=regime, result=result))
    return runs
