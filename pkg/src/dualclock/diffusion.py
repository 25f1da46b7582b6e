"""Discrete diffusion machinery: noise schedules, forward noising, ancestral
reverse steps, and the denoiser adapter contract.

Timesteps are integer step indices t in [0, T]. alpha_bar is indexed by t with
alpha_bar[0] == 1, so t=0 is the clean state and t=T the most corrupted one.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Optional, Protocol

import numpy as np


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative signal coefficients for a T-step discrete diffusion.

    alpha_bar has length T+1, starts at exactly 1.0 and decreases strictly.
    Per-step quantities are derived: alpha_t = alpha_bar[t]/alpha_bar[t-1],
    beta_t = 1 - alpha_t, and the posterior variance
    beta_tilde_t = beta_t * (1 - alpha_bar[t-1]) / (1 - alpha_bar[t]).
    """

    kind: str
    T: int
    alpha_bar: np.ndarray

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        if ab.shape != (self.T + 1,):
            raise ScheduleError(f"alpha_bar must have length T+1={self.T + 1}")
        if ab[0] != 1.0:
            raise ScheduleError("alpha_bar[0] must equal 1")
        if ab[-1] <= 0.0:
            raise ScheduleError("alpha_bar[T] must stay positive")
        if not np.all(np.diff(ab) < 0):
            raise ScheduleError("alpha_bar must be strictly decreasing")
        object.__setattr__(self, "alpha_bar", ab)

    @property
    def alphas(self) -> np.ndarray:
        # per-step alpha_t for t = 1..T, padded with 1.0 at index 0
        ab = self.alpha_bar
        out = np.ones_like(ab)
        out[1:] = ab[1:] / ab[:-1]
        return out

    @property
    def betas(self) -> np.ndarray:
        return 1.0 - self.alphas

    def posterior_variance(self, t: int) -> float:
        """Variance beta_tilde of the ancestral reverse step at t (t >= 1)."""
        ab = self.alpha_bar
        beta_t = 1.0 - ab[t] / ab[t - 1]
        if t == 1:
            return 0.0
        return beta_t * (1.0 - ab[t - 1]) / (1.0 - ab[t])

    def to_json(self) -> str:
        return json.dumps(
            {"kind": self.kind, "T": self.T, "alpha_bar": self.alpha_bar.tolist()}
        )

    @classmethod
    def from_json(cls, text: str) -> "NoiseSchedule":
        data = json.loads(text)
        return cls(kind=data["kind"], T=int(data["T"]),
                   alpha_bar=np.asarray(data["alpha_bar"], dtype=np.float64))

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def make_schedule(kind: str = "cosine", T: int = 50) -> NoiseSchedule:
    """Build a discrete schedule. `kind` is "linear" or "cosine" (default)."""
    if T < 2:
        raise ScheduleError("schedule needs T >= 2 steps")
    if kind == "linear":
        betas = np.linspace(1e-4, 0.02, T, dtype=np.float64)
        alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    elif kind == "cosine":
        # squared-cosine ramp with the usual 0.008 offset; per-step betas are
        # clipped at 0.999 so alpha_bar stays strictly positive
        s = 0.008
        f = np.cos((np.arange(T + 1) / T + s) / (1 + s) * math.pi / 2) ** 2
        raw = f / f[0]
        betas = np.clip(1.0 - raw[1:] / raw[:-1], 0.0, 0.999)
        alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    else:
        raise ScheduleError(f"unknown schedule kind {kind!r}")
    return NoiseSchedule(kind=kind, T=T, alpha_bar=alpha_bar)


@dataclass
class VideoState:
    """A (F, C, H, W) tensor tagged with the single timestep it lives at."""

    values: np.ndarray
    t: int

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("video state must be finite")
        if self.t < 0:
            raise ValueError("timestep tag must be >= 0")


class DenoiserAdapter(Protocol):
    """Contract every denoiser must satisfy: deterministic noise prediction
    given (state, t, condition image, optional text)."""

    def predict(
        self,
        state: VideoState,
        t: int,
        condition: np.ndarray,
        text: Optional[str] = None,
    ) -> np.ndarray: ...


def forward_noise(
    x0: VideoState, t: int, schedule: NoiseSchedule, rng: np.random.Generator
) -> VideoState:
    """Sample q(x_t | x_0) = sqrt(ab_t) x_0 + sqrt(1 - ab_t) eps.

    t=0 returns x0 unchanged (bitwise) and draws nothing from the rng.
    """
    if not 0 <= t <= schedule.T:
        raise ValueError(f"t={t} outside [0, {schedule.T}]")
    if t == 0:
        return VideoState(values=x0.values, t=0)
    ab = schedule.alpha_bar[t]
    x = x0.values
    eps = rng.standard_normal(x.shape, dtype=x.dtype if x.dtype == np.float32 else np.float64)
    values = np.sqrt(ab, dtype=x.dtype) * x + np.sqrt(1.0 - ab, dtype=x.dtype) * eps.astype(x.dtype, copy=False)
    return VideoState(values=values, t=t)


def ddpm_step(
    state: VideoState,
    noise_pred: np.ndarray,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
) -> VideoState:
    """One ancestral reverse step from t to t-1 given an eps prediction.

    Posterior mean uses the eps parameterization; variance is beta_tilde,
    which is exactly zero at t=1. The rng is consumed once per call (the t=1
    draw is scaled by zero) so fixed-seed chains are step-count reproducible.
    """
    t = state.t
    if t < 1:
        raise ValueError("ddpm_step needs t >= 1")
    ab = schedule.alpha_bar
    alpha_t = ab[t] / ab[t - 1]
    beta_t = 1.0 - alpha_t
    x = state.values
    dtype = x.dtype
    mean = (x - (beta_t / math.sqrt(1.0 - ab[t])) * noise_pred.astype(dtype, copy=False)) / math.sqrt(alpha_t)
    var = schedule.posterior_variance(t)
    z = rng.standard_normal(x.shape, dtype=dtype if dtype == np.float32 else np.float64)
    values = (mean + math.sqrt(var) * z.astype(dtype, copy=False)).astype(dtype, copy=False)
    return VideoState(values=values, t=t - 1)


class AnalyticGaussianDenoiser:
    """Exact eps-posterior for data distributed N(mean, variance * I).

    Under that data model x_t is jointly Gaussian with eps, giving
    E[eps | x_t] = sqrt(1-ab_t) (x_t - sqrt(ab_t) mean) / (ab_t var + 1 - ab_t).
    Used as a closed-form testing oracle for the reverse chain.
    """

    def __init__(self, mean, variance: float, schedule: NoiseSchedule):
        if variance < 0:
            raise ValueError("variance must be >= 0")
        self.mean = np.asarray(mean, dtype=np.float64)
        self.variance = float(variance)
        self.schedule = schedule

    def predict(self, state: VideoState, t: int, condition=None, text=None) -> np.ndarray:
        ab = self.schedule.alpha_bar[t]
        denom = ab * self.variance + 1.0 - ab
        x = state.values
        return (math.sqrt(1.0 - ab) * (x - math.sqrt(ab) * self.mean) / denom).astype(x.dtype, copy=False)
