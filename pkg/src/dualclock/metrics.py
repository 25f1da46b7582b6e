"""Motion-control metrics: trajectory distances, dynamic-degree
classification, and frame-alignment scores for camera references.

Formulas operate on plain arrays so they can be checked against brute-force
recomputation; perception-model metrics (LPIPS, FID, CLIP) are exposed only
as plugin slots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.ndimage import gaussian_filter


class MetricError(ValueError):
    pass


@dataclass
class TrackResult:
    """Tracked positions: the object track plus a grid of background points.

    Positions are (x, y); `lost` flags frames where the object matcher found
    nothing (those frames carry the last known position and are excluded
    from distance metrics).
    """

    object_positions: np.ndarray  # (F, 2)
    grid_positions: np.ndarray  # (F, J, 2)
    lost: np.ndarray  # (F,) bool

    def loss_ratio(self) -> float:
        return float(self.lost.mean())


def _object_track(track) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(track, TrackResult):
        return track.object_positions, track.lost
    arr = np.asarray(track, dtype=np.float64)
    return arr, np.zeros(len(arr), dtype=bool)


def ctd(track, target: np.ndarray, max_loss_ratio: float = 0.2) -> float:
    """Mean per-frame Euclidean distance between track and target trajectory.

    Lost frames are excluded; a loss ratio above `max_loss_ratio` fails the
    measurement instead of silently reporting a truncated mean.
    """
    positions, lost = _object_track(track)
    target = np.asarray(target, dtype=np.float64)
    if positions.shape != target.shape:
        raise MetricError(
            f"track length {positions.shape} does not match target {target.shape}"
        )
    if lost.mean() > max_loss_ratio:
        raise MetricError(f"tracker lost the object in {lost.mean():.0%} of frames")
    keep = ~lost
    return float(np.linalg.norm(positions[keep] - target[keep], axis=1).mean())


def bg_obj_ctd(track: TrackResult) -> float:
    """Mean deviation between grid-point displacements and the object
    displacement, both measured from the first frame:

        (1 / ((T-1) J)) * sum_{t>=2} sum_j || dp_{j,t} - do_t ||

    Higher values mean less background co-motion.
    """
    obj = track.object_positions
    grid = track.grid_positions
    F = obj.shape[0]
    if F < 2:
        raise MetricError("need at least two frames")
    d_obj = obj[1:] - obj[0]  # (F-1, 2)
    d_grid = grid[1:] - grid[0]  # (F-1, J, 2)
    dists = np.linalg.norm(d_grid - d_obj[:, None, :], axis=2)
    return float(dists.mean())


@dataclass
class DynamicDegree:
    dynamic: bool
    score: float  # fraction of dynamic frames
    per_frame: np.ndarray
    threshold: float


def dynamic_degree(
    video: np.ndarray,
    flow_provider: Callable[[np.ndarray], np.ndarray],
    alpha: float = 3.5,
) -> DynamicDegree:
    """Classify a clip as dynamic from its flow magnitudes.

    A frame is dynamic when the mean of its top-5% flow magnitudes exceeds
    alpha * min(H, W) / 256; the clip is dynamic when at least 25% of frames
    are.
    """
    video = np.asarray(video)
    F, _, H, W = video.shape
    flow = np.asarray(flow_provider(video))
    if flow.shape != (F - 1, 2, H, W):
        raise MetricError(f"flow shape {flow.shape} does not match video {(F - 1, 2, H, W)}")
    threshold = alpha * min(H, W) / 256.0
    k = max(1, int(round(0.05 * H * W)))
    per_frame = np.zeros(F - 1, dtype=bool)
    for f in range(F - 1):
        mags = np.hypot(flow[f, 0], flow[f, 1]).ravel()
        top = np.partition(mags, len(mags) - k)[len(mags) - k :]
        per_frame[f] = top.mean() > threshold
    score = float(per_frame.mean()) if len(per_frame) else 0.0
    return DynamicDegree(
        dynamic=score >= 0.25, score=score, per_frame=per_frame, threshold=threshold
    )


def _ssim_single(x: np.ndarray, y: np.ndarray, k1: float, k2: float, sigma: float) -> float:
    # 11x11 gaussian window (sigma 1.5, truncate 3.5), reflect padding,
    # population (not sample) statistics; border of window radius cropped
    c1 = (k1 * 1.0) ** 2
    c2 = (k2 * 1.0) ** 2
    truncate = 3.5
    r = int(truncate * sigma + 0.5)
    filt = lambda a: gaussian_filter(a, sigma=sigma, truncate=truncate, mode="reflect")
    ux, uy = filt(x), filt(y)
    uxx, uyy, uxy = filt(x * x), filt(y * y), filt(x * y)
    vx = uxx - ux * ux
    vy = uyy - uy * uy
    cxy = uxy - ux * uy
    s = ((2 * ux * uy + c1) * (2 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
    return float(s[r:-r, r:-r].mean())


def ssim_frame(x: np.ndarray, y: np.ndarray, k1: float = 0.01, k2: float = 0.03,
               sigma: float = 1.5) -> float:
    """Mean SSIM of one (C, H, W) frame pair on [0, 1] data."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return float(np.mean([_ssim_single(x[c], y[c], k1, k2, sigma) for c in range(x.shape[0])]))


# slots for externally-backed perceptual metrics (LPIPS, FID, CLIP, ...);
# each plugin maps (generated, reference) -> float and is merged into the
# camera_metrics report under its registered name
PERCEPTUAL_PLUGINS: dict[str, Callable[[np.ndarray, np.ndarray], float]] = {}


def register_perceptual_metric(
    name: str, fn: Callable[[np.ndarray, np.ndarray], float]
) -> None:
    PERCEPTUAL_PLUGINS[name] = fn


def camera_metrics(
    generated: np.ndarray,
    reference: np.ndarray,
    flow_provider: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> dict:
    """Frame-alignment metrics between a generated and a reference video:
    pixel MSE, mean SSIM, MSE between the two videos' flow fields, plus any
    registered perceptual plugins."""
    generated = np.asarray(generated)
    reference = np.asarray(reference)
    if generated.shape != reference.shape:
        raise MetricError(f"shape mismatch {generated.shape} vs {reference.shape}")
    mse = float(np.mean((generated.astype(np.float64) - reference.astype(np.float64)) ** 2))
    ssim = float(np.mean([ssim_frame(g, r) for g, r in zip(generated, reference)]))
    out = {"mse": mse, "ssim": ssim, "flow_mse": None}
    if flow_provider is not None:
        fg = np.asarray(flow_provider(generated), dtype=np.float64)
        fr = np.asarray(flow_provider(reference), dtype=np.float64)
        out["flow_mse"] = float(np.mean((fg - fr) ** 2))
    for name, fn in PERCEPTUAL_PLUGINS.items():
        out[name] = float(fn(generated, reference))
    return out


@dataclass(frozen=True)
class ResizePadMap:
    """The affine resize-and-pad mapping applied to frames, reused for
    trajectories: p -> scale * p + offset."""

    scale: float
    offset: tuple

    def __post_init__(self):
        if self.scale == 0 or not math.isfinite(self.scale):
            raise MetricError("scale must be nonzero and finite")

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts * self.scale + np.asarray(self.offset, dtype=np.float64)

    def inverse(self) -> "ResizePadMap":
        off = np.asarray(self.offset, dtype=np.float64)
        return ResizePadMap(scale=1.0 / self.scale, offset=tuple(-off / self.scale))


def trajectory_rescale(trajectory: np.ndarray, params: ResizePadMap) -> np.ndarray:
    """Apply the frames' resize-and-pad affine map to trajectory points."""
    return params.apply(trajectory)


def render_metrics_table(rows: list[dict], columns: Optional[list[str]] = None) -> str:
    """Plain-text table, one row per setting, mirroring the ablation layout."""
    if not rows:
        return "(no rows)"
    if columns is None:
        columns = list(rows[0].keys())
    cells = [[_fmt(r.get(c)) for c in columns] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for row in cells:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
    return "\n".join(lines)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.3f}"
    return str(v)
