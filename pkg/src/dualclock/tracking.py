"""Desk-scale trackers and flow providers standing in for learned models.

The object tracker follows the centroid of pixels near the initial region's
mean color; background points are tracked by local template matching. Flow
providers are discovered through a named registry so metric code stays
agnostic of how flow is produced.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .metrics import MetricError, TrackResult

FlowProvider = Callable[[np.ndarray], np.ndarray]

_FLOW_REGISTRY: dict[str, Callable[..., FlowProvider]] = {}


def register_flow_provider(name: str, factory: Callable[..., FlowProvider]) -> None:
    _FLOW_REGISTRY[name] = factory


def get_flow_provider(name: str, **kwargs) -> FlowProvider:
    if name not in _FLOW_REGISTRY:
        raise KeyError(f"unknown flow provider {name!r}; have {sorted(_FLOW_REGISTRY)}")
    return _FLOW_REGISTRY[name](**kwargs)


def _luma(video: np.ndarray) -> np.ndarray:
    # Rec.601 luma; adequate for matching on toy content
    return 0.299 * video[:, 0] + 0.587 * video[:, 1] + 0.114 * video[:, 2]


def block_matching_flow(
    video: np.ndarray,
    block_size: int = 8,
    search_radius: int = 3,
    zero_bias: float = 0.6,
) -> np.ndarray:
    """Dense integer flow by exhaustive SAD block matching between
    consecutive frames.

    A nonzero displacement is accepted only when its SAD beats the
    zero-displacement SAD by the relative `zero_bias` margin; that keeps
    stochastic frame-to-frame texture jitter (which has no consistent
    motion) from registering as flow, while real rigid motion clears the
    margin easily. `zero_bias=1.0` disables the bias. Exact ties prefer the
    smallest displacement.
    """
    video = np.asarray(video)
    F, _, H, W = video.shape
    gray = _luma(video.astype(np.float32))
    flow = np.zeros((F - 1, 2, H, W), dtype=np.float32)
    bs, sr = block_size, search_radius
    offsets = [(dy, dx) for dy in range(-sr, sr + 1) for dx in range(-sr, sr + 1)]
    offsets.sort(key=lambda d: (d[0] * d[0] + d[1] * d[1], d[0], d[1]))
    for f in range(F - 1):
        cur, nxt = gray[f], gray[f + 1]
        for by in range(0, H - bs + 1, bs):
            for bx in range(0, W - bs + 1, bs):
                block = cur[by : by + bs, bx : bx + bs]
                zero_sad = float(np.abs(nxt[by : by + bs, bx : bx + bs] - block).sum())
                best, best_d = zero_sad * zero_bias, (0, 0)
                for dy, dx in offsets:
                    if dy == 0 and dx == 0:
                        continue
                    ty, tx = by + dy, bx + dx
                    if ty < 0 or tx < 0 or ty + bs > H or tx + bs > W:
                        continue
                    sad = float(np.abs(nxt[ty : ty + bs, tx : tx + bs] - block).sum())
                    if sad < best:
                        best, best_d = sad, (dy, dx)
                flow[f, 0, by : by + bs, bx : bx + bs] = best_d[1]
                flow[f, 1, by : by + bs, bx : bx + bs] = best_d[0]
    return flow


def make_ground_truth_provider(flow: np.ndarray) -> FlowProvider:
    """Provider returning precomputed (oracle) flow, ignoring the video."""
    flow = np.asarray(flow, dtype=np.float32)

    def provider(video: np.ndarray) -> np.ndarray:
        if flow.shape[0] != len(video) - 1:
            raise MetricError("ground-truth flow length does not match video")
        return flow

    return provider


register_flow_provider("block_matching", lambda **kw: (lambda v: block_matching_flow(v, **kw)))
register_flow_provider("ground_truth", make_ground_truth_provider)


def _grid_points(H: int, W: int, n: int, margin: int) -> np.ndarray:
    xs = np.linspace(margin, W - 1 - margin, n)
    ys = np.linspace(margin, H - 1 - margin, n)
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def _match_patch(
    prev: np.ndarray, nxt: np.ndarray, pos: np.ndarray, patch: int, radius: int
) -> np.ndarray:
    H, W = prev.shape
    half = patch // 2
    cx = int(round(pos[0]))
    cy = int(round(pos[1]))
    cx = min(max(cx, half), W - 1 - half)
    cy = min(max(cy, half), H - 1 - half)
    template = prev[cy - half : cy + half + 1, cx - half : cx + half + 1]
    best_rank, best_d = None, (0, 0)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            ty, tx = cy + dy, cx + dx
            if ty - half < 0 or tx - half < 0 or ty + half >= H or tx + half >= W:
                continue
            cand = nxt[ty - half : ty + half + 1, tx - half : tx + half + 1]
            ssd = float(((cand - template) ** 2).sum())
            # ties prefer the smallest displacement, deterministically
            rank = (ssd, dy * dy + dx * dx, dy, dx)
            if best_rank is None or rank < best_rank:
                best_rank, best_d = rank, (dx, dy)
    return pos + np.asarray(best_d, dtype=np.float64)


def centroid_tracker(
    video: np.ndarray,
    initial_mask: np.ndarray,
    color_threshold: float = 0.35,
    grid_size: int = 16,
    patch: int = 9,
    search_radius: int = 6,
) -> TrackResult:
    """Track the masked object by color centroid and a uniform grid of
    background points by template matching.

    The object position in each frame is the centroid of pixels whose RGB
    distance to the initial region's mean color stays under the threshold;
    frames with no matching pixel are flagged lost and inherit the previous
    position. `grid_size=0` skips background tracking (the grid comes back
    empty), which batch evaluations use when only the object track matters.
    """
    video = np.asarray(video, dtype=np.float32)
    F, C, H, W = video.shape
    mask0 = np.asarray(initial_mask).astype(bool)
    if mask0.shape != (H, W):
        raise MetricError("initial mask shape must match the video frames")
    if not mask0.any():
        raise MetricError("initial mask is empty")
    ref_color = video[0][:, mask0].mean(axis=1)  # (3,)

    ys0, xs0 = np.nonzero(mask0)
    positions = np.zeros((F, 2), dtype=np.float64)
    lost = np.zeros(F, dtype=bool)
    last = np.array([xs0.mean(), ys0.mean()])
    for f in range(F):
        dist = np.linalg.norm(video[f] - ref_color[:, None, None], axis=0)
        match = dist <= color_threshold
        if match.any():
            my, mx = np.nonzero(match)
            last = np.array([mx.mean(), my.mean()])
        else:
            lost[f] = True
        positions[f] = last

    if grid_size <= 0:
        return TrackResult(
            object_positions=positions,
            grid_positions=np.zeros((F, 0, 2), dtype=np.float64),
            lost=lost,
        )
    gray = _luma(video)
    margin = patch // 2
    queries = _grid_points(H, W, grid_size, margin)
    grid = np.zeros((F, len(queries), 2), dtype=np.float64)
    grid[0] = queries
    for f in range(F - 1):
        for j in range(len(queries)):
            grid[f + 1, j] = _match_patch(gray[f], gray[f + 1], grid[f, j], patch, search_radius)
    return TrackResult(object_positions=positions, grid_positions=grid, lost=lost)
