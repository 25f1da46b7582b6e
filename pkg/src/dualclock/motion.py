"""Cut-and-drag motion signals: build a crude warped reference video plus its
per-frame guidance mask from a source image and a keyframed region spec.

Coordinates are (x, y) with x along columns and y along rows (y grows down).
A region transform maps source pixel p to
    p' = pivot + translation + exp(log_scale) * R(rotation) @ (p - pivot)
with the pivot at the region centroid, and destinations rounded half-up to
the nearest pixel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage


class SpecValidationError(ValueError):
    """Raised when a motion spec violates its invariants.

    `violations` lists every violated invariant by name so callers (service,
    UI) can surface all of them at once.
    """

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class SourceImage:
    pixels: np.ndarray  # (3, H, W) float in [0, 1]

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.ndim != 3 or px.shape[0] != 3:
            raise SpecValidationError(["image must have shape (3, H, W)"])
        if px.shape[1] < 8 or px.shape[2] < 8:
            raise SpecValidationError(["image must be at least 8x8"])
        if not np.all(np.isfinite(px)):
            raise SpecValidationError(["image values must be finite"])
        if px.min() < 0.0 or px.max() > 1.0:
            raise SpecValidationError(["image values must lie in [0, 1]"])
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]


@dataclass(frozen=True)
class Keyframe:
    frame: int
    dx: float = 0.0
    dy: float = 0.0
    rotation: float = 0.0
    log_scale: float = 0.0
    gain: Optional[tuple] = None  # per-channel color gain, None = identity
    bias: Optional[tuple] = None

    def transform_is_identity(self) -> bool:
        return self.dx == 0 and self.dy == 0 and self.rotation == 0 and self.log_scale == 0

    def override_is_identity(self) -> bool:
        gain_id = self.gain is None or tuple(self.gain) == (1.0, 1.0, 1.0)
        bias_id = self.bias is None or tuple(self.bias) == (0.0, 0.0, 0.0)
        return gain_id and bias_id


@dataclass(frozen=True)
class MotionSpec:
    region_mask: np.ndarray  # (H, W) bool
    keyframes: tuple
    frame_count: int

    def __post_init__(self):
        violations = []
        mask = np.asarray(self.region_mask).astype(bool)
        object.__setattr__(self, "region_mask", mask)
        object.__setattr__(self, "keyframes", tuple(self.keyframes))
        if mask.ndim != 2:
            violations.append("region_mask must be 2-D")
        elif not mask.any():
            violations.append("region_mask must have at least one nonzero pixel")
        kfs = self.keyframes
        F = self.frame_count
        if F < 1:
            violations.append("frame_count must be >= 1")
        if not kfs:
            violations.append("at least one keyframe required")
        else:
            frames = [k.frame for k in kfs]
            if any(b <= a for a, b in zip(frames, frames[1:])):
                violations.append("keyframe frame indices must be strictly increasing")
            if frames[0] != 0:
                violations.append("first keyframe must be at frame 0")
            if frames[-1] != F - 1:
                violations.append("last keyframe must be at frame F-1")
            for k in kfs:
                if not all(math.isfinite(v) for v in (k.dx, k.dy, k.rotation, k.log_scale)):
                    violations.append("keyframe parameters must be finite")
                    break
            for k in kfs:
                scale = math.exp(k.log_scale) if math.isfinite(k.log_scale) else math.inf
                if not 0.05 < scale < 20:
                    violations.append("scale exp(log_scale) must lie in (0.05, 20)")
                    break
        if violations:
            raise SpecValidationError(violations)

    @property
    def has_override(self) -> bool:
        return any(k.gain is not None or k.bias is not None for k in self.keyframes)


@dataclass
class WarpedReference:
    """The crude reference video and its guidance mask.

    frames[0] equals the source image exactly; mask[f] is the splat of the
    initial region under the frame-f transform. `warnings` carries per-frame
    policy flags (e.g. a region moved fully off screen).
    """

    frames: np.ndarray  # (F, 3, H, W) float32 in [0, 1]
    mask: np.ndarray  # (F, H, W) bool
    warnings: list = field(default_factory=list)


@dataclass(frozen=True)
class RigidTransform:
    dx: float
    dy: float
    rotation: float
    log_scale: float

    def is_identity(self) -> bool:
        return self.dx == 0 and self.dy == 0 and self.rotation == 0 and self.log_scale == 0


def rasterize_trajectory(spec: MotionSpec) -> list[RigidTransform]:
    """Interpolate keyframes to one rigid transform per frame.

    Translation and rotation interpolate linearly, scale geometrically
    (linear in log_scale).
    """
    kfs = spec.keyframes
    out = []
    ki = 0
    for f in range(spec.frame_count):
        while ki + 1 < len(kfs) and kfs[ki + 1].frame <= f:
            ki += 1
        a = kfs[ki]
        if a.frame == f or ki + 1 >= len(kfs):
            out.append(RigidTransform(a.dx, a.dy, a.rotation, a.log_scale))
            continue
        b = kfs[ki + 1]
        w = (f - a.frame) / (b.frame - a.frame)
        out.append(
            RigidTransform(
                a.dx + w * (b.dx - a.dx),
                a.dy + w * (b.dy - a.dy),
                a.rotation + w * (b.rotation - a.rotation),
                a.log_scale + w * (b.log_scale - a.log_scale),
            )
        )
    return out


def _interp_override(spec: MotionSpec, f: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame color gain/bias from the keyframe overrides (identity fill)."""
    kfs = spec.keyframes

    def params(k: Keyframe):
        g = np.ones(3) if k.gain is None else np.asarray(k.gain, dtype=np.float64)
        b = np.zeros(3) if k.bias is None else np.asarray(k.bias, dtype=np.float64)
        return g, b

    ki = 0
    while ki + 1 < len(kfs) and kfs[ki + 1].frame <= f:
        ki += 1
    ga, ba = params(kfs[ki])
    if kfs[ki].frame == f or ki + 1 >= len(kfs):
        return ga, ba
    gb, bb = params(kfs[ki + 1])
    w = (f - kfs[ki].frame) / (kfs[ki + 1].frame - kfs[ki].frame)
    return ga + w * (gb - ga), ba + w * (bb - ba)


def region_pivot(mask0: np.ndarray) -> tuple[float, float]:
    """Region centroid in (x, y), the rotation/scale pivot."""
    ys, xs = np.nonzero(mask0)
    return float(xs.mean()), float(ys.mean())


def forward_warp(
    image: SourceImage,
    mask0: np.ndarray,
    transform: RigidTransform,
    pivot: Optional[tuple[float, float]] = None,
    region_pixels: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, bool]:
    """Splat the masked region to its transformed location.

    Returns (warped frame, moved mask, hole mask, offscreen_warning). Unmasked
    pixels keep their source values; the moved region wins over background.
    Collisions inside the moved region resolve to the source pixel latest in
    row-major order. `region_pixels` optionally overrides the colors splatted
    for the region (same (3, H, W) layout), used for appearance overrides.

    A transform that pushes every region pixel out of frame sets the warning
    flag instead of raising.
    """
    return _splat(image.pixels, image.pixels, mask0, transform, pivot, region_pixels)


def _splat(
    base: np.ndarray,
    source: np.ndarray,
    mask0: np.ndarray,
    transform: RigidTransform,
    pivot: Optional[tuple[float, float]] = None,
    region_pixels: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, bool]:
    mask0 = np.asarray(mask0).astype(bool)
    if not mask0.any():
        raise SpecValidationError(["region_mask must have at least one nonzero pixel"])
    for v in (transform.dx, transform.dy, transform.rotation, transform.log_scale):
        if not math.isfinite(v):
            raise SpecValidationError(["transform must be finite"])
    H, W = mask0.shape
    frame = base.copy()
    colors = source if region_pixels is None else region_pixels

    ys, xs = np.nonzero(mask0)  # row-major order
    if pivot is None:
        pivot = (float(xs.mean()), float(ys.mean()))
    cx, cy = pivot
    s = math.exp(transform.log_scale)
    cos_t, sin_t = math.cos(transform.rotation), math.sin(transform.rotation)
    rx = xs - cx
    ry = ys - cy
    dest_x = cx + transform.dx + s * (cos_t * rx - sin_t * ry)
    dest_y = cy + transform.dy + s * (sin_t * rx + cos_t * ry)
    dest_c = np.floor(dest_x + 0.5).astype(np.int64)
    dest_r = np.floor(dest_y + 0.5).astype(np.int64)

    inb = (dest_c >= 0) & (dest_c < W) & (dest_r >= 0) & (dest_r < H)
    dest_r, dest_c = dest_r[inb], dest_c[inb]
    src_r, src_c = ys[inb], xs[inb]

    moved = np.zeros((H, W), dtype=bool)
    offscreen = dest_r.size == 0
    if not offscreen:
        # later row-major source wins on collisions: stable-sort by dest and
        # keep the last entry of each run
        flat = dest_r * W + dest_c
        order = np.argsort(flat, kind="stable")
        flat_sorted = flat[order]
        last = np.r_[flat_sorted[1:] != flat_sorted[:-1], True]
        keep = order[last]
        frame[:, dest_r[keep], dest_c[keep]] = colors[:, src_r[keep], src_c[keep]]
        moved[dest_r[keep], dest_c[keep]] = True

    hole = mask0 & ~moved
    return frame, moved, hole, offscreen


# squared-distance -> integer offsets, grown on demand by nn_inpaint;
# beyond the cap (distance > ~200 px) per-pixel exact search takes over so
# the cache cannot blow up on huge frames
_RING_CACHE: dict[int, np.ndarray] = {}
_RING_LIMIT = [0]
_RING_CAP = 40_000


def _rings_upto(r2_max: int) -> None:
    if r2_max <= _RING_LIMIT[0]:
        return
    r = int(math.isqrt(r2_max)) + 1
    span = np.arange(-r, r + 1)
    dr, dc = np.meshgrid(span, span, indexing="ij")
    d2 = dr * dr + dc * dc
    for v in np.unique(d2):
        v = int(v)
        if v > r2_max or v in _RING_CACHE:
            continue
        sel = d2 == v
        # row-major order over (dr, dc) so candidate enumeration is scan-stable
        _RING_CACHE[v] = np.stack([dr[sel], dc[sel]], axis=1)
    _RING_LIMIT[0] = r2_max


def nn_inpaint(
    frame: np.ndarray, hole_mask: np.ndarray, exclude_mask: Optional[np.ndarray] = None
) -> np.ndarray:
    """Fill each hole pixel with the nearest non-hole, non-excluded pixel.

    Distance is Euclidean in pixel space; exact ties resolve to the source
    pixel earliest in row-major scan order. Raises if no source pixel exists.
    """
    hole = np.asarray(hole_mask).astype(bool)
    if not hole.any():
        return frame
    H, W = hole.shape
    allowed = ~hole
    if exclude_mask is not None:
        allowed &= ~np.asarray(exclude_mask).astype(bool)
    if not allowed.any():
        raise ValueError("inpaint has no source pixels (everything is hole or excluded)")

    # exact Euclidean distance to the nearest allowed pixel
    dist = ndimage.distance_transform_edt(~allowed)
    out = frame.copy()
    hr, hc = np.nonzero(hole)
    d2s = np.rint(dist[hr, hc] ** 2).astype(np.int64)
    _rings_upto(min(int(d2s.max()), _RING_CAP))
    far_sources = None
    for r, c, d2 in zip(hr, hc, d2s):
        best = None
        if d2 <= _RING_CAP:
            for dr, dc in _RING_CACHE[int(d2)]:
                rr, cc = r + dr, c + dc
                if 0 <= rr < H and 0 <= cc < W and allowed[rr, cc]:
                    if best is None or (rr, cc) < best:
                        best = (int(rr), int(cc))
        else:
            if far_sources is None:
                ar, ac = np.nonzero(allowed)
                order = np.lexsort((ac, ar))
                far_sources = (ar[order], ac[order])
            ar, ac = far_sources
            dd = (ar - r) ** 2 + (ac - c) ** 2
            k = int(np.argmin(dd))  # first minimum is the row-major winner
            best = (int(ar[k]), int(ac[k]))
        out[:, r, c] = frame[:, best[0], best[1]]
    return out


def build_warped_reference(
    image: SourceImage, spec: MotionSpec | Sequence[MotionSpec]
) -> WarpedReference:
    """Assemble the warped reference video for one or more region specs.

    Regions compose in declaration order (later regions splat over earlier
    ones); holes are inpainted from non-hole, non-moved pixels. The first
    keyframe of every region must be an identity transform with no color
    override so that frame 0 reproduces the source image exactly.
    """
    specs = [spec] if isinstance(spec, MotionSpec) else list(spec)
    if not specs:
        raise SpecValidationError(["at least one region required"])
    F = specs[0].frame_count
    violations = []
    for i, sp in enumerate(specs):
        if sp.frame_count != F:
            violations.append(f"region {i}: frame_count mismatch")
        if sp.region_mask.shape != (image.height, image.width):
            violations.append(f"region {i}: mask shape must match image")
        k0 = sp.keyframes[0]
        if not k0.transform_is_identity() or not k0.override_is_identity():
            violations.append(f"region {i}: first keyframe must be identity so frame 0 equals the source")
    if violations:
        raise SpecValidationError(violations)

    trajectories = [rasterize_trajectory(sp) for sp in specs]
    pivots = [region_pivot(sp.region_mask) for sp in specs]

    H, W = image.height, image.width
    frames = np.empty((F, 3, H, W), dtype=np.float32)
    mask = np.zeros((F, H, W), dtype=bool)
    warnings = []
    for f in range(F):
        frame = image.pixels.copy()
        moved_all = np.zeros((H, W), dtype=bool)
        holes_all = np.zeros((H, W), dtype=bool)
        for sp, traj, pivot in zip(specs, trajectories, pivots):
            colors = None
            if sp.has_override:
                gain, bias = _interp_override(sp, f)
                colors = np.clip(
                    image.pixels * gain[:, None, None].astype(np.float32)
                    + bias[:, None, None].astype(np.float32),
                    0.0,
                    1.0,
                ).astype(np.float32)
            warped, moved, hole, offscreen = _splat(
                frame, image.pixels, sp.region_mask, traj[f], pivot=pivot, region_pixels=colors
            )
            if offscreen:
                warnings.append(f"frame {f}: region moved entirely out of frame")
            frame = warped
            moved_all |= moved
            holes_all |= hole
        holes_all &= ~moved_all
        frame = nn_inpaint(frame, holes_all, exclude_mask=moved_all)
        frames[f] = frame
        mask[f] = moved_all
    return WarpedReference(frames=frames, mask=mask, warnings=warnings)
