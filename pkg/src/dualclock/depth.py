"""Camera-motion references: back-project a source image through a depth map
and re-render it along a camera path with z-buffered point splatting.

Poses are camera-to-world; pose 0 is the identity, so frame 0 round-trips
the source image exactly. Depth ambiguity against externally-supplied paths
is resolved by a bounded search over a global translation scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial.transform import Rotation

from .motion import SourceImage, WarpedReference, nn_inpaint


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def validate(self, H: int, W: int) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise GeometryError("focal lengths must be positive")
        if not (0 <= self.cx < W and 0 <= self.cy < H):
            raise GeometryError("principal point must lie inside the image")


@dataclass(frozen=True)
class AxisConvention:
    """Sign flags reconciling external pose conventions with the renderer.

    flip_z negates the depth axis of back-projected points (and the
    projection applies the matching sign); flip_pitch negates the pitch
    component of loaded camera rotations.
    """

    flip_z: bool = False
    flip_pitch: bool = False

    @property
    def z_sign(self) -> float:
        return -1.0 if self.flip_z else 1.0


@dataclass(frozen=True)
class DepthMap:
    depth: np.ndarray  # (H, W), metric, > 0
    intrinsics: Intrinsics
    convention: AxisConvention = AxisConvention()

    def __post_init__(self):
        d = np.asarray(self.depth, dtype=np.float64)
        if d.ndim != 2:
            raise GeometryError("depth must be 2-D")
        if not np.all(np.isfinite(d)) or np.any(d <= 0):
            raise GeometryError("depths must be finite and positive")
        object.__setattr__(self, "depth", d)
        self.intrinsics.validate(*d.shape)


@dataclass(frozen=True)
class CameraPose:
    rotation: np.ndarray  # (3, 3) camera-to-world
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64)
        if R.shape != (3, 3) or t.shape != (3,):
            raise GeometryError("pose needs a 3x3 rotation and 3-vector translation")
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-6:
            raise GeometryError("rotation must be orthonormal within 1e-6")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    def is_identity(self) -> bool:
        return np.array_equal(self.rotation, np.eye(3)) and not self.translation.any()


@dataclass(frozen=True)
class CameraPath:
    poses: tuple
    scale: float = 1.0

    def __post_init__(self):
        poses = tuple(self.poses)
        if not poses:
            raise GeometryError("camera path needs at least one pose")
        p0 = poses[0]
        if np.abs(p0.rotation - np.eye(3)).max() > 1e-9 or np.abs(p0.translation).max() > 1e-9:
            raise GeometryError("pose 0 must be the identity")
        if self.scale <= 0:
            raise GeometryError("scale must be positive")
        object.__setattr__(self, "poses", poses)

    def scaled(self, scale: float) -> "CameraPath":
        return CameraPath(poses=self.poses, scale=scale)


@dataclass
class PointCloud:
    positions: np.ndarray  # (N, 3)
    colors: np.ndarray  # (N, 3)
    pixels: np.ndarray  # (N,) flat source pixel index, row-major


def apply_convention_to_pose(pose: CameraPose, convention: AxisConvention) -> CameraPose:
    """Rewrite an externally-loaded pose under the configured sign flips."""
    R, t = pose.rotation, pose.translation.copy()
    if convention.flip_pitch:
        eul = Rotation.from_matrix(R).as_euler("xyz")
        eul[0] = -eul[0]
        R = Rotation.from_euler("xyz", eul).as_matrix()
    if convention.flip_z:
        t[2] = -t[2]
    return CameraPose(rotation=R, translation=t)


def backproject(image: SourceImage, depth: DepthMap) -> PointCloud:
    """Lift every pixel to a colored 3-D point through the pinhole model."""
    d = depth.depth
    H, W = d.shape
    if (image.height, image.width) != (H, W):
        raise GeometryError("image and depth shapes must match")
    K = depth.intrinsics
    us, vs = np.meshgrid(np.arange(W, dtype=np.float64), np.arange(H, dtype=np.float64))
    x = (us - K.cx) * d / K.fx
    y = (vs - K.cy) * d / K.fy
    z = depth.convention.z_sign * d
    positions = np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)
    colors = image.pixels.reshape(3, -1).T.copy()
    return PointCloud(
        positions=positions, colors=colors, pixels=np.arange(H * W, dtype=np.int64)
    )


def splat_view(
    cloud: PointCloud,
    pose: CameraPose,
    intrinsics: Intrinsics,
    shape: tuple[int, int],
    convention: AxisConvention = AxisConvention(),
) -> tuple[np.ndarray, np.ndarray]:
    """Render the cloud from a camera pose with z-buffered nearest splatting.

    Depth ties resolve to the smallest source pixel index, so the render is
    invariant to point order. Returns (frame (3,H,W) float32, validity mask).
    """
    H, W = shape
    X_cam = (cloud.positions - pose.translation) @ pose.rotation  # R^T (X - t)
    depth_cam = convention.z_sign * X_cam[:, 2]
    front = depth_cam > 0
    if not front.any():
        return np.zeros((3, H, W), dtype=np.float32), np.zeros((H, W), dtype=bool)
    pos = X_cam[front]
    dep = depth_cam[front]
    col = cloud.colors[front]
    pix = cloud.pixels[front]
    u = intrinsics.fx * pos[:, 0] / dep + intrinsics.cx
    v = intrinsics.fy * pos[:, 1] / dep + intrinsics.cy
    uc = np.floor(u + 0.5).astype(np.int64)
    vr = np.floor(v + 0.5).astype(np.int64)
    inb = (uc >= 0) & (uc < W) & (vr >= 0) & (vr < H)
    uc, vr, dep, col, pix = uc[inb], vr[inb], dep[inb], col[inb], pix[inb]

    frame = np.zeros((3, H, W), dtype=np.float32)
    valid = np.zeros((H, W), dtype=bool)
    if uc.size == 0:
        return frame, valid
    flat = vr * W + uc
    order = np.lexsort((pix, dep, flat))
    flat_s = flat[order]
    first = np.r_[True, flat_s[1:] != flat_s[:-1]]
    win = order[first]
    frame[:, vr[win], uc[win]] = col[win].T.astype(np.float32)
    valid[vr[win], uc[win]] = True
    return frame, valid


_OPEN_STRUCT = np.ones((5, 5), dtype=bool)


def clean_mask(validity: np.ndarray) -> np.ndarray:
    """Morphological opening (erode, then dilate) with a 5x5 square element.

    Removes isolated valid specks and grows the non-guidance area around
    sparse regions. Erosion treats out-of-image as valid so a full mask is a
    fixed point.
    """
    m = np.asarray(validity).astype(bool)
    eroded = ndimage.binary_erosion(m, structure=_OPEN_STRUCT, border_value=1)
    return ndimage.binary_dilation(eroded, structure=_OPEN_STRUCT, border_value=0)


def _render_path(
    cloud: PointCloud, path: CameraPath, intrinsics: Intrinsics, shape, convention
):
    for pose in path.poses:
        scaled = CameraPose(rotation=pose.rotation, translation=pose.translation * path.scale)
        yield splat_view(cloud, scaled, intrinsics, shape, convention)


def calibrate_scale(
    image: SourceImage,
    depth: DepthMap,
    path: CameraPath,
    reference: np.ndarray,
    lo: float = 0.01,
    hi: float = 10.0,
    iterations: int = 30,
    coarse_probes: int = 24,
) -> float:
    """Search the translation scale minimizing render-vs-reference MSE,
    evaluated on valid pixels only.

    The MSE landscape has flat, gently undulating tails once the render
    diverges from the reference, so a pure interval search can lock onto the
    wrong basin. A coarse log-spaced probe pass brackets the global minimum
    first; `iterations` rounds of interval search then refine inside the
    bracket. Exact ties keep the earliest probe, so a degenerate path
    returns the lower bound.
    """
    reference = np.asarray(reference, dtype=np.float32)
    if reference.shape[0] != len(path.poses) or reference.shape[2:] != depth.depth.shape:
        raise GeometryError("reference video shape must match path length and depth shape")
    cloud = backproject(image, depth)
    shape = depth.depth.shape
    any_valid = [False]

    def mse_at(scale: float) -> float:
        total, count = 0.0, 0
        for f, (frame, valid) in enumerate(
            _render_path(cloud, path.scaled(scale), depth.intrinsics, shape, depth.convention)
        ):
            if not valid.any():
                continue
            diff = frame[:, valid] - reference[f][:, valid]
            total += float((diff.astype(np.float64) ** 2).sum())
            count += diff.size
        if count == 0:
            return math.inf
        any_valid[0] = True
        return total / count

    probes = np.geomspace(lo, hi, coarse_probes)
    probes[0], probes[-1] = lo, hi
    values = [mse_at(s) for s in probes]
    best_idx = int(np.argmin(values))
    best_scale, best_val = float(probes[best_idx]), values[best_idx]
    a = float(probes[max(best_idx - 1, 0)])
    b = float(probes[min(best_idx + 1, len(probes) - 1)])
    # grid-zoom refinement: pixel rounding makes the MSE piecewise constant
    # in scale, so interval halving can stall on a plateau; re-gridding the
    # bracket around the running argmin cannot
    points_per_round = 7
    rounds = max(1, iterations // (points_per_round - 1))
    for _ in range(rounds):
        grid = np.linspace(a, b, points_per_round)
        vals = [mse_at(s) for s in grid]
        idx = int(np.argmin(vals))
        if vals[idx] < best_val:
            best_scale, best_val = float(grid[idx]), vals[idx]
        a = float(grid[max(idx - 1, 0)])
        b = float(grid[min(idx + 1, points_per_round - 1)])
    if not any_valid[0]:
        raise GeometryError("no valid pixels at any probed scale")
    return best_scale


def build_camera_reference(
    image: SourceImage, depth: DepthMap, path: CameraPath, min_valid_fraction: float = 0.2
) -> WarpedReference:
    """Render the path into a WarpedReference: z-buffer splat per pose,
    nearest-neighbor inpaint of unsplatted pixels, opened validity as mask."""
    cloud = backproject(image, depth)
    shape = depth.depth.shape
    H, W = shape
    F = len(path.poses)
    frames = np.empty((F, 3, H, W), dtype=np.float32)
    mask = np.zeros((F, H, W), dtype=bool)
    warnings = []
    for f, (frame, valid) in enumerate(
        _render_path(cloud, path, depth.intrinsics, shape, depth.convention)
    ):
        frac = valid.mean()
        if frac < min_valid_fraction:
            warnings.append(f"frame {f}: only {frac:.1%} of pixels received points")
        if valid.any():
            frames[f] = nn_inpaint(frame, ~valid)
        else:
            # degenerate pose: nothing to inpaint from, fall back to the source
            frames[f] = image.pixels
        mask[f] = clean_mask(valid)
    return WarpedReference(frames=frames, mask=mask, warnings=warnings)
