"""Wire and file formats: mask run-length coding, motion-spec and camera-path
JSON documents, lossless frame sequences, content hashes, and run manifests.

Frames cross process boundaries as 8-bit PNG; content hashes are computed
over the quantized pixel bytes (not the PNG container) so they are stable
across encoder versions.
"""

from __future__ import annotations

import hashlib
import io
import json
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .depth import AxisConvention, CameraPath, CameraPose, DepthMap, Intrinsics
from .motion import Keyframe, MotionSpec, SourceImage, SpecValidationError, WarpedReference

SPEC_SCHEMA_VERSION = 1


# ---------------------------------------------------------------- RLE masks

def mask_to_rle(mask: np.ndarray) -> dict:
    """Row-major run-length encoding; runs alternate 0s/1s starting with 0s."""
    m = np.asarray(mask).astype(bool).ravel()
    runs = []
    pos = 0
    current = False
    for boundary in np.flatnonzero(np.diff(m)):
        runs.append(int(boundary + 1 - pos))
        pos = boundary + 1
        current = not current
    runs.append(int(m.size - pos))
    if m.size and m[0]:
        runs.insert(0, 0)
    return {"height": int(mask.shape[0]), "width": int(mask.shape[1]), "runs": runs}


def rle_to_mask(data: dict) -> np.ndarray:
    H, W = int(data["height"]), int(data["width"])
    runs = data["runs"]
    if sum(runs) != H * W:
        raise SpecValidationError(["mask runs must sum to height*width"])
    flat = np.zeros(H * W, dtype=bool)
    pos = 0
    value = False
    for run in runs:
        if run < 0:
            raise SpecValidationError(["mask runs must be nonnegative"])
        if value:
            flat[pos : pos + run] = True
        pos += run
        value = not value
    return flat.reshape(H, W)


# ------------------------------------------------------- motion spec JSON

def keyframe_to_dict(k: Keyframe) -> dict:
    d = {"frame": k.frame, "dx": k.dx, "dy": k.dy,
         "rotation": k.rotation, "log_scale": k.log_scale}
    if k.gain is not None:
        d["gain"] = list(k.gain)
    if k.bias is not None:
        d["bias"] = list(k.bias)
    return d


def keyframe_from_dict(d: dict) -> Keyframe:
    return Keyframe(
        frame=int(d["frame"]),
        dx=float(d.get("dx", 0.0)),
        dy=float(d.get("dy", 0.0)),
        rotation=float(d.get("rotation", 0.0)),
        log_scale=float(d.get("log_scale", 0.0)),
        gain=tuple(d["gain"]) if "gain" in d and d["gain"] is not None else None,
        bias=tuple(d["bias"]) if "bias" in d and d["bias"] is not None else None,
    )


def motion_document_to_json(
    specs: list[MotionSpec], image_ref: str = "", extra: Optional[dict] = None
) -> str:
    doc = {
        "version": SPEC_SCHEMA_VERSION,
        "image": image_ref,
        "frame_count": specs[0].frame_count,
        "regions": [
            {
                "mask": mask_to_rle(sp.region_mask),
                "keyframes": [keyframe_to_dict(k) for k in sp.keyframes],
            }
            for sp in specs
        ],
    }
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=1)


def motion_document_from_json(text: str | dict) -> tuple[list[MotionSpec], dict]:
    """Parse and validate a motion document; returns (specs, raw_doc)."""
    doc = json.loads(text) if isinstance(text, str) else text
    if doc.get("version") != SPEC_SCHEMA_VERSION:
        raise SpecValidationError([f"unsupported document version {doc.get('version')}"])
    frame_count = int(doc["frame_count"])
    regions = doc.get("regions", [])
    if not regions:
        raise SpecValidationError(["document must declare at least one region"])
    specs = []
    for region in regions:
        specs.append(
            MotionSpec(
                region_mask=rle_to_mask(region["mask"]),
                keyframes=tuple(keyframe_from_dict(k) for k in region["keyframes"]),
                frame_count=frame_count,
            )
        )
    return specs, doc


# ------------------------------------------------------- camera path JSON

def camera_path_from_json(text: str | dict) -> tuple[CameraPath, Intrinsics, AxisConvention]:
    doc = json.loads(text) if isinstance(text, str) else text
    intr = doc["intrinsics"]
    intrinsics = Intrinsics(fx=float(intr["fx"]), fy=float(intr["fy"]),
                            cx=float(intr["cx"]), cy=float(intr["cy"]))
    conv = doc.get("axis_convention", {})
    convention = AxisConvention(
        flip_z=bool(conv.get("flip_z", False)), flip_pitch=bool(conv.get("flip_pitch", False))
    )
    from .depth import apply_convention_to_pose

    poses = []
    for mat in doc["poses"]:
        m = np.asarray(mat, dtype=np.float64).reshape(4, 4)
        pose = CameraPose(rotation=m[:3, :3], translation=m[:3, 3])
        poses.append(apply_convention_to_pose(pose, convention))
    path = CameraPath(poses=tuple(poses), scale=float(doc.get("scale", 1.0)))
    return path, intrinsics, convention


def depth_from_file(path: Path | str, intrinsics: Intrinsics,
                    convention: AxisConvention = AxisConvention()) -> DepthMap:
    """Read a single-channel float depth image (.npy or 16-bit/float TIFF-free
    formats handled by PIL in mode F/I)."""
    p = Path(path)
    if p.suffix == ".npy":
        depth = np.load(p)
    else:
        depth = np.asarray(Image.open(p), dtype=np.float64)
    return DepthMap(depth=depth, intrinsics=intrinsics, convention=convention)


# ----------------------------------------------------------- frame PNG IO

def quantize_frame(frame: np.ndarray) -> np.ndarray:
    """Clip to [0, 1] and quantize to the uint8 grid used for storage."""
    return (np.clip(frame, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def frame_to_png_bytes(frame: np.ndarray) -> bytes:
    """Encode a (3, H, W) float frame as PNG bytes."""
    arr = quantize_frame(frame).transpose(1, 2, 0)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def png_bytes_to_frame(data: bytes) -> np.ndarray:
    arr = np.asarray(Image.open(io.BytesIO(data)).convert("RGB"), dtype=np.float32)
    return arr.transpose(2, 0, 1) / 255.0


def load_image(path: Path | str) -> SourceImage:
    return SourceImage(pixels=png_bytes_to_frame(Path(path).read_bytes()))


def mask_to_png_bytes(mask: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def png_bytes_to_mask(data: bytes) -> np.ndarray:
    return np.asarray(Image.open(io.BytesIO(data)).convert("L")) >= 128


def write_warped_reference(out_dir: Path | str, ref: WarpedReference) -> Path:
    """Write frames and masks as zero-padded PNG sequences plus a manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    F = ref.frames.shape[0]
    for f in range(F):
        (out / f"frame_{f:05d}.png").write_bytes(frame_to_png_bytes(ref.frames[f]))
        (out / f"mask_{f:05d}.png").write_bytes(mask_to_png_bytes(ref.mask[f]))
    (out / "reference.json").write_text(
        json.dumps(
            {
                "frame_count": F,
                "warnings": ref.warnings,
                "frames_hash": video_content_hash(ref.frames),
                "mask_hash": array_hash(ref.mask),
            },
            indent=1,
        )
    )
    return out


def read_warped_reference(in_dir: Path | str) -> WarpedReference:
    d = Path(in_dir)
    frame_paths = sorted(d.glob("frame_*.png"))
    mask_paths = sorted(d.glob("mask_*.png"))
    if not frame_paths or len(frame_paths) != len(mask_paths):
        raise FileNotFoundError(f"no complete frame/mask sequence under {d}")
    frames = np.stack([png_bytes_to_frame(p.read_bytes()) for p in frame_paths])
    mask = np.stack([png_bytes_to_mask(p.read_bytes()) for p in mask_paths])
    meta = {}
    if (d / "reference.json").exists():
        meta = json.loads((d / "reference.json").read_text())
    return WarpedReference(frames=frames, mask=mask, warnings=meta.get("warnings", []))


def write_video(out_dir: Path | str, video: np.ndarray) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for f in range(video.shape[0]):
        (out / f"frame_{f:05d}.png").write_bytes(frame_to_png_bytes(video[f]))
    return out


# ----------------------------------------------------------------- hashing

def array_hash(arr: np.ndarray) -> str:
    a = np.ascontiguousarray(arr)
    h = hashlib.sha256()
    h.update(str(a.dtype).encode())
    h.update(str(a.shape).encode())
    h.update(a.tobytes())
    return h.hexdigest()


def video_content_hash(video: np.ndarray) -> str:
    """Hash of the quantized pixel content, stable across float jitter below
    the 8-bit grid and across PNG encoder versions."""
    return array_hash(np.stack([quantize_frame(f) for f in np.asarray(video)]))


def json_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def file_hash(path: Path | str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------- run manifests

def build_run_manifest(
    config,
    schedule,
    reference: np.ndarray,
    mask: Optional[np.ndarray],
    condition: np.ndarray,
    checkpoint_hash: str = "",
    text: Optional[str] = None,
) -> dict:
    """Everything needed to bit-reproduce a sampling run."""
    return {
        "version": 1,
        "config": config.to_dict(),
        "schedule": {"kind": schedule.kind, "T": schedule.T, "hash": schedule.content_hash()},
        "reference_hash": array_hash(np.asarray(reference)),
        "mask_hash": array_hash(np.asarray(mask)) if mask is not None else None,
        "condition_hash": array_hash(np.asarray(condition)),
        "checkpoint_hash": checkpoint_hash,
        "text": text,
    }
