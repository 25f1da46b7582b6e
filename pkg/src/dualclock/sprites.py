"""Synthetic moving-sprites world with exact ground truth.

Each scene is a small RGB clip containing one saturated sprite translating at
a constant integer velocity over a muted low-frequency background, plus an
animated "water" band that scrolls horizontally. Masks, trajectories, and
dense flow are all derivable in closed form, which makes the scenes usable
as oracles: sprite masks translate rigidly, band motion wraps periodically.

Sprites are bright and chromatically distinct from the background palette on
purpose, so centroid color tracking stays reliable on generated videos.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

GENERATOR_VERSION = 2

SHAPES = ("disk", "square", "triangle")

# sprite velocities are capped at speed 2 so a sprite alone cannot push a
# frame's top-5% flow statistic over the dynamic threshold at 64x64
SPRITE_VELOCITIES = (
    (1, 0), (-1, 0), (0, 1), (0, -1),
    (1, 1), (1, -1), (-1, 1), (-1, -1),
    (2, 0), (-2, 0), (0, 2), (0, -2),
)

# saturated sprite palette vs. muted background palette (RGB in [0,1])
SPRITE_COLORS = np.array(
    [
        [0.95, 0.15, 0.10],
        [0.95, 0.20, 0.80],
        [0.98, 0.85, 0.10],
        [0.95, 0.50, 0.05],
        [0.10, 0.95, 0.25],
    ],
    dtype=np.float32,
)
BG_COLORS = np.array(
    [
        [0.16, 0.22, 0.34],
        [0.20, 0.30, 0.28],
        [0.28, 0.26, 0.38],
        [0.22, 0.22, 0.24],
        [0.30, 0.34, 0.42],
    ],
    dtype=np.float32,
)
BAND_COLORS = np.array(
    [
        [0.12, 0.35, 0.55],
        [0.10, 0.42, 0.48],
        [0.16, 0.30, 0.50],
    ],
    dtype=np.float32,
)


@dataclass(frozen=True)
class Sprite:
    shape: str
    color: tuple
    size: int
    start: tuple  # (x, y) integer center at frame 0
    velocity: tuple  # (vx, vy) integer pixels per frame

    def position(self, f: int) -> tuple[int, int]:
        return (self.start[0] + f * self.velocity[0], self.start[1] + f * self.velocity[1])


@dataclass(frozen=True)
class SpriteScene:
    height: int
    width: int
    frame_count: int
    sprites: tuple
    bg_color_a: tuple
    bg_color_b: tuple
    bg_angle: float
    band_row: int  # top row of the water band
    band_height: int
    band_color: tuple
    band_period: int
    band_velocity: int  # integer pixels per frame, horizontal

    def validate(self) -> None:
        for sp in self.sprites:
            if sp.shape not in SHAPES:
                raise ValueError(f"unknown sprite shape {sp.shape!r}")
            for f in (0, self.frame_count - 1):
                x, y = sp.position(f)
                if not (0 <= x < self.width and 0 <= y < self.height):
                    raise ValueError("sprite centers must stay in-bounds")


@dataclass
class SceneSample:
    scene: SpriteScene
    video: np.ndarray  # (F, 3, H, W) float32 in [0, 1]
    masks: np.ndarray  # (F, H, W) bool, sprite pixels
    trajectory: np.ndarray  # (F, 2) float64 sprite mask centroids (x, y)
    flow: np.ndarray  # (F-1, 2, H, W) float32, (dx, dy) from frame f to f+1


def sprite_mask(sprite: Sprite, f: int, shape: tuple[int, int]) -> np.ndarray:
    H, W = shape
    cx, cy = sprite.position(f)
    r = sprite.size
    ys, xs = np.mgrid[0:H, 0:W]
    if sprite.shape == "disk":
        return (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r
    if sprite.shape == "square":
        return (np.abs(xs - cx) <= r) & (np.abs(ys - cy) <= r)
    # upright triangle: apex at (cx, cy - r), base at cy + r
    dy = ys - cy
    half = (dy + r) / 2.0
    return (dy >= -r) & (dy <= r) & (np.abs(xs - cx) <= half)


def _background(scene: SpriteScene, f: int) -> np.ndarray:
    H, W = scene.height, scene.width
    ys, xs = np.mgrid[0:H, 0:W]
    ca = np.asarray(scene.bg_color_a, dtype=np.float32)
    cb = np.asarray(scene.bg_color_b, dtype=np.float32)
    ramp = (np.cos(scene.bg_angle) * xs + np.sin(scene.bg_angle) * ys).astype(np.float32)
    ramp = (ramp - ramp.min()) / max(float(ramp.max() - ramp.min()), 1e-6)
    frame = ca[:, None, None] + (cb - ca)[:, None, None] * ramp[None]

    # scrolling band: periodic vertical stripes so integer shifts wrap exactly
    rows = slice(scene.band_row, scene.band_row + scene.band_height)
    phase = (np.arange(W) - scene.band_velocity * f) % scene.band_period
    stripe = (phase < scene.band_period // 2).astype(np.float32)
    band = np.asarray(scene.band_color, dtype=np.float32)[:, None] * (0.7 + 0.6 * stripe)[None]
    frame[:, rows, :] = np.clip(band[:, None, :], 0.0, 1.0)
    return frame


def render_scene(scene: SpriteScene) -> SceneSample:
    """Rasterize a scene with its exact masks, trajectory, and dense flow."""
    scene.validate()
    H, W, F = scene.height, scene.width, scene.frame_count
    video = np.empty((F, 3, H, W), dtype=np.float32)
    masks = np.zeros((F, H, W), dtype=bool)
    flow = np.zeros((max(F - 1, 0), 2, H, W), dtype=np.float32)
    traj = np.zeros((F, 2), dtype=np.float64)

    for f in range(F):
        frame = _background(scene, f)
        for sp in scene.sprites:
            m = sprite_mask(sp, f, (H, W))
            frame[:, m] = np.asarray(sp.color, dtype=np.float32)[:, None]
            masks[f] |= m
        video[f] = np.clip(frame, 0.0, 1.0)
        if scene.sprites:
            # trajectory = mask centroid (what a tracker can observe); for
            # integer velocities it translates exactly with the sprite
            ys, xs = np.nonzero(sprite_mask(scene.sprites[0], f, (H, W)))
            traj[f] = (xs.mean(), ys.mean())

    band_rows = np.zeros((H, W), dtype=bool)
    band_rows[scene.band_row : scene.band_row + scene.band_height, :] = True
    for f in range(F - 1):
        flow[f, 0][band_rows] = scene.band_velocity
        for sp in scene.sprites:
            m = sprite_mask(sp, f, (H, W))
            flow[f, 0][m] = sp.velocity[0]
            flow[f, 1][m] = sp.velocity[1]
    return SceneSample(scene=scene, video=video, masks=masks, trajectory=traj, flow=flow)


def random_scene(
    rng: np.random.Generator,
    height: int = 64,
    width: int = 64,
    frame_count: int = 16,
    static_sprite_prob: float = 0.0,
    static_band_prob: float = 0.3,
) -> SpriteScene:
    """Draw one random scene layout.

    Start positions keep the whole trajectory in-bounds. A fraction of
    scenes carries a still band (static_band_prob) so static water is a
    plausible state of the world, not an off-manifold configuration.
    """
    shape = SHAPES[rng.integers(len(SHAPES))]
    color = tuple(float(c) for c in SPRITE_COLORS[rng.integers(len(SPRITE_COLORS))])
    # squares capped at 4: their pixel area grows fastest with size
    size = int(rng.integers(3, 5 if shape == "square" else 6))
    if rng.random() < static_sprite_prob:
        vx, vy = 0, 0
    else:
        vx, vy = SPRITE_VELOCITIES[rng.integers(len(SPRITE_VELOCITIES))]
    span_x = abs(vx) * (frame_count - 1)
    span_y = abs(vy) * (frame_count - 1)
    margin = size + 1
    x0 = int(rng.integers(margin + (span_x if vx < 0 else 0), width - margin - (span_x if vx > 0 else 0)))
    y0 = int(rng.integers(margin + (span_y if vy < 0 else 0), height - margin - (span_y if vy > 0 else 0)))

    band_height = int(rng.integers(8, 13))
    band_row = int(rng.integers(0, height - band_height))
    band_velocity = 0 if rng.random() < static_band_prob else int(rng.choice([-2, -1, 1, 2]))
    bg_idx = rng.choice(len(BG_COLORS), size=2, replace=False)
    return SpriteScene(
        height=height,
        width=width,
        frame_count=frame_count,
        sprites=(Sprite(shape=shape, color=color, size=size, start=(x0, y0), velocity=(vx, vy)),),
        bg_color_a=tuple(float(c) for c in BG_COLORS[bg_idx[0]]),
        bg_color_b=tuple(float(c) for c in BG_COLORS[bg_idx[1]]),
        bg_angle=float(rng.uniform(0, 2 * np.pi)),
        band_row=band_row,
        band_height=band_height,
        band_color=tuple(float(c) for c in BAND_COLORS[rng.integers(len(BAND_COLORS))]),
        band_period=int(rng.integers(12, 17)),
        band_velocity=band_velocity,
    )


def generate_dataset(
    n_scenes: int,
    rng: np.random.Generator,
    height: int = 64,
    width: int = 64,
    frame_count: int = 16,
) -> Iterator[SceneSample]:
    """Yield n_scenes rendered scenes, deterministic for a given generator."""
    if n_scenes < 1:
        raise ValueError("n_scenes must be >= 1")
    for _ in range(n_scenes):
        yield render_scene(random_scene(rng, height, width, frame_count))


def _write_scene(out: Path, i: int, sample: SceneSample) -> None:
    np.savez_compressed(
        out / f"scene_{i:05d}.npz",
        video=(sample.video * 255.0 + 0.5).astype(np.uint8),
        masks=sample.masks,
        flow=sample.flow.astype(np.int8),
        trajectory=sample.trajectory,
    )
    (out / f"scene_{i:05d}.json").write_text(json.dumps(asdict(sample.scene), indent=1))


def save_dataset(
    out_dir: Path | str, n_scenes: int, seed: int, height: int = 64, width: int = 64,
    frame_count: int = 16, workers: int = 1,
) -> Path:
    """Write per-scene .npz containers plus a manifest to `out_dir`.

    Scene layouts are drawn sequentially from the seed, so the dataset is
    identical regardless of `workers`; only rendering/IO fans out.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        scenes = [random_scene(rng, height, width, frame_count) for _ in range(n_scenes)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, sample in enumerate(pool.map(render_scene, scenes, chunksize=16)):
                _write_scene(out, i, sample)
    else:
        for i, sample in enumerate(
            generate_dataset(n_scenes, rng, height, width, frame_count)
        ):
            _write_scene(out, i, sample)
    manifest = {
        "version": GENERATOR_VERSION,
        "seed": seed,
        "count": n_scenes,
        "height": height,
        "width": width,
        "frame_count": frame_count,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return out


def load_scene(path: Path | str) -> SceneSample:
    path = Path(path)
    data = np.load(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    meta["sprites"] = tuple(
        Sprite(
            shape=s["shape"],
            color=tuple(s["color"]),
            size=s["size"],
            start=tuple(s["start"]),
            velocity=tuple(s["velocity"]),
        )
        for s in meta["sprites"]
    )
    for key in ("bg_color_a", "bg_color_b", "band_color"):
        meta[key] = tuple(meta[key])
    scene = SpriteScene(**meta)
    return SceneSample(
        scene=scene,
        video=data["video"].astype(np.float32) / 255.0,
        masks=data["masks"].astype(bool),
        flow=data["flow"].astype(np.float32),
        trajectory=data["trajectory"],
    )


def dataset_paths(data_dir: Path | str) -> list[Path]:
    paths = sorted(Path(data_dir).glob("scene_*.npz"))
    if not paths:
        raise FileNotFoundError(f"no scenes found under {data_dir}")
    return paths


def scene_to_motion_spec(sample: SceneSample):
    """Convert a scene's ground truth into a cut-and-drag spec: the frame-0
    sprite mask dragged along the true trajectory (one keyframe per frame)."""
    from .motion import Keyframe, MotionSpec

    F = sample.scene.frame_count
    x0, y0 = sample.trajectory[0]
    keyframes = tuple(
        Keyframe(frame=f, dx=float(sample.trajectory[f][0] - x0), dy=float(sample.trajectory[f][1] - y0))
        for f in range(F)
    )
    return MotionSpec(region_mask=sample.masks[0], keyframes=keyframes, frame_count=F)
