"""Batch entry points: warp construction, generation, ablation, training,
dataset generation, evaluation, and the HTTP service.

Exit codes: 0 success, 2 validation failure, 3 runtime failure. Every
command accepts --seed and records it in the manifest written next to its
outputs, so runs can be replayed bit-for-bit.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .depth import GeometryError, build_camera_reference, calibrate_scale
from .evaluation import evaluate_ablation, ordering_checks, save_report
from .metrics import MetricError, camera_metrics
from .motion import SpecValidationError, build_warped_reference
from .sampler import (
    GuidanceMask,
    SamplerConfig,
    SamplerConfigError,
    app_a_settings,
    infer_regime,
    sample,
)
from .serialize import (
    array_hash,
    build_run_manifest,
    camera_path_from_json,
    depth_from_file,
    file_hash,
    load_image,
    motion_document_from_json,
    read_warped_reference,
    video_content_hash,
    write_video,
    write_warped_reference,
)

EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

VALIDATION_ERRORS = (SpecValidationError, GeometryError, SamplerConfigError, MetricError)


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=1))


def cmd_warp(args) -> int:
    image = load_image(args.image)
    specs, doc = motion_document_from_json(Path(args.spec).read_text())
    for i, sp in enumerate(specs):
        if sp.region_mask.shape != (image.height, image.width):
            raise SpecValidationError([f"region {i}: mask shape must match image"])
    ref = build_warped_reference(image, specs)
    out = write_warped_reference(args.out, ref)
    _write_json(out / "manifest.json", {
        "command": "warp",
        "seed": args.seed,
        "image_hash": array_hash(image.pixels),
        "spec_hash": array_hash(np.frombuffer(json.dumps(doc, sort_keys=True).encode(), dtype=np.uint8)),
        "frames_hash": video_content_hash(ref.frames),
        "mask_hash": array_hash(ref.mask),
        "warnings": ref.warnings,
    })
    print(f"wrote {ref.frames.shape[0]} frames to {out}")
    return 0


def cmd_camera_warp(args) -> int:
    image = load_image(args.image)
    path, intrinsics, convention = camera_path_from_json(Path(args.path).read_text())
    depth = depth_from_file(args.depth, intrinsics, convention)
    scale = path.scale
    calibrated = None
    if args.calibrate_against:
        reference = read_warped_reference(args.calibrate_against).frames
        calibrated = calibrate_scale(image, depth, path, reference)
        scale = calibrated
        path = path.scaled(scale)
    if args.filter_below is not None and scale < args.filter_below:
        _write_json(Path(args.out) / "manifest.json", {
            "command": "camera-warp", "seed": args.seed,
            "scale": scale, "filtered": True,
            "filter_threshold": args.filter_below,
        })
        print(f"scale {scale:.3f} below filter threshold; skipped")
        return 0
    ref = build_camera_reference(image, depth, path)
    out = write_warped_reference(args.out, ref)
    _write_json(out / "manifest.json", {
        "command": "camera-warp",
        "seed": args.seed,
        "image_hash": array_hash(image.pixels),
        "scale": scale,
        "calibrated_scale": calibrated,
        "frames_hash": video_content_hash(ref.frames),
        "mask_hash": array_hash(ref.mask),
        "warnings": ref.warnings,
    })
    print(f"wrote {ref.frames.shape[0]} frames to {out}")
    return 0


def _load_denoiser(path: str):
    from .train import ToyDenoiser

    return ToyDenoiser.load(path)


def cmd_generate(args) -> int:
    denoiser = _load_denoiser(args.checkpoint)
    schedule = denoiser.schedule
    ref = read_warped_reference(args.reference)
    if args.manifest:
        manifest_in = json.loads(Path(args.manifest).read_text())
        cfg = manifest_in["config"]
        config = SamplerConfig(**cfg)
    else:
        regime = args.regime or infer_regime(args.t_weak, args.t_strong, schedule.T)
        config = SamplerConfig(
            t_weak=args.t_weak, t_strong=args.t_strong, regime=regime,
            seed=args.seed, reference_noise_mode=args.reference_noise_mode,
        )
    config.validate(schedule.T)
    condition = ref.frames[0]
    mask = GuidanceMask(ref.mask)
    manifest = build_run_manifest(
        config, schedule, ref.frames, mask.mask, condition,
        checkpoint_hash=file_hash(args.checkpoint), text=args.text,
    )
    result = sample(denoiser, ref, mask, config, schedule, condition, text=args.text)
    video = np.clip(result.video, 0.0, 1.0)
    out = write_video(args.out, video)
    manifest["result_hash"] = video_content_hash(video)
    manifest["denoiser_calls"] = result.denoiser_calls
    _write_json(out / "manifest.json", manifest)
    print(f"wrote {video.shape[0]} frames to {out} (result {manifest['result_hash'][:12]})")
    return 0


def cmd_ablate(args) -> int:
    from .sprites import dataset_paths, load_scene

    denoiser = _load_denoiser(args.checkpoint)
    schedule = denoiser.schedule
    settings = app_a_settings(schedule.T, args.t_weak, args.t_strong)
    if args.settings:
        rows = json.loads(Path(args.settings).read_text())
        settings = [(r["t1"], r["t2"], infer_regime(r["t1"], r["t2"], schedule.T)) for r in rows]
    scenes = [load_scene(p) for p in dataset_paths(args.scenes)[: args.limit]]
    report = evaluate_ablation(denoiser, scenes, settings, schedule, seed=args.seed,
                               progress=args.progress, workers=args.workers)
    out = Path(args.out)
    save_report(report, out)
    _write_json(out.with_suffix(".manifest.json"), {
        "command": "ablate", "seed": args.seed,
        "checkpoint_hash": file_hash(args.checkpoint),
        "scenes": len(scenes), "settings": [list(s) for s in settings],
    })
    print(report.table())
    if args.check_ordering:
        checks = ordering_checks(report, schedule.T, args.t_weak, args.t_strong)
        print(json.dumps(checks))
        if not all(checks.values()):
            return EXIT_RUNTIME
    return 0


def cmd_train_toy(args) -> int:
    import torch

    from .train import TrainConfig, train_toy

    torch.set_num_threads(args.threads)
    config = TrainConfig(steps=args.steps, batch_size=args.batch_size, lr=args.lr,
                         seed=args.seed, T=args.T, schedule_kind=args.schedule)
    train_toy(args.data, config, out_path=args.out, resume=args.resume,
              progress=args.progress)
    _write_json(Path(args.out).with_suffix(".manifest.json"), {
        "command": "train-toy", "seed": args.seed,
        "steps": args.steps, "checkpoint_hash": file_hash(args.out),
    })
    print(f"checkpoint written to {args.out}")
    return 0


def cmd_gen_dataset(args) -> int:
    from .sprites import save_dataset

    out = save_dataset(args.out, n_scenes=args.count, seed=args.seed,
                       frame_count=args.frames, workers=args.workers)
    print(f"wrote {args.count} scenes to {out}")
    return 0


def cmd_eval(args) -> int:
    from .tracking import block_matching_flow, get_flow_provider

    generated = read_warped_reference(args.generated).frames if (
        Path(args.generated) / "mask_00000.png").exists() else _read_frames(args.generated)
    reference = read_warped_reference(args.reference).frames if (
        Path(args.reference) / "mask_00000.png").exists() else _read_frames(args.reference)
    provider = get_flow_provider(args.flow) if args.flow != "block_matching" else (
        lambda v: block_matching_flow(v))
    metrics = camera_metrics(generated, reference, provider)
    _write_json(Path(args.out), {"command": "eval", "seed": args.seed, **metrics})
    print(json.dumps(metrics, indent=1))
    return 0


def _read_frames(path: str) -> np.ndarray:
    from .serialize import png_bytes_to_frame

    frames = sorted(Path(path).glob("frame_*.png"))
    if not frames:
        raise SpecValidationError([f"no frame_*.png under {path}"])
    return np.stack([png_bytes_to_frame(p.read_bytes()) for p in frames])


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app, load_config

    config = load_config(args.config)
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dualclock", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    w = sub.add_parser("warp", help="build a warped reference from a motion spec")
    w.add_argument("--image", required=True)
    w.add_argument("--spec", required=True)
    w.add_argument("--out", required=True)
    w.add_argument("--seed", type=int, default=0)
    w.set_defaults(fn=cmd_warp)

    c = sub.add_parser("camera-warp", help="build a camera-motion reference from depth")
    c.add_argument("--image", required=True)
    c.add_argument("--depth", required=True)
    c.add_argument("--path", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--calibrate-against", default=None,
                   help="frame directory to fit the translation scale against")
    c.add_argument("--filter-below", type=float, nargs="?", const=0.3, default=None,
                   help="skip scenes whose scale falls below this (0.3 when bare)")
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(fn=cmd_camera_warp)

    g = sub.add_parser("generate", help="run dual-clock sampling over a warped reference")
    g.add_argument("--checkpoint", required=True)
    g.add_argument("--reference", required=True, help="directory from warp/camera-warp")
    g.add_argument("--out", required=True)
    g.add_argument("--manifest", default=None, help="replay an existing run manifest")
    g.add_argument("--t-weak", type=int, default=36)
    g.add_argument("--t-strong", type=int, default=25)
    g.add_argument("--regime", default=None,
                   choices=["dual_clock", "single_clock", "repaint_style", "unconstrained_bg"])
    g.add_argument("--reference-noise-mode", default="fresh_per_step",
                   choices=["fresh_per_step", "shared_epsilon"])
    g.add_argument("--text", default=None)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(fn=cmd_generate)

    a = sub.add_parser("ablate", help="run the clock-settings ablation grid over scenes")
    a.add_argument("--checkpoint", required=True)
    a.add_argument("--scenes", required=True, help="sprite dataset directory")
    a.add_argument("--out", required=True, help="report JSON path")
    a.add_argument("--settings", default=None, help="JSON list of {t1, t2} rows")
    a.add_argument("--t-weak", type=int, default=36)
    a.add_argument("--t-strong", type=int, default=25)
    a.add_argument("--limit", type=int, default=None)
    a.add_argument("--check-ordering", action="store_true")
    a.add_argument("--workers", type=int, default=1,
                   help="thread fan-out across scenes (adapter is read-only safe)")
    a.add_argument("--progress", action="store_true")
    a.add_argument("--seed", type=int, default=0)
    a.set_defaults(fn=cmd_ablate)

    t = sub.add_parser("train-toy", help="train the toy video denoiser")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--steps", type=int, default=4500)
    t.add_argument("--batch-size", type=int, default=4)
    t.add_argument("--lr", type=float, default=2e-3)
    t.add_argument("--T", type=int, default=50)
    t.add_argument("--schedule", default="cosine", choices=["cosine", "linear"])
    t.add_argument("--resume", default=None)
    t.add_argument("--threads", type=int, default=1)
    t.add_argument("--progress", action="store_true")
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(fn=cmd_train_toy)

    d = sub.add_parser("gen-dataset", help="generate a moving-sprites dataset")
    d.add_argument("--out", required=True)
    d.add_argument("--count", type=int, required=True)
    d.add_argument("--frames", type=int, default=16)
    d.add_argument("--workers", type=int, default=1,
                   help="process fan-out for rendering; dataset content is unchanged")
    d.add_argument("--seed", type=int, default=0)
    d.set_defaults(fn=cmd_gen_dataset)

    e = sub.add_parser("eval", help="frame-alignment metrics between two videos")
    e.add_argument("--generated", required=True)
    e.add_argument("--reference", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--flow", default="block_matching")
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(fn=cmd_eval)

    s = sub.add_parser("serve", help="run the HTTP authoring service")
    s.add_argument("--config", default=None)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=cmd_serve)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except VALIDATION_ERRORS as exc:
        payload = {"error": "validation", "detail": str(exc)}
        if isinstance(exc, SpecValidationError):
            payload["violations"] = exc.violations
        print(json.dumps(payload), file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(json.dumps({"error": "validation", "detail": str(exc)}), file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - structured nonzero exit
        print(json.dumps({"error": "runtime", "detail": str(exc)}), file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
