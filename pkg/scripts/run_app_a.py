"""Train one seed of the toy denoiser and run the clock-ordering ablation.

Artifacts land under .cache/appa/seed{S}/ so the acceptance suite can pick
them up without retraining. Usage: python3 scripts/run_app_a.py SEED
"""

import json
import sys
import time
from pathlib import Path

import numpy as np
import torch

torch.set_num_threads(1)

from dualclock.evaluation import (
    evaluate_ablation,
    ordering_checks,
    ordering_settings,
    save_report,
)
from dualclock.sprites import dataset_paths, load_scene, save_dataset
from dualclock.train import ToyDenoiser, TrainConfig, heldout_eps_mse, train_toy

ROOT = Path(__file__).resolve().parents[1]
CACHE = ROOT / ".cache" / "appa"
TRAIN_SCENES = 2000
EVAL_SCENES = 60
TRAIN_DATA_SEED = 1000
EVAL_DATA_SEED = 2000
# reference backbone config is (36, 25); the toy-scale ablation clocks were
# tuned on the grid per seed 0 and recorded here and in the ledger
T, T_WEAK, T_STRONG = 50, 36, 18


def ensure_dataset(path: Path, n: int, seed: int) -> Path:
    from dualclock.sprites import GENERATOR_VERSION

    manifest = path / "manifest.json"
    if manifest.exists():
        meta = json.loads(manifest.read_text())
        if meta["count"] == n and meta.get("version") == GENERATOR_VERSION:
            return path
    print(f"generating {n} scenes -> {path}", flush=True)
    return save_dataset(path, n_scenes=n, seed=seed)


def main() -> None:
    seed = int(sys.argv[1])
    out_dir = CACHE / f"seed{seed}"
    out_dir.mkdir(parents=True, exist_ok=True)
    train_dir = ensure_dataset(CACHE / "train", TRAIN_SCENES, TRAIN_DATA_SEED)
    eval_dir = ensure_dataset(CACHE / "eval", EVAL_SCENES, EVAL_DATA_SEED)

    ckpt = out_dir / "toy.pt"
    config = TrainConfig(seed=seed)
    if not ckpt.exists():
        t0 = time.time()
        train_toy(train_dir, config, out_path=ckpt, progress=True)
        print(f"train seed {seed}: {time.time() - t0:.0f}s", flush=True)
    denoiser = ToyDenoiser.load(ckpt)

    eval_scenes = [load_scene(p) for p in dataset_paths(eval_dir)]
    mse = heldout_eps_mse(denoiser, eval_scenes[:10], seed=7)
    print(f"heldout eps mse: {mse:.4f}", flush=True)

    settings = ordering_settings(T, T_WEAK, T_STRONG)
    t0 = time.time()
    report = evaluate_ablation(denoiser, eval_scenes, settings, denoiser.schedule,
                               seed=9000, progress=True)
    print(f"ablate seed {seed}: {time.time() - t0:.0f}s", flush=True)
    save_report(report, out_dir / "ablation.json")
    (out_dir / "summary.json").write_text(json.dumps({
        "seed": seed,
        "heldout_eps_mse": mse,
        "clocks": {"T": T, "t_weak": T_WEAK, "t_strong": T_STRONG},
        "scenes": EVAL_SCENES,
        "orderings": ordering_checks(report, T, T_WEAK, T_STRONG),
    }, indent=1))
    print(report.table())
    print(ordering_checks(report, T, T_WEAK, T_STRONG), flush=True)


if __name__ == "__main__":
    main()
