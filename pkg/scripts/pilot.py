"""Pilot run: small training + 4-setting ablation to sanity-check orderings."""
import sys, time
import numpy as np
import torch
torch.set_num_threads(1)

from dualclock.sprites import generate_dataset
from dualclock.train import TrainConfig, train_toy, heldout_eps_mse, ToyDenoiser
from dualclock.evaluation import evaluate_ablation, ordering_checks, ordering_settings
from dualclock import make_schedule

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 800
n_train = int(sys.argv[2]) if len(sys.argv) > 2 else 400
n_eval = int(sys.argv[3]) if len(sys.argv) > 3 else 12

t0 = time.time()
train_scenes = list(generate_dataset(n_train, np.random.default_rng(1000)))
eval_scenes = list(generate_dataset(n_eval, np.random.default_rng(2000)))
print(f"gen: {time.time()-t0:.1f}s", flush=True)

cfg = TrainConfig(steps=steps, seed=0)
t0 = time.time()
den = train_toy(train_scenes, cfg, out_path="/tmp/pilot_ckpt.pt", progress=True)
print(f"train: {time.time()-t0:.1f}s", flush=True)

t0 = time.time()
mse = heldout_eps_mse(den, eval_scenes[:8], seed=3)
print(f"heldout eps mse: {mse:.4f} ({time.time()-t0:.1f}s)", flush=True)

sch = den.schedule
T, tw, ts = 50, 36, 25
settings = ordering_settings(T, tw, ts)
t0 = time.time()
report = evaluate_ablation(den, eval_scenes, settings, sch, seed=500, progress=True)
print(f"ablate: {time.time()-t0:.1f}s", flush=True)
print(report.table())
print(ordering_checks(report, T, tw, ts))
