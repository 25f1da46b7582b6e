"""Training entry points for the toy denoiser, plus its adapter wrapper."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, asdict, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from .diffusion import NoiseSchedule, VideoState, make_schedule
from .net import NetConfig, ToyVideoNet
from .sprites import dataset_paths, load_scene

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 4500
    batch_size: int = 4
    lr: float = 2e-3
    seed: int = 0
    schedule_kind: str = "cosine"
    T: int = 50
    crop_frames: int = 8  # temporal crop length during training
    ema_decay: float = 0.995  # 0 disables; EMA weights are what gets served
    grad_clip: float = 1.0
    lr_final_fraction: float = 0.1  # cosine decay floor relative to lr
    log_every: int = 100
    net: NetConfig = field(default_factory=NetConfig)


class ToyDenoiser:
    """DenoiserAdapter over a ToyVideoNet: channel-concat image conditioning,
    deterministic CPU inference."""

    def __init__(self, net: ToyVideoNet, schedule: NoiseSchedule):
        self.net = net.eval()
        self.schedule = schedule

    def predict(self, state: VideoState, t: int, condition: np.ndarray, text=None) -> np.ndarray:
        x = state.values
        with torch.no_grad():
            xt = torch.from_numpy(np.ascontiguousarray(x, dtype=np.float32))
            xt = xt.permute(1, 0, 2, 3)[None]  # (1, C, F, H, W)
            cond = torch.from_numpy(np.ascontiguousarray(condition, dtype=np.float32))
            cond = cond[None, :, None].expand(-1, -1, xt.shape[2], -1, -1)
            inp = torch.cat([xt, cond], dim=1)
            out = self.net(inp, torch.tensor([t], dtype=torch.float32))
        return out[0].permute(1, 0, 2, 3).numpy().astype(x.dtype, copy=False)

    def save(self, path: Path | str, train_config: Optional[TrainConfig] = None,
             loss_curve: Optional[list] = None, step: int = 0,
             raw_state_dict: Optional[dict] = None) -> None:
        # state_dict holds the serving weights (EMA when enabled);
        # raw_state_dict keeps the optimizer-facing weights for resumption
        payload = {
            "format_version": CHECKPOINT_VERSION,
            "net_config": asdict(self.net.config),
            "state_dict": self.net.state_dict(),
            "raw_state_dict": raw_state_dict,
            "schedule": self.schedule.to_json(),
            "train_config": _config_dict(train_config) if train_config else None,
            "loss_curve": loss_curve or [],
            "step": step,
        }
        torch.save(payload, path)

    @classmethod
    def load(cls, path: Path | str) -> "ToyDenoiser":
        payload = torch.load(path, map_location="cpu", weights_only=False)
        if payload.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {payload.get('format_version')}")
        net = ToyVideoNet(NetConfig(**payload["net_config"]))
        net.load_state_dict(payload["state_dict"])
        return cls(net, NoiseSchedule.from_json(payload["schedule"]))


def _config_dict(config: TrainConfig) -> dict:
    d = asdict(config)
    return d


def _load_videos(scenes) -> list[np.ndarray]:
    videos = []
    for item in scenes:
        if isinstance(item, (str, Path)):
            item = load_scene(item)
        videos.append((item.video * 255.0 + 0.5).astype(np.uint8))
    return videos


def train_toy(
    dataset: Sequence | str | Path,
    config: TrainConfig = TrainConfig(),
    out_path: Optional[Path | str] = None,
    resume: Optional[Path | str] = None,
    progress: bool = False,
) -> ToyDenoiser:
    """Train the eps-predictor on sprite scenes.

    `dataset` is a directory of scene containers or a sequence of
    SceneSamples/paths. Training is deterministic given the config seed.
    Aborts with a diagnostic if the loss goes non-finite.
    """
    if isinstance(dataset, (str, Path)):
        scene_list = dataset_paths(dataset)
    else:
        scene_list = list(dataset)
    if not scene_list:
        raise ValueError("dataset is empty")
    videos = _load_videos(scene_list)

    torch.set_num_threads(max(torch.get_num_threads(), 1))
    torch.manual_seed(config.seed)
    net = ToyVideoNet(config.net)
    schedule = make_schedule(config.schedule_kind, config.T)
    opt = torch.optim.Adam(net.parameters(), lr=config.lr)
    start_step = 0
    loss_curve: list[float] = []
    if resume is not None:
        payload = torch.load(resume, map_location="cpu", weights_only=False)
        net.load_state_dict(payload.get("raw_state_dict") or payload["state_dict"])
        start_step = payload.get("step", 0)
        loss_curve = list(payload.get("loss_curve", []))

    rng = np.random.default_rng(config.seed)
    ab = torch.from_numpy(schedule.alpha_bar.astype(np.float32))
    F_full = videos[0].shape[0]
    crop = min(config.crop_frames, F_full)

    ema: Optional[dict] = None
    if config.ema_decay > 0:
        # resumed checkpoints carry the EMA as their serving weights
        source = payload["state_dict"] if resume is not None else net.state_dict()
        ema = {k: v.detach().clone() for k, v in source.items()}

    net.train()
    t0 = time.time()
    for step in range(start_step, config.steps):
        idx = rng.integers(len(videos), size=config.batch_size)
        starts = rng.integers(0, F_full - crop + 1, size=config.batch_size)
        x0 = np.stack(
            [videos[i][s : s + crop] for i, s in zip(idx, starts)]
        ).astype(np.float32) / 255.0  # (B, crop, 3, H, W)
        x0 = torch.from_numpy(x0).permute(0, 2, 1, 3, 4)  # (B, 3, F, H, W)
        t = torch.from_numpy(rng.integers(1, config.T + 1, size=config.batch_size))
        eps = torch.randn_like(x0)
        a = ab[t][:, None, None, None, None]
        xt = torch.sqrt(a) * x0 + torch.sqrt(1 - a) * eps
        cond = x0[:, :, :1].expand(-1, -1, crop, -1, -1)
        pred = net(torch.cat([xt, cond], dim=1), t.float())
        loss = torch.mean((pred - eps) ** 2)
        if not torch.isfinite(loss):
            raise RuntimeError(f"training diverged: loss became {loss.item()} at step {step}")
        opt.zero_grad()
        loss.backward()
        if config.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(net.parameters(), config.grad_clip)
        frac = step / max(config.steps - 1, 1)
        floor = config.lr_final_fraction
        scale = floor + (1 - floor) * 0.5 * (1 + np.cos(np.pi * frac))
        for group in opt.param_groups:
            group["lr"] = config.lr * scale
        opt.step()
        if ema is not None:
            with torch.no_grad():
                d = config.ema_decay
                for k, v in net.state_dict().items():
                    if v.dtype.is_floating_point:
                        ema[k].mul_(d).add_(v, alpha=1 - d)
                    else:
                        ema[k].copy_(v)
        loss_curve.append(float(loss.item()))
        if progress and (step % config.log_every == 0 or step == config.steps - 1):
            rate = (step - start_step + 1) / max(time.time() - t0, 1e-9)
            print(f"step {step}  loss {loss.item():.4f}  ({rate:.2f} it/s)", flush=True)

    serve_net = net
    if ema is not None:
        serve_net = ToyVideoNet(config.net)
        serve_net.load_state_dict(ema)
    denoiser = ToyDenoiser(serve_net, schedule)
    if out_path is not None:
        denoiser.save(
            out_path,
            train_config=config,
            loss_curve=loss_curve,
            step=config.steps,
            raw_state_dict=net.state_dict(),
        )
    return denoiser


def heldout_eps_mse(
    denoiser: ToyDenoiser, scenes: Sequence, seed: int = 0, draws_per_scene: int = 2
) -> float:
    """Monte-Carlo eps-prediction MSE on held-out scenes. The zero predictor
    scores exactly 1.0 under this metric, which anchors the baseline."""
    rng = np.random.default_rng(seed)
    schedule = denoiser.schedule
    total, count = 0.0, 0
    for item in scenes:
        video = item.video if hasattr(item, "video") else load_scene(item).video
        x0 = np.transpose(video, (0, 1, 2, 3))  # (F, 3, H, W)
        for _ in range(draws_per_scene):
            t = int(rng.integers(1, schedule.T + 1))
            eps = rng.standard_normal(x0.shape).astype(np.float32)
            a = schedule.alpha_bar[t]
            xt = np.sqrt(a, dtype=np.float32) * x0 + np.sqrt(1 - a, dtype=np.float32) * eps
            pred = denoiser.predict(VideoState(values=xt, t=t), t, video[0])
            total += float(np.mean((pred - eps) ** 2))
            count += 1
    return total / count
