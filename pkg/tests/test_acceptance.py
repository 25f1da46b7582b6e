"""Acceptance criteria, one test per criterion, each printing a PASS line.

Most criteria run in seconds. The clock-ordering criterion trains the toy
model (3 seeds); it reuses cached artifacts under .cache/appa when present
and otherwise runs the full pipeline (roughly 40 minutes per seed on one
CPU core). Run with `pytest tests/test_acceptance.py -v -s`.
"""

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import torch

import dualclock
from dualclock import (
    AnalyticGaussianDenoiser,
    GuidanceMask,
    SamplerConfig,
    VideoState,
    ddpm_step,
    forward_noise,
    make_schedule,
    sample,
    sdedit_baseline,
)
from dualclock.motion import (
    Keyframe,
    MotionSpec,
    RigidTransform,
    SourceImage,
    build_warped_reference,
    forward_warp,
    nn_inpaint,
)
from dualclock.net import NetConfig, ToyVideoNet
from dualclock.train import ToyDenoiser

torch.set_num_threads(1)

ROOT = Path(__file__).resolve().parents[1]
CACHE = ROOT / ".cache" / "appa"

TINY_NET = NetConfig(base_width=8, mid_width=12, mid_blocks=1, temb_dim=16, temb_hidden=32)


def report(name: str) -> None:
    print(f"\nACCEPTANCE PASS: {name}", flush=True)


@pytest.fixture(scope="module")
def toy_denoiser():
    torch.manual_seed(0)
    return ToyDenoiser(ToyVideoNet(TINY_NET), make_schedule("cosine", 50))


@pytest.fixture(scope="module")
def toy_scene():
    rng = np.random.default_rng(123)
    ref = rng.random((4, 3, 16, 16), dtype=np.float32)
    return ref, ref[0]


class TestDegeneracyLattice:
    def test_degeneracy_lattice_bitwise(self, toy_denoiser, toy_scene):
        ref, cond = toy_scene
        sch = toy_denoiser.schedule
        # (a) all-zero mask == plain SDEdit at t_weak
        cfg = SamplerConfig(t_weak=12, t_strong=6, seed=42)
        got = sample(toy_denoiser, ref, None, cfg, sch, cond)
        base = sdedit_baseline(toy_denoiser, ref, 12, cond, 42, sch)
        assert np.array_equal(got.video, base)
        # (b) all-one mask, t_strong=0 == the warped reference exactly
        cfg_rp = SamplerConfig(t_weak=12, t_strong=0, regime="repaint_style", seed=42)
        rp = sample(toy_denoiser, ref, GuidanceMask.ones((4, 16, 16)), cfg_rp, sch, cond)
        assert np.array_equal(rp.video, ref)
        # (c) t_weak == t_strong == single-clock SDEdit under any mask
        m = GuidanceMask(np.random.default_rng(7).random((4, 16, 16)) < 0.5)
        cfg_sc = SamplerConfig(t_weak=9, t_strong=9, regime="single_clock", seed=42)
        sc = sample(toy_denoiser, ref, m, cfg_sc, sch, cond)
        base9 = sdedit_baseline(toy_denoiser, ref, 9, cond, 42, sch)
        assert np.array_equal(sc.video, base9)
        report("degeneracy lattice (zero mask / full-mask repaint / equal clocks), bitwise")


class TestUpdateRuleFidelity:
    def test_update_rule_exact_and_override_stops(self, toy_denoiser, toy_scene):
        ref, cond = toy_scene
        sch = toy_denoiser.schedule
        m = np.random.default_rng(3).random((4, 16, 16)) < 0.4
        cfg = SamplerConfig(t_weak=14, t_strong=6, seed=5)
        res = sample(toy_denoiser, ref, GuidanceMask(m), cfg, sch, cond, keep_snapshots=True)
        mb = np.broadcast_to(m[:, None, :, :], ref.shape)
        override_steps = 0
        for snap in res.snapshots:
            if snap.t > cfg.t_strong:
                assert np.array_equal(snap.x_out, np.where(mb, snap.x_ref, snap.x_hat))
                override_steps += 1
            else:
                assert res.override_writes[snap.t] == 0
        assert override_steps == cfg.t_weak - cfg.t_strong
        assert all(res.override_writes[t] == 0 for t in range(1, cfg.t_strong + 1))
        report("update-rule fidelity: exact masked blend in (t_strong, t_weak], zero writes below")


class TestRuntimeParity:
    def test_denoiser_call_count_every_regime(self, toy_denoiser, toy_scene):
        ref, cond = toy_scene
        sch = toy_denoiser.schedule
        configs = [
            SamplerConfig(t_weak=12, t_strong=6),
            SamplerConfig(t_weak=12, t_strong=12, regime="single_clock"),
            SamplerConfig(t_weak=12, t_strong=0, regime="repaint_style"),
            SamplerConfig(t_weak=50, t_strong=6, regime="unconstrained_bg"),
        ]
        for cfg in configs:
            calls = [0]

            class Counting:
                def __init__(self, inner):
                    self.inner = inner

                def predict(self, state, t, condition, text=None):
                    calls[0] += 1
                    return self.inner.predict(state, t, condition, text)

            res = sample(Counting(toy_denoiser), ref, GuidanceMask.ones((4, 16, 16)),
                         cfg, sch, cond)
            assert res.denoiser_calls == cfg.t_weak == calls[0]
        report("runtime parity: denoiser calls == t_weak in every regime (exact)")


class TestDiffusionMath:
    def test_reverse_chain_and_forward_variance(self):
        # full reverse chain with the exact Gaussian denoiser; T=500 keeps
        # the ancestral beta-tilde discretization bias well under tolerance
        T = 500
        sch = make_schedule("cosine", T)
        mu, var = 1.7, 4.0
        den = AnalyticGaussianDenoiser(mu, var, sch)
        n = 10_000
        rng = np.random.default_rng(5)
        x = VideoState(rng.standard_normal(n), T)
        for t in range(T, 0, -1):
            x = ddpm_step(x, den.predict(x, t), sch, rng)
        assert abs(x.values.mean() - mu) < 3 * np.sqrt(var / n)
        assert abs(x.values.var() - var) < 3 * var * np.sqrt(2 / n)

        sch50 = make_schedule("cosine", 50)
        n2 = 100_000
        for t in (1, 25, 50):
            out = forward_noise(VideoState(np.zeros(n2), 0), t, sch50,
                                np.random.default_rng(t))
            target = 1 - sch50.alpha_bar[t]
            assert abs(out.values.var() - target) < 3 * target * np.sqrt(2 / n2)
        report("diffusion math: reverse-chain moments and forward-noise variances within 3 SE")


def exhaustive_nn_oracle(pixels, hole):
    """Vectorized exhaustive nearest-allowed-pixel search with the row-major
    tie-break, independent of the production ring-search implementation."""
    _, H, W = pixels.shape
    ys, xs = np.nonzero(~hole)
    order = np.lexsort((xs, ys))  # row-major candidate order
    ys, xs = ys[order], xs[order]
    out = pixels.copy()
    for r, c in zip(*np.nonzero(hole)):
        d2 = (ys - r) ** 2 + (xs - c) ** 2
        k = int(np.argmin(d2))  # argmin returns the first (row-major) winner
        out[:, r, c] = pixels[:, ys[k], xs[k]]
    return out


class TestWarpOracles:
    def test_integer_translation_exact(self):
        from tests.test_motion import brute_force_shift, make_image, square_mask

        rng = np.random.default_rng(0)
        for _ in range(25):
            img = make_image(seed=int(rng.integers(1000)))
            mask = square_mask(32, 32, int(rng.integers(24)), int(rng.integers(24)),
                               int(rng.integers(1, 8)))
            dx, dy = int(rng.integers(-9, 10)), int(rng.integers(-9, 10))
            frame, moved, hole, _ = forward_warp(img, mask, RigidTransform(dx, dy, 0, 0))
            of, om, oh = brute_force_shift(img.pixels, mask, dx, dy)
            assert np.array_equal(frame, of)
            assert np.array_equal(moved, om)
            assert np.array_equal(hole, oh)

    def test_nn_inpaint_100_randomized_32x32(self):
        rng = np.random.default_rng(1)
        for case in range(100):
            px = rng.random((3, 32, 32), dtype=np.float32)
            hole = rng.random((32, 32)) < rng.uniform(0.05, 0.4)
            if hole.all():
                hole[0, 0] = False
            got = nn_inpaint(px, hole)
            assert np.array_equal(got, exhaustive_nn_oracle(px, hole)), f"case {case}"

    def test_identity_spec_exact_copies(self):
        rng = np.random.default_rng(2)
        img = SourceImage(pixels=rng.random((3, 32, 32), dtype=np.float32))
        mask = np.zeros((32, 32), dtype=bool)
        mask[8:16, 8:16] = True
        spec = MotionSpec(region_mask=mask,
                          keyframes=(Keyframe(0), Keyframe(7)), frame_count=8)
        ref = build_warped_reference(img, spec)
        for f in range(8):
            assert np.array_equal(ref.frames[f], img.pixels)
        report("warp oracles: shift-composite exact, nn-inpaint exhaustive x100, identity copies")


class TestDepthGeometry:
    def test_round_trip_homography_and_scale(self):
        from dualclock.depth import (
            CameraPath,
            CameraPose,
            DepthMap,
            Intrinsics,
            backproject,
            calibrate_scale,
            splat_view,
        )

        rng = np.random.default_rng(3)
        img = SourceImage(pixels=rng.random((3, 32, 32), dtype=np.float32))
        intr = Intrinsics(fx=40.0, fy=40.0, cx=16.0, cy=16.0)
        dm = DepthMap(depth=np.full((32, 32), 3.0) + np.linspace(0, 1, 32)[None],
                      intrinsics=intr)
        cloud = backproject(img, dm)
        identity = CameraPose(rotation=np.eye(3), translation=np.zeros(3))
        frame, valid = splat_view(cloud, identity, intr, (32, 32))
        assert valid.all() and np.array_equal(frame, img.pixels)

        # constant-depth plane under known z translation: centered upscale
        d, tz = 4.0, 1.0
        dm2 = DepthMap(depth=np.full((32, 32), d), intrinsics=intr)
        cloud2 = backproject(img, dm2)
        pose = CameraPose(rotation=np.eye(3), translation=np.array([0.0, 0.0, tz]))
        frame2, valid2 = splat_view(cloud2, pose, intr, (32, 32))
        scale = d / (d - tz)
        good = total = 0
        for v, u in zip(*np.nonzero(valid2)):
            su = intr.cx + (u - intr.cx) / scale
            sv = intr.cy + (v - intr.cy) / scale
            cand = [(int(np.floor(sv + 0.5)), int(np.floor(su + 0.5))),
                    (int(np.ceil(sv - 0.5)), int(np.ceil(su - 0.5)))]
            cand = [(i, j) for i, j in cand if 0 <= i < 32 and 0 <= j < 32]
            if cand:
                total += 1
                if any(np.array_equal(frame2[:, v, u], img.pixels[:, i, j]) for i, j in cand):
                    good += 1
        assert total > 0 and good / total >= 0.99

        # planted translation scale recovered within 0.02
        img48 = SourceImage(pixels=rng.random((3, 48, 48), dtype=np.float32))
        intr48 = Intrinsics(fx=60.0, fy=60.0, cx=24.0, cy=24.0)
        depth48 = 2.0 + (np.linspace(0, 1.5, 48)[:, None]
                         + np.linspace(0, 0.7, 48)[None, :]) * np.ones((48, 48))
        dm48 = DepthMap(depth=depth48, intrinsics=intr48)
        poses = [identity] + [
            CameraPose(rotation=np.eye(3), translation=np.array([0.1 * f, 0.02 * f, 0.0]))
            for f in range(1, 5)
        ]
        path = CameraPath(poses=tuple(poses))
        true = 1.7
        cloud48 = backproject(img48, dm48)
        reference = np.stack([
            splat_view(cloud48, CameraPose(p.rotation, p.translation * true), intr48,
                       (48, 48))[0]
            for p in path.poses
        ])
        got = calibrate_scale(img48, dm48, path, reference)
        assert abs(got - true) <= 0.02
        report("depth geometry: exact round trip, homography within 0.5 px on >=99%, scale within 0.02")


class TestMetricFormulas:
    def test_formulas_match_brute_force(self):
        from dualclock.metrics import (
            TrackResult,
            bg_obj_ctd,
            camera_metrics,
            ctd,
            dynamic_degree,
        )
        from dualclock.tracking import make_ground_truth_provider

        rng = np.random.default_rng(4)
        # ctd: brute force + 3-4-5 closed form
        track = rng.normal(size=(16, 2))
        target = rng.normal(size=(16, 2))
        want = np.mean([np.linalg.norm(track[f] - target[f]) for f in range(16)])
        assert abs(ctd(track, target) - want) < 1e-6
        assert ctd(np.zeros((6, 2)) + [3.0, 4.0], np.zeros((6, 2))) == 5.0
        # bg-obj ctd: double loop + co-moving zero
        F, J = 9, 6
        obj = rng.normal(size=(F, 2))
        grid = rng.normal(size=(F, J, 2))
        tr = TrackResult(obj, grid, np.zeros(F, dtype=bool))
        total = sum(
            np.linalg.norm((grid[t, j] - grid[0, j]) - (obj[t] - obj[0]))
            for t in range(1, F) for j in range(J)
        )
        assert abs(bg_obj_ctd(tr) - total / ((F - 1) * J)) < 1e-6
        obj_int = rng.integers(-20, 20, size=(F, 2)).astype(np.float64)
        co = TrackResult(obj_int, np.stack([obj_int + [j, 0] for j in range(J)], axis=1),
                         np.zeros(F, dtype=bool))
        assert bg_obj_ctd(co) == 0.0
        # dynamic degree: alpha=3.5 threshold + 25% rule vs hand recomputation
        video = np.zeros((9, 3, 64, 64), dtype=np.float32)
        flow = rng.normal(0, 0.6, size=(8, 2, 64, 64)).astype(np.float32)
        result = dynamic_degree(video, make_ground_truth_provider(flow), alpha=3.5)
        assert result.threshold == pytest.approx(3.5 * 64 / 256)
        k = round(0.05 * 64 * 64)
        want_frames = []
        for f in range(8):
            mags = np.sort(np.hypot(flow[f, 0], flow[f, 1]).ravel())[::-1]
            want_frames.append(mags[:k].mean() > result.threshold)
        assert np.array_equal(result.per_frame, want_frames)
        assert result.dynamic == (np.mean(want_frames) >= 0.25)
        # camera metrics vs independent recomputation
        a = rng.random((3, 3, 32, 32))
        b = np.clip(a + rng.normal(0, 0.05, a.shape), 0, 1)
        gt_flow = rng.normal(size=(2, 2, 32, 32)).astype(np.float32)
        out = camera_metrics(a, b, make_ground_truth_provider(gt_flow))
        assert abs(out["mse"] - np.mean((a - b) ** 2)) < 1e-6
        assert out["flow_mse"] == 0.0
        skimage = pytest.importorskip("skimage.metrics")
        want_ssim = np.mean([
            skimage.structural_similarity(
                fa, fb, channel_axis=0, data_range=1.0, gaussian_weights=True,
                sigma=1.5, use_sample_covariance=False)
            for fa, fb in zip(a, b)
        ])
        assert abs(out["ssim"] - want_ssim) < 1e-6
        ident = camera_metrics(a, a, make_ground_truth_provider(gt_flow * 0))
        assert ident["mse"] == 0.0 and ident["flow_mse"] == 0.0
        assert ident["ssim"] == pytest.approx(1.0, abs=1e-9)
        report("metric formulas: ctd/bg-obj-ctd/dynamic-degree/camera metrics vs brute force (1e-6)")


class TestReproducibility:
    def test_manifest_replay_and_cli_service_parity(self, tmp_path):
        from fastapi.testclient import TestClient

        from dualclock.cli import main
        from dualclock.serialize import frame_to_png_bytes, mask_to_rle
        from dualclock.service import ServiceConfig, create_app
        from tests.test_service import parse_multipart

        rng = np.random.default_rng(6)
        frame = (rng.integers(0, 256, size=(3, 16, 16)) / 255.0).astype(np.float32)
        img_png = frame_to_png_bytes(frame)
        (tmp_path / "img.png").write_bytes(img_png)
        mask = np.zeros((16, 16), dtype=bool)
        mask[4:8, 2:6] = True
        doc = {
            "version": 1, "image": "img.png", "frame_count": 4,
            "regions": [{"mask": mask_to_rle(mask),
                         "keyframes": [{"frame": 0}, {"frame": 3, "dx": 3.0}]}],
        }
        (tmp_path / "spec.json").write_text(json.dumps(doc))
        torch.manual_seed(2)
        den = ToyDenoiser(ToyVideoNet(TINY_NET), make_schedule("cosine", 50))
        den.save(tmp_path / "toy.pt")

        # manifest replay: identical result hash
        assert main(["warp", "--image", str(tmp_path / "img.png"),
                     "--spec", str(tmp_path / "spec.json"),
                     "--out", str(tmp_path / "ref")]) == 0
        assert main(["generate", "--checkpoint", str(tmp_path / "toy.pt"),
                     "--reference", str(tmp_path / "ref"), "--out", str(tmp_path / "g1"),
                     "--t-weak", "6", "--t-strong", "3", "--seed", "3"]) == 0
        assert main(["generate", "--checkpoint", str(tmp_path / "toy.pt"),
                     "--reference", str(tmp_path / "ref"), "--out", str(tmp_path / "g2"),
                     "--manifest", str(tmp_path / "g1" / "manifest.json")]) == 0
        m1 = json.loads((tmp_path / "g1" / "manifest.json").read_text())
        m2 = json.loads((tmp_path / "g2" / "manifest.json").read_text())
        assert m1["result_hash"] == m2["result_hash"]

        # CLI warp vs service preview: bit-identical PNG payloads
        config = ServiceConfig(storage_root=str(tmp_path / "svc"),
                               checkpoint_path=str(tmp_path / "toy.pt"))
        with TestClient(create_app(config)) as client:
            project = client.post("/projects", files={"file": ("i.png", img_png)}).json()
            r = client.post(f"/projects/{project['id']}/preview-warp", json={"spec": doc})
            parts = parse_multipart(r.content)
        for f in range(4):
            cli_bytes = (tmp_path / "ref" / f"frame_{f:05d}.png").read_bytes()
            assert parts[f"frame_{f:05d}"] == cli_bytes
            cli_mask = (tmp_path / "ref" / f"mask_{f:05d}.png").read_bytes()
            assert parts[f"mask_{f:05d}"] == cli_mask
        report("reproducibility: manifest replay hash-identical; CLI/service bit parity")


@pytest.mark.slow
class TestAppAOrdering:
    """The scaled-down reproduction of the clock-setting ablation ordering:
    CTD repaint < dual < single(t_weak) and dynamic degree dual >
    single(t_strong), on the mean over >=50 held-out scenes, for 3 of 3
    training seeds. Uses cached artifacts when present; otherwise trains
    (2000 scenes, ~40 min per seed on one CPU core)."""

    SEEDS = (0, 1, 2)

    def _ensure_seed(self, seed: int) -> dict:
        summary_path = CACHE / f"seed{seed}" / "summary.json"
        if not summary_path.exists():
            subprocess.run(
                [sys.executable, str(ROOT / "scripts" / "run_app_a.py"), str(seed)],
                check=True,
                cwd=ROOT,
            )
        return json.loads(summary_path.read_text())

    def test_ordering_holds_for_three_seeds(self):
        from dualclock.evaluation import load_report, ordering_checks

        failures = []
        for seed in self.SEEDS:
            summary = self._ensure_seed(seed)
            report_obj = load_report(CACHE / f"seed{seed}" / "ablation.json")
            clocks = summary["clocks"]
            checks = ordering_checks(
                report_obj, clocks["T"], clocks["t_weak"], clocks["t_strong"]
            )
            assert summary["orderings"] == checks
            # the contract: >=50 held-out scenes per seed
            assert report_obj.rows[0]["scenes"] >= 50
            if not all(checks.values()):
                failures.append((seed, checks))
        assert not failures, f"ordering failed for seeds: {failures}"
        report("clock-ordering ablation reproduced for 3 of 3 training seeds (>=50 scenes)")
