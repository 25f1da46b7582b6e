import json
from pathlib import Path

import numpy as np
import pytest
import torch

from dualclock import make_schedule
from dualclock.cli import main
from dualclock.net import NetConfig, ToyVideoNet
from dualclock.serialize import (
    frame_to_png_bytes,
    mask_to_rle,
    read_warped_reference,
)
from dualclock.train import ToyDenoiser

torch.set_num_threads(1)

TINY_NET = NetConfig(base_width=8, mid_width=12, mid_blocks=1, temb_dim=16, temb_hidden=32)


@pytest.fixture()
def workdir(tmp_path):
    rng = np.random.default_rng(0)
    frame = (rng.integers(0, 256, size=(3, 16, 16)) / 255.0).astype(np.float32)
    (tmp_path / "img.png").write_bytes(frame_to_png_bytes(frame))
    mask = np.zeros((16, 16), dtype=bool)
    mask[4:8, 2:6] = True
    doc = {
        "version": 1,
        "image": "img.png",
        "frame_count": 4,
        "regions": [{"mask": mask_to_rle(mask),
                     "keyframes": [{"frame": 0}, {"frame": 3, "dx": 3.0}]}],
    }
    (tmp_path / "spec.json").write_text(json.dumps(doc))
    ident = {
        "version": 1,
        "image": "img.png",
        "frame_count": 4,
        "regions": [{"mask": mask_to_rle(mask),
                     "keyframes": [{"frame": 0}, {"frame": 3}]}],
    }
    (tmp_path / "identity.json").write_text(json.dumps(ident))
    torch.manual_seed(1)
    den = ToyDenoiser(ToyVideoNet(TINY_NET), make_schedule("cosine", 50))
    den.save(tmp_path / "toy.pt")
    return tmp_path


class TestWarpCommand:
    def test_identity_spec_frames_hash_source(self, workdir, capsys):
        rc = main(["warp", "--image", str(workdir / "img.png"),
                   "--spec", str(workdir / "identity.json"),
                   "--out", str(workdir / "warp_ident")])
        assert rc == 0
        ref = read_warped_reference(workdir / "warp_ident")
        from dualclock.serialize import load_image, quantize_frame

        src = load_image(workdir / "img.png").pixels
        for f in range(4):
            assert np.array_equal(quantize_frame(ref.frames[f]), quantize_frame(src))
        manifest = json.loads((workdir / "warp_ident" / "manifest.json").read_text())
        assert manifest["seed"] == 0 and manifest["frames_hash"]

    def test_missing_spec_validation_exit(self, workdir, capsys):
        rc = main(["warp", "--image", str(workdir / "img.png"),
                   "--spec", str(workdir / "nope.json"), "--out", str(workdir / "o")])
        assert rc == 2
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "validation"

    def test_bad_spec_shape_exit_2(self, workdir, capsys):
        doc = json.loads((workdir / "spec.json").read_text())
        doc["regions"][0]["mask"] = mask_to_rle(np.ones((8, 8), dtype=bool))
        (workdir / "bad.json").write_text(json.dumps(doc))
        rc = main(["warp", "--image", str(workdir / "img.png"),
                   "--spec", str(workdir / "bad.json"), "--out", str(workdir / "o")])
        assert rc == 2


class TestGenerateCommand:
    def test_deterministic_hashes_across_runs(self, workdir):
        main(["warp", "--image", str(workdir / "img.png"),
              "--spec", str(workdir / "spec.json"), "--out", str(workdir / "ref")])
        for name in ("g1", "g2"):
            rc = main(["generate", "--checkpoint", str(workdir / "toy.pt"),
                       "--reference", str(workdir / "ref"), "--out", str(workdir / name),
                       "--t-weak", "6", "--t-strong", "3", "--seed", "11"])
            assert rc == 0
        m1 = json.loads((workdir / "g1" / "manifest.json").read_text())
        m2 = json.loads((workdir / "g2" / "manifest.json").read_text())
        assert m1["result_hash"] == m2["result_hash"]
        assert m1["denoiser_calls"] == 6
        assert (workdir / "g1" / "frame_00000.png").read_bytes() == (
            workdir / "g2" / "frame_00000.png").read_bytes()

    def test_manifest_replay_reproduces_hash(self, workdir):
        main(["warp", "--image", str(workdir / "img.png"),
              "--spec", str(workdir / "spec.json"), "--out", str(workdir / "ref")])
        main(["generate", "--checkpoint", str(workdir / "toy.pt"),
              "--reference", str(workdir / "ref"), "--out", str(workdir / "orig"),
              "--t-weak", "6", "--t-strong", "3", "--seed", "4"])
        rc = main(["generate", "--checkpoint", str(workdir / "toy.pt"),
                   "--reference", str(workdir / "ref"), "--out", str(workdir / "replay"),
                   "--manifest", str(workdir / "orig" / "manifest.json")])
        assert rc == 0
        a = json.loads((workdir / "orig" / "manifest.json").read_text())
        b = json.loads((workdir / "replay" / "manifest.json").read_text())
        assert a["result_hash"] == b["result_hash"]
        assert a["config"] == b["config"]


class TestDatasetAndAblate:
    def test_gen_dataset_and_ablate_table(self, workdir, capsys):
        rc = main(["gen-dataset", "--out", str(workdir / "ds"), "--count", "2",
                   "--frames", "4", "--seed", "3"])
        assert rc == 0
        rc = main(["ablate", "--checkpoint", str(workdir / "toy.pt"),
                   "--scenes", str(workdir / "ds"), "--out", str(workdir / "report.json"),
                   "--t-weak", "6", "--t-strong", "3", "--limit", "1", "--seed", "2"])
        assert rc == 0
        out = capsys.readouterr().out
        report = json.loads((workdir / "report.json").read_text())
        assert len(report["rows"]) == 8  # the eight canonical rows
        assert "dual_clock" in out
        # settings cover the expected (t1, t2) grid
        pairs = {(r["t1"], r["t2"]) for r in report["rows"]}
        assert pairs == {(6, 6), (3, 3), (50, 0), (6, 0), (3, 0), (50, 6), (50, 3), (6, 3)}

    def test_eval_command_identity(self, workdir, capsys):
        main(["warp", "--image", str(workdir / "img.png"),
              "--spec", str(workdir / "identity.json"), "--out", str(workdir / "a")])
        rc = main(["eval", "--generated", str(workdir / "a"),
                   "--reference", str(workdir / "a"), "--out", str(workdir / "m.json")])
        assert rc == 0
        metrics = json.loads((workdir / "m.json").read_text())
        assert metrics["mse"] == 0.0 and metrics["flow_mse"] == 0.0
        assert metrics["ssim"] == pytest.approx(1.0)


class TestTrainCommand:
    def test_train_toy_smoke(self, workdir):
        main(["gen-dataset", "--out", str(workdir / "ds2"), "--count", "2",
              "--frames", "8", "--seed", "5"])
        rc = main(["train-toy", "--data", str(workdir / "ds2"),
                   "--out", str(workdir / "trained.pt"), "--steps", "2", "--seed", "1"])
        assert rc == 0
        assert (workdir / "trained.pt").exists()
        manifest = json.loads((workdir / "trained.manifest.json").read_text())
        assert manifest["checkpoint_hash"]


class TestCameraWarpCommand:
    def test_camera_warp_static_path(self, workdir):
        depth = np.full((16, 16), 2.0)
        np.save(workdir / "depth.npy", depth)
        doc = {
            "intrinsics": {"fx": 20.0, "fy": 20.0, "cx": 8.0, "cy": 8.0},
            "poses": [np.eye(4).ravel().tolist() for _ in range(3)],
        }
        (workdir / "path.json").write_text(json.dumps(doc))
        rc = main(["camera-warp", "--image", str(workdir / "img.png"),
                   "--depth", str(workdir / "depth.npy"),
                   "--path", str(workdir / "path.json"),
                   "--out", str(workdir / "cam")])
        assert rc == 0
        ref = read_warped_reference(workdir / "cam")
        assert ref.mask.all()

    def test_filter_below_skips(self, workdir, capsys):
        depth = np.full((16, 16), 2.0)
        np.save(workdir / "depth.npy", depth)
        doc = {
            "intrinsics": {"fx": 20.0, "fy": 20.0, "cx": 8.0, "cy": 8.0},
            "poses": [np.eye(4).ravel().tolist() for _ in range(2)],
            "scale": 0.1,
        }
        (workdir / "p2.json").write_text(json.dumps(doc))
        rc = main(["camera-warp", "--image", str(workdir / "img.png"),
                   "--depth", str(workdir / "depth.npy"), "--path", str(workdir / "p2.json"),
                   "--out", str(workdir / "cam2"), "--filter-below", "0.3"])
        assert rc == 0
        manifest = json.loads((workdir / "cam2" / "manifest.json").read_text())
        assert manifest["filtered"] is True
