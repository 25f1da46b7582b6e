"""In-process generation worker: a bounded queue drained by one thread per
concurrency slot. Job execution is the only writer of running/done states;
the store's transactions are the synchronization point."""

from __future__ import annotations

import io
import json
import queue
import threading
import traceback
from pathlib import Path
from typing import Optional

import numpy as np

from ..motion import SourceImage, build_warped_reference
from ..sampler import GuidanceMask, SamplerConfig, sample
from ..serialize import (
    build_run_manifest,
    camera_path_from_json,
    file_hash,
    motion_document_from_json,
    png_bytes_to_frame,
    video_content_hash,
)
from .store import Store


def encode_video_blob(video: np.ndarray) -> bytes:
    """Quantized uint8 frames in a single .npz blob."""
    from ..serialize import quantize_frame

    buf = io.BytesIO()
    np.savez_compressed(buf, frames=np.stack([quantize_frame(f) for f in video]))
    return buf.getvalue()


def decode_video_blob(data: bytes) -> np.ndarray:
    arr = np.load(io.BytesIO(data))["frames"]
    return arr.astype(np.float32) / 255.0


class GenerationWorker:
    def __init__(self, store: Store, checkpoint_path: Optional[Path], concurrency: int = 1,
                 queue_size: int = 64):
        self.store = store
        self.checkpoint_path = Path(checkpoint_path) if checkpoint_path else None
        self.queue: queue.Queue = queue.Queue(maxsize=queue_size)
        self.threads = [
            threading.Thread(target=self._loop, daemon=True, name=f"genworker-{i}")
            for i in range(concurrency)
        ]
        self._stop = threading.Event()
        self._denoiser = None
        self._denoiser_lock = threading.Lock()

    def start(self) -> None:
        for t in self.threads:
            t.start()

    def stop(self) -> None:
        self._stop.set()
        for _ in self.threads:
            self.queue.put(None)

    def submit(self, job_id: str) -> None:
        self.queue.put(job_id)

    def checkpoint_available(self) -> bool:
        return self.checkpoint_path is not None and self.checkpoint_path.exists()

    def _get_denoiser(self):
        with self._denoiser_lock:
            if self._denoiser is None:
                from ..train import ToyDenoiser

                self._denoiser = ToyDenoiser.load(self.checkpoint_path)
            return self._denoiser

    def _loop(self) -> None:
        while not self._stop.is_set():
            job_id = self.queue.get()
            if job_id is None:
                break
            try:
                self._run_job(job_id)
            except Exception as exc:  # job failure must never kill the worker
                self.store.update_job(
                    job_id,
                    status="failed",
                    error=f"{exc}\n{traceback.format_exc()}",
                )

    def _camera_reference(self, project: dict, image: SourceImage, path_doc: dict):
        from ..depth import DepthMap, build_camera_reference

        if not project.get("depth_blob"):
            raise ValueError("camera-path jobs need a depth map uploaded to the project")
        depth_arr = np.load(io.BytesIO(self.store.get_blob(project["depth_blob"])))
        path, intrinsics, convention = camera_path_from_json(json.dumps(path_doc))
        depth = DepthMap(depth=depth_arr, intrinsics=intrinsics, convention=convention)
        return build_camera_reference(image, depth, path)

    def _run_job(self, job_id: str) -> None:
        job = self.store.get_job(job_id)
        if job.get("status") != "queued":
            return
        self.store.update_job(job_id, status="running")
        if not self.checkpoint_available():
            self.store.update_job(
                job_id, status="failed", error="no denoiser checkpoint configured"
            )
            return
        denoiser = self._get_denoiser()
        schedule = denoiser.schedule

        project = self.store.get_project(job["project_id"])
        image = SourceImage(pixels=png_bytes_to_frame(self.store.get_blob(project["image_blob"])))
        if job.get("spec"):
            specs, _ = motion_document_from_json(json.dumps(job["spec"]))
            for sp in specs:
                if sp.region_mask.shape != (image.height, image.width):
                    raise ValueError("spec mask shape does not match project image")
            reference = build_warped_reference(image, specs)
        else:
            reference = self._camera_reference(project, image, job["camera_path"])
        mask = GuidanceMask(reference.mask)

        params = job["sampler"]
        config = SamplerConfig(
            t_weak=int(params["t_weak"]),
            t_strong=int(params["t_strong"]),
            regime=params.get("regime", "dual_clock"),
            seed=int(params.get("seed", 0)),
            reference_noise_mode=params.get("reference_noise_mode", "fresh_per_step"),
        )
        config.validate(schedule.T)
        manifest = build_run_manifest(
            config, schedule, reference.frames, mask.mask, image.pixels,
            checkpoint_hash=file_hash(self.checkpoint_path),
            text=params.get("text"),
        )
        self.store.update_job(job_id, manifest=manifest,
                              progress={"current_step": 0, "total": config.t_weak})

        done_steps = [0]

        def on_step(snap):
            done_steps[0] += 1
            # throttled write; monotone by construction
            if done_steps[0] % 4 == 0 or done_steps[0] == config.t_weak:
                self.store.update_job(
                    job_id, progress={"current_step": done_steps[0], "total": config.t_weak}
                )

        result = sample(
            denoiser, reference, mask, config, schedule, image.pixels,
            text=params.get("text"), on_step=on_step,
        )
        video = np.clip(result.video, 0.0, 1.0)
        blob = encode_video_blob(video)
        result_ref = self.store.put_blob(blob)
        self.store.update_job(
            job_id,
            status="done",
            result_ref=result_ref,
            result_hash=video_content_hash(video),
            progress={"current_step": config.t_weak, "total": config.t_weak},
        )


def recover_interrupted_jobs(store: Store, worker: GenerationWorker, requeue: bool = True) -> int:
    """Jobs found 'running' at startup were interrupted by a crash/restart:
    re-queue them (default) or fail them, never leave them dangling. Jobs
    still 'queued' from before the restart are re-submitted either way."""
    interrupted = store.jobs_with_status("running")
    for job in interrupted:
        if requeue:
            store.update_job(job["id"], status="queued")
        else:
            store.update_job(job["id"], status="failed",
                             error="interrupted by service restart")
    for job in store.jobs_with_status("queued"):
        worker.submit(job["id"])
    return len(interrupted)
