"""HTTP endpoints for the authoring service.

Projects hold a source image plus a versioned history of motion specs.
Preview responses and generation results stream as multipart PNG frame
sequences so the service stays codec-free; all POST endpoints accept a
client-supplied request key for idempotent retries.
"""

from __future__ import annotations

import json
from contextlib import asynccontextmanager
from typing import Iterator, Optional

import numpy as np
from fastapi import FastAPI, File, Form, HTTPException, Request, UploadFile
from fastapi.responses import JSONResponse, Response, StreamingResponse

from ..motion import SourceImage, SpecValidationError, build_warped_reference
from ..serialize import (
    frame_to_png_bytes,
    mask_to_png_bytes,
    motion_document_from_json,
    png_bytes_to_frame,
)
from .config import ServiceConfig
from .store import NotFound, Store
from .worker import GenerationWorker, decode_video_blob, recover_interrupted_jobs

MULTIPART_BOUNDARY = "dualclockframe"


def _multipart_stream(parts: Iterator[tuple[str, bytes]]) -> Iterator[bytes]:
    for name, payload in parts:
        yield (
            f"--{MULTIPART_BOUNDARY}\r\n"
            f"Content-Type: image/png\r\n"
            f"Content-Disposition: inline; name=\"{name}\"\r\n"
            f"Content-Length: {len(payload)}\r\n\r\n"
        ).encode()
        yield payload
        yield b"\r\n"
    yield f"--{MULTIPART_BOUNDARY}--\r\n".encode()


def create_app(config: ServiceConfig) -> FastAPI:
    store = Store(config.storage_root)
    worker = GenerationWorker(
        store,
        config.checkpoint_path,
        concurrency=config.job_concurrency,
    )

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        worker.start()
        recover_interrupted_jobs(store, worker, requeue=config.requeue_running_on_start)
        yield
        worker.stop()

    app = FastAPI(title="dualclock service", lifespan=lifespan)
    app.state.store = store
    app.state.worker = worker

    @app.exception_handler(SpecValidationError)
    async def on_validation_error(request: Request, exc: SpecValidationError):
        return JSONResponse(
            status_code=422,
            content={"error": "validation", "violations": exc.violations},
        )

    @app.exception_handler(NotFound)
    async def on_not_found(request: Request, exc: NotFound):
        return JSONResponse(status_code=404, content={"error": str(exc)})

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "checkpoint": worker.checkpoint_available()}

    @app.post("/projects", status_code=201)
    async def create_project(
        file: UploadFile = File(...), request_key: Optional[str] = Form(default=None)
    ):
        payload = await file.read()
        try:
            pixels = png_bytes_to_frame(payload)
            image = SourceImage(pixels=pixels)
        except SpecValidationError:
            raise
        except Exception:
            raise HTTPException(status_code=400, detail="upload is not a decodable image")
        blob = store.put_blob(payload)
        project = store.create_project(
            {
                "image_blob": blob,
                "height": image.height,
                "width": image.width,
                "specs": [],
                "camera_paths": [],
            },
            request_key=request_key,
        )
        return project

    @app.get("/projects/{project_id}")
    def get_project(project_id: str):
        return store.get_project(project_id)

    def _load_project_image(project: dict) -> SourceImage:
        return SourceImage(pixels=png_bytes_to_frame(store.get_blob(project["image_blob"])))

    def _validated_specs(project: dict, document: dict):
        specs, doc = motion_document_from_json(document)
        violations = []
        for i, sp in enumerate(specs):
            if sp.region_mask.shape != (project["height"], project["width"]):
                violations.append(f"region {i}: mask shape must match the project image")
        if violations:
            raise SpecValidationError(violations)
        return specs, doc

    @app.post("/projects/{project_id}/specs", status_code=201)
    async def save_spec(project_id: str, request: Request):
        body = await request.json()
        project = store.get_project(project_id)
        _, doc = _validated_specs(project, body.get("spec", body))
        project["specs"].append({"version": len(project["specs"]) + 1, "document": doc})
        store.update_project(project_id, project)
        return {"version": len(project["specs"])}

    @app.post("/projects/{project_id}/preview-warp")
    async def preview_warp(project_id: str, request: Request):
        body = await request.json()
        project = store.get_project(project_id)
        specs, _ = _validated_specs(project, body.get("spec", body))
        image = _load_project_image(project)
        ref = build_warped_reference(image, specs)

        def parts():
            for f in range(ref.frames.shape[0]):
                yield f"frame_{f:05d}", frame_to_png_bytes(ref.frames[f])
                yield f"mask_{f:05d}", mask_to_png_bytes(ref.mask[f])

        return StreamingResponse(
            _multipart_stream(parts()),
            media_type=f"multipart/mixed; boundary={MULTIPART_BOUNDARY}",
            headers={"X-Warp-Warnings": json.dumps(ref.warnings)},
        )

    @app.post("/projects/{project_id}/depth", status_code=201)
    async def upload_depth(project_id: str, file: UploadFile = File(...)):
        payload = await file.read()
        project = store.get_project(project_id)
        import io as _io

        import numpy as _np

        try:
            depth = _np.load(_io.BytesIO(payload))
        except Exception:
            raise HTTPException(status_code=400, detail="depth upload must be a .npy array")
        if depth.shape != (project["height"], project["width"]):
            raise SpecValidationError(["depth shape must match the project image"])
        project["depth_blob"] = store.put_blob(payload)
        store.update_project(project_id, project)
        return {"depth_blob": project["depth_blob"]}

    @app.post("/projects/{project_id}/jobs", status_code=201)
    async def submit_job(project_id: str, request: Request):
        body = await request.json()
        project = store.get_project(project_id)
        if ("spec" in body) == ("camera_path" in body):
            raise HTTPException(
                status_code=422, detail="job body needs exactly one of 'spec' or 'camera_path'"
            )
        doc = None
        if "spec" in body:
            _, doc = _validated_specs(project, body["spec"])
        elif not project.get("depth_blob"):
            raise HTTPException(
                status_code=422, detail="camera-path jobs need a depth map on the project"
            )
        sampler = body.get("sampler", {})
        for field in ("t_weak", "t_strong"):
            if field not in sampler:
                raise HTTPException(status_code=422, detail=f"sampler.{field} required")
        job = store.create_job(
            project_id,
            {
                "spec": doc,
                "camera_path": body.get("camera_path"),
                "sampler": sampler,
                "status": "queued",
                "progress": {"current_step": 0, "total": int(sampler["t_weak"])},
            },
            request_key=body.get("request_key"),
        )
        if job["status"] == "queued" and not worker.checkpoint_available():
            job = store.update_job(job["id"], status="failed",
                                   error="no denoiser checkpoint configured")
            return job
        if job["status"] == "queued":
            # safe under request-key replay: the worker skips non-queued jobs
            worker.submit(job["id"])
        return job

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        return store.get_job(job_id)

    @app.get("/jobs/{job_id}/result")
    def fetch_result(job_id: str):
        job = store.get_job(job_id)
        if job.get("status") != "done":
            return JSONResponse(
                status_code=409,
                content={"status": job.get("status"), "error": job.get("error"),
                         "detail": "result not ready"},
            )
        video = decode_video_blob(store.get_blob(job["result_ref"]))

        def parts():
            for f in range(video.shape[0]):
                yield f"frame_{f:05d}", frame_to_png_bytes(video[f])

        return StreamingResponse(
            _multipart_stream(parts()),
            media_type=f"multipart/mixed; boundary={MULTIPART_BOUNDARY}",
            headers={"X-Result-Hash": job.get("result_hash", "")},
        )

    return app
