"""Local HTTP service for scripts and the companion UI.

Endpoints: /preview (pure, synchronous step-k target masks), /masks/encode
(authoritative mask PNG encoding), /jobs (enqueue a drag run; progress
polled via GET), /eval (metric rows), /intent (proxy to the intent
client). State is a single in-memory job table; restarting the service
loses jobs.
"""

from __future__ import annotations

import base64
import io
import os
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from typing import Literal, Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from PIL import Image
from pydantic import BaseModel, Field, field_validator

from .benchio import TASK_LABELS
from .engine import (
    DragConfig,
    latent_from_bytes,
    latent_to_bytes,
    run_drag,
)
from .flow import LatentField
from .geometry import Mask2D, Point2, centroid, mask_iou
from .intent import (
    IntentClientConfig,
    IntentConfigError,
    IntentParseError,
    IntentRequest,
    IntentServiceError,
    IntentTimeout,
    build_prompt,
    request_intent,
)
from .metrics import MadDistance, SsimDistance, evaluate
from .region import build_gradient_mask
from .schedule import RegionOp, target_mask_at
from .suite import ring_blob_latent


# --- wire models ------------------------------------------------------------


class RegionOpModel(BaseModel):
    task: str
    target: tuple[float, float]
    anchor: Optional[tuple[float, float]] = None
    mask_png_b64: Optional[str] = None
    mask_bits: Optional[list[list[int]]] = None

    @field_validator("task")
    @classmethod
    def _known_task(cls, v: str) -> str:
        if v not in TASK_LABELS:
            raise ValueError(f"unknown task {v!r}; expected one of {sorted(TASK_LABELS)}")
        return v

    def to_mask(self) -> Mask2D:
        if self.mask_png_b64 is not None:
            img = Image.open(io.BytesIO(base64.b64decode(self.mask_png_b64))).convert("L")
            return Mask2D(np.asarray(img) >= 128)
        if self.mask_bits is not None:
            return Mask2D(np.asarray(self.mask_bits, dtype=bool))
        raise ValueError("op needs mask_png_b64 or mask_bits")

    def to_op(self) -> RegionOp:
        return RegionOp(
            kind=TASK_LABELS[self.task],
            source_mask=self.to_mask(),
            target=Point2(*self.target),
            anchor=Point2(*self.anchor) if self.anchor is not None else None,
        )


class PreviewRequest(BaseModel):
    ops: list[RegionOpModel] = Field(min_length=1)
    k: int = Field(ge=0)
    big_k: int = Field(default=50, ge=1, alias="K")

    model_config = {"populate_by_name": True}


class MaskEncodeRequest(BaseModel):
    bits: list[list[int]]


class JobRequest(BaseModel):
    ops: list[RegionOpModel] = Field(min_length=1)
    config: dict = Field(default_factory=dict)
    latent_b64: Optional[str] = None
    synthetic: Optional[dict] = None


class EvalRequest(BaseModel):
    x_b64: str
    edited_b64: str
    ops: list[RegionOpModel] = Field(min_length=1)
    big_k: int = Field(default=50, ge=1, alias="K")
    patch_radius: int = 3
    scope_radius: int = 5
    distance: Literal["ssim", "mad"] = "ssim"

    model_config = {"populate_by_name": True}


class IntentProxyRequest(BaseModel):
    endpoint_url: str
    model: str = "gpt-4o"
    api_key_env: str = "DRAGKIT_INTENT_API_KEY"
    original_png_b64: str
    overlay_png_b64: str
    sample_meta: Optional[dict] = None
    timeout_s: float = 30.0


# --- job table ---------------------------------------------------------------


class Job:
    def __init__(self, job_id: str, config: DragConfig):
        self.id = job_id
        self.status = "queued"  # queued -> running -> done | failed
        self.config = config
        self.progress = 0.0
        self.loss_trajectory: list[float] = []
        self.centroid_trajectory: list[list[tuple[float, float]]] = []
        self.result_b64: Optional[str] = None
        self.error: Optional[str] = None
        self.cancel_requested = False


class JobCancelled(RuntimeError):
    pass


def _mask_png_b64(mask: Mask2D) -> str:
    img = Image.fromarray(mask.bits.astype(np.uint8) * 255, mode="L")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _synthetic_latent(ops: list[RegionOp], spec: dict) -> LatentField:
    """Ring-textured blobs placed at each op's source centroid."""
    width = int(spec.get("width", ops[0].source_mask.width))
    height = int(spec.get("height", ops[0].source_mask.height))
    channels = int(spec.get("channels", 2))
    seed = int(spec.get("seed", 0))
    total = np.zeros((channels, height, width))
    for i, op in enumerate(ops):
        c = centroid(op.source_mask)
        blob = ring_blob_latent(
            c.x,
            c.y,
            seed + i,
            width=width,
            height=height,
            channels=channels,
            env_sigma=float(spec.get("env_sigma", 3.5)),
            period=float(spec.get("period", 4.0)),
            contrast=float(spec.get("contrast", 0.6)),
        )
        total = total + blob.data
    return LatentField(total)


def create_app(ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="dragkit service")
    jobs: dict[str, Job] = {}
    jobs_lock = threading.Lock()
    pool = ThreadPoolExecutor(max_workers=os.cpu_count())

    @app.exception_handler(RequestValidationError)
    async def _schema_violation(request, exc: RequestValidationError):
        # schema violations answer 400 and name the offending field paths
        paths = [
            {"path": ".".join(str(p) for p in err.get("loc", [])), "message": err.get("msg", "")}
            for err in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"detail": paths})

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    @app.post("/preview")
    def preview(req: PreviewRequest):
        frames = []
        for i, opm in enumerate(req.ops):
            try:
                op = opm.to_op()
            except ValueError as e:
                raise HTTPException(status_code=400, detail=f"ops.{i}: {e}") from e
            mask = target_mask_at(op, req.k, req.big_k)
            c = centroid(mask) if mask.count else Point2(float("nan"), float("nan"))
            frames.append(
                {
                    "index": i,
                    "bits": mask.bits.astype(int).tolist(),
                    "png_b64": _mask_png_b64(mask),
                    "centroid": [c.x, c.y],
                    "source_bits": op.source_mask.bits.astype(int).tolist(),
                }
            )
        return {"k": req.k, "K": req.big_k, "masks": frames}

    @app.post("/masks/encode")
    def encode_mask(req: MaskEncodeRequest):
        try:
            mask = Mask2D(np.asarray(req.bits, dtype=bool))
        except ValueError as e:
            raise HTTPException(status_code=400, detail=f"bits: {e}") from e
        echoed = Mask2D(
            np.asarray(
                Image.open(
                    io.BytesIO(base64.b64decode(_mask_png_b64(mask)))
                ).convert("L")
            )
            >= 128
        )
        return {
            "png_b64": _mask_png_b64(mask),
            "roundtrip_iou": mask_iou(mask, echoed),
        }

    def _run_job(job: Job, z0: LatentField, ops: list[RegionOp]):
        with jobs_lock:
            if job.cancel_requested:
                job.status = "failed"
                job.error = "cancelled"
                return
            job.status = "running"
        total = job.config.total_steps

        def on_step(k: int, loss: float, cents: list[Point2]):
            with jobs_lock:
                if job.cancel_requested:
                    raise JobCancelled()
                job.progress = (k + 1) / total
                job.loss_trajectory.append(loss)
                job.centroid_trajectory.append([(c.x, c.y) for c in cents])

        try:
            result = run_drag(z0, ops, job.config, on_step=on_step)
        except JobCancelled:
            with jobs_lock:
                job.status = "failed"
                job.error = "cancelled"
            return
        except Exception as e:  # engine diagnostics surface in the record
            with jobs_lock:
                job.status = "failed"
                job.error = str(e)
            return
        with jobs_lock:
            job.result_b64 = base64.b64encode(latent_to_bytes(result.final_z)).decode()
            job.status = "done"
            job.progress = 1.0

    @app.post("/jobs")
    def submit_job(req: JobRequest):
        try:
            config = DragConfig(**req.config)
        except (TypeError, ValueError) as e:
            raise HTTPException(status_code=400, detail=f"config: {e}") from e
        try:
            ops = [opm.to_op() for opm in req.ops]
        except ValueError as e:
            raise HTTPException(status_code=400, detail=f"ops: {e}") from e
        if req.latent_b64 is not None:
            try:
                z0 = latent_from_bytes(base64.b64decode(req.latent_b64))
            except Exception as e:
                raise HTTPException(status_code=400, detail=f"latent_b64: {e}") from e
        elif req.synthetic is not None:
            z0 = _synthetic_latent(ops, req.synthetic)
        else:
            raise HTTPException(
                status_code=400, detail="need latent_b64 or synthetic"
            )
        job = Job(uuid.uuid4().hex[:12], config)
        with jobs_lock:
            jobs[job.id] = job
        pool.submit(_run_job, job, z0, ops)
        return {"id": job.id}

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        with jobs_lock:
            job = jobs.get(job_id)
            if job is None:
                raise HTTPException(status_code=404, detail=f"no job {job_id}")
            body = {
                "id": job.id,
                "status": job.status,
                "progress": job.progress,
                "config": job.config.__dict__,
                "loss_trajectory": list(job.loss_trajectory),
                "centroid_trajectory": [list(c) for c in job.centroid_trajectory],
                "error": job.error,
            }
            if job.status == "done":
                body["final_latent_b64"] = job.result_b64
        return body

    @app.post("/jobs/{job_id}/cancel")
    def cancel_job(job_id: str):
        with jobs_lock:
            job = jobs.get(job_id)
            if job is None:
                raise HTTPException(status_code=404, detail=f"no job {job_id}")
            if job.status in ("done", "failed"):
                raise HTTPException(
                    status_code=409, detail=f"job already {job.status}"
                )
            job.cancel_requested = True
        return {"id": job_id, "cancelling": True}

    @app.post("/eval")
    def run_eval(req: EvalRequest):
        try:
            x = latent_from_bytes(base64.b64decode(req.x_b64))
            edited = latent_from_bytes(base64.b64decode(req.edited_b64))
            ops = [opm.to_op() for opm in req.ops]
        except Exception as e:
            raise HTTPException(status_code=400, detail=str(e)) from e
        editable = build_gradient_mask(
            ops, x.width, x.height, req.big_k
        ).mask
        distance = SsimDistance() if req.distance == "ssim" else MadDistance()
        try:
            report = evaluate(
                x.data,
                edited.data,
                ops,
                editable,
                req.big_k,
                patch_radius=req.patch_radius,
                scope_radius=req.scope_radius,
                distance=distance,
            )
        except ValueError as e:
            raise HTTPException(status_code=400, detail=str(e)) from e
        return {
            "if_bg": report.if_bg,
            "if_s2t": report.if_s2t,
            "if_s2s": report.if_s2s,
            "md1": report.md1,
            "md2": report.md2,
            "distance": report.distance_label,
            "variant": report.variant,
            "table": report.to_table(),
        }

    @app.post("/intent")
    def intent_proxy(req: IntentProxyRequest):
        config = IntentClientConfig(
            endpoint_url=req.endpoint_url,
            model=req.model,
            api_key_env=req.api_key_env,
            timeout_s=req.timeout_s,
        )
        request = IntentRequest(
            original_image=base64.b64decode(req.original_png_b64),
            overlay_image=base64.b64decode(req.overlay_png_b64),
            prompt=build_prompt(req.sample_meta),
        )
        try:
            result = request_intent(config, request)
        except IntentConfigError as e:
            raise HTTPException(status_code=400, detail=str(e)) from e
        except IntentTimeout as e:
            raise HTTPException(status_code=504, detail=str(e)) from e
        except IntentServiceError as e:
            raise HTTPException(status_code=502, detail=str(e)) from e
        except IntentParseError as e:
            raise HTTPException(status_code=422, detail=str(e)) from e
        return {
            "label": result.label.value,
            "candidates": list(result.candidates),
            "chosen_index": result.chosen_index,
            "truncated": list(result.truncated),
        }

    return app


app = create_app()
