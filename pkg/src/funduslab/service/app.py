"""HTTP facade over the workspace.

JSON in, JSON out, snake_case fields; errors carry {code, message, stage}.
Handlers stay thin: all state behind the Workspace.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Header, Request, UploadFile
from fastapi.responses import FileResponse, JSONResponse

from ..errors import ConfigError, StateError
from ..feedback.records import FeedbackRecord
from .store import Workspace


def _error(status: int, code: str, message: str, stage: str) -> JSONResponse:
    return JSONResponse(
        status_code=status, content={"code": code, "message": message, "stage": stage}
    )


def create_app(workspace: Workspace, api_token: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="funduslab service")
    app.state.workspace = workspace

    @app.middleware("http")
    async def check_token(request: Request, call_next):
        if api_token is not None and request.headers.get("x-api-token") != api_token:
            return _error(401, "unauthorized", "missing or wrong api token", "auth")
        return await call_next(request)

    @app.post("/cases", status_code=201)
    async def post_case(
        file: UploadFile, x_idempotency_key: Optional[str] = Header(default=None)
    ):
        payload = await file.read()
        try:
            record = workspace.add_case(payload, idempotency_key=x_idempotency_key)
        except ValueError as exc:
            return _error(400, "bad_image", str(exc), "decode")
        return {
            "case_id": record.case_id,
            "bundle_url": f"/cases/{record.case_id}/bundle",
            "review_state": record.review_state,
        }

    @app.get("/cases")
    def list_cases():
        return {"cases": [c.to_dict() for c in workspace.cases.values()]}

    @app.get("/cases/{case_id}/bundle")
    def get_bundle(case_id: str):
        try:
            record = workspace.get_bundle_record(case_id)
        except KeyError:
            return _error(404, "unknown_case", f"no case {case_id}", "lookup")
        except Exception as exc:
            return _error(500, "bundle_failed", str(exc), "explanation")
        version = workspace.latest().version
        record["overlay_urls"] = {
            name: f"/cases/{case_id}/overlays/{name}.png"
            for name in record.get("overlays", {})
        }
        record["review_state"] = workspace.cases[case_id].review_state
        record["model_version"] = f"v{version}"
        return record

    @app.get("/cases/{case_id}/overlays/{name}.png")
    def get_overlay(case_id: str, name: str):
        if case_id not in workspace.cases:
            return _error(404, "unknown_case", f"no case {case_id}", "lookup")
        version = workspace.latest().version
        workspace.get_bundle_record(case_id)  # ensure rendered for this version
        path = workspace.bundle_dir(case_id, version) / f"{name}.png"
        if not path.exists():
            return _error(404, "unknown_overlay", f"no overlay {name}", "lookup")
        return FileResponse(path, media_type="image/png")

    @app.post("/cases/{case_id}/feedback", status_code=201)
    def post_feedback(
        case_id: str, payload: dict, x_idempotency_key: Optional[str] = Header(default=None)
    ):
        try:
            record = FeedbackRecord.from_dict({**payload, "case_id": case_id})
        except Exception as exc:
            return _error(422, "invalid_feedback", str(exc), "validate")
        try:
            stored = workspace.add_feedback(case_id, record, idempotency_key=x_idempotency_key)
        except KeyError:
            return _error(404, "unknown_case", f"no case {case_id}", "lookup")
        return {"record_id": stored.record_id, "status": stored.status}

    @app.post("/feedback/{record_id}/accept")
    def accept_feedback(record_id: str):
        try:
            record = workspace.accept_feedback(record_id)
        except KeyError:
            return _error(404, "unknown_record", f"no feedback {record_id}", "lookup")
        return {"record_id": record.record_id, "status": record.status}

    @app.get("/feedback/{record_id}/masks/{lesion}.png")
    def get_feedback_mask(record_id: str, lesion: str):
        import io as _io

        import numpy as np
        from PIL import Image

        if record_id not in workspace.feedback:
            return _error(404, "unknown_record", f"no feedback {record_id}", "lookup")
        try:
            mask = workspace.rasterized_feedback_mask(record_id, lesion)
        except Exception as exc:
            return _error(422, "rasterize_failed", str(exc), "rasterize")
        buf = _io.BytesIO()
        Image.fromarray((mask * 255).astype(np.uint8), mode="L").save(buf, format="PNG")
        from fastapi.responses import Response

        return Response(content=buf.getvalue(), media_type="image/png")

    @app.post("/jobs/finetune", status_code=202)
    def post_finetune(
        payload: dict, x_idempotency_key: Optional[str] = Header(default=None)
    ):
        kind = payload.get("kind", "")
        try:
            job = workspace.submit_finetune(
                kind, params=payload.get("params"), idempotency_key=x_idempotency_key
            )
        except ConfigError as exc:
            return _error(422, "invalid_job", str(exc), "validate")
        except StateError as exc:
            return _error(409, "lineage_busy", str(exc), "queue")
        return job.to_dict()

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        job = workspace.jobs.get(job_id)
        if job is None:
            return _error(404, "unknown_job", f"no job {job_id}", "lookup")
        return job.to_dict()

    @app.get("/models")
    def get_models():
        return {"models": [e.to_dict() for e in workspace.registry]}

    return app


def serve(workspace_root: str | Path, config, system=None, host: str = "127.0.0.1",
          port: int = 8000, api_token: Optional[str] = None) -> None:
    import uvicorn

    workspace = Workspace(workspace_root, config, system=system)
    app = create_app(workspace, api_token=api_token)
    uvicorn.run(app, host=host, port=port)
