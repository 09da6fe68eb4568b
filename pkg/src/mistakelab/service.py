"""JSON API for the annotation workflow, plus static serving of the UI bundle."""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .annotation import (
    CORRECT_TRACE_NOTE,
    AnnotationRecord,
    AnnotationStore,
    DuplicateAnnotationError,
    UnknownTraceError,
)
from .errors import ProtocolError, ZeroVarianceError
from .model import Trace


class AnnotationBody(BaseModel):
    trace_id: str
    annotator_id: str
    verdicts: list[str]
    submitted_at: str = ""


def _trace_payload(trace: Trace) -> dict:
    return {
        "id": trace.id,
        "task": trace.task.value,
        "question": trace.question,
        "target": trace.target,
        "steps": list(trace.steps),
        "note": CORRECT_TRACE_NOTE,
    }


def create_app(store: AnnotationStore, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="mistakelab annotation service")

    @app.get("/api/next")
    def next_task(annotator: str):
        trace = store.next_task(annotator)
        if trace is None:
            return {"trace": None}
        return {"trace": _trace_payload(trace)}

    @app.get("/api/trace/{trace_id}")
    def get_trace(trace_id: str):
        try:
            return {"trace": _trace_payload(store.trace(trace_id))}
        except UnknownTraceError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.post("/api/annotations", status_code=201)
    def submit(body: AnnotationBody):
        try:
            record = AnnotationRecord(
                trace_id=body.trace_id,
                annotator_id=body.annotator_id,
                verdicts=tuple(body.verdicts),
                submitted_at=body.submitted_at,
            )
            stored = store.submit(record)
        except DuplicateAnnotationError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except (ProtocolError, UnknownTraceError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"stored": stored.to_record()}

    @app.get("/api/aggregate/{trace_id}")
    def aggregate(trace_id: str):
        try:
            result = store.aggregate(trace_id)
        except UnknownTraceError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return {
            "status": result.status,
            "mistake_index": None if result.location is None else result.location.step,
            "has_label": result.location is not None,
            "n_records": result.n_records,
            "needs_more": result.needs_more,
        }

    @app.get("/api/alpha")
    def alpha():
        try:
            return {"alpha": store.alpha()}
        except ZeroVarianceError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except Exception as exc:  # not enough data
            raise HTTPException(status_code=409, detail=str(exc))

    if ui_dir is not None and Path(ui_dir).exists():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app
