"""HTTP layer of the human-study service.

Participant endpoints never carry truth labels; the export endpoint is
gated by an admin token read from the CGF_ADMIN_TOKEN environment
variable and passed by the caller in the x-admin-token header.
"""

import json
import os

from fastapi import FastAPI, Header, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, JSONResponse, PlainTextResponse

from .store import (StudyStore, StudyError, StudyFullError, UnknownSessionError,
                    DuplicateAnnotationError, ValidationError)

ADMIN_TOKEN_ENV = "CGF_ADMIN_TOKEN"

_STATUS = {
    StudyFullError: 409,
    DuplicateAnnotationError: 409,
    UnknownSessionError: 404,
    ValidationError: 400,
    StudyError: 400,
}


def _error(e: StudyError):
    return JSONResponse({"error": e.code, "detail": str(e)},
                        status_code=_STATUS.get(type(e), 400))


def create_app(study_dir) -> FastAPI:
    store = StudyStore(study_dir)
    app = FastAPI(title="annotation study service", docs_url=None, redoc_url=None)
    app.state.store = store
    # the browser front-end may be served from a different origin
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["GET", "POST"], allow_headers=["*"])

    @app.exception_handler(StudyError)
    async def on_study_error(request: Request, e: StudyError):
        return _error(e)

    def check_study(study_id):
        if study_id != store.study_id:
            raise UnknownSessionError("unknown study %r" % study_id)

    @app.post("/studies/{study_id}/sessions")
    async def create_session(study_id: str, body: dict):
        check_study(study_id)
        session = store.create_session(body.get("participant", ""))
        return {"session_id": session.session_id, "participant": session.participant,
                "total": len(session.image_ids), "created_at": session.created_at}

    @app.get("/sessions/{session_id}/next")
    async def next_image(session_id: str):
        s = store.get_session(session_id)
        nxt = s.next_image()
        total = len(s.image_ids)
        if nxt is None:
            return {"done": True, "index": total, "total": total}
        image_id, index = nxt
        return {"done": False, "image_id": image_id,
                "image_url": "/images/%d" % image_id, "index": index, "total": total}

    @app.get("/images/{image_id}")
    async def image_bytes(image_id: int):
        path = store.image_path(image_id)
        ext = os.path.splitext(path)[1].lower()
        media = "image/png" if ext == ".png" else "image/jpeg"
        return FileResponse(path, media_type=media)

    @app.post("/sessions/{session_id}/annotations")
    async def submit(session_id: str, body: dict):
        ack = store.submit_annotation(
            session_id, body.get("image_id"), body.get("label"),
            body.get("boxes", []), body.get("elapsed_ms", 0))
        return ack

    @app.get("/studies/{study_id}/export")
    async def export(study_id: str, x_admin_token: str = Header(default="")):
        check_study(study_id)
        expected = os.environ.get(ADMIN_TOKEN_ENV, "")
        if not expected or x_admin_token != expected:
            return JSONResponse({"error": "forbidden",
                                 "detail": "missing or wrong x-admin-token"},
                                status_code=403)
        records = store.export_records()
        lines = [json.dumps(r, separators=(",", ":")) for r in records]
        lines.append(json.dumps({"summary": store.export_summary(records)},
                                separators=(",", ":")))
        return PlainTextResponse("\n".join(lines) + "\n",
                                 media_type="application/x-ndjson")

    return app
