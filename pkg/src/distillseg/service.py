"""HTTP service for interactive expert annotation.

Endpoints (JSON unless noted):
  POST /sessions {sample_id}                        -> 201 session info
  GET  /images/{sample_id}                          -> PNG bytes
  POST /sessions/{sid}/prompts {kind, point?, box?} -> {proposals:[{rle, predicted_iou}]}
  POST /sessions/{sid}/commit {proposal_index?|rle?, nonce} -> committed record
  GET  /progress                                    -> {annotated, budgets}

Masks cross the wire run-length encoded (see rle.py); 'raster=base64'
on the prompts call adds a base64 PNG per proposal. The annotator identity
comes from the X-Annotator header; committed records land in the append-only
annotations log, so a crash or session expiry never loses accepted masks.
"""

from __future__ import annotations

import base64
import io
import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Header, Query
from fastapi.responses import JSONResponse, Response
from PIL import Image
from pydantic import BaseModel

from . import errors
from .data import Manifest, load_image
from .encoder import EncoderGateway
from .prompts import (AnnotationLog, AnnotationRecord, MaskProposal, Prompt,
                      SIMULATOR_NAME, _now_iso)
from .rle import decode_rle, encode_rle
from .training import DEFAULT_BUDGETS

DEFAULT_SESSION_TTL = 1800.0  # seconds of idle time before a session expires


class SessionRequest(BaseModel):
    sample_id: str


class PromptRequest(BaseModel):
    kind: str
    point: tuple[float, float] | None = None
    box: tuple[float, float, float, float] | None = None
    label: str | None = None


class CommitRequest(BaseModel):
    nonce: str
    proposal_index: int | None = None
    rle: str | None = None
    mode: str = "manual_ui"


@dataclass
class Session:
    session_id: str
    sample_id: str
    created_at: str
    last_used: float
    pending: list[MaskProposal] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)


_STATUS = {
    errors.UnknownSample: 404,
    errors.UnknownSession: 404,
    errors.InvalidPrompt: 400,
    errors.InvalidRle: 400,
    errors.ShapeMismatch: 400,
    errors.NoPendingProposals: 400,
    errors.AdapterUnavailable: 503,
}


def _mask_png_b64(mask: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), "L").save(
        buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def create_app(manifest: Manifest, gateway: EncoderGateway, log: AnnotationLog,
               budgets=DEFAULT_BUDGETS, session_ttl: float = DEFAULT_SESSION_TTL,
               static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="distillseg annotation service")
    sessions: dict[str, Session] = {}
    committed_nonces: dict[tuple[str, str], dict] = {}
    log_lock = threading.Lock()

    @app.exception_handler(errors.DistillsegError)
    async def _domain_error(_request, exc: errors.DistillsegError):
        status = _STATUS.get(type(exc), 422)
        return JSONResponse(status_code=status,
                            content={"error": type(exc).__name__,
                                     "detail": str(exc)})

    def _session(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise errors.UnknownSession(session_id)
        if time.monotonic() - session.last_used > session_ttl:
            del sessions[session_id]  # pending proposals gone, log untouched
            raise errors.UnknownSession(f"{session_id} expired")
        session.last_used = time.monotonic()
        return session

    @app.post("/sessions", status_code=201)
    def open_session(req: SessionRequest):
        sample = manifest.get(req.sample_id)  # UnknownSample on miss
        gateway.encode_image(sample)  # warm the embedding cache
        session = Session(session_id=uuid.uuid4().hex,
                          sample_id=sample.id, created_at=_now_iso(),
                          last_used=time.monotonic())
        sessions[session.session_id] = session
        return {"session_id": session.session_id, "sample_id": sample.id,
                "width": sample.width, "height": sample.height,
                "created_at": session.created_at}

    @app.get("/images/{sample_id}")
    def get_image(sample_id: str):
        sample = manifest.get(sample_id)
        with open(sample.pixel_path, "rb") as fh:
            return Response(content=fh.read(), media_type="image/png")

    @app.post("/sessions/{session_id}/prompts")
    def propose(session_id: str, req: PromptRequest,
                raster: str = Query(default="rle")):
        session = _session(session_id)
        prompt = Prompt(kind=req.kind, point=req.point, box=req.box,
                        label=req.label)
        sample = manifest.get(session.sample_id)
        proposals = gateway.predict_masks(sample, prompt)
        proposals.sort(key=lambda p: -p.predicted_iou)
        with session.lock:
            session.pending = proposals
        body = []
        for p in proposals:
            entry = {"rle": encode_rle(p.mask),
                     "predicted_iou": p.predicted_iou}
            if raster == "base64":
                entry["png_base64"] = _mask_png_b64(p.mask)
            body.append(entry)
        return {"proposals": body}

    @app.post("/sessions/{session_id}/commit")
    def commit(session_id: str, req: CommitRequest,
               x_annotator: str = Header(default="expert")):
        session = _session(session_id)
        sample = manifest.get(session.sample_id)
        key = (session_id, req.nonce)
        if key in committed_nonces:
            return committed_nonces[key]
        with session.lock:
            if req.rle is not None:
                # expert replaced the proposal with an explicit mask
                mask = decode_rle(req.rle)
                prompts = [p.source_prompt for p in session.pending[:1]]
                score = 0.0
            else:
                if not session.pending:
                    raise errors.NoPendingProposals(session_id)
                index = req.proposal_index if req.proposal_index is not None else 0
                if not 0 <= index < len(session.pending):
                    raise errors.NoPendingProposals(
                        f"proposal index {index} out of range")
                chosen = session.pending[index]
                mask = chosen.mask
                prompts = [chosen.source_prompt]
                score = chosen.predicted_iou
            if mask.shape != (sample.height, sample.width):
                raise errors.ShapeMismatch(
                    f"mask {mask.shape} vs image "
                    f"{(sample.height, sample.width)}")
            if req.mode == "manual_ui" and x_annotator == SIMULATOR_NAME:
                raise errors.InvalidPrompt(
                    "manual_ui commits cannot claim the simulator identity")
            record = AnnotationRecord(
                sample_id=sample.id, mask=mask, prompts=prompts,
                mode=req.mode, predicted_iou=score, annotator=x_annotator,
                created_at=_now_iso())
        with log_lock:
            log.append(record)
        body = {"sample_id": record.sample_id, "mode": record.mode,
                "annotator": record.annotator, "created_at": record.created_at,
                "rle": encode_rle(record.mask), "nonce": req.nonce}
        committed_nonces[key] = body
        return body

    @app.get("/progress")
    def progress():
        return log.progress(list(budgets))

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles
        app.mount("/ui", StaticFiles(directory=static_dir, html=True),
                  name="ui")

    return app
