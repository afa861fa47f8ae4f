"""HTTP face of the review service.

Thin JSON endpoints over SessionStore; all state lives on disk through the
store, so any number of workers can serve reads while verdict writes
serialize through the per-log lock.
"""
from __future__ import annotations

import io
from pathlib import Path

import cv2
import numpy as np
from fastapi import FastAPI, HTTPException, Query, Response
from fastapi.middleware.cors import CORSMiddleware

from .detector import DEFAULT_TAU
from .review import (
    PendingVerdictsError,
    SessionStore,
    Verdict,
    VerdictError,
    apply_fix_tool,
    category_report,
    format_report_table,
    write_cleaned_manifest,
)


def _png_bytes(img: np.ndarray) -> bytes:
    ok, buf = cv2.imencode(".png", img)
    if not ok:
        raise RuntimeError("PNG encoding failed")
    return bytes(buf.tobytes())


def create_app(store: SessionStore) -> FastAPI:
    app = FastAPI(title="cerhv review service")
    # the browser client is served as a static page, not by this process
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    def _session(session_id: str):
        try:
            return store.get(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")

    @app.post("/sessions")
    def create_session(body: dict):
        manifest = body.get("manifest")
        scores = body.get("scores")
        if not manifest or not scores:
            raise HTTPException(status_code=400, detail="manifest and scores paths required")
        tau = float(body.get("tau", DEFAULT_TAU))
        try:
            session = store.create(manifest, scores, tau=tau)
        except FileNotFoundError as exc:
            raise HTTPException(status_code=404, detail=f"missing file: {exc}")
        except (ValueError, KeyError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"session_id": session.session_id, "pending": len(session.pending())}

    @app.get("/sessions/{session_id}/next")
    def next_pending(session_id: str):
        session = _session(session_id)
        pending = session.pending()
        if not pending:
            return {"done": True, "remaining": 0}
        return session.bundle(pending[0])

    @app.get("/sessions/{session_id}/samples")
    def list_samples(
        session_id: str,
        status: str = Query("pending"),
        offset: int = Query(0, ge=0),
        limit: int = Query(50, ge=1, le=500),
    ):
        session = _session(session_id)
        if status not in ("pending", "done"):
            raise HTTPException(status_code=400, detail="status must be pending or done")
        eff = session.log.effective()
        if status == "pending":
            rows = [session.bundle(s) for s in session.pending()]
        else:
            rows = []
            for s in session.flagged:
                v = eff.get(s.sample_id)
                if v is None:
                    continue
                row = session.bundle(s)
                row["verdict"] = {"category": v.category, "action": v.action}
                rows.append(row)
        return {
            "total": len(rows),
            "offset": offset,
            "items": rows[offset: offset + limit],
        }

    @app.get("/images/{sample_id}")
    def image(sample_id: str, corrected: int = Query(0)):
        found = store.find_sample(sample_id)
        if found is None:
            raise HTTPException(status_code=404, detail=f"unknown sample {sample_id}")
        session, _ = found
        if corrected:
            v = session.log.effective().get(sample_id)
            if v is None or not v.corrected_image:
                raise HTTPException(status_code=404, detail="no corrected image")
            path = session.manifest.base_dir / v.corrected_image
            img = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
            if img is None:
                raise HTTPException(status_code=404, detail="corrected image unreadable")
        else:
            try:
                img = session.manifest.read_image(sample_id)
            except FileNotFoundError:
                raise HTTPException(status_code=404, detail="image file missing")
        return Response(content=_png_bytes(img), media_type="image/png")

    @app.post("/sessions/{session_id}/verdicts")
    def submit_verdict(session_id: str, body: dict):
        session = _session(session_id)
        sample_id = body.get("sample_id")
        if not sample_id:
            raise HTTPException(status_code=400, detail="sample_id required")
        corrected_image = body.get("corrected_image")
        fix = body.get("fix")
        if fix is not None:
            try:
                corrected_image = apply_fix_tool(session, sample_id, fix)
            except (KeyError, FileNotFoundError):
                raise HTTPException(status_code=404, detail=f"unknown sample {sample_id}")
            except VerdictError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
        verdict = Verdict(
            sample_id=sample_id,
            category=body.get("category", ""),
            action=body.get("action", ""),
            corrected_text=body.get("corrected_text"),
            corrected_image=corrected_image,
            reviewer=body.get("reviewer", ""),
        )
        try:
            appended = session.submit(verdict)
        except KeyError:
            raise HTTPException(
                status_code=404, detail=f"sample {sample_id} not in this session's flag set"
            )
        except VerdictError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {
            "accepted": True,
            "duplicate": not appended,
            "remaining": len(session.pending()),
        }

    @app.get("/sessions/{session_id}/report")
    def report(session_id: str):
        session = _session(session_id)
        rep = category_report(session)
        rep["table"] = format_report_table(rep)
        return rep

    @app.post("/sessions/{session_id}/cleaned-manifest")
    def cleaned_manifest(session_id: str, body: dict | None = None):
        session = _session(session_id)
        body = body or {}
        allow_partial = bool(body.get("allow_partial", False))
        out = Path(body.get("out", session.dir / "cleaned.jsonl"))
        try:
            path = write_cleaned_manifest(session, out, allow_partial=allow_partial)
        except PendingVerdictsError as exc:
            raise HTTPException(
                status_code=409,
                detail={"message": str(exc), "pending": exc.pending},
            )
        except (ValueError, VerdictError) as exc:
            # e.g. a relabel whose corrected text falls outside the
            # manifest alphabet: a data problem, not a server fault
            raise HTTPException(status_code=422, detail=str(exc))
        return {"manifest": str(path)}

    return app
