"""HTTP service exposing harmonization to the UI and scripts.

JSON bodies carry base64-encoded PNGs (16 MB cap). The service holds one
immutable loaded model; request handling never mutates it.
"""

from __future__ import annotations

import base64
import binascii
import io
import time

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from PIL import Image as PILImage
from pydantic import BaseModel

from .harmonizer import HarmonizerModel, harmonize, load_checkpoint
from .imagecore import BBox, ImageError, composite_paste

MAX_BODY_BYTES = 16 * 1024 * 1024


class ApiError(Exception):
    def __init__(self, status: int, error: str, detail: str):
        self.status = status
        self.error = error
        self.detail = detail


class HarmonizeRequest(BaseModel):
    background_png: str
    object_png: str
    object_mask_png: str
    bbox: list
    mode: str = "ours"


def _decode_png(b64: str, field: str, mode: str = "RGB") -> np.ndarray:
    try:
        raw = base64.b64decode(b64, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise ApiError(400, field, f"invalid base64: {exc}")
    try:
        with PILImage.open(io.BytesIO(raw)) as im:
            arr = np.asarray(im.convert(mode), dtype=np.float64) / 255.0
    except Exception as exc:
        raise ApiError(400, field, f"not a decodable image: {exc}")
    return arr


def _encode_png(arr: np.ndarray, mode: str = "RGB") -> str:
    data = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    PILImage.fromarray(data, mode=mode).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def create_app(model: HarmonizerModel | None = None,
               checkpoint_id: str | None = None) -> FastAPI:
    app = FastAPI(title="artharmony")
    app.state.model = model
    app.state.checkpoint_id = checkpoint_id

    @app.exception_handler(ApiError)
    async def api_error_handler(request, exc: ApiError):
        return JSONResponse(status_code=exc.status,
                            content={"error": exc.error, "detail": exc.detail})

    @app.middleware("http")
    async def limit_body(request: Request, call_next):
        length = request.headers.get("content-length")
        if length and int(length) > MAX_BODY_BYTES:
            return JSONResponse(status_code=413,
                                content={"error": "body", "detail": "body exceeds 16 MB"})
        return await call_next(request)

    def require_model() -> HarmonizerModel:
        if app.state.model is None:
            raise ApiError(503, "model", "no model loaded")
        return app.state.model

    @app.get("/api/health")
    def health():
        m = app.state.model
        return {
            "status": "ok" if m is not None else "no-model",
            "profile": m.profile if m is not None else None,
            "checkpoint_id": app.state.checkpoint_id,
        }

    @app.get("/api/model-info")
    def model_info():
        m = require_model()
        return {
            "profile": m.profile,
            "widths": list(m.encoder.widths),
            "parameter_count": sum(p.numel() for p in m.trainable_parameters()),
            "modes": ["ours", "bg"],
        }

    @app.post("/api/harmonize")
    def do_harmonize(req: HarmonizeRequest):
        m = require_model()
        if req.mode not in ("ours", "bg"):
            raise ApiError(400, "mode", f"unsupported mode {req.mode!r}")
        background = _decode_png(req.background_png, "background_png")
        obj = _decode_png(req.object_png, "object_png")
        obj_mask = _decode_png(req.object_mask_png, "object_mask_png", mode="L")
        if len(req.bbox) != 4:
            raise ApiError(400, "bbox", "bbox must be [x0, y0, x1, y1]")
        try:
            bbox = BBox(*(int(v) for v in req.bbox))
            composite, comp_mask = composite_paste(background, obj, obj_mask, bbox)
        except (ImageError, TypeError, ValueError) as exc:
            raise ApiError(400, "bbox", str(exc))
        t0 = time.perf_counter()
        out, _ = harmonize(m, composite, comp_mask, mode=req.mode)
        latency_ms = (time.perf_counter() - t0) * 1000.0
        return {
            "harmonized_png": _encode_png(out),
            "composite_png": _encode_png(composite),
            "latency_ms": latency_ms,
        }

    return app


def load_app(checkpoint_path: str) -> FastAPI:
    model = load_checkpoint(checkpoint_path)
    return create_app(model, checkpoint_id=str(checkpoint_path))
