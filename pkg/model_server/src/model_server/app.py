"""HTTP host for the segmentation predictor wire protocol (version 1).

GET /info describes the hosted model; POST /segment accepts a base64 u8
raster and returns a binary mask plus an optional float32 score map, both
base64-encoded. The built-in dummy model thresholds pixel intensity, which
is enough to exercise a perturbation-explainability client end to end; a
real model plugs in as a callable taking the decoded image array.

Malformed /segment bodies yield HTTP 400 with an {"error": ...} JSON body.
"""

import base64
import binascii
from typing import Callable, Optional, Tuple

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

PROTOCOL_VERSION = 1

# model callable: (h, w) or (h, w, 3) uint8 array ->
# (mask uint8 (h, w), score_map float array (h, w) or None)
ModelFn = Callable[[np.ndarray], Tuple[np.ndarray, Optional[np.ndarray]]]


def dummy_model(threshold: int) -> ModelFn:
    """Pure-threshold segmenter: foreground where intensity >= threshold."""

    def run(image: np.ndarray):
        if image.ndim == 3:
            intensity = image.mean(axis=2)
        else:
            intensity = image.astype(np.float64)
        mask = (intensity >= threshold).astype(np.uint8)
        return mask, intensity / 255.0

    return run


def _bad_request(message: str) -> JSONResponse:
    return JSONResponse(status_code=400, content={"error": message})


def create_app(model: Optional[ModelFn] = None, name: str = "dummy",
               threshold: int = 10, input_width: int = 224,
               input_height: int = 224, flops_per_call: int = 1_000_000,
               deterministic: bool = True, max_concurrency: int = 4) -> FastAPI:
    app = FastAPI(title="xaiclip-model-server")
    model_fn = model if model is not None else dummy_model(threshold)
    info = {
        "protocol_version": PROTOCOL_VERSION,
        "name": name,
        "flops_per_call": flops_per_call,
        "deterministic": deterministic,
        "max_concurrency": max_concurrency,
        "input_width": input_width,
        "input_height": input_height,
    }

    @app.get("/info")
    def get_info():
        return info

    @app.post("/segment")
    async def segment(request: Request):
        try:
            doc = await request.json()
        except Exception:
            return _bad_request("body is not valid JSON")
        if not isinstance(doc, dict):
            return _bad_request("body must be a JSON object")
        for key in ("width", "height", "channels", "dtype", "pixels"):
            if key not in doc:
                return _bad_request(f"missing field {key!r}")
        if doc["dtype"] != "u8":
            return _bad_request("dtype must be 'u8'")
        try:
            width = int(doc["width"])
            height = int(doc["height"])
            channels = int(doc["channels"])
        except (TypeError, ValueError):
            return _bad_request("width/height/channels must be integers")
        if channels not in (1, 3):
            return _bad_request("channels must be 1 or 3")
        if (width, height) != (input_width, input_height):
            return _bad_request(
                f"model expects {input_width}x{input_height}, "
                f"got {width}x{height}")
        try:
            raw = base64.b64decode(doc["pixels"], validate=True)
        except (TypeError, binascii.Error):
            return _bad_request("pixels is not valid base64")
        if len(raw) != width * height * channels:
            return _bad_request("pixel payload length mismatch")

        image = np.frombuffer(raw, dtype=np.uint8)
        image = image.reshape((height, width) if channels == 1
                              else (height, width, channels))
        mask, score_map = model_fn(image)
        mask = np.ascontiguousarray(mask, dtype=np.uint8)
        body = {"mask": base64.b64encode(mask.tobytes()).decode("ascii")}
        if score_map is None:
            body["score_map"] = None
        else:
            sm = np.ascontiguousarray(score_map, dtype="<f4")
            body["score_map"] = base64.b64encode(sm.tobytes()).decode("ascii")
        return body

    return app
