"""Black-box segmentation predictors: built-in oracles and the HTTP adapter.

Every predictor exposes segment(image) -> Prediction plus metadata used by
the engines for concurrency limits and FLOPs accounting. Call counts are
tracked so reports can reconstruct the compute ledger.
"""

import base64
import threading
from dataclasses import dataclass
from typing import Optional

import numpy as np
import requests

from .errors import (
    DimensionMismatchError,
    ProtocolError,
    TransportError,
    ValidationError,
)
from .superpixel import LabelMap
from .types import BinaryMask, ImageGrid


@dataclass(frozen=True)
class Prediction:
    mask: BinaryMask
    score_map: Optional[np.ndarray] = None  # float in [0,1], same shape as mask

    def __post_init__(self):
        if self.score_map is not None:
            sm = np.asarray(self.score_map, dtype=np.float64)
            if sm.shape != self.mask.data.shape:
                raise DimensionMismatchError("score_map/mask shape mismatch")
            sm.flags.writeable = False
            object.__setattr__(self, "score_map", sm)


@dataclass(frozen=True)
class PredictorInfo:
    name: str
    flops_per_call: int
    deterministic: bool
    max_concurrency: int = 0  # 0 = unlimited

    def __post_init__(self):
        if self.flops_per_call < 0:
            raise ValidationError("flops_per_call must be non-negative")


class Predictor:
    """Base class: subclasses implement _segment; calls are counted."""

    def __init__(self, info: PredictorInfo):
        self._info = info
        self._calls = 0
        self._lock = threading.Lock()

    @property
    def info(self) -> PredictorInfo:
        return self._info

    @property
    def calls(self) -> int:
        with self._lock:
            return self._calls

    def reset_calls(self) -> None:
        with self._lock:
            self._calls = 0

    def segment(self, image: ImageGrid) -> Prediction:
        with self._lock:
            self._calls += 1
        return self._segment(image)

    def _segment(self, image: ImageGrid) -> Prediction:
        raise NotImplementedError


class RegionOracle(Predictor):
    """Predicts its support region iff enough support pixels keep their
    original intensity; pixels outside the support never influence output.

    The reference image is captured from the first segment() call when not
    supplied, which in every engine is the unperturbed baseline.
    """

    def __init__(self, support: BinaryMask, sensitivity: float = 0.5,
                 reference: Optional[ImageGrid] = None, flops_per_call: int = 1_000_000):
        super().__init__(PredictorInfo("region-oracle", flops_per_call, True, 0))
        self.support = support
        self.sensitivity = float(sensitivity)
        self._reference = None if reference is None else np.array(reference.data)
        self._ref_lock = threading.Lock()

    def _segment(self, image: ImageGrid) -> Prediction:
        if (image.height, image.width) != (self.support.height, self.support.width):
            raise DimensionMismatchError("image does not match oracle support size")
        with self._ref_lock:
            if self._reference is None:
                self._reference = np.array(image.data)
        sel = self.support.data == 1
        total = int(sel.sum())
        if total == 0:
            return Prediction(BinaryMask(np.zeros_like(self.support.data)))
        retained = int((image.data[sel] == self._reference[sel]).sum()) / total
        if retained >= self.sensitivity:
            return Prediction(self.support)
        return Prediction(BinaryMask(np.zeros_like(self.support.data)))


class LinearOracle(Predictor):
    """Score is a clamped linear function of per-region mean intensity.

    Regions come from a LabelMap (labels 1..k); region j contributes
    weights[j-1] * mean(intensity/255 over region j). Used as ground truth
    for surrogate-recovery tests.
    """

    def __init__(self, weights, labels: LabelMap, bias: float = 0.0,
                 flops_per_call: int = 1_000_000):
        super().__init__(PredictorInfo("linear-oracle", flops_per_call, True, 0))
        self.weights = np.asarray(weights, dtype=np.float64)
        self.labels = labels
        self.bias = float(bias)
        if self.weights.size != labels.n_labels:
            raise DimensionMismatchError("one weight per positive label required")

    def score(self, image: ImageGrid) -> float:
        lab = self.labels.labels
        total = self.bias
        intensity = image.data.astype(np.float64) / 255.0
        for j in range(1, self.labels.n_labels + 1):
            sel = lab == j
            total += self.weights[j - 1] * float(intensity[sel].mean())
        return float(np.clip(total, 0.0, 1.0))

    def _segment(self, image: ImageGrid) -> Prediction:
        s = self.score(image)
        score_map = np.full(image.data.shape[:2], s, dtype=np.float64)
        mask = BinaryMask((score_map >= 0.5).astype(np.uint8))
        return Prediction(mask, score_map)


def encode_image_payload(image: ImageGrid) -> dict:
    if image.is_float:
        raise ValidationError("wire protocol carries 8-bit images only")
    return {
        "width": image.width,
        "height": image.height,
        "channels": image.channels,
        "dtype": "u8",
        "pixels": base64.b64encode(image.data.tobytes()).decode("ascii"),
    }


class HttpPredictor(Predictor):
    """Adapter for the JSON-over-HTTP wire protocol (protocol_version 1)."""

    def __init__(self, endpoint: str, timeout: float = 30.0):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        doc = self._get_info()
        try:
            if doc["protocol_version"] != 1:
                raise ProtocolError(
                    f"unsupported protocol_version {doc['protocol_version']}"
                )
            info = PredictorInfo(
                name=doc["name"],
                flops_per_call=int(doc["flops_per_call"]),
                deterministic=bool(doc["deterministic"]),
                max_concurrency=int(doc["max_concurrency"]),
            )
            self.input_width = int(doc["input_width"])
            self.input_height = int(doc["input_height"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed /info response: {exc}") from exc
        super().__init__(info)

    def _get_info(self) -> dict:
        try:
            resp = requests.get(f"{self.endpoint}/info", timeout=self.timeout)
            resp.raise_for_status()
            return resp.json()
        except requests.RequestException as exc:
            raise TransportError(f"handshake with {self.endpoint} failed: {exc}") from exc
        except ValueError as exc:
            raise ProtocolError(f"non-JSON /info response: {exc}") from exc

    def _segment(self, image: ImageGrid) -> Prediction:
        if (image.width, image.height) != (self.input_width, self.input_height):
            raise DimensionMismatchError(
                f"predictor expects {self.input_width}x{self.input_height}, "
                f"got {image.width}x{image.height}"
            )
        try:
            resp = requests.post(
                f"{self.endpoint}/segment",
                json=encode_image_payload(image),
                timeout=self.timeout,
            )
            resp.raise_for_status()
            doc = resp.json()
        except requests.RequestException as exc:
            raise TransportError(f"segment call failed: {exc}") from exc
        except ValueError as exc:
            raise ProtocolError(f"non-JSON /segment response: {exc}") from exc
        try:
            raw = base64.b64decode(doc["mask"], validate=True)
            mask = np.frombuffer(raw, dtype=np.uint8)
            mask = mask.reshape(image.height, image.width)
            score_map = None
            if doc.get("score_map") is not None:
                sm = base64.b64decode(doc["score_map"], validate=True)
                score_map = np.frombuffer(sm, dtype="<f4").astype(np.float64)
                score_map = score_map.reshape(image.height, image.width)
            return Prediction(BinaryMask(mask), score_map)
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed /segment response: {exc}") from exc


def external_adapter(endpoint: str, timeout: float = 30.0) -> HttpPredictor:
    return HttpPredictor(endpoint, timeout=timeout)
