"""File formats: PNG/PGM images and masks, 16-bit PGM label maps, importance maps.

Raw importance files carry a 12-byte header (magic b"IMF1", width u32 LE,
height u32 LE) followed by row-major little-endian float32 values.
"""

import struct

import numpy as np
from PIL import Image

from .errors import ValidationError
from .superpixel import LabelMap
from .types import BinaryMask, ImageGrid

IMPORTANCE_MAGIC = b"IMF1"


def load_image(path) -> ImageGrid:
    with Image.open(path) as im:
        if im.mode in ("L", "I;16"):
            arr = np.asarray(im.convert("L"), dtype=np.uint8)
        else:
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return ImageGrid(arr)


def save_image(image: ImageGrid, path) -> None:
    if image.is_float:
        raise ValidationError("only 8-bit images can be saved")
    Image.fromarray(image.data).save(path)


def load_mask(path) -> BinaryMask:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.uint8)
    return BinaryMask((arr > 0).astype(np.uint8))


def save_mask(mask: BinaryMask, path) -> None:
    Image.fromarray(mask.data * np.uint8(255)).save(path)


def save_labelmap_pgm16(labels: LabelMap, path) -> None:
    """16-bit binary PGM (P5, maxval 65535) for debugging label maps."""
    if labels.labels.max() > 65535:
        raise ValidationError("label map exceeds 16-bit range")
    data = labels.labels.astype(">u2")
    header = f"P5\n{labels.width} {labels.height}\n65535\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())


def load_labelmap_pgm16(path) -> LabelMap:
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValidationError("not a binary PGM file")
    w, h = (int(t) for t in parts[1].split())
    arr = np.frombuffer(parts[3], dtype=">u2", count=w * h).reshape(h, w)
    return LabelMap(arr.astype(np.int32))


def save_importance_raw(values: np.ndarray, path) -> None:
    values = np.asarray(values, dtype=np.float32)
    h, w = values.shape
    with open(path, "wb") as fh:
        fh.write(IMPORTANCE_MAGIC)
        fh.write(struct.pack("<II", w, h))
        fh.write(values.astype("<f4").tobytes())


def load_importance(path) -> np.ndarray:
    """Importance map as float64: raw f32 file, or grayscale PNG scaled by 1/255."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == IMPORTANCE_MAGIC:
        with open(path, "rb") as fh:
            fh.read(4)
            w, h = struct.unpack("<II", fh.read(8))
            values = np.frombuffer(fh.read(4 * w * h), dtype="<f4")
        if values.size != w * h:
            raise ValidationError("truncated importance file")
        return values.reshape(h, w).astype(np.float64)
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float64)
    return arr / 255.0
