"""PNG reading/writing for RGBA rasters and binary masks."""
from __future__ import annotations

import base64
import io
from pathlib import Path

import numpy as np
from PIL import Image

from .exceptions import StructuralError


def read_rgba(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGBA"), dtype=np.uint8).copy()


def write_rgba(path, pixels) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(pixels, dtype=np.uint8), mode="RGBA").save(path, format="PNG")


def read_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode in ("RGBA", "LA"):
            return np.asarray(im.getchannel("A")) > 0
        return np.asarray(im.convert("L")) > 0


def write_mask(path, bits) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(bits, dtype=np.uint8) * 255, mode="L").save(path, format="PNG")


def encode_png(pixels) -> bytes:
    arr = np.asarray(pixels, dtype=np.uint8)
    if arr.ndim == 2:
        im = Image.fromarray(arr, mode="L")
    elif arr.ndim == 3 and arr.shape[2] == 4:
        im = Image.fromarray(arr, mode="RGBA")
    else:
        raise StructuralError(f"cannot encode array of shape {arr.shape} as PNG")
    buf = io.BytesIO()
    im.save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("RGBA"), dtype=np.uint8).copy()


def png_data_url(pixels) -> str:
    return "data:image/png;base64," + base64.b64encode(encode_png(pixels)).decode("ascii")
