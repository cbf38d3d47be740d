"""Image, calibration and disparity-map I/O.

Images are plain numpy arrays: RGB images are ``(H, W, 3)`` uint8, grayscale
planes are ``(H, W)`` float32 and disparity maps are ``(H, W)`` float32 with
``+inf`` marking invalid pixels (the Middlebury convention).
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

INVALID = np.float32(np.inf)

# Rec.601 luma weights.
_LUMA = np.array([0.299, 0.587, 0.114])


class ImageIOError(ValueError):
    """Raised for unreadable or malformed input files."""


@dataclass(frozen=True)
class CalibInfo:
    ndisp: int
    width: int | None = None
    height: int | None = None

    def levels(self, scale: int = 1) -> int:
        """Number of disparity levels after downsampling by ``scale``."""
        return effective_levels(self.ndisp, scale)


def effective_levels(ndisp: int, scale: int = 1) -> int:
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    return max(2, math.ceil(ndisp / scale))


def read_image(path) -> np.ndarray:
    """Decode an 8-bit PNG or binary PPM into an ``(H, W, 3)`` uint8 array.

    Grayscale and palette images are expanded to three channels; alpha is
    dropped. 16-bit and float images are rejected.
    """
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("I", "I;16", "I;16B", "I;16L", "F") or mode.startswith("I;"):
                raise ImageIOError(f"{path}: unsupported bit depth (mode {mode})")
            if mode not in ("RGB", "L", "P", "RGBA", "LA", "1"):
                raise ImageIOError(f"{path}: unsupported image mode {mode}")
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except ImageIOError:
        raise
    except FileNotFoundError as exc:
        raise ImageIOError(f"{path}: no such file") from exc
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise ImageIOError(f"{path}: cannot decode image ({exc})") from exc
    return np.ascontiguousarray(arr)


def write_image(path, img: np.ndarray) -> None:
    """Write an RGB or single-channel uint8 array; format follows the suffix."""
    img = np.asarray(img)
    if img.dtype != np.uint8:
        raise ValueError(f"expected uint8 image, got {img.dtype}")
    Image.fromarray(img).save(Path(path))


def to_gray(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {img.shape}")
    return (img.astype(np.float64) @ _LUMA).astype(np.float32)


def read_pfm(path) -> np.ndarray:
    """Read a grayscale PFM; rows are returned top-to-bottom."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ImageIOError(f"{path}: cannot read ({exc})") from exc
    # header: magic, width, height, scale -- whitespace separated, single
    # whitespace byte before the payload
    m = re.match(rb"(\S+)\s+(\S+)\s+(\S+)\s+(\S+)\s", raw)
    if m is None:
        raise ImageIOError(f"{path}: truncated PFM header")
    magic = m.group(1)
    if magic == b"PF":
        raise ImageIOError(f"{path}: expected grayscale PFM, found color 'PF'")
    if magic != b"Pf":
        raise ImageIOError(f"{path}: bad PFM magic {magic!r}")
    try:
        width, height = int(m.group(2)), int(m.group(3))
        scale = float(m.group(4))
    except ValueError as exc:
        raise ImageIOError(f"{path}: malformed PFM header") from exc
    if width < 1 or height < 1 or scale == 0 or not math.isfinite(scale):
        raise ImageIOError(f"{path}: invalid PFM header values")
    payload = raw[m.end():]
    expected = width * height * 4
    if len(payload) != expected:
        raise ImageIOError(
            f"{path}: payload has {len(payload)} bytes, header implies {expected}")
    dtype = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    if np.isnan(data).any():
        raise ImageIOError(f"{path}: NaN values in PFM payload")
    return np.flipud(data).astype(np.float32)


def write_pfm(path, disp: np.ndarray, scale: float = -1.0) -> None:
    """Write a grayscale PFM, bottom row first.

    A negative ``scale`` stores little-endian floats, positive big-endian.
    """
    disp = np.asarray(disp)
    if disp.ndim != 2:
        raise ValueError(f"expected 2-D disparity map, got shape {disp.shape}")
    if scale == 0 or not math.isfinite(scale):
        raise ValueError("PFM scale must be finite and non-zero")
    data = disp.astype(np.float32)
    if np.isnan(data).any():
        raise ValueError("NaN values cannot be written; use +inf for invalid pixels")
    height, width = data.shape
    dtype = "<f4" if scale < 0 else ">f4"
    header = f"Pf\n{width} {height}\n{scale}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.flipud(data).astype(dtype).tobytes())


def parse_calib(path) -> CalibInfo:
    """Parse a Middlebury v3 ``calib.txt``; only ``ndisp`` is mandatory."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ImageIOError(f"{path}: cannot read calibration ({exc})") from exc
    values = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    if "ndisp" not in values:
        raise ImageIOError(f"{path}: missing 'ndisp' entry")

    def _int(key):
        if key not in values:
            return None
        try:
            return int(float(values[key]))
        except ValueError as exc:
            raise ImageIOError(f"{path}: bad value for {key!r}") from exc

    ndisp = _int("ndisp")
    if ndisp < 2:
        raise ImageIOError(f"{path}: ndisp must be >= 2, got {ndisp}")
    return CalibInfo(ndisp=ndisp, width=_int("width"), height=_int("height"))


def read_mask(path) -> np.ndarray:
    """Read a Middlebury mask PNG; only pixels equal to 255 are valid."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("L"))
    except (OSError, UnidentifiedImageError) as exc:
        raise ImageIOError(f"{path}: cannot decode mask ({exc})") from exc
    return arr == 255


def write_mask(path, mask: np.ndarray) -> None:
    write_image(path, np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8))


def downsample_image(img: np.ndarray, scale: int) -> np.ndarray:
    """Box-average downsampling by an integer factor.

    Partial blocks at the right/bottom border average the pixels they hold,
    so the output is ``ceil(H/s) x ceil(W/s)``.
    """
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    img = np.asarray(img)
    if scale == 1:
        return img.copy()
    h, w = img.shape[:2]
    hs, ws = -(-h // scale), -(-w // scale)
    pad = ((0, hs * scale - h), (0, ws * scale - w)) + ((0, 0),) * (img.ndim - 2)
    sums = np.pad(img.astype(np.float64), pad)
    counts = np.pad(np.ones((h, w)), pad[:2])
    shape = (hs, scale, ws, scale) + img.shape[2:]
    sums = sums.reshape(shape).sum(axis=(1, 3))
    counts = counts.reshape(hs, scale, ws, scale).sum(axis=(1, 3))
    if img.ndim == 3:
        counts = counts[..., None]
    out = sums / counts
    if img.dtype == np.uint8:
        return np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return out.astype(img.dtype)
