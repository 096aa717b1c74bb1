"""Grayscale image values, lossless file I/O and pixel-range mappings.

A gray image is a 2-D ``uint8`` numpy array of shape ``(height, width)``.
Arrays handed out by this module are marked read-only so that covers,
stegos and purified images can be shared freely without defensive copies.

Every float-to-pixel conversion in the package goes through
:func:`round_half_away`, so BER numbers do not depend on numpy's
banker's rounding.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

GrayImage = np.ndarray


class PGMError(ValueError):
    """Base class for PGM parse failures."""


class PGMHeaderError(PGMError):
    pass


class PGMMaxvalError(PGMError):
    pass


class PGMTruncatedError(PGMError):
    pass


def as_gray(pixels) -> GrayImage:
    """Validate ``pixels`` as a gray image and return a read-only uint8 copy."""
    arr = np.asarray(pixels)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D image, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if np.issubdtype(arr.dtype, np.floating) and not np.all(np.isfinite(arr)):
            raise ValueError("image contains non-finite values")
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ValueError("intensities must lie in [0, 255]")
        if np.issubdtype(arr.dtype, np.floating) and np.any(arr != np.floor(arr)):
            raise ValueError("fractional intensities; use to_pixels() to round")
    out = np.array(arr, dtype=np.uint8, copy=True)
    out.flags.writeable = False
    return out


def round_half_away(x):
    """Round to nearest integer, ties away from zero (0.5 -> 1, -0.5 -> -1)."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def to_pixels(values) -> GrayImage:
    """Round real intensities half-away-from-zero and clamp to [0, 255]."""
    v = np.asarray(values, dtype=np.float64)
    v = np.nan_to_num(v, nan=0.0, posinf=255.0, neginf=0.0)
    return as_gray(np.clip(round_half_away(v), 0, 255))


def normalize(img: GrayImage) -> np.ndarray:
    """Map pixels onto [0, 1] by dividing by 255 (float64)."""
    return np.asarray(img, dtype=np.float64) / 255.0


def denormalize_01(values) -> GrayImage:
    """Inverse of :func:`normalize`: ``round(v * 255)``."""
    return to_pixels(np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0) * 255.0)


def denormalize_tanh(values, width: int | None = None, height: int | None = None) -> GrayImage:
    """Map tanh-range outputs in [-1, 1] to pixels: ``round((v + 1) / 2 * 255)``.

    Values outside [-1, 1] are clamped first.  ``width``/``height`` reshape a
    flat vector; a 2-D input keeps its own shape.
    """
    v = np.clip(np.asarray(values, dtype=np.float64), -1.0, 1.0)
    if width is not None and height is not None:
        v = v.reshape(height, width)
    elif v.ndim != 2:
        raise ValueError("flat input needs width and height")
    return to_pixels((v + 1.0) / 2.0 * 255.0)


def read_pgm(path) -> GrayImage:
    """Read a binary (P5) PGM with maxval 255.

    Header comments are skipped.  Raises :class:`PGMHeaderError`,
    :class:`PGMMaxvalError` or :class:`PGMTruncatedError`.
    """
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise PGMHeaderError(f"{path}: not a binary PGM (magic {data[:2]!r})")
    fields = []
    pos = 2
    n = len(data)
    while len(fields) < 3:
        start = pos
        while pos < n and (data[pos] in b" \t\r\n\v\f" or data[pos] == ord("#")):
            if data[pos] == ord("#"):
                end = data.find(b"\n", pos)
                pos = n if end < 0 else end + 1
            else:
                pos += 1
        if pos == start:
            raise PGMHeaderError(f"{path}: malformed header")
        start = pos
        while pos < n and 48 <= data[pos] <= 57:
            pos += 1
        if pos == start:
            raise PGMHeaderError(f"{path}: malformed header")
        fields.append(int(data[start:pos]))
    # a single whitespace byte separates maxval from the raster
    if pos >= n or data[pos] not in b" \t\r\n\v\f":
        raise PGMHeaderError(f"{path}: malformed header")
    pos += 1
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise PGMHeaderError(f"{path}: bad dimensions {width}x{height}")
    if maxval != 255:
        raise PGMMaxvalError(f"{path}: unsupported maxval {maxval}")
    body = data[pos:pos + width * height]
    if len(body) < width * height:
        raise PGMTruncatedError(
            f"{path}: truncated pixel data ({len(body)} of {width * height} bytes)")
    return as_gray(np.frombuffer(body, dtype=np.uint8).reshape(height, width))


def write_pgm(img: GrayImage, path) -> None:
    img = as_gray(img)
    height, width = img.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (width, height))
        fh.write(img.tobytes())


def read_png(path) -> GrayImage:
    from PIL import Image

    with Image.open(path) as im:
        if im.mode != "L":
            raise ValueError(f"{path}: expected 8-bit grayscale PNG, got mode {im.mode}")
        return as_gray(np.asarray(im))


def write_png(img: GrayImage, path) -> None:
    from PIL import Image

    Image.fromarray(np.ascontiguousarray(as_gray(img)), mode="L").save(path, format="PNG")


def read_image(path) -> GrayImage:
    """Dispatch on extension: ``.png`` via Pillow, anything else as PGM."""
    if os.fspath(path).lower().endswith(".png"):
        return read_png(path)
    return read_pgm(path)


def write_image(img: GrayImage, path) -> None:
    if os.fspath(path).lower().endswith(".png"):
        write_png(img, path)
    else:
        write_pgm(img, path)
