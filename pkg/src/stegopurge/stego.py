"""Payload embedding and extraction.

Two embedders live here:

* LSB replacement with a fixed wire format: a 32-bit big-endian byte count
  followed by the payload, MSB-first within each byte, written into the
  least-significant bits of the pixels in row-major order.
* A texture-adaptive +/-1 simulator used in place of HUGO/HILL/S-UNIWARD/WOW.
  Pixels are chosen with weight ``local_var + 1`` (3x3 window), so changes
  concentrate in busy regions while the number of changed pixels matches
  ``rate / 2`` of the image, the expected change rate of a +/-1 embedder
  at ``rate`` bits per pixel.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imageio import GrayImage, as_gray

HEADER_BITS = 32
VARIANCE_FLOOR = 1.0
STANDARD_RATES = (0.1, 0.2, 0.3, 0.4, 0.5)


class CapacityError(ValueError):
    pass


class CorruptPayloadError(ValueError):
    pass


@dataclass(frozen=True)
class StegoPayload:
    data: bytes

    def __post_init__(self):
        if len(self.data) >= 2**32:
            raise ValueError("payload too large for a 32-bit length header")

    @property
    def declared_len(self) -> int:
        return len(self.data)

    def bits(self) -> np.ndarray:
        return np.unpackbits(np.frombuffer(self.data, dtype=np.uint8))

    def __len__(self):
        return len(self.data)


def capacity_bytes(shape) -> int:
    """Largest payload (bytes) an image of ``shape`` can carry via LSB."""
    n = int(np.prod(shape))
    return max(0, (n - HEADER_BITS) // 8)


def lsb_embed(cover: GrayImage, payload: StegoPayload | bytes) -> GrayImage:
    cover = as_gray(cover)
    if not isinstance(payload, StegoPayload):
        payload = StegoPayload(bytes(payload))
    stream = struct.pack(">I", len(payload)) + payload.data
    bits = np.unpackbits(np.frombuffer(stream, dtype=np.uint8))
    if bits.size > cover.size:
        raise CapacityError(
            f"payload needs {bits.size} carrier pixels, image has {cover.size}")
    flat = cover.reshape(-1).copy()
    flat[:bits.size] = (flat[:bits.size] & 0xFE) | bits
    return as_gray(flat.reshape(cover.shape))


def lsb_plane(img: GrayImage) -> np.ndarray:
    return np.asarray(img, dtype=np.uint8).reshape(-1) & 1


def lsb_extract(stego: GrayImage, length: int | None = None) -> StegoPayload:
    """Recover the payload from the LSB plane.

    With ``length=None`` the 32-bit header is trusted.  Passing ``length``
    reads that many bytes from the payload positions regardless of what the
    header says, which is how destruction is measured: after purification
    the header itself is usually garbage.
    """
    plane = lsb_plane(stego)
    if plane.size < HEADER_BITS:
        raise CorruptPayloadError("image too small to hold a length header")
    if length is None:
        length = int.from_bytes(np.packbits(plane[:HEADER_BITS]).tobytes(), "big")
    n_bits = 8 * length
    if HEADER_BITS + n_bits > plane.size:
        raise CorruptPayloadError(
            f"corrupt or absent payload: declared {length} bytes, "
            f"capacity {capacity_bytes(plane.size)}")
    body = plane[HEADER_BITS:HEADER_BITS + n_bits]
    return StegoPayload(np.packbits(body).tobytes())


def random_payload(n_bytes: int, seed: int) -> StegoPayload:
    if n_bytes < 0:
        raise ValueError("n_bytes must be >= 0")
    return StegoPayload(np.random.default_rng(seed).bytes(n_bytes))


def payload_ber(original: StegoPayload | bytes, recovered: StegoPayload | bytes) -> float:
    """Fraction of differing bits over the common prefix of two payloads."""
    a = original.data if isinstance(original, StegoPayload) else bytes(original)
    b = recovered.data if isinstance(recovered, StegoPayload) else bytes(recovered)
    n = min(len(a), len(b))
    if n == 0:
        raise ValueError("nothing to compare")
    x = np.frombuffer(a[:n], dtype=np.uint8) ^ np.frombuffer(b[:n], dtype=np.uint8)
    return float(np.unpackbits(x).sum()) / (8 * n)


def local_variance(img: GrayImage) -> np.ndarray:
    x = np.asarray(img, dtype=np.float64)
    mean = ndimage.uniform_filter(x, size=3, mode="reflect")
    sq = ndimage.uniform_filter(x * x, size=3, mode="reflect")
    return np.maximum(sq - mean * mean, 0.0)


def change_probabilities(cover: GrayImage, rate: float) -> np.ndarray:
    """Per-pixel change probability, mean ``rate / 2``, proportional to ``var + 1``."""
    w = local_variance(cover) + VARIANCE_FLOOR
    p = w * (rate / 2.0) / w.mean()
    # saturated pixels are pinned at 1 and the rest rescaled to keep the mean
    for _ in range(50):
        over = p > 1.0
        if not over.any():
            break
        p[over] = 1.0
        free = ~over & (p < 1.0)
        deficit = rate / 2.0 * p.size - p.sum()
        p[free] *= 1.0 + deficit / p[free].sum()
    return p


def adaptive_embed(cover: GrayImage, rate: float, seed: int) -> GrayImage:
    """Texture-adaptive +/-1 embedding simulator.

    Exactly ``round(rate / 2 * N)`` pixels change.  They are drawn without
    replacement with weights from :func:`change_probabilities`
    (Efraimidis-Spirakis keys), so the count never drifts from the target
    while the placement stays content-adaptive.  A pixel at 0 or 255 that
    draws an outward step is moved inward instead.
    """
    if not 0.0 < rate <= 0.5:
        raise ValueError(f"rate must be in (0, 0.5], got {rate}")
    cover = as_gray(cover)
    rng = np.random.default_rng(seed)
    p = change_probabilities(cover, rate).reshape(-1)
    n = p.size
    k = int(np.floor(rate / 2.0 * n + 0.5))
    u = rng.random(n)
    steps = np.where(rng.random(n) < 0.5, -1, 1)
    out = cover.reshape(-1).astype(np.int16)
    if k > 0:
        keys = np.log(u) / p
        chosen = np.argpartition(-keys, k - 1)[:k]
        s = steps[chosen]
        v = out[chosen]
        s = np.where(v + s < 0, 1, np.where(v + s > 255, -1, s))
        out[chosen] = v + s
    return as_gray(out.reshape(cover.shape))
