"""Purifier generator (residual autoencoder), discriminator and checkpoints.

Generator::

    pixels -> /255 -> conv9x9(F)+ReLU
           -> downsample block: conv3x3/2(F)+ReLU, conv3x3(F)+ReLU        = d
           -> d + [residual blocks x B -> conv3x3(F) -> BN](d)               (encoder)
           -> nearest x2 -> conv3x3(4F)+ReLU -> conv9x9(1) -> tanh          (decoder)

The network emits tanh values in [-1, 1]; :func:`purify_image` maps them to
pixels.  Discriminator::

    pixels -> /255 -> conv3x3(F)+LReLU
           -> 4 x [conv3x3/2 + BN + LReLU] with F, F/2, F/4, F/8 filters (>= 4)
           -> flatten -> dense(64)+LReLU -> dense(1) -> sigmoid
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .imageio import GrayImage, as_gray, denormalize_tanh
from .neural import (BatchNorm2d, Conv2d, Dense, Flatten, Layer, LeakyReLU, ReLU, Residual,
                     Scale, Sequential, Sigmoid, Tanh, Upsample2x)

MAGIC = b"DDSP"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class ArchConfig:
    base_filters: int = 32
    n_res_blocks: int = 4
    input_side: int = 32
    disc_blocks: int = 4
    disc_dense: int = 64
    disc_order: str = "decreasing"

    def __post_init__(self):
        if self.base_filters < 1:
            raise ValueError("base_filters must be >= 1")
        if self.n_res_blocks < 1:
            raise ValueError("n_res_blocks must be >= 1")
        if self.input_side < 2 or self.input_side % 2:
            raise ValueError("input_side must be a positive even number")
        if self.disc_order not in ("decreasing", "constant", "increasing"):
            raise ValueError(f"unknown disc_order {self.disc_order!r}")

    @classmethod
    def full_scale(cls):
        return cls(base_filters=64, n_res_blocks=16, input_side=256)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


def build_residual_block(filters: int, rng=None) -> Residual:
    if filters < 1:
        raise ValueError("filters must be >= 1")
    return Residual(Sequential(
        Conv2d(filters, filters, 3, rng=rng), BatchNorm2d(filters), ReLU(),
        Conv2d(filters, filters, 3, rng=rng), BatchNorm2d(filters)))


def build_encoder(cfg: ArchConfig, rng=None) -> Sequential:
    f = cfg.base_filters
    downsample = Sequential(
        Conv2d(f, f, 3, stride=2, pad=1, rng=rng), ReLU(),
        Conv2d(f, f, 3, rng=rng), ReLU())
    tail = Sequential(
        *[build_residual_block(f, rng) for _ in range(cfg.n_res_blocks)],
        Conv2d(f, f, 3, rng=rng), BatchNorm2d(f))
    return Sequential(
        Scale(1.0 / 255.0), Conv2d(1, f, 9, rng=rng), ReLU(), downsample, Residual(tail),
        names=["normalize", "conv_in", "relu_in", "downsample", "body"])


def build_decoder(cfg: ArchConfig, rng=None) -> Sequential:
    f = cfg.base_filters
    return Sequential(
        Upsample2x(), Conv2d(f, 4 * f, 3, rng=rng), ReLU(),
        Conv2d(4 * f, 1, 9, rng=rng, init="xavier"), Tanh(),
        names=["upsample", "conv_up", "relu_up", "conv_out", "tanh"])


class Generator(Sequential):
    def __init__(self, cfg: ArchConfig, rng=None):
        super().__init__(build_encoder(cfg, rng), build_decoder(cfg, rng),
                         names=["encoder", "decoder"])
        self.cfg = cfg
        self.meta: dict = {}

    @property
    def encoder(self):
        return self["encoder"]

    @property
    def decoder(self):
        return self["decoder"]


def discriminator_filters(cfg: ArchConfig) -> list[int]:
    f = cfg.base_filters
    if cfg.disc_order == "decreasing":
        return [max(4, f >> i) for i in range(cfg.disc_blocks)]
    if cfg.disc_order == "increasing":
        return [f << i for i in range(cfg.disc_blocks)]
    return [f] * cfg.disc_blocks


class Discriminator(Sequential):
    def __init__(self, cfg: ArchConfig, rng=None):
        if cfg.input_side < 16:
            raise ValueError("discriminator needs input_side >= 16")
        filters = discriminator_filters(cfg)
        layers = [Scale(1.0 / 255.0), Conv2d(1, cfg.base_filters, 3, rng=rng), LeakyReLU(0.2)]
        c_in = cfg.base_filters
        for f in filters:
            layers.append(Sequential(Conv2d(c_in, f, 3, stride=2, pad=1, rng=rng),
                                     BatchNorm2d(f), LeakyReLU(0.2)))
            c_in = f
        side = cfg.input_side
        for _ in filters:
            side = (side - 1) // 2 + 1
        layers += [Flatten(), Dense(c_in * side * side, cfg.disc_dense, rng=rng), LeakyReLU(0.2),
                   Dense(cfg.disc_dense, 1, rng=rng, init="xavier"), Sigmoid()]
        super().__init__(*layers)
        self.cfg = cfg
        self.filters = filters
        self.meta: dict = {}


def build_discriminator(cfg: ArchConfig, rng=None) -> Discriminator:
    return Discriminator(cfg, rng)


def build_generator(cfg: ArchConfig, seed: int | None = 0) -> Generator:
    rng = None if seed is None else np.random.default_rng(seed)
    return Generator(cfg, rng)


# -- inference ----------------------------------------------------------------

def tanh_target(img) -> np.ndarray:
    """Pixels mapped onto the generator's tanh range, float32 NCHW."""
    x = np.asarray(img, dtype=np.float32)
    return (x / np.float32(127.5) - np.float32(1.0))


def to_batch(images) -> np.ndarray:
    return np.stack([np.asarray(im, dtype=np.float32) for im in images])[:, None]


def purify_image(model: Generator, img: GrayImage, batch_size: int = 16) -> GrayImage:
    """Run the generator over ``img`` in ``input_side`` tiles.

    The image is edge-padded up to a whole number of tiles and cropped back.
    """
    img = as_gray(img)
    side = model.cfg.input_side
    h, w = img.shape
    th, tw = -(-h // side), -(-w // side)
    padded = np.pad(img, ((0, th * side - h), (0, tw * side - w)), mode="edge")
    tiles = (padded.reshape(th, side, tw, side).transpose(0, 2, 1, 3)
             .reshape(th * tw, 1, side, side).astype(np.float32))
    outs = [model.forward(tiles[i:i + batch_size]) for i in range(0, len(tiles), batch_size)]
    out = np.concatenate(outs)[:, 0].reshape(th, tw, side, side).transpose(0, 2, 1, 3)
    return denormalize_tanh(out.reshape(th * side, tw * side)[:h, :w])


# -- checkpoints --------------------------------------------------------------

class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


def save_checkpoint(model: Layer, path, meta: dict | None = None) -> None:
    """Write ``model`` in the DDSP container.

    Layout (little-endian): ``b"DDSP"``, u32 version, u32 header length,
    UTF-8 JSON header {kind, arch, meta}, u32 record count, then per tensor:
    u16 name length, name, u8 rank, u32 dims, float32 data.
    """
    kind = "discriminator" if isinstance(model, Discriminator) else "generator"
    meta = dict(getattr(model, "meta", {}) or {}, **(meta or {}))
    header = json.dumps({"kind": kind, "arch": asdict(model.cfg), "meta": meta},
                        sort_keys=True).encode()
    tensors = model.state()
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<II", FORMAT_VERSION, len(header)) + header)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            nb = name.encode()
            fh.write(struct.pack("<HB", len(nb), arr.ndim) + nb)
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


class _Reader:
    def __init__(self, data, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CheckpointTruncatedError(f"{self.path}: truncated at byte {self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_checkpoint(path):
    """Return ``(header dict, {name: float32 array})`` without building a model."""
    with open(path, "rb") as fh:
        r = _Reader(fh.read(), path)
    if r.data[:4] != MAGIC:
        raise CheckpointVersionError(f"{path}: not a DDSP checkpoint (magic {r.data[:4]!r})")
    r.take(4)
    version, hlen = r.unpack("<II")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"{path}: unsupported format version {version}")
    header = json.loads(r.take(hlen).decode())
    (count,) = r.unpack("<I")
    tensors = {}
    for _ in range(count):
        nlen, rank = r.unpack("<HB")
        name = r.take(nlen).decode()
        dims = r.unpack(f"<{rank}I")
        size = int(np.prod(dims)) if rank else 1
        tensors[name] = np.frombuffer(r.take(4 * size), dtype="<f4").astype(np.float32).reshape(dims)
    return header, tensors


def load_checkpoint(path, cfg: ArchConfig | None = None):
    """Rebuild the stored network.

    With ``cfg`` the tensors are loaded into a network built from ``cfg``
    instead of the stored config; any disagreement raises
    :class:`CheckpointShapeError` naming the first offending tensor.
    """
    header, tensors = read_checkpoint(path)
    cfg = cfg or ArchConfig.from_dict(header["arch"])
    cls = Discriminator if header.get("kind") == "discriminator" else Generator
    model = cls(cfg, rng=None)
    expected = model.state()
    for name, arr in expected.items():
        if name not in tensors:
            raise CheckpointShapeError(f"{path}: tensor {name} missing from checkpoint")
        if tensors[name].shape != arr.shape:
            raise CheckpointShapeError(
                f"{path}: tensor {name} has shape {tensors[name].shape}, expected {arr.shape}")
    extra = set(tensors) - set(expected)
    if extra:
        raise CheckpointShapeError(f"{path}: unexpected tensor {sorted(extra)[0]}")
    model.load_state(tensors)
    model.meta = header.get("meta", {})
    return model
