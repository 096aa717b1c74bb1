"""Autoencoder pretraining (pixel MSE, early stopping) and GAN fine-tuning."""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .model import Discriminator, Generator, tanh_target, to_batch
from .neural import Adam, bce_loss, mse_loss

log = logging.getLogger(__name__)

PIXEL_SCALE = 127.5  # tanh units -> pixel units


class NumericError(RuntimeError):
    """A loss went NaN/Inf; carries the epoch and batch where it happened."""


class PretrainRequiredError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.9
    eps: float = 1e-8
    batch_size: int = 8
    adv_weight: float = 1e-3
    gan_epochs: int = 5
    patience: int = 10
    max_epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        if min(self.lr, self.beta1, self.beta2, self.eps) <= 0:
            raise ValueError("optimizer rates must be positive")
        if self.adv_weight < 0:
            raise ValueError("adv_weight must be >= 0")
        if self.gan_epochs < 1 or self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("gan_epochs, batch_size and max_epochs must be >= 1")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")


@dataclass
class PairedData:
    """Stego inputs and cover targets as float32 NCHW pixel arrays."""

    stego: np.ndarray
    cover: np.ndarray

    @classmethod
    def from_images(cls, stegos, covers):
        stegos, covers = list(stegos), list(covers)
        if len(stegos) != len(covers):
            raise ValueError("stego/cover counts differ")
        if not stegos:
            raise ValueError("empty dataset")
        return cls(to_batch(stegos), to_batch(covers))

    def __len__(self):
        return len(self.stego)


@dataclass
class EpochRecord:
    phase: str
    epoch: int
    train_loss: float
    val_mse: float
    d_loss: float = math.nan
    g_adv: float = math.nan
    seconds: float = 0.0

    @property
    def val_psnr(self) -> float:
        return math.inf if self.val_mse == 0 else 10 * math.log10(255.0 ** 2 / self.val_mse)


@dataclass
class TrainLog:
    records: list = field(default_factory=list)

    def add(self, rec: EpochRecord):
        if self.records and rec.phase == self.records[-1].phase and rec.epoch <= self.records[-1].epoch:
            raise ValueError("epoch numbering must increase")
        self.records.append(rec)
        log.info("%s epoch %d: train %.6g val_mse %.6g d %.4g adv %.4g",
                 rec.phase, rec.epoch, rec.train_loss, rec.val_mse, rec.d_loss, rec.g_adv)

    def val_mse(self):
        return [r.val_mse for r in self.records]

    def to_csv(self) -> str:
        buf = io.StringIO()
        names = list(EpochRecord.__dataclass_fields__)
        w = csv.DictWriter(buf, fieldnames=names, lineterminator="\n")
        w.writeheader()
        for r in self.records:
            w.writerow({k: (f"{v:.9g}" if isinstance(v, float) else v) for k, v in asdict(r).items()})
        return buf.getvalue()


def _check(value, phase, epoch, batch):
    if not math.isfinite(value):
        raise NumericError(f"non-finite {phase} loss at epoch {epoch}, batch {batch}")


def _batches(n, batch_size, seed, epoch):
    order = np.random.default_rng([seed, epoch]).permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def validation_mse(model: Generator, data: PairedData, batch_size: int = 32) -> float:
    """Pixel-unit MSE of the (unrounded) generator output against covers."""
    total = 0.0
    for i in range(0, len(data), batch_size):
        y = model.forward(data.stego[i:i + batch_size]).astype(np.float64)
        d = (np.clip(y, -1, 1) + 1.0) * PIXEL_SCALE - data.cover[i:i + batch_size]
        total += float(np.sum(d * d))
    return total / data.cover.size


def _snapshot(model):
    return {k: v.copy() for k, v in model.state().items()}


def _mse_epoch(model, opt, data, cfg, epoch):
    losses = []
    for b, idx in enumerate(_batches(len(data), cfg.batch_size, cfg.seed, epoch)):
        opt.zero_grad()
        y = model.forward(data.stego[idx], train=True)
        loss, grad = mse_loss(y, tanh_target(data.cover[idx]))
        _check(loss, "pretrain", epoch, b)
        model.backward(grad)
        opt.step()
        losses.append(loss)
    return float(np.mean(losses)) * PIXEL_SCALE ** 2


def pretrain_autoencoder(model: Generator, train: PairedData, val: PairedData,
                         cfg: TrainConfig | None = None):
    """Minimise pixel MSE(generator(stego), cover) with Adam and early stopping.

    Epoch 0 in the log is the untrained model.  Training stops once the
    validation MSE has not improved for ``cfg.patience`` epochs (so
    ``patience=0`` runs a single epoch) or at ``cfg.max_epochs``.  The
    best-validation weights are restored before returning.
    """
    cfg = cfg or TrainConfig()
    if len(train) == 0 or len(val) == 0:
        raise ValueError("empty dataset")
    opt = Adam(model.params(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    tlog = TrainLog()
    tlog.add(EpochRecord("pretrain", 0, math.nan, validation_mse(model, val)))
    best, best_state, since = math.inf, None, 0
    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        train_loss = _mse_epoch(model, opt, train, cfg, epoch)
        vm = validation_mse(model, val)
        _check(vm, "validation", epoch, -1)
        tlog.add(EpochRecord("pretrain", epoch, train_loss, vm, seconds=time.perf_counter() - t0))
        if vm < best:
            best, best_state, since = vm, _snapshot(model), 0
        else:
            since += 1
        if since >= cfg.patience:
            break
    model.load_state(best_state)
    model.meta = dict(model.meta, pretrained=True, phase="pretrain", val_mse=best,
                      epochs=tlog.records[-1].epoch)
    return model, tlog


def train_gan(generator: Generator, discriminator: Discriminator, train: PairedData,
              val: PairedData, cfg: TrainConfig | None = None):
    """Adversarial fine-tuning of a pretrained generator.

    Per batch: one discriminator step on
    ``bce(D(cover), 1) + bce(D(G(stego)), 0)``, then one generator step on
    ``mse(G(stego), cover) + adv_weight * bce(D(G(stego)), 1)``.  The
    generator forward is shared by both steps, so with ``adv_weight = 0``
    the generator sees exactly the pretraining updates.
    """
    cfg = cfg or TrainConfig()
    if not generator.meta.get("pretrained"):
        raise PretrainRequiredError("GAN training must start from a pretrained autoencoder")
    if len(train) == 0 or len(val) == 0:
        raise ValueError("empty dataset")
    g_opt = Adam(generator.params(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    d_opt = Adam(discriminator.params(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    tlog = TrainLog()
    tlog.add(EpochRecord("gan", 0, math.nan, validation_mse(generator, val)))
    for epoch in range(1, cfg.gan_epochs + 1):
        t0 = time.perf_counter()
        g_losses, d_losses, adv_losses = [], [], []
        for b, idx in enumerate(_batches(len(train), cfg.batch_size, cfg.seed, epoch)):
            stego, cover = train.stego[idx], train.cover[idx]
            g_opt.zero_grad()
            y = generator.forward(stego, train=True)
            fake = ((np.clip(y, -1, 1) + 1) * np.float32(PIXEL_SCALE)).astype(np.float32)

            d_opt.zero_grad()
            p_real = discriminator.forward(cover, train=True)
            l_real, g_real = bce_loss(p_real, 1.0)
            discriminator.backward(g_real)
            p_fake = discriminator.forward(fake, train=True)
            l_fake, g_fake = bce_loss(p_fake, 0.0)
            discriminator.backward(g_fake)
            d_loss = l_real + l_fake
            _check(d_loss, "discriminator", epoch, b)
            d_opt.step()

            content, grad = mse_loss(y, tanh_target(cover))
            adv = math.nan
            if cfg.adv_weight > 0:
                p = discriminator.forward(fake, train=True)
                adv, g_adv = bce_loss(p, 1.0)
                d_fake = discriminator.backward(g_adv)
                discriminator.zero_grad()
                # d fake / d y = 127.5 inside the clip range
                inside = (y > -1) & (y < 1)
                grad = grad + cfg.adv_weight * d_fake * np.float32(PIXEL_SCALE) * inside
                _check(adv, "adversarial", epoch, b)
            total = content + (cfg.adv_weight * adv if cfg.adv_weight > 0 else 0.0)
            _check(total, "generator", epoch, b)
            generator.backward(grad.astype(np.float32))
            g_opt.step()
            g_losses.append(content * PIXEL_SCALE ** 2)
            d_losses.append(d_loss)
            adv_losses.append(adv)
        vm = validation_mse(generator, val)
        _check(vm, "validation", epoch, -1)
        tlog.add(EpochRecord("gan", epoch, float(np.mean(g_losses)), vm,
                             float(np.mean(d_losses)),
                             float(np.mean(adv_losses)) if cfg.adv_weight > 0 else math.nan,
                             time.perf_counter() - t0))
    generator.meta = dict(generator.meta, phase="gan", val_mse=tlog.records[-1].val_mse,
                          gan_epochs=cfg.gan_epochs)
    return generator, discriminator, tlog
