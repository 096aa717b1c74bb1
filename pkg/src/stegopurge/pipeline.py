"""Dataset generation, purifier registry, benchmark harness and difference images."""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import audio, classical, metrics, stego
from .imageio import GrayImage, as_gray, read_image, to_pixels, write_image
from .model import load_checkpoint, purify_image

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"
EMBED_METHODS = ("lsb", "adaptive")
PURIFIERS = ("identity", "bicubic", "wavelet", "autoencoder", "ddsp")
NEURAL = ("autoencoder", "ddsp")
TEST_FRACTION = 0.25
VAL_FRACTION = 0.10

# full-scale dataset arithmetic
FULL_COVERS = 10_000
FULL_ALGORITHMS = 4
FULL_RATES = len(stego.STANDARD_RATES)


def full_dataset_counts():
    stegos = FULL_COVERS * FULL_ALGORITHMS * FULL_RATES
    return {"stego": stegos, "cover": FULL_COVERS, "total": stegos + FULL_COVERS}


# -- synthetic covers ---------------------------------------------------------

def synth_cover(side: int, rng: np.random.Generator) -> GrayImage:
    """One procedural photo-like image.

    Smooth gradient and blobs, an oriented stripe texture and a band-limited
    noise texture (each under a soft mask), a flat rectangle, and sensor
    grain of sigma ~2 over everything.
    """
    yy, xx = np.mgrid[0:side, 0:side] / float(side)
    lo, hi = sorted(rng.uniform(0, 255, size=2))
    if hi - lo < 120:
        lo, hi = max(0.0, lo - 60), min(255.0, hi + 60)
    theta = rng.uniform(0, 2 * np.pi)
    ramp = np.cos(theta) * xx + np.sin(theta) * yy
    ramp = (ramp - ramp.min()) / (np.ptp(ramp) + 1e-12)
    img = lo + (hi - lo) * ramp
    for _ in range(rng.integers(1, 4)):
        cy, cx = rng.uniform(0, 1, 2)
        r = rng.uniform(0.1, 0.35)
        img += rng.uniform(-60, 60) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * r * r))

    def soft_mask():
        m = ndimage.gaussian_filter(rng.standard_normal((side, side)), side / 6, mode="wrap")
        return 1.0 / (1.0 + np.exp(-m / (m.std() + 1e-12) * 3))

    f = rng.uniform(2, side / 5)
    phi = rng.uniform(0, np.pi)
    stripes = np.sin(2 * np.pi * f * (np.cos(phi) * xx + np.sin(phi) * yy))
    img += rng.uniform(15, 40) * stripes * soft_mask()
    tex = ndimage.gaussian_filter(rng.standard_normal((side, side)), rng.uniform(0.6, 1.5))
    img += rng.uniform(10, 30) * tex / (tex.std() + 1e-12) * soft_mask()
    h = rng.integers(side // 6, side // 3 + 1)
    w = rng.integers(side // 6, side // 3 + 1)
    y0 = rng.integers(0, side - h + 1)
    x0 = rng.integers(0, side - w + 1)
    img[y0:y0 + h, x0:x0 + w] = rng.uniform(20, 235)
    img += rng.normal(0, 2.0, size=img.shape)
    return to_pixels(np.clip(img, 0, 255))


def synth_covers(n: int, side: int, seed: int) -> list:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng([seed, side])
    return [synth_cover(side, rng) for _ in range(n)]


# -- dataset ------------------------------------------------------------------

@dataclass
class DatasetRecord:
    image_id: str
    cover: str
    stego: str
    method: str
    rate: float
    seed: int
    split: str
    payload: str | None = None


@dataclass
class DatasetManifest:
    root: str
    seed: int
    records: list = field(default_factory=list)
    version: int = MANIFEST_VERSION

    def select(self, split=None, method=None, rate=None):
        return [r for r in self.records
                if (split is None or r.split == split)
                and (method is None or r.method == method)
                and (rate is None or math.isclose(r.rate, rate))]

    def path(self, rel) -> Path:
        return Path(self.root) / rel

    def load_pair(self, rec: DatasetRecord):
        return read_image(self.path(rec.cover)), read_image(self.path(rec.stego))

    def load_payload(self, rec: DatasetRecord) -> stego.StegoPayload | None:
        if rec.payload is None:
            return None
        return stego.StegoPayload(self.path(rec.payload).read_bytes())

    def split_fractions(self):
        n = len(self.records)
        return {s: sum(r.split == s for r in self.records) / n for s in ("train", "val", "test")}

    def save(self, path=None):
        path = Path(path or Path(self.root) / MANIFEST_NAME)
        doc = {"version": self.version, "seed": self.seed,
               "records": [asdict(r) for r in self.records]}
        path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path):
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        doc = json.loads(path.read_text())
        if doc.get("version") != MANIFEST_VERSION:
            raise ValueError(f"{path}: unsupported manifest version {doc.get('version')}")
        return cls(str(path.parent), doc["seed"],
                   [DatasetRecord(**r) for r in doc["records"]], doc["version"])


def assign_splits(n: int, seed: int) -> list:
    """75/25 train/test by cover, then 10% of train held out for validation."""
    order = np.random.default_rng([seed, 7501]).permutation(n)
    n_test = int(math.floor(n * TEST_FRACTION + 0.5))
    n_val = int(math.floor((n - n_test) * VAL_FRACTION + 0.5))
    splits = ["train"] * n
    for i in order[:n_test]:
        splits[i] = "test"
    for i in order[n_test:n_test + n_val]:
        splits[i] = "val"
    return splits


def _image_seed(seed, index, method, rate):
    ss = np.random.SeedSequence([seed, index, EMBED_METHODS.index(method), int(round(rate * 1000))])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def lsb_payload_bytes(shape, rate: float) -> int:
    """Payload size for LSB embedding at ``rate`` payload bits per pixel."""
    n = int(np.prod(shape))
    return min(int(rate * n) // 8, stego.capacity_bytes(shape))


def embed(cover: GrayImage, method: str, rate: float, seed: int, lsb_bytes: int | None = None):
    """Return ``(stego image, payload or None)``."""
    if method == "adaptive":
        return stego.adaptive_embed(cover, rate, seed), None
    if method == "lsb":
        n = lsb_payload_bytes(cover.shape, rate) if lsb_bytes is None else lsb_bytes
        payload = stego.random_payload(n, seed)
        return stego.lsb_embed(cover, payload), payload
    raise ValueError(f"unknown embedding method {method!r}")


def dataset_generate(covers, methods, rates, seed: int, out_dir, lsb_bytes: int | None = None,
                     ext: str = ".pgm") -> DatasetManifest:
    """Embed every cover with every (method, rate) and write a manifest.

    ``covers`` is a directory of PGM/PNG files or a sequence of images.
    """
    out = Path(out_dir)
    if isinstance(covers, (str, Path)):
        files = sorted(p for p in Path(covers).iterdir() if p.suffix.lower() in (".pgm", ".png"))
        names = [p.stem for p in files]
        covers = [read_image(p) for p in files]
    else:
        covers = [as_gray(c) for c in covers]
        names = [f"img{i:05d}" for i in range(len(covers))]
    if not covers:
        raise ValueError("no cover images")
    for m in methods:
        if m not in EMBED_METHODS:
            raise ValueError(f"unknown embedding method {m!r}")
    for r in rates:
        if not 0 < r <= 0.5:
            raise ValueError(f"rate {r} outside (0, 0.5]")
    (out / "cover").mkdir(parents=True, exist_ok=True)
    splits = assign_splits(len(covers), seed)
    manifest = DatasetManifest(str(out), seed)
    for i, (name, cover) in enumerate(zip(names, covers)):
        cover_rel = f"cover/{name}{ext}"
        write_image(cover, out / cover_rel)
        for m in methods:
            for r in rates:
                s = _image_seed(seed, i, m, r)
                img, payload = embed(cover, m, r, s, lsb_bytes)
                sub = f"{m}_{r:.2f}"
                (out / sub).mkdir(exist_ok=True)
                rec = DatasetRecord(name, cover_rel, f"{sub}/{name}{ext}", m, float(r), s, splits[i])
                write_image(img, out / rec.stego)
                if payload is not None:
                    rec.payload = f"{sub}/{name}.bin"
                    (out / rec.payload).write_bytes(payload.data)
                manifest.records.append(rec)
    manifest.save()
    return manifest


# -- purifiers ----------------------------------------------------------------

def identity(img):
    return as_gray(img)


def wavelet_purify(img, levels: int = 2):
    return classical.bayes_shrink_denoise(img, levels)


def make_purifier(method: str, checkpoints: dict | None = None, levels: int = 2):
    """Image -> image callable for a purification method name.

    Neural methods need ``checkpoints[method]`` (a path or a loaded generator).
    """
    if method == "identity":
        return identity
    if method == "bicubic":
        return classical.bicubic_purify
    if method == "wavelet":
        return lambda img: wavelet_purify(img, levels)
    if method in NEURAL:
        ckpt = (checkpoints or {}).get(method)
        if ckpt is None:
            raise FileNotFoundError(f"method {method!r} needs a checkpoint")
        model = load_checkpoint(ckpt) if isinstance(ckpt, (str, Path)) else ckpt
        return lambda img: purify_image(model, img)
    raise ValueError(f"unknown purification method {method!r}")


# -- benchmark ----------------------------------------------------------------

@dataclass
class Report:
    rows: list
    per_image: list
    label: str = "benchmark"
    extra: dict = field(default_factory=dict)

    def csv(self) -> str:
        return metrics.report_csv(self.rows)

    def json(self) -> str:
        return metrics.report_json(self.rows)

    def per_image_csv(self) -> str:
        lines = ["method,image,embed,rate," + ",".join(metrics.REPORT_FIELDS[1:-1])]
        for (rec, row) in self.per_image:
            vals = ",".join(metrics.fmt(getattr(row, k)) for k in metrics.REPORT_FIELDS[1:-1])
            lines.append(f"{row.method},{rec.image_id},{rec.method},{rec.rate:g},{vals}")
        return "\n".join(lines) + "\n"

    def row(self, method):
        return next(r for r in self.rows if r.method == method)

    def write(self, out_dir, fmt="csv", stem="report"):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{stem}.{fmt}").write_text(self.csv() if fmt == "csv" else self.json())
        (out / f"{stem}_per_image.csv").write_text(self.per_image_csv())


def run_benchmark(manifest: DatasetManifest, methods=("bicubic", "wavelet", "autoencoder", "ddsp"),
                  checkpoints: dict | None = None, split: str = "test",
                  embed_method: str | None = None, label: str = "benchmark") -> Report:
    """Score each purification method on one split of a dataset."""
    recs = manifest.select(split=split, method=embed_method)
    if not recs:
        raise ValueError(f"no {split} images in the manifest"
                         + (f" for method {embed_method}" if embed_method else ""))
    purifiers = {m: make_purifier(m, checkpoints) for m in methods}
    pairs = [manifest.load_pair(r) for r in recs]
    covers = [c for c, _ in pairs]
    stegos = [s for _, s in pairs]
    rows, per_image = [], []
    destruction = {}
    for m in methods:
        img_rows = []
        row = metrics.evaluate(covers, stegos, purifiers[m], m, img_rows)
        rows.append(row)
        per_image.extend(zip(recs, img_rows))
        bers = [_payload_ber(manifest, r, s, purifiers[m]) for r, s in zip(recs, stegos)]
        bers = [b for b in bers if b is not None]
        if bers:
            destruction[m] = math.fsum(bers) / len(bers)
    return Report(rows, per_image, label, {"payload_ber": destruction})


def _payload_ber(manifest, rec, stego_img, purifier):
    payload = manifest.load_payload(rec)
    if payload is None or len(payload) == 0:
        return None
    out = purifier(stego_img)
    return stego.payload_ber(payload, stego.lsb_extract(out, len(payload)))


def transfer_eval(manifest: DatasetManifest, checkpoints: dict, trained_on: str | None = None,
                  methods=("bicubic", "wavelet", "autoencoder", "ddsp"),
                  embed_method: str = "lsb") -> Report:
    """Benchmark on an embedding method the networks were not trained on."""
    if trained_on is None:
        for ck in checkpoints.values():
            meta = load_checkpoint(ck).meta if isinstance(ck, (str, Path)) else ck.meta
            trained_on = trained_on or meta.get("trained_on")
    if trained_on == embed_method:
        warnings.warn(f"transfer evaluation on the training method {embed_method!r}", stacklevel=2)
    return run_benchmark(manifest, methods, checkpoints, "test", embed_method, label="transfer")


def diff_image(cover: GrayImage, other: GrayImage, gain: float = 8.0) -> GrayImage:
    """``clamp(round(gain * |cover - other|))``: amplified residual for inspection."""
    if gain <= 0:
        raise ValueError("gain must be positive")
    a = np.asarray(cover, dtype=np.float64)
    b = np.asarray(other, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return to_pixels(np.clip(gain * np.abs(a - b), 0, 255))


# -- audio benchmark ----------------------------------------------------------

def audio_benchmark(signals, checkpoints: dict | None, side: int, payload_bytes: int, seed: int,
                    methods=("bicubic", "wavelet", "autoencoder", "ddsp"), peak: float = 255.0):
    """LSB-in-tile audio: embed, purify, and score in the 8-bit tile domain.

    Returns ``(rows, payload_ber per method)``.
    """
    rows, destruction = [], {}
    stegos, payloads = [], []
    for i, sig in enumerate(signals):
        img = audio.to_tile_image(sig, side)
        payload = stego.random_payload(min(payload_bytes, stego.capacity_bytes(img.shape)),
                                       _image_seed(seed, i, "lsb", 0.5))
        st = stego.lsb_embed(img, payload)
        stegos.append((audio.from_tile_image(st, len(sig), sig.sample_rate), st))
        payloads.append(payload)
    for m in methods:
        # classical baselines run natively on the 1-D signal
        purifier = None if m in audio.ONE_D_BASELINES else make_purifier(m, checkpoints)
        per, bers = [], []
        for (st_sig, st_img), payload in zip(stegos, payloads):
            out = audio.purify_audio(st_sig, purifier, side, method=m)
            out_img = audio.to_tile_image(out, side)
            per.append(metrics.MetricsRow(m, metrics.ber(st_img, out_img),
                                          metrics.mse(st_img, out_img),
                                          metrics.psnr(st_img, out_img, peak), math.nan,
                                          math.nan, 1))
            bers.append(stego.payload_ber(payload, stego.lsb_extract(out_img, len(payload))))
        rows.append(metrics.aggregate(per, m))
        destruction[m] = math.fsum(bers) / len(bers)
    return rows, destruction


# -- desk pipeline ------------------------------------------------------------

@dataclass
class DeskConfig:
    n_covers: int = 64
    side: int = 32
    methods: tuple = ("adaptive", "lsb")
    rates: tuple = (0.1, 0.5)
    train_method: str = "adaptive"
    train_rate: float | None = None
    base_filters: int = 32
    n_res_blocks: int = 4
    patience: int = 10
    max_epochs: int = 60
    gan_epochs: int = 5
    batch_size: int = 8
    adv_weight: float = 1e-3
    eval_side: int = 128
    n_eval: int = 4
    eval_payload_bytes: int = 1300
    audio_signals: int = 2
    audio_samples: int = 12288


@dataclass
class DeskResult:
    out_dir: Path
    manifest: DatasetManifest
    pretrain_log: object
    gan_log: object
    benchmark: Report
    transfer: Report
    destruction: dict
    audio_rows: list
    audio_destruction: dict
    seconds: float = 0.0


def _paired(manifest, split, method, rate=None):
    from .training import PairedData

    recs = manifest.select(split=split, method=method, rate=rate)
    pairs = [manifest.load_pair(r) for r in recs]
    return PairedData.from_images([s for _, s in pairs], [c for c, _ in pairs])


def destruction_eval(covers, checkpoints, payload_bytes: int, seed: int,
                     methods=("bicubic", "wavelet", "autoencoder", "ddsp")) -> dict:
    """Mean LSB payload BER after purification, per method."""
    out = {}
    stegos = []
    for i, cover in enumerate(covers):
        payload = stego.random_payload(payload_bytes, _image_seed(seed, i, "lsb", 0.99))
        stegos.append((stego.lsb_embed(cover, payload), payload))
    for m in methods:
        purifier = make_purifier(m, checkpoints)
        bers = [stego.payload_ber(p, stego.lsb_extract(purifier(s), len(p))) for s, p in stegos]
        out[m] = math.fsum(bers) / len(bers)
    return out


def run_desk_pipeline(out_dir, seed: int = 0, cfg: DeskConfig | None = None) -> DeskResult:
    """Generate a synthetic dataset, pretrain, GAN-train, benchmark and transfer-evaluate.

    Writes the dataset, ``ae.ckpt``/``ddsp.ckpt``/``disc.ckpt`` with their
    training logs, and CSV reports under ``out_dir``.
    """
    import time

    from .model import ArchConfig, build_generator, build_discriminator, save_checkpoint
    from .training import TrainConfig, pretrain_autoencoder, train_gan

    t0 = time.perf_counter()
    cfg = cfg or DeskConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    covers = synth_covers(cfg.n_covers, cfg.side, seed)
    manifest = dataset_generate(covers, cfg.methods, cfg.rates, seed, out / "data")

    arch = ArchConfig(base_filters=cfg.base_filters, n_res_blocks=cfg.n_res_blocks,
                      input_side=cfg.side)
    tcfg = TrainConfig(batch_size=cfg.batch_size, adv_weight=cfg.adv_weight,
                       gan_epochs=cfg.gan_epochs, patience=cfg.patience,
                       max_epochs=cfg.max_epochs, seed=seed)
    train = _paired(manifest, "train", cfg.train_method, cfg.train_rate)
    val = _paired(manifest, "val", cfg.train_method, cfg.train_rate)

    gen = build_generator(arch, seed)
    gen, pre_log = pretrain_autoencoder(gen, train, val, tcfg)
    gen.meta["trained_on"] = cfg.train_method
    save_checkpoint(gen, out / "ae.ckpt")
    (out / "ae.log.csv").write_text(pre_log.to_csv())

    disc = build_discriminator(arch, np.random.default_rng([seed, 1]))
    gen, disc, gan_log = train_gan(gen, disc, train, val, tcfg)
    save_checkpoint(gen, out / "ddsp.ckpt")
    save_checkpoint(disc, out / "disc.ckpt")
    (out / "ddsp.log.csv").write_text(gan_log.to_csv())

    ckpts = {"autoencoder": load_checkpoint(out / "ae.ckpt"),
             "ddsp": load_checkpoint(out / "ddsp.ckpt")}
    bench = run_benchmark(manifest, checkpoints=ckpts, embed_method=cfg.train_method)
    bench.write(out, stem="benchmark")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        transfer = transfer_eval(manifest, ckpts, trained_on=cfg.train_method, embed_method="lsb")
    transfer.write(out, stem="transfer")

    eval_covers = synth_covers(cfg.n_eval, cfg.eval_side, seed + 1)
    destruction = destruction_eval(eval_covers, ckpts, cfg.eval_payload_bytes, seed)

    signals = [audio.synth_speech(cfg.audio_samples, seed=seed * 1000 + i)
               for i in range(cfg.audio_signals)]
    audio_rows, audio_destr = audio_benchmark(signals, ckpts, cfg.side, cfg.eval_payload_bytes, seed)
    (out / "audio.csv").write_text(metrics.report_csv(audio_rows))
    doc = {"image_payload_ber": destruction, "audio_payload_ber": audio_destr,
           "benchmark_payload_ber": bench.extra["payload_ber"],
           "transfer_payload_ber": transfer.extra["payload_ber"]}
    (out / "destruction.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return DeskResult(out, manifest, pre_log, gan_log, bench, transfer, destruction,
                      audio_rows, audio_destr, time.perf_counter() - t0)
