"""Command-line entry point: ``stegopurge <command> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import audio, pipeline, stego
from .imageio import read_image, write_image
from .metrics import image_metrics, report_csv, report_json

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
# bad images, payloads, checkpoints and manifests all raise ValueError subclasses
DATA_ERRORS = (ValueError, OSError, KeyError)

log = logging.getLogger("stegopurge")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def read_config(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment.  Values are parsed as JSON when possible."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, value = (t.strip() for t in line.split("=", 1))
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def _split_config(conf: dict):
    from .model import ArchConfig
    from .training import TrainConfig

    arch_keys = {f.name for f in fields(ArchConfig)}
    train_keys = {f.name for f in fields(TrainConfig)}
    unknown = set(conf) - arch_keys - train_keys - {"embed", "rate", "side", "order", "cutoff",
                                                    "window_len", "gain", "levels"}
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    return ({k: v for k, v in conf.items() if k in arch_keys},
            {k: v for k, v in conf.items() if k in train_keys})


def _csv_floats(text):
    try:
        return tuple(float(t) for t in text.split(","))
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _emit(args, rows):
    text = report_json(rows) if args.format == "json" else report_csv(rows)
    if getattr(args, "report", None):
        Path(args.report).write_text(text)
    else:
        sys.stdout.write(text)


# -- commands -----------------------------------------------------------------

def cmd_dataset_gen(args, conf):
    if args.covers:
        covers = args.covers
    else:
        covers = pipeline.synth_covers(args.synth, args.side, args.seed)
    methods = tuple(args.methods.split(","))
    m = pipeline.dataset_generate(covers, methods, _csv_floats(args.rates), args.seed, args.out,
                                  lsb_bytes=args.lsb_bytes)
    print(f"{len(m.records)} stego images written to {args.out}")


def cmd_embed(args, conf):
    cover = read_image(args.input)
    if args.method == "lsb":
        if args.payload:
            payload = Path(args.payload).read_bytes()
        else:
            payload = stego.random_payload(pipeline.lsb_payload_bytes(cover.shape, args.rate),
                                           args.seed).data
        out = stego.lsb_embed(cover, payload)
    else:
        out = stego.adaptive_embed(cover, args.rate, args.seed)
    write_image(out, args.output)


def cmd_extract(args, conf):
    payload = stego.lsb_extract(read_image(args.input), args.length)
    if args.output:
        Path(args.output).write_bytes(payload.data)
    else:
        sys.stdout.buffer.write(payload.data)


def _checkpoints(args):
    ck = {}
    for name in ("autoencoder", "ddsp"):
        path = getattr(args, name, None)
        if path:
            ck[name] = path
    model = getattr(args, "model", None)
    if model and getattr(args, "method", None) in pipeline.NEURAL:
        ck[args.method] = model
    return ck


def cmd_purify(args, conf):
    purifier = pipeline.make_purifier(args.method, _checkpoints(args), conf.get("levels", 2))
    img = read_image(args.input)
    out = purifier(img)
    write_image(out, args.output)
    if args.metrics:
        _emit(args, [image_metrics(img, out, args.method)])


def _train_data(args, conf):
    manifest = pipeline.DatasetManifest.load(args.data)
    embed = conf.get("embed", args.embed)
    train = pipeline._paired(manifest, "train", embed, conf.get("rate"))
    val = pipeline._paired(manifest, "val", embed, conf.get("rate"))
    return embed, train, val


def cmd_train_pretrain(args, conf):
    from .model import ArchConfig, build_generator, save_checkpoint
    from .training import TrainConfig, pretrain_autoencoder

    arch_kw, train_kw = _split_config(conf)
    train_kw.setdefault("seed", args.seed)
    embed, train, val = _train_data(args, conf)
    arch_kw.setdefault("input_side", int(train.stego.shape[-1]))
    arch = ArchConfig(**arch_kw)
    model = build_generator(arch, train_kw["seed"])
    model, tlog = pretrain_autoencoder(model, train, val, TrainConfig(**train_kw))
    model.meta["trained_on"] = embed
    save_checkpoint(model, args.out)
    _log_path(args.out).write_text(tlog.to_csv())
    print(f"pretrained {tlog.records[-1].epoch} epochs, val MSE {model.meta['val_mse']:.6g}")


def cmd_train_gan(args, conf):
    import numpy as np

    from .model import build_discriminator, load_checkpoint, save_checkpoint
    from .training import TrainConfig, train_gan

    _, train_kw = _split_config(conf)
    train_kw.setdefault("seed", args.seed)
    gen = load_checkpoint(args.init)
    _, train, val = _train_data(args, conf)
    disc = build_discriminator(gen.cfg, np.random.default_rng([train_kw["seed"], 1]))
    gen, disc, tlog = train_gan(gen, disc, train, val, TrainConfig(**train_kw))
    save_checkpoint(gen, args.out)
    save_checkpoint(disc, Path(args.out).with_suffix(".disc.ckpt"))
    _log_path(args.out).write_text(tlog.to_csv())
    print(f"GAN fine-tuned {train_kw.get('gan_epochs', 5)} epochs, val MSE {gen.meta['val_mse']:.6g}")


def _log_path(ckpt):
    p = Path(ckpt)
    return p.with_name(p.stem + ".log.csv")


def cmd_metrics_run(args, conf):
    manifest = pipeline.DatasetManifest.load(args.data)
    methods = tuple(args.methods.split(","))
    report = pipeline.run_benchmark(manifest, methods, _checkpoints(args), args.split,
                                    args.embed)
    if args.per_image:
        Path(args.per_image).write_text(report.per_image_csv())
    _emit(args, report.rows)


def cmd_diff(args, conf):
    gain = conf.get("gain", args.gain)
    write_image(pipeline.diff_image(read_image(args.cover), read_image(args.other), gain),
                args.output)


def cmd_audio_purify(args, conf):
    sig = audio.read_wav(args.input)
    purifier, side = None, args.side
    if args.method not in audio.ONE_D_BASELINES or args.tiles:
        purifier = pipeline.make_purifier(args.method, _checkpoints(args))
        if args.method in pipeline.NEURAL:
            from .model import load_checkpoint

            side = load_checkpoint(args.model).cfg.input_side
    out = audio.purify_audio(sig, purifier, side, args.method,
                             order=conf.get("order", args.order),
                             cutoff=conf.get("cutoff", args.cutoff),
                             window_len=conf.get("window_len", args.window))
    audio.write_wav(out, args.output)


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--format", choices=("csv", "json"), default=argparse.SUPPRESS)
    common.add_argument("--config", default=argparse.SUPPRESS, help="key=value settings file")

    p = _Parser(prog="stegopurge", description="Steganography purification toolkit.",
                parents=[common])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(parent, name, func, **kw):
        sp = parent.add_parser(name, parents=[common], **kw)
        sp.set_defaults(func=func)
        return sp

    ds = sub.add_parser("dataset").add_subparsers(dest="sub", required=True, parser_class=_Parser)
    g = cmd(ds, "gen", cmd_dataset_gen, help="embed covers into a stego dataset")
    src = g.add_mutually_exclusive_group(required=True)
    src.add_argument("--covers", help="directory of PGM/PNG cover images")
    src.add_argument("--synth", type=int, help="number of synthetic covers")
    g.add_argument("--side", type=int, default=32)
    g.add_argument("--methods", default="adaptive,lsb")
    g.add_argument("--rates", default="0.1,0.5")
    g.add_argument("--lsb-bytes", type=int)
    g.add_argument("--out", required=True)

    e = cmd(sub, "embed", cmd_embed, help="hide a payload in a cover image")
    e.add_argument("--method", choices=pipeline.EMBED_METHODS, default="lsb")
    e.add_argument("--payload", help="payload file (lsb)")
    e.add_argument("--rate", type=float, default=0.5)
    e.add_argument("input")
    e.add_argument("output")

    x = cmd(sub, "extract", cmd_extract, help="read an LSB payload")
    x.add_argument("--length", type=int, help="read this many bytes, ignoring the header")
    x.add_argument("input")
    x.add_argument("output", nargs="?")

    pu = cmd(sub, "purify", cmd_purify, help="purify one image")
    pu.add_argument("--method", choices=pipeline.PURIFIERS, required=True)
    pu.add_argument("--model", help="checkpoint for neural methods")
    pu.add_argument("--metrics", action="store_true", help="print metrics against the input")
    pu.add_argument("--report")
    pu.add_argument("input")
    pu.add_argument("output")

    tr = sub.add_parser("train").add_subparsers(dest="sub", required=True, parser_class=_Parser)
    t = cmd(tr, "pretrain", cmd_train_pretrain, help="pretrain the autoencoder")
    t.add_argument("--data", required=True)
    t.add_argument("--cfg", help="alias of --config")
    t.add_argument("--embed", default="adaptive")
    t.add_argument("--out", required=True)
    t = cmd(tr, "gan", cmd_train_gan, help="adversarial fine-tuning")
    t.add_argument("--init", required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--cfg", help="alias of --config")
    t.add_argument("--embed", default="adaptive")
    t.add_argument("--out", required=True)

    mt = sub.add_parser("metrics").add_subparsers(dest="sub", required=True, parser_class=_Parser)
    m = cmd(mt, "run", cmd_metrics_run, help="benchmark purifiers on a dataset")
    m.add_argument("--data", required=True)
    m.add_argument("--methods", default="bicubic,wavelet,autoencoder,ddsp")
    m.add_argument("--autoencoder")
    m.add_argument("--ddsp")
    m.add_argument("--split", default="test")
    m.add_argument("--embed")
    m.add_argument("--report")
    m.add_argument("--per-image")

    d = cmd(sub, "diff", cmd_diff, help="amplified difference image")
    d.add_argument("--gain", type=float, default=8.0)
    d.add_argument("cover")
    d.add_argument("other")
    d.add_argument("output")

    au = sub.add_parser("audio").add_subparsers(dest="sub", required=True, parser_class=_Parser)
    a = cmd(au, "purify", cmd_audio_purify, help="purify a 16-bit mono WAV")
    a.add_argument("--method", choices=pipeline.PURIFIERS, required=True)
    a.add_argument("--model")
    a.add_argument("--side", type=int, default=32)
    a.add_argument("--tiles", action="store_true", help="run classical methods on tiles too")
    a.add_argument("--order", type=int, default=4)
    a.add_argument("--cutoff", type=float, default=0.8)
    a.add_argument("--window", type=int, default=5)
    a.add_argument("input")
    a.add_argument("output")
    return p


def main(argv=None) -> int:
    from .training import NumericError

    parser = build_parser()
    args = parser.parse_args(argv)
    seed_given = hasattr(args, "seed")
    args.seed = getattr(args, "seed", 0)
    args.format = getattr(args, "format", "csv")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        conf_path = getattr(args, "cfg", None) or getattr(args, "config", None)
        conf = read_config(conf_path) if conf_path else {}
        if "seed" in conf and not seed_given:
            args.seed = int(conf["seed"])
        args.func(args, conf)
    except UsageError as exc:
        print(f"stegopurge: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"stegopurge: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DATA_ERRORS as exc:
        print(f"stegopurge: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
