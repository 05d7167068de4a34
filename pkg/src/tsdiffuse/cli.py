"""``tsdiffuse forge|train|sample|eval`` command-line entry points."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np
import torch

from . import forge
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_config
from .diffusion import sample_batch, train
from .errors import TsDiffuseError
from .evaluation import REPORT_ROWS, evaluate
from .plotting import render_svg

log = logging.getLogger("tsdiffuse")

SAMPLE_CHUNK = 64


def configure_threads():
    threads = os.environ.get("TSDIFFUSE_THREADS")
    if threads:
        torch.set_num_threads(max(1, int(threads)))


def pair_seed(run_seed: int, pair_id: str) -> int:
    digest = hashlib.sha256(f"{run_seed}:{pair_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def _write_meta(path: Path, config: RunConfig, **extra):
    meta = {"config_hash": config.hash(), **extra}
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def _fmt(v: float) -> str:
    return repr(float(v))


# --------------------------------------------------------------------------
# commands


def cmd_forge(config: RunConfig, out, stock=(), ucr=None, truce=None, echo=print):
    """Build corpus files under ``out``; returns ``{source: (train, test)}``."""
    config.validate()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    fcfg = config.forge
    rng = np.random.default_rng(config.seed)
    by_source = {"synthetic": forge.synthetic_records(config.length)}
    errors = []

    stock_files = []
    for p in stock:
        p = Path(p)
        stock_files += sorted(p.glob("*.csv")) if p.is_dir() else [p]
    if stock_files:
        readable = [p for p in stock_files if os.access(p, os.R_OK) and p.is_file()]
        errors += [f"{p}: unreadable" for p in stock_files if p not in readable]
        by_source["stock"] = forge.stock_records(readable, rng, config.length, fcfg.stock_stride, fcfg.stock_fraction)
    if ucr is not None:
        if not Path(ucr).is_dir():
            errors.append(f"{ucr}: not a directory")
        else:
            by_source["ucr"] = forge.ucr_records(ucr, rng, config.length, fcfg.ucr_per_dataset)
    if truce is not None:
        try:
            by_source["truce"] = forge.truce_records(truce, config.length)
        except (OSError, ValueError) as exc:
            errors.append(f"{truce}: {exc}")
    if errors:
        raise TsDiffuseError("unreadable input(s):\n  " + "\n  ".join(errors))

    result = {}
    for source in forge.SOURCES:
        records = by_source.get(source)
        if not records:
            continue
        train_recs, test_recs = forge.split_grouped(records, fcfg.test_fraction, config.seed, fcfg.rounding)
        for split, recs in (("train", train_recs), ("test", test_recs)):
            path = forge.write_jsonl(recs, out / f"{source}_{split}.jsonl")
            _write_meta(path, config, records=len(recs))
        n_series = len({r.group for r in records})
        echo(f"{source}: {n_series} series, {len(records)} pairs -> {len(train_recs)} train / {len(test_recs)} test")
        result[source] = (train_recs, test_recs)
    return result


def _corpus_files(corpus, split):
    p = Path(corpus)
    if p.is_dir():
        files = sorted(p.glob(f"*_{split}.jsonl"))
        if not files:
            raise TsDiffuseError(f"no *_{split}.jsonl files in {p}")
        return files
    return [p]


def load_corpus(corpus, split, length):
    records = []
    for f in _corpus_files(corpus, split):
        records += forge.read_jsonl(f, length)
    return records


def cmd_train(config: RunConfig, corpus, out, resume=None, echo=print):
    """Train on the corpus; writes epoch checkpoints, ``best.tsd`` and ``loss.csv``."""
    config.validate()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    records = load_corpus(corpus, "train", config.length)
    if not records:
        raise TsDiffuseError(f"no training records in {corpus}")
    init = None
    loss_path = out / "loss.csv"
    if resume is not None:
        init = load_checkpoint(resume)
        init.config.trainer = config.trainer
        config = init.config
        mode = "a" if loss_path.exists() else "w"
        rng = np.random.default_rng([config.seed, init.step])
    else:
        mode = "w"
        rng = np.random.default_rng(config.seed)
    best = [math.inf]

    with open(loss_path, mode, encoding="utf-8", newline="\n") as fh:
        if mode == "w":
            fh.write("step,epoch,loss\n")

        def on_step(row):
            fh.write(f"{row.step},{row.epoch},{_fmt(row.loss)}\n")

        def on_epoch(ckpt, mean_loss):
            save_checkpoint(ckpt, out / f"epoch_{ckpt.epoch:04d}.tsd")
            if mean_loss < best[0]:
                best[0] = mean_loss
                save_checkpoint(ckpt, out / "best.tsd")
            echo(f"epoch {ckpt.epoch}: mean loss {mean_loss:.5f} (step {ckpt.step})")

        final = train(config, records, rng, init=init, on_step=on_step, on_epoch=on_epoch)
    _write_meta(loss_path, config)
    return final


def _sample_series(checkpoint, prompts, seeds):
    model = checkpoint.build_model()
    schedule = checkpoint.config.schedule.build()
    out = []
    for start in range(0, len(prompts), SAMPLE_CHUNK):
        chunk = slice(start, start + SAMPLE_CHUNK)
        rngs = [np.random.default_rng(s) for s in seeds[chunk]]
        out.append(sample_batch(model, prompts[chunk], schedule, rngs, checkpoint.config.length))
    return np.concatenate(out)


def cmd_sample(checkpoint, prompt: str, n: int, seed: int, out):
    """Write ``samples.csv`` (one row per series) and one SVG per series."""
    if isinstance(checkpoint, (str, Path)):
        checkpoint = load_checkpoint(checkpoint)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = [pair_seed(seed, f"sample-{k}") for k in range(n)]
    series = _sample_series(checkpoint, [prompt] * n, seeds)
    csv_path = out / "samples.csv"
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        for row in series:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    _write_meta(csv_path, checkpoint.config, prompt=prompt, seed=seed, n=n)
    for k, row in enumerate(series):
        (out / f"sample_{k:03d}.svg").write_text(
            render_svg([row], title=prompt, config_hash=checkpoint.config.hash()), encoding="utf-8")
    return series


def cmd_eval(checkpoint, corpus, out, seed=0, oracle=False, types=None):
    """Generate one series per test pair and write ``report.txt`` / ``report.csv``."""
    records = load_corpus(corpus, "test", None)
    if types is not None:
        records = [r for r in records if r.desc_type in types]
    if not records:
        raise TsDiffuseError("test set is empty")
    records.sort(key=lambda r: r.id)
    reference = [np.asarray(r.series) for r in records]
    if oracle:
        generated = reference
        config = checkpoint.config if checkpoint is not None else RunConfig()
    else:
        if isinstance(checkpoint, (str, Path)):
            checkpoint = load_checkpoint(checkpoint)
        config = checkpoint.config
        seeds = [pair_seed(seed, r.id) for r in records]
        generated = list(_sample_series(checkpoint, [r.text for r in records], seeds))
    report = evaluate(generated, reference, [r.desc_type for r in records], types)
    report.config_hash = config.hash()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(report.to_table(), encoding="utf-8")
    (out / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    _write_meta(out / "report.csv", config, oracle=oracle)
    return report


# --------------------------------------------------------------------------
# argument parsing


def _config_from_args(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    for item in args.set or []:
        if "=" not in item:
            raise TsDiffuseError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        cfg.set(key.strip(), value.strip())
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def build_parser():
    parser = argparse.ArgumentParser(prog="tsdiffuse", description="Text-conditioned time-series diffusion.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help):
        p.add_argument("--config", help="JSON or key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help=out_help)

    p = sub.add_parser("forge", help="build corpus JSONL files")
    common(p, "output directory (default: paths.corpus)")
    p.add_argument("--stock", action="append", default=[], help="timestamp,value CSV file or directory of them")
    p.add_argument("--ucr", help="UCR-style directory: <Name>/<Name>_TRAIN.tsv")
    p.add_argument("--truce", help="TRUCE-style JSON/JSONL file")

    p = sub.add_parser("train", help="train a model")
    common(p, "checkpoint directory (default: paths.checkpoints)")
    p.add_argument("--corpus", help="train JSONL file or corpus directory (default: paths.corpus)")
    p.add_argument("--resume", help="checkpoint to continue from")

    p = sub.add_parser("sample", help="generate series from a prompt")
    common(p, "output directory (default: samples)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--prompt", required=True)
    p.add_argument("-n", type=int, default=1)

    p = sub.add_parser("eval", help="evaluate against a test corpus")
    common(p, "report directory (default: paths.reports)")
    p.add_argument("--checkpoint")
    p.add_argument("--corpus", help="test JSONL file or corpus directory (default: paths.corpus)")
    p.add_argument("--oracle", action="store_true", help="use ground truth as the generated series")
    p.add_argument("--types", help="comma-separated subset of " + ",".join(REPORT_ROWS))
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    configure_threads()
    try:
        cfg = _config_from_args(args)
        if args.command == "forge":
            cmd_forge(cfg, args.out or cfg.paths.corpus, stock=args.stock, ucr=args.ucr, truce=args.truce)
        elif args.command == "train":
            cmd_train(cfg, args.corpus or cfg.paths.corpus, args.out or cfg.paths.checkpoints, resume=args.resume)
        elif args.command == "sample":
            if args.n < 1:
                raise TsDiffuseError("-n must be at least 1")
            cmd_sample(args.checkpoint, args.prompt, args.n, cfg.seed, args.out or "samples")
        elif args.command == "eval":
            if not args.oracle and not args.checkpoint:
                raise TsDiffuseError("--checkpoint is required unless --oracle is given")
            types = None
            if args.types:
                types = [t.strip() for t in args.types.split(",") if t.strip()]
                bad = [t for t in types if t not in REPORT_ROWS]
                if bad:
                    raise TsDiffuseError(f"unknown --types value(s): {', '.join(bad)}")
            ckpt = load_checkpoint(args.checkpoint) if args.checkpoint else None
            report = cmd_eval(ckpt, args.corpus or cfg.paths.corpus, args.out or cfg.paths.reports,
                              seed=cfg.seed, oracle=args.oracle, types=types)
            print(report.to_table(), end="")
    except (TsDiffuseError, OSError, ValueError) as exc:
        print(f"tsdiffuse: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
