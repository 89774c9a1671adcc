"""Command-line entry point: ``p2p {synth,ingest,train,eval,predict}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
Set ``P2P_NUM_THREADS`` to cap BLAS threads.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import __version__
from .checkpoint import atomic_write, load_checkpoint, save_checkpoint
from .config import AppConfig, load_config
from .errors import (CheckpointMissing, ConfigError, DataError, EmptyDataset, P2PError, TooShort, UnknownFormat,
                     UsageError)
from .evaluation import evaluate_all, render_report
from .ingest import (TRACK_SUFFIX, adapt_external_segments, ensure_dir, heuristic_label, read_track,
                     read_track_dir, write_track)
from .predictors import ModelPredictor, get_baseline
from .synth import class_tallies, generate_dataset
from .tokenizer import final_window, make_examples
from .tracks import BehaviorClass
from .training import history_csv, split_indices, train
from .transformer import forward

log = logging.getLogger("p2p")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
REPORT_FORMATS = ("md", "csv", "json")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _examples_from_dir(cfg: AppConfig, data_dir):
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise DataError(f"data directory {data_dir} does not exist")
    tracks = read_track_dir(data_dir, cfg.ingest.max_gap)
    if not tracks:
        raise EmptyDataset(f"no *{TRACK_SUFFIX} files in {data_dir}")
    need = cfg.tokenizer.window + cfg.tokenizer.horizon
    examples = []
    for t in tracks:
        if len(t) < need:
            log.warning("skipping %s: %d frames < %d", t.id, len(t), need)
            continue
        examples.extend(make_examples(t, cfg.tokenizer))
    if not examples:
        raise TooShort(f"no track in {data_dir} has the {need} frames needed for one example")
    return examples


def cmd_synth(cfg: AppConfig, out_dir) -> dict:
    spec = cfg.synth
    need = cfg.tokenizer.window + cfg.tokenizer.horizon
    if spec.track_len < need:
        raise ConfigError(f"synth.track_len={spec.track_len} is shorter than window+horizon={need}")
    out = ensure_dir(out_dir)
    tracks = generate_dataset(spec)
    for t in tracks:
        write_track(t, out / f"{t.id}{TRACK_SUFFIX}")
    manifest = {
        "seed": spec.seed,
        "n_tracks": len(tracks),
        "n_drone": sum(t.labels.is_drone for t in tracks),
        "n_distractor": sum(not t.labels.is_drone for t in tracks),
        "tallies": class_tallies(tracks),
        "synth": cfg.to_dict()["synth"],
        "files": [f"{t.id}{TRACK_SUFFIX}" for t in tracks],
    }
    atomic_write(out / "manifest.json", _json(manifest))
    return manifest


def cmd_ingest(cfg: AppConfig, in_dir, out_dir, pattern: str = "**/*.json", label: bool = True) -> dict:
    in_dir = Path(in_dir)
    if not in_dir.is_dir():
        raise DataError(f"input directory {in_dir} does not exist")
    out = ensure_dir(out_dir)
    written, skipped = [], []
    for path in sorted(in_dir.glob(pattern)):
        rel = path.relative_to(in_dir).with_suffix("")
        base = "-".join(rel.parts)
        try:
            tracks = adapt_external_segments(path, cfg.ingest.mapping, cfg.ingest.max_gap, track_id=base)
        except DataError as exc:
            log.warning("skipping %s: %s", path, exc)
            skipped.append(str(rel))
            continue
        for t in tracks:
            if label:
                t = type(t)(id=t.id, points=t.points, fps=t.fps, labels=heuristic_label(t, cfg.labeler),
                            image_size=t.image_size)
            write_track(t, out / f"{t.id}{TRACK_SUFFIX}")
            written.append(t.id)
    summary = {"written": written, "skipped": skipped}
    atomic_write(out / "ingest.json", _json(summary))
    return summary


def _metrics_path(checkpoint) -> Path:
    p = Path(checkpoint)
    return p.with_name(p.stem + ".metrics.csv")


def cmd_train(cfg: AppConfig, data_dir, out_checkpoint, metrics=None) -> dict:
    examples = _examples_from_dir(cfg, data_dir)
    log.info("training on %d examples", len(examples))
    result = train(examples, cfg.model, cfg.train, cfg.loss, cfg.interceptor, cfg.scale,
                   on_epoch=lambda r: log.info("epoch %(epoch)d train=%(train_loss).4f val=%(val_loss).4f", r))
    out_checkpoint = Path(out_checkpoint)
    ensure_dir(out_checkpoint.parent)
    save_checkpoint(out_checkpoint, result.params, cfg.model)
    metrics = Path(metrics) if metrics else _metrics_path(out_checkpoint)
    atomic_write(metrics, history_csv(result.history))
    return {"checkpoint": str(out_checkpoint), "metrics": str(metrics), "best_epoch": result.best_epoch,
            "n_train": int(len(result.train_idx)), "n_val": int(len(result.val_idx))}


def _load_model(cfg: AppConfig, checkpoint):
    if checkpoint is None:
        raise CheckpointMissing("the p2p predictor needs --checkpoint")
    if not Path(checkpoint).is_file():
        raise CheckpointMissing(f"checkpoint {checkpoint} not found")
    params, mcfg = load_checkpoint(checkpoint)
    if (mcfg.window, mcfg.horizon) != (cfg.tokenizer.window, cfg.tokenizer.horizon):
        raise ConfigError(f"checkpoint expects W={mcfg.window}, H={mcfg.horizon}; "
                          f"tokenizer has W={cfg.tokenizer.window}, H={cfg.tokenizer.horizon}")
    return params, mcfg


def cmd_eval(cfg: AppConfig, data_dir, predictors: list[str], checkpoint=None, out=None, fmt: str = "md") -> str:
    chosen = {}
    for name in predictors:
        if name == "p2p":
            chosen[name] = None
        else:
            chosen[name] = get_baseline(name)
    if "p2p" in chosen:
        chosen["p2p"] = ModelPredictor(*_load_model(cfg, checkpoint))
    if fmt not in REPORT_FORMATS:
        raise UnknownFormat(f"unknown report format {fmt!r}; use {', '.join(REPORT_FORMATS)}")
    examples = _examples_from_dir(cfg, data_dir)
    if cfg.eval.split == "val":
        _, val_idx = split_indices(examples, cfg.train)
        examples = [examples[i] for i in val_idx]
    report = evaluate_all(chosen, examples, cfg.interceptor, cfg.scale, cfg.eval.all_steps,
                          fingerprint={"config": cfg.fingerprint(), "train_seed": cfg.train.seed,
                                       "synth_seed": cfg.synth.seed, "split": cfg.eval.split},
                          threshold=cfg.eval.threshold)
    text = render_report(report, fmt)
    if out is not None:
        out = Path(out)
        ensure_dir(out.parent)
        atomic_write(out, text)
        atomic_write(out.with_suffix(".json"), render_report(report, "json"))
    return text


def cmd_predict(cfg: AppConfig, checkpoint, track_file) -> dict:
    params, mcfg = _load_model(cfg, checkpoint)
    track = read_track(track_file, cfg.ingest.max_gap)
    ex = final_window(track, cfg.tokenizer)
    out = forward(ex.tokens, params, mcfg)
    positions = ex.anchor[None, :] + out.trajectory
    return {
        "track": track.id,
        "last_frame": ex.t_index,
        "drone_prob": out.drone_prob,
        "behavior": {c.label: float(p) for c, p in zip(BehaviorClass, out.behavior_probs)},
        "intent": out.intent,
        "positions": [[float(x), float(y)] for x, y in positions],
    }


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML configuration file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("--seed", type=int, help="override every seed in the config")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="p2p", description="Motion-token trajectory prediction and pursuit feasibility.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic labelled dataset")
    s.add_argument("--out", required=True, help="output directory")

    s = sub.add_parser("ingest", parents=[common], help="convert external annotations to track files")
    s.add_argument("input", help="directory of external annotation files")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--pattern", default="**/*.json", help="glob for annotation files (default: **/*.json)")
    s.add_argument("--no-label", action="store_true", help="do not attach heuristic labels")

    s = sub.add_parser("train", parents=[common], help="train the transformer")
    s.add_argument("data", nargs="?", help="directory of track files")
    s.add_argument("--out", help="checkpoint path")
    s.add_argument("--metrics", help="metrics CSV path (default: <checkpoint>.metrics.csv)")

    s = sub.add_parser("eval", parents=[common], help="evaluate predictors")
    s.add_argument("data", nargs="?", help="directory of track files")
    s.add_argument("--predictors", default="frame,track,naive", help="comma list of frame,track,naive,p2p")
    s.add_argument("--checkpoint")
    s.add_argument("--out", help="report path; a .json summary is written next to it")
    s.add_argument("--format", choices=["md", "csv"], default="md")

    s = sub.add_parser("predict", parents=[common], help="predict from the last window of a track")
    s.add_argument("track", help="track file")
    s.add_argument("--checkpoint")
    return p


def _run(args) -> int:
    cfg = load_config(args.config, args.overrides, args.seed)
    paths = cfg.paths
    if args.command == "synth":
        manifest = cmd_synth(cfg, args.out)
        print(f"wrote {manifest['n_tracks']} tracks to {args.out}")
    elif args.command == "ingest":
        summary = cmd_ingest(cfg, args.input, args.out, args.pattern, not args.no_label)
        print(f"wrote {len(summary['written'])} tracks, skipped {len(summary['skipped'])} files")
    elif args.command == "train":
        data = args.data or paths.data_dir
        out = args.out or paths.checkpoint
        if data is None or out is None:
            raise UsageError("train needs a data directory and --out")
        info = cmd_train(cfg, data, out, args.metrics)
        print(_json(info), end="")
    elif args.command == "eval":
        data = args.data or paths.data_dir
        if data is None:
            raise UsageError("eval needs a data directory")
        names = [n.strip() for n in args.predictors.split(",") if n.strip()]
        text = cmd_eval(cfg, data, names, args.checkpoint or paths.checkpoint, args.out or paths.out, args.format)
        print(text, end="")
    elif args.command == "predict":
        print(_json(cmd_predict(cfg, args.checkpoint or paths.checkpoint, args.track)), end="")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = os.environ.get("P2P_NUM_THREADS")
    if threads and not (threads.isdigit() and int(threads) > 0):
        print(f"p2p: error: P2P_NUM_THREADS must be a positive integer, got {threads!r}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if threads:
            with threadpool_limits(limits=int(threads)):
                return _run(args)
        return _run(args)
    except UsageError as exc:
        print(f"p2p: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"p2p: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except P2PError as exc:
        print(f"p2p: error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"p2p: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
