# sitslab/cli.py: the synth, train, eval, baseline and compare commands
from __future__ import annotations

import argparse
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .config import (
    MAX_DATES,
    OVERRIDE_KEYS,
    PRESETS,
    SplitSpec,
    SynthSpec,
    apply_overrides,
    get_preset,
    load_config_file,
)
from .data import partition_digest, save_dataset, split
from .errors import ConfigError, SitslabError
from .forest import SOURCES, flatten_features
from .metrics import aggregate
from .model import load_checkpoint
from .numeric import RngStream
from .optim import write_history
from .pipeline import (
    ABLATION_METHODS,
    TABLE_METHODS,
    compare_methods,
    evaluate_model,
    iter_splits,
    method_slug,
    prepare,
    rf_label,
    run_forest,
    run_od2rnn,
)
from .plots import attention_figure, confusion_figure, history_figure, write_figure
from .preprocess import BandScaler
from .reports import write_comparison, write_json, write_method_reports
from .synth import generate_synthetic

log = logging.getLogger(__name__)

__all__ = ["main", "build_parser", "RunManifest", "configure_logging"]

# used when neither the command line nor --config sets a value
DEFAULTS = {
    "seed": 0, "preset": "desk", "splits": 10, "split_index": 0, "n_jobs": 1, "sources": "both",
    "classes": 8, "samples_per_class": 75, "t_opt": 20, "t_rad": 12, "noise": 0.05, "cloud_rate": 0.2,
}
LOG_FORMAT = "[%(levelname)s] %(name)s: %(message)s"


@dataclass
class RunManifest:
    command: str
    seed: int
    config: dict = field(default_factory=dict)
    dataset_digest: str | None = None
    deviations: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    partitions: list[str] = field(default_factory=list)
    version: str = __version__

    def add(self, *paths) -> None:
        self.outputs.extend(str(p) for p in paths)

    def write(self, out_dir: str | Path) -> Path:
        path = Path(out_dir) / "run_manifest.json"
        self.add(path)
        return write_json(asdict(self), path)


def configure_logging(verbosity: int = 0) -> None:
    level = logging.DEBUG if verbosity > 0 else logging.WARNING if verbosity < 0 else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


# ---------- parser ----------
def _positive(kind):
    def parse(text: str):
        value = kind(text)
        if value <= 0:
            raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
        return value
    return parse


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat TOML file whose keys mirror these flags")
    p.add_argument("--seed", type=int)
    g = p.add_mutually_exclusive_group()
    g.add_argument("-v", "--verbose", action="store_const", const=1, dest="verbosity")
    g.add_argument("-q", "--quiet", action="store_const", const=-1, dest="verbosity")


def _add_data(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="dataset manifest.json")
    p.add_argument("--out", help="output directory")
    p.add_argument("--splits", type=_positive(int), help="number of random splits (default 10)")


def _add_model(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--epochs", type=_positive(int))
    p.add_argument("--batch-size", type=_positive(int))
    p.add_argument("--learning-rate", type=_positive(float))
    p.add_argument("--log-every", type=_positive(int))
    p.add_argument("--optical-hidden", type=_positive(int))
    p.add_argument("--radar-hidden", type=_positive(int))
    p.add_argument("--fc1-units", type=_positive(int))
    p.add_argument("--fc2-units", type=_positive(int))
    p.add_argument("--dropout", type=float)


def _add_forest(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rf-trees", type=_positive(int), nargs="+")
    p.add_argument("--rf-depths", type=_positive(int), nargs="+")
    p.add_argument("--n-jobs", type=_positive(int), help="processes for tree fitting")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sitslab", description="Radar/optical SITS object classification")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    _add_common(p)
    p.add_argument("--out", help="output directory")
    p.add_argument("--classes", type=int)
    p.add_argument("--samples-per-class", type=int)
    p.add_argument("--t-opt", type=int)
    p.add_argument("--t-rad", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--cloud-rate", type=float)

    p = sub.add_parser("train", help="train OD2RNN on one split")
    _add_common(p)
    _add_data(p)
    _add_model(p)
    p.add_argument("--split-index", type=int, help="which random split to train on (default 0)")
    p.add_argument("--sources", choices=("both", "optical", "radar"))
    p.add_argument("--figures", action="store_true", default=None)

    p = sub.add_parser("eval", help="evaluate a checkpoint over random splits")
    _add_common(p)
    _add_data(p)
    p.add_argument("--checkpoint")
    p.add_argument("--figures", action="store_true", default=None)

    p = sub.add_parser("baseline", help="Random Forest grid search + evaluation")
    _add_common(p)
    _add_data(p)
    _add_forest(p)
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--source", choices=SOURCES)

    p = sub.add_parser("compare", help="RF(S1), RF(S2), RF(S1,S2) and OD2RNN on identical splits")
    _add_common(p)
    _add_data(p)
    _add_model(p)
    _add_forest(p)
    p.add_argument("--ablations", action="store_true", default=None, help="add single-source OD2RNN rows")
    p.add_argument("--figures", action="store_true", default=None)
    return parser


def _merge_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> None:
    """Fill flags left unset from --config, then from DEFAULTS."""
    if args.config:
        for key, value in load_config_file(args.config).items():
            if key in ("command", "config") or not hasattr(args, key):
                raise ConfigError(f"{args.config}: unknown key '{key}' for command '{args.command}'")
            if getattr(args, key) is None:
                setattr(args, key, value)
    for key, value in DEFAULTS.items():
        if getattr(args, key, False) is None:
            setattr(args, key, value)
    for key in ("data", "out", "checkpoint", "source"):
        if hasattr(args, key) and getattr(args, key) is None:
            parser.error(f"{args.command}: --{key} is required (flag or config file)")
    _check_ranges(args, parser)


def _check_ranges(args: argparse.Namespace, parser: argparse.ArgumentParser) -> None:
    # flag and config values alike; out-of-range settings are usage errors
    def bad(key: str, rule: str):
        parser.error(f"{args.command}: --{key.replace('_', '-')} {rule}, got {getattr(args, key)}")

    for key in ("t_opt", "t_rad"):
        value = getattr(args, key, None)
        if value is not None and not 2 <= value <= MAX_DATES:
            bad(key, f"must lie in [2, {MAX_DATES}]")
    if getattr(args, "noise", None) is not None and args.noise < 0:
        bad("noise", "must be >= 0")
    for key in ("cloud_rate", "dropout"):
        value = getattr(args, key, None)
        if value is not None and not 0.0 <= value < 1.0:
            bad(key, "must lie in [0, 1)")


def _preset(args):
    overrides = {k: getattr(args, k, None) for k in OVERRIDE_KEYS}
    return apply_overrides(get_preset(args.preset), overrides)


def _split_spec(args) -> SplitSpec:
    return SplitSpec(seed=args.seed, repeats=args.splits)


# ---------- commands ----------
def cmd_synth(args, parser) -> RunManifest:
    if args.classes < 2:
        parser.error(f"--classes must be >= 2, got {args.classes}")
    if args.samples_per_class < 3:
        parser.error(f"--samples-per-class must be >= 3, got {args.samples_per_class}")
    pairs = tuple((a, b) for a, b in SynthSpec.confusable_pairs if b < args.classes)
    spec = SynthSpec(num_classes=args.classes, samples_per_class=args.samples_per_class, t_opt=args.t_opt,
                     t_rad=args.t_rad, noise_sigma=args.noise, cloud_rate=args.cloud_rate,
                     confusable_pairs=pairs, radar_blind_pairs=max(0, len(pairs) - 1))
    ds = generate_synthetic(spec, RngStream(args.seed).substream("synth"))
    manifest = RunManifest("synth", args.seed, {"synth": asdict(spec)})
    path = save_dataset(ds, args.out)
    manifest.add(path, path.parent / "objects.csv")
    return manifest


def cmd_train(args, parser) -> RunManifest:
    preset, deviations = _preset(args)
    data = prepare(args.data)
    out = Path(args.out)
    spec = SplitSpec(seed=args.seed, repeats=args.split_index + 1)
    part = split(data.ready, spec, args.split_index)
    digest = partition_digest(part)
    log.info("training on split %d (partition %s)", args.split_index, digest)
    ckpt = out / "checkpoint.npz"
    res = run_od2rnn(part, digest, preset, args.seed, args.sources, checkpoint_path=ckpt)
    manifest = RunManifest("train", args.seed, {"preset": preset.snapshot(), "sources": args.sources,
                                                "split_index": args.split_index},
                           data.digest, deviations, partitions=[digest])
    manifest.add(ckpt, write_history(res.history, out / "history.csv"))
    manifest.timings["train"] = res.seconds
    if args.figures:
        model, _ = load_checkpoint(ckpt)
        manifest.add(write_figure(history_figure(res.history), out / "history.html"),
                     write_figure(attention_figure(model, part.test), out / "attention.html"))
    return manifest


def cmd_eval(args, parser) -> RunManifest:
    model, meta = load_checkpoint(args.checkpoint)
    scaler = BandScaler.from_dict(meta["scaler"]) if meta.get("scaler") else None
    data = prepare(args.data, scaler)
    label = {"both": "OD2RNN", "radar": "OD2RNN(S1)", "optical": "OD2RNN(S2)"}[meta["sources"]]
    reports, digests = [], []
    t0 = time.perf_counter()
    for part, digest in iter_splits(data.ready, _split_spec(args)):
        reports.append(evaluate_model(model, part.test, label))
        digests.append(digest)
    agg = aggregate(reports)
    manifest = RunManifest("eval", args.seed, {"checkpoint": str(args.checkpoint), "model": model.describe()},
                           data.digest, partitions=digests)
    manifest.add(*write_method_reports(args.out, method_slug(label), label, agg, data.ready.class_names, digests))
    manifest.timings["eval"] = time.perf_counter() - t0
    if args.figures:
        manifest.add(write_figure(confusion_figure(agg, data.ready.class_names),
                                  Path(args.out) / f"{method_slug(label)}_confusion.html"))
    return manifest


def cmd_baseline(args, parser) -> RunManifest:
    preset, deviations = _preset(args)
    data = prepare(args.data)
    label = rf_label(args.source)
    results = [run_forest(part, digest, args.source, preset, args.seed, args.n_jobs)
               for part, digest in iter_splits(data.ready, _split_spec(args))]
    agg = aggregate([r.report for r in results])
    digests = [r.partition for r in results]
    first = data.ready.samples[0]
    lengths = {src: int(flatten_features(first, src).size) for src in SOURCES}
    manifest = RunManifest("baseline", args.seed, {"source": args.source, "rf_trees": list(preset.rf_trees),
                                                   "rf_depths": list(preset.rf_depths),
                                                   "feature_lengths": lengths},
                           data.digest, deviations, partitions=digests)
    manifest.add(*write_method_reports(args.out, method_slug(label), label, agg, data.ready.class_names, digests,
                                       [r.selected for r in results]))
    manifest.timings[label] = sum(r.seconds for r in results)
    return manifest


def cmd_compare(args, parser) -> RunManifest:
    preset, deviations = _preset(args)
    data = prepare(args.data)
    methods = TABLE_METHODS + (ABLATION_METHODS if args.ablations else ())
    results = compare_methods(data.ready, _split_spec(args), preset, args.seed, methods, args.n_jobs)
    out, names = Path(args.out), data.ready.class_names
    aggs = {m: aggregate([r.report for r in rs]) for m, rs in results.items()}
    digests = [r.partition for r in results[methods[0]]]
    manifest = RunManifest("compare", args.seed, {"preset": preset.snapshot(), "methods": list(methods)},
                           data.digest, deviations, partitions=digests)
    for m, rs in results.items():
        manifest.add(*write_method_reports(out, method_slug(m), m, aggs[m], names, digests, [r.selected for r in rs]))
        manifest.timings[m] = sum(r.seconds for r in rs)
    manifest.add(*write_comparison(out, aggs, names))
    if args.figures:
        for m, agg in aggs.items():
            manifest.add(write_figure(confusion_figure(agg, names), out / f"{method_slug(m)}_confusion.html"))
    return manifest


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "baseline": cmd_baseline,
            "compare": cmd_compare}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbosity or 0)
    try:
        _merge_config(args, parser)
        t0 = time.perf_counter()
        manifest = COMMANDS[args.command](args, parser)
        manifest.timings["total"] = time.perf_counter() - t0
        manifest.write(args.out)
    except (SitslabError, OSError) as e:
        log.error("%s: %s", type(e).__name__, e)
        return 1
    log.info("%s done; %d file(s) written to %s", args.command, len(manifest.outputs), args.out)
    return 0
