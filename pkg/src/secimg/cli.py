"""Command-line front end: ingest -> render -> segment -> export -> fit/predict -> score.

Exit codes: 0 success, 1 bad arguments, 2 data error, 3 I/O error.
Per-sample failures inside batch stages are tallied and skipped, not fatal;
progress and warnings go to standard error.  Identical configuration and
seed produce byte-identical artifacts, regardless of the worker count.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import baseline, dataset, evaluation
from .binfmt import SectionedBinary, parse_asm_sections, parse_bytes_file, parse_pe
from .errors import SecimgError
from .imaging import WidthScheme, rasterize, resize
from .sectioning import SectionCategory, load_name_map
from .segmentation import (
    ChannelSpec,
    ChannelStack,
    SegmentationMode,
    compose_stack,
    parse_channel_spec,
    replicate_gray_to_3,
)

log = logging.getLogger("secimg")

SCHEMES = ("S1", "S2", "S3", "S4", "S5")
_ALL_CATEGORIES = tuple(SectionCategory)


@dataclass
class RunConfig:
    """Resolved settings for the rendering stages (flags over config file)."""

    scheme: str = "S3"
    spec: ChannelSpec | None = None
    width: int | None = None
    target_h: int = 224
    target_w: int = 224
    seed: int = 0
    jobs: int = 1
    holdout: float = 0.2
    k: int = baseline.DEFAULT_K
    side: int = baseline.DEFAULT_SIDE
    classes: int = baseline.DEFAULT_CLASSES
    png: bool = False
    layout: dataset.DatasetLayout = dataset.DatasetLayout.BIG2015
    input: str | None = None
    labels: str | None = None
    out: str = "out"
    name_map: dict | None = field(default=None, repr=False)

    def stack_for(self, bin: SectionedBinary) -> ChannelStack:
        """Render one sample according to the scheme or explicit channel spec."""
        if self.spec is not None:
            return compose_stack(bin, self.spec, self.target_h, self.target_w)
        if self.scheme in ("S1", "S2", "S3"):
            kind = {"S1": "nataraj", "S2": "sqrt", "S3": "fixed"}[self.scheme]
            scheme = WidthScheme(kind, self.width or 1024)
            img = rasterize(bin.buffer.data, scheme.width_for(max(1, len(bin.buffer))))
            stack = replicate_gray_to_3(
                resize(img, self.target_h, self.target_w), bin.sample_id
            )
            return stack
        mode = SegmentationMode.SPLIT if self.scheme == "S4" else SegmentationMode.MASK
        spec = ChannelSpec(_ALL_CATEGORIES, mode, self.width or 1024)
        return compose_stack(bin, spec, self.target_h, self.target_w)


def _parse_target(text: str) -> tuple[int, int]:
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError:
        raise ValueError(f"bad target size {text!r}, expected HxW like 224x224") from None


def _read_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for line_no, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{path}: line {line_no}: expected key=value")
        values[key.strip().lower()] = value.strip()
    return values


def _config_from(args: argparse.Namespace, file_values: dict[str, str]) -> RunConfig:
    """Merge defaults, config-file values and explicit flags (flags win)."""

    def pick(flag_value, key: str, default, convert=lambda v: v):
        if flag_value is not None:
            return flag_value
        if key in file_values:
            return convert(file_values[key])
        return default

    cfg = RunConfig()
    cfg.scheme = pick(getattr(args, "scheme", None), "scheme", cfg.scheme).upper()
    if cfg.scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {cfg.scheme!r}")
    spec_text = pick(getattr(args, "spec", None), "spec", None)
    cfg.spec = parse_channel_spec(spec_text) if spec_text else None
    cfg.width = pick(getattr(args, "width", None), "width", None, int)
    target = pick(getattr(args, "target", None), "target", None)
    cfg.target_h, cfg.target_w = _parse_target(target) if target else (224, 224)
    cfg.seed = pick(getattr(args, "seed", None), "seed", 0, int)
    cfg.jobs = max(1, pick(getattr(args, "jobs", None), "jobs", 1, int))
    cfg.holdout = pick(getattr(args, "holdout", None), "holdout", 0.2, float)
    cfg.k = pick(getattr(args, "k", None), "k", baseline.DEFAULT_K, int)
    cfg.side = pick(getattr(args, "side", None), "side", baseline.DEFAULT_SIDE, int)
    cfg.classes = pick(getattr(args, "classes", None), "classes", baseline.DEFAULT_CLASSES, int)
    cfg.png = bool(pick(getattr(args, "png", None), "png", False,
                        lambda v: v.lower() in ("1", "true", "yes")))
    cfg.layout = dataset.DatasetLayout(
        pick(getattr(args, "layout", None), "layout", "big2015").lower()
    )
    cfg.input = pick(getattr(args, "input", None), "input", None)
    cfg.labels = pick(getattr(args, "labels", None), "labels", None)
    cfg.out = pick(getattr(args, "out", None), "out", "out")
    map_path = pick(getattr(args, "name_map", None), "name_map", None)
    cfg.name_map = load_name_map(map_path) if map_path else None
    return cfg


def _parse_sample_arg(arg: str, name_map=None) -> SectionedBinary:
    """Load ``file.bytes+file.asm`` or a raw PE path into a SectionedBinary."""
    if "+" in arg:
        bytes_path, asm_path = arg.split("+", 1)
        sample_id = Path(bytes_path).stem
        with open(bytes_path, encoding="ascii", errors="replace") as fh:
            buffer = parse_bytes_file(fh)
        with open(asm_path, encoding="latin-1") as fh:
            return parse_asm_sections(fh, buffer, sample_id, name_map)
    path = Path(arg)
    return parse_pe(path.read_bytes(), path.stem, name_map)


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_manifest(args: argparse.Namespace) -> int:
    cfg = _config_from(args, {})
    entries = dataset.build_manifest(args.input, cfg.layout, cfg.labels, cfg.name_map)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    dataset.write_manifest(entries, out)
    labeled = sum(1 for e in entries if e.family_label is not None)
    log.info("wrote %d entries (%d labeled) to %s", len(entries), labeled, out)
    return 0


def cmd_render(args: argparse.Namespace) -> int:
    cfg = _config_from(args, {})
    bin = _parse_sample_arg(args.infile, cfg.name_map)
    stack = cfg.stack_for(bin)
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    msit_path = out_dir / f"{stack.sample_id}.msit"
    dataset.export_stack(stack, msit_path)
    if cfg.png:
        dataset.export_png_channels(stack, out_dir)
    log.info("rendered %s -> %s (%d channels)", stack.sample_id, msit_path, stack.channels)
    return 0


def _export_entries(entries, cfg: RunConfig, stacks_dir: Path) -> tuple[int, int]:
    """Render and write every manifest entry; returns (written, failed)."""
    stacks_dir.mkdir(parents=True, exist_ok=True)

    def one(entry) -> bool:
        try:
            bin = dataset.load_sectioned(entry, cfg.name_map)
            stack = cfg.stack_for(bin)
            stack.label = entry.family_label
            dataset.export_stack(stack, stacks_dir / f"{entry.sample_id}.msit")
            if cfg.png:
                dataset.export_png_channels(stack, stacks_dir)
            return True
        except SecimgError as exc:
            log.warning("%s: %s; skipped", entry.sample_id, exc)
            return False

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(one, entries))
    else:
        results = [one(e) for e in entries]
    return sum(results), len(results) - sum(results)


def cmd_export(args: argparse.Namespace) -> int:
    cfg = _config_from(args, {})
    entries = dataset.read_manifest(args.manifest)
    written, failed = _export_entries(entries, cfg, Path(cfg.out))
    log.info("exported %d stacks to %s (%d failed)", written, cfg.out, failed)
    return 0 if written else 2


def _load_stacks_dir(stacks_dir: str | Path) -> list[ChannelStack]:
    paths = sorted(Path(stacks_dir).glob("*.msit"))
    return [dataset.import_stack(p) for p in paths]


def cmd_knn_fit(args: argparse.Namespace) -> int:
    stacks = _load_stacks_dir(args.stacks)
    if not stacks:
        log.error("no .msit stacks under %s", args.stacks)
        return 2
    label_map = dataset.read_labels_csv(args.labels)
    keyed = [(s, label_map[s.sample_id]) for s in stacks if s.sample_id in label_map]
    dropped = len(stacks) - len(keyed)
    if dropped:
        log.warning("%d stacks without labels dropped", dropped)
    model = baseline.knn_fit(
        [s for s, _ in keyed],
        [c for _, c in keyed],
        k=args.k if args.k is not None else baseline.DEFAULT_K,
        side=args.side if args.side is not None else baseline.DEFAULT_SIDE,
        n_classes=args.classes if args.classes is not None else baseline.DEFAULT_CLASSES,
    )
    baseline.save_knn(model, args.out)
    log.info("fitted kNN on %d stacks -> %s", len(keyed), args.out)
    return 0


def cmd_knn_predict(args: argparse.Namespace) -> int:
    model = baseline.load_knn(args.model)
    stacks = _load_stacks_dir(args.stacks)
    if not stacks:
        log.error("no .msit stacks under %s", args.stacks)
        return 2
    preds = baseline.knn_predict_matrix(model, stacks)
    evaluation.write_predictions_csv(args.out, preds)
    log.info("wrote %d prediction rows to %s", len(preds.ids), args.out)
    return 0


def _score(preds_path: str, labels_path: str, out_path: str | None) -> dict:
    preds = evaluation.load_predictions_csv(preds_path)
    labels = evaluation.labels_for(preds, dataset.read_labels_csv(labels_path))
    metrics = {
        "logloss": evaluation.logloss(preds, labels),
        "accuracy": evaluation.accuracy(preds, labels),
        "confusion": evaluation.confusion(preds, labels).tolist(),
    }
    if out_path:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        Path(out_path).write_text(json.dumps(metrics, sort_keys=True, indent=2) + "\n")
    return metrics


def cmd_score(args: argparse.Namespace) -> int:
    metrics = _score(args.preds, args.labels, args.out)
    print(f"logloss={metrics['logloss']:.6f} accuracy={metrics['accuracy']:.4f}")
    return 0


def cmd_pipeline(args: argparse.Namespace) -> int:
    file_values = _read_config_file(args.config) if args.config else {}
    cfg = _config_from(args, file_values)
    if not cfg.input:
        raise ValueError("pipeline needs an input directory (flag --input or config input=)")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    entries = dataset.build_manifest(cfg.input, cfg.layout, cfg.labels, cfg.name_map)
    dataset.write_manifest(entries, out / "manifest.jsonl")
    log.info("manifest: %d entries", len(entries))

    train, holdout = dataset.stratified_split(entries, cfg.holdout, cfg.seed)
    log.info("split: %d train / %d holdout (fraction %.2f, seed %d)",
             len(train), len(holdout), cfg.holdout, cfg.seed)

    stacks_dir = out / "stacks"
    written, failed = _export_entries(entries, cfg, stacks_dir)
    log.info("stacks: %d written, %d failed", written, failed)
    if not written:
        return 2

    for name, part in (("train", train), ("holdout", holdout)):
        dataset.write_labels_csv(
            out / f"{name}_labels.csv",
            {e.sample_id: e.family_label for e in part},
        )

    train_stacks = [
        dataset.import_stack(stacks_dir / f"{e.sample_id}.msit")
        for e in train
        if (stacks_dir / f"{e.sample_id}.msit").exists()
    ]
    model = baseline.knn_fit(
        train_stacks,
        [e.family_label for e in train if (stacks_dir / f"{e.sample_id}.msit").exists()],
        k=cfg.k, side=cfg.side, n_classes=cfg.classes,
    )
    baseline.save_knn(model, out / "model.msit")

    holdout_stacks = [
        dataset.import_stack(stacks_dir / f"{e.sample_id}.msit")
        for e in holdout
        if (stacks_dir / f"{e.sample_id}.msit").exists()
    ]
    preds = baseline.knn_predict_matrix(model, holdout_stacks)
    evaluation.write_predictions_csv(out / "predictions.csv", preds)

    metrics = _score(out / "predictions.csv", out / "holdout_labels.csv", out / "metrics.json")
    print(f"logloss={metrics['logloss']:.6f} accuracy={metrics['accuracy']:.4f}")
    return 0


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def _add_render_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scheme", choices=SCHEMES, help="width/segmentation scheme (default S3)")
    p.add_argument("--spec", help='channel spec, e.g. "mode=mask;channels=imgs-1024,.text,.rsrc;width=1024"')
    p.add_argument("--width", type=int, help="row width override for S3/S4/S5")
    p.add_argument("--target", help="model input size HxW (default 224x224)")
    p.add_argument("--png", action="store_true", default=None, help="also write per-channel PNGs")
    p.add_argument("--name-map", dest="name_map", help="section name map overlay file")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="secimg",
        description="Section-segmented grayscale imaging of executables, dataset export, and scoring.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("manifest", help="scan a corpus directory into a JSONL manifest")
    p.add_argument("--input", required=True, help="corpus root directory")
    p.add_argument("--layout", choices=[l.value for l in dataset.DatasetLayout], default=None)
    p.add_argument("--labels", help="Id,Class label CSV")
    p.add_argument("--name-map", dest="name_map")
    p.add_argument("--out", required=True, help="manifest JSONL path")
    p.set_defaults(func=cmd_manifest)

    p = sub.add_parser("render", help="render one sample to an MSIT stack")
    p.add_argument("--in", dest="infile", required=True,
                   help="PE path, or bytes+asm pair joined with '+'")
    p.add_argument("--out", help="output directory (default out)")
    _add_render_flags(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("export", help="render every manifest entry to MSIT stacks")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", help="stacks output directory (default out)")
    p.add_argument("--jobs", type=int, help="worker threads (default 1)")
    _add_render_flags(p)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("knn-fit", help="fit the nearest-neighbor baseline on stacks")
    p.add_argument("--stacks", required=True, help="directory of .msit stacks")
    p.add_argument("--labels", required=True, help="Id,Class label CSV")
    p.add_argument("--k", type=int)
    p.add_argument("--side", type=int, help="per-channel feature side length (default 64)")
    p.add_argument("--classes", type=int, help="number of classes (default 9)")
    p.add_argument("--out", required=True, help="model output path")
    p.set_defaults(func=cmd_knn_fit)

    p = sub.add_parser("knn-predict", help="predict class probabilities for stacks")
    p.add_argument("--model", required=True)
    p.add_argument("--stacks", required=True)
    p.add_argument("--out", required=True, help="prediction CSV path")
    p.set_defaults(func=cmd_knn_predict)

    p = sub.add_parser("score", help="score a prediction CSV against labels")
    p.add_argument("--preds", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", help="metrics JSON path")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("pipeline", help="manifest -> stacks -> kNN -> predictions -> metrics")
    p.add_argument("--config", help="key=value config file mirroring the flags")
    p.add_argument("--input", help="corpus root directory")
    p.add_argument("--layout", choices=[l.value for l in dataset.DatasetLayout], default=None)
    p.add_argument("--labels")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--holdout", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--side", type=int)
    p.add_argument("--classes", type=int)
    _add_render_flags(p)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except ValueError as exc:
        log.error("bad arguments: %s", exc)
        return 1
    except SecimgError as exc:
        log.error("data error: %s", exc)
        return 2
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
