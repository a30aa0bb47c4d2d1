"""Command-line pipeline: synth -> train-events -> infer -> embed -> evaluate / ablate.

Exit codes: 0 success, 1 usage error, 2 data or format error.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__, classifiers, evalharness, features, ingest, synthkit
from ._io import atomic_write_text, dump_json, ordered_map
from .classifiers import ClassifierSpec, scaled_mlp_widths
from .embedding import KINDS, embed, write_embeddings, read_embeddings
from .errors import ContractViolation, FormatError, GenreStatError
from .eventmodel import (
    CnnConfig,
    SegmentProbabilities,
    forward,
    load_probabilities,
    load_weights,
    save_probabilities,
    save_weights,
    train_events,
)

log = logging.getLogger("genrestat")

INDEX_NAME = "index.csv"
RUN_CONFIG_NAME = "run_config.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


class StageError(Exception):
    def __init__(self, stage: str, path, cause: Exception):
        self.stage, self.path, self.cause = stage, path, cause
        where = f" ({path})" if path else ""
        super().__init__(f"{stage}{where}: {type(cause).__name__}: {cause}")


def _run_config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    cfg["version"] = __version__
    return cfg


def _sidecar(out: Path) -> Path:
    return out.with_name(out.name + ".config.json")


def _fraction(text: str) -> float:
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number or ratio: {text!r}") from None


def _fraction_list(text: str) -> list[float]:
    return [_fraction(t) for t in text.split(",") if t.strip()]


# --- subcommands -------------------------------------------------------------

def cmd_synth(args) -> None:
    out = Path(args.out)
    if args.recipes:
        recipes, sigs = synthkit.load_recipes(args.recipes)
    else:
        sigs = synthkit.default_signatures(args.n_events)
        recipes = synthkit.default_recipes(args.n_events, overlap=args.overlap)
    out.mkdir(parents=True, exist_ok=True)
    synthkit.save_recipes(out / "recipes.json", recipes, sigs)
    manifest = synthkit.gen_corpus(recipes, args.programmes_per_genre, args.seed, out, sigs)
    if args.clips_per_event > 0:
        synthkit.gen_clip_set(sigs, args.clips_per_event, args.seed, out, overlap=args.clip_overlap)
    atomic_write_text(out / RUN_CONFIG_NAME, dump_json(_run_config(args)))
    log.info("wrote %d programmes to %s", len(manifest), out)


def _clip_spectrograms(manifest_path, n_events: int | None):
    fb = features.mel_filterbank()
    rows = synthkit.read_clip_manifest(manifest_path)
    if not rows:
        raise FormatError(f"{manifest_path}: no clips")
    specs = []
    for path, *_ in rows:
        try:
            seg = ingest.segment(ingest.load_audio(path))[0]
        except GenreStatError as exc:
            raise StageError("train-events", path, exc) from exc
        specs.append(features.log_mel(seg, fb).values)
    n_events = n_events or 1 + max(max(t) for _, _, t in rows)
    return np.stack(specs), synthkit.clip_targets(rows, n_events), n_events


def cmd_train_events(args) -> None:
    x, y, n_events = _clip_spectrograms(args.manifest, args.n_events)
    cfg = CnnConfig(n_events=n_events, width_scale=args.width_scale, seed=args.seed,
                    dropout=args.dropout)
    res = train_events(x, y, cfg, epochs=args.epochs, lr=args.lr, batch_size=args.batch_size,
                       crop_frames=args.crop_frames)
    save_weights(args.out, res.weights, cfg,
                 {"loss_trace": res.loss_trace, "run_config": _run_config(args)})
    log.info("trained event model, final loss %s", res.loss_trace[-1] if res.loss_trace else "n/a")


def cmd_infer(args) -> None:
    manifest = synthkit.DatasetManifest.read(args.manifest)
    weights, cfg, _ = load_weights(args.weights)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fb = features.mel_filterbank()
    model_id = Path(args.weights).stem

    def work(row):
        pid, rel, genre = row
        path = manifest.resolve(rel)
        try:
            segs = ingest.segment(ingest.load_audio(path))
        except GenreStatError as exc:
            raise StageError("infer", path, exc) from exc
        probs = forward(features.log_mel_batch(segs, fb), weights, cfg)
        save_probabilities(SegmentProbabilities(probs, pid, model_id), out / f"{pid}.segp")
        return pid, f"{pid}.segp", genre

    rows = ordered_map(work, manifest.rows)
    _write_index(out / INDEX_NAME, rows)
    atomic_write_text(out / RUN_CONFIG_NAME, dump_json(_run_config(args)))
    log.info("wrote %d SEGP files to %s", len(rows), out)


def _write_index(path: Path, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["programme_id", "path", "genre"])
    writer.writerows(rows)
    atomic_write_text(path, buf.getvalue())


def load_probs_dir(probs_dir, manifest_path=None) -> tuple[list[tuple[str, str]], dict[str, np.ndarray]]:
    """(programme_id, genre) rows plus SEGP matrices for every programme."""
    probs_dir = Path(probs_dir)
    if manifest_path:
        m = synthkit.DatasetManifest.read(manifest_path)
        entries = [(pid, probs_dir / f"{pid}.segp", genre) for pid, _, genre in m.rows]
    else:
        index = probs_dir / INDEX_NAME
        if not index.exists():
            raise FormatError(f"{index}: missing; pass --manifest to map programmes to genres")
        m = synthkit.DatasetManifest.read(index)
        entries = [(pid, probs_dir / rel, genre) for pid, rel, genre in m.rows]
    rows, probs = [], {}
    for pid, path, genre in entries:
        try:
            probs[pid] = load_probabilities(path, pid).probs
        except (GenreStatError, OSError) as exc:
            raise StageError("load-probabilities", path, exc) from exc
        rows.append((pid, genre))
    return rows, probs


def cmd_embed(args) -> None:
    rows, probs = load_probs_dir(args.probs_dir, args.manifest)
    m = next(iter(probs.values())).shape[1]
    if not 1 <= args.k <= m:
        raise ContractViolation(f"--k must satisfy 1 <= k <= M = {m}, got {args.k}")
    out_rows = []
    for pid, genre in rows:
        e = embed(probs[pid], args.kind, args.k)
        e.programme_id = pid
        out_rows.append((e, genre))
    out = Path(args.out)
    write_embeddings(out, out_rows)
    atomic_write_text(_sidecar(out), dump_json(_run_config(args)))


def _spec_from_args(args) -> ClassifierSpec:
    kw = {}
    if args.classifier == "mlp":
        if args.mlp_width_scale != 1.0:
            kw["widths"] = scaled_mlp_widths(args.mlp_width_scale)
        if args.epochs is not None:
            kw["epochs"] = args.epochs
        if args.no_mixup:
            kw["mixup_alpha"] = None
    return ClassifierSpec(args.classifier, seed=args.seed, **kw)


def _write_report(out: Path, report: evalharness.EvaluationReport) -> None:
    atomic_write_text(out, report.to_json())
    stem = out.with_suffix("")
    atomic_write_text(stem.with_name(stem.name + "_folds.csv"), report.folds_csv())
    atomic_write_text(stem.with_name(stem.name + "_confusion.csv"), report.confusion_csv())
    if report.ablation is not None:
        atomic_write_text(stem.with_name(stem.name + "_ablation.csv"), report.ablation_csv())


def cmd_evaluate(args) -> None:
    table = read_embeddings(args.embeddings)
    if not table:
        raise FormatError(f"{args.embeddings}: no rows")
    manifest = [(e.programme_id, genre) for e, genre in table]
    vectors = {e.programme_id: e.vector for e, _ in table}
    folds = evalharness.make_folds(manifest, args.folds, args.seed)
    spec = _spec_from_args(args)
    first = table[0][0]
    report = evalharness.cross_validate(
        manifest, vectors, spec, folds,
        config={"run_config": _run_config(args), "kind": first.kind, "k": first.k})
    _write_report(Path(args.out), report)
    print(f"mean accuracy {report.mean:.2f}% over {args.folds} folds")


def cmd_ablate(args) -> None:
    rows, probs = load_probs_dir(args.probs_dir, args.manifest)
    folds = evalharness.make_folds(rows, args.folds, args.seed)
    spec = _spec_from_args(args)
    report = evalharness.segment_ablation(rows, probs, args.fractions, args.k, spec, folds,
                                          args.seed, args.kind,
                                          config={"run_config": _run_config(args)})
    out = Path(args.out)
    atomic_write_text(out, report.ablation_csv())
    atomic_write_text(_sidecar(out), dump_json(_run_config(args)))
    atomic_write_text(out.with_suffix(".json"), report.to_json())
    for frac, acc in report.ablation.items():
        print(f"fraction {frac:g}: {acc:.2f}%")


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="genrestat", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate the synthetic corpus and event clips")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--recipes", help="JSON with signatures and genre recipes (default: built-in)")
    s.add_argument("--n-events", type=int, default=16)
    s.add_argument("--programmes-per-genre", type=int, default=28)
    s.add_argument("--clips-per-event", type=int, default=30)
    s.add_argument("--overlap", type=float, default=0.8,
                   help="probability of each quieter background event slot in a programme clip")
    s.add_argument("--clip-overlap", type=float, default=0.5,
                   help="probability that a training clip carries extra, quieter events")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train-events", help="train the event CNN on labelled clips")
    s.add_argument("--manifest", required=True, help="clips.csv (clip_id,path,event)")
    s.add_argument("--out", required=True, help="weight manifest path (*.json)")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--n-events", type=int)
    s.add_argument("--width-scale", type=_fraction, default=Fraction(1, 32))
    s.add_argument("--epochs", type=int, default=15)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--batch-size", type=int, default=16)
    s.add_argument("--crop-frames", type=int, default=64)
    # Full-rate dropout keeps a 1/32-width network at chance within a few epochs.
    s.add_argument("--dropout", action="store_true", help="enable the full-size dropout rates")
    s.set_defaults(func=cmd_train_events)

    s = sub.add_parser("infer", help="write one SEGP file per programme")
    s.add_argument("--manifest", required=True)
    s.add_argument("--weights", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("embed", help="programme embeddings from SEGP files")
    s.add_argument("--probs-dir", required=True)
    s.add_argument("--manifest")
    s.add_argument("--kind", choices=KINDS, default="num")
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_embed)

    for name, func, helptext in (("evaluate", cmd_evaluate, "14-fold cross-validation report"),
                                 ("ablate", cmd_ablate, "segment-reduction curve")):
        s = sub.add_parser(name, help=helptext)
        if name == "evaluate":
            s.add_argument("--embeddings", required=True)
        else:
            s.add_argument("--probs-dir", required=True)
            s.add_argument("--manifest")
            s.add_argument("--kind", choices=KINDS, default="num")
            s.add_argument("--k", type=int, default=10)
            s.add_argument("--fractions", type=_fraction_list,
                           default=[round(0.1 * i, 1) for i in range(1, 11)])
        s.add_argument("--classifier", choices=classifiers.MODELS, default="mlp")
        s.add_argument("--folds", type=int, default=evalharness.DEFAULT_FOLDS)
        s.add_argument("--seed", type=int, required=True)
        s.add_argument("--mlp-width-scale", type=_fraction, default=1.0)
        s.add_argument("--epochs", type=int)
        s.add_argument("--no-mixup", action="store_true")
        s.add_argument("--out", required=True)
        s.set_defaults(func=func)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"genrestat: usage error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    for key in ("width_scale", "mlp_width_scale"):
        if isinstance(getattr(args, key, None), Fraction):
            setattr(args, key, float(getattr(args, key)))
    try:
        args.func(args)
    except StageError as exc:
        print(f"genrestat {args.command}: {exc}", file=sys.stderr)
        return 2
    except (GenreStatError, ContractViolation, OSError) as exc:
        path = getattr(exc, "filename", None)
        where = f" ({path})" if path else ""
        print(f"genrestat {args.command}{where}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
