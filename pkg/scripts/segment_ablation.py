"""Accuracy when each test programme keeps only a fraction of its segments.

    python scripts/segment_ablation.py --probs-dir runs/toy/probs --k 4
"""

import argparse

from genrestat import evalharness as ev
from genrestat.classifiers import ClassifierSpec, scaled_mlp_widths
from genrestat.cli import load_probs_dir


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--probs-dir", required=True)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--kind", default="num")
    p.add_argument("--classifier", default="mlp")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--mlp-width-scale", type=float, default=1 / 8)
    args = p.parse_args()

    manifest, probs = load_probs_dir(args.probs_dir)
    kw = {"widths": scaled_mlp_widths(args.mlp_width_scale)} if args.classifier == "mlp" else {}
    spec = ClassifierSpec(args.classifier, seed=args.seed, **kw)
    folds = ev.make_folds(manifest, ev.DEFAULT_FOLDS, args.seed)
    fractions = [round(0.1 * i, 1) for i in range(1, 11)]
    rep = ev.segment_ablation(manifest, probs, fractions, args.k, spec, folds, args.seed, args.kind)
    full = rep.ablation[1.0]
    for f, acc in rep.ablation.items():
        bar = "#" * int(round(acc / 2))
        print(f"{f:4.1f}  {acc:6.2f}%  {acc - full:+6.2f}  {bar}")


if __name__ == "__main__":
    main()
