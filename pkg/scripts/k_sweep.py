"""Accuracy against the number of tags per segment, for each classifier.

Needs the SEGP directory of a finished toy run (see toy_benchmark.py).
The archive figures in REFERENCE_ACCURACY are printed alongside for
orientation; the toy corpus has 16 events, not 527, so only the trend
is comparable.

    python scripts/k_sweep.py --probs-dir runs/toy/probs --seeds 0 1 2
"""

import argparse

import numpy as np

from genrestat import evalharness as ev
from genrestat.classifiers import ClassifierSpec, scaled_mlp_widths
from genrestat.cli import load_probs_dir
from genrestat.embedding import embed


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--probs-dir", required=True)
    p.add_argument("--ks", type=int, nargs="+", default=[1, 2, 4, 6, 8, 10])
    p.add_argument("--kinds", nargs="+", default=["num", "prob"])
    p.add_argument("--classifiers", nargs="+", default=["lr", "svm", "dt", "rf", "mlp"])
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--mlp-width-scale", type=float, default=1 / 8)
    args = p.parse_args()

    manifest, probs = load_probs_dir(args.probs_dir)
    ref = ev.REFERENCE_ACCURACY["by_k"]
    cols = [f"{kind}-{k}" for k in args.ks for kind in args.kinds]
    print(f"{'':6}" + "".join(f"{c:>10}" for c in cols))
    for model in args.classifiers:
        kw = {"widths": scaled_mlp_widths(args.mlp_width_scale)} if model == "mlp" else {}
        row = []
        for k in args.ks:
            for kind in args.kinds:
                emb = {pid: embed(v, kind, k).vector for pid, v in probs.items()}
                accs = [ev.cross_validate(manifest, emb, ClassifierSpec(model, seed=s, **kw),
                                          ev.make_folds(manifest, ev.DEFAULT_FOLDS, s)).mean
                        for s in args.seeds]
                row.append(float(np.median(accs)))
        print(f"{model:6}" + "".join(f"{a:10.2f}" for a in row), flush=True)
        print(f"{'  ref':6}" + "".join(f"{ref[model].get(c, float('nan')):10.1f}" for c in cols))


if __name__ == "__main__":
    main()
