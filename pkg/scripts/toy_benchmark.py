"""Run the whole toy pipeline in one directory and print the headline accuracy.

    python scripts/toy_benchmark.py --workdir runs/toy --seed 42
"""

import argparse
import json
import subprocess
import sys
import time
from pathlib import Path


def cli(cwd, *argv):
    t0 = time.perf_counter()
    subprocess.run([sys.executable, "-m", "genrestat.cli", *map(str, argv)], cwd=cwd, check=True)
    print(f"  {argv[0]:<13} {time.perf_counter() - t0:6.1f} s", flush=True)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--workdir", type=Path, default=Path("runs/toy"))
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--classifier", default="mlp")
    p.add_argument("--mlp-width-scale", default="1/8")
    args = p.parse_args()

    wd = args.workdir
    wd.mkdir(parents=True, exist_ok=True)
    cli(wd, "synth", "--out", "data", "--seed", args.seed)
    cli(wd, "train-events", "--manifest", "data/clips.csv", "--out", "weights.json", "--seed", args.seed)
    cli(wd, "infer", "--manifest", "data/manifest.csv", "--weights", "weights.json", "--out", "probs")
    emb = f"num{args.k}.csv"
    cli(wd, "embed", "--probs-dir", "probs", "--kind", "num", "--k", args.k, "--out", emb)
    cli(wd, "evaluate", "--embeddings", emb, "--classifier", args.classifier,
        "--mlp-width-scale", args.mlp_width_scale, "--seed", args.seed, "--out", "report.json")
    rep = json.loads((wd / "report.json").read_text())
    print(f"{args.classifier} mean-num-{args.k}: {rep['mean_accuracy']:.2f}% "
          f"(fold range {min(rep['per_fold_accuracy']):.1f}-{max(rep['per_fold_accuracy']):.1f})")


if __name__ == "__main__":
    main()
