"""Run the generalizer/memorizer experiment over several global seeds and summarize.

    python3 scripts/run_generalization.py --seeds 0 1 2 3 4 [--config FILE] [--out DIR]
"""

from __future__ import annotations

import argparse
import dataclasses
import pathlib
import time

import numpy as np

from synswitch import analysis
from synswitch.config import load_config
from synswitch.experiments import run_generalization, write_generalization


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--config")
    p.add_argument("--out")
    args = p.parse_args(argv)

    base = load_config(args.config)
    acc = []
    for seed in args.seeds:
        t0 = time.perf_counter()
        res = run_generalization(dataclasses.replace(base, seed=seed))
        row = [res.accuracy(n, s) for n in ("generalizer", "memorizer") for s in ("train", "test")]
        acc.append(row)
        lin = analysis.trajectory_stats(res.linear)["identity"]
        sub = analysis.trajectory_stats(res.subset)["identity"]
        var = {n: h.variance for n, h in res.histograms.items()}
        print(f"seed {seed}: G {row[0]:.3f}/{row[1]:.3f}  M {row[2]:.3f}/{row[3]:.3f}  "
              f"var G={var['generalizer']:.4f} M={var['memorizer']:.4f}  "
              f"low-units G={res.low_fraction['generalizer']:.2f} M={res.low_fraction['memorizer']:.2f}  "
              f"low-share G={res.low_share['generalizer']:.3f} M={res.low_share['memorizer']:.3f}  "
              f"linear rho={lin['spearman_rho']:.2f}  subset sign changes={sub['sign_changes']}  "
              f"({time.perf_counter() - t0:.1f}s)", flush=True)
        if args.out:
            d = pathlib.Path(args.out) / f"seed{seed}"
            d.mkdir(parents=True, exist_ok=True)
            write_generalization(res, d)
    m = np.mean(acc, axis=0)
    print(f"mean (train/test): generalizer {m[0]:.3f}/{m[1]:.3f}  memorizer {m[2]:.3f}/{m[3]:.3f}")


if __name__ == "__main__":
    main()
