"""Run the task-specialization experiment over several global seeds and summarize.

    python3 scripts/run_tasks.py --seeds 0 1 2 3 4 [--config FILE] [--out DIR]

Prints per-seed accuracies and the averaged specialization gains; with
``--out`` the full artifact set of every seed goes to ``DIR/seed<N>``.
"""

from __future__ import annotations

import argparse
import dataclasses
import pathlib
import time

import numpy as np

from synswitch.config import load_config
from synswitch.experiments import run_tasks, write_tasks


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--config")
    p.add_argument("--out")
    args = p.parse_args(argv)

    base = load_config(args.config)
    gains = []
    for seed in args.seeds:
        t0 = time.perf_counter()
        cfg = dataclasses.replace(base, seed=seed)
        res = run_tasks(cfg)
        acc = {k: r.accuracies for k, r in res.reports.items()}
        c, a, b = acc["combined"], acc["net_a"], acc["net_b"]
        gains.append([
            a["identity"] - c["identity"], b["emotion"] - c["emotion"],
            c["emotion"] - a["emotion"], c["identity"] - b["identity"], res.enrichment,
        ])
        print(f"seed {seed}: " + "  ".join(f"{k} id={v['identity']:.3f} emo={v['emotion']:.3f}" for k, v in acc.items())
              + f"  enrichment={res.enrichment:.2f}  ({time.perf_counter() - t0:.1f}s)", flush=True)
        if args.out:
            d = pathlib.Path(args.out) / f"seed{seed}"
            d.mkdir(parents=True, exist_ok=True)
            write_tasks(res, d)
    g = np.mean(gains, axis=0)
    print(f"mean: netA identity gain {100 * g[0]:+.1f} pts, netB emotion gain {100 * g[1]:+.1f} pts, "
          f"off-task drop A {100 * g[2]:+.1f} / B {100 * g[3]:+.1f} pts, enrichment {g[4]:.2f}")


if __name__ == "__main__":
    main()
