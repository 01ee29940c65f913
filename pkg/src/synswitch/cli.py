"""Command line entry point: ``synswitch <command> ...``.

Experiment commands take ``--config FILE`` plus one flag per config key
(``--tasks.combined.epochs 5``); flags win over the file.  Set
``SYNSWITCH_LOG`` to DEBUG/INFO/WARNING to control log output.

Failures print one JSON object on stderr (``{"error": ..., "message": ...}``)
and exit with status 1.
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from synswitch import __version__, analysis, experiments
from synswitch.config import dump_config, leaf_keys, load_config, parse_value
from synswitch.data import FILENAME_RULE, default_codecs
from synswitch.errors import SynswitchError
from synswitch.modulation import BlendSpec, blend, diff, sweep
from synswitch.persistence import (
    atomic_write_text,
    load_dataset,
    load_modmatrix,
    load_network,
    network_checksum,
    save_dataset,
    save_modmatrix,
    save_network,
    write_csv,
)

log = logging.getLogger("synswitch")

LOG_ENV = "SYNSWITCH_LOG"


class CommandError(SynswitchError):
    """Bad command-line usage detected after parsing."""


def _file_digest(path: Path) -> str:
    return hashlib.blake2b(path.read_bytes(), digest_size=8).hexdigest()


class Staging:
    """Collect outputs in a hidden sibling directory; publish them all or none."""

    def __init__(self, out_dir):
        self.out = Path(out_dir)
        self.out.parent.mkdir(parents=True, exist_ok=True)
        self.dir = Path(tempfile.mkdtemp(prefix=f".{self.out.name}.staging-", dir=self.out.parent))

    def __enter__(self):
        return self.dir

    def __exit__(self, exc_type, exc, tb):
        try:
            if exc_type is None:
                self.out.mkdir(parents=True, exist_ok=True)
                for p in sorted(self.dir.iterdir()):
                    os.replace(p, self.out / p.name)
        finally:
            shutil.rmtree(self.dir, ignore_errors=True)
        return False


def _manifest(stage: Path, command: str, files: list[Path]) -> None:
    doc = {
        "command": command,
        "version": __version__,
        "created": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
        "files": {p.name: _file_digest(p) for p in sorted(files, key=lambda p: p.name)},
    }
    atomic_write_text(stage / "manifest.json", json.dumps(doc, indent=2) + "\n")


def _config_from(args):
    overrides = {}
    for key in leaf_keys():
        value = getattr(args, "cfg__" + key.replace(".", "__"), None)
        if value is not None:
            overrides[key] = parse_value(value)
    return load_config(args.config, overrides)


def _run_experiment(cfg, command, body) -> Path:
    with Staging(cfg.output_dir) as stage:
        files = body(stage)
        cfg_path = stage / "config.toml"
        atomic_write_text(cfg_path, dump_config(cfg))
        _manifest(stage, command, files + [cfg_path])
    return Path(cfg.output_dir)


# -- commands ---------------------------------------------------------------------------


def cmd_gen_data(args):
    cfg = _config_from(args)
    if cfg.data.source != "synthetic":
        raise CommandError("gen-data needs data.source = 'synthetic'")

    def body(stage):
        data = experiments.load_data(cfg)
        csv_path = stage / "dataset.csv"
        return [csv_path, save_dataset(data, csv_path)]

    out = _run_experiment(cfg, "gen-data", body)
    print(out / "dataset.csv")


def cmd_experiment_tasks(args):
    cfg = _config_from(args)

    def body(stage):
        res = experiments.run_tasks(cfg)
        for name, rep in res.reports.items():
            log.info("%s: %s", name, rep.accuracies)
        return experiments.write_tasks(res, stage)

    print(_run_experiment(cfg, "experiment-tasks", body))


def cmd_experiment_gen(args):
    cfg = _config_from(args)

    def body(stage):
        res = experiments.run_generalization(cfg)
        for key, rep in res.reports.items():
            log.info("%s/%s: %s", *key, rep.accuracies)
        return experiments.write_generalization(res, stage)

    print(_run_experiment(cfg, "experiment-gen", body))


def _blend_spec(args) -> BlendSpec:
    if args.mode == "linear":
        return BlendSpec("linear", alpha=args.alpha)
    return BlendSpec("subset", fraction=args.fraction, selection=args.selection, seed=args.seed)


def cmd_blend(args):
    net = load_network(args.net)
    mod = load_modmatrix(args.mod)
    spec = _blend_spec(args)
    out = blend(net, mod, spec)
    save_network(out, args.output, provenance=f"blend:{spec.mode}:{spec.parameter!r}:{spec.selection}:{spec.seed}")
    print(args.output)


def cmd_diff(args):
    a, b = load_network(args.a), load_network(args.b)
    save_modmatrix(diff(a, b), args.output, provenance=f"diff:{Path(args.b).name}-{Path(args.a).name}")
    print(args.output)


def _dataset_for(net, path):
    data = load_dataset(path)
    width = max(c.stop for c in data.codecs)
    if width != net.spec.n_outputs:
        # identity-only networks: drop the emotion codec
        codecs = default_codecs(data.n_identities, data.n_emotions, with_emotion=False)
        if max(c.stop for c in codecs) == net.spec.n_outputs:
            data = data.with_codecs(codecs)
    return data


def cmd_eval(args):
    net = load_network(args.net)
    data = _dataset_for(net, args.data)
    rep = analysis.evaluate(net, data, data.codecs)
    doc = {"n_patterns": rep.n_patterns, "accuracies": rep.accuracies, "combined": rep.combined,
           "confusion": {k: v.tolist() for k, v in rep.confusion.items()}}
    print(json.dumps(doc, sort_keys=True))


def cmd_sweep(args):
    a, b = load_network(args.a), load_network(args.b)
    data = _dataset_for(a, args.data)
    template = BlendSpec(args.mode, selection=args.selection, seed=args.seed)
    res = sweep(a, b, data, data.codecs, template, args.steps)
    params, series = analysis.sweep_series(res)
    write_csv(args.output, ["parameter"] + list(series),
              [[p] + [series[k][i] for k in series] for i, p in enumerate(params)])
    if args.steps >= 3:
        stats = analysis.series_stats(params, series)
        print(json.dumps(stats, sort_keys=True))
    print(args.output)


def cmd_inspect(args):
    path = Path(args.file)
    doc = json.loads(path.read_text())
    kind = doc.get("kind")
    info = {"file": str(path), "kind": kind, "format_version": doc.get("format_version")}
    if kind == "network":
        net = load_network(path)
        h = analysis.weight_histogram(net)
        info.update(layer_sizes=list(net.spec.layer_sizes), n_params=net.spec.n_params(),
                    checksum=network_checksum(net), provenance=doc.get("provenance", ""),
                    weight_mean=h.mean, weight_variance=h.variance)
    elif kind == "modulation":
        mod = load_modmatrix(path)
        flat = mod.flat_delta()
        info.update(layer_sizes=list(mod.spec.layer_sizes), checksum_a=mod.checksum_a, checksum_b=mod.checksum_b,
                    nonzero=int(np.count_nonzero(flat)), max_abs_delta=float(np.abs(flat).max()),
                    above_tau=len([d for d in flat if abs(d) >= args.tau]), tau=args.tau)
    else:
        raise CommandError(f"{path}: cannot inspect kind {kind!r}")
    print(json.dumps(info, sort_keys=True))


# -- parser -----------------------------------------------------------------------------------


def _add_config_flags(p):
    p.add_argument("--config", help="TOML experiment config; flags below override it")
    g = p.add_argument_group("config keys")
    for key, t in leaf_keys().items():
        name = getattr(t, "__name__", str(t))
        g.add_argument(f"--{key}", dest="cfg__" + key.replace(".", "__"), metavar="VALUE", help=name)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="synswitch", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-data", help="write the synthetic dataset (CSV + manifest)")
    _add_config_flags(s)
    s.set_defaults(func=cmd_gen_data)

    s = sub.add_parser("experiment-tasks", help="joint training, fork, subtask specialization")
    _add_config_flags(s)
    s.set_defaults(func=cmd_experiment_tasks)

    s = sub.add_parser("experiment-gen", help="weight-decay generalizer vs memorizer, blending sweeps")
    _add_config_flags(s)
    s.set_defaults(func=cmd_experiment_gen)

    s = sub.add_parser("blend", help="apply a modulation matrix to its source network")
    s.add_argument("--net", required=True)
    s.add_argument("--mod", required=True)
    s.add_argument("--mode", choices=("linear", "subset"), default="linear")
    s.add_argument("--alpha", type=float, default=0.0)
    s.add_argument("--fraction", type=float, default=0.0)
    s.add_argument("--selection", choices=("random", "magnitude"), default="random")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_blend)

    s = sub.add_parser("diff", help="modulation matrix B - A of two network files")
    s.add_argument("a")
    s.add_argument("b")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_diff)

    s = sub.add_parser("eval", help="accuracy report of a network on a dataset CSV")
    s.add_argument("--net", required=True)
    s.add_argument("--data", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="evaluate blends from A to B")
    s.add_argument("a")
    s.add_argument("b")
    s.add_argument("--data", required=True)
    s.add_argument("--mode", choices=("linear", "subset"), default="linear")
    s.add_argument("--steps", type=int, default=11)
    s.add_argument("--selection", choices=("random", "magnitude"), default="random")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("inspect", help="summarize a network or modulation file")
    s.add_argument("file")
    s.add_argument("--tau", type=float, default=0.03)
    s.set_defaults(func=cmd_inspect)

    p.epilog = (
        "Image datasets: set data.source = 'images' and data.directory; files are named "
        f"<identity>_<emotion>[_<sample>].pgm (pattern {FILENAME_RULE.pattern})."
    )
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get(LOG_ENV, "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (SynswitchError, OSError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
