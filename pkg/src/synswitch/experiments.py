"""The two experiment pipelines and the artifacts they write.

``run_tasks``: train one network on identity + emotion jointly, fork it,
specialize each copy on one subtask, and compare the copies.
``run_generalization``: a weight-decay "generalizer" is trained further
without decay into a "memorizer"; the two are compared and blended.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from synswitch import analysis
from synswitch.analysis import EvalReport, Histogram, evaluate
from synswitch.config import ExperimentConfig, SynthSection, derive_seed, parse_filter
from synswitch.core import Network, NetworkSpec, codec_mask, init_network
from synswitch.data import EMOTIONS, GRID, Dataset, band_mask, default_codecs, load_images, split, synth_faces
from synswitch.errors import ConfigError
from synswitch.modulation import BlendSpec, ModulationMatrix, diff, source_unit_map, sweep, threshold_map
from synswitch.persistence import save_modmatrix, save_network, write_csv
from synswitch.trainer import TrainConfig, fork_specialize, train

log = logging.getLogger(__name__)

NETS_TASKS = ("combined", "net_a", "net_b")


def load_data(cfg: ExperimentConfig, synth: SynthSection | None = None) -> Dataset:
    if cfg.data.source == "images":
        return load_images(cfg.data.directory)
    return synth_faces((synth or cfg.data.synth).spec(derive_seed(cfg.seed, "data")))


def _train_cfg(section, seed_tag: str, global_seed: int, mask=None) -> TrainConfig:
    return TrainConfig(
        section.learning_rate, section.epochs, section.weight_decay,
        derive_seed(global_seed, seed_tag), None if mask is None else tuple(mask),
    )


def _predicate(filt: dict):
    emo = filt.get("emotion")
    if isinstance(emo, str):
        if emo not in EMOTIONS:
            raise ConfigError(f"unknown emotion {emo!r} in superposition filter")
        emo = EMOTIONS.index(emo)
    return analysis.label_filter(filt.get("identity"), emo)


# -- task specialization -------------------------------------------------------------


@dataclass
class TasksResult:
    data: Dataset
    networks: dict[str, Network]
    reports: dict[str, EvalReport]
    modulation: ModulationMatrix
    threshold: list[tuple[int, int, int, float]]
    source_map: np.ndarray
    superpositions: list[tuple[str, str, np.ndarray]]  # (filter, network, vector)
    band_rows: tuple[int, int]
    enrichment: float  # top-decile source units inside band_rows vs uniform


def run_tasks(cfg: ExperimentConfig) -> TasksResult:
    data = load_data(cfg)
    ident, emo = data.codecs
    n_out = emo.stop
    spec = NetworkSpec((data.inputs.shape[1], cfg.tasks.hidden, n_out))
    base = init_network(spec, derive_seed(cfg.seed, "tasks.init"), cfg.tasks.half_range)
    log.info("tasks: training combined network %s on %d patterns", spec.layer_sizes, len(data))
    combined, _ = train(base, data, _train_cfg(cfg.tasks.combined, "tasks.combined", cfg.seed))
    log.info("tasks: specializing copies")
    net_a, net_b = fork_specialize(
        combined, data,
        _train_cfg(cfg.tasks.subtask_a, "tasks.subtask_a", cfg.seed, codec_mask(ident, n_out)),
        _train_cfg(cfg.tasks.subtask_b, "tasks.subtask_b", cfg.seed, codec_mask(emo, n_out)),
    )
    nets = dict(zip(NETS_TASKS, (combined, net_a, net_b)))
    reports = {k: evaluate(n, data, data.codecs) for k, n in nets.items()}
    mod = diff(net_a, net_b)
    sups = []
    for text in cfg.tasks.superposition:
        pred = _predicate(parse_filter(text))
        for name, net in nets.items():
            sups.append((text, name, analysis.hidden_superposition(net, data, pred)))
    source = source_unit_map(mod, GRID)
    rows = tuple(cfg.data.synth.region_rows)
    return TasksResult(
        data, nets, reports, mod, threshold_map(mod, cfg.tasks.tau), source, sups,
        rows, analysis.band_enrichment(source, band_mask(rows)),
    )


def gray_levels(grid: np.ndarray, maxval: int = 255) -> np.ndarray:
    """Min-max scale to integer gray levels; a flat grid maps to 0."""
    lo, hi = float(grid.min()), float(grid.max())
    if hi == lo:
        return np.zeros(grid.shape, dtype=np.int64)
    return np.rint((grid - lo) / (hi - lo) * maxval).astype(np.int64)


def write_tasks(result: TasksResult, out: Path) -> list[Path]:
    from synswitch.data import write_pgm

    out = Path(out)
    written = []
    for name, net in result.networks.items():
        p = out / f"{name}.json"
        save_network(net, p, provenance=f"tasks:{name}")
        written.append(p)
    p = out / "modulation.json"
    save_modmatrix(result.modulation, p, provenance="tasks:net_b-net_a")
    written.append(p)

    names = [c.name for c in result.data.codecs]
    rows = [[k] + [r.accuracies[n] for n in names] + [r.combined] for k, r in result.reports.items()]
    write_csv(out / "table1.csv", ["network"] + names + ["combined"], rows)
    write_csv(out / "weight_diff.csv", ["layer", "row", "col", "delta"], result.threshold)
    write_csv(out / "source_units.csv", [f"c{j}" for j in range(GRID[1])],
              [[float(v) for v in row] for row in result.source_map])
    write_pgm(out / "source_units.pgm", gray_levels(result.source_map))
    n_hidden = len(result.superpositions[0][2]) if result.superpositions else 0
    write_csv(out / "superposition.csv", ["filter", "network"] + [f"h{i}" for i in range(n_hidden)],
              [[f, n] + [float(v) for v in vec] for f, n, vec in result.superpositions])
    sims = []
    by = {(f, n): v for f, n, v in result.superpositions}
    for f in dict.fromkeys(f for f, _, _ in result.superpositions):
        sims.append([f, analysis.cosine(by[f, "combined"], by[f, "net_a"]),
                     analysis.cosine(by[f, "combined"], by[f, "net_b"]),
                     analysis.cosine(by[f, "net_a"], by[f, "net_b"])])
    write_csv(out / "superposition_cosine.csv", ["filter", "combined_vs_a", "combined_vs_b", "a_vs_b"], sims)
    write_csv(out / "locality.csv", ["band_first_row", "band_last_row", "top_decile_enrichment"],
              [[result.band_rows[0], result.band_rows[1] - 1, result.enrichment]])
    written += [out / n for n in ("table1.csv", "weight_diff.csv", "source_units.csv", "source_units.pgm",
                                  "superposition.csv", "superposition_cosine.csv", "locality.csv")]
    return written


# -- generalization vs memorization ------------------------------------------------------


@dataclass
class GenResult:
    train_set: Dataset
    test_set: Dataset
    generalizer: Network
    memorizer: Network
    reports: dict[tuple[str, str], EvalReport]  # (network, "train"|"test")
    linear: list[tuple[float, EvalReport]]  # on the training set
    subset: list[tuple[float, EvalReport]]
    linear_test: list[tuple[float, EvalReport]]
    subset_test: list[tuple[float, EvalReport]]
    histograms: dict[str, Histogram]
    firing: dict[str, Histogram]
    unit_means: dict[str, np.ndarray]
    low_fraction: dict[str, float]
    low_share: dict[str, float]

    def accuracy(self, network: str, split_name: str, subtask: str = "identity") -> float:
        return self.reports[network, split_name].accuracies[subtask]


def run_generalization(cfg: ExperimentConfig) -> GenResult:
    g = cfg.generalization
    data = load_data(cfg, cfg.gen_synth())
    data = data.with_codecs(default_codecs(data.n_identities, data.n_emotions, with_emotion=g.with_emotion))
    train_set, test_set = split(data, g.train_per_identity, derive_seed(cfg.seed, "gen.split"))
    n_out = max(c.stop for c in data.codecs)
    spec = NetworkSpec((data.inputs.shape[1], g.hidden, n_out))
    base = init_network(spec, derive_seed(cfg.seed, "gen.init"), g.half_range)
    log.info("generalization: weight-decay training %s on %d patterns", spec.layer_sizes, len(train_set))
    gen, _ = train(base, train_set, _train_cfg(g.generalize, "gen.generalize", cfg.seed))
    log.info("generalization: continued training without decay")
    mem, _ = train(gen, train_set, _train_cfg(g.memorize, "gen.memorize", cfg.seed))
    nets = {"generalizer": gen, "memorizer": mem}
    reports = {}
    for name, net in nets.items():
        reports[name, "train"] = evaluate(net, train_set, data.codecs)
        reports[name, "test"] = evaluate(net, test_set, data.codecs)
    sub = BlendSpec("subset", selection=cfg.sweep.selection, seed=derive_seed(cfg.seed, "gen.subset"))
    codecs = data.codecs
    acts = {n: analysis.forward_batch(net, train_set.inputs)[1] for n, net in nets.items()}
    return GenResult(
        train_set, test_set, gen, mem, reports,
        sweep(gen, mem, train_set, codecs, "linear", cfg.sweep.linear_steps),
        sweep(gen, mem, train_set, codecs, sub, cfg.sweep.subset_steps),
        sweep(gen, mem, test_set, codecs, "linear", cfg.sweep.linear_steps),
        sweep(gen, mem, test_set, codecs, sub, cfg.sweep.subset_steps),
        {n: analysis.weight_histogram(net) for n, net in nets.items()},
        {n: analysis.firing_rate_distribution(net, train_set) for n, net in nets.items()},
        {n: a.mean(axis=0) for n, a in acts.items()},
        {n: float(np.mean(a.mean(axis=0) < g.low_activation)) for n, a in acts.items()},
        {n: float(np.mean(a < g.low_activation)) for n, a in acts.items()},
    )


def _sweep_rows(train_res, test_res):
    params, tr = analysis.sweep_series(train_res, "train_")
    _, te = analysis.sweep_series(test_res, "test_")
    series = {**tr, **te}
    header = ["parameter"] + list(series)
    rows = [[p] + [series[k][i] for k in series] for i, p in enumerate(params)]
    stats = analysis.series_stats(params, series)
    return header, rows, stats


def write_generalization(result: GenResult, out: Path) -> list[Path]:
    out = Path(out)
    written = []
    for name, net in (("generalizer", result.generalizer), ("memorizer", result.memorizer)):
        p = out / f"{name}.json"
        save_network(net, p, provenance=f"generalization:{name}")
        written.append(p)
    p = out / "modulation.json"
    save_modmatrix(diff(result.generalizer, result.memorizer), p, provenance="generalization:memorizer-generalizer")
    written.append(p)

    names = list(result.reports["generalizer", "train"].accuracies)
    rows = []
    for net in ("generalizer", "memorizer"):
        for n in names:
            rows.append([net, n, result.accuracy(net, "train", n), result.accuracy(net, "test", n)])
    write_csv(out / "table2.csv", ["network", "subtask", "train", "generalization"], rows)

    stats_rows = []
    for mode, tr, te in (("linear", result.linear, result.linear_test), ("subset", result.subset, result.subset_test)):
        header, rows, stats = _sweep_rows(tr, te)
        write_csv(out / f"sweep_{mode}.csv", header, rows)
        stats_rows += [[mode, k, v["spearman_rho"], v["sign_changes"]] for k, v in stats.items()]
    write_csv(out / "sweep_stats.csv", ["mode", "series", "spearman_rho", "sign_changes"], stats_rows)

    write_csv(out / "weight_hist.csv", ["network", "bin_low", "bin_high", "count"],
              [[n, float(h.edges[i]), float(h.edges[i + 1]), int(c)]
               for n, h in result.histograms.items() for i, c in enumerate(h.counts)])
    write_csv(out / "weight_stats.csv", ["network", "n", "mean", "variance"],
              [[n, h.sample_size, h.mean, h.variance] for n, h in result.histograms.items()])
    write_csv(out / "firing_rates.csv", ["network", "bin_low", "bin_high", "units"],
              [[n, float(h.edges[i]), float(h.edges[i + 1]), int(c)]
               for n, h in result.firing.items() for i, c in enumerate(h.counts)])
    write_csv(out / "unit_activations.csv", ["network", "unit", "mean_activation"],
              [[n, i, float(v)] for n, m in result.unit_means.items() for i, v in enumerate(m)])
    write_csv(out / "firing_summary.csv", ["network", "low_unit_fraction", "low_activation_share"],
              [[n, result.low_fraction[n], result.low_share[n]] for n in result.low_fraction])
    written += [out / n for n in ("table2.csv", "sweep_linear.csv", "sweep_subset.csv", "sweep_stats.csv",
                                  "weight_hist.csv", "weight_stats.csv", "firing_rates.csv",
                                  "unit_activations.csv", "firing_summary.csv")]
    return written
