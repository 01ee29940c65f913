"""Accuracy reports and the diagnostic statistics used in the experiments."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from synswitch.core import LabelCodec, Network, check_codecs, forward_batch
from synswitch.data import Dataset
from synswitch.errors import NoMatchError, StructuralError

DEFAULT_BINS = 40


@dataclass
class EvalReport:
    accuracies: dict[str, float]
    confusion: dict[str, np.ndarray]
    n_patterns: int

    @property
    def combined(self) -> float:
        """Unweighted mean of the subtask accuracies."""
        return float(np.mean(list(self.accuracies.values())))

    def __getitem__(self, subtask: str) -> float:
        return self.accuracies[subtask]

    def __eq__(self, other):
        if not isinstance(other, EvalReport):
            return NotImplemented
        return (
            self.n_patterns == other.n_patterns
            and self.accuracies == other.accuracies
            and self.confusion.keys() == other.confusion.keys()
            and all(np.array_equal(self.confusion[k], other.confusion[k]) for k in self.confusion)
        )


def predictions(net: Network, data: Dataset, codecs: Sequence[LabelCodec]) -> dict[str, np.ndarray]:
    """Decoded class per pattern for each codec."""
    check_codecs(codecs, net.spec.n_outputs)
    out = forward_batch(net, data.inputs)[-1]
    return {c.name: c.decode_batch(out) for c in codecs}


def evaluate(net: Network, data: Dataset, codecs: Sequence[LabelCodec]) -> EvalReport:
    if len(data) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    if data.inputs.shape[1] != net.spec.n_inputs:
        raise StructuralError(f"dataset has {data.inputs.shape[1]} inputs, network expects {net.spec.n_inputs}")
    preds = predictions(net, data, codecs)
    acc, conf = {}, {}
    for c in codecs:
        truth = data.labels(c.name)
        m = np.zeros((c.n_classes, c.n_classes), dtype=np.int64)
        np.add.at(m, (truth, preds[c.name]), 1)
        conf[c.name] = m
        acc[c.name] = float(np.trace(m)) / len(data)
    return EvalReport(acc, conf, len(data))


# -- histograms ------------------------------------------------------------------


def two_pass_moments(x) -> tuple[float, float]:
    """Mean and population variance; second pass on deviations from the mean."""
    x = np.asarray(x, dtype=np.float64).ravel()
    mean = x.sum() / x.size
    dev = x - mean
    # compensation term is exactly zero in exact arithmetic
    var = (dev @ dev - dev.sum() ** 2 / x.size) / x.size
    return float(mean), float(var)


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    mean: float
    variance: float
    sample_size: int = field(init=False)

    def __post_init__(self):
        self.sample_size = int(np.sum(self.counts))


def histogram(sample, bins: int = DEFAULT_BINS, value_range: tuple[float, float] | None = None) -> Histogram:
    if bins < 1:
        raise ValueError("bins must be >= 1")
    x = np.asarray(sample, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("empty sample")
    lo, hi = value_range if value_range is not None else (x.min(), x.max())
    if lo == hi:
        edges = np.array([lo - 0.5, hi + 0.5])
        counts = np.array([x.size])
    else:
        counts, edges = np.histogram(x, bins=bins, range=(lo, hi))
    mean, var = two_pass_moments(x)
    return Histogram(edges, counts.astype(np.int64), mean, var)


def weight_histogram(net: Network, bins: int = DEFAULT_BINS) -> Histogram:
    """All weights and biases pooled."""
    return histogram(net.flat(), bins)


def _layer_index(net: Network, layer: int) -> int:
    if not 1 <= layer <= net.spec.n_layers:
        raise IndexError(f"layer {layer} is not a hidden or output layer of {net.spec.layer_sizes}")
    return layer


def unit_mean_activations(net: Network, data: Dataset, layer: int = 1) -> np.ndarray:
    _layer_index(net, layer)
    return forward_batch(net, data.inputs)[layer].mean(axis=0)


def firing_rate_distribution(net: Network, data: Dataset, layer: int = 1, bins: int = 10) -> Histogram:
    """Histogram over [0, 1] of per-unit mean activations."""
    if len(data) == 0:
        raise ValueError("cannot compute firing rates on an empty dataset")
    return histogram(unit_mean_activations(net, data, layer), bins, value_range=(0.0, 1.0))


def low_activation_fraction(net: Network, data: Dataset, layer: int = 1, threshold: float = 0.2) -> float:
    return float(np.mean(unit_mean_activations(net, data, layer) < threshold))


def hidden_superposition(
    net: Network, data: Dataset, predicate: Callable[[int, int], bool], layer: int = 1
) -> np.ndarray:
    """Mean activation vector of ``layer`` over patterns with ``predicate(identity, emotion)``."""
    _layer_index(net, layer)
    rows = [i for i in range(len(data)) if predicate(int(data.identities[i]), int(data.emotions[i]))]
    if not rows:
        raise NoMatchError("filter matches no pattern")
    return forward_batch(net, data.inputs[rows])[layer].mean(axis=0)


def label_filter(identity: int | None = None, emotion: int | None = None) -> Callable[[int, int], bool]:
    def pred(i, e):
        return (identity is None or i == identity) and (emotion is None or e == emotion)

    return pred


def cosine(u, v) -> float:
    u, v = np.asarray(u, dtype=np.float64), np.asarray(v, dtype=np.float64)
    return float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)))


# -- sweep trajectories ------------------------------------------------------------


def sign_changes(series) -> int:
    """Direction reversals in the first difference; flat steps are skipped."""
    prev, count = 0.0, 0
    for d in np.diff(np.asarray(series, dtype=np.float64)):
        if d == 0:
            continue
        s = np.sign(d)
        if prev and s != prev:
            count += 1
        prev = s
    return count


def spearman(x, y) -> float:
    """Spearman's rho; 0.0 when either series is constant."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if np.all(x == x[0]) or np.all(y == y[0]):
        return 0.0
    return float(stats.spearmanr(x, y).statistic)


def series_stats(params: Sequence[float], series: dict[str, Sequence[float]]) -> dict[str, dict[str, float]]:
    """Per named accuracy series: ``{"spearman_rho": ..., "sign_changes": ...}``."""
    if len(params) < 3:
        raise ValueError("trajectory statistics need at least 3 steps")
    return {
        name: {"spearman_rho": spearman(params, s), "sign_changes": sign_changes(s)}
        for name, s in series.items()
    }


def sweep_series(result, prefix: str = "") -> tuple[list[float], dict[str, list[float]]]:
    """Split ``[(param, EvalReport), ...]`` into parameter list and accuracy series."""
    params = [p for p, _ in result]
    names = list(result[0][1].accuracies)
    return params, {prefix + n: [r.accuracies[n] for _, r in result] for n in names}


def trajectory_stats(result) -> dict[str, dict[str, float]]:
    """:func:`series_stats` for a sweep result ``[(param, EvalReport), ...]``."""
    return series_stats(*sweep_series(result))


# -- locality -------------------------------------------------------------------------


def band_enrichment(scores, band: np.ndarray, quantile: float = 0.9) -> float:
    """Share of top-scoring units inside ``band`` divided by the band's share of all units.

    The top set holds the ``ceil((1 - quantile) * n)`` highest scores; ties go to the
    lower flat index.  1.0 means no enrichment.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    b = np.asarray(band, dtype=bool).ravel()
    if s.shape != b.shape:
        raise StructuralError(f"scores {s.shape} and band {b.shape} differ in size")
    if not b.any():
        raise NoMatchError("band selects no units")
    k = max(1, int(np.ceil(round((1.0 - quantile) * s.size, 9))))
    top = np.argsort(-s, kind="stable")[:k]
    return float(b[top].mean() / b.mean())
