"""Modulation matrices: per-weight differences between two networks, and the
switching/blending operations that apply them to a base network.

Coordinates are addressed as ``(layer, row, col)`` on the augmented matrix
``[W_l | b_l]``: column ``n_in`` of a layer is its bias.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from synswitch.analysis import EvalReport, evaluate
from synswitch.core import LabelCodec, Network, NetworkSpec
from synswitch.data import Dataset
from synswitch.errors import MisuseError, StructuralError
from synswitch.persistence import network_checksum


def _ro(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ModulationMatrix:
    """Deltas ``B - A`` plus the B values they switch in.

    Keeping B's values makes full switching exact: ``A + (B - A)`` need not
    round back to ``B`` in floating point, a stored reset value always does.
    """

    spec: NetworkSpec
    delta_weights: tuple[np.ndarray, ...]
    delta_biases: tuple[np.ndarray, ...]
    target_weights: tuple[np.ndarray, ...]
    target_biases: tuple[np.ndarray, ...]
    checksum_a: str
    checksum_b: str

    def __post_init__(self):
        for name in ("delta_weights", "delta_biases", "target_weights", "target_biases"):
            arrs = tuple(_ro(a) for a in getattr(self, name))
            if len(arrs) != self.spec.n_layers:
                raise StructuralError(f"{name}: expected {self.spec.n_layers} layers, got {len(arrs)}")
            for l, a in enumerate(arrs):
                want = self.spec.weight_shape(l) if name.endswith("weights") else (self.spec.layer_sizes[l + 1],)
                if a.shape != want:
                    raise StructuralError(f"{name}[{l}] has shape {a.shape}, expected {want}")
            object.__setattr__(self, name, arrs)

    def params(self) -> list[np.ndarray]:
        out = []
        for dw, db in zip(self.delta_weights, self.delta_biases):
            out += [dw, db]
        for tw, tb in zip(self.target_weights, self.target_biases):
            out += [tw, tb]
        return out

    def augmented(self, layer: int) -> np.ndarray:
        """``[dW | db]`` for one layer."""
        return np.hstack([self.delta_weights[layer], self.delta_biases[layer][:, None]])

    def target_network(self) -> Network:
        return Network(self.spec, self.target_weights, self.target_biases)

    def flat_delta(self) -> np.ndarray:
        """All deltas in coordinate order (layer, row, col incl. bias column)."""
        return np.concatenate([self.augmented(l).ravel() for l in range(self.spec.n_layers)])

    def total(self) -> float:
        return float(sum(np.sum(a) for a in self.delta_weights) + sum(np.sum(a) for a in self.delta_biases))


def diff(net_a: Network, net_b: Network) -> ModulationMatrix:
    """Entrywise ``B - A`` for all weights and biases."""
    if net_a.spec != net_b.spec:
        raise StructuralError(f"spec mismatch: {net_a.spec} vs {net_b.spec}")
    return ModulationMatrix(
        net_a.spec,
        tuple(b - a for a, b in zip(net_a.weights, net_b.weights)),
        tuple(b - a for a, b in zip(net_a.biases, net_b.biases)),
        net_b.weights,
        net_b.biases,
        network_checksum(net_a),
        network_checksum(net_b),
    )


def coordinates(spec: NetworkSpec) -> np.ndarray:
    """(layer, row, col) triples for every augmented coordinate, in flat order."""
    out = []
    for l in range(spec.n_layers):
        n_out, n_in = spec.weight_shape(l)
        r, c = np.divmod(np.arange(n_out * (n_in + 1)), n_in + 1)
        out.append(np.column_stack([np.full_like(r, l), r, c]))
    return np.vstack(out)


def threshold_map(mod: ModulationMatrix, tau: float) -> list[tuple[int, int, int, float]]:
    """Entries with ``|delta| >= tau``, largest magnitude first, ties by coordinate."""
    if not tau > 0:
        raise ValueError("tau must be > 0")
    flat = mod.flat_delta()
    keep = np.flatnonzero(np.abs(flat) >= tau)
    # stable sort on -|d| keeps ascending coordinate order among equal magnitudes
    keep = keep[np.argsort(-np.abs(flat[keep]), kind="stable")]
    coords = coordinates(mod.spec)
    return [(int(coords[k, 0]), int(coords[k, 1]), int(coords[k, 2]), float(flat[k])) for k in keep]


def source_unit_map(mod: ModulationMatrix, grid: tuple[int, int]) -> np.ndarray:
    """Per input unit, the largest |dW| over first-layer connections leaving it."""
    rows, cols = grid
    if rows * cols != mod.spec.n_inputs:
        raise StructuralError(f"grid {rows}x{cols} does not cover {mod.spec.n_inputs} inputs")
    return np.abs(mod.delta_weights[0]).max(axis=0).reshape(rows, cols)


@dataclass(frozen=True)
class BlendSpec:
    """``linear`` moves every weight by ``alpha * delta``; ``subset`` switches
    ``floor(fraction * N)`` of the N changed coordinates fully to B.

    ``selection`` for subset mode: ``"random"`` (seeded) or ``"magnitude"``
    (largest |delta| first).
    """

    mode: str = "linear"
    alpha: float = 0.0
    fraction: float = 0.0
    selection: str = "random"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("linear", "subset"):
            raise ValueError(f"unknown blend mode {self.mode!r}")
        if self.selection not in ("random", "magnitude"):
            raise ValueError(f"unknown selection {self.selection!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha {self.alpha} outside [0, 1]")
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError(f"fraction {self.fraction} outside [0, 1]")

    @property
    def parameter(self) -> float:
        return self.alpha if self.mode == "linear" else self.fraction

    def at(self, value: float) -> "BlendSpec":
        if self.mode == "linear":
            return BlendSpec("linear", alpha=value, selection=self.selection, seed=self.seed)
        return BlendSpec("subset", fraction=value, selection=self.selection, seed=self.seed)


def linear(alpha: float) -> BlendSpec:
    return BlendSpec("linear", alpha=alpha)


def subset(fraction: float, selection: str = "random", seed: int = 0) -> BlendSpec:
    return BlendSpec("subset", fraction=fraction, selection=selection, seed=seed)


def switch_order(mod: ModulationMatrix, selection: str, seed: int = 0) -> np.ndarray:
    """Flat indices of the changed coordinates in the order they get switched.

    Prefixes of this order are the switched sets, so coverage is nested in
    the fraction for both policies.
    """
    flat = mod.flat_delta()
    nz = np.flatnonzero(flat != 0)
    if selection == "magnitude":
        return nz[np.argsort(-np.abs(flat[nz]), kind="stable")]
    return nz[np.random.default_rng(seed).permutation(len(nz))]


def switched_mask(mod: ModulationMatrix, fraction: float, selection: str, seed: int = 0) -> np.ndarray:
    order = switch_order(mod, selection, seed)
    k = int(np.floor(fraction * len(order)))
    mask = np.zeros(mod.flat_delta().size, dtype=bool)
    mask[order[:k]] = True
    return mask


def _check_provenance(base: Network, mod: ModulationMatrix):
    if base.spec != mod.spec:
        raise MisuseError(f"modulation matrix is for {mod.spec.layer_sizes}, network is {base.spec.layer_sizes}")
    if network_checksum(base) != mod.checksum_a:
        raise MisuseError("network is not the A-side source of this modulation matrix (checksum mismatch)")


def blend(base: Network, mod: ModulationMatrix, spec: BlendSpec) -> Network:
    _check_provenance(base, mod)
    if spec.mode == "linear":
        a = spec.alpha
        if a == 0.0:
            return base
        if a == 1.0:
            return mod.target_network()
        ws = tuple(w + a * d for w, d in zip(base.weights, mod.delta_weights))
        bs = tuple(b + a * d for b, d in zip(base.biases, mod.delta_biases))
        return Network(base.spec, ws, bs)

    if spec.fraction == 1.0:
        # also carries over signed zeros that compare equal to A's
        return mod.target_network()
    mask = switched_mask(mod, spec.fraction, spec.selection, spec.seed)
    ws, bs = [], []
    pos = 0
    for l in range(base.spec.n_layers):
        n_out, n_in = base.spec.weight_shape(l)
        m = mask[pos:pos + n_out * (n_in + 1)].reshape(n_out, n_in + 1)
        pos += m.size
        ws.append(np.where(m[:, :n_in], mod.target_weights[l], base.weights[l]))
        bs.append(np.where(m[:, n_in], mod.target_biases[l], base.biases[l]))
    return Network(base.spec, tuple(ws), tuple(bs))


def sweep_values(steps: int) -> list[float]:
    if steps < 2:
        raise ValueError("sweep needs at least 2 steps")
    return [i / (steps - 1) for i in range(steps)]


def sweep(
    net_a: Network,
    net_b: Network,
    data: Dataset,
    codecs: Sequence[LabelCodec],
    mode: str | BlendSpec = "linear",
    steps: int = 11,
) -> list[tuple[float, EvalReport]]:
    """Evaluate blends from A (parameter 0) to B (parameter 1)."""
    template = mode if isinstance(mode, BlendSpec) else BlendSpec(mode)
    mod = diff(net_a, net_b)
    return [(v, evaluate(blend(net_a, mod, template.at(v)), data, codecs)) for v in sweep_values(steps)]

