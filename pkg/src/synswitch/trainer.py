"""Online backpropagation with optional weight decay and output masking."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from synswitch.core import Network, sigmoid
from synswitch.data import Dataset, Pattern
from synswitch.errors import DivergedTrainingError, StructuralError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 100
    weight_decay: float = 0.0
    shuffle_seed: int = 0
    loss_mask: tuple[bool, ...] | None = None  # None: every output unit

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not self.weight_decay >= 0:
            raise ValueError("weight_decay must be >= 0")
        if self.loss_mask is not None:
            object.__setattr__(self, "loss_mask", tuple(bool(m) for m in self.loss_mask))
            if not any(self.loss_mask):
                raise ValueError("loss_mask selects no output unit")

    def mask_for(self, n_outputs: int) -> np.ndarray:
        if self.loss_mask is None:
            return np.ones(n_outputs, dtype=bool)
        if len(self.loss_mask) != n_outputs:
            raise StructuralError(f"loss_mask has {len(self.loss_mask)} entries, network has {n_outputs} outputs")
        return np.array(self.loss_mask, dtype=bool)


@dataclass
class LossTrace:
    losses: list[float] = field(default_factory=list)

    def __len__(self):
        return len(self.losses)

    def __getitem__(self, i):
        return self.losses[i]


def _check_mask(mask, n_out) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (n_out,):
        raise StructuralError(f"mask has shape {mask.shape}, expected ({n_out},)")
    if not mask.any():
        raise ValueError("mask selects no output unit")
    return mask


def _backprop(Ws, bs, x, t, maskf):
    """Returns (loss, weight grads, bias grads) for one pattern."""
    acts = [x]
    a = x
    for w, b in zip(Ws, bs):
        a = sigmoid(w @ a + b)
        acts.append(a)
    err = (acts[-1] - t) * maskf
    loss = 0.5 * float(err @ err)
    delta = err * acts[-1] * (1.0 - acts[-1])
    gWs = [None] * len(Ws)
    gbs = [None] * len(Ws)
    for l in range(len(Ws) - 1, -1, -1):
        gWs[l] = np.outer(delta, acts[l])
        gbs[l] = delta
        if l:
            delta = (Ws[l].T @ delta) * acts[l] * (1.0 - acts[l])
    return loss, gWs, gbs


def gradient(net: Network, pattern: Pattern, mask) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Gradients of 0.5 * sum over masked outputs of (target - output)^2."""
    x = np.asarray(pattern.input, dtype=np.float64)
    t = np.asarray(pattern.target, dtype=np.float64)
    if x.shape != (net.spec.n_inputs,) or t.shape != (net.spec.n_outputs,):
        raise StructuralError(
            f"pattern dims ({x.shape}, {t.shape}) do not match network {net.spec.layer_sizes}"
        )
    maskf = _check_mask(mask, net.spec.n_outputs).astype(np.float64)
    _, gWs, gbs = _backprop(net.weights, net.biases, x, t, maskf)
    return gWs, gbs


def loss(net: Network, pattern: Pattern, mask) -> float:
    maskf = _check_mask(mask, net.spec.n_outputs).astype(np.float64)
    a = np.asarray(pattern.input, dtype=np.float64)
    for w, b in zip(net.weights, net.biases):
        a = sigmoid(w @ a + b)
    err = (a - pattern.target) * maskf
    return 0.5 * float(err @ err)


def epoch_order(n: int, shuffle_seed: int, epoch: int) -> np.ndarray:
    return np.random.default_rng([shuffle_seed, epoch]).permutation(n)


def sgd_step(Ws, bs, gWs, gbs, lr, decay):
    """w <- w - lr * (g + decay * w); biases are never decayed."""
    for l in range(len(Ws)):
        if decay:
            Ws[l] = Ws[l] - lr * (gWs[l] + decay * Ws[l])
        else:
            Ws[l] = Ws[l] - lr * gWs[l]
        bs[l] = bs[l] - lr * gbs[l]


def train(net: Network, data: Dataset, cfg: TrainConfig) -> tuple[Network, LossTrace]:
    """Pattern-by-pattern gradient descent; a pure function of its arguments."""
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    if data.inputs.shape[1] != net.spec.n_inputs or data.targets.shape[1] != net.spec.n_outputs:
        raise StructuralError(
            f"dataset dims ({data.inputs.shape[1]}, {data.targets.shape[1]}) "
            f"do not match network {net.spec.layer_sizes}"
        )
    maskf = cfg.mask_for(net.spec.n_outputs).astype(np.float64)
    Ws, bs = net.copy_arrays()
    X, T = data.inputs, data.targets
    trace = LossTrace()
    lr, decay = cfg.learning_rate, cfg.weight_decay
    for epoch in range(cfg.epochs):
        total = 0.0
        for p in epoch_order(len(X), cfg.shuffle_seed, epoch):
            l, gWs, gbs = _backprop(Ws, bs, X[p], T[p], maskf)
            total += l
            sgd_step(Ws, bs, gWs, gbs, lr, decay)
        mean = total / len(X)
        if not np.isfinite(mean) or not all(np.isfinite(w).all() for w in Ws):
            raise DivergedTrainingError(epoch, mean)
        trace.losses.append(mean)
        if log.isEnabledFor(logging.DEBUG) and (epoch % 100 == 0 or epoch == cfg.epochs - 1):
            log.debug("epoch %d loss %.6f", epoch, mean)
    return Network(net.spec, tuple(Ws), tuple(bs)), trace


def fork_specialize(base: Network, data: Dataset, cfg_a: TrainConfig, cfg_b: TrainConfig) -> tuple[Network, Network]:
    """Copy ``base`` twice and train each copy under its own output mask."""
    n_out = base.spec.n_outputs
    mask_a, mask_b = cfg_a.mask_for(n_out), cfg_b.mask_for(n_out)
    if (mask_a & mask_b).any():
        raise ValueError("subtask masks must select disjoint output units")
    net_a, _ = train(base, data, cfg_a)
    net_b, _ = train(base, data, cfg_b)
    return net_a, net_b
