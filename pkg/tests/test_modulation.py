import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synswitch.analysis import evaluate
from synswitch.core import Network, NetworkSpec, init_network, zeros_network
from synswitch.data import SynthSpec, synth_faces
from synswitch.errors import MisuseError, StructuralError
from synswitch.modulation import (
    BlendSpec,
    blend,
    coordinates,
    diff,
    linear,
    source_unit_map,
    subset,
    sweep,
    sweep_values,
    switched_mask,
    threshold_map,
)
from synswitch.persistence import network_to_text
from synswitch.trainer import TrainConfig, train


def pair(seed=0, sizes=(6, 4, 3)):
    a = init_network(NetworkSpec(sizes), seed)
    b = init_network(NetworkSpec(sizes), seed + 1000)
    return a, b


def const_net(spec, value):
    return Network(
        spec,
        tuple(np.full(spec.weight_shape(l), value) for l in range(spec.n_layers)),
        tuple(np.full(spec.layer_sizes[l + 1], value) for l in range(spec.n_layers)),
    )


@pytest.fixture(scope="module")
def trained_pair():
    data = synth_faces(SynthSpec(n_identities=8, seed=2))
    base = init_network(NetworkSpec((400, 12, 6)), 2)  # 3 identity bits + 3 emotions
    a, _ = train(base, data, TrainConfig(0.1, 5, shuffle_seed=1))
    b, _ = train(a, data, TrainConfig(0.1, 5, shuffle_seed=2))
    return a, b, data


def test_diff_of_self_is_zero():
    a, _ = pair()
    m = diff(a, a)
    assert np.all(m.flat_delta() == 0)


def test_diff_constant():
    spec = NetworkSpec((3, 2, 2))
    m = diff(zeros_network(spec), const_net(spec, 0.2))
    assert np.all(m.flat_delta() == 0.2)


def test_diff_total_matches_independent_sum(trained_pair):
    a, b, _ = trained_pair
    m = diff(a, b)
    expected = math.fsum(b.flat()) - math.fsum(a.flat())
    assert math.fsum(m.flat_delta()) == pytest.approx(expected, abs=1e-9)


def test_diff_spec_mismatch():
    with pytest.raises(StructuralError):
        diff(init_network(NetworkSpec((2, 1)), 0), init_network(NetworkSpec((3, 1)), 0))


def test_coordinates_include_bias_column():
    c = coordinates(NetworkSpec((2, 3, 1)))
    assert len(c) == 3 * 3 + 1 * 4
    assert c[2].tolist() == [0, 0, 2]  # bias of hidden unit 0
    assert c[-1].tolist() == [1, 0, 3]


# -- threshold / source maps ---------------------------------------------------------


def test_threshold_zero_mod_empty():
    a, _ = pair()
    assert threshold_map(diff(a, a), 0.03) == []


def test_threshold_single_entry():
    spec = NetworkSpec((3, 2))
    b = zeros_network(spec).copy_arrays()
    b[0][0][1, 2] = 0.05
    m = diff(zeros_network(spec), Network(spec, tuple(b[0]), tuple(b[1])))
    assert threshold_map(m, 0.03) == [(0, 1, 2, 0.05)]


def test_threshold_brute_force(trained_pair):
    a, b, _ = trained_pair
    m = diff(a, b)
    got = threshold_map(m, 0.03)
    brute = []
    for l in range(m.spec.n_layers):
        W, bias = m.delta_weights[l], m.delta_biases[l]
        for r in range(W.shape[0]):
            for c in range(W.shape[1] + 1):
                d = W[r, c] if c < W.shape[1] else bias[r]
                if abs(d) >= 0.03:
                    brute.append((l, r, c, float(d)))
    brute.sort(key=lambda e: (-abs(e[3]), e[0], e[1], e[2]))
    assert got == brute
    assert len(got) > 0


def test_threshold_ties_by_coordinate():
    spec = NetworkSpec((2, 2))
    b = Network(spec, (np.array([[0.1, -0.1], [0.1, 0.0]]),), (np.array([-0.1, 0.0]),))
    got = threshold_map(diff(zeros_network(spec), b), 0.05)
    assert [e[:3] for e in got] == [(0, 0, 0), (0, 0, 1), (0, 0, 2), (0, 1, 0)]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 1000), st.floats(1e-4, 1.0), st.floats(1e-4, 1.0))
def test_threshold_length_nonincreasing(seed, t1, t2):
    a, b = pair(seed)
    m = diff(a, b)
    lo, hi = sorted((t1, t2))
    assert len(threshold_map(m, hi)) <= len(threshold_map(m, lo))


def test_threshold_requires_positive_tau():
    a, _ = pair()
    with pytest.raises(ValueError):
        threshold_map(diff(a, a), 0.0)


def test_source_unit_single_source():
    spec = NetworkSpec((400, 5, 2))
    arrs = zeros_network(spec).copy_arrays()
    arrs[0][0][3, 17] = 0.5
    m = diff(zeros_network(spec), Network(spec, tuple(arrs[0]), tuple(arrs[1])))
    grid = source_unit_map(m, (20, 20))
    assert grid[0, 17] == 0.5
    assert np.count_nonzero(grid) == 1


def test_source_unit_brute_force(trained_pair):
    a, b, _ = trained_pair
    grid = source_unit_map(diff(a, b), (20, 20))
    for j in range(400):
        best = max(abs(b.weights[0][i, j] - a.weights[0][i, j]) for i in range(12))
        assert grid[j // 20, j % 20] == best


def test_source_unit_grid_mismatch():
    a, _ = pair()
    with pytest.raises(StructuralError):
        source_unit_map(diff(a, a), (2, 2))


# -- blending -----------------------------------------------------------------------


@pytest.mark.parametrize("spec_b", [linear(1.0), subset(1.0), subset(1.0, "magnitude")])
def test_full_blend_is_b(spec_b):
    a, b = pair()
    assert network_to_text(blend(a, diff(a, b), spec_b)) == network_to_text(b)


@pytest.mark.parametrize("spec_a", [linear(0.0), subset(0.0), subset(0.0, "magnitude")])
def test_zero_blend_is_a(spec_a):
    a, b = pair()
    assert network_to_text(blend(a, diff(a, b), spec_a)) == network_to_text(a)


def test_signed_zero_survives_full_switch():
    spec = NetworkSpec((1, 1))
    a = Network(spec, (np.array([[0.0]]),), (np.array([1.0]),))
    b = Network(spec, (np.array([[-0.0]]),), (np.array([2.0]),))
    out = blend(a, diff(a, b), subset(1.0))
    assert math.copysign(1.0, out.weights[0][0, 0]) == -1.0


def test_linear_midpoint():
    spec = NetworkSpec((1, 1))
    a = const_net(spec, 0.2)
    b = const_net(spec, 0.6)
    out = blend(a, diff(a, b), linear(0.5))
    assert out.weights[0][0, 0] == pytest.approx(0.4, abs=1e-15)


def test_linear_quarter_recomputed(trained_pair):
    a, b, _ = trained_pair
    m = diff(a, b)
    out = blend(a, m, linear(0.25))
    for w, d, o in zip(a.weights, m.delta_weights, out.weights):
        for idx in np.ndindex(w.shape):
            assert o[idx] == float(w[idx]) + 0.25 * float(d[idx])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 1000), st.floats(0.0, 1.0))
def test_composition_within_ulp(seed, alpha):
    a, b = pair(seed)
    m = diff(a, b)
    back = diff(a, blend(a, m, linear(alpha)))
    for l in range(m.spec.n_layers):
        want = alpha * m.augmented(l)
        aug_a = np.hstack([a.weights[l], a.biases[l][:, None]])
        aug_b = np.hstack([b.weights[l], b.biases[l][:, None]])
        # rounding in w + a*d and in the re-subtraction: one ulp of the operands
        tol = np.spacing(np.maximum(np.abs(aug_a), np.abs(aug_b)))
        assert np.all(np.abs(back.augmented(l) - want) <= tol)


def test_subset_is_seeded():
    a, b = pair()
    m = diff(a, b)
    assert blend(a, m, subset(0.5, seed=3)) == blend(a, m, subset(0.5, seed=3))
    assert blend(a, m, subset(0.5, seed=3)) != blend(a, m, subset(0.5, seed=4))


def test_subset_switches_floor_count_fully():
    a, b = pair()
    m = diff(a, b)
    n = int(np.count_nonzero(m.flat_delta()))
    out = blend(a, m, subset(0.37, seed=1))
    d = diff(a, out)
    moved = np.flatnonzero(d.flat_delta() != 0)
    assert len(moved) == math.floor(0.37 * n)
    for l in range(m.spec.n_layers):
        o = np.hstack([out.weights[l], out.biases[l][:, None]])
        aa = np.hstack([a.weights[l], a.biases[l][:, None]])
        bb = np.hstack([b.weights[l], b.biases[l][:, None]])
        assert np.all((o == aa) | (o == bb))


def test_zero_deltas_are_not_counted():
    spec = NetworkSpec((3, 1))
    a = zeros_network(spec)
    b = Network(spec, (np.array([[0.0, 0.5, 0.0]]),), (np.array([0.0]),))
    # one changed coordinate: half of it rounds down to none
    assert blend(a, diff(a, b), subset(0.5)) == a
    assert blend(a, diff(a, b), subset(0.99)) == a


def test_magnitude_selection_picks_largest():
    spec = NetworkSpec((3, 1))
    a = zeros_network(spec)
    b = Network(spec, (np.array([[0.1, -0.9, 0.3]]),), (np.array([0.5]),))
    out = blend(a, diff(a, b), subset(0.5, "magnitude"))
    assert out.weights[0].tolist() == [[0.0, -0.9, 0.0]]
    assert out.biases[0].tolist() == [0.5]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 500), st.floats(0, 1), st.floats(0, 1), st.sampled_from(["random", "magnitude"]))
def test_subset_coverage_nested(seed, p, q, selection):
    a, b = pair(seed)
    m = diff(a, b)
    lo, hi = sorted((p, q))
    small = switched_mask(m, lo, selection, seed)
    big = switched_mask(m, hi, selection, seed)
    assert np.all(big[small])


def test_blend_rejects_wrong_base():
    a, b = pair()
    m = diff(a, b)
    with pytest.raises(MisuseError):
        blend(b, m, linear(0.5))
    with pytest.raises(MisuseError):
        blend(init_network(NetworkSpec((2, 1)), 0), m, linear(0.5))


@pytest.mark.parametrize("kw", [dict(mode="cubic"), dict(alpha=1.5), dict(fraction=-0.1), dict(selection="best")])
def test_blendspec_validation(kw):
    with pytest.raises(ValueError):
        BlendSpec(**kw)


# -- sweeps ----------------------------------------------------------------------------


def test_sweep_values():
    assert sweep_values(2) == [0.0, 1.0]
    assert sweep_values(5) == [0.0, 0.25, 0.5, 0.75, 1.0]
    with pytest.raises(ValueError):
        sweep_values(1)


def test_sweep_endpoints_equal_direct_evaluation(trained_pair):
    a, b, data = trained_pair
    codecs = data.codecs
    for mode in ("linear", BlendSpec("subset", seed=2)):
        res = sweep(a, b, data, codecs, mode, steps=5)
        assert [p for p, _ in res] == sweep_values(5)
        assert res[0][1] == evaluate(a, data, codecs)
        assert res[-1][1] == evaluate(b, data, codecs)


def test_sweep_same_network_is_flat(trained_pair):
    a, _, data = trained_pair
    res = sweep(a, a, data, data.codecs, "subset", steps=4)
    assert all(r == res[0][1] for _, r in res)
