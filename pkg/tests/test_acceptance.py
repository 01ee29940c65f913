"""Acceptance criteria 1-10, each at its stated tolerance and runtime bound.

Every test records one ``CRITERION n: PASS|FAIL`` line; the lines are printed
again in the terminal summary (see conftest.py).  The heavy experiment runs are
shared module fixtures, timed once.
"""

import dataclasses
import json
import time

import numpy as np
import pytest

from synswitch import analysis
from synswitch.cli import main
from synswitch.config import ExperimentConfig
from synswitch.core import NetworkSpec, init_network
from synswitch.data import Pattern, SynthSpec, synth_faces
from synswitch.errors import ChecksumError, FormatError, ShapeError, VersionError
from synswitch.experiments import run_generalization, run_tasks
from synswitch.modulation import BlendSpec, blend, diff
from synswitch.persistence import (
    dataset_to_csv,
    load_dataset,
    load_modmatrix,
    load_network,
    network_to_text,
    save_dataset,
    save_modmatrix,
    save_network,
)
from synswitch.trainer import gradient
from tests.test_trainer import finite_difference

pytestmark = pytest.mark.slow

SEEDS = range(5)
REPORT: dict[int, str] = {}


def record(n: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    REPORT[n] = line
    print(line)


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


@pytest.fixture(scope="module")
def tasks_runs():
    return timed(lambda: [run_tasks(dataclasses.replace(ExperimentConfig(), seed=s)) for s in SEEDS])


@pytest.fixture(scope="module")
def gen_runs():
    return timed(lambda: [run_generalization(dataclasses.replace(ExperimentConfig(), seed=s)) for s in SEEDS])


# -- 1 --------------------------------------------------------------------------------


def test_criterion_1_gradient_oracle():
    t0 = time.perf_counter()
    worst, checked = 0.0, 0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        net = init_network(NetworkSpec((10, 6, 9)), 1000 + seed, half_range=1.0)
        pattern = Pattern(rng.uniform(size=10), 0, 0, rng.integers(0, 2, 9).astype(float))
        mask = rng.uniform(size=9) < 0.6
        mask[rng.integers(9)] = True
        gWs, gbs = gradient(net, pattern, mask)
        analytic = [a for pair in zip(gWs, gbs) for a in pair]
        for a, n in zip(analytic, finite_difference(net, pattern, mask, h=1e-5)):
            sel = np.abs(a) > 1e-8
            if sel.any():
                rel = np.abs(a[sel] - n[sel]) / np.maximum(np.abs(a[sel]), np.abs(n[sel]))
                worst = max(worst, float(rel.max()))
                checked += int(sel.sum())
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and elapsed < 10
    record(1, ok, f"max rel error {worst:.2e} over {checked} coordinates, {elapsed:.2f}s")
    assert ok


# -- 2 --------------------------------------------------------------------------------


def test_criterion_2_blend_endpoints():
    spec = NetworkSpec((400, 10, 6))
    a, b = init_network(spec, 1), init_network(spec, 2)
    t0 = time.perf_counter()
    mod = diff(a, b)
    text_a, text_b = network_to_text(a), network_to_text(b)
    cases = {
        "linear 0": (BlendSpec("linear", alpha=0.0), text_a),
        "linear 1": (BlendSpec("linear", alpha=1.0), text_b),
        "subset 0": (BlendSpec("subset", fraction=0.0, seed=7), text_a),
        "subset 1": (BlendSpec("subset", fraction=1.0, seed=7), text_b),
        "magnitude 1": (BlendSpec("subset", fraction=1.0, selection="magnitude"), text_b),
    }
    bad = [k for k, (spec_, want) in cases.items() if network_to_text(blend(a, mod, spec_)) != want]
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < 1
    record(2, ok, f"mismatched endpoints {bad or 'none'}, {elapsed:.3f}s")
    assert ok


# -- 3, 7 -----------------------------------------------------------------------------


def test_criterion_3_specialization(tasks_runs):
    runs, elapsed = tasks_runs
    acc = [{k: r.accuracies for k, r in res.reports.items()} for res in runs]
    gain_a = np.mean([r["net_a"]["identity"] - r["combined"]["identity"] for r in acc]) * 100
    gain_b = np.mean([r["net_b"]["emotion"] - r["combined"]["emotion"] for r in acc]) * 100
    drop_a = np.mean([r["combined"]["emotion"] - r["net_a"]["emotion"] for r in acc]) * 100
    drop_b = np.mean([r["combined"]["identity"] - r["net_b"]["identity"] for r in acc]) * 100
    ok = gain_a >= 10 and gain_b >= 5 and drop_a <= 25 and drop_b <= 25 and elapsed < 180
    record(3, ok, f"identity gain {gain_a:+.1f} pts, emotion gain {gain_b:+.1f} pts, "
                  f"off-task drops {drop_a:.1f}/{drop_b:.1f} pts, {elapsed:.1f}s")
    assert ok


def test_criterion_7_locality(tasks_runs):
    runs, _ = tasks_runs
    values = [res.enrichment for res in runs]
    assert all(res.band_rows == (12, 16) for res in runs)
    ok = min(values) >= 2.0
    record(7, ok, "top-decile enrichment in rows 12-15: " + ", ".join(f"{v:.2f}" for v in values))
    assert ok


# -- 4, 5, 6, 8 -------------------------------------------------------------------------


def test_criterion_4_overfitting(gen_runs):
    runs, elapsed = gen_runs
    g_tr, g_te, m_tr, m_te = (np.mean([r.accuracy(n, s) for r in runs])
                              for n in ("generalizer", "memorizer") for s in ("train", "test"))
    ok = m_tr >= 0.95 and m_te <= g_te and g_tr < m_tr and elapsed < 120
    record(4, ok, f"generalizer {g_tr:.3f}/{g_te:.3f}, memorizer {m_tr:.3f}/{m_te:.3f} (train/test), "
                  f"{elapsed:.1f}s")
    assert ok


def test_criterion_5_variance(gen_runs):
    runs, _ = gen_runs
    pairs = [(r.histograms["generalizer"].variance, r.histograms["memorizer"].variance) for r in runs]
    hits = sum(m > g for g, m in pairs)
    ok = hits >= 4
    record(5, ok, f"memorizer variance larger in {hits}/5 seeds: "
                  + ", ".join(f"{g:.3f}<{m:.3f}" if m > g else f"{g:.3f}>={m:.3f}" for g, m in pairs))
    assert ok


def test_criterion_6_trajectories(gen_runs):
    runs, _ = gen_runs
    rhos = [analysis.trajectory_stats(r.linear)["identity"]["spearman_rho"] for r in runs]
    changes = [analysis.trajectory_stats(r.subset)["identity"]["sign_changes"] for r in runs]
    assert all(len(r.linear) == 11 and len(r.subset) == 20 for r in runs)
    hits = sum(abs(rho) >= 0.8 and c >= 1 for rho, c in zip(rhos, changes))
    ok = hits >= 4
    record(6, ok, f"{hits}/5 seeds; linear rho " + ", ".join(f"{v:.2f}" for v in rhos)
                  + "; subset sign changes " + ", ".join(map(str, changes)))
    assert ok


def test_criterion_8_firing_rates(gen_runs):
    runs, _ = gen_runs
    pairs = [(r.low_fraction["generalizer"], r.low_fraction["memorizer"]) for r in runs]
    hits = sum(m > g for g, m in pairs)
    ok = hits >= 4
    record(8, ok, f"memorizer has more units below 0.2 in {hits}/5 seeds: "
                  + ", ".join(f"{g:.2f} vs {m:.2f}" for g, m in pairs))
    assert ok


# -- 9 --------------------------------------------------------------------------------


def _bits(arrays):
    return [np.asarray(a, dtype=np.float64).tobytes() for a in arrays]


def _edit(path, fn):
    doc = json.loads(path.read_text())
    fn(doc)
    path.write_text(json.dumps(doc))


def test_criterion_9_serialization(tmp_path):
    failures = []
    a = init_network(NetworkSpec((400, 10, 6)), 3)
    b = init_network(NetworkSpec((400, 10, 6)), 4)
    save_network(a, tmp_path / "a.json")
    back = load_network(tmp_path / "a.json")
    if _bits(back.params()) != _bits(a.params()):
        failures.append("network round trip")
    mod = diff(a, b)
    save_modmatrix(mod, tmp_path / "m.json")
    if _bits(load_modmatrix(tmp_path / "m.json").params()) != _bits(mod.params()):
        failures.append("modulation round trip")
    data = synth_faces(SynthSpec(n_identities=7, seed=2))
    save_dataset(data, tmp_path / "d.csv")
    loaded = load_dataset(tmp_path / "d.csv")
    if loaded != data or dataset_to_csv(loaded) != dataset_to_csv(data):
        failures.append("dataset round trip")

    corruptions = {
        "flipped weight": (lambda d: d["layers"][0]["weights"][0].__setitem__(0, 0.5), ChecksumError),
        "version": (lambda d: d.__setitem__("format_version", 99), VersionError),
        "shape": (lambda d: d["spec"].__setitem__("layer_sizes", [400, 11, 6]), ShapeError),
    }
    for name, (fn, err) in corruptions.items():
        p = tmp_path / f"{name}.json"
        save_network(a, p)
        _edit(p, fn)
        try:
            load_network(p)
            failures.append(f"{name}: accepted")
        except err:
            pass
        except Exception as exc:  # wrong variant
            failures.append(f"{name}: {type(exc).__name__}")
    p = tmp_path / "trunc.json"
    save_network(a, p)
    p.write_text(p.read_text()[:100])
    try:
        load_network(p)
        failures.append("truncated: accepted")
    except FormatError:
        pass
    p = tmp_path / "m2.json"
    save_modmatrix(mod, p)
    _edit(p, lambda d: d.__setitem__("checksum_b", "0" * 16))
    try:
        load_modmatrix(p)
        failures.append("modulation checksum: accepted")
    except ChecksumError:
        pass
    csv = tmp_path / "d.csv"
    lines = csv.read_text().splitlines()
    lines[1] = lines[1].replace(",0.", ",1.", 1)
    csv.write_text("\n".join(lines) + "\n")
    try:
        load_dataset(csv)
        failures.append("dataset tamper: accepted")
    except ChecksumError:
        pass
    ok = not failures
    record(9, ok, "bit-identical round trips, every corruption rejected with its variant"
           if ok else "; ".join(failures))
    assert ok


# -- 10 -------------------------------------------------------------------------------


def test_criterion_10_determinism(tmp_path, capsys):
    times = []
    for run in ("first", "second"):
        t0 = time.perf_counter()
        assert main(["experiment-tasks", "--output_dir", str(tmp_path / run / "tasks")]) == 0
        assert main(["experiment-gen", "--output_dir", str(tmp_path / run / "gen")]) == 0
        times.append(time.perf_counter() - t0)
    capsys.readouterr()
    diffs, count = [], 0
    for sub in ("tasks", "gen"):
        first = sorted((tmp_path / "first" / sub).glob("*.csv"))
        names = [p.name for p in first]
        if names != [p.name for p in sorted((tmp_path / "second" / sub).glob("*.csv"))]:
            diffs.append(f"{sub}: file sets differ")
        for p in first:
            count += 1
            if p.read_bytes() != (tmp_path / "second" / sub / p.name).read_bytes():
                diffs.append(f"{sub}/{p.name}")
    ok = not diffs and count > 0 and max(times) < 300
    record(10, ok, f"{count} CSVs compared, differing: {diffs or 'none'}; full pipeline "
                   + "/".join(f"{t:.1f}s" for t in times))
    assert ok
