"""Text (JSON) files for networks, modulation matrices, datasets and reports.

Every real is written with 17 significant digits, which round-trips binary64
exactly.  A 64-bit BLAKE2b digest of the little-endian float64 payload guards
each file; shapes are validated before the checksum so that a wrong spec is
reported as a shape problem.

Schema (format_version 1), network::

    {"format_version": 1, "kind": "network",
     "spec": {"layer_sizes": [...], "activation": "logistic-sigmoid"},
     "layers": [{"weights": [[...], ...], "biases": [...]}, ...],
     "provenance": "...", "checksum": "<16 hex digits>"}

A modulation matrix has ``kind: "modulation"``, ``layers`` holding
``delta_weights``/``delta_biases`` and ``target_weights``/``target_biases``,
and ``checksum_a``/``checksum_b`` of the two source networks.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from synswitch.core import LabelCodec, Network, NetworkSpec
from synswitch.data import Dataset
from synswitch.errors import ChecksumError, FormatError, ShapeError, VersionError

FORMAT_VERSION = 1


def payload_checksum(arrays) -> str:
    h = hashlib.blake2b(digest_size=8)
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return h.hexdigest()


def network_checksum(net: Network) -> str:
    return payload_checksum(net.params())


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(x: float) -> str:
    s = format(float(x), ".17g")
    if not any(c in s for c in ".en"):
        s += ".0"  # keep -0.0 and integral values typed as floats
    return s


class _Raw(str):
    """Pre-rendered JSON fragment."""


def _render(obj, indent=0) -> str:
    pad = "  " * indent
    if isinstance(obj, _Raw):
        return str(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}  {json.dumps(k)}: {_render(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(obj, list) and obj and isinstance(obj[0], (dict, _Raw)):
        items = [f"{pad}  {_render(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + f"\n{pad}]"
    return json.dumps(obj)


def _vec(a) -> _Raw:
    return _Raw("[" + ", ".join(fmt(x) for x in np.asarray(a).ravel()) + "]")


def _mat(a) -> _Raw:
    a = np.asarray(a)
    return _Raw("[\n" + ",\n".join("      " + _vec(row) for row in a) + "\n    ]")


def _read_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FormatError(f"{path}: unreadable ({exc})") from exc
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: top level must be an object")
    return doc


def _check_header(doc, path, kind):
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: format_version {version!r}, this reader understands {FORMAT_VERSION}")
    if doc.get("kind") != kind:
        raise FormatError(f"{path}: expected kind {kind!r}, found {doc.get('kind')!r}")


def _spec_from(doc, path) -> NetworkSpec:
    try:
        s = doc["spec"]
        return NetworkSpec(tuple(s["layer_sizes"]), s.get("activation", "logistic-sigmoid"))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: malformed spec ({exc})") from exc
    except ValueError as exc:
        raise ShapeError(f"{path}: invalid spec ({exc})") from exc


def _array(values, shape, path, what) -> np.ndarray:
    try:
        a = np.array(values, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ShapeError(f"{path}: {what} is not a rectangular numeric array") from exc
    if a.shape != shape:
        raise ShapeError(f"{path}: {what} has shape {a.shape}, spec requires {shape}")
    return a


def _layers(doc, spec, path, wkey, bkey):
    layers = doc.get("layers")
    if not isinstance(layers, list):
        raise FormatError(f"{path}: missing layers")
    if len(layers) != spec.n_layers:
        raise ShapeError(f"{path}: {len(layers)} layers stored, spec has {spec.n_layers}")
    ws, bs = [], []
    for l, layer in enumerate(layers):
        try:
            w, b = layer[wkey], layer[bkey]
        except (KeyError, TypeError) as exc:
            raise FormatError(f"{path}: layer {l} lacks {exc}") from exc
        ws.append(_array(w, spec.weight_shape(l), path, f"layer {l} {wkey}"))
        bs.append(_array(b, (spec.layer_sizes[l + 1],), path, f"layer {l} {bkey}"))
    return ws, bs


def _interleave(ws, bs):
    out = []
    for w, b in zip(ws, bs):
        out += [w, b]
    return out


def _verify(doc, key, arrays, path):
    stored = doc.get(key)
    actual = payload_checksum(arrays)
    if stored != actual:
        raise ChecksumError(f"{path}: {key} mismatch (stored {stored}, payload hashes to {actual})")


# -- networks -----------------------------------------------------------------


def network_to_text(net: Network, provenance: str = "") -> str:
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "network",
        "spec": {"layer_sizes": list(net.spec.layer_sizes), "activation": net.spec.activation},
        "layers": [{"weights": _mat(w), "biases": _vec(b)} for w, b in zip(net.weights, net.biases)],
        "provenance": provenance,
        "checksum": network_checksum(net),
    }
    return _render(doc) + "\n"


def save_network(net: Network, path, provenance: str = "") -> None:
    atomic_write_text(path, network_to_text(net, provenance))


def load_network(path) -> Network:
    doc = _read_json(path)
    _check_header(doc, path, "network")
    spec = _spec_from(doc, path)
    ws, bs = _layers(doc, spec, path, "weights", "biases")
    _verify(doc, "checksum", _interleave(ws, bs), path)
    return Network(spec, tuple(ws), tuple(bs))


def read_provenance(path) -> str:
    return str(_read_json(path).get("provenance", ""))


# -- modulation matrices --------------------------------------------------------


def save_modmatrix(mod, path, provenance: str = "") -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "modulation",
        "spec": {"layer_sizes": list(mod.spec.layer_sizes), "activation": mod.spec.activation},
        "layers": [
            {"delta_weights": _mat(dw), "delta_biases": _vec(db),
             "target_weights": _mat(tw), "target_biases": _vec(tb)}
            for dw, db, tw, tb in zip(mod.delta_weights, mod.delta_biases, mod.target_weights, mod.target_biases)
        ],
        "checksum_a": mod.checksum_a,
        "checksum_b": mod.checksum_b,
        "provenance": provenance,
        "checksum": payload_checksum(mod.params()),
    }
    atomic_write_text(path, _render(doc) + "\n")


def load_modmatrix(path):
    from synswitch.modulation import ModulationMatrix

    doc = _read_json(path)
    _check_header(doc, path, "modulation")
    spec = _spec_from(doc, path)
    dws, dbs = _layers(doc, spec, path, "delta_weights", "delta_biases")
    tws, tbs = _layers(doc, spec, path, "target_weights", "target_biases")
    mod = ModulationMatrix(spec, tuple(dws), tuple(dbs), tuple(tws), tuple(tbs),
                           str(doc.get("checksum_a")), str(doc.get("checksum_b")))
    _verify(doc, "checksum", mod.params(), path)
    if payload_checksum(_interleave(tws, tbs)) != mod.checksum_b:
        raise ChecksumError(f"{path}: switched-in values do not hash to checksum_b")
    return mod


# -- datasets ---------------------------------------------------------------------


def dataset_to_csv(data: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["identity", "emotion"] + [f"x{j}" for j in range(data.inputs.shape[1])])
    for x, i, e in zip(data.inputs, data.identities, data.emotions):
        w.writerow([int(i), int(e)] + [fmt(v) for v in x])
    return buf.getvalue()


def _codec_doc(c: LabelCodec) -> dict:
    return {"name": c.name, "kind": c.kind, "n_classes": c.n_classes, "offset": c.offset, "width": c.width}


def save_dataset(data: Dataset, path, extra: dict | None = None) -> Path:
    """Write ``<path>`` (CSV) and ``<path>.json`` (manifest); returns the manifest path."""
    path = Path(path)
    text = dataset_to_csv(data)
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": "dataset",
        "csv": path.name,
        "n_patterns": len(data),
        "n_identities": data.n_identities,
        "n_emotions": data.n_emotions,
        "codecs": [_codec_doc(c) for c in data.codecs],
        "provenance": data.provenance,
        "checksum": payload_checksum([data.inputs, data.identities.astype(np.float64), data.emotions.astype(np.float64)]),
    }
    manifest.update(extra or {})
    atomic_write_text(path, text)
    mpath = path.with_name(path.name + ".json")
    atomic_write_text(mpath, json.dumps(manifest, indent=2) + "\n")
    return mpath


def load_dataset(path) -> Dataset:
    """Read a dataset CSV and its ``.json`` manifest."""
    path = Path(path)
    doc = _read_json(path.with_name(path.name + ".json"))
    _check_header(doc, path, "dataset")
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise FormatError(f"{path}: unreadable ({exc})") from exc
    if not rows or rows[0][:2] != ["identity", "emotion"]:
        raise FormatError(f"{path}: missing identity,emotion header")
    body = rows[1:]
    if len(body) != doc.get("n_patterns"):
        raise ShapeError(f"{path}: {len(body)} rows, manifest says {doc.get('n_patterns')}")
    width = len(rows[0]) - 2
    if any(len(r) != width + 2 for r in body):
        raise ShapeError(f"{path}: ragged rows")
    try:
        ids = np.array([int(r[0]) for r in body], dtype=np.int64)
        emo = np.array([int(r[1]) for r in body], dtype=np.int64)
        X = np.array([[float(v) for v in r[2:]] for r in body], dtype=np.float64).reshape(len(body), width)
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric field ({exc})") from exc
    stored = doc.get("checksum")
    actual = payload_checksum([X, ids.astype(np.float64), emo.astype(np.float64)])
    if stored != actual:
        raise ChecksumError(f"{path}: checksum mismatch (stored {stored}, payload hashes to {actual})")
    codecs = tuple(LabelCodec(**c) for c in doc.get("codecs", []))
    return Dataset(X, ids, emo, int(doc["n_identities"]), int(doc["n_emotions"]), str(doc.get("provenance", "")), codecs)


def write_csv(path, header, rows) -> None:
    """Deterministic CSV: floats as 17 significant digits."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    atomic_write_text(path, buf.getvalue())
