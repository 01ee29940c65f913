"""Face-like datasets: graymap ingestion, a synthetic generator, and splits."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from synswitch.core import LabelCodec, emotion_codec, identity_codec
from synswitch.errors import DataLoadError, StructuralError

GRID = (20, 20)
EMOTIONS = ("neutral", "smiling", "crying")


@dataclass(frozen=True)
class Pattern:
    input: np.ndarray
    identity: int
    emotion: int
    target: np.ndarray


def default_codecs(n_identities: int, n_emotions: int, with_emotion: bool = True) -> tuple[LabelCodec, ...]:
    """Identity bits first, then the emotion one-hot block."""
    ident = identity_codec(n_identities)
    if not with_emotion:
        return (ident,)
    return ident, emotion_codec(n_emotions, offset=ident.width)


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    identities: np.ndarray
    emotions: np.ndarray
    n_identities: int
    n_emotions: int
    provenance: str = ""
    codecs: tuple[LabelCodec, ...] = ()
    targets: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        X = np.array(self.inputs, dtype=np.float64)
        ids = np.array(self.identities, dtype=np.int64).reshape(-1)
        emo = np.array(self.emotions, dtype=np.int64).reshape(-1)
        if X.ndim != 2:
            raise StructuralError(f"inputs must be 2-D, got shape {X.shape}")
        if not (len(X) == len(ids) == len(emo)):
            raise StructuralError("inputs and labels differ in length")
        if len(ids) and (ids.min() < 0 or ids.max() >= self.n_identities):
            raise StructuralError("identity label out of range")
        if len(emo) and (emo.min() < 0 or emo.max() >= self.n_emotions):
            raise StructuralError("emotion label out of range")
        codecs = tuple(self.codecs) or default_codecs(self.n_identities, self.n_emotions)
        labels = {"identity": ids, "emotion": emo}
        width = max(c.stop for c in codecs)
        T = np.zeros((len(X), width))
        for c in codecs:
            if c.name not in labels:
                raise StructuralError(f"codec {c.name!r} has no label column")
            T[:, c.offset:c.stop] = c.codebook[labels[c.name]]
        for a in (X, ids, emo, T):
            a.setflags(write=False)
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "identities", ids)
        object.__setattr__(self, "emotions", emo)
        object.__setattr__(self, "codecs", codecs)
        object.__setattr__(self, "targets", T)

    def __len__(self):
        return len(self.inputs)

    def __getitem__(self, i) -> Pattern:
        return Pattern(self.inputs[i], int(self.identities[i]), int(self.emotions[i]), self.targets[i])

    def labels(self, name: str) -> np.ndarray:
        return {"identity": self.identities, "emotion": self.emotions}[name]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(
            self.inputs[idx], self.identities[idx], self.emotions[idx],
            self.n_identities, self.n_emotions, self.provenance, self.codecs,
        )

    def with_codecs(self, codecs: Sequence[LabelCodec]) -> "Dataset":
        return Dataset(
            self.inputs, self.identities, self.emotions,
            self.n_identities, self.n_emotions, self.provenance, tuple(codecs),
        )

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.n_identities == other.n_identities
            and self.n_emotions == other.n_emotions
            and self.provenance == other.provenance
            and self.codecs == other.codecs
            and np.array_equal(self.inputs, other.inputs)
            and np.array_equal(self.identities, other.identities)
            and np.array_equal(self.emotions, other.emotions)
        )

    __hash__ = None


# -- synthetic faces ---------------------------------------------------------


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of the synthetic face generator.

    ``region_rows`` is a half-open row range ``(start, stop)`` on the 20x20
    grid where emotion templates live.  ``prototype_noise`` perturbs each
    (identity, emotion) cell once; ``sample_noise`` perturbs every sample.
    """

    n_identities: int = 53
    n_emotions: int = 3
    samples_per_cell: int = 1
    region_rows: tuple[int, int] = (12, 16)
    prototype_noise: float = 0.0
    sample_noise: float = 0.05
    template_amplitude: float = 0.2
    template_density: float = 1.0
    lookalike_fraction: float = 0.0
    lookalike_mix: float = 0.5
    block: int = 1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "region_rows", tuple(int(r) for r in self.region_rows))
        r0, r1 = self.region_rows
        if not 0 <= r0 < r1 <= GRID[0]:
            raise StructuralError(f"region_rows {self.region_rows} not within rows 0..{GRID[0] - 1}")
        for name in ("n_identities", "n_emotions", "samples_per_cell"):
            if getattr(self, name) < 1:
                raise StructuralError(f"{name} must be >= 1")
        if self.prototype_noise < 0 or self.sample_noise < 0:
            raise StructuralError("noise scales must be >= 0")
        if not 0 <= self.template_amplitude <= 0.2:
            raise StructuralError("template_amplitude must lie in [0, 0.2]")
        if not 0 < self.template_density <= 1:
            raise StructuralError("template_density must lie in (0, 1]")
        if self.block < 1 or GRID[0] % self.block or GRID[1] % self.block:
            raise StructuralError(f"block {self.block} must divide the {GRID[0]}x{GRID[1]} grid")
        if not (0 <= self.lookalike_fraction <= 1 and 0 <= self.lookalike_mix <= 1):
            raise StructuralError("lookalike_fraction and lookalike_mix must lie in [0, 1]")

    def describe(self) -> str:
        return (
            f"synth(ids={self.n_identities},emotions={self.n_emotions},per_cell={self.samples_per_cell},"
            f"rows={self.region_rows[0]}-{self.region_rows[1] - 1},proto_noise={self.prototype_noise!r},"
            f"noise={self.sample_noise!r},amp={self.template_amplitude!r},"
            f"density={self.template_density!r},lookalike={self.lookalike_fraction!r}@{self.lookalike_mix!r},"
            f"block={self.block},"
            f"seed={self.seed})"
        )


def band_mask(region_rows: tuple[int, int], grid: tuple[int, int] = GRID) -> np.ndarray:
    """Boolean grid-flattened mask of the emotion-sensitive rows."""
    m = np.zeros(grid, dtype=bool)
    m[region_rows[0]:region_rows[1], :] = True
    return m.ravel()


def emotion_templates(spec: SynthSpec) -> np.ndarray:
    """One additive template per emotion, zero outside the band.

    Emotion 0 (neutral) is flat; every other emotion carries a seeded
    +/-amplitude sign field on a ``template_density`` share of the band
    pixels, so templates differ pairwise.
    """
    n_pix = GRID[0] * GRID[1]
    band = np.flatnonzero(band_mask(spec.region_rows))
    rng = np.random.default_rng([spec.seed, 1])
    k = max(1, int(round(spec.template_density * len(band))))
    out = np.zeros((spec.n_emotions, n_pix))
    for e in range(1, spec.n_emotions):
        pix = rng.choice(band, size=k, replace=False)
        out[e, pix] = spec.template_amplitude * rng.choice([-1.0, 1.0], size=k)
    return out


def _coarse_size(block: int) -> int:
    return (GRID[0] // block) * (GRID[1] // block)


def _blocky(values, block: int) -> np.ndarray:
    """Upsample row-major coarse-grid values to the 20x20 grid by pixel repetition."""
    v = np.asarray(values)
    lead = v.shape[:-1]
    g = v.reshape(*lead, GRID[0] // block, GRID[1] // block)
    g = np.repeat(np.repeat(g, block, axis=-2), block, axis=-1)
    return g.reshape(*lead, GRID[0] * GRID[1])


def synth_faces(spec: SynthSpec) -> Dataset:
    """Prototype + emotion template + gaussian noise, clipped to [0, 1].

    With ``lookalike_fraction > 0`` that share of (identity, emotion) cells
    starts from a prototype pulled ``lookalike_mix`` of the way towards a
    random other identity, giving atypical samples that only memorization
    gets right.  Patterns are ordered identity-major, then emotion, then sample.
    """
    n_pix = GRID[0] * GRID[1]
    rng = np.random.default_rng([spec.seed, 0])
    protos = _blocky(rng.uniform(0.2, 0.8, size=(spec.n_identities, _coarse_size(spec.block))), spec.block)
    templates = emotion_templates(spec)
    cell_rng = np.random.default_rng([spec.seed, 2])
    sample_rng = np.random.default_rng([spec.seed, 3])
    look_rng = np.random.default_rng([spec.seed, 4])
    X, ids, emo = [], [], []
    for i in range(spec.n_identities):
        for e in range(spec.n_emotions):
            base = protos[i]
            if spec.lookalike_fraction > 0 and spec.n_identities > 1 and look_rng.random() < spec.lookalike_fraction:
                j = (i + 1 + look_rng.integers(spec.n_identities - 1)) % spec.n_identities
                base = (1.0 - spec.lookalike_mix) * protos[i] + spec.lookalike_mix * protos[j]
            cell = base + templates[e]
            if spec.prototype_noise > 0:
                cell = cell + _blocky(cell_rng.normal(0.0, spec.prototype_noise, _coarse_size(spec.block)), spec.block)
            for _ in range(spec.samples_per_cell):
                x = cell
                if spec.sample_noise > 0:
                    x = cell + sample_rng.normal(0.0, spec.sample_noise, n_pix)
                X.append(np.clip(x, 0.0, 1.0))
                ids.append(i)
                emo.append(e)
    return Dataset(np.array(X), ids, emo, spec.n_identities, spec.n_emotions, spec.describe())


def split(data: Dataset, train_per_identity: int, seed: int) -> tuple[Dataset, Dataset]:
    """Per identity, move ``train_per_identity`` random samples to the train set."""
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for ident in range(data.n_identities):
        rows = np.flatnonzero(data.identities == ident)
        if len(rows) == 0:
            continue
        if len(rows) <= train_per_identity:
            raise StructuralError(
                f"identity {ident} has {len(rows)} samples, need more than {train_per_identity}"
            )
        pick = rng.permutation(len(rows))
        train_idx.extend(rows[pick[:train_per_identity]])
        test_idx.extend(rows[pick[train_per_identity:]])
    return data.subset(sorted(train_idx)), data.subset(sorted(test_idx))


# -- graymap images ----------------------------------------------------------

_PGM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def read_pgm(path) -> np.ndarray:
    """Read a plain (P2) or binary (P5) graymap as float gray levels (height, width)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataLoadError(path, f"unreadable: {exc.strerror or exc}") from exc
    pos = 0
    header = []
    try:
        for _ in range(4):
            m = _PGM_TOKEN.match(raw, pos)
            if m is None:
                raise ValueError("truncated header")
            header.append(m.group(1))
            pos = m.end()
        magic = header[0]
        width, height, maxval = (int(t) for t in header[1:])
    except ValueError as exc:
        raise DataLoadError(path, f"not a graymap: {exc}") from exc
    if magic not in (b"P2", b"P5"):
        raise DataLoadError(path, f"not a graymap (magic {magic[:2]!r})")
    if width < 1 or height < 1 or not 0 < maxval <= 65535:
        raise DataLoadError(path, f"bad header {width}x{height} maxval={maxval}")
    n = width * height
    if magic == b"P5":
        body = raw[pos + 1:]
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        if len(body) < n * dtype.itemsize:
            raise DataLoadError(path, "truncated pixel data")
        pix = np.frombuffer(body[: n * dtype.itemsize], dtype=dtype).astype(np.float64)
    else:
        body = re.sub(rb"#[^\n]*", b"", raw[pos:]).split()
        if len(body) < n:
            raise DataLoadError(path, "truncated pixel data")
        try:
            pix = np.array([int(t) for t in body[:n]], dtype=np.float64)
        except ValueError as exc:
            raise DataLoadError(path, f"bad pixel value: {exc}") from exc
    if pix.max() > maxval:
        raise DataLoadError(path, "pixel value exceeds maxval")
    return pix.reshape(height, width)


def write_pgm(path, image, maxval: int = 255) -> None:
    """Write integer gray levels as a plain-text (P2) graymap."""
    img = np.asarray(image)
    h, w = img.shape
    lines = ["P2", f"{w} {h}", str(maxval)]
    lines += [" ".join(str(int(v)) for v in row) for row in img]
    Path(path).write_text("\n".join(lines) + "\n")


def _area_weights(n_src: int, n_dst: int) -> np.ndarray:
    """Row-stochastic overlap matrix: output cell k averages source span [k, k+1) * n_src/n_dst."""
    scale = n_src / n_dst
    W = np.zeros((n_dst, n_src))
    for k in range(n_dst):
        lo, hi = k * scale, (k + 1) * scale
        for s in range(int(np.floor(lo)), min(int(np.ceil(hi)), n_src)):
            W[k, s] = min(hi, s + 1) - max(lo, s)
    return W / W.sum(axis=1, keepdims=True)


def area_downscale(image, grid: tuple[int, int] = GRID) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    R = _area_weights(img.shape[0], grid[0])
    C = _area_weights(img.shape[1], grid[1])
    return R @ img @ C.T


def minmax_normalize(img) -> np.ndarray:
    lo, hi = img.min(), img.max()
    if hi == lo:
        return np.full(img.shape, 0.5)
    return (img - lo) / (hi - lo)


FILENAME_RULE = re.compile(
    r"^(?P<identity>[A-Za-z0-9-]+)_(?P<emotion>[A-Za-z]+|\d+)(?:_(?P<sample>[A-Za-z0-9-]+))?\.pgm$",
    re.IGNORECASE,
)


def parse_name(name: str) -> tuple[str, int]:
    """``<identity>_<emotion>[_<sample>].pgm`` -> (identity key, emotion index).

    Emotion is a name from ``EMOTIONS`` or a bare index.
    """
    m = FILENAME_RULE.match(name)
    if m is None:
        raise ValueError("file name does not match <identity>_<emotion>[_<sample>].pgm")
    emo = m.group("emotion").lower()
    if emo.isdigit():
        e = int(emo)
    elif emo in EMOTIONS:
        e = EMOTIONS.index(emo)
    else:
        raise ValueError(f"unknown emotion {emo!r}")
    return m.group("identity"), e


def _identity_sort_key(key: str):
    return (0, int(key), "") if key.isdigit() else (1, 0, key)


def load_images(directory, grid: tuple[int, int] = GRID, n_emotions: int = len(EMOTIONS)) -> Dataset:
    """Load every ``*.pgm`` in ``directory`` (sorted by name) into a Dataset.

    Any bad file aborts the whole load with a :class:`DataLoadError`.
    """
    directory = Path(directory)
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() == ".pgm")
    if not files:
        raise DataLoadError(directory, "no .pgm files found")
    rows, keys, emos = [], [], []
    for f in files:
        try:
            key, e = parse_name(f.name)
        except ValueError as exc:
            raise DataLoadError(f, str(exc)) from exc
        if e >= n_emotions:
            raise DataLoadError(f, f"emotion index {e} >= {n_emotions}")
        img = read_pgm(f)
        rows.append(minmax_normalize(area_downscale(img, grid)).ravel())
        keys.append(key)
        emos.append(e)
    order = sorted(set(keys), key=_identity_sort_key)
    index = {k: i for i, k in enumerate(order)}
    return Dataset(
        np.array(rows), [index[k] for k in keys], emos, len(order), n_emotions,
        f"images({directory.name},{len(files)} files)",
    )
