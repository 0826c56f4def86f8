"""Caption preprocessing, vocabulary, feature files, manifests and a synthetic scene corpus."""
from __future__ import annotations

import json
import os
import re
import struct
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, FormatError

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")

FEATURE_MAGIC = b"3GFEAT01"
_HEADER = struct.Struct("<8sIII")

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def preprocess(raw):
    """Lowercase ``raw`` and split it into maximal runs of ASCII alphanumerics."""
    return _TOKEN_RE.findall(raw.lower())


@dataclass
class Vocabulary:
    tokens: list = field(default_factory=lambda: list(RESERVED))

    def __post_init__(self):
        if tuple(self.tokens[:4]) != RESERVED:
            raise ValueError("vocabulary must start with the reserved tokens")
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def lookup(self, token):
        """Index of ``token``; unknown and reserved spellings map to UNK."""
        idx = self.index.get(token, UNK)
        return idx if idx >= len(RESERVED) else UNK

    def decode(self, indices):
        """Map indices back to words, dropping reserved tokens."""
        return [self.tokens[i] for i in indices if i >= len(RESERVED)]


def build_vocab(corpus, min_count=5):
    """Keep tokens seen at least ``min_count`` times, most frequent first, ties lexicographic."""
    counts = Counter(tok for sentence in corpus for tok in sentence)
    kept = [tok for tok, n in counts.items() if n >= min_count and tok not in RESERVED]
    kept.sort(key=lambda tok: (-counts[tok], tok))
    return Vocabulary(list(RESERVED) + kept)


def encode_caption(tokens, vocab):
    return [BOS] + [vocab.lookup(tok) for tok in tokens] + [EOS]


@dataclass
class FeatureRecord:
    """Pre-extracted image features: ``global_`` has shape (l,), ``local`` (C, D); float32."""

    image_id: str
    global_: np.ndarray
    local: np.ndarray

    def __post_init__(self):
        self.global_ = np.asarray(self.global_, dtype=np.float32).reshape(-1)
        self.local = np.asarray(self.local, dtype=np.float32)
        if self.local.ndim != 2:
            raise ValueError("local features must be a (C, D) array")
        if not (np.all(np.isfinite(self.global_)) and np.all(np.isfinite(self.local))):
            raise ValueError(f"non-finite feature values for image {self.image_id!r}")

    @property
    def dims(self):
        return self.global_.shape[0], self.local.shape[0], self.local.shape[1]

    def __eq__(self, other):
        if not isinstance(other, FeatureRecord):
            return NotImplemented
        return (
            self.image_id == other.image_id
            and self.global_.shape == other.global_.shape
            and self.local.shape == other.local.shape
            and self.global_.tobytes() == other.global_.tobytes()
            and self.local.tobytes() == other.local.tobytes()
        )


def feature_bytes(record):
    l, C, D = record.dims
    return (
        _HEADER.pack(FEATURE_MAGIC, l, C, D)
        + record.global_.astype("<f4").tobytes()
        + record.local.astype("<f4").tobytes()
    )


def write_features(record, path):
    with open(path, "wb") as fh:
        fh.write(feature_bytes(record))


def parse_features(data, image_id="", expect=None):
    if len(data) < _HEADER.size:
        raise FormatError("truncated feature header", offset=len(data))
    magic, l, C, D = _HEADER.unpack_from(data, 0)
    if magic != FEATURE_MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    if expect is not None and (l, C, D) != tuple(expect):
        raise FormatError(f"dims {(l, C, D)} do not match manifest {tuple(expect)}", offset=8)
    need = _HEADER.size + 4 * (l + C * D)
    if len(data) < need:
        raise FormatError(f"truncated feature payload, need {need} bytes", offset=len(data))
    if len(data) > need:
        raise FormatError("trailing bytes after feature payload", offset=need)
    g = np.frombuffer(data, dtype="<f4", count=l, offset=_HEADER.size)
    loc = np.frombuffer(data, dtype="<f4", count=C * D, offset=_HEADER.size + 4 * l)
    return FeatureRecord(image_id, g.astype(np.float32), loc.reshape(C, D).astype(np.float32))


def read_features(path, image_id=None, expect=None):
    with open(path, "rb") as fh:
        data = fh.read()
    if image_id is None:
        image_id = os.path.splitext(os.path.basename(path))[0]
    return parse_features(data, image_id, expect)


@dataclass
class ManifestEntry:
    image_id: str
    features: str
    captions: list


@dataclass
class DatasetManifest:
    l: int
    C: int
    D: int
    entries: list = field(default_factory=list)
    root: str = "."

    def feature_path(self, entry):
        return os.path.join(self.root, entry.features)

    def load_features(self, entry):
        return read_features(self.feature_path(entry), entry.image_id, (self.l, self.C, self.D))


def write_manifest(manifest, path):
    lines = [json.dumps({"l": manifest.l, "C": manifest.C, "D": manifest.D})]
    for e in manifest.entries:
        lines.append(json.dumps({"id": e.image_id, "features": e.features, "captions": list(e.captions)}))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_manifest(path, check_files=True):
    """Load a JSON-lines manifest; feature paths resolve relative to its directory."""
    root = os.path.dirname(os.path.abspath(path))
    with open(path, encoding="utf-8") as fh:
        rows = [json.loads(line) for line in fh if line.strip()]
    if not rows or not {"l", "C", "D"} <= rows[0].keys():
        raise DataError(f"{path}: first line must be a header with l, C, D")
    head = rows[0]
    manifest = DatasetManifest(int(head["l"]), int(head["C"]), int(head["D"]), root=root)
    for row in rows[1:]:
        entry = ManifestEntry(str(row["id"]), row["features"], list(row.get("captions", [])))
        if check_files:
            fpath = manifest.feature_path(entry)
            if not os.path.exists(fpath):
                raise DataError(f"image {entry.image_id}: feature file {fpath} missing")
            with open(fpath, "rb") as fh:
                header = fh.read(_HEADER.size)
            if len(header) < _HEADER.size:
                raise FormatError(f"{fpath}: truncated feature header", offset=len(header))
            magic, l, C, D = _HEADER.unpack(header)
            if magic != FEATURE_MAGIC:
                raise FormatError(f"{fpath}: bad magic {magic!r}", offset=0)
            if (l, C, D) != (manifest.l, manifest.C, manifest.D):
                raise FormatError(f"{fpath}: dims {(l, C, D)} do not match manifest", offset=8)
        manifest.entries.append(entry)
    return manifest


# --- synthetic scenes -------------------------------------------------------

COLORS = ("red", "green", "blue", "yellow")
SHAPES = ("square", "circle", "triangle")
SIGNATURE_SEED = 20190101
NOISE = 0.05


def signatures(feat_dim):
    """Fixed local-feature signatures: one row per (color, shape), last row is background.

    Rows are drawn from ``default_rng(SIGNATURE_SEED)`` as standard normals,
    in color-major order, independent of any scene seed.
    """
    rng = np.random.default_rng(SIGNATURE_SEED)
    return rng.standard_normal((len(COLORS) * len(SHAPES) + 1, feat_dim))


def signature_index(color, shape):
    return COLORS.index(color) * len(SHAPES) + SHAPES.index(shape)


@dataclass
class Scene:
    objects: list  # (cell, color, shape), sorted by cell

    def caption(self, side):
        words = [f"a {c} {s}" for _, c, s in self.objects]
        if len(self.objects) == 1:
            return words[0]
        (c0, *_), (c1, *_) = self.objects[0], self.objects[1]
        col0, col1 = c0 % side, c1 % side
        if col0 < col1:
            rel = "left of"
        elif col0 > col1:
            rel = "right of"
        else:
            rel = "above"
        text = f"{words[0]} {rel} {words[1]}"
        if len(self.objects) == 3:
            text += f" and {words[2]}"
        return text


def render_scene(scene, grid, feat_dim, global_dim, rng, sig=None):
    sig = signatures(feat_dim) if sig is None else sig
    local = np.repeat(sig[-1][None, :], grid, axis=0)
    for cell, color, shape in scene.objects:
        local[cell] = sig[signature_index(color, shape)]
    local = local + rng.uniform(-NOISE, NOISE, size=local.shape)
    g = np.zeros(global_dim)
    g[:feat_dim] = local.mean(axis=0)
    g[feat_dim] = len(scene.objects)
    return g, local


def sample_scene(rng, grid):
    n = int(rng.integers(1, 4))
    cells = sorted(rng.choice(grid, size=n, replace=False).tolist())
    return Scene([(int(c), COLORS[rng.integers(len(COLORS))], SHAPES[rng.integers(len(SHAPES))]) for c in cells])


def gen_synthetic(seed, n_scenes, out_dir, grid=9, feat_dim=16, global_dim=None):
    """Write ``n_scenes`` synthetic scenes plus ``manifest.jsonl`` into ``out_dir``.

    Each scene holds 1-3 colored shapes on a ``grid``-cell square layout; the
    output is a pure function of the arguments.
    """
    side = int(round(grid ** 0.5))
    if side * side != grid:
        raise ValueError(f"grid size {grid} is not a perfect square")
    global_dim = feat_dim + 1 if global_dim is None else global_dim
    if global_dim < feat_dim + 1:
        raise ValueError("global_dim must be at least feat_dim + 1")
    rng = np.random.default_rng(seed)
    sig = signatures(feat_dim)
    os.makedirs(os.path.join(out_dir, "features"), exist_ok=True)
    manifest = DatasetManifest(global_dim, grid, feat_dim, root=os.path.abspath(out_dir))
    scenes = []
    for k in range(n_scenes):
        scene = sample_scene(rng, grid)
        g, local = render_scene(scene, grid, feat_dim, global_dim, rng, sig)
        image_id = f"scene{k:05d}"
        rel = f"features/{image_id}.feat"
        write_features(FeatureRecord(image_id, g, local), os.path.join(out_dir, rel))
        manifest.entries.append(ManifestEntry(image_id, rel, [scene.caption(side)]))
        scenes.append(scene)
    write_manifest(manifest, os.path.join(out_dir, "manifest.jsonl"))
    return manifest, scenes


def manifest_corpus(manifest):
    """Preprocessed token lists of every caption in the manifest."""
    return [preprocess(c) for e in manifest.entries for c in e.captions]


def load_examples(manifest, vocab, entries=None):
    """(features, encoded caption) pairs, one per caption."""
    out = []
    for entry in manifest.entries if entries is None else entries:
        feats = manifest.load_features(entry)
        for caption in entry.captions:
            out.append((feats, encode_caption(preprocess(caption), vocab)))
    return out
