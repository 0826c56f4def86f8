import json
import os
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from threeg.data import (
    BOS,
    EOS,
    PAD,
    UNK,
    FeatureRecord,
    Vocabulary,
    build_vocab,
    encode_caption,
    feature_bytes,
    gen_synthetic,
    parse_features,
    preprocess,
    read_features,
    read_manifest,
    signature_index,
    signatures,
    write_features,
)
from threeg.errors import DataError, FormatError


@pytest.mark.parametrize(
    "raw, expected",
    [
        ("A man, riding!!", ["a", "man", "riding"]),
        ("", []),
        ("Dog2 dog2 DOG2", ["dog2", "dog2", "dog2"]),
        ("café-au-lait", ["caf", "au", "lait"]),
        ("  two\tspaces\n", ["two", "spaces"]),
    ],
)
def test_preprocess(raw, expected):
    assert preprocess(raw) == expected


@given(st.text())
def test_preprocess_idempotent(raw):
    once = preprocess(raw)
    assert preprocess(" ".join(once)) == once


def test_build_vocab_min_count_boundary():
    corpus = [["x"]] * 4 + [["y"]] * 5
    vocab = build_vocab(corpus)
    assert "x" not in vocab and "y" in vocab


def test_build_vocab_empty():
    assert build_vocab([]).tokens == ["<pad>", "<bos>", "<eos>", "<unk>"]


def test_build_vocab_order_count_then_lexicographic():
    corpus = [["b", "a", "c", "c"]] * 5
    assert build_vocab(corpus).tokens[4:] == ["c", "a", "b"]


@given(st.lists(st.lists(st.sampled_from(list("abcdefg")), max_size=6), max_size=40))
def test_build_vocab_deterministic_and_order_free(corpus):
    v1 = build_vocab(corpus, min_count=2)
    v2 = build_vocab(list(reversed(corpus)), min_count=2)
    assert v1.tokens == v2.tokens


def test_encode_caption():
    vocab = Vocabulary(["<pad>", "<bos>", "<eos>", "<unk>", "x", "y", "z", "a", "q", "man"])
    assert encode_caption(["a", "man"], vocab) == [1, 7, 9, 2]
    assert encode_caption([], vocab) == [1, 2]
    assert encode_caption(["zzz"], vocab) == [1, 3, 2]


@given(st.lists(st.sampled_from(["a", "b", "c", "zz", "<pad>"]), max_size=10))
def test_encode_never_emits_pad(tokens):
    vocab = build_vocab([["a", "b"]] * 5)
    enc = encode_caption(tokens, vocab)
    assert enc[0] == BOS and enc[-1] == EOS
    assert PAD not in enc


def test_vocabulary_rejects_missing_reserved():
    with pytest.raises(ValueError):
        Vocabulary(["a", "b"])


def _record(l, C, D, seed=0):
    r = np.random.default_rng(seed)
    return FeatureRecord("img", r.standard_normal(l), r.standard_normal((C, D)))


def test_feature_roundtrip_and_size(tmp_path):
    rec = _record(4, 2, 3)
    path = tmp_path / "a.feat"
    write_features(rec, path)
    assert os.path.getsize(path) == 8 + 12 + 4 * (4 + 2 * 3)
    assert read_features(path, "img") == rec


def test_feature_layout_is_location_major():
    rec = FeatureRecord("i", [1.0], [[1.0, 2.0], [3.0, 4.0]])
    data = feature_bytes(rec)
    assert data[:8] == b"3GFEAT01"
    assert struct.unpack("<III", data[8:20]) == (1, 2, 2)
    assert struct.unpack("<5f", data[20:]) == (1.0, 1.0, 2.0, 3.0, 4.0)


@settings(max_examples=1000, deadline=None)
@given(
    l=st.integers(1, 6), C=st.integers(1, 4), D=st.integers(1, 5), data=st.data(),
)
def test_feature_roundtrip_random(l, C, D, data):
    f32 = st.floats(width=32, allow_nan=False, allow_infinity=False)
    g = data.draw(arrays(np.float32, l, elements=f32))
    loc = data.draw(arrays(np.float32, (C, D), elements=f32))
    rec = FeatureRecord("r", g, loc)
    assert parse_features(feature_bytes(rec), "r") == rec


def test_feature_errors():
    data = feature_bytes(_record(4, 2, 3))
    with pytest.raises(FormatError) as exc:
        parse_features(b"XXXXXXXX" + data[8:])
    assert exc.value.offset == 0
    with pytest.raises(FormatError) as exc:
        parse_features(data[:-5])
    assert exc.value.offset == len(data) - 5
    with pytest.raises(FormatError):
        parse_features(data[:10])
    with pytest.raises(FormatError) as exc:
        parse_features(data, expect=(4, 2, 4))
    assert exc.value.offset == 8


def test_synthetic_deterministic(tmp_path):
    gen_synthetic(11, 6, tmp_path / "a")
    gen_synthetic(11, 6, tmp_path / "b")
    for name in ["manifest.jsonl"] + [f"features/scene{k:05d}.feat" for k in range(6)]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_synthetic_empty(tmp_path):
    manifest, _ = gen_synthetic(1, 0, tmp_path)
    assert manifest.entries == []
    assert read_manifest(tmp_path / "manifest.jsonl").entries == []


def test_synthetic_rejects_non_square_grid(tmp_path):
    with pytest.raises(ValueError):
        gen_synthetic(1, 1, tmp_path, grid=8)


def test_synthetic_signatures(tmp_path):
    # find a seed whose first scene is a single object, then check every cell
    for seed in range(200):
        manifest, scenes = gen_synthetic(seed, 1, tmp_path / str(seed), grid=9, feat_dim=16)
        if len(scenes[0].objects) == 1:
            break
    (cell, color, shape), = scenes[0].objects
    # independent regeneration of the documented signature procedure
    sig = np.random.default_rng(20190101).standard_normal((13, 16))
    feats = manifest.load_features(manifest.entries[0])
    for i in range(9):
        expected = sig[signature_index(color, shape)] if i == cell else sig[12]
        assert np.all(np.abs(feats.local[i] - expected) <= 0.05 + 1e-6)
    np.testing.assert_allclose(feats.global_[:16], feats.local.astype(np.float64).mean(axis=0), atol=1e-6)
    assert feats.global_[16] == 1.0
    assert manifest.entries[0].captions == [f"a {color} {shape}"]
    np.testing.assert_array_equal(signatures(16), sig)


def test_synthetic_captions_and_manifest(tmp_path):
    manifest, scenes = gen_synthetic(5, 40, tmp_path)
    back = read_manifest(tmp_path / "manifest.jsonl")
    assert (back.l, back.C, back.D) == (17, 9, 16)
    assert [e.captions for e in back.entries] == [e.captions for e in manifest.entries]
    for scene, entry in zip(scenes, back.entries):
        words = preprocess(entry.captions[0])
        assert words.count("a") == len(scene.objects)
        assert 1 <= len(scene.objects) <= 3


def test_manifest_errors(tmp_path):
    gen_synthetic(5, 2, tmp_path)
    path = tmp_path / "manifest.jsonl"
    lines = path.read_text().splitlines()
    bad = tmp_path / "bad.jsonl"
    bad.write_text(json.dumps({"l": 17, "C": 9, "D": 15}) + "\n" + "\n".join(lines[1:]) + "\n")
    with pytest.raises(FormatError):
        read_manifest(bad)
    missing = tmp_path / "missing.jsonl"
    missing.write_text(lines[0] + "\n" + json.dumps({"id": "x", "features": "nope.feat", "captions": []}) + "\n")
    with pytest.raises(DataError, match="x"):
        read_manifest(missing)
    headless = tmp_path / "headless.jsonl"
    headless.write_text("\n".join(lines[1:]) + "\n")
    with pytest.raises(DataError):
        read_manifest(headless)
