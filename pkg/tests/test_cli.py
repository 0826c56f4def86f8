import json
import os

import pytest

from threeg.cli import dispatch
from threeg.training import load_checkpoint


def run(capsys, *argv):
    code = dispatch(list(argv))
    out, err = capsys.readouterr()
    return code, [json.loads(line) for line in out.splitlines() if line.strip()], err


def tree_bytes(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for name in files:
            path = os.path.join(dirpath, name)
            out[os.path.relpath(path, root)] = open(path, "rb").read()
    return out


def test_synth_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(capsys, "synth", "--seed", "7", "--scenes", "50", "--out", str(a))[0] == 0
    assert run(capsys, "synth", "--seed", "7", "--scenes", "50", "--out", str(b))[0] == 0
    files_a, files_b = tree_bytes(a), tree_bytes(b)
    assert len(files_a) == 51 and files_a == files_b


def test_usage_errors_exit_two(tmp_path, capsys):
    assert run(capsys, "bogus")[0] == 2
    assert run(capsys, "synth", "--scenes", "3", "--out", str(tmp_path))[0] == 2  # seed is mandatory
    assert run(capsys, "synth", "--seed", "1", "--sce", "3", "--out", str(tmp_path))[0] == 2
    code, _, err = run(capsys, "gradcheck", "--seed", "0", "--mode", "SHOW_TELL")
    assert code == 2 and "unknown mode" in err


def test_data_errors_exit_one(tmp_path, capsys):
    code, out, err = run(capsys, "train", "--manifest", str(tmp_path / "missing.jsonl"),
                         "--out", str(tmp_path / "ck"), "--seed", "0")
    assert code == 1 and out == [] and "error" in err
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOTACKPT" + b"\0" * 16)
    run(capsys, "synth", "--seed", "1", "--scenes", "2", "--out", str(tmp_path / "d"))
    code, _, err = run(capsys, "evaluate", "--manifest", str(tmp_path / "d" / "manifest.jsonl"),
                       "--checkpoint", str(bad))
    assert code == 1 and "magic" in err


@pytest.fixture(scope="module")
def overfit_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data, ck = root / "data", root / "ck"
    assert dispatch(["synth", "--seed", "3", "--scenes", "1", "--out", str(data)]) == 0
    manifest = str(data / "manifest.jsonl")
    assert dispatch(["train", "--manifest", manifest, "--out", str(ck), "--seed", "0", "--epochs", "150",
                     "--hidden", "16", "--lr", "0.01", "--min-count", "1"]) == 0
    return manifest, ck


def test_train_zero_epochs_writes_only_initial(tmp_path, capsys, overfit_run):
    manifest, _ = overfit_run
    code, out, _ = run(capsys, "train", "--manifest", manifest, "--epochs", "0", "--out",
                       str(tmp_path), "--seed", "0", "--min-count", "1")
    assert code == 0 and out == []
    assert sorted(os.listdir(tmp_path)) == ["epoch_0000.bin"]


def test_train_outputs_and_resume(tmp_path, capsys, overfit_run):
    manifest, ck = overfit_run
    assert len(os.listdir(ck)) == 151
    code, out, _ = run(capsys, "train", "--manifest", manifest, "--out", str(tmp_path), "--seed", "0",
                       "--epochs", "2", "--checkpoint", str(ck / "epoch_0148.bin"))
    assert code == 0 and [r["epoch"] for r in out] == [149, 150]
    resumed = load_checkpoint(str(tmp_path / "epoch_0150.bin")).store
    original = load_checkpoint(str(ck / "epoch_0150.bin")).store
    for k in original:
        assert (resumed[k] == original[k]).all()


def test_evaluate_overfit_pair_is_perfect(capsys, overfit_run):
    manifest, ck = overfit_run
    code, [report], _ = run(capsys, "evaluate", "--manifest", manifest, "--checkpoint", str(ck / "epoch_0150.bin"))
    assert code == 0
    assert report["bleu4"] == 1.0 and report["bp"] == 1.0 and report["candidates"] == 1
    code, [beam], _ = run(capsys, "evaluate", "--manifest", manifest, "--checkpoint",
                          str(ck / "epoch_0150.bin"), "--beam", "3")
    assert beam["bleu4"] == 1.0


def test_generate_and_inspect(tmp_path, capsys, overfit_run):
    manifest, ck = overfit_run
    ckpt = str(ck / "epoch_0150.bin")
    code, [gen], _ = run(capsys, "generate", "--manifest", manifest, "--checkpoint", ckpt)
    assert code == 0 and gen["id"] == "scene00000" and gen["tokens"][-1] == 2
    code, [ins], _ = run(capsys, "inspect", "--manifest", manifest, "--checkpoint", ckpt, "--out", str(tmp_path))
    assert code == 0 and ins["caption"] == gen["caption"]
    lines = open(ins["trace"]).read().splitlines()
    assert len(lines) == len(gen["tokens"]) + 1


def test_ablate_one_line_per_mode(capsys, overfit_run):
    manifest, _ = overfit_run
    code, rows, _ = run(capsys, "ablate", "--manifest", manifest, "--seed", "0", "--epochs", "2",
                        "--hidden", "6", "--min-count", "1", "--mode", "NIC_VA", "--mode", "LRCN")
    assert code == 0 and [r["mode"] for r in rows] == ["NIC_VA", "LRCN"]
    assert all(set(r) >= {"bleu1", "bleu4", "bp", "final_loss"} for r in rows)


def test_gradcheck_reports_json(capsys):
    code, [report], _ = run(capsys, "gradcheck", "--seed", "2", "--mode", "LRCN", "--hidden", "4")
    assert report["mode"] == "LRCN" and report["checked"] > 0
    assert code == (0 if report["passed"] else 1)
