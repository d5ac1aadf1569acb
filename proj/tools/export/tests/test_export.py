import json

import pytest
import torch
from safetensors.torch import load_file, save_file
from transformers import BertModel

from ctxprobe_export import ExportError, export_weights, load_exported, read_container
from ctxprobe_export.__main__ import main
from ctxprobe_export.export import expected_tensors, sha256_file

from conftest import VOCAB


def test_export_writes_model_dir(checkpoint, tmp_path):
    out = export_weights(str(checkpoint), tmp_path / "m")
    for name in ["config.json", "model.safetensors", "vocab.txt", "manifest.json"]:
        assert (out / name).is_file()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["source_checkpoint"] == str(checkpoint)
    for name, rec in manifest["files"].items():
        assert sha256_file(out / name) == rec["sha256"]
    state = load_file(str(out / "model.safetensors"))
    assert {t["name"] for t in manifest["tensors"]} == set(state)
    assert set(expected_tensors(2)) <= set(state)
    assert all(v.dtype == torch.float32 for v in state.values())
    cfg = json.loads((out / "config.json").read_text())
    assert (cfg["num_hidden_layers"], cfg["hidden_size"], cfg["intermediate_size"]) == (2, 32, 64)
    assert (out / "vocab.txt").read_text().split("\n")[:-1] == VOCAB


def test_reexport_gives_identical_checksums(checkpoint, tmp_path):
    a = export_weights(str(checkpoint), tmp_path / "a")
    b = export_weights(str(checkpoint), tmp_path / "b")
    for name in ["config.json", "model.safetensors", "vocab.txt", "manifest.json"]:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_missing_tensor_is_an_export_error(checkpoint, tmp_path):
    broken = tmp_path / "broken"
    broken.mkdir()
    for f in checkpoint.iterdir():
        (broken / f.name).write_bytes(f.read_bytes())
    state = load_file(str(checkpoint / "model.safetensors"))
    del state["encoder.layer.1.output.dense.weight"]
    save_file(state, str(broken / "model.safetensors"), metadata={"format": "pt"})
    with pytest.raises(ExportError, match="encoder.layer.1.output.dense.weight"):
        export_weights(str(broken), tmp_path / "out")


def test_unavailable_checkpoint(tmp_path):
    with pytest.raises(ExportError):
        export_weights(str(tmp_path / "nowhere"), tmp_path / "out")


def test_export_reloads_in_reference_ecosystem(checkpoint, tmp_path):
    out = export_weights(str(checkpoint), tmp_path / "m")
    original = BertModel.from_pretrained(str(checkpoint), add_pooling_layer=False).eval()
    reloaded = BertModel.from_pretrained(str(out), add_pooling_layer=False).eval()
    ours = load_exported(out)
    ids = torch.tensor([[2, 5, 6, 7, 8, 9, 10, 11, 3]])
    with torch.no_grad():
        ref = original(input_ids=ids).last_hidden_state
        for m in (reloaded, ours):
            assert (m(input_ids=ids).last_hidden_state - ref).abs().max().item() <= 1e-4


def test_load_exported_verifies_checksums(checkpoint, tmp_path):
    out = export_weights(str(checkpoint), tmp_path / "m")
    with open(out / "vocab.txt", "a") as f:
        f.write("extra\n")
    with pytest.raises(ExportError, match="checksum"):
        load_exported(out)


def test_cli_exit_codes(checkpoint, tmp_path, capsys):
    assert main(["export-weights", str(checkpoint), str(tmp_path / "m")]) == 0
    assert main(["export-weights", str(tmp_path / "nowhere"), str(tmp_path / "x")]) == 2
    assert "error:" in capsys.readouterr().err
