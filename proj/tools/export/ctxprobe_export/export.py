"""export_weights: dump a BERT checkpoint into a ctxprobe model directory.

Layout written to out_dir:
  config.json        architecture fields read by the C++ loader
  model.safetensors  float32 tensors under the canonical BertModel names
  vocab.txt          WordPiece vocabulary, one token per line, in id order
  manifest.json      source checkpoint id, file checksums, tensor shapes,
                     probe sentences
"""

import hashlib
import json
from pathlib import Path

import torch
from safetensors.torch import load_file, save_file
from transformers import BertConfig, BertModel

CONFIG_KEYS = [
    "num_hidden_layers",
    "hidden_size",
    "num_attention_heads",
    "intermediate_size",
    "vocab_size",
    "max_position_embeddings",
    "type_vocab_size",
    "layer_norm_eps",
    "hidden_act",
]

LAYER_TENSORS = [
    "attention.self.query.weight", "attention.self.query.bias",
    "attention.self.key.weight", "attention.self.key.bias",
    "attention.self.value.weight", "attention.self.value.bias",
    "attention.output.dense.weight", "attention.output.dense.bias",
    "attention.output.LayerNorm.weight", "attention.output.LayerNorm.bias",
    "intermediate.dense.weight", "intermediate.dense.bias",
    "output.dense.weight", "output.dense.bias",
    "output.LayerNorm.weight", "output.LayerNorm.bias",
]

DEFAULT_PROBE_SENTENCES = [
    "The newspaper fired its editor in chief",
    "The newspaper got wet in the rain",
]


class ExportError(RuntimeError):
    pass


def sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def expected_tensors(num_layers):
    names = [
        "embeddings.word_embeddings.weight",
        "embeddings.position_embeddings.weight",
        "embeddings.token_type_embeddings.weight",
        "embeddings.LayerNorm.weight",
        "embeddings.LayerNorm.bias",
    ]
    for i in range(num_layers):
        names += ["encoder.layer.%d.%s" % (i, t) for t in LAYER_TENSORS]
    return names


def _check_complete(state, num_layers):
    missing = [n for n in expected_tensors(num_layers) if n not in state]
    if missing:
        raise ExportError("missing tensor%s: %s" % ("s" if len(missing) > 1 else "", ", ".join(missing)))


def export_model(model, vocab, out_dir, source_checkpoint, probe_sentences=None, generator="ctxprobe_export"):
    """Writes an in-memory BertModel and its vocabulary (tokens in id order)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = model.config
    if len(vocab) != cfg.vocab_size:
        raise ExportError("vocabulary has %d tokens, config says %d" % (len(vocab), cfg.vocab_size))
    state = {k: v.detach().contiguous().float() for k, v in model.state_dict().items()
             if v.dtype.is_floating_point}
    _check_complete(state, cfg.num_hidden_layers)

    (out / "vocab.txt").write_text("\n".join(vocab) + "\n", encoding="utf-8")
    save_file(state, str(out / "model.safetensors"))
    config = {"architectures": ["BertModel"], "model_type": "bert"}
    config.update({k: getattr(cfg, k) for k in CONFIG_KEYS})
    (out / "config.json").write_text(json.dumps(config, indent=2) + "\n")

    manifest = {
        "source_checkpoint": source_checkpoint,
        "generator": generator,
        "reference_versions": {"torch": torch.__version__},
        "files": {name: {"sha256": sha256_file(out / name)}
                  for name in ["config.json", "model.safetensors", "vocab.txt"]},
        "tensors": [{"name": k, "shape": list(v.shape)} for k, v in sorted(state.items())],
        "probe_sentences": list(DEFAULT_PROBE_SENTENCES if probe_sentences is None else probe_sentences),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return out


def _vocab_tokens(checkpoint_id):
    from transformers import AutoTokenizer

    tok = AutoTokenizer.from_pretrained(checkpoint_id)
    by_id = sorted(tok.get_vocab().items(), key=lambda kv: kv[1])
    if [i for _, i in by_id] != list(range(len(by_id))):
        raise ExportError("%s: vocabulary ids are not contiguous" % checkpoint_id)
    return [t for t, _ in by_id]


def export_weights(checkpoint_id, out_dir, probe_sentences=None):
    """Exports a BERT checkpoint (hub id or local directory) to out_dir."""
    try:
        model, info = BertModel.from_pretrained(
            checkpoint_id, add_pooling_layer=False, output_loading_info=True, attn_implementation="eager")
    except OSError as e:
        raise ExportError("checkpoint %s is not available: %s" % (checkpoint_id, e)) from e
    missing = [k for k in info.get("missing_keys", []) if not k.endswith(("position_ids", "token_type_ids"))]
    if missing:
        raise ExportError("missing tensor%s in %s: %s" % ("s" if len(missing) > 1 else "", checkpoint_id,
                                                          ", ".join(sorted(missing))))
    model.eval()
    return export_model(model, _vocab_tokens(checkpoint_id), out_dir, str(checkpoint_id), probe_sentences)


def load_exported(model_dir):
    """Rebuilds an eval-mode BertModel from a model directory, verifying checksums."""
    d = Path(model_dir)
    for name in ["config.json", "model.safetensors", "vocab.txt", "manifest.json"]:
        if not (d / name).is_file():
            raise ExportError("%s: missing %s" % (d, name))
    manifest = json.loads((d / "manifest.json").read_text())
    for name, rec in manifest["files"].items():
        if sha256_file(d / name) != rec["sha256"]:
            raise ExportError("%s: checksum mismatch for %s" % (d, name))
    cfg = json.loads((d / "config.json").read_text())
    config = BertConfig(**{k: cfg[k] for k in CONFIG_KEYS},
                        hidden_dropout_prob=0.0, attention_probs_dropout_prob=0.0)
    config._attn_implementation = "eager"
    model = BertModel(config, add_pooling_layer=False)
    state = load_file(str(d / "model.safetensors"))
    _check_complete(state, config.num_hidden_layers)
    listed = {t["name"] for t in manifest["tensors"]}
    if set(state) != listed:
        raise ExportError("%s: manifest tensor list does not match the container" % d)
    missing, _ = model.load_state_dict(state, strict=False)
    missing = [k for k in missing if not k.endswith(("position_ids", "token_type_ids"))]
    if missing:
        raise ExportError("%s: missing tensors %s" % (d, ", ".join(missing)))
    model.eval()
    return model
