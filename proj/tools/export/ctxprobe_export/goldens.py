"""Reference tokenizations and sub-layer activations for the C++ golden tests."""

import json
from pathlib import Path

import torch

from .container import write_container
from .export import load_exported, sha256_file

MAX_LEN = 128


def _slow_tokenizer(vocab_file):
    import transformers

    cls = getattr(transformers, "BertTokenizerLegacy", None) or transformers.BertTokenizer
    return cls(vocab_file=str(vocab_file), do_lower_case=True)


def _read_sentences(sentences):
    if isinstance(sentences, (str, Path)):
        return [s for s in Path(sentences).read_text(encoding="utf-8").split("\n") if s.strip()]
    return list(sentences)


def dump_tokenizer_corpus(vocab_file, sentences, out_path, max_len=MAX_LEN):
    """One JSON line per sentence: id, text, ids, pieces, word_ids (-1 for specials)."""
    from tokenizers import BertWordPieceTokenizer

    slow = _slow_tokenizer(vocab_file)
    fast = BertWordPieceTokenizer(str(vocab_file), lowercase=True)
    fast.enable_truncation(max_len)
    with open(out_path, "w", encoding="utf-8") as f:
        for i, s in enumerate(_read_sentences(sentences)):
            ids = slow(s, truncation=True, max_length=max_len)["input_ids"]
            fo = fast.encode(s)
            if fo.ids != ids:
                raise RuntimeError("reference tokenizers disagree on %r" % s)
            rec = {
                "id": i,
                "text": s,
                "ids": ids,
                "pieces": slow.convert_ids_to_tokens(ids),
                "word_ids": [(-1 if w is None else w) for w in fo.word_ids],
            }
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")
    return Path(out_path)


def _capture_hooks(model, captures):
    def hook(key):
        def fn(_module, _inp, out):
            t = out[0] if isinstance(out, tuple) else out
            captures[key] = t.detach()[0].clone()
        return fn

    handles = [model.embeddings.register_forward_hook(hook("embeddings"))]
    for li, layer in enumerate(model.encoder.layer, start=1):
        handles.append(layer.attention.output.dense.register_forward_hook(hook("layer.%d.sa_pre_residual" % li)))
        handles.append(layer.attention.output.register_forward_hook(hook("layer.%d.sa_post_ln" % li)))
        handles.append(layer.intermediate.register_forward_hook(hook("layer.%d.acts" % li)))
        handles.append(layer.output.register_forward_hook(hook("layer.%d.out" % li)))
    return handles


def dump_goldens(model_dir, sentences_file, out_dir, max_len=MAX_LEN):
    """Writes out_dir/encoder_golden.bin for every sentence of sentences_file.

    sentences_file is a UTF-8 file with one sentence per line, or a list of
    strings. Sentences longer than max_len pieces are skipped and listed under
    "skipped" in the header.
    """
    model_dir = Path(model_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = load_exported(model_dir)
    tok = _slow_tokenizer(model_dir / "vocab.txt")
    cfg = model.config

    captures = {}
    handles = _capture_hooks(model, captures)
    arrays, records, skipped = [], [], []
    offset = 0
    try:
        for s in _read_sentences(sentences_file):
            ids = tok(s)["input_ids"]
            if len(ids) > max_len:
                skipped.append({"text": s, "reason": "%d pieces exceed max_len %d" % (len(ids), max_len)})
                continue
            input_ids = torch.tensor([ids])
            captures.clear()
            with torch.no_grad():
                res = model(input_ids=input_ids, token_type_ids=torch.zeros_like(input_ids),
                            attention_mask=torch.ones_like(input_ids))
            captures["final_hidden"] = res.last_hidden_state[0].detach().clone()
            tensors = {}
            for key in sorted(captures):
                arr = captures[key].numpy()
                tensors[key] = {"shape": list(arr.shape), "offset": offset}
                arrays.append(arr)
                offset += arr.size
            records.append({"text": s, "ids": ids, "tensors": tensors})
    finally:
        for h in handles:
            h.remove()

    header = {
        "format": "ctxprobe.golden",
        "version": 1,
        "model_sha256": sha256_file(model_dir / "model.safetensors"),
        "hidden": cfg.hidden_size,
        "intermediate": cfg.intermediate_size,
        "num_layers": cfg.num_hidden_layers,
        "sentences": records,
    }
    if skipped:
        header["skipped"] = skipped
    path = out / "encoder_golden.bin"
    write_container(path, header, arrays)
    return path
