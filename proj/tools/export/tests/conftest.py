import json
import sys
from pathlib import Path

import pytest
import torch
from transformers import BertConfig, BertModel

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

WORDS = ["the", "newspaper", "fired", "its", "editor", "in", "chief", "got", "wet", "rain", "bank", "river",
         "a", "long", "sentence", ".", ",", "##s", "##ing", "news", "##paper"]
VOCAB = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"] + WORDS


@pytest.fixture(scope="session")
def checkpoint(tmp_path_factory):
    """A small randomly initialised BERT saved in the hub layout."""
    d = tmp_path_factory.mktemp("ckpt")
    torch.manual_seed(5)
    config = BertConfig(vocab_size=len(VOCAB), hidden_size=32, num_hidden_layers=2, num_attention_heads=2,
                        intermediate_size=64, max_position_embeddings=64, hidden_dropout_prob=0.0,
                        attention_probs_dropout_prob=0.0)
    model = BertModel(config, add_pooling_layer=False)
    model.eval()
    model.save_pretrained(d)
    (d / "vocab.txt").write_text("\n".join(VOCAB) + "\n", encoding="utf-8")
    (d / "tokenizer_config.json").write_text(json.dumps({"tokenizer_class": "BertTokenizer", "do_lower_case": True}))
    return d
