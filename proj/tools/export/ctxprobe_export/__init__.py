"""Bridge from the PyTorch BERT ecosystem to ctxprobe model directories and golden files."""

from .container import read_container, write_container
from .export import ExportError, export_model, export_weights, load_exported
from .goldens import dump_goldens, dump_tokenizer_corpus

__all__ = [
    "ExportError",
    "dump_goldens",
    "dump_tokenizer_corpus",
    "export_model",
    "export_weights",
    "load_exported",
    "read_container",
    "write_container",
]
