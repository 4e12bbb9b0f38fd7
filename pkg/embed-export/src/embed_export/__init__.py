"""Export frozen transformer embeddings of text datasets to FVEC1 files."""
from .exporter import (ExportError, TextRecord, export_embeddings,
                       read_jsonl, write_fvec)

__all__ = ["ExportError", "TextRecord", "export_embeddings", "read_jsonl",
           "write_fvec"]

__version__ = "0.1.0"
