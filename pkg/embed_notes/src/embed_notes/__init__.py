"""Averaged sentence embeddings for clinical notes, written as EMB1 matrices."""

from .core import (
    EMB_MAGIC,
    NoteError,
    embed_notes,
    read_notes,
    sentence_split,
    write_matrix,
)
from .encoders import HashedEncoder, ModelUnavailableError, resolve_encoder

__all__ = [
    "EMB_MAGIC",
    "HashedEncoder",
    "ModelUnavailableError",
    "NoteError",
    "embed_notes",
    "read_notes",
    "resolve_encoder",
    "sentence_split",
    "write_matrix",
]
