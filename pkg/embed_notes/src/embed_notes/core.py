"""Note ingestion, sentence segmentation, and the averaged-embedding matrix.

A note's row is the mean of its sentence embeddings (a single-sentence note
keeps that embedding unchanged).  Sentences end at '.', '!', '?' or a blank
line — the same boundary rule the fusion package applies when masking notes,
so the two tools always agree on segmentation.

Output is the EMB1 container that package's loader reads: a binary header
(magic, u32 count, u32 width) followed by little-endian float32 rows, with
note ids in an ``<out>.ids`` sidecar, one per line, in row order.
"""

from __future__ import annotations

import json
import re
import struct
from pathlib import Path

import numpy as np

EMB_MAGIC = b"EMB1"

_BOUNDARY = re.compile(r"[.!?]|\n\s*\n")


class NoteError(ValueError):
    """Malformed notes input."""


def sentence_split(text: str) -> list[str]:
    """Non-empty sentence strings, in note order, whitespace-trimmed."""
    parts = []
    start = 0
    for m in _BOUNDARY.finditer(text):
        parts.append(text[start : m.end()])
        start = m.end()
    if start < len(text):
        parts.append(text[start:])
    stripped = (p.strip() for p in parts)
    return [p for p in stripped if p]


def read_notes(path) -> list[tuple[str, str]]:
    """JSON-lines ``{"id": ..., "text": ...}`` records.

    Ids must be unique and every text non-empty; blank lines are skipped.
    """
    notes: list[tuple[str, str]] = []
    seen: set[str] = set()
    raw = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(raw.splitlines(), 1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            rid, text = str(doc["id"]), doc["text"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise NoteError(f"line {lineno}: bad note record ({exc})") from None
        if rid in seen:
            raise NoteError(f"line {lineno}: duplicate-id {rid!r}")
        if not isinstance(text, str) or not text.strip():
            raise NoteError(f"line {lineno}: empty-note {rid!r}")
        seen.add(rid)
        notes.append((rid, text))
    if not notes:
        raise NoteError(f"no notes in {path}")
    return notes


def embed_notes(notes, encoder, batch_size: int = 64) -> np.ndarray:
    """One row per note, in input order: the mean of its sentence embeddings.

    Sentences from all notes are flattened into fixed-size encoder batches;
    rows are reassembled per note afterwards, so the batch size cannot
    change the output.
    """
    if batch_size < 1:
        raise NoteError(f"batch size {batch_size} must be >= 1")
    sentences: list[str] = []
    segments: list[tuple[int, int]] = []
    for _, text in notes:
        parts = sentence_split(text)
        segments.append((len(sentences), len(sentences) + len(parts)))
        sentences.extend(parts)
    chunks = [
        np.asarray(encoder.encode(sentences[i : i + batch_size]), dtype=np.float32)
        for i in range(0, len(sentences), batch_size)
    ]
    flat = np.concatenate(chunks, axis=0)
    rows = np.stack([flat[a:b].mean(axis=0, dtype=np.float64) for a, b in segments])
    return rows.astype(np.float32)


def write_matrix(path, ids, rows: np.ndarray) -> None:
    """EMB1 file plus the ``<path>.ids`` sidecar listing ids in row order."""
    rows = np.ascontiguousarray(rows, dtype="<f4")
    if rows.ndim != 2:
        raise NoteError(f"embedding matrix must be 2-d, got shape {rows.shape}")
    n, dim = rows.shape
    if n != len(ids):
        raise NoteError(f"{len(ids)} ids for {n} rows")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(EMB_MAGIC)
        fh.write(struct.pack("<II", n, dim))
        fh.write(rows.tobytes())
    sidecar = path.with_suffix(path.suffix + ".ids")
    sidecar.write_text("".join(str(i) + "\n" for i in ids), encoding="utf-8")
