"""Sentence encoders behind a small name registry.

The default encoder is a pretrained clinical sentence-transformer whose
weights load lazily on first use.  ``hashed-<dim>`` is a deterministic
stand-in (hashed bag of words) so pipelines and tests run offline with no
model download; its rows are stable across processes and platforms.
"""

from __future__ import annotations

import re
import zlib

import numpy as np


class ModelUnavailableError(RuntimeError):
    """The named encoder cannot be constructed or loaded here."""


_TOKEN = re.compile(r"[a-z0-9]+")


class HashedEncoder:
    """Hashed bag-of-words rows, L2-normalised. Deterministic by construction."""

    def __init__(self, dim: int):
        if dim < 1:
            raise ModelUnavailableError("model-unavailable: hashed dim must be >= 1")
        self.name = f"hashed-{dim}"
        self.dim = dim

    def encode(self, sentences: list[str]) -> np.ndarray:
        out = np.zeros((len(sentences), self.dim), dtype=np.float64)
        for i, sentence in enumerate(sentences):
            for token in _TOKEN.findall(sentence.lower()):
                h = zlib.crc32(token.encode("utf-8"))
                # bit 16 as the sign keeps it independent of the index bits
                sign = 1.0 if (h >> 16) & 1 else -1.0
                out[i, h % self.dim] += sign
            norm = float(np.linalg.norm(out[i]))
            if norm > 0.0:
                out[i] /= norm
        return out.astype(np.float32)


class BioLordEncoder:
    """Clinical sentence-transformer; the checkpoint loads on first encode."""

    name = "biolord-2023"
    dim = 768
    _CHECKPOINT = "FremyCompany/BioLORD-2023"

    def __init__(self) -> None:
        self._model = None

    def encode(self, sentences: list[str]) -> np.ndarray:
        if self._model is None:
            try:
                from sentence_transformers import SentenceTransformer

                self._model = SentenceTransformer(self._CHECKPOINT)
            except Exception as exc:  # import, download, or load failure
                raise ModelUnavailableError(
                    f"model-unavailable: cannot load {self._CHECKPOINT!r} ({exc}); "
                    "use --model hashed-<dim> for a deterministic offline encoder"
                ) from exc
        rows = self._model.encode(
            sentences, convert_to_numpy=True, show_progress_bar=False
        )
        return np.asarray(rows, dtype=np.float32)


def resolve_encoder(name: str):
    """Look up an encoder by name. Unknown names are unavailable models."""
    if name == BioLordEncoder.name:
        return BioLordEncoder()
    m = re.fullmatch(r"hashed-(\d+)", name)
    if m is not None:
        return HashedEncoder(int(m.group(1)))
    raise ModelUnavailableError(
        f"model-unavailable: unknown model {name!r}; "
        "expected 'biolord-2023' or 'hashed-<dim>'"
    )
