"""Consistency-node fusion of tabular-network and text-classifier predictions.

For one symptom with domain V, the consistency node C is a categorical
variable whose conditional table P(C = c' | B = b', T = t') is estimated from
training data by weighting each (b', t') cell with the probability both
predictors assign to it, attributed to the true label:

    W[c', b', t'] = sum_k  P_k(B = b') * P_k(T = t') * 1[s_k = c']

Each (b', t') row is then normalized. Rows that received no weight at all
fall back to the uniform distribution (a documented choice; the class prior
would couple the node to the tabular model). Raw weights are retained for
inspection.

Fusing at prediction time marginalizes both predictors out:

    P(C = c) = sum_{b'} sum_{t'}  bn(b') * text(t') * P(C = c | b', t')
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .inference import symptom_posteriors
from .network import DistVec, NetworkSpec


@dataclass(frozen=True)
class ConsistencyCpt:
    symptom: str
    domain: tuple[str, ...]
    table: np.ndarray  # (|V|, |V|, |V|) indexed [b', t', c']; rows sum to 1
    weights: np.ndarray  # raw W indexed [c', b', t']

    def __post_init__(self):
        table = np.asarray(self.table, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        k = len(self.domain)
        if table.shape != (k, k, k) or weights.shape != (k, k, k):
            raise ValueError(f"domain-mismatch: consistency table for {self.symptom}")
        if np.any(weights < 0):
            raise ValueError("negative consistency weights")
        if np.max(np.abs(table.sum(axis=2) - 1.0)) > 1e-9:
            raise ValueError("consistency rows must sum to 1")
        table.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "domain", tuple(self.domain))

    def row(self, b: int, t: int) -> np.ndarray:
        return self.table[b, t]

    def to_json(self) -> str:
        return json.dumps(
            {
                "symptom": self.symptom,
                "domain": list(self.domain),
                "table": self.table.tolist(),
                "weights": self.weights.tolist(),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "ConsistencyCpt":
        doc = json.loads(text)
        return cls(
            doc["symptom"],
            tuple(doc["domain"]),
            np.array(doc["table"]),
            np.array(doc["weights"]),
        )


def estimate_consistency_cpt(
    bn_probs: np.ndarray,
    text_probs: np.ndarray,
    labels: Sequence[int],
    symptom: str,
    domain: Sequence[str],
) -> ConsistencyCpt:
    """Accumulate agreement weights and normalize each (b', t') row.

    ``bn_probs`` and ``text_probs`` are (n, |V|) probability rows; ``labels``
    are true value indices. Text probabilities must be out-of-fold predictions
    so agreement is measured against held-out confidence. Accumulation uses
    compensated summation, keeping the relative error negligible even for
    thousands of rows.
    """
    bn = np.asarray(bn_probs, dtype=float)
    tx = np.asarray(text_probs, dtype=float)
    y = np.asarray(labels, dtype=np.intp)
    if len(bn) != len(tx) or len(bn) != len(y):
        raise ValueError("length-mismatch: bn, text, and labels must align")
    if len(bn) == 0:
        raise ValueError("empty-data")
    k = len(domain)
    if bn.shape[1] != k or tx.shape[1] != k:
        raise ValueError(f"domain-mismatch: expected {k} columns")

    weights = np.zeros((k, k, k))
    for c in range(k):
        rows = np.flatnonzero(y == c)
        for b in range(k):
            for t in range(k):
                weights[c, b, t] = math.fsum(bn[rows, b] * tx[rows, t])

    table = np.empty((k, k, k))
    for b in range(k):
        for t in range(k):
            total = math.fsum(weights[:, b, t])
            table[b, t] = weights[:, b, t] / total if total > 0 else np.full(k, 1.0 / k)
    return ConsistencyCpt(symptom, tuple(domain), table, weights)


def fuse(bn: np.ndarray, text: np.ndarray, cpt: ConsistencyCpt) -> np.ndarray:
    """Marginalize both predictors out of the consistency node."""
    bn = np.asarray(bn, dtype=float)
    text = np.asarray(text, dtype=float)
    k = len(cpt.domain)
    if bn.shape != (k,) or text.shape != (k,):
        raise ValueError(f"domain-mismatch: expected vectors of length {k}")
    return np.einsum("b,t,btc->c", bn, text, cpt.table)


VARIANTS = ("bn-only", "text-only", "c-bn-text", "v-bn-text", "v-c-bn-text", "concat")


@dataclass(frozen=True)
class FusedPrediction:
    """Per-variant, per-symptom probability vectors for one patient."""

    entries: Mapping[str, Mapping[str, DistVec]]

    def variant(self, name: str) -> Mapping[str, DistVec]:
        return self.entries[name]


def run_variant(
    variant: str,
    net: NetworkSpec,
    tab: Mapping[str, str],
    text_probs: Mapping[str, np.ndarray],
    cpts: Mapping[str, ConsistencyCpt] | None = None,
) -> dict[str, DistVec]:
    """One patient, one variant. The consistency table for the v-c variant
    must have been estimated against virtual-evidence (not plain) BN rows."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if variant == "concat":
        raise ValueError("concat predictions come from the trained concat model")
    if variant in ("c-bn-text", "v-c-bn-text") and not cpts:
        raise ValueError(f"missing-cpt: variant {variant} needs consistency tables")

    if variant == "text-only":
        return {s: DistVec(s, np.asarray(p, dtype=float)) for s, p in text_probs.items()}
    if variant == "bn-only":
        return symptom_posteriors(net, tab)
    if variant == "v-bn-text":
        return symptom_posteriors(net, tab, virtual=text_probs)

    base = symptom_posteriors(net, tab) if variant == "c-bn-text" else \
        symptom_posteriors(net, tab, virtual=text_probs)
    out = {}
    for s, bn_dist in base.items():
        out[s] = DistVec(s, fuse(bn_dist.probs, np.asarray(text_probs[s], dtype=float), cpts[s]))
    return out


def predict_variants(
    variants: Sequence[str],
    net: NetworkSpec,
    tab: Mapping[str, str],
    text_probs: Mapping[str, np.ndarray],
    cpts: Mapping[str, ConsistencyCpt] | None = None,
    virtual_cpts: Mapping[str, ConsistencyCpt] | None = None,
) -> FusedPrediction:
    """``cpts`` serves c-bn-text; ``virtual_cpts`` (falling back to ``cpts``)
    serves v-c-bn-text, whose table is estimated against virtual-evidence rows."""
    out = {}
    for v in variants:
        chosen = (virtual_cpts or cpts) if v == "v-c-bn-text" else cpts
        out[v] = run_variant(v, net, tab, text_probs, chosen)
    return FusedPrediction(out)
