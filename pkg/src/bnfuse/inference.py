"""Exact posterior inference by variable elimination.

Evidence comes in two forms. Hard evidence fixes a variable to one observed
category. Virtual evidence attaches a likelihood vector l(x) = P(obs | X=x)
to a variable: the posterior is proportional to the prior times l, which is
exactly what multiplying in a single-variable factor achieves. Likelihood
vectors need not sum to one, and scaling them by a positive constant leaves
every posterior unchanged. A one-hot likelihood reproduces hard evidence.
Queried variables may themselves carry virtual evidence.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .factors import Factor, factor_marginalize, factor_product, factor_reduce
from .network import DistVec, NetworkSpec


class InconsistentEvidenceError(ValueError):
    """Raised when evidence has probability zero under the model."""


@dataclass(frozen=True)
class Evidence:
    hard: Mapping[str, str] = field(default_factory=dict)
    virtual: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "hard", dict(self.hard))
        object.__setattr__(
            self,
            "virtual",
            {k: np.asarray(v, dtype=float) for k, v in self.virtual.items()},
        )
        overlap = set(self.hard) & set(self.virtual)
        if overlap:
            raise ValueError(f"variables in both hard and virtual evidence: {sorted(overlap)}")


def _check_evidence(net: NetworkSpec, evidence: Evidence) -> None:
    for name, value in evidence.hard.items():
        net.variable(name).index_of(value)
    for name, vec in evidence.virtual.items():
        var = net.variable(name)
        if vec.shape != (var.cardinality,):
            raise ValueError(
                f"virtual likelihood for {name} has shape {vec.shape}, "
                f"expected ({var.cardinality},)"
            )
        if np.any(vec < 0) or not np.isfinite(vec).all() or not np.any(vec > 0):
            raise ValueError(f"virtual likelihood for {name} must be nonnegative, not all-zero")


def _cpd_factors(net: NetworkSpec) -> list[Factor]:
    factors = []
    for name in net.names:
        scope = net.parents(name) + (name,)
        cards = tuple(net.variable(v).cardinality for v in scope)
        factors.append(Factor(scope, net.table_for(name).reshape(cards)))
    return factors


def _reduce_all(factors: list[Factor], net: NetworkSpec, hard: Mapping[str, str]) -> list[Factor]:
    out = []
    for f in factors:
        for name, value in hard.items():
            if name in f.scope:
                f = factor_reduce(f, name, net.variable(name).index_of(value))
        out.append(f)
    return out


def elimination_order(net: NetworkSpec, query: str, evidence: Evidence) -> list[str]:
    """Min-degree ordering (lexicographic tie-break) over the non-query,
    non-hard-evidence variables of the evidence-reduced factor graph."""
    net.variable(query)
    hard = set(evidence.hard)
    # Interaction graph: variables co-occurring in a factor scope are adjacent.
    neighbors: dict[str, set[str]] = {
        v: set() for v in net.names if v not in hard
    }
    for name in net.names:
        scope = [v for v in net.parents(name) + (name,) if v not in hard]
        for v in scope:
            neighbors[v].update(u for u in scope if u != v)
    order = []
    remaining = set(neighbors) - {query}
    while remaining:
        nxt = min(remaining, key=lambda v: (len(neighbors[v] & remaining), v))
        order.append(nxt)
        adjacent = neighbors[nxt] & remaining
        for u in adjacent:  # fill-in among the eliminated variable's neighbors
            neighbors[u].update(adjacent - {u})
            neighbors[u].discard(nxt)
        remaining.discard(nxt)
    return order


def _eliminate(factors: list[Factor], order: list[str]) -> list[Factor]:
    for var in order:
        touching = [f for f in factors if var in f.scope]
        rest = [f for f in factors if var not in f.scope]
        combined = touching[0]
        for f in touching[1:]:
            combined = factor_product(combined, f)
        factors = rest + [factor_marginalize(combined, var)]
    return factors


def posterior(net: NetworkSpec, evidence: Evidence, query: str) -> DistVec:
    """Exact normalized posterior P(query | evidence) by variable elimination."""
    qvar = net.variable(query)
    if query in evidence.hard:
        raise ValueError(f"query {query} is hard-observed")
    _check_evidence(net, evidence)

    factors = _reduce_all(_cpd_factors(net), net, evidence.hard)
    factors += [Factor((name,), vec) for name, vec in evidence.virtual.items()
                if name not in evidence.hard]
    factors = _eliminate(factors, elimination_order(net, query, evidence))

    result = factors[0]
    for f in factors[1:]:
        result = factor_product(result, f)
    for v in result.scope:
        if v != query:  # only scalars and query-scoped factors remain
            result = factor_marginalize(result, v)
    values = result.values if result.scope else np.array([result.values])
    if values.shape != (qvar.cardinality,):
        values = np.full(qvar.cardinality, float(values.sum()) / qvar.cardinality)
    z = values.sum()
    if not np.isfinite(z) or z <= 0:
        raise InconsistentEvidenceError(
            f"inconsistent-evidence: normalization constant {z} for query {query}"
        )
    return DistVec(query, values / z)


def symptom_posteriors(
    net: NetworkSpec,
    tab: Mapping[str, str],
    virtual: Mapping[str, np.ndarray] | None = None,
) -> dict[str, DistVec]:
    """Per-symptom posteriors given the tabular assignment.

    With ``virtual`` absent this is the tabular-only prediction P(B_s | tab);
    with per-symptom likelihood vectors present it is the virtual-evidence
    posterior P(V_s | tab, note), where the evidence for all symptoms --
    including the queried one -- stays in the model.
    """
    symptoms = net.symptom_variables
    bad = [k for k in tab if k in symptoms]
    if bad:
        raise ValueError(f"tabular evidence names symptom variables: {bad}")
    evidence = Evidence(hard=tab, virtual=virtual or {})
    return {s: posterior(net, evidence, s) for s in symptoms}
