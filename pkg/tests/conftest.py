"""Shared fixtures: random networks and a brute-force inference oracle.

The oracle enumerates every joint assignment and sums factor products
directly, with no shared code beyond CPT materialization, so agreement with
variable elimination is a real check rather than a tautology.
"""
from __future__ import annotations

import itertools

import numpy as np
import pytest

from bnfuse import (
    Evidence,
    LogisticCpd,
    NetworkSpec,
    NoisyOrCpd,
    TableCpd,
    TruncatedPoissonCpd,
    VariableSpec,
)
from bnfuse.network import n_parent_rows


def enumerate_posterior(net: NetworkSpec, evidence: Evidence, query: str) -> np.ndarray:
    names = list(net.names)
    cards = {v: net.variable(v).cardinality for v in names}
    hard = {k: net.variable(k).index_of(v) for k, v in evidence.hard.items()}
    out = np.zeros(cards[query])
    for values in itertools.product(*(range(cards[v]) for v in names)):
        a = dict(zip(names, values))
        if any(a[k] != idx for k, idx in hard.items()):
            continue
        p = 1.0
        for v in names:
            parents = net.parents(v)
            if parents:
                row = int(np.ravel_multi_index(
                    [a[q] for q in parents], [cards[q] for q in parents]
                ))
            else:
                row = 0
            p *= net.table_for(v)[row, a[v]]
        for k, vec in evidence.virtual.items():
            p *= vec[a[k]]
        out[a[query]] += p
    total = out.sum()
    assert total > 0, "oracle got inconsistent evidence"
    return out / total


def random_table_network(rng: np.random.Generator, n_vars: int | None = None,
                         max_card: int = 3) -> NetworkSpec:
    n = int(n_vars or rng.integers(3, 7))
    names = [f"x{i}" for i in range(n)]
    variables = tuple(
        VariableSpec(names[i], tuple(f"v{j}" for j in range(rng.integers(2, max_card + 1))))
        for i in range(n)
    )
    edges = tuple(
        (names[i], names[j])
        for j in range(n) for i in range(j)
        if rng.random() < 0.45
    )
    cpds = {}
    for j, var in enumerate(variables):
        parents = [variables[i] for i in range(j) if (names[i], names[j]) in edges]
        t = rng.random((n_parent_rows(parents), var.cardinality)) + 0.05
        cpds[var.name] = TableCpd(t / t.sum(axis=1, keepdims=True))
    return NetworkSpec(variables, edges, cpds)


def random_mixed_network(rng: np.random.Generator, n_vars: int | None = None) -> NetworkSpec:
    """Random DAG drawing each CPD from whichever families its shape allows."""
    n = int(n_vars or rng.integers(3, 7))
    names = [f"x{i}" for i in range(n)]
    variables = tuple(
        VariableSpec(names[i], tuple(f"v{j}" for j in range(rng.integers(2, 4))))
        for i in range(n)
    )
    edges = tuple(
        (names[i], names[j])
        for j in range(n) for i in range(j)
        if rng.random() < 0.4
    )
    cpds = {}
    for j, var in enumerate(variables):
        parents = [variables[i] for i in range(j) if (names[i], names[j]) in edges]
        binary_child = var.cardinality == 2
        binary_parents = parents and all(p.cardinality == 2 for p in parents)
        feat = sum(p.cardinality - 1 for p in parents)
        choices = ["table"]
        if binary_child and binary_parents:
            choices.append("noisy_or")
        if binary_child and parents:
            choices.append("logistic")
        if var.cardinality >= 3 and parents:
            choices.append("poisson")
        kind = choices[rng.integers(len(choices))]
        if kind == "noisy_or":
            cpds[var.name] = NoisyOrCpd(
                rng.uniform(0.05, 0.9, size=len(parents)), leak=float(rng.uniform(0, 0.2))
            )
        elif kind == "logistic":
            cpds[var.name] = LogisticCpd(
                float(rng.normal(0, 1)), rng.normal(0, 1, size=feat)
            )
        elif kind == "poisson":
            cpds[var.name] = TruncatedPoissonCpd(
                np.array([rng.normal(0, 0.6)]), rng.normal(0, 0.5, size=(1, feat))
            )
        else:
            t = rng.random((n_parent_rows(parents), var.cardinality)) + 0.05
            cpds[var.name] = TableCpd(t / t.sum(axis=1, keepdims=True))
    return NetworkSpec(variables, edges, cpds)


def random_evidence(rng: np.random.Generator, net: NetworkSpec,
                    skip: set[str] = frozenset()) -> Evidence:
    hard, virtual = {}, {}
    for name in net.names:
        if name in skip:
            continue
        var = net.variable(name)
        roll = rng.random()
        if roll < 0.25:
            hard[name] = var.domain[rng.integers(var.cardinality)]
        elif roll < 0.5:
            virtual[name] = rng.random(var.cardinality) + 0.02
    return Evidence(hard=hard, virtual=virtual)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def chain_net():
    """x0 -> x1 -> x2, all binary; small enough to verify by hand."""
    v = tuple(VariableSpec(f"x{i}", ("a", "b")) for i in range(3))
    return NetworkSpec(
        v,
        (("x0", "x1"), ("x1", "x2")),
        {
            "x0": TableCpd([[0.6, 0.4]]),
            "x1": TableCpd([[0.7, 0.3], [0.2, 0.8]]),
            "x2": TableCpd([[0.9, 0.1], [0.5, 0.5]]),
        },
    )
