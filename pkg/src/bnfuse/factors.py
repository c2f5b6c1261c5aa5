"""Factor algebra for variable elimination.

A factor is a nonnegative tensor over an ordered scope of variable names,
axis i indexed by the domain of scope[i]. Products align shared variables;
marginalization sums an axis out.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Factor:
    scope: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        self.scope = tuple(self.scope)
        self.values = np.asarray(self.values, dtype=float)
        if len(set(self.scope)) != len(self.scope):
            raise ValueError(f"scope variables not distinct: {self.scope}")
        if self.values.ndim != len(self.scope):
            raise ValueError(
                f"tensor rank {self.values.ndim} != scope size {len(self.scope)}"
            )


def factor_product(a: Factor, b: Factor) -> Factor:
    """Pointwise product; scope = union, shared variables must agree on size."""
    for v in set(a.scope) & set(b.scope):
        if a.values.shape[a.scope.index(v)] != b.values.shape[b.scope.index(v)]:
            raise ValueError(f"domain-mismatch: {v} differs between factors")
    scope = a.scope + tuple(v for v in b.scope if v not in a.scope)
    axis = {v: i for i, v in enumerate(scope)}
    out = np.einsum(
        a.values,
        [axis[v] for v in a.scope],
        b.values,
        [axis[v] for v in b.scope],
        list(range(len(scope))),
    )
    return Factor(scope, out)


def factor_marginalize(f: Factor, var: str) -> Factor:
    """Sum out one variable of the scope."""
    if var not in f.scope:
        raise ValueError(f"var-not-in-scope: {var}")
    ax = f.scope.index(var)
    return Factor(f.scope[:ax] + f.scope[ax + 1 :], f.values.sum(axis=ax))


def factor_reduce(f: Factor, var: str, index: int) -> Factor:
    """Slice the factor at var = index (hard evidence); var leaves the scope."""
    if var not in f.scope:
        raise ValueError(f"var-not-in-scope: {var}")
    ax = f.scope.index(var)
    return Factor(f.scope[:ax] + f.scope[ax + 1 :], np.take(f.values, index, axis=ax))
