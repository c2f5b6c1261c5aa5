"""Discrete Bayesian-network types: variables, CPD families, and the network spec.

A network is a DAG over named categorical variables. Each variable carries one
conditional distribution, drawn from a closed set of families:

* ``TableCpd``       -- explicit row per parent assignment,
* ``NoisyOrCpd``     -- binary child, P(yes | parents) = 1 - (1-leak) * prod_{j active} (1-lambda_j),
* ``LogisticCpd``    -- binary child, sigmoid(intercept + w . indicator features),
* ``TruncatedPoissonCpd`` -- count child, rate lambda = exp(linear term), mass
  renormalized over the child's levels; optionally one rate model per value of
  a designated parent.

All tensors are laid out in row-major order of the declared scope, so results
are bit-stable across runs.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.special import gammaln, logsumexp

ROLES = ("background", "disease", "symptom", "treatment", "outcome")

# Floor applied to rows materialized from parametric CPDs, so contradictory
# evidence cannot produce exact zeros inside inference.
PROB_FLOOR = 1e-12

# Rate clamp for truncated-Poisson models (log-rate kept in a safe range).
RATE_FLOOR = 1e-3
_ETA_MIN = float(np.log(RATE_FLOOR))
_ETA_MAX = 30.0


def _readonly(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class VariableSpec:
    """A named categorical variable with an ordered domain."""

    name: str
    domain: tuple[str, ...]
    role: str = "background"

    def __post_init__(self):
        object.__setattr__(self, "domain", tuple(str(d) for d in self.domain))

    @property
    def cardinality(self) -> int:
        return len(self.domain)

    def index_of(self, label: str) -> int:
        try:
            return self.domain.index(str(label))
        except ValueError:
            raise ValueError(
                f"out-of-domain-value: {label!r} not in domain of {self.name}"
            ) from None


@dataclass(frozen=True)
class TableCpd:
    """Explicit conditional table: one normalized row per parent assignment."""

    values: np.ndarray  # shape (n_parent_rows, child cardinality)

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(np.atleast_2d(self.values)))


@dataclass(frozen=True)
class NoisyOrCpd:
    """Noisy-OR over binary parents of a binary child.

    Each active parent independently fails to cause the effect with
    probability 1 - lambda_j; an optional leak cause is always active.
    """

    lambdas: np.ndarray
    leak: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "lambdas", _readonly(np.atleast_1d(self.lambdas)))
        object.__setattr__(self, "leak", float(self.leak))


@dataclass(frozen=True)
class LogisticCpd:
    """Logistic regression on drop-first indicator features of the parents."""

    intercept: float
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "intercept", float(self.intercept))
        object.__setattr__(self, "weights", _readonly(np.atleast_1d(self.weights)))


@dataclass(frozen=True)
class TruncatedPoissonCpd:
    """Log-linear Poisson rate model, mass renormalized over the child levels.

    When ``split_parent`` is set, one (intercept, weights) rate model is kept
    per value of that parent and the remaining parents contribute indicator
    features; otherwise a single model covers all parents.
    """

    intercepts: np.ndarray  # (n_models,)
    weights: np.ndarray  # (n_models, n_features)
    split_parent: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "intercepts", _readonly(np.atleast_1d(self.intercepts)))
        object.__setattr__(self, "weights", _readonly(np.atleast_2d(self.weights)))


@dataclass(frozen=True)
class UnfitCpd:
    """Family declaration without parameters; placeholder for fitting."""

    kind: str
    split_parent: str | None = None


Cpd = Union[TableCpd, NoisyOrCpd, LogisticCpd, TruncatedPoissonCpd, UnfitCpd]


@dataclass(frozen=True)
class DistVec:
    """Normalized probability vector over one variable's domain."""

    variable: str
    probs: np.ndarray

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.probs, dtype=float))
        if p.ndim != 1 or np.any(p < 0) or not np.isfinite(p).all():
            raise ValueError(f"invalid probability vector for {self.variable}")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(
                f"probabilities for {self.variable} sum to {p.sum():.12f}, not 1"
            )
        object.__setattr__(self, "probs", _readonly(p))


def parent_cards(parents: list[VariableSpec]) -> tuple[int, ...]:
    return tuple(p.cardinality for p in parents)


def n_parent_rows(parents: list[VariableSpec]) -> int:
    return int(np.prod(parent_cards(parents), dtype=np.int64)) if parents else 1


def parent_assignments(parents: list[VariableSpec]):
    """Iterate parent index tuples in row-major order of the declared parents."""
    return np.ndindex(*parent_cards(parents)) if parents else iter([()])


def indicator_width(parents: list[VariableSpec]) -> int:
    return sum(p.cardinality - 1 for p in parents)


def indicator_features(assignment: tuple[int, ...], parents: list[VariableSpec]) -> np.ndarray:
    """Drop-first one-hot encoding of a parent assignment (one block per parent)."""
    feats = np.zeros(indicator_width(parents))
    pos = 0
    for idx, p in zip(assignment, parents):
        if idx > 0:
            feats[pos + idx - 1] = 1.0
        pos += p.cardinality - 1
    return feats


def truncated_poisson_pmf(eta: float, n_levels: int) -> np.ndarray:
    """pmf over 0..n_levels-1 for log-rate eta, renormalized after truncation."""
    eta = float(np.clip(eta, _ETA_MIN, _ETA_MAX))
    k = np.arange(n_levels)
    logp = k * eta - gammaln(k + 1)
    return np.exp(logp - logsumexp(logp))


def cpd_as_table(cpd: Cpd, child: VariableSpec, parents: list[VariableSpec]) -> np.ndarray:
    """Materialize any CPD as a table with one normalized row per parent assignment.

    Exact (identity) for Table input; parametric rows are floored at
    PROB_FLOOR and renormalized so no entry is exactly zero.
    """
    rows = n_parent_rows(parents)
    k = child.cardinality

    if isinstance(cpd, TableCpd):
        if cpd.values.shape != (rows, k):
            raise ValueError(
                f"domain-mismatch: table for {child.name} has shape "
                f"{cpd.values.shape}, expected {(rows, k)}"
            )
        return np.array(cpd.values)

    if isinstance(cpd, NoisyOrCpd):
        if k != 2:
            raise ValueError(f"noisy-or-on-nonbinary-child: {child.name}")
        if any(p.cardinality != 2 for p in parents):
            raise ValueError(f"noisy-or requires binary parents for {child.name}")
        if len(cpd.lambdas) != len(parents):
            raise ValueError(f"domain-mismatch: {child.name} lambda count")
        out = np.empty((rows, 2))
        for r, idx in enumerate(parent_assignments(parents)):
            active = np.array(idx, dtype=bool) if parents else np.zeros(0, bool)
            p_no = (1.0 - cpd.leak) * np.prod(1.0 - cpd.lambdas[active])
            out[r] = (p_no, 1.0 - p_no)
        return _floor_rows(out)

    if isinstance(cpd, LogisticCpd):
        if k != 2:
            raise ValueError(f"logistic requires a binary child: {child.name}")
        if len(cpd.weights) != indicator_width(parents):
            raise ValueError(f"domain-mismatch: {child.name} weight count")
        out = np.empty((rows, 2))
        for r, idx in enumerate(parent_assignments(parents)):
            z = cpd.intercept + cpd.weights @ indicator_features(idx, parents)
            p_yes = 1.0 / (1.0 + np.exp(-z))
            out[r] = (1.0 - p_yes, p_yes)
        return _floor_rows(out)

    if isinstance(cpd, TruncatedPoissonCpd):
        if cpd.split_parent is None:
            split_idx = None
            feat_parents = list(parents)
            n_models = 1
        else:
            names = [p.name for p in parents]
            if cpd.split_parent not in names:
                raise ValueError(
                    f"domain-mismatch: split parent {cpd.split_parent} "
                    f"is not a parent of {child.name}"
                )
            split_idx = names.index(cpd.split_parent)
            feat_parents = [p for i, p in enumerate(parents) if i != split_idx]
            n_models = parents[split_idx].cardinality
        expected = (n_models, indicator_width(feat_parents))
        if cpd.intercepts.shape != (n_models,) or cpd.weights.shape != expected:
            raise ValueError(f"domain-mismatch: {child.name} rate-model shape")
        out = np.empty((rows, k))
        for r, idx in enumerate(parent_assignments(parents)):
            if split_idx is None:
                m, feat_idx = 0, idx
            else:
                m = idx[split_idx]
                feat_idx = tuple(v for i, v in enumerate(idx) if i != split_idx)
            eta = cpd.intercepts[m] + cpd.weights[m] @ indicator_features(
                feat_idx, feat_parents
            )
            out[r] = truncated_poisson_pmf(eta, k)
        return _floor_rows(out)

    raise ValueError(f"missing-cpd: cannot materialize {type(cpd).__name__}")


def _floor_rows(table: np.ndarray) -> np.ndarray:
    table = np.maximum(table, PROB_FLOOR)
    return table / table.sum(axis=1, keepdims=True)


@dataclass
class NetworkSpec:
    """DAG + per-variable CPDs. Immutable after construction.

    Parent order for each child is the declared order of its in-edges.
    """

    variables: tuple[VariableSpec, ...]
    edges: tuple[tuple[str, str], ...]
    cpds: dict[str, Cpd]
    _tables: dict[str, np.ndarray] = field(
        default_factory=dict, repr=False, compare=False
    )

    def __post_init__(self):
        self.variables = tuple(self.variables)
        self.edges = tuple((str(p), str(c)) for p, c in self.edges)
        self._by_name = {v.name: v for v in self.variables}
        self._parents = {v.name: () for v in self.variables}
        for p, c in self.edges:
            if c in self._parents:
                self._parents[c] = self._parents[c] + (p,)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def variable(self, name: str) -> VariableSpec:
        try:
            return self._by_name[name]
        except KeyError:
            raise ValueError(f"unknown-variable: {name}") from None

    def parents(self, name: str) -> tuple[str, ...]:
        self.variable(name)
        return self._parents[name]

    @property
    def symptom_variables(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables if v.role == "symptom")

    @property
    def tabular_variables(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables if v.role != "symptom")

    def topological_order(self) -> tuple[str, ...]:
        pending = {v.name: set(self._parents.get(v.name, ())) for v in self.variables}
        order: list[str] = []
        while pending:
            ready = sorted(n for n, ps in pending.items() if not ps)
            if not ready:
                raise ValueError("cycle-detected: no topological order exists")
            for n in ready:
                order.append(n)
                del pending[n]
            for ps in pending.values():
                ps.difference_update(ready)
        return tuple(order)

    def table_for(self, name: str) -> np.ndarray:
        """Materialized CPT for one variable, cached. Shape (parent rows, |domain|)."""
        if name not in self._tables:
            child = self.variable(name)
            parents = [self.variable(p) for p in self.parents(name)]
            table = cpd_as_table(self.cpds[name], child, parents)
            table.flags.writeable = False
            self._tables[name] = table
        return self._tables[name]

    # -- serialization ------------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "variables": [
                {"name": v.name, "domain": list(v.domain), "role": v.role}
                for v in self.variables
            ],
            "edges": [[p, c] for p, c in self.edges],
            "cpds": {name: _cpd_to_doc(cpd) for name, cpd in self.cpds.items()},
        }
        return json.dumps(doc, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "NetworkSpec":
        doc = json.loads(text)
        variables = tuple(
            VariableSpec(v["name"], tuple(v["domain"]), v.get("role", "background"))
            for v in doc["variables"]
        )
        edges = tuple((e[0], e[1]) for e in doc["edges"])
        cpds = {name: _cpd_from_doc(d) for name, d in doc.get("cpds", {}).items()}
        return cls(variables, edges, cpds)


def _cpd_to_doc(cpd: Cpd) -> dict:
    if isinstance(cpd, TableCpd):
        return {"kind": "table", "values": cpd.values.tolist()}
    if isinstance(cpd, NoisyOrCpd):
        return {"kind": "noisy_or", "leak": cpd.leak, "lambdas": cpd.lambdas.tolist()}
    if isinstance(cpd, LogisticCpd):
        return {
            "kind": "logistic",
            "intercept": cpd.intercept,
            "weights": cpd.weights.tolist(),
        }
    if isinstance(cpd, TruncatedPoissonCpd):
        return {
            "kind": "truncated_poisson",
            "split_parent": cpd.split_parent,
            "intercepts": cpd.intercepts.tolist(),
            "weights": cpd.weights.tolist(),
        }
    if isinstance(cpd, UnfitCpd):
        doc = {"kind": cpd.kind}
        if cpd.split_parent:
            doc["split_parent"] = cpd.split_parent
        return doc
    raise ValueError(f"cannot serialize {type(cpd).__name__}")


def _cpd_from_doc(doc: dict) -> Cpd:
    kind = doc.get("kind")
    if kind == "table" and "values" in doc:
        return TableCpd(np.array(doc["values"]))
    if kind == "noisy_or" and "lambdas" in doc:
        return NoisyOrCpd(np.array(doc["lambdas"]), float(doc.get("leak", 0.0)))
    if kind == "logistic" and "weights" in doc:
        return LogisticCpd(float(doc["intercept"]), np.array(doc["weights"]))
    if kind == "truncated_poisson" and "intercepts" in doc:
        return TruncatedPoissonCpd(
            np.array(doc["intercepts"]),
            np.array(doc["weights"]),
            doc.get("split_parent"),
        )
    if kind in {"table", "noisy_or", "logistic", "truncated_poisson"}:
        return UnfitCpd(kind, doc.get("split_parent"))
    raise ValueError(f"unknown CPD kind: {kind!r}")


def strip_parameters(spec: NetworkSpec) -> NetworkSpec:
    """Replace every CPD by its family declaration (for refitting)."""
    cpds: dict[str, Cpd] = {}
    for name, cpd in spec.cpds.items():
        if isinstance(cpd, UnfitCpd):
            cpds[name] = cpd
        elif isinstance(cpd, TruncatedPoissonCpd):
            cpds[name] = UnfitCpd("truncated_poisson", cpd.split_parent)
        else:
            kinds = {TableCpd: "table", NoisyOrCpd: "noisy_or", LogisticCpd: "logistic"}
            cpds[name] = UnfitCpd(kinds[type(cpd)])
    return NetworkSpec(spec.variables, spec.edges, cpds)


def validate_network(spec: NetworkSpec) -> list[str]:
    """Check every type invariant; returns a list of violations (empty = ok)."""
    report: list[str] = []
    names = [v.name for v in spec.variables]
    seen = set()
    for v in spec.variables:
        if v.name in seen:
            report.append(f"duplicate-variable: {v.name}")
        seen.add(v.name)
        if len(v.domain) < 2 or len(set(v.domain)) != len(v.domain) or "" in v.domain:
            report.append(f"domain-mismatch: {v.name} needs >=2 unique nonempty labels")
        if v.role not in ROLES:
            report.append(f"unknown-role: {v.name} has role {v.role!r}")

    for p, c in spec.edges:
        if p not in seen or c not in seen:
            report.append(f"unknown-variable: edge ({p}, {c})")
        elif p == c:
            report.append(f"cycle-detected: self-loop on {p}")

    try:
        spec.topological_order()
    except ValueError:
        report.append("cycle-detected: edge set is not a DAG")

    for name in spec.cpds:
        if name not in seen:
            report.append(f"unknown-variable: cpd for {name}")
    for name in names:
        cpd = spec.cpds.get(name)
        if cpd is None:
            report.append(f"missing-cpd: {name}")
            continue
        if isinstance(cpd, UnfitCpd):
            report.append(f"missing-cpd: {name} declares family {cpd.kind} without parameters")
            continue
        child = spec.variable(name)
        parents = [spec.variable(p) for p in spec.parents(name) if p in seen]
        try:
            table = cpd_as_table(cpd, child, parents)
        except ValueError as exc:
            report.append(str(exc))
            continue
        if np.any(table < 0) or not np.isfinite(table).all():
            report.append(f"domain-mismatch: {name} has negative or non-finite entries")
        bad = np.abs(table.sum(axis=1) - 1.0) > 1e-9
        if bad.any():
            report.append(
                f"non-normalized-row: {name} rows {np.flatnonzero(bad).tolist()}"
            )
        if isinstance(cpd, NoisyOrCpd):
            if not (0 <= cpd.leak < 1) or np.any((cpd.lambdas < 0) | (cpd.lambdas >= 1)):
                report.append(f"domain-mismatch: {name} noisy-or parameters outside [0,1)")
    return report


def require_valid(spec: NetworkSpec) -> NetworkSpec:
    report = validate_network(spec)
    if report:
        raise ValueError("invalid network: " + "; ".join(report))
    return spec
