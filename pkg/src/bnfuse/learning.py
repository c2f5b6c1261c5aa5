"""Maximum-likelihood fitting of every CPD family from fully observed records.

Tables use closed-form counts with Laplace smoothing. The parametric families
(Noisy-OR, logistic, truncated Poisson) are fit by mini-batch gradient ascent
on the mean log-likelihood, with probabilities and rates kept in range through
logit/log reparameterization rather than projection. Each fit is deterministic
given the config seed.

The per-family objectives are exposed (``*_objective``) so their analytic
gradients can be checked against finite differences.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .network import (
    Cpd,
    LogisticCpd,
    NetworkSpec,
    NoisyOrCpd,
    TableCpd,
    TruncatedPoissonCpd,
    UnfitCpd,
    VariableSpec,
    indicator_width,
    n_parent_rows,
    parent_cards,
    require_valid,
)

if TYPE_CHECKING:  # avoid an import cycle; records are duck-typed via .value()
    from .data import PatientRecord

PARAM_CLAMP = 1e-6  # fitted probabilities clamped to [1e-6, 1 - 1e-6]
_ETA_MIN = math.log(1e-3)  # fitted log-rates clamped below at the rate floor
_ETA_MAX = 30.0


@dataclass(frozen=True)
class FitConfig:
    learning_rate: float | None = None  # default schedule: 0.05 if n<500 else 0.01
    epochs: int | None = None  # default schedule: max(100, ceil(200000/n))
    batch_size: int = 50
    smoothing_alpha: float = 1.0
    seed: int = 0

    def resolved(self, n: int) -> tuple[float, int]:
        lr = self.learning_rate if self.learning_rate is not None else (
            0.05 if n < 500 else 0.01
        )
        epochs = self.epochs if self.epochs is not None else max(100, math.ceil(200000 / n))
        if lr <= 0 or epochs <= 0 or self.batch_size <= 0:
            raise ValueError("learning rate, epochs, and batch size must be positive")
        return lr, epochs


def _column(data: Sequence["PatientRecord"], var: VariableSpec) -> np.ndarray:
    return np.array([var.index_of(r.value(var.name)) for r in data], dtype=np.intp)


def _require_data(data) -> None:
    if len(data) == 0:
        raise ValueError("empty-data")


def fit_table(
    data: Sequence["PatientRecord"],
    child: VariableSpec,
    parents: list[VariableSpec],
    alpha: float = 1.0,
) -> TableCpd:
    """Laplace-smoothed conditional frequencies:
    entry = (count + alpha) / (row count + alpha * |domain|)."""
    _require_data(data)
    if alpha < 0:
        raise ValueError("smoothing alpha must be nonnegative")
    y = _column(data, child)
    rows = n_parent_rows(parents)
    if parents:
        cols = np.stack([_column(data, p) for p in parents])
        row_idx = np.ravel_multi_index(cols, parent_cards(parents))
    else:
        row_idx = np.zeros(len(data), dtype=np.intp)
    counts = np.zeros((rows, child.cardinality))
    np.add.at(counts, (row_idx, y), 1.0)
    totals = counts.sum(axis=1, keepdims=True)
    denom = totals + alpha * child.cardinality
    # leave genuinely unseen rows uniform rather than 0/0 when alpha == 0
    safe = np.where(denom > 0, denom, 1.0)
    table = np.where(denom > 0, (counts + alpha) / safe, 1.0 / child.cardinality)
    return TableCpd(table)


# -- gradient-ascent objectives (mean log-likelihood, analytic gradient) -----


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def noisy_or_objective(theta: np.ndarray, X: np.ndarray, y: np.ndarray):
    """theta = logits of (leak, lambda_1..lambda_P); X = active-parent indicators."""
    probs = _sigmoid(theta)
    leak, lam = probs[0], probs[1:]
    log_q = np.log1p(-leak) + X @ np.log1p(-lam)  # q = P(child=no | parents)
    q = np.exp(log_q)
    p = np.clip(1.0 - q, 1e-12, None)
    ll = float(np.mean(y * np.log(p) + (1 - y) * log_q))
    # d ll / d log q, then chain through d log q / d theta = -(prob)*feature
    dldq = (1 - y) - y * q / p
    grad = np.empty_like(theta)
    grad[0] = -leak * np.mean(dldq)
    grad[1:] = -(X * dldq[:, None]).mean(axis=0) * lam
    return ll, grad


def logistic_objective(theta: np.ndarray, X: np.ndarray, y: np.ndarray):
    """theta = (intercept, weights); Bernoulli log-likelihood."""
    z = theta[0] + X @ theta[1:]
    ll = float(np.mean(-np.logaddexp(0.0, -z) * y - np.logaddexp(0.0, z) * (1 - y)))
    resid = y - _sigmoid(z)
    grad = np.empty_like(theta)
    grad[0] = np.mean(resid)
    grad[1:] = (X * resid[:, None]).mean(axis=0)
    return ll, grad


def trunc_poisson_objective(theta: np.ndarray, X: np.ndarray, k: np.ndarray, n_levels: int):
    """theta = (intercept, weights); Poisson with mass renormalized over
    0..n_levels-1, so the log-normalizer is logsumexp(m*eta - log m!)."""
    eta = theta[0] + X @ theta[1:]
    m = np.arange(n_levels)
    logits = np.outer(eta, m) - gammaln(m + 1)  # (n, L)
    log_z = logsumexp(logits, axis=1)
    ll = float(np.mean(k * eta - gammaln(k + 1) - log_z))
    expected = np.exp(logits - log_z[:, None]) @ m
    resid = k - expected
    grad = np.empty_like(theta)
    grad[0] = np.mean(resid)
    grad[1:] = (X * resid[:, None]).mean(axis=0)
    return ll, grad


def _ascend(theta, arrays, objective, cfg: FitConfig, rng) -> np.ndarray:
    n = len(arrays[0])
    lr, epochs = cfg.resolved(n)
    for _ in range(epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):  # last partial batch kept
            idx = perm[start : start + cfg.batch_size]
            ll, grad = objective(theta, *(a[idx] for a in arrays))
            if not np.isfinite(ll) or not np.isfinite(grad).all():
                raise ValueError("divergence: non-finite loss during gradient ascent")
            theta = theta + lr * grad
    return theta


def _indicator_matrix(data, parents: list[VariableSpec]) -> np.ndarray:
    """Drop-first one-hot encoding of the parent assignment of each record."""
    X = np.zeros((len(data), indicator_width(parents)))
    pos = 0
    for p in parents:
        idx = _column(data, p)
        hot = idx > 0
        X[np.flatnonzero(hot), pos + idx[hot] - 1] = 1.0
        pos += p.cardinality - 1
    return X


def fit_noisy_or(
    data, child: VariableSpec, parents: list[VariableSpec], cfg: FitConfig = FitConfig()
) -> NoisyOrCpd:
    _require_data(data)
    if child.cardinality != 2:
        raise ValueError(f"non-binary-child: {child.name}")
    X = np.stack([_column(data, p) for p in parents], axis=1).astype(float) if parents \
        else np.zeros((len(data), 0))
    y = _column(data, child).astype(float)
    theta = np.full(1 + len(parents), -1.0)  # start all probabilities near 0.27
    rng = np.random.default_rng(cfg.seed)
    theta = _ascend(theta, (X, y), noisy_or_objective, cfg, rng)
    probs = np.clip(_sigmoid(theta), PARAM_CLAMP, 1 - PARAM_CLAMP)
    return NoisyOrCpd(lambdas=probs[1:], leak=float(probs[0]))


def fit_logistic(
    data, child: VariableSpec, parents: list[VariableSpec], cfg: FitConfig = FitConfig()
) -> LogisticCpd:
    _require_data(data)
    if child.cardinality != 2:
        raise ValueError(f"non-binary-child: {child.name}")
    X = _indicator_matrix(data, parents)
    y = _column(data, child).astype(float)
    theta = np.zeros(1 + X.shape[1])
    rng = np.random.default_rng(cfg.seed)
    theta = _ascend(theta, (X, y), logistic_objective, cfg, rng)
    return LogisticCpd(intercept=float(theta[0]), weights=theta[1:])


def fit_truncated_poisson(
    data,
    child: VariableSpec,
    parents: list[VariableSpec],
    cfg: FitConfig = FitConfig(),
    split_parent: str | None = "auto",
) -> TruncatedPoissonCpd:
    """One log-linear rate model per value of the split parent (default:
    the parent named 'antibiotics' when present), remaining parents as
    indicator features. A split value absent from the data falls back to
    the pooled fit over all records."""
    _require_data(data)
    names = [p.name for p in parents]
    if split_parent == "auto":
        split_parent = "antibiotics" if "antibiotics" in names else None
    if split_parent is not None and split_parent not in names:
        raise ValueError(f"split parent {split_parent} is not a parent of {child.name}")

    feat_parents = [p for p in parents if p.name != split_parent]
    X = _indicator_matrix(data, feat_parents)
    k = _column(data, child).astype(float)
    levels = child.cardinality
    rng = np.random.default_rng(cfg.seed)

    def fit_one(Xp, kp):
        theta = np.zeros(1 + Xp.shape[1])
        return _ascend(theta, (Xp, kp), lambda t, a, b: trunc_poisson_objective(t, a, b, levels),
                       cfg, rng)

    if split_parent is None:
        thetas = [fit_one(X, k)]
    else:
        split_var = next(p for p in parents if p.name == split_parent)
        split_col = _column(data, split_var)
        pooled = None
        thetas = []
        for value in range(split_var.cardinality):
            mask = split_col == value
            if not mask.any():  # empty-partition fallback
                if pooled is None:
                    pooled = fit_one(X, k)
                thetas.append(pooled)
            else:
                thetas.append(fit_one(X[mask], k[mask]))
    intercepts = np.clip([t[0] for t in thetas], _ETA_MIN, _ETA_MAX)
    weights = np.stack([t[1:] for t in thetas])
    return TruncatedPoissonCpd(intercepts=intercepts, weights=weights, split_parent=split_parent)


def fit_network(
    data, spec: NetworkSpec, cfg: FitConfig = FitConfig()
) -> NetworkSpec:
    """Fit every CPD independently, dispatching on its declared family.

    ``spec`` supplies structure plus family declarations; any already-fitted
    CPD is refit from scratch. The result passes validation.
    """
    _require_data(data)
    cpds: dict[str, Cpd] = {}
    for i, var in enumerate(spec.variables):
        declared = spec.cpds.get(var.name)
        if declared is None:
            raise ValueError(f"missing-cpd: {var.name}")
        kind = declared.kind if isinstance(declared, UnfitCpd) else {
            TableCpd: "table",
            NoisyOrCpd: "noisy_or",
            LogisticCpd: "logistic",
            TruncatedPoissonCpd: "truncated_poisson",
        }[type(declared)]
        parents = [spec.variable(p) for p in spec.parents(var.name)]
        sub = FitConfig(
            learning_rate=cfg.learning_rate,
            epochs=cfg.epochs,
            batch_size=cfg.batch_size,
            smoothing_alpha=cfg.smoothing_alpha,
            seed=np.random.SeedSequence([cfg.seed, i]).generate_state(1)[0],
        )
        if kind == "table":
            cpds[var.name] = fit_table(data, var, parents, cfg.smoothing_alpha)
        elif kind == "noisy_or":
            cpds[var.name] = fit_noisy_or(data, var, parents, sub)
        elif kind == "logistic":
            cpds[var.name] = fit_logistic(data, var, parents, sub)
        elif kind == "truncated_poisson":
            # unfit declarations without an explicit split default to "auto";
            # an already-fitted CPD keeps its split verbatim (None = one model)
            if isinstance(declared, UnfitCpd):
                split = declared.split_parent or "auto"
            else:
                split = declared.split_parent
            cpds[var.name] = fit_truncated_poisson(data, var, parents, sub, split_parent=split)
        else:
            raise ValueError(f"unknown CPD kind: {kind!r}")
    return require_valid(NetworkSpec(spec.variables, spec.edges, cpds))
