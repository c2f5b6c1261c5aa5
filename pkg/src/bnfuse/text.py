"""Text-side models: note-embedding classifiers and the early-fusion baseline.

The classifier is a one-hidden-layer perceptron (rectifier units, width 256 by
default) trained with plain mini-batch gradient descent on the cross-entropy
objective. The output map is the normalized exponential over the class
logits; with two classes this reduces to the logistic function of the logit
difference, so binary and ternary symptoms share one code path.

Training follows a fixed protocol: 5-fold cross-validation with early
stopping on validation cross-entropy (patience + tolerance), take the median
best epoch across folds, then retrain on the full set for that many epochs.
Out-of-fold predictions from the same partition feed the consistency node so
it never sees in-sample confidence.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .network import VariableSpec

EMB_MAGIC = b"EMB1"


@dataclass(frozen=True)
class EmbeddingMatrix:
    ids: tuple[str, ...]
    rows: np.ndarray  # (n, dim) float32

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float32)
        if rows.ndim != 2:
            raise ValueError("embedding rows must be a 2-D matrix")
        if len(self.ids) != rows.shape[0]:
            raise ValueError("id-misalignment: id count != row count")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("id-misalignment: duplicate ids")
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
        object.__setattr__(self, "rows", rows)

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def select(self, ids) -> np.ndarray:
        index = {i: k for k, i in enumerate(self.ids)}
        try:
            take = [index[str(i)] for i in ids]
        except KeyError as exc:
            raise ValueError(f"id-misalignment: unknown id {exc.args[0]!r}") from None
        return self.rows[take]


def write_embeddings(path, emb: EmbeddingMatrix, ids_path=None) -> None:
    """Binary layout: magic 'EMB1', little-endian u32 n, u32 dim, then
    n*dim float32 row-major. The id list goes to a sidecar, one id per line."""
    path = Path(path)
    n, dim = emb.rows.shape
    with open(path, "wb") as fh:
        fh.write(EMB_MAGIC)
        fh.write(struct.pack("<II", n, dim))
        fh.write(np.ascontiguousarray(emb.rows, dtype="<f4").tobytes())
    ids_path = Path(ids_path) if ids_path else path.with_suffix(path.suffix + ".ids")
    ids_path.write_text("".join(i + "\n" for i in emb.ids), encoding="utf-8")


def read_embeddings(path, ids_path=None) -> EmbeddingMatrix:
    """Read the EMB1 binary format, or a CSV fallback (id, v0, v1, ...)."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        ids, rows = [], []
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            cells = line.split(",")
            ids.append(cells[0].strip())
            rows.append([float(c) for c in cells[1:]])
        return EmbeddingMatrix(tuple(ids), np.array(rows, dtype=np.float32))
    raw = path.read_bytes()
    if raw[:4] != EMB_MAGIC:
        raise ValueError(f"not an embedding file (bad magic): {path}")
    n, dim = struct.unpack("<II", raw[4:12])
    expect = 12 + 4 * n * dim
    if len(raw) != expect:
        raise ValueError(f"embedding file truncated: {len(raw)} bytes, expected {expect}")
    rows = np.frombuffer(raw, dtype="<f4", offset=12).reshape(n, dim)
    ids_path = Path(ids_path) if ids_path else path.with_suffix(path.suffix + ".ids")
    ids = tuple(ids_path.read_text(encoding="utf-8").splitlines())
    return EmbeddingMatrix(ids, rows)


@dataclass(frozen=True)
class MlpTrainConfig:
    batch_size: int = 50
    learning_rate: float = 5e-4
    weight_decay: float = 1e-5
    max_epochs: int = 200
    patience: int = 10
    tolerance: float = 1e-3
    folds: int = 5
    hidden: int = 256
    seed: int = 0


@dataclass
class MlpModel:
    """input -> hidden (rectifier) -> class logits -> normalized exponential."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @property
    def input_width(self) -> int:
        return self.w1.shape[0]

    @property
    def output_width(self) -> int:
        return self.w2.shape[1]

    def copy(self) -> "MlpModel":
        return MlpModel(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())

    def to_json(self) -> str:
        return json.dumps(
            {
                "shapes": {k: list(getattr(self, k).shape) for k in ("w1", "b1", "w2", "b2")},
                "weights": {k: getattr(self, k).ravel().tolist() for k in ("w1", "b1", "w2", "b2")},
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "MlpModel":
        doc = json.loads(text)
        arrays = {
            k: np.array(doc["weights"][k]).reshape(doc["shapes"][k])
            for k in ("w1", "b1", "w2", "b2")
        }
        return cls(**arrays)


def _init_model(input_width: int, hidden: int, n_classes: int, rng) -> MlpModel:
    def glorot(fan_in, fan_out):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=(fan_in, fan_out))

    return MlpModel(
        w1=glorot(input_width, hidden),
        b1=np.zeros(hidden),
        w2=glorot(hidden, n_classes),
        b2=np.zeros(n_classes),
    )


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _features(features) -> np.ndarray:
    rows = features.rows if isinstance(features, EmbeddingMatrix) else features
    return np.asarray(rows, dtype=float)


def predict_proba(model: MlpModel, features) -> np.ndarray:
    """Class probabilities per row; each row sums to 1."""
    X = _features(features)
    if X.shape[1] != model.input_width:
        raise ValueError(
            f"dimension-mismatch: {X.shape[1]} features, model expects {model.input_width}"
        )
    hidden = np.maximum(X @ model.w1 + model.b1, 0.0)
    return _softmax(hidden @ model.w2 + model.b2)


def cross_entropy(model: MlpModel, X: np.ndarray, y: np.ndarray) -> float:
    p = predict_proba(model, X)
    return float(-np.mean(np.log(np.clip(p[np.arange(len(y)), y], 1e-12, None))))


def gradients(model: MlpModel, X: np.ndarray, y: np.ndarray):
    """Mean cross-entropy loss and its gradients for one batch."""
    n = len(y)
    hidden_pre = X @ model.w1 + model.b1
    hidden = np.maximum(hidden_pre, 0.0)
    probs = _softmax(hidden @ model.w2 + model.b2)
    loss = float(-np.mean(np.log(np.clip(probs[np.arange(n), y], 1e-12, None))))

    delta2 = probs.copy()
    delta2[np.arange(n), y] -= 1.0
    delta2 /= n
    grad_w2 = hidden.T @ delta2
    grad_b2 = delta2.sum(axis=0)
    delta1 = delta2 @ model.w2.T
    delta1[hidden_pre <= 0] = 0.0
    grad_w1 = X.T @ delta1
    grad_b1 = delta1.sum(axis=0)
    return loss, (grad_w1, grad_b1, grad_w2, grad_b2)


def _run_epochs(model: MlpModel, X, y, epochs: int, cfg: MlpTrainConfig, rng) -> None:
    for _ in range(epochs):
        perm = rng.permutation(len(y))
        for start in range(0, len(y), cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            _, (gw1, gb1, gw2, gb2) = gradients(model, X[idx], y[idx])
            lr, wd = cfg.learning_rate, cfg.weight_decay
            model.w1 -= lr * (gw1 + wd * model.w1)
            model.b1 -= lr * gb1
            model.w2 -= lr * (gw2 + wd * model.w2)
            model.b2 -= lr * gb2


def fold_indices(n: int, folds: int, seed: int) -> list[np.ndarray]:
    """Deterministic partition into `folds` disjoint validation index sets."""
    if folds < 2:
        raise ValueError("n-too-small: need at least 2 folds")
    if n < folds:
        raise ValueError(f"n-too-small: {n} rows for {folds} folds")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(chunk) for chunk in np.array_split(perm, folds)]


def _check_labels(y: np.ndarray, n_classes: int | None) -> int:
    classes = np.unique(y)
    if len(classes) < 2:
        raise ValueError("single-class-labels")
    return int(n_classes if n_classes is not None else y.max() + 1)


def _early_stopped_fit(X_tr, y_tr, X_val, y_val, n_classes, cfg, seed):
    """Train up to max_epochs; return (best model snapshot, best 1-based epoch)."""
    rng = np.random.default_rng(seed)
    model = _init_model(X_tr.shape[1], cfg.hidden, n_classes, rng)
    best = model.copy()
    best_ce = cross_entropy(model, X_val, y_val)
    best_epoch, since_improved = 0, 0
    for epoch in range(1, cfg.max_epochs + 1):
        _run_epochs(model, X_tr, y_tr, 1, cfg, rng)
        ce = cross_entropy(model, X_val, y_val)
        if ce < best_ce - cfg.tolerance:
            best, best_ce, best_epoch = model.copy(), ce, epoch
            since_improved = 0
        else:
            since_improved += 1
            if since_improved >= cfg.patience:
                break
    return best, max(best_epoch, 1)


def train_mlp(features, labels, cfg: MlpTrainConfig = MlpTrainConfig(),
              n_classes: int | None = None) -> MlpModel:
    """Cross-validated early stopping, then a full retrain at the median epoch."""
    X = _features(features)
    y = np.asarray(labels, dtype=np.intp)
    if len(X) != len(y):
        raise ValueError("dimension-mismatch: features and labels differ in length")
    k = _check_labels(y, n_classes)

    epochs = []
    for f, val_idx in enumerate(fold_indices(len(y), cfg.folds, cfg.seed)):
        tr_idx = np.setdiff1d(np.arange(len(y)), val_idx)
        _, best_epoch = _early_stopped_fit(
            X[tr_idx], y[tr_idx], X[val_idx], y[val_idx], k, cfg, seed=(cfg.seed, f)
        )
        epochs.append(best_epoch)
    final_epochs = max(int(round(float(np.median(epochs)))), 1)

    rng = np.random.default_rng((cfg.seed, cfg.folds))  # fold seeds use 0..folds-1
    model = _init_model(X.shape[1], cfg.hidden, k, rng)
    _run_epochs(model, X, y, final_epochs, cfg, rng)
    return model


def cross_fitted_proba(features, labels, cfg: MlpTrainConfig = MlpTrainConfig(),
                       n_classes: int | None = None) -> np.ndarray:
    """Out-of-fold probabilities: each row predicted by the model whose
    validation fold contains it. Same partition as train_mlp for the seed."""
    X = _features(features)
    y = np.asarray(labels, dtype=np.intp)
    k = _check_labels(y, n_classes)
    out = np.empty((len(y), k))
    for f, val_idx in enumerate(fold_indices(len(y), cfg.folds, cfg.seed)):
        tr_idx = np.setdiff1d(np.arange(len(y)), val_idx)
        model, _ = _early_stopped_fit(
            X[tr_idx], y[tr_idx], X[val_idx], y[val_idx], k, cfg, seed=(cfg.seed, f)
        )
        out[val_idx] = predict_proba(model, X[val_idx])
    return out


# -- early-fusion (concat) baseline ------------------------------------------


@dataclass(frozen=True)
class TabularScaler:
    """Per-variable encoding statistics fit on training rows only."""

    numeric_names: tuple[str, ...]
    means: dict[str, float] = field(default_factory=dict)
    stds: dict[str, float] = field(default_factory=dict)


def _is_numeric(var: VariableSpec) -> bool:
    return len(var.domain) > 2 and all(d.lstrip("-").isdigit() for d in var.domain)


def encode_tabular(columns: dict[str, np.ndarray], variables: list[VariableSpec],
                   scaler: TabularScaler | None = None):
    """Encode a tabular assignment block for the concat baseline.

    Categorical variables contribute drop-first indicator columns (one per
    non-reference level, so a binary variable is a single 0/1 column); domains
    whose labels are all integers are treated as ordinal counts and
    standard-scaled with training-split statistics. Returns (X, scaler).
    """
    n = len(next(iter(columns.values())))
    blocks = []
    fit_scaler = scaler is None
    if fit_scaler:
        scaler = TabularScaler(tuple(v.name for v in variables if _is_numeric(v)))
    for var in variables:
        idx = np.asarray(columns[var.name], dtype=np.intp)
        if _is_numeric(var):
            values = np.array([float(var.domain[i]) for i in idx])
            if fit_scaler:
                scaler.means[var.name] = float(values.mean())
                scaler.stds[var.name] = float(values.std()) or 1.0
            col = (values - scaler.means[var.name]) / scaler.stds[var.name]
            blocks.append(col[:, None])
        else:
            hot = np.zeros((n, var.cardinality - 1))
            nz = idx > 0
            hot[np.flatnonzero(nz), idx[nz] - 1] = 1.0
            blocks.append(hot)
    return np.hstack(blocks), scaler


def concat_features(embedding_rows: np.ndarray, tabular_block: np.ndarray) -> np.ndarray:
    if len(embedding_rows) != len(tabular_block):
        raise ValueError("dimension-mismatch: embedding and tabular row counts differ")
    return np.hstack([np.asarray(embedding_rows, dtype=float), tabular_block])


def train_concat_baseline(embedding_rows, tabular_block, labels,
                          cfg: MlpTrainConfig = MlpTrainConfig(),
                          n_classes: int | None = None) -> MlpModel:
    """train_mlp on [embedding | encoded tabular block] features."""
    return train_mlp(concat_features(embedding_rows, tabular_block), labels, cfg, n_classes)
