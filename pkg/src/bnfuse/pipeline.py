"""Experiment pipeline: per-(n, seed) training and evaluation cells.

A cell subsamples the training split, fits (or loads) the network, obtains
text probabilities (simulated channel or embedding classifiers), estimates
consistency tables against both the plain and the virtual-evidence posteriors,
and writes everything as JSON artifacts under output_dir/{n}/{seed}/.
Evaluation cells read those artifacts back, score every requested variant on
the fixed test split, and aggregate across seeds with significance tests.

Artifacts embed the resolved-config hash and the cell seed; a rerun with the
same config reproduces identical bytes.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data import (
    ChannelConfig,
    DataError,
    PatientRecord,
    by_id,
    columns_for,
    draw_channel,
    load_channel,
    load_dataset,
    make_splits,
)
from .evaluation import (
    average_precision,
    average_precision_macro,
    brier,
    confidence,
    subset_split,
    wilcoxon_one_sided,
)
from .fusion import ConsistencyCpt, estimate_consistency_cpt, fuse
from .inference import symptom_posteriors
from .learning import FitConfig, fit_network
from .network import NetworkSpec, require_valid
from .simsum import simsum_profile, simsum_template
from .text import (
    EmbeddingMatrix,
    MlpModel,
    MlpTrainConfig,
    TabularScaler,
    concat_features,
    cross_fitted_proba,
    encode_tabular,
    predict_proba,
    train_mlp,
)

BN_VARIANTS = ("bn-only", "text-only", "c-bn-text", "v-bn-text", "v-c-bn-text")


def cell_dir(root, n: int, seed: int) -> Path:
    return Path(root) / str(n) / str(seed)


def _read_spec(path) -> NetworkSpec:
    try:
        return NetworkSpec.from_json(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, ValueError, KeyError) as exc:
        raise DataError(f"malformed network file {path}: {exc}") from exc


def load_network_template(path: str | None) -> NetworkSpec:
    if path:
        return _read_spec(path)
    return simsum_template()


def load_ground_truth(path: str | None) -> NetworkSpec:
    if path:
        spec = _read_spec(path)
        try:
            return require_valid(spec)
        except ValueError as exc:
            raise DataError(str(exc)) from exc
    return simsum_profile()


def batch_posteriors(
    net: NetworkSpec,
    records: Sequence[PatientRecord],
    virtual: Mapping[str, np.ndarray] | None = None,
) -> dict[str, np.ndarray]:
    """Stack per-record symptom posteriors into (n, |domain|) blocks."""
    symptoms = net.symptom_variables
    tab_names = net.tabular_variables
    out = {s: np.empty((len(records), net.variable(s).cardinality)) for s in symptoms}
    for i, r in enumerate(records):
        tab = {v: r.tabular[v] for v in tab_names}
        v_i = {s: virtual[s][i] for s in symptoms} if virtual is not None else None
        for s, dist in symptom_posteriors(net, tab, v_i).items():
            out[s][i] = dist.probs
    return out


def label_indices(net: NetworkSpec, records: Sequence[PatientRecord]) -> dict[str, np.ndarray]:
    return columns_for(records, [net.variable(s) for s in net.symptom_variables])


def mlp_config(cfg: Mapping, seed: int) -> MlpTrainConfig:
    block = dict(cfg.get("mlp", {}))
    block.setdefault("seed", seed)
    return MlpTrainConfig(**block)


def fit_config(cfg: Mapping, seed: int) -> FitConfig:
    block = dict(cfg.get("fit", {}))
    block.setdefault("seed", seed)
    return FitConfig(**block)


def channel_config(block: Mapping) -> ChannelConfig:
    return ChannelConfig(**dict(block))


# -- training cells -----------------------------------------------------------


def train_cell(cfg: Mapping, records, embeddings, plan, n: int, seed: int) -> Path:
    """Fit one (n, seed) cell and write its artifacts; returns the cell dir."""
    net_gt_mode = bool(cfg.get("gt_parameters", False))
    out = cell_dir(cfg["output_dir"], n, seed)
    out.mkdir(parents=True, exist_ok=True)

    index = by_id(records)
    train_records = [index[i] for i in plan.subsample(n, seed)]

    if net_gt_mode:
        net = load_ground_truth(cfg.get("network"))
    else:
        template = load_network_template(cfg.get("network"))
        net = fit_network(train_records, template, fit_config(cfg, seed))

    symptoms = net.symptom_variables
    labels = label_indices(net, train_records)
    text_probs, checkpoints = _train_text(
        cfg, net, train_records, embeddings, seed
    )

    bn_probs = batch_posteriors(net, train_records)
    v_probs = batch_posteriors(net, train_records, virtual=text_probs)
    cpts_c, cpts_v = {}, {}
    for s in symptoms:
        domain = net.variable(s).domain
        cpts_c[s] = estimate_consistency_cpt(bn_probs[s], text_probs[s], labels[s], s, domain)
        cpts_v[s] = estimate_consistency_cpt(v_probs[s], text_probs[s], labels[s], s, domain)

    (out / "network.json").write_text(net.to_json() + "\n", encoding="utf-8")
    consistency = {
        "plain": {s: json.loads(cpts_c[s].to_json()) for s in symptoms},
        "virtual": {s: json.loads(cpts_v[s].to_json()) for s in symptoms},
    }
    (out / "consistency.json").write_text(
        json.dumps(consistency, indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )
    for name, payload in checkpoints.items():
        (out / name).write_text(payload + "\n", encoding="utf-8")
    meta = {
        "command": "train",
        "config_hash": cfg.get("_hash", ""),
        "n": n,
        "seed": seed,
        "text_source": cfg.get("text_source", "channel"),
        "gt_parameters": net_gt_mode,
    }
    (out / "meta.json").write_text(
        json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )
    return out


def _train_text(cfg, net, train_records, embeddings, seed):
    """Out-of-fold text probabilities for consistency estimation, plus any
    model checkpoints to persist. Channel mode reads simulated probabilities;
    mlp mode cross-fits classifiers on note embeddings."""
    source = cfg.get("text_source", "channel")
    symptoms = net.symptom_variables
    checkpoints: dict[str, str] = {}
    if source == "channel":
        probs = load_channel(cfg["channel"], net, train_records)
        return probs, checkpoints
    if source != "mlp":
        raise DataError(f"unknown text_source {source!r}")

    if embeddings is None:
        raise DataError("text_source=mlp requires an embeddings file")
    X = embeddings.select([r.id for r in train_records])
    labels = label_indices(net, train_records)
    probs = {}
    for s_i, s in enumerate(symptoms):
        var = net.variable(s)
        mcfg = mlp_config(cfg, seed * 1000 + s_i)
        probs[s] = cross_fitted_proba(X, labels[s], mcfg, n_classes=var.cardinality)
        model = train_mlp(X, labels[s], mcfg, n_classes=var.cardinality)
        checkpoints[f"text_{s}.json"] = model.to_json()

    if "concat" in cfg.get("variants", []):
        tab_vars = [net.variable(v) for v in net.tabular_variables]
        cols = columns_for(train_records, tab_vars)
        tab_X, scaler = encode_tabular(cols, tab_vars)
        for s_i, s in enumerate(symptoms):
            var = net.variable(s)
            mcfg = mlp_config(cfg, seed * 1000 + 500 + s_i)
            model = train_mlp(
                concat_features(X, tab_X), labels[s], mcfg, n_classes=var.cardinality
            )
            checkpoints[f"concat_{s}.json"] = model.to_json()
        checkpoints["scaler.json"] = json.dumps(
            {
                "numeric_names": list(scaler.numeric_names),
                "means": scaler.means,
                "stds": scaler.stds,
            },
            sort_keys=True,
        )
    return probs, checkpoints


# -- evaluation cells ---------------------------------------------------------


def _test_text_probs(cfg, net, test_records, embeddings, cell: Path):
    source = cfg.get("text_source", "channel")
    if source == "channel":
        return load_channel(cfg["channel"], net, test_records)
    X = embeddings.select([r.id for r in test_records])
    probs = {}
    for s in net.symptom_variables:
        ckpt = cell / f"text_{s}.json"
        if not ckpt.exists():
            raise DataError(f"missing-artifact: {ckpt}")
        probs[s] = predict_proba(MlpModel.from_json(ckpt.read_text("utf-8")), X)
    return probs


def _concat_probs(cfg, net, test_records, embeddings, cell: Path):
    scaler_path = cell / "scaler.json"
    if not scaler_path.exists():
        raise DataError(f"missing-artifact: {scaler_path}")
    doc = json.loads(scaler_path.read_text("utf-8"))
    scaler = TabularScaler(tuple(doc["numeric_names"]), doc["means"], doc["stds"])
    tab_vars = [net.variable(v) for v in net.tabular_variables]
    tab_X, _ = encode_tabular(columns_for(test_records, tab_vars), tab_vars, scaler)
    X = concat_features(embeddings.select([r.id for r in test_records]), tab_X)
    probs = {}
    for s in net.symptom_variables:
        ckpt = cell / f"concat_{s}.json"
        if not ckpt.exists():
            raise DataError(f"missing-artifact: {ckpt}")
        probs[s] = predict_proba(MlpModel.from_json(ckpt.read_text("utf-8")), X)
    return probs


def variant_predictions(
    variants, net, test_records, text_probs, cpts_plain, cpts_virtual,
    concat_probs=None,
) -> dict[str, dict[str, np.ndarray]]:
    """(n, |domain|) probability blocks per variant per symptom."""
    preds: dict[str, dict[str, np.ndarray]] = {}
    need_bn = {"bn-only", "c-bn-text"} & set(variants)
    need_v = {"v-bn-text", "v-c-bn-text"} & set(variants)
    bn = batch_posteriors(net, test_records) if need_bn else None
    vbn = batch_posteriors(net, test_records, virtual=text_probs) if need_v else None
    for variant in variants:
        if variant == "text-only":
            preds[variant] = {s: np.array(p) for s, p in text_probs.items()}
        elif variant == "bn-only":
            preds[variant] = bn
        elif variant == "v-bn-text":
            preds[variant] = vbn
        elif variant == "c-bn-text":
            preds[variant] = _fuse_block(bn, text_probs, cpts_plain)
        elif variant == "v-c-bn-text":
            preds[variant] = _fuse_block(vbn, text_probs, cpts_virtual)
        elif variant == "concat":
            if concat_probs is None:
                raise DataError("missing-artifact: concat predictions unavailable")
            preds[variant] = concat_probs
        else:
            raise DataError(f"unknown variant {variant!r}")
    return preds


def _fuse_block(bn_block, text_block, cpts: Mapping[str, ConsistencyCpt]):
    out = {}
    for s, cpt in cpts.items():
        bn, tx = bn_block[s], text_block[s]
        out[s] = np.stack([fuse(bn[i], tx[i], cpt) for i in range(len(bn))])
    return out


def score_block(preds, labels, mentions=None) -> dict:
    """Metrics for one variant: per-symptom AP/Brier/confidence (+ subsets)."""
    result = {}
    for s, p in preds.items():
        y = labels[s]
        block = {"brier": brier(p, y)}
        try:
            block["ap"] = (
                average_precision(p[:, 1], (y == 1).astype(int))
                if p.shape[1] == 2
                else average_precision_macro(p, y)
            )
        except ValueError:
            block["ap"] = None  # single-class slice; AP undefined
        block["confidence"] = float(np.mean([confidence(row) for row in p]))
        if mentions is not None and s in mentions:
            subsets = {}
            for (present, mentioned), idx in subset_split(y > 0, mentions[s]).items():
                key = ("present" if present else "absent") + (
                    "_mentioned" if mentioned else "_not_mentioned"
                )
                subsets[key] = {
                    "n": int(len(idx)),
                    "brier": brier(p[idx], y[idx]) if len(idx) else None,
                }
            block["subsets"] = subsets
        result[s] = block
    return result


def evaluate_cell(cfg, records, embeddings, plan, n: int, seed: int) -> dict:
    """Score one trained cell on the test split; writes metrics.json."""
    cell = cell_dir(cfg["output_dir"], n, seed)
    net_path = cell / "network.json"
    cons_path = cell / "consistency.json"
    if not net_path.exists() or not cons_path.exists():
        raise DataError(f"missing-artifact: run train before evaluate ({cell})")
    net = load_ground_truth(str(net_path))
    cons = json.loads(cons_path.read_text("utf-8"))
    cpts_plain = {s: ConsistencyCpt.from_json(json.dumps(d)) for s, d in cons["plain"].items()}
    cpts_virtual = {s: ConsistencyCpt.from_json(json.dumps(d)) for s, d in cons["virtual"].items()}

    index = by_id(records)
    test_records = [index[i] for i in plan.test_ids]
    labels = label_indices(net, test_records)
    variants = list(cfg.get("variants", BN_VARIANTS))

    text_probs = _test_text_probs(cfg, net, test_records, embeddings, cell)
    concat_probs = None
    if "concat" in variants:
        concat_probs = _concat_probs(cfg, net, test_records, embeddings, cell)

    mentions = None
    if cfg.get("subsets", True):
        if all(r.mentions is not None for r in test_records):
            mentions = {
                s: np.array([bool(r.mentions.get(s)) for r in test_records])
                for s in net.symptom_variables
            }

    preds = variant_predictions(
        variants, net, test_records, text_probs, cpts_plain, cpts_virtual, concat_probs
    )
    metrics = {v: score_block(preds[v], labels, mentions) for v in variants}

    shift_cfg = cfg.get("shift")
    if shift_cfg and "channel" in shift_cfg:
        base = dict(cfg.get("channel_params", {}))
        base.update(shift_cfg["channel"])
        shifted_records, shifted_probs = draw_channel(
            test_records, net, channel_config(base), seed=1_000_003 + seed
        )
        shifted_mentions = {
            s: np.array([bool(r.mentions.get(s)) for r in shifted_records])
            for s in net.symptom_variables
        }
        s_preds = variant_predictions(
            [v for v in variants if v != "concat"],
            net, test_records, shifted_probs, cpts_plain, cpts_virtual,
        )
        for v, block in s_preds.items():
            metrics[f"shift:{v}"] = score_block(block, labels, shifted_mentions)

    doc = {
        "config_hash": cfg.get("_hash", ""),
        "n": n,
        "seed": seed,
        "metrics": metrics,
    }
    (cell / "metrics.json").write_text(
        json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )
    return doc


# -- aggregation ---------------------------------------------------------------


def aggregate_cells(cell_docs: Sequence[dict], baseline: str = "text-only") -> tuple[dict, dict]:
    """Mean/std over seeds per (size, variant, symptom, metric), plus one-sided
    Wilcoxon p-values of 'variant Brier below baseline Brier' across seeds."""
    by_size: dict[int, list[dict]] = {}
    for doc in cell_docs:
        by_size.setdefault(doc["n"], []).append(doc)

    metrics: dict = {}
    comparisons: dict = {}
    for size, docs in sorted(by_size.items()):
        docs = sorted(docs, key=lambda d: d["seed"])
        variant_names: list[str] = []
        for d in docs:
            for v in d["metrics"]:
                if v not in variant_names:
                    variant_names.append(v)
        metrics[str(size)] = {}
        comparisons[str(size)] = {}
        for variant in variant_names:
            per_symptom: dict = {}
            symptoms = sorted({
                s for d in docs for s in d["metrics"].get(variant, {})
            })
            for s in symptoms:
                block: dict = {}
                for metric in ("ap", "brier", "confidence"):
                    vals = [
                        d["metrics"][variant][s][metric]
                        for d in docs
                        if d["metrics"].get(variant, {}).get(s, {}).get(metric) is not None
                    ]
                    if vals:
                        block[metric] = {
                            "mean": float(np.mean(vals)),
                            "std": float(np.std(vals)),
                            "n_seeds": len(vals),
                        }
                subset_keys = sorted({
                    k
                    for d in docs
                    for k in d["metrics"][variant][s].get("subsets", {})
                })
                if subset_keys:
                    block["subsets"] = {}
                    for key in subset_keys:
                        vals = [
                            d["metrics"][variant][s]["subsets"][key]["brier"]
                            for d in docs
                            if d["metrics"][variant][s].get("subsets", {}).get(key, {}).get("brier")
                            is not None
                        ]
                        if vals:
                            block["subsets"][key] = {
                                "brier": {
                                    "mean": float(np.mean(vals)),
                                    "std": float(np.std(vals)),
                                    "n_seeds": len(vals),
                                }
                            }
                per_symptom[s] = block
            metrics[str(size)][variant] = per_symptom

            # shifted variants compare against the shifted baseline
            ref = f"shift:{baseline}" if variant.startswith("shift:") else baseline
            if variant != ref:
                comparisons[str(size)][variant] = _compare(docs, variant, ref)
    return metrics, comparisons


def _compare(docs, variant, baseline) -> dict:
    out = {}
    symptoms = sorted({
        s for d in docs for s in d["metrics"].get(variant, {})
    })
    for s in symptoms:
        a, b = [], []
        for d in docs:
            va = d["metrics"].get(variant, {}).get(s, {}).get("brier")
            vb = d["metrics"].get(baseline, {}).get(s, {}).get("brier")
            if va is not None and vb is not None:
                a.append(va)
                b.append(vb)
        if len(a) >= 5:
            try:
                # alternative: baseline Brier exceeds variant Brier
                out[s] = {"brier_p_below_baseline": wilcoxon_one_sided(b, a)}
            except ValueError:
                out[s] = {"brier_p_below_baseline": None}
    return out
