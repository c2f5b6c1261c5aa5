"""Command-line front end.

Subcommands::

    bnfuse generate   sample a synthetic cohort + simulated note channel
    bnfuse train      fit networks and consistency tables per (size, seed) cell
    bnfuse evaluate   score trained cells on the test split, aggregate seeds
    bnfuse infer      posteriors for new patients from saved artifacts
    bnfuse mask       drop symptom-bearing sentences from notes

Configuration comes from an optional JSON file (--config) with every key
overridable on the command line as ``--key value``; nested keys use dots
(``--channel.rho_present 0.5``). Values are parsed as JSON when possible, so
lists and booleans work (``--sizes [100,654]``, --gt_parameters true).

Exit codes: 0 success, 2 configuration error, 3 data error (missing or
malformed inputs, missing artifacts), 4 numeric failure (inconsistent
evidence, divergence).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .data import (
    ChannelConfig,
    DataError,
    PatientRecord,
    Span,
    by_id,
    generate_synthetic,
    load_channel,
    load_dataset,
    make_splits,
    mask_notes,
    save_channel,
    save_dataset,
    save_mentions,
)
from .evaluation import EvalReport
from .fusion import ConsistencyCpt
from .inference import InconsistentEvidenceError
from .network import NetworkSpec
from .pipeline import (
    BN_VARIANTS,
    aggregate_cells,
    cell_dir,
    channel_config,
    evaluate_cell,
    label_indices,
    load_ground_truth,
    load_network_template,
    train_cell,
    variant_predictions,
)


class ConfigError(ValueError):
    """Bad or missing configuration keys."""


# key -> (default, help); None default means optional/absent
_CHANNEL_KEYS = {
    "channel.rho_present": (0.8, "P(mention | symptom present)"),
    "channel.rho_absent": (0.05, "P(mention | symptom absent)"),
    "channel.noise": (0.1, "probability mass spread off the target value"),
}

OPTIONS: dict[str, dict[str, tuple]] = {
    "generate": {
        "output_dir": (None, "directory for dataset.csv/channel.csv/mentions.csv"),
        "n": (10000, "number of records to sample"),
        "seed": (0, "sampling seed"),
        "network": (None, "ground-truth network JSON (default: bundled profile)"),
        **_CHANNEL_KEYS,
    },
    "train": {
        "output_dir": (None, "artifact root; cells land in {n}/{seed}/"),
        "dataset": (None, "tabular CSV with symptom label columns"),
        "network": (None, "network JSON: family template or full parameters"),
        "gt_parameters": (False, "skip fitting; use the parameterized network as-is"),
        "text_source": ("channel", "'channel' (simulated CSV) or 'mlp' (embeddings)"),
        "channel": (None, "simulated text-probability CSV (text_source=channel)"),
        "embeddings": (None, "note-embedding file (text_source=mlp)"),
        "mentions": (None, "mentions CSV to attach to records"),
        "sizes": ([654], "training subsample sizes"),
        "seeds": (list(range(5)), "cell seeds (fresh subsample per size and seed)"),
        "plan_seed": (0, "train/test split seed"),
        "variants": (list(BN_VARIANTS), "variants to prepare artifacts for"),
        "jobs": (1, "parallel worker processes over cells"),
        "fit.learning_rate": (None, "gradient step size (default: schedule by n)"),
        "fit.epochs": (None, "gradient epochs (default: schedule by n)"),
        "fit.batch_size": (50, "minibatch size for gradient CPD fits"),
        "fit.smoothing_alpha": (1.0, "additive smoothing for table CPD fits"),
        "mlp.hidden": (256, "hidden-layer width"),
        "mlp.batch_size": (50, "classifier minibatch size"),
        "mlp.learning_rate": (5e-4, "classifier step size"),
        "mlp.weight_decay": (1e-5, "L2 penalty on weight matrices"),
        "mlp.max_epochs": (200, "classifier epoch cap"),
        "mlp.patience": (10, "early-stopping patience (epochs)"),
        "mlp.tolerance": (1e-3, "minimum validation improvement"),
        "mlp.folds": (5, "cross-validation folds"),
    },
    "evaluate": {
        "output_dir": (None, "artifact root written by train"),
        "dataset": (None, "tabular CSV with symptom label columns"),
        "network": (None, "network JSON used to type the dataset columns"),
        "text_source": ("channel", "'channel' or 'mlp'; must match training"),
        "channel": (None, "simulated text-probability CSV"),
        "embeddings": (None, "note-embedding file"),
        "mentions": (None, "mentions CSV (enables subset analysis)"),
        "sizes": ([654], "cell sizes to score"),
        "seeds": (list(range(5)), "cell seeds to score"),
        "plan_seed": (0, "train/test split seed; must match training"),
        "variants": (list(BN_VARIANTS), "variants to score"),
        "baseline": ("text-only", "comparison baseline for significance tests"),
        "subsets": (True, "report per-(present, mentioned) subset Brier scores"),
        "jobs": (1, "parallel worker processes over cells"),
        "shift": (None, 'held-out shift block, e.g. {"channel": {"rho_present": 0.5}}'),
        **{k.replace("channel.", "channel_params."): v for k, v in _CHANNEL_KEYS.items()},
    },
    "infer": {
        "network": (None, "fitted network JSON (e.g. a cell's network.json)"),
        "consistency": (None, "consistency.json from the same cell"),
        "patients": (None, "tabular CSV (symptom columns optional)"),
        "channel": (None, "text-probability CSV for the same ids"),
        "variants": (None, "variants to emit (default depends on --channel)"),
        "output": (None, "output JSON path (default: stdout)"),
    },
    "mask": {
        "output_dir": (None, "directory for masked notes/spans/mentions + log"),
        "notes": (None, "JSON-lines notes: {id, text} per line"),
        "spans": (None, "JSON-lines spans: {id, symptom, start, end} per line"),
        "drop_prob": (0.5, "per-span sentence drop probability"),
        "seed": (0, "coin seed"),
    },
}

_REQUIRED = {
    "generate": ("output_dir",),
    "train": ("output_dir", "dataset"),
    "evaluate": ("output_dir", "dataset"),
    "infer": ("network", "patients"),
    "mask": ("output_dir", "notes", "spans"),
}


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bnfuse",
        description="Fuse an expert Bayesian network with text-classifier "
        "probabilities over clinical notes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command, options in OPTIONS.items():
        p = sub.add_parser(command, help=f"{command} (see --help)")
        p.add_argument("--config", help="JSON config file; flags override its keys")
        for key, (default, help_text) in options.items():
            suffix = "" if default is None else f" (default: {json.dumps(default)})"
            p.add_argument(f"--{key}", dest=key, type=_parse_value,
                           help=help_text + suffix, metavar="V")
    return parser


def _set_path(cfg: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = cfg
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"config key {dotted} conflicts with a scalar")
    node[parts[-1]] = value


def _flatten(node, prefix="") -> dict:
    out = {}
    for k, v in node.items():
        dotted = f"{prefix}{k}"
        if isinstance(v, dict) and any(
            opt.startswith(dotted + ".") for opts in OPTIONS.values() for opt in opts
        ):
            out.update(_flatten(v, dotted + "."))
        else:
            out[dotted] = v
    return out


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    """File config + flag overrides + defaults, validated against known keys."""
    options = OPTIONS[command]
    cfg: dict = {}
    raw = vars(args)
    if raw.get("config"):
        path = Path(raw["config"])
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            loaded = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        cfg.update(loaded)

    for dotted in _flatten(cfg):
        if dotted not in options and dotted.split(".")[0] not in options:
            raise ConfigError(f"unknown config key for {command}: {dotted}")
    for key, value in raw.items():
        if key in ("command", "config") or value is None:
            continue
        _set_path(cfg, key, value)
    for key, (default, _) in options.items():
        if default is not None and "." not in key:
            cfg.setdefault(key, default)
        elif default is not None:
            head, tail = key.split(".", 1)
            block = cfg.setdefault(head, {})
            if isinstance(block, dict):
                block.setdefault(tail, default)
    for key in _REQUIRED[command]:
        if not cfg.get(key):
            raise ConfigError(f"{command} requires --{key}")

    canonical = json.dumps({"command": command, "config": cfg}, sort_keys=True)
    cfg["_hash"] = hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
    return cfg


# -- input loading shared by train/evaluate ------------------------------------

_CACHE: dict[str, tuple] = {}


def _load_inputs(cfg: dict):
    key = cfg["_hash"]
    if key not in _CACHE:
        profile = (
            load_ground_truth(cfg.get("network"))
            if cfg.get("gt_parameters")
            else load_network_template(cfg.get("network"))
        )
        records, emb = load_dataset(
            cfg["dataset"],
            profile,
            embeddings_file=cfg.get("embeddings"),
            mentions_csv=cfg.get("mentions"),
        )
        plan = make_splits(
            records,
            plan_seed=int(cfg.get("plan_seed", 0)),
            sizes=tuple(int(s) for s in cfg["sizes"]),
            n_seeds=max(int(s) for s in cfg["seeds"]) + 1,
        )
        _CACHE.clear()  # one dataset at a time per process
        _CACHE[key] = (records, emb, plan)
    return _CACHE[key]


def _cells(cfg) -> list[tuple[int, int]]:
    sizes = [int(s) for s in cfg["sizes"]]
    seeds = [int(s) for s in cfg["seeds"]]
    if not sizes or not seeds:
        raise ConfigError("sizes and seeds must be non-empty")
    return [(n, seed) for n in sizes for seed in seeds]


def _train_task(payload) -> tuple[int, int]:
    cfg, n, seed = payload
    records, emb, plan = _load_inputs(cfg)
    train_cell(cfg, records, emb, plan, n, seed)
    return n, seed


def _eval_task(payload) -> dict:
    cfg, n, seed = payload
    records, emb, plan = _load_inputs(cfg)
    return evaluate_cell(cfg, records, emb, plan, n, seed)


def _run_cells(cfg, task, cells):
    payloads = [(cfg, n, seed) for n, seed in cells]
    jobs = int(cfg.get("jobs", 1))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(task, payloads))
    return [task(p) for p in payloads]


# -- subcommands ----------------------------------------------------------------


def _channel_params(block) -> ChannelConfig:
    try:
        return channel_config(block)
    except (DataError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def cmd_generate(cfg: dict) -> int:
    net = load_ground_truth(cfg.get("network"))
    n, seed = int(cfg["n"]), int(cfg["seed"])
    records, probs = generate_synthetic(net, n, seed, _channel_params(cfg["channel"]))
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(records, net, out / "dataset.csv")
    save_channel(probs, records, net, out / "channel.csv")
    save_mentions(records, net.symptom_variables, out / "mentions.csv")
    meta = {
        "command": "generate",
        "config_hash": cfg["_hash"],
        "n": n,
        "seed": seed,
        "channel": cfg["channel"],
    }
    (out / "meta.json").write_text(
        json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"generate: wrote {n} records to {out}")
    return 0


def cmd_train(cfg: dict) -> int:
    cells = _cells(cfg)
    if cfg.get("text_source", "channel") == "channel" and not cfg.get("channel"):
        raise ConfigError("text_source=channel requires --channel")
    if cfg.get("text_source") == "mlp" and not cfg.get("embeddings"):
        raise ConfigError("text_source=mlp requires --embeddings")
    done = _run_cells(cfg, _train_task, cells)
    for n, seed in done:
        print(f"train: cell n={n} seed={seed} -> {cell_dir(cfg['output_dir'], n, seed)}")
    return 0


def cmd_evaluate(cfg: dict) -> int:
    cells = _cells(cfg)
    if cfg.get("text_source", "channel") == "channel" and not cfg.get("channel"):
        raise ConfigError("text_source=channel requires --channel")
    if cfg.get("text_source") == "mlp" and not cfg.get("embeddings"):
        raise ConfigError("text_source=mlp requires --embeddings")
    shift = cfg.get("shift")
    if shift is not None:
        if not isinstance(shift, dict) or not isinstance(shift.get("channel"), dict):
            raise ConfigError('shift must look like {"channel": {"rho_present": 0.5}}')
        merged = dict(cfg.get("channel_params", {}))
        merged.update(shift["channel"])
        _channel_params(merged)
    docs = _run_cells(cfg, _eval_task, cells)
    metrics, comparisons = aggregate_cells(docs, baseline=cfg["baseline"])
    report = EvalReport(
        metrics=metrics,
        comparisons=comparisons,
        baseline=cfg["baseline"],
        meta={"config_hash": cfg["_hash"], "cells": len(docs)},
    )
    out = Path(cfg["output_dir"])
    (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
    (out / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    print(report.to_text().rstrip())
    print(f"evaluate: {len(docs)} cells -> {out / 'report.json'}")
    return 0


def cmd_infer(cfg: dict) -> int:
    net = load_ground_truth(cfg["network"])
    records, _ = load_dataset(cfg["patients"], net)

    text_probs = None
    if cfg.get("channel"):
        text_probs = load_channel(cfg["channel"], net, records)
    variants = cfg.get("variants") or (
        list(BN_VARIANTS) if text_probs is not None else ["bn-only"]
    )
    text_needed = [v for v in variants if v != "bn-only"]
    if text_needed and text_probs is None:
        raise ConfigError(f"variants {text_needed} need --channel text probabilities")

    cpts_plain = cpts_virtual = None
    if {"c-bn-text", "v-c-bn-text"} & set(variants):
        if not cfg.get("consistency"):
            raise ConfigError("consistency-fused variants need --consistency")
        cons = json.loads(Path(cfg["consistency"]).read_text(encoding="utf-8"))
        cpts_plain = {s: ConsistencyCpt.from_json(json.dumps(d)) for s, d in cons["plain"].items()}
        cpts_virtual = {
            s: ConsistencyCpt.from_json(json.dumps(d)) for s, d in cons["virtual"].items()
        }

    preds = variant_predictions(
        variants, net, records, text_probs, cpts_plain, cpts_virtual
    )
    doc = {"patients": {}}
    for i, r in enumerate(records):
        entry = {}
        for v in variants:
            entry[v] = {
                s: {lab: float(p) for lab, p in zip(net.variable(s).domain, preds[v][s][i])}
                for s in net.symptom_variables
            }
        doc["patients"][r.id] = entry
    text = json.dumps(doc, indent=1, sort_keys=True)
    if cfg.get("output"):
        Path(cfg["output"]).write_text(text + "\n", encoding="utf-8")
        print(f"infer: {len(records)} patients -> {cfg['output']}")
    else:
        print(text)
    return 0


def cmd_mask(cfg: dict) -> int:
    notes_path, spans_path = Path(cfg["notes"]), Path(cfg["spans"])
    notes: dict[str, str] = {}
    for line in notes_path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            d = json.loads(line)
            notes[str(d["id"])] = d["text"]
    spans: dict[str, list[Span]] = {}
    for line in spans_path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            d = json.loads(line)
            spans.setdefault(str(d["id"]), []).append(
                Span(d["symptom"], int(d["start"]), int(d["end"]))
            )
    symptoms = sorted({sp.symptom for lst in spans.values() for sp in lst})
    records = [
        PatientRecord(
            id=rid,
            tabular={},
            note=text,
            spans=tuple(spans.get(rid, ())),
            mentions={s: any(sp.symptom == s for sp in spans.get(rid, ())) for s in symptoms},
        )
        for rid, text in sorted(notes.items())
    ]
    masked, log = mask_notes(records, float(cfg["drop_prob"]), int(cfg["seed"]))

    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "masked_notes.jsonl", "w", encoding="utf-8") as fh:
        for r in masked:
            fh.write(json.dumps({"id": r.id, "text": r.note}, sort_keys=True) + "\n")
    with open(out / "masked_spans.jsonl", "w", encoding="utf-8") as fh:
        for r in masked:
            for sp in r.spans:
                fh.write(
                    json.dumps(
                        {"id": r.id, "symptom": sp.symptom, "start": sp.start, "end": sp.end},
                        sort_keys=True,
                    )
                    + "\n"
                )
    save_mentions(masked, symptoms, out / "mentions.csv")
    with open(out / "drop_log.csv", "w", encoding="utf-8") as fh:
        fh.write("id,span_index,symptom,dropped\n")
        for row in log:
            fh.write(f"{row['id']},{row['span_index']},{row['symptom']},{int(row['dropped'])}\n")
    dropped = sum(r["dropped"] for r in log)
    print(f"mask: dropped {dropped}/{len(log)} spans across {len(masked)} notes -> {out}")
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "infer": cmd_infer,
    "mask": cmd_mask,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args.command, args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except InconsistentEvidenceError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4
    except (ArithmeticError, ValueError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
