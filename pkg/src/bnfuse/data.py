"""Dataset ingestion, splits, note masking, and the synthetic generator.

Records are fully immutable snapshots: a tabular assignment, optional symptom
labels, an optional embedding row reference, and optional note text with
symptom span annotations plus per-symptom mentions flags.

The synthetic generator samples records ancestrally from a parameterized
network and simulates the text side with a two-stage channel: a mention coin
(P(mention | present) = rho_present, P(mention | absent) = rho_absent)
followed by a classifier-probability draw concentrated on the truth when the
symptom is mentioned and on the absent value when it is not. That reproduces
the central failure mode of text-only prediction: an unmentioned symptom
looks confidently absent.
"""
from __future__ import annotations

import csv
import io
import json
import re
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .network import NetworkSpec, VariableSpec
from .text import EmbeddingMatrix, read_embeddings


class DataError(ValueError):
    """Malformed or misaligned input data."""


@dataclass(frozen=True)
class Span:
    symptom: str
    start: int
    end: int


@dataclass(frozen=True)
class PatientRecord:
    id: str
    tabular: dict[str, str]
    symptoms: dict[str, str] | None = None
    embedding_row: int | None = None
    note: str | None = None
    spans: tuple[Span, ...] | None = None
    mentions: dict[str, bool] | None = None

    def value(self, name: str) -> str:
        if name in self.tabular:
            return self.tabular[name]
        if self.symptoms and name in self.symptoms:
            return self.symptoms[name]
        raise DataError(f"record {self.id} does not assign {name}")


@dataclass(frozen=True)
class SplitPlan:
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    sizes: tuple[int, ...]
    seeds: tuple[int, ...]
    plan_seed: int = 0

    def subsample(self, n: int, seed: int) -> tuple[str, ...]:
        """Fresh draw of n training ids for each (n, seed); not nested."""
        if n > len(self.train_ids):
            raise DataError(f"insufficient-data: subsample {n} from {len(self.train_ids)}")
        rng = np.random.default_rng((self.plan_seed, n, seed))
        take = rng.choice(len(self.train_ids), size=n, replace=False)
        return tuple(self.train_ids[i] for i in take)


SUBSAMPLE_SIZES = (100, 187, 350, 654, 1223, 2287, 4278, 8000)
TRAIN_CAP = 8000
TEST_CAP = 2000


def make_splits(records: Sequence[PatientRecord], plan_seed: int = 0,
                sizes: Sequence[int] = SUBSAMPLE_SIZES, n_seeds: int = 20) -> SplitPlan:
    total = len(records)
    if total < 2:
        raise DataError("insufficient-data: need at least 2 records")
    test_n = min(TEST_CAP, total // 5)
    train_n = min(TRAIN_CAP, total - test_n)
    rng = np.random.default_rng(plan_seed)
    perm = rng.permutation(total)
    ids = [records[i].id for i in perm]
    train = tuple(ids[:train_n])
    test = tuple(ids[train_n : train_n + test_n])
    kept = tuple(s for s in sizes if s <= train_n)
    if not kept:
        raise DataError(f"insufficient-data: no subsample size fits train size {train_n}")
    return SplitPlan(train, test, kept, tuple(range(n_seeds)), plan_seed)


def by_id(records: Sequence[PatientRecord]) -> dict[str, PatientRecord]:
    return {r.id: r for r in records}


def columns_for(records: Sequence[PatientRecord], variables: Sequence[VariableSpec]) -> dict[str, np.ndarray]:
    """Value-index column per variable, in record order."""
    return {
        v.name: np.array([v.index_of(r.value(v.name)) for r in records], dtype=np.intp)
        for v in variables
    }


# -- loading ------------------------------------------------------------------


def _read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"empty CSV: {path}")
    return [h.strip().lower() for h in rows[0]], rows[1:]


def load_dataset(
    tabular_csv,
    net: NetworkSpec,
    embeddings_file=None,
    mentions_csv=None,
    spans_file=None,
    notes_file=None,
) -> tuple[list[PatientRecord], EmbeddingMatrix | None]:
    """Load records against a network profile; optional files stay optional.

    The tabular CSV needs an ``id`` column plus one column per tabular
    variable (case-insensitive header); symptom columns are read when present
    (training data) and may be omitted (test-time inference). A ``note``
    column is accepted; a notes JSON-lines file overrides it by id.
    """
    header, rows = _read_csv(tabular_csv)
    if "id" not in header:
        raise DataError("header-mismatch: no id column")
    tab_vars = [net.variable(n) for n in net.tabular_variables]
    sym_vars = [net.variable(n) for n in net.symptom_variables]
    missing = [v.name for v in tab_vars if v.name.lower() not in header]
    if missing:
        raise DataError(f"header-mismatch: missing columns {missing}")
    col = {name: header.index(name) for name in header}
    has_symptoms = all(v.name.lower() in header for v in sym_vars)

    notes: dict[str, str] = {}
    if notes_file:
        for line in Path(notes_file).read_text(encoding="utf-8").splitlines():
            if line.strip():
                doc = json.loads(line)
                notes[str(doc["id"])] = doc["text"]

    spans: dict[str, list[Span]] = {}
    if spans_file:
        for line in Path(spans_file).read_text(encoding="utf-8").splitlines():
            if line.strip():
                doc = json.loads(line)
                spans.setdefault(str(doc["id"]), []).append(
                    Span(doc["symptom"], int(doc["start"]), int(doc["end"]))
                )

    mentions: dict[str, dict[str, bool]] = {}
    if mentions_csv:
        m_header, m_rows = _read_csv(mentions_csv)
        if "id" not in m_header:
            raise DataError("header-mismatch: mentions CSV needs an id column")
        for row in m_rows:
            rid = row[m_header.index("id")].strip()
            mentions[rid] = {
                name: row[i].strip() == "1"
                for i, name in enumerate(m_header)
                if name != "id"
            }

    records: list[PatientRecord] = []
    seen_ids = set()
    for row in rows:
        rid = row[col["id"]].strip()
        if rid in seen_ids:
            raise DataError(f"id-misalignment: duplicate id {rid}")
        seen_ids.add(rid)

        def cell(v: VariableSpec) -> str:
            raw = row[col[v.name.lower()]].strip()
            try:
                v.index_of(raw)
            except ValueError as exc:
                raise DataError(f"id {rid}: {exc}") from None
            return raw

        tabular = {v.name: cell(v) for v in tab_vars}
        symptoms = {v.name: cell(v) for v in sym_vars} if has_symptoms else None
        note = notes.get(rid)
        if note is None and "note" in col:
            note = row[col["note"]]
        rec_spans = tuple(spans[rid]) if rid in spans else None
        if rec_spans and note is not None:
            for sp in rec_spans:
                if not (0 <= sp.start <= sp.end <= len(note)):
                    raise DataError(f"span out of note bounds for id {rid}")
        records.append(
            PatientRecord(
                id=rid,
                tabular=tabular,
                symptoms=symptoms,
                note=note,
                spans=rec_spans,
                mentions=mentions.get(rid),
            )
        )

    emb = None
    if embeddings_file:
        emb = read_embeddings(embeddings_file)
        if len(emb.ids) != len(records):
            raise DataError(
                f"id-misalignment: {len(emb.ids)} embedding rows, {len(records)} records"
            )
        row_of = {i: k for k, i in enumerate(emb.ids)}
        aligned = []
        for r in records:
            if r.id not in row_of:
                raise DataError(f"id-misalignment: no embedding row for id {r.id}")
            aligned.append(replace(r, embedding_row=row_of[r.id]))
        records = aligned
    return records, emb


def save_dataset(records: Sequence[PatientRecord], net: NetworkSpec, path) -> None:
    """Write the tabular CSV (plus symptom columns when present)."""
    tab = list(net.tabular_variables)
    sym = list(net.symptom_variables) if records and records[0].symptoms else []
    has_note = any(r.note is not None for r in records)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id"] + tab + sym + (["note"] if has_note else []))
    for r in records:
        row = [r.id] + [r.tabular[v] for v in tab] + [r.symptoms[v] for v in sym]
        if has_note:
            row.append(r.note or "")
        writer.writerow(row)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def save_mentions(records: Sequence[PatientRecord], symptoms: Sequence[str], path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id"] + list(symptoms))
    for r in records:
        writer.writerow([r.id] + [int(bool(r.mentions and r.mentions.get(s))) for s in symptoms])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


# -- note masking --------------------------------------------------------------

_BOUNDARY = re.compile(r"[.!?]|\n\s*\n")


def sentence_bounds(text: str) -> list[tuple[int, int]]:
    """Half-open sentence intervals; boundaries are '.', '!', '?' and blank lines."""
    bounds = []
    start = 0
    for m in _BOUNDARY.finditer(text):
        bounds.append((start, m.end()))
        start = m.end()
    if start < len(text):
        bounds.append((start, len(text)))
    return bounds


def _span_coin(seed: int, record_id: str, span_index: int) -> float:
    # reproducible from (seed, record id, span index) alone
    key = (seed, zlib.crc32(str(record_id).encode("utf-8")), span_index)
    return float(np.random.default_rng(key).random())


def mask_notes(
    records: Sequence[PatientRecord], drop_prob: float = 0.5, seed: int = 0
) -> tuple[list[PatientRecord], list[dict]]:
    """Drop each span-containing sentence with probability drop_prob.

    Tabular values and labels are untouched. Span offsets are recomputed for
    the surviving text, mentions flags are refreshed from surviving spans, and
    a drop log records every coin flip.
    """
    if not (0 <= drop_prob <= 1):
        raise DataError(f"drop probability {drop_prob} outside [0, 1]")
    out: list[PatientRecord] = []
    log: list[dict] = []
    for r in records:
        if r.note is None or r.spans is None:
            raise DataError(f"missing-spans: record {r.id} has no note/span data")
        bounds = sentence_bounds(r.note)

        def sentence_of(span: Span) -> int:
            for k, (a, b) in enumerate(bounds):
                if a <= span.start < max(b, a + 1):
                    return k
            return len(bounds) - 1

        doomed: set[int] = set()
        for j, span in enumerate(r.spans):
            dropped = _span_coin(seed, r.id, j) < drop_prob
            if dropped:
                doomed.add(sentence_of(span))
            log.append({
                "id": r.id, "span_index": j, "symptom": span.symptom,
                "dropped": dropped,
            })

        keep = [k for k in range(len(bounds)) if k not in doomed]
        new_note = "".join(r.note[a:b] for k, (a, b) in enumerate(bounds) if k in keep)
        shift = {}
        offset = 0
        for k in keep:
            a, b = bounds[k]
            shift[k] = a - offset
            offset += b - a
        new_spans = tuple(
            Span(sp.symptom, sp.start - shift[s], sp.end - shift[s])
            for sp, s in ((sp, sentence_of(sp)) for sp in r.spans)
            if s in shift
        )
        new_mentions = None
        if r.mentions is not None:
            surviving = {sp.symptom for sp in new_spans}
            new_mentions = {s: (s in surviving) and m for s, m in r.mentions.items()}
            new_mentions.update({s: True for s in surviving if s not in new_mentions})
        out.append(replace(r, note=new_note, spans=new_spans, mentions=new_mentions))
    return out, log


# -- synthetic generation -------------------------------------------------------


@dataclass(frozen=True)
class ChannelConfig:
    """Simulated note channel: mention coin + concentrated probability draw."""

    rho_present: float = 0.8  # P(mention | symptom present)
    rho_absent: float = 0.05  # P(mention | symptom absent)
    noise: float = 0.1  # mass spread away from the target value

    def __post_init__(self):
        ok = 0 <= self.rho_present <= 1 and 0 <= self.rho_absent <= 1 and 0 <= self.noise < 1
        if not ok:
            raise DataError("invalid-channel-params")


def sample_records(net: NetworkSpec, n: int, seed: int) -> list[PatientRecord]:
    """Ancestral sampling in topological order from materialized CPT rows."""
    rng = np.random.default_rng(seed)
    order = net.topological_order()
    symptoms = set(net.symptom_variables)
    idx: dict[str, np.ndarray] = {}
    for name in order:
        parents = net.parents(name)
        table = net.table_for(name)
        if parents:
            cards = tuple(net.variable(p).cardinality for p in parents)
            rows = np.ravel_multi_index([idx[p] for p in parents], cards)
        else:
            rows = np.zeros(n, dtype=np.intp)
        u = rng.random(n)
        cum = np.cumsum(table[rows], axis=1)
        idx[name] = np.minimum((u[:, None] > cum).sum(axis=1), table.shape[1] - 1)

    width = len(str(max(n, 1)))
    records = []
    for i in range(n):
        tabular = {
            v: net.variable(v).domain[idx[v][i]] for v in net.tabular_variables
        }
        labels = {s: net.variable(s).domain[idx[s][i]] for s in symptoms}
        records.append(PatientRecord(id=f"p{i:0{width}d}", tabular=tabular, symptoms=labels))
    return records


def draw_channel(
    records: Sequence[PatientRecord],
    net: NetworkSpec,
    channel: ChannelConfig,
    seed: int,
) -> tuple[list[PatientRecord], dict[str, np.ndarray]]:
    """Draw mentions flags and simulated classifier probabilities per symptom.

    When mentioned, the probability row concentrates on the true value; when
    not mentioned, on the absent value (domain index 0) regardless of truth.
    noise=0 makes the rows one-hot.
    """
    n = len(records)
    out_probs: dict[str, np.ndarray] = {}
    mention_flags: dict[str, np.ndarray] = {}
    for s_i, s in enumerate(net.symptom_variables):
        var = net.variable(s)
        rng = np.random.default_rng((seed, s_i))
        truth = np.array([var.index_of(r.value(s)) for r in records], dtype=np.intp)
        present = truth > 0
        p_mention = np.where(present, channel.rho_present, channel.rho_absent)
        mentioned = rng.random(n) < p_mention
        target = np.where(mentioned, truth, 0)
        eps = rng.random(n) * channel.noise
        probs = np.empty((n, var.cardinality))
        probs[:] = (eps / (var.cardinality - 1))[:, None]
        probs[np.arange(n), target] = 1.0 - eps
        out_probs[s] = probs
        mention_flags[s] = mentioned

    updated = [
        replace(r, mentions={s: bool(mention_flags[s][i]) for s in net.symptom_variables})
        for i, r in enumerate(records)
    ]
    return updated, out_probs


def generate_synthetic(
    net: NetworkSpec, n: int, seed: int, channel: ChannelConfig = ChannelConfig()
) -> tuple[list[PatientRecord], dict[str, np.ndarray]]:
    """Sampled records (with mentions flags) plus simulated text probabilities."""
    records = sample_records(net, n, seed)
    return draw_channel(records, net, channel, seed)


def save_channel(probs: dict[str, np.ndarray], records: Sequence[PatientRecord],
                 net: NetworkSpec, path) -> None:
    """Channel CSV: id, then one probability column per (symptom, value)."""
    symptoms = list(net.symptom_variables)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["id"]
    for s in symptoms:
        header += [f"{s}:{d}" for d in net.variable(s).domain]
    writer.writerow(header)
    for i, r in enumerate(records):
        row = [r.id]
        for s in symptoms:
            row += [f"{p:.12g}" for p in probs[s][i]]
        writer.writerow(row)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def load_channel(path, net: NetworkSpec, records: Sequence[PatientRecord]) -> dict[str, np.ndarray]:
    header, rows = _read_csv(path)
    if "id" not in header:
        raise DataError("header-mismatch: channel CSV needs an id column")
    want = {r.id: i for i, r in enumerate(records)}
    probs = {
        s: np.zeros((len(records), net.variable(s).cardinality))
        for s in net.symptom_variables
    }
    filled = 0
    for row in rows:
        rid = row[header.index("id")].strip()
        if rid not in want:
            continue
        i = want[rid]
        filled += 1
        for s in net.symptom_variables:
            var = net.variable(s)
            for j, d in enumerate(var.domain):
                key = f"{s}:{d}".lower()
                if key not in header:
                    raise DataError(f"header-mismatch: channel CSV missing {key}")
                probs[s][i, j] = float(row[header.index(key)])
    if filled != len(records):
        raise DataError(f"id-misalignment: channel rows cover {filled} of {len(records)} records")
    return probs
