"""Evaluation: ranking and calibration metrics, subset analysis, significance.

Average precision sweeps a descending score threshold with tied scores
grouped into a single step: AP = sum_k (R_k - R_{k-1}) * P_k. The Brier score
follows two conventions on purpose: binary symptoms use the single-probability
mean squared error (range [0, 1]); multi-class uses the summed form
sum_c (p_c - 1[y=c])^2 (range [0, 2]). The one-sided Wilcoxon signed-rank
test drops zero differences, averages tied ranks, and uses the exact
permutation distribution up to n = 25 (normal approximation above).
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata


def average_precision(scores, labels) -> float:
    """Area under the precision-recall curve via a grouped threshold sweep."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    if len(s) != len(y):
        raise ValueError("length-mismatch")
    npos = int(np.sum(y == 1))
    if npos == 0 or npos == len(y):
        raise ValueError("single-class-labels")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    # indices where a block of equal scores ends
    block_end = np.flatnonzero(np.diff(s) != 0)
    block_end = np.append(block_end, len(s) - 1)
    tp = np.cumsum(y == 1)[block_end]
    seen = block_end + 1
    precision = tp / seen
    recall = tp / npos
    prev = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev) * precision))


def average_precision_macro(probs, labels) -> float:
    """Mean one-vs-rest AP over classes, scored by each class's probability."""
    p = np.asarray(probs, dtype=float)
    y = np.asarray(labels, dtype=np.intp)
    return float(np.mean([
        average_precision(p[:, c], (y == c).astype(int)) for c in range(p.shape[1])
    ]))


def brier(probs, labels) -> float:
    """Binary: mean (p_yes - y)^2 in [0,1]. Multi-class: mean summed squared
    error against the one-hot label, in [0,2]."""
    p = np.asarray(probs, dtype=float)
    y = np.asarray(labels, dtype=np.intp)
    if len(p) != len(y):
        raise ValueError("length-mismatch")
    if p.ndim != 2:
        raise ValueError("probs must be (n, classes)")
    if p.shape[1] == 2:
        return float(np.mean((p[:, 1] - (y == 1)) ** 2))
    onehot = np.zeros_like(p)
    onehot[np.arange(len(y)), y] = 1.0
    return float(np.mean(np.sum((p - onehot) ** 2, axis=1)))


def subset_split(present, mentioned) -> dict[tuple[bool, bool], np.ndarray]:
    """Partition indices by (symptom truly present, symptom mentioned in note)."""
    pr = np.asarray(present, dtype=bool)
    me = np.asarray(mentioned, dtype=bool)
    if pr.shape != me.shape:
        raise ValueError("length-mismatch")
    return {
        (a, b): np.flatnonzero((pr == a) & (me == b))
        for a in (True, False)
        for b in (True, False)
    }


def wilcoxon_one_sided(a, b) -> float:
    """P-value for the alternative 'a tends to exceed b', paired by position.

    Zero differences are dropped; |differences| are ranked with ties averaged;
    the statistic is the sum of ranks of positive differences. For n <= 25 the
    p-value counts sign assignments with an equal-or-larger statistic exactly
    (doubled ranks stay integral under tie averaging, enabling a subset-sum
    table); beyond that a tie-corrected normal approximation is used.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("length-mismatch")
    d = a - b
    d = d[d != 0]
    n = len(d)
    if n == 0:
        raise ValueError("all-zero-differences")
    ranks = rankdata(np.abs(d))
    w_plus = float(np.sum(ranks[d > 0]))

    if n <= 25:
        doubled = np.rint(2 * ranks).astype(np.int64)
        total = int(doubled.sum())
        counts = np.zeros(total + 1, dtype=np.float64)
        counts[0] = 1.0
        for r in doubled:  # subset-sum distribution over sign assignments
            counts[r:] += counts[:-r].copy() if r else counts.copy()
        target = int(math.ceil(round(2 * w_plus, 6)))
        tail = counts[target:].sum()
        return float(tail / 2.0**n)

    mean = n * (n + 1) / 4.0
    tie_sizes = np.unique(ranks, return_counts=True)[1]
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_sizes**3 - tie_sizes) / 48.0
    z = (w_plus - mean - 0.5) / math.sqrt(var)
    return float(0.5 * math.erfc(z / math.sqrt(2.0)))


def confidence(probs) -> float:
    """1 - H(p)/log K: one for a point mass, zero for the uniform vector."""
    p = np.asarray(probs, dtype=float)
    nz = p[p > 0]
    entropy = float(-np.sum(nz * np.log(nz)))
    return 1.0 - entropy / math.log(len(p))


@dataclass
class EvalReport:
    """Nested metric results: size -> variant -> symptom -> metric block.

    Each block holds mean/std over seeds plus optional subset and confidence
    entries; ``comparisons`` holds Wilcoxon p-values against the baseline.
    """

    metrics: dict = field(default_factory=dict)
    comparisons: dict = field(default_factory=dict)
    baseline: str = "text-only"
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "baseline": self.baseline,
                "comparisons": self.comparisons,
                "meta": self.meta,
                "metrics": self.metrics,
            },
            indent=1,
            sort_keys=True,
        )

    def sizes(self) -> list:
        return sorted(self.metrics, key=lambda s: int(s))

    def variants(self) -> list:
        names = []
        for per_variant in self.metrics.values():
            for v in per_variant:
                if v not in names:
                    names.append(v)
        return names

    def to_text(self, metric: str = "brier") -> str:
        """Aligned table per symptom: rows = variants, columns = sizes."""
        sizes = self.sizes()
        symptoms = sorted({
            s for per_variant in self.metrics.values()
            for per_symptom in per_variant.values() for s in per_symptom
        })
        out = io.StringIO()
        for symptom in symptoms:
            out.write(f"== {metric} :: {symptom} ==\n")
            header = ["variant"] + [str(s) for s in sizes]
            rows = []
            for variant in self.variants():
                cells = [variant]
                for size in sizes:
                    block = self.metrics.get(size, {}).get(variant, {}).get(symptom)
                    cells.append(
                        "-" if block is None or metric not in block
                        else f"{block[metric]['mean']:.4f}±{block[metric]['std']:.4f}"
                    )
                rows.append(cells)
            widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
            for r in [header] + rows:
                out.write("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() + "\n")
            out.write("\n")
        return out.getvalue()

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["size", "variant", "symptom", "metric", "mean", "std", "n_seeds"])
        for size in self.sizes():
            for variant, per_symptom in sorted(self.metrics[size].items()):
                for symptom, block in sorted(per_symptom.items()):
                    for metric, cell in sorted(block.items()):
                        if isinstance(cell, dict) and "mean" in cell:
                            writer.writerow([
                                size, variant, symptom, metric,
                                f"{cell['mean']:.10g}", f"{cell['std']:.10g}",
                                cell.get("n_seeds", ""),
                            ])
        return buf.getvalue()
