"""End-to-end on synthetic data: generate, fit, fuse, score.

The respiratory-clinic profile defines the ground truth. We sample patients
from it, simulate a text channel whose reliability depends on whether a
symptom was actually mentioned, fit a fresh network on a 350-patient
training cell, estimate consistency tables, and score all five predictor
variants on the held-out test split. The punchline is the subset table at
the end: the text-only model collapses exactly where the note is silent,
the network does not, and the fused variants inherit the better half of
each.

Takes a few seconds. Run: python3 demos/03_end_to_end.py
"""

import numpy as np

from bnfuse import (
    FitConfig,
    brier,
    estimate_consistency_cpt,
    fit_network,
    generate_synthetic,
    make_splits,
    predict_variants,
    simsum_profile,
    simsum_template,
    subset_split,
)
from bnfuse.pipeline import BN_VARIANTS, batch_posteriors, label_indices

# -- data ------------------------------------------------------------------

truth = simsum_profile()
records, channel = generate_synthetic(truth, n=1200, seed=5)
plan = make_splits(records, plan_seed=0, sizes=(350,), n_seeds=1)

by_id = {r.id: r for r in records}
row_of = {r.id: i for i, r in enumerate(records)}
train = [by_id[i] for i in plan.subsample(350, 0)]
test = [by_id[i] for i in plan.test_ids]


def text_block(subset):
    rows = [row_of[r.id] for r in subset]
    return {s: channel[s][rows] for s in channel}


print(f"{len(records)} patients sampled; training on {len(train)}, testing on {len(test)}")

# -- fit and estimate consistency tables on the training cell ---------------

fitted = fit_network(train, simsum_template(), FitConfig(seed=0))

text_tr = text_block(train)
labels_tr = label_indices(fitted, train)
bn_tr = batch_posteriors(fitted, train)
vbn_tr = batch_posteriors(fitted, train, virtual=text_tr)

cpts, virtual_cpts = {}, {}
for s in fitted.symptom_variables:
    dom = fitted.variable(s).domain
    cpts[s] = estimate_consistency_cpt(bn_tr[s], text_tr[s], labels_tr[s], s, dom)
    virtual_cpts[s] = estimate_consistency_cpt(vbn_tr[s], text_tr[s], labels_tr[s], s, dom)

# -- predict every variant on the test split --------------------------------

tab_names = fitted.tabular_variables
symptoms = fitted.symptom_variables
text_te = text_block(test)
labels_te = label_indices(fitted, test)

preds = {v: {s: [] for s in symptoms} for v in BN_VARIANTS}
for i, r in enumerate(test):
    tab = {v: r.tabular[v] for v in tab_names}
    fp = predict_variants(
        BN_VARIANTS, fitted, tab,
        {s: text_te[s][i] for s in symptoms},
        cpts, virtual_cpts,
    )
    for v in BN_VARIANTS:
        for s in symptoms:
            preds[v][s].append(fp.variant(v)[s].probs)

print("\nmean test Brier score by variant (lower is better):")
pooled = {}
for v in BN_VARIANTS:
    per = [brier(np.stack(preds[v][s]), labels_te[s]) for s in symptoms]
    pooled[v] = float(np.mean(per))
    print(f"  {v:<12} {pooled[v]:.4f}")

# -- where each predictor earns its keep ------------------------------------

s = "cough"
present = labels_te[s] > 0
mentioned = np.array([bool(r.mentions and r.mentions.get(s)) for r in test])
parts = subset_split(present, mentioned)

print(f"\nBrier on '{s}' by (present, mentioned in note) subset:")
print(f"  {'subset':<28} {'n':>4}  {'bn-only':>8} {'text-only':>9} {'v-c-bn-text':>11}")
for (p, m), idx in sorted(parts.items()):
    if len(idx) == 0:
        continue
    row = [
        brier(np.stack(preds[v][s])[idx], labels_te[s][idx])
        for v in ("bn-only", "text-only", "v-c-bn-text")
    ]
    name = f"present={p!s:<5} mentioned={m!s:<5}"
    print(f"  {name:<28} {len(idx):>4}  {row[0]:>8.4f} {row[1]:>9.4f} {row[2]:>11.4f}")

print(
    "\nWhen a present symptom goes unmentioned, the note carries no signal and"
    "\nthe text-only model pays dearly for its confidence; the network, reasoning"
    "\nfrom the tabular variables, does not. The fused variant stays close to the"
    "\ntext model wherever the note speaks and hedges toward the network where it"
    "\nis silent -- trading a little accuracy on the easy rows for escape from"
    "\nthe catastrophic one."
)
