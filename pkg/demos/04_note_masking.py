"""Masking symptom sentences to starve the text channel of signal.

Notes mention symptoms in marked character spans. The masker drops each
span-bearing sentence with a chosen probability — reproducibly, keyed by
(seed, record id, span index) — then rewrites the surviving spans' offsets
so they still select the same characters, and refreshes the per-symptom
mention flags. Downstream, a record whose only mention was dropped looks
to a text classifier like a patient whose note never brought it up.

Run: python3 demos/04_note_masking.py
"""

from bnfuse import PatientRecord, Span, mask_notes


def noted(rid, text, *mentions):
    """Build a record, locating each (symptom, phrase) span by search."""
    spans = []
    for symptom, phrase in mentions:
        start = text.index(phrase)
        spans.append(Span(symptom, start, start + len(phrase)))
    names = {s for s, _ in mentions}
    return PatientRecord(
        id=rid,
        tabular={},
        note=text,
        spans=tuple(spans),
        mentions={s: s in names for s in ("cough", "dyspnea", "fever", "nasal", "pain")},
    )


records = [
    noted(
        "p1",
        "Severe cough for three days. Denies fever. Sleeping poorly.",
        ("cough", "cough"),
        ("fever", "fever"),
    ),
    noted(
        "p2",
        "Short of breath on stairs!\n\nNasal discharge noted. Advised rest.",
        ("dyspnea", "Short of breath"),
        ("nasal", "Nasal discharge"),
    ),
    noted(
        "p3",
        "Chest pain when breathing. No cough. Afebrile.",
        ("pain", "Chest pain"),
        ("cough", "cough"),  # a negated mention is still a mention
    ),
]

original_text = {
    (r.id, sp.symptom): r.note[sp.start : sp.end] for r in records for sp in r.spans
}

masked, log = mask_notes(records, drop_prob=0.5, seed=11)

for before, after in zip(records, masked):
    print(f"--- record {before.id} " + "-" * 45)
    print(f"before: {before.note!r}")
    print(f"after:  {after.note!r}")
    for sp in after.spans:
        got = after.note[sp.start : sp.end]
        # recomputed offsets still select the original phrase exactly
        assert got == original_text[(before.id, sp.symptom)]
        print(f"  span kept: {sp.symptom} -> {got!r} at {sp.start}:{sp.end}")
    flips = sorted(
        s for s in before.mentions if before.mentions[s] != after.mentions[s]
    )
    print(f"  mentions flipped off: {flips or '(none)'}\n")

dropped = sum(1 for e in log if e["dropped"])
print(f"drop log: {dropped}/{len(log)} spans dropped at p=0.5")

again, _ = mask_notes(records, drop_prob=0.5, seed=11)
assert [r.note for r in again] == [r.note for r in masked]
none_gone, _ = mask_notes(records, drop_prob=0.0, seed=11)
assert [r.note for r in none_gone] == [r.note for r in records]
print("same seed reproduces the identical masking; drop_prob=0 is the identity.")
