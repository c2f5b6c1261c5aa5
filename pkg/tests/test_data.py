"""Dataset IO, split plans, note masking, and the synthetic channel."""
import numpy as np
import pytest

from bnfuse.data import (
    ChannelConfig,
    DataError,
    PatientRecord,
    Span,
    draw_channel,
    generate_synthetic,
    load_channel,
    load_dataset,
    make_splits,
    mask_notes,
    sample_records,
    save_channel,
    save_dataset,
    save_mentions,
    sentence_bounds,
)
from bnfuse.network import NetworkSpec, TableCpd, VariableSpec
from bnfuse.simsum import simsum_profile
from bnfuse.text import EmbeddingMatrix, write_embeddings


def tiny_net() -> NetworkSpec:
    return NetworkSpec(
        (
            VariableSpec("a", ("no", "yes"), "background"),
            VariableSpec("b", ("no", "yes"), "symptom"),
            VariableSpec("f", ("none", "low", "high"), "symptom"),
        ),
        (("a", "b"), ("a", "f")),
        {
            "a": TableCpd([[0.7, 0.3]]),
            "b": TableCpd([[0.9, 0.1], [0.2, 0.8]]),
            "f": TableCpd([[0.6, 0.3, 0.1], [0.2, 0.5, 0.3]]),
        },
    )


# ---------------------------------------------------------------- load / save


def test_dataset_roundtrip_bit_exact(tmp_path):
    net = simsum_profile()
    records, _ = generate_synthetic(net, 25, seed=5)
    first = tmp_path / "a.csv"
    second = tmp_path / "b.csv"
    save_dataset(records, net, first)
    loaded, emb = load_dataset(first, net)
    assert emb is None
    save_dataset(loaded, net, second)
    assert first.read_bytes() == second.read_bytes()
    for want, got in zip(records, loaded):
        assert got.id == want.id
        assert got.tabular == want.tabular
        assert got.symptoms == want.symptoms


def test_mentions_roundtrip(tmp_path):
    net = simsum_profile()
    records, _ = generate_synthetic(net, 10, seed=2)
    data = tmp_path / "d.csv"
    marks = tmp_path / "m.csv"
    save_dataset(records, net, data)
    save_mentions(records, net.symptom_variables, marks)
    loaded, _ = load_dataset(data, net, mentions_csv=marks)
    for want, got in zip(records, loaded):
        assert got.mentions == want.mentions


def test_load_without_symptom_columns(tmp_path):
    # inference-time data carries only tabular columns
    net = tiny_net()
    path = tmp_path / "d.csv"
    path.write_text("id,a\np0,yes\np1,no\n")
    records, _ = load_dataset(path, net)
    assert records[0].symptoms is None
    assert records[0].tabular == {"a": "yes"}


def test_load_rejects_missing_columns(tmp_path):
    net = tiny_net()
    no_id = tmp_path / "x.csv"
    no_id.write_text("a,b,f\nyes,no,low\n")
    with pytest.raises(DataError, match="header-mismatch"):
        load_dataset(no_id, net)
    missing = tmp_path / "y.csv"
    missing.write_text("id,b,f\np0,no,low\n")
    with pytest.raises(DataError, match="header-mismatch"):
        load_dataset(missing, net)


def test_load_rejects_out_of_domain_value(tmp_path):
    net = simsum_profile()
    records, _ = generate_synthetic(net, 3, seed=0)
    path = tmp_path / "d.csv"
    save_dataset(records, net, path)
    text = path.read_text()
    row = text.splitlines()[1].split(",")
    row[text.splitlines()[0].split(",").index("days")] = "16"
    bad = tmp_path / "bad.csv"
    bad.write_text(text.splitlines()[0] + "\n" + ",".join(row) + "\n")
    with pytest.raises(DataError):
        load_dataset(bad, net)


def test_load_rejects_duplicate_ids(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("id,a\np0,yes\np0,no\n")
    with pytest.raises(DataError, match="id-misalignment"):
        load_dataset(path, tiny_net())


def test_embedding_alignment(tmp_path):
    net = tiny_net()
    data = tmp_path / "d.csv"
    data.write_text("id,a\np0,yes\np1,no\np2,no\n")
    rows = np.arange(12, dtype=np.float32).reshape(3, 4)
    emb_path = tmp_path / "e.bin"
    # rows stored in a different order than the CSV
    write_embeddings(emb_path, EmbeddingMatrix(("p2", "p0", "p1"), rows))
    records, emb = load_dataset(data, net, embeddings_file=emb_path)
    assert [r.embedding_row for r in records] == [1, 2, 0]
    assert np.array_equal(emb.rows[records[0].embedding_row], rows[1])


def test_embedding_misalignment_rejected(tmp_path):
    net = tiny_net()
    data = tmp_path / "d.csv"
    data.write_text("id,a\np0,yes\np1,no\n")
    short = tmp_path / "short.bin"
    write_embeddings(short, EmbeddingMatrix(("p0",), np.zeros((1, 4), np.float32)))
    with pytest.raises(DataError, match="id-misalignment"):
        load_dataset(data, net, embeddings_file=short)
    wrong = tmp_path / "wrong.bin"
    write_embeddings(wrong, EmbeddingMatrix(("p0", "px"), np.zeros((2, 4), np.float32)))
    with pytest.raises(DataError, match="id-misalignment"):
        load_dataset(data, net, embeddings_file=wrong)


# ---------------------------------------------------------------- splits


def _dummy_records(n):
    return [PatientRecord(id=f"r{i:04d}", tabular={}) for i in range(n)]


def test_make_splits_caps_and_disjointness():
    plan = make_splits(_dummy_records(1000), plan_seed=0, n_seeds=7)
    assert len(plan.test_ids) == 200  # total // 5 under the cap
    assert len(plan.train_ids) == 800
    assert not set(plan.train_ids) & set(plan.test_ids)
    assert plan.sizes == (100, 187, 350, 654)  # only sizes that fit the train pool
    assert plan.seeds == tuple(range(7))


def test_make_splits_deterministic():
    records = _dummy_records(300)
    a = make_splits(records, plan_seed=4)
    b = make_splits(records, plan_seed=4)
    c = make_splits(records, plan_seed=5)
    assert a == b
    assert a.train_ids != c.train_ids


def test_make_splits_rejects_tiny_input():
    with pytest.raises(DataError, match="insufficient-data"):
        make_splits(_dummy_records(1))
    with pytest.raises(DataError, match="insufficient-data"):
        make_splits(_dummy_records(50), sizes=(100,))


def test_subsample_fresh_per_cell():
    plan = make_splits(_dummy_records(1000), plan_seed=0)
    s_a = plan.subsample(100, 0)
    assert len(s_a) == 100 and len(set(s_a)) == 100
    assert set(s_a) <= set(plan.train_ids)
    assert plan.subsample(100, 0) == s_a
    assert plan.subsample(100, 1) != s_a
    # draws are independent across sizes, not nested prefixes
    assert not set(s_a) <= set(plan.subsample(187, 0))
    with pytest.raises(DataError, match="insufficient-data"):
        plan.subsample(801, 0)


# ---------------------------------------------------------------- masking


WORDS = {"cough": "Cough", "fever": "Fever", "pain": "Pain", "nasal": "Nasal"}


def _noted_record(i: int) -> PatientRecord:
    note = "Cough noted today. Fever was high. Pain in chest. Nasal discharge seen."
    spans = tuple(
        Span(sym, note.index(word), note.index(word) + len(word))
        for sym, word in WORDS.items()
    )
    return PatientRecord(
        id=f"n{i:03d}",
        tabular={"a": "yes"},
        symptoms={"b": "no"},
        note=note,
        spans=spans,
        mentions={sym: True for sym in WORDS},
    )


def test_mask_drop_rate_and_span_integrity():
    records = [_noted_record(i) for i in range(250)]  # 1000 spans in total
    masked, log = mask_notes(records, drop_prob=0.5, seed=0)
    rate = sum(e["dropped"] for e in log) / len(log)
    assert len(log) == 1000
    assert 0.45 <= rate <= 0.55
    for rec in masked:
        for sp in rec.spans:
            assert rec.note[sp.start : sp.end] == WORDS[sp.symptom]
        assert rec.mentions == {s: s in {sp.symptom for sp in rec.spans} for s in WORDS}
        assert rec.tabular == {"a": "yes"} and rec.symptoms == {"b": "no"}


def test_mask_deterministic_and_keyed_by_record():
    records = [_noted_record(i) for i in range(30)]
    once, log_once = mask_notes(records, drop_prob=0.5, seed=3)
    twice, log_twice = mask_notes(records, drop_prob=0.5, seed=3)
    assert [r.note for r in once] == [r.note for r in twice]
    assert log_once == log_twice
    other, _ = mask_notes(records, drop_prob=0.5, seed=4)
    assert [r.note for r in once] != [r.note for r in other]
    # coins depend on (seed, id, span index) only: a subset masks identically
    subset, _ = mask_notes(records[10:20], drop_prob=0.5, seed=3)
    assert [r.note for r in subset] == [r.note for r in once[10:20]]


def test_mask_probability_edges():
    records = [_noted_record(i) for i in range(5)]
    kept, _ = mask_notes(records, drop_prob=0.0, seed=0)
    assert all(k.note == r.note and k.spans == r.spans for k, r in zip(kept, records))
    assert all(k.mentions == r.mentions for k, r in zip(kept, records))
    gone, log = mask_notes(records, drop_prob=1.0, seed=0)
    assert all(e["dropped"] for e in log)
    assert all(g.note == "" and g.spans == () for g in gone)
    assert all(set(g.mentions.values()) == {False} for g in gone)
    with pytest.raises(DataError):
        mask_notes(records, drop_prob=1.2)


def test_mask_recomputes_offsets():
    note = "Bad cough today. Fever absent. Follow up."
    rec = PatientRecord(
        id="h1",
        tabular={},
        note=note,
        spans=(
            Span("cough", note.index("cough"), note.index("cough") + 5),
            Span("fever", note.index("Fever"), note.index("Fever") + 5),
        ),
        mentions={"cough": True, "fever": True},
    )
    for seed in range(200):
        masked, log = mask_notes([rec], drop_prob=0.5, seed=seed)
        if log[0]["dropped"] and not log[1]["dropped"]:
            break
    else:
        pytest.fail("no seed dropped exactly the first sentence")
    got = masked[0]
    assert got.note == " Fever absent. Follow up."
    assert len(got.spans) == 1
    assert got.note[got.spans[0].start : got.spans[0].end] == "Fever"
    assert got.mentions == {"cough": False, "fever": True}


def test_mask_requires_note_and_spans():
    with pytest.raises(DataError, match="missing-spans"):
        mask_notes([PatientRecord(id="x", tabular={})])


def test_sentence_bounds_cover_text():
    text = "One. Two!\n\nThree"
    bounds = sentence_bounds(text)
    assert "".join(text[a:b] for a, b in bounds) == text
    assert len(bounds) == 4  # '.', '!', blank line, trailing fragment
    assert sentence_bounds("") == []


# ---------------------------------------------------------------- synthetic


def test_sample_records_match_cpt_frequencies():
    net = tiny_net()
    records = sample_records(net, 4000, seed=3)
    a_yes = np.array([r.value("a") == "yes" for r in records])
    sigma = 3 * np.sqrt(0.3 * 0.7 / 4000)
    assert abs(a_yes.mean() - 0.3) < sigma

    b_given = np.array([r.value("b") == "yes" for r in records])[a_yes]
    sigma = 3 * np.sqrt(0.8 * 0.2 / a_yes.sum())
    assert abs(b_given.mean() - 0.8) < sigma

    f_low = np.array([r.value("f") == "low" for r in records])[~a_yes]
    sigma = 3 * np.sqrt(0.3 * 0.7 / (~a_yes).sum())
    assert abs(f_low.mean() - 0.3) < sigma


def test_sample_records_deterministic():
    net = tiny_net()
    a = sample_records(net, 50, seed=9)
    b = sample_records(net, 50, seed=9)
    assert [(r.tabular, r.symptoms) for r in a] == [(r.tabular, r.symptoms) for r in b]


def test_channel_noiseless_is_one_hot():
    net = tiny_net()
    records = sample_records(net, 300, seed=1)
    updated, probs = draw_channel(
        records, net, ChannelConfig(rho_present=1.0, rho_absent=0.0, noise=0.0), seed=7
    )
    for s in net.symptom_variables:
        var = net.variable(s)
        truth = np.array([var.index_of(r.value(s)) for r in records])
        mentioned = np.array([u.mentions[s] for u in updated])
        assert np.array_equal(mentioned, truth > 0)
        target = np.where(mentioned, truth, 0)
        want = np.zeros((len(records), var.cardinality))
        want[np.arange(len(records)), target] = 1.0
        assert np.array_equal(probs[s], want)


def test_channel_unmentioned_present_rate():
    # rho_present = 0.8 leaves about a fifth of true positives unmentioned
    net = tiny_net()
    records = sample_records(net, 3000, seed=2)
    updated, _ = draw_channel(records, net, ChannelConfig(rho_present=0.8), seed=11)
    present = np.array([r.value("b") == "yes" for r in records])
    mentioned = np.array([u.mentions["b"] for u in updated])
    silent = (~mentioned[present]).mean()
    assert abs(silent - 0.2) < 3 * np.sqrt(0.2 * 0.8 / present.sum())


def test_channel_rows_normalized_and_deterministic():
    net = tiny_net()
    records = sample_records(net, 40, seed=4)
    _, probs_a = draw_channel(records, net, ChannelConfig(), seed=5)
    _, probs_b = draw_channel(records, net, ChannelConfig(), seed=5)
    _, probs_c = draw_channel(records, net, ChannelConfig(), seed=6)
    for s, block in probs_a.items():
        assert np.allclose(block.sum(axis=1), 1.0, atol=1e-12)
        assert np.array_equal(block, probs_b[s])
        assert not np.array_equal(block, probs_c[s])


def test_channel_roundtrip_and_misalignment(tmp_path):
    net = tiny_net()
    records, probs = generate_synthetic(net, 20, seed=8)
    path = tmp_path / "ch.csv"
    save_channel(probs, records, net, path)
    loaded = load_channel(path, net, records)
    for s in probs:
        assert np.allclose(loaded[s], probs[s], atol=1e-11)
    # row order in the file does not matter: match by id
    lines = path.read_text().splitlines()
    shuffled = "\n".join([lines[0]] + lines[:0:-1]) + "\n"
    path.write_text(shuffled)
    loaded = load_channel(path, net, records)
    assert np.allclose(loaded["f"], probs["f"], atol=1e-11)

    extra = records + [PatientRecord(id="ghost", tabular={"a": "no"})]
    with pytest.raises(DataError, match="id-misalignment"):
        load_channel(path, net, extra)
    clipped = "\n".join(
        ",".join(cell for i, cell in enumerate(row.split(",")) if i != 2)
        for row in lines
    )
    path.write_text(clipped + "\n")
    with pytest.raises(DataError, match="header-mismatch"):
        load_channel(path, net, records)


def test_channel_param_validation():
    with pytest.raises(DataError, match="invalid-channel-params"):
        ChannelConfig(rho_present=1.2)
    with pytest.raises(DataError, match="invalid-channel-params"):
        ChannelConfig(noise=1.0)
    with pytest.raises(DataError, match="invalid-channel-params"):
        ChannelConfig(rho_absent=-0.1)
