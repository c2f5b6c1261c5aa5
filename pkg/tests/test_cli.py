"""Command-line plumbing: config resolution, exit codes, end-to-end smoke."""
import json

import pytest

from bnfuse.cli import ConfigError, build_parser, main, resolve_config


def _resolve(argv):
    args = build_parser().parse_args(argv)
    return resolve_config(args.command, args)


# ---------------------------------------------------------------- config


def test_defaults_fill_in():
    cfg = _resolve(["generate", "--output_dir", "x"])
    assert cfg["n"] == 10000 and cfg["seed"] == 0
    assert cfg["channel"] == {"rho_present": 0.8, "rho_absent": 0.05, "noise": 0.1}
    assert len(cfg["_hash"]) == 16
    int(cfg["_hash"], 16)  # hex digest prefix


def test_flags_override_config_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"output_dir": "x", "n": 50, "seed": 3,
                                "channel": {"noise": 0.3}}))
    cfg = _resolve(["generate", "--config", str(path), "--n", "20"])
    assert cfg["n"] == 20  # flag wins
    assert cfg["seed"] == 3  # file wins over default
    assert cfg["channel"] == {"noise": 0.3, "rho_present": 0.8, "rho_absent": 0.05}


def test_dotted_flag_sets_nested_key():
    cfg = _resolve(["generate", "--output_dir", "x", "--channel.rho_present", "0.5"])
    assert cfg["channel"]["rho_present"] == 0.5
    assert cfg["channel"]["noise"] == 0.1


def test_flag_values_parsed_as_json():
    cfg = _resolve([
        "train", "--output_dir", "o", "--dataset", "data/file.csv",
        "--sizes", "[40,80]", "--gt_parameters", "true",
    ])
    assert cfg["sizes"] == [40, 80]
    assert cfg["gt_parameters"] is True
    assert cfg["dataset"] == "data/file.csv"  # non-JSON stays a plain string


def test_config_hash_tracks_content():
    a = _resolve(["generate", "--output_dir", "x"])
    b = _resolve(["generate", "--output_dir", "x"])
    c = _resolve(["generate", "--output_dir", "x", "--seed", "1"])
    assert a["_hash"] == b["_hash"]
    assert a["_hash"] != c["_hash"]


def test_unknown_config_key_rejected(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"output_dir": "x", "sample_count": 5}))
    with pytest.raises(ConfigError, match="unknown config key"):
        _resolve(["generate", "--config", str(path)])
    assert main(["generate", "--config", str(path)]) == 2


def test_unknown_flag_exits_two(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["generate", "--output_dir", "x", "--samples", "5"])
    assert exc.value.code == 2
    capsys.readouterr()


def test_missing_required_key_exits_two(capsys):
    assert main(["generate"]) == 2
    assert "output_dir" in capsys.readouterr().err


def test_missing_dataset_exits_three(tmp_path, capsys):
    rc = main([
        "train", "--output_dir", str(tmp_path), "--dataset",
        str(tmp_path / "absent.csv"), "--channel", str(tmp_path / "ch.csv"),
    ])
    assert rc == 3
    capsys.readouterr()


def test_bad_channel_params_exit_two(tmp_path, capsys):
    rc = main([
        "generate", "--output_dir", str(tmp_path), "--n", "5",
        "--channel.noise", "2.0",
    ])
    assert rc == 2
    assert "config error" in capsys.readouterr().err


def test_bad_shift_block_exits_two(tmp_path, capsys):
    rc = main([
        "evaluate", "--output_dir", str(tmp_path), "--dataset",
        str(tmp_path / "d.csv"), "--channel", str(tmp_path / "ch.csv"),
        "--shift", '{"rho_present": 0.5}',
    ])
    assert rc == 2
    assert "shift" in capsys.readouterr().err


# ---------------------------------------------------------------- end to end


SIZES = [40]
SEEDS = [0, 1, 2]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """generate -> train -> evaluate once; individual tests inspect the output."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    arts = root / "arts"
    assert main(["generate", "--output_dir", str(data), "--n", "150", "--seed", "1"]) == 0

    shared = {
        "output_dir": str(arts),
        "dataset": str(data / "dataset.csv"),
        "channel": str(data / "channel.csv"),
        "mentions": str(data / "mentions.csv"),
        "sizes": SIZES,
        "seeds": SEEDS,
    }
    train_cfg = root / "train.json"
    train_cfg.write_text(json.dumps({**shared, "fit": {"epochs": 120}}))
    assert main(["train", "--config", str(train_cfg)]) == 0

    eval_cfg = root / "eval.json"
    eval_cfg.write_text(json.dumps(shared))
    assert main(["evaluate", "--config", str(eval_cfg)]) == 0
    return root, data, arts


def test_generate_outputs(workspace):
    _, data, _ = workspace
    for name in ("dataset.csv", "channel.csv", "mentions.csv", "meta.json"):
        assert (data / name).exists()
    assert len((data / "dataset.csv").read_text().splitlines()) == 151
    meta = json.loads((data / "meta.json").read_text())
    assert meta["n"] == 150 and meta["channel"]["rho_present"] == 0.8


def test_train_writes_cell_artifacts(workspace):
    _, _, arts = workspace
    for seed in SEEDS:
        cell = arts / "40" / str(seed)
        for name in ("network.json", "consistency.json", "meta.json"):
            assert (cell / name).exists(), f"{cell / name}"
        cons = json.loads((cell / "consistency.json").read_text())
        assert set(cons) == {"plain", "virtual"}


def test_evaluate_report_shape(workspace):
    _, _, arts = workspace
    report = json.loads((arts / "report.json").read_text())
    assert report["baseline"] == "text-only"
    block = report["metrics"]["40"]
    assert set(block) == {
        "bn-only", "text-only", "c-bn-text", "v-bn-text", "v-c-bn-text"
    }
    symptoms = {"cough", "dyspnea", "fever", "nasal", "pain"}
    for variant, per_symptom in block.items():
        assert set(per_symptom) == symptoms, variant
        for cell in per_symptom.values():
            assert cell["brier"]["n_seeds"] == len(SEEDS)
            assert 0.0 <= cell["brier"]["mean"] <= 2.0
            assert "subsets" in cell
    assert (arts / "report.txt").read_text().startswith("== brier ::")
    assert (arts / "report.csv").read_text().startswith("size,variant,")


def test_rerun_is_byte_identical(workspace):
    root, _, arts = workspace
    net = (arts / "40" / "0" / "network.json").read_bytes()
    report = (arts / "report.json").read_bytes()
    assert main(["train", "--config", str(root / "train.json")]) == 0
    assert main(["evaluate", "--config", str(root / "eval.json")]) == 0
    assert (arts / "40" / "0" / "network.json").read_bytes() == net
    assert (arts / "report.json").read_bytes() == report


def test_parallel_train_matches_serial(workspace, tmp_path):
    root, _, arts = workspace
    cfg = json.loads((root / "train.json").read_text())
    cfg["output_dir"] = str(tmp_path / "arts2")
    cfg["seeds"] = [0, 1]
    cfg["jobs"] = 2
    alt = tmp_path / "train2.json"
    alt.write_text(json.dumps(cfg))
    assert main(["train", "--config", str(alt)]) == 0
    for seed in (0, 1):
        want = (arts / "40" / str(seed) / "network.json").read_bytes()
        got = (tmp_path / "arts2" / "40" / str(seed) / "network.json").read_bytes()
        assert got == want


def test_evaluate_missing_artifacts_exits_three(workspace, tmp_path, capsys):
    root, data, _ = workspace
    rc = main([
        "evaluate", "--output_dir", str(tmp_path / "empty"),
        "--dataset", str(data / "dataset.csv"),
        "--channel", str(data / "channel.csv"),
        "--sizes", "[40]", "--seeds", "[0]",
    ])
    assert rc == 3
    assert "missing-artifact" in capsys.readouterr().err


def test_infer_with_channel(workspace):
    root, data, arts = workspace
    out = root / "posteriors.json"
    rc = main([
        "infer",
        "--network", str(arts / "40" / "0" / "network.json"),
        "--consistency", str(arts / "40" / "0" / "consistency.json"),
        "--patients", str(data / "dataset.csv"),
        "--channel", str(data / "channel.csv"),
        "--output", str(out),
    ])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert len(doc["patients"]) == 150
    entry = next(iter(doc["patients"].values()))
    assert set(entry) == {
        "bn-only", "text-only", "c-bn-text", "v-bn-text", "v-c-bn-text"
    }
    fever = entry["v-c-bn-text"]["fever"]
    assert set(fever) == {"none", "low", "high"}
    assert sum(fever.values()) == pytest.approx(1.0, abs=1e-9)


def test_infer_without_channel_is_bn_only(workspace, capsys):
    _, data, arts = workspace
    rc = main([
        "infer",
        "--network", str(arts / "40" / "0" / "network.json"),
        "--patients", str(data / "dataset.csv"),
    ])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    entry = next(iter(doc["patients"].values()))
    assert set(entry) == {"bn-only"}


def test_infer_fused_needs_consistency(workspace, capsys):
    _, data, arts = workspace
    rc = main([
        "infer",
        "--network", str(arts / "40" / "0" / "network.json"),
        "--patients", str(data / "dataset.csv"),
        "--channel", str(data / "channel.csv"),
        "--variants", '["c-bn-text"]',
    ])
    assert rc == 2
    assert "consistency" in capsys.readouterr().err


def test_mask_smoke(tmp_path, capsys):
    notes = tmp_path / "notes.jsonl"
    spans = tmp_path / "spans.jsonl"
    text = "Cough was noted. No fever today."
    notes.write_text(
        "\n".join(
            json.dumps({"id": f"m{i}", "text": text}) for i in range(30)
        )
    )
    spans.write_text(
        "\n".join(
            json.dumps({"id": f"m{i}", "symptom": sym, "start": text.index(w),
                        "end": text.index(w) + len(w)})
            for i in range(30)
            for sym, w in (("cough", "Cough"), ("fever", "fever"))
        )
    )
    out = tmp_path / "masked"
    rc = main([
        "mask", "--output_dir", str(out), "--notes", str(notes),
        "--spans", str(spans), "--drop_prob", "0.5", "--seed", "2",
    ])
    assert rc == 0
    capsys.readouterr()
    masked = [json.loads(l) for l in (out / "masked_notes.jsonl").read_text().splitlines()]
    assert len(masked) == 30
    assert any(m["text"] != text for m in masked)
    log_lines = (out / "drop_log.csv").read_text().splitlines()
    assert log_lines[0] == "id,span_index,symptom,dropped"
    assert len(log_lines) == 61
    # surviving spans still point at their words
    for line in (out / "masked_spans.jsonl").read_text().splitlines():
        d = json.loads(line)
        note = next(m["text"] for m in masked if m["id"] == d["id"])
        assert note[d["start"]:d["end"]].lower() == d["symptom"]
