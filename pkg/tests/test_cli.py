import json

from distillseg.cli import dispatch
from distillseg.data import load_manifest


def test_unknown_subcommand_exit_2(capsys):
    assert dispatch(["frobnicate"]) == 2


def test_missing_required_flag_exit_2():
    assert dispatch(["synth"]) == 2


def test_synth_then_curve_composition(tmp_path):
    corpus = tmp_path / "corpus"
    assert dispatch(["synth", "--n", "20", "--seed", "1", "--size", "64",
                     "--out", str(corpus)]) == 0
    manifest = load_manifest(corpus / "manifest.json")
    assert len(manifest) == 20

    out = tmp_path / "curve.json"
    code = dispatch([
        "--seed", "3", "curve", "--manifest", str(corpus / "manifest.json"),
        "--budgets", "2,3", "--toy-encoder", "--cache", str(tmp_path / "cache"),
        "--channels", "8,8,8", "--epochs", "4", "--batch-size", "1",
        "--learning-rate", "0.005", "--out", str(out)])
    assert code == 0
    doc = json.loads(out.read_text())
    assert [e["budget"] for e in doc["entries"]] == [2, 3]
    assert doc["config_hash"]
    assert doc["run_config"]["seed"] == 3
    for entry in doc["entries"]:
        assert set(entry["metrics"]).issuperset(
            {"micro_f1", "miou", "mean_image_iou", "macro_f1"})

    # plot consumes the written report
    plot = tmp_path / "curve.png"
    assert dispatch(["plot", "--report", str(out), "--out", str(plot)]) == 0
    assert plot.exists() and plot.with_suffix(".csv").exists()


def test_budget_too_large_exit_1(tmp_path, capsys):
    corpus = tmp_path / "corpus"
    dispatch(["synth", "--n", "10", "--seed", "2", "--size", "64",
              "--out", str(corpus)])
    code = dispatch([
        "train", "--manifest", str(corpus / "manifest.json"),
        "--budget", "500", "--toy-encoder", "--channels", "8,8,8",
        "--epochs", "1", "--out", str(tmp_path / "ckpt.bin")])
    assert code == 1
    assert "BudgetTooLarge" in capsys.readouterr().err


def test_train_eval_round_trip(tmp_path):
    corpus = tmp_path / "corpus"
    dispatch(["synth", "--n", "10", "--seed", "2", "--size", "64",
              "--out", str(corpus)])
    ckpt = tmp_path / "d.ckpt"
    code = dispatch([
        "--seed", "3", "train", "--manifest", str(corpus / "manifest.json"),
        "--budget", "2", "--toy-encoder", "--cache", str(tmp_path / "cache"),
        "--channels", "8,8,8", "--epochs", "4", "--batch-size", "1",
        "--learning-rate", "0.005", "--out", str(ckpt)])
    assert code == 0
    assert ckpt.exists()
    summary = json.loads(ckpt.with_suffix(".train.json").read_text())
    assert summary["budget"] == 2 and summary["config_hash"]

    report = tmp_path / "eval.json"
    code = dispatch([
        "eval", "--manifest", str(corpus / "manifest.json"),
        "--checkpoint", str(ckpt), "--toy-encoder",
        "--cache", str(tmp_path / "cache"), "--split", "test",
        "--out", str(report)])
    assert code == 0
    doc = json.loads(report.read_text())
    assert 0.0 <= doc["micro_f1"] <= 1.0
    assert doc["config_hash"]


def test_ingest_and_simulate(tmp_path):
    corpus = tmp_path / "corpus"
    dispatch(["synth", "--n", "6", "--seed", "4", "--size", "64",
              "--out", str(corpus)])
    split_spec = {f"synth_{i:04d}": "train" for i in range(6)}
    spec_path = tmp_path / "split.json"
    spec_path.write_text(json.dumps(split_spec))
    manifest_path = tmp_path / "ingested.json"
    assert dispatch(["ingest", "--images", str(corpus / "images"),
                     "--masks", str(corpus / "masks"),
                     "--split-spec", str(spec_path),
                     "--out", str(manifest_path)]) == 0
    manifest = load_manifest(manifest_path)
    assert manifest.split_counts == {"train": 6, "val": 0, "test": 0}

    log_dir = tmp_path / "ann"
    assert dispatch(["simulate", "--manifest", str(manifest_path),
                     "--mode", "box", "--toy-encoder",
                     "--out", str(log_dir)]) == 0
    lines = (log_dir / "annotations.jsonl").read_text().splitlines()
    assert len(lines) == 6
    assert json.loads((log_dir / "run_config.json").read_text())["config_hash"]


def test_embed_warms_cache(tmp_path):
    corpus = tmp_path / "corpus"
    dispatch(["synth", "--n", "4", "--seed", "5", "--size", "64",
              "--out", str(corpus)])
    cache_dir = tmp_path / "cache"
    assert dispatch(["embed", "--manifest", str(corpus / "manifest.json"),
                     "--toy-encoder", "--cache", str(cache_dir)]) == 0
    assert len(list(cache_dir.glob("*.emb"))) == 4


def test_config_file_defaults_flags_win(tmp_path):
    corpus = tmp_path / "corpus"
    dispatch(["synth", "--n", "4", "--seed", "5", "--size", "64",
              "--out", str(corpus)])
    config = tmp_path / "cfg.json"
    config.write_text(json.dumps({"toy_encoder": True, "epochs": 2,
                                  "channels": [8, 8, 8], "batch_size": 1,
                                  "learning_rate": 0.005}))
    ckpt = tmp_path / "d.ckpt"
    code = dispatch(["--config", str(config), "train",
                     "--manifest", str(corpus / "manifest.json"),
                     "--budget", "1", "--epochs", "3",  # flag beats file
                     "--out", str(ckpt)])
    assert code == 0
    summary = json.loads(ckpt.with_suffix(".train.json").read_text())
    assert summary["run_config"]["epochs"] == 3
    assert summary["run_config"]["toy_encoder"] is True
