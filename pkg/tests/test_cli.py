import json
import os
import subprocess
import sys

import pytest

from cadence.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main


def run(argv, capsys):
    rc = main(argv)
    out = capsys.readouterr()
    return rc, out.out, out.err


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "corpus"
    assert main(["synth", "--subjects", "6", "--seed", "4", "--out-dir", str(out)]) == 0
    return out / "manifest.json"


def test_help_lists_defaults():
    res = subprocess.run([sys.executable, "-m", "cadence.cli", "evaluate-loso", "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    text = " ".join(res.stdout.split())
    for flag in ("--systems", "--seed", "--jobs", "--profile", "--config"):
        assert flag in text
    assert text.count("(default:") >= 6
    assert "ivector,xvector,functionals,fluency,rnn,linguistic" in text


def test_missing_argument_is_usage_error(capsys):
    rc, _, err = run(["synth"], capsys)
    assert rc == EXIT_USAGE


def test_non_empty_out_dir(corpus, capsys):
    rc, _, err = run(["synth", "--subjects", "4", "--out-dir", str(corpus.parent)], capsys)
    assert rc == EXIT_USAGE
    assert err.startswith("error module=cli type=UsageError")


def test_report_on_empty_dir(tmp_path, capsys):
    rc, _, err = run(["report", "--in", str(tmp_path)], capsys)
    assert rc == EXIT_DATA
    assert "scores file not found" in err and "type=DataError" in err


def test_parse_and_extract(corpus, tmp_path, capsys):
    rc, out, _ = run(["parse", "--manifest", str(corpus), "--out-dir", str(tmp_path / "p")], capsys)
    assert rc == EXIT_OK
    doc = json.loads((tmp_path / "p" / "S001.json").read_text())
    assert doc["subject_id"] == "S001" and doc["interventions"]
    rc, _, _ = run(["extract", "--manifest", str(corpus), "--systems", "fluency,linguistic",
                    "--out-dir", str(tmp_path / "x")], capsys)
    assert rc == EXIT_OK
    lines = (tmp_path / "x" / "fluency.csv").read_text().splitlines()
    assert len(lines) == 7 and lines[0].startswith("subject_id,n_syllables")
    rc, _, err = run(["extract", "--manifest", str(corpus), "--systems", "rnn", "--out-dir", str(tmp_path / "y")],
                     capsys)
    assert rc == EXIT_USAGE


def test_evaluate_fuse_report(corpus, tmp_path, capsys):
    out = tmp_path / "ev"
    rc, text, _ = run(["evaluate-loso", "--manifest", str(corpus), "--systems", "fluency,linguistic",
                       "--jobs", "1", "--out-dir", str(out)], capsys)
    assert rc == EXIT_OK
    assert "fusion_II" in text
    metrics = json.loads((out / "metrics.json").read_text())
    assert set(metrics["systems"]) == {"fluency", "linguistic", "fusion_I", "fusion_II"}
    assert metrics["systems"]["linguistic"]["threshold"] == 0.5
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["systems"] == ["fluency", "linguistic"] and "jobs" not in cfg
    rc, text2, _ = run(["report", "--in", str(out)], capsys)
    assert rc == EXIT_OK and text2 == text
    rc, _, _ = run(["fuse", "--scores", str(out / "scores.csv"), "--out-dir", str(tmp_path / "f")], capsys)
    assert rc == EXIT_OK
    assert (tmp_path / "f" / "metrics.json").read_text() == (out / "metrics.json").read_text()


def test_config_file_and_flag_precedence(corpus, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"systems": "fluency,linguistic", "seed": 5, "pipeline": {"svm_C": 2.0}}))
    out = tmp_path / "a"
    rc, _, _ = run(["evaluate-loso", "--manifest", str(corpus), "--config", str(cfg), "--jobs", "1",
                    "--set", "svm_C=3.0", "--out-dir", str(out)], capsys)
    assert rc == EXIT_OK
    saved = json.loads((out / "config.json").read_text())
    assert saved["pipeline"]["seed"] == 5 and saved["pipeline"]["svm_C"] == 3.0
    out2 = tmp_path / "b"
    rc, _, _ = run(["evaluate-loso", "--manifest", str(corpus), "--config", str(cfg), "--jobs", "1",
                    "--seed", "9", "--systems", "fluency", "--out-dir", str(out2)], capsys)
    saved = json.loads((out2 / "config.json").read_text())
    assert saved["pipeline"]["seed"] == 9 and saved["systems"] == ["fluency"] and saved["pipeline"]["svm_C"] == 2.0
    rc, _, err = run(["evaluate-loso", "--manifest", str(corpus), "--set", "bogus=1", "--out-dir",
                      str(tmp_path / "c")], capsys)
    assert rc == EXIT_DATA and "bogus" in err


def test_seed_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("CADENCE_SEED", "13")
    assert main(["synth", "--subjects", "4", "--out-dir", str(tmp_path / "e")]) == 0
    monkeypatch.delenv("CADENCE_SEED")
    assert main(["synth", "--subjects", "4", "--seed", "13", "--out-dir", str(tmp_path / "f")]) == 0
    capsys.readouterr()
    a = json.loads((tmp_path / "e" / "manifest.json").read_text())
    assert a["extra"]["seed"] == 13
    assert (tmp_path / "e" / "audio" / "S001.wav").read_bytes() == (tmp_path / "f" / "audio" / "S001.wav").read_bytes()


def test_bad_subject_count(tmp_path, capsys):
    rc, _, err = run(["synth", "--subjects", "5", "--out-dir", str(tmp_path / "s")], capsys)
    assert rc != EXIT_OK and err.startswith("error module=")
