"""End-to-end command line tests driving real project directories."""

import json

import pytest
from conftest import run_cli

from landsift.project import Project

WORDS_TSV = """doc_id\tpage_no\tword\tconfidence
d1\t1\tDas\t90
d1\t1\tBetreten\t95
d1\t1\tist\t88
d1\t1\tverboten.\t92
d2\t1\tunleserlich\t40
"""

META_JSONL = (
    '{"doc_id": "d1", "title": "Plan Nord", "region": "Lausitz", "area_ids": ["A-00"]}\n'
)


def test_ingest_then_textprep(tmp_path, capsys):
    words = tmp_path / "words.tsv"
    words.write_text(WORDS_TSV, encoding="utf-8")
    meta = tmp_path / "meta.jsonl"
    meta.write_text(META_JSONL, encoding="utf-8")
    root = tmp_path / "proj"

    assert run_cli("ingest", "--words", words, "--meta", meta, "--project", root) == 0
    out = capsys.readouterr().out
    assert "accepted pages" in out
    project = Project(root)
    assert project.pages_file.exists()
    assert project.meta_file.exists()
    assert len(project.pages()) == 1

    assert run_cli("textprep", "--project", root) == 0
    assert project.sentences_file.exists()


def test_synth_writes_all_artifacts(tmp_path, capsys):
    root = tmp_path / "proj"
    assert run_cli("synth", "--sentences", 300, "--seed", 3, "--project", root) == 0
    out = capsys.readouterr().out
    assert "300 sentences" in out
    project = Project(root)
    for path in (
        project.pages_file,
        project.gold_file,
        project.meta_file,
        project.areas_file,
        project.weather_file,
    ):
        assert path.exists(), path


def test_missing_artifact_exits_2_with_hint(tmp_path, capsys):
    assert run_cli("textprep", "--project", tmp_path) == 2
    err = capsys.readouterr().err
    assert err.startswith("error:")
    assert "run `ingest or synth` first" in err


def test_train_baseline_requires_annotations(tmp_path, capsys):
    root = tmp_path / "proj"
    assert run_cli("synth", "--sentences", 200, "--seed", 1, "--project", root) == 0
    capsys.readouterr()
    assert run_cli("train-baseline", "--project", root) == 2
    assert "run `annotate` first" in capsys.readouterr().err


def test_split_rejects_bad_ratios(project_copy, capsys):
    assert run_cli("split", "--ratios", "1,1", "--project", project_copy) == 2
    assert "positive ratios" in capsys.readouterr().err


def test_annotate_two_annotators_prints_agreement(project_copy, capsys):
    rc = run_cli(
        "annotate", "--annotators", 2, "--flip", 0.1, "--seed", 9,
        "--project", project_copy,
    )
    assert rc == 0
    out = capsys.readouterr().out
    assert "alpha" in out and "kappa" in out
    assert "2 annotator(s)" in out


def test_al_run_resume_graph_report_eval(project_copy, capsys):
    project = Project(project_copy)

    rc = run_cli(
        "al", "run", "--space", "restrictions", "--iterations", 2, "--batch", 5,
        "--subsample", 64, "--seed", 3, "--lr-scale", 300000, "--epochs", 30,
        "--project", project_copy,
    )
    assert rc == 0
    assert project.al_state_file("restrictions").exists()
    assert project.al_model_file("restrictions").exists()
    history = json.loads(
        project.al_history_file("restrictions").read_text(encoding="utf-8")
    )
    assert len(history) == 2
    assert all("test" in record for record in history)

    rc = run_cli(
        "al", "resume", "--space", "restrictions", "--iterations", 4,
        "--project", project_copy,
    )
    assert rc == 0
    history = json.loads(
        project.al_history_file("restrictions").read_text(encoding="utf-8")
    )
    assert len(history) == 4
    assert [r["iteration"] for r in history] == [0, 1, 2, 3]
    capsys.readouterr()

    assert run_cli("graph", "build", "--project", project_copy) == 0
    assert "graph:" in capsys.readouterr().out
    assert project.graph_file.exists()

    assert run_cli("report", "--area", "A-00", "--project", project_copy) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["area_id"] == "A-00"
    assert set(report["restrictions"]) == {"Prohibition", "Requirement"}
    assert "weather_bands" not in report

    assert run_cli("report", "--area", "A-00", "--weather", "--project", project_copy) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["weather_bands"] == sorted(report["weather_bands"], reverse=True)

    assert run_cli("report", "--area", "nope", "--project", project_copy) == 2
    assert "unknown area" in capsys.readouterr().err

    comp_path = project_copy / "comparison.json"
    rc = run_cli(
        "eval",
        "--baseline", project.model_file("restrictions"),
        "--challenger", project.al_model_file("restrictions"),
        "--out", comp_path,
        "--project", project_copy,
    )
    assert rc == 0
    out = capsys.readouterr().out
    assert "RESTRICTIONS" in out
    assert "significance vs baseline: * p<0.05, ** p<0.01 (McNemar)" in out
    assert comp_path.exists()
    json.loads(comp_path.read_text(encoding="utf-8"))


def test_al_histories_replay_identically(synth_project, tmp_path, capsys):
    import shutil

    texts = []
    for name in ("a", "b"):
        copy = tmp_path / name
        shutil.copytree(synth_project, copy)
        rc = run_cli(
            "al", "run", "--space", "restrictions", "--iterations", 3, "--batch", 5,
            "--subsample", 64, "--seed", 17, "--lr-scale", 300000, "--epochs", 20,
            "--project", copy,
        )
        assert rc == 0
        texts.append(
            Project(copy).al_history_file("restrictions").read_text(encoding="utf-8")
        )
    assert texts[0] == texts[1]
