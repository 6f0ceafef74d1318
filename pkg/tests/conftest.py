"""Shared fixtures: one synthetic project prepared through the CLI.

Building the corpus and the two seed models is the expensive part of
the suite, so it happens once per session. Tests that mutate project
state (active learning runs, the HTTP submit flow) work on copies.
"""

import shutil

import pytest

from landsift import cli


def run_cli(*args) -> int:
    return cli.main([str(a) for a in args])


_PIPELINE = (
    ("synth", "--sentences", "3000", "--seed", "7"),
    ("textprep",),
    ("bootstrap",),
    ("annotate", "--annotators", "1"),
    ("split",),
    ("train-baseline", "--space", "restrictions", "--lr-scale", "300000", "--epochs", "120"),
    ("train-baseline", "--space", "topics", "--lr-scale", "2500000", "--epochs", "120"),
)


@pytest.fixture(scope="session")
def synth_project(tmp_path_factory):
    root = tmp_path_factory.mktemp("project")
    for step in _PIPELINE:
        rc = run_cli(*step, "--project", root)
        assert rc == 0, f"pipeline step {step[0]!r} failed"
    return root


@pytest.fixture()
def project_copy(synth_project, tmp_path):
    copy = tmp_path / "project"
    shutil.copytree(synth_project, copy)
    return copy
