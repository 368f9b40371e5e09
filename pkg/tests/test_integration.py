"""Live cross-component integration: drives the frontend CLI with node.

Runs only when node and the built frontend are present; the checked-in
fixture in tests/data keeps the rest of the suite independent of them.
"""

import os
import shutil
import subprocess

import pytest

from rrank import seminit
from rrank.cli import main

REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
FRONTEND_CLI = os.path.join(REPO, "frontend", "dist", "cli.js")
FIXTURES = os.path.join(REPO, "frontend", "fixtures")

pytestmark = pytest.mark.skipif(
    shutil.which("node") is None or not os.path.isfile(FRONTEND_CLI),
    reason="node or the built frontend (npm run build) is unavailable")


def run_node(args):
    return subprocess.run(["node", FRONTEND_CLI, *args],
                          capture_output=True, text=True, check=True)


def test_encode_matches_checked_in_fixture(tmp_path):
    out = tmp_path / "encoded.sebp"
    run_node(["encode", "--texts", os.path.join(FIXTURES, "texts.tsv"), "--out", str(out)])
    committed = os.path.join(REPO, "tests", "data", "embedkit_fixture.sebp")
    assert out.read_bytes() == open(committed, "rb").read()


def test_finetuned_export_drives_semantic_training(tmp_path, capsys):
    emb = tmp_path / "tuned.sebp"
    run_node(["finetune", "--train", os.path.join(FIXTURES, "train.tsv"),
              "--texts", os.path.join(FIXTURES, "texts.tsv"), "--out", str(emb),
              "--enc-lr", "5e-6", "--head-lr", "1e-4", "--epochs", "2", "--seed", "1"])
    table = seminit.read_embedding_file(emb)
    assert table.dim == 768

    out = tmp_path / "run"
    code = main(["train", "--model", "se-bper",
                 "--train", os.path.join(FIXTURES, "train.tsv"),
                 "--test", os.path.join(FIXTURES, "heldout.tsv"),
                 "--embeddings", str(emb), "--epochs", "2", "--patience", "2",
                 "--val-fraction", "0.2", "--seed", "1", "--out", str(out)])
    capsys.readouterr()
    assert code == 0
    assert (out / "checkpoint.rrnk").is_file()
