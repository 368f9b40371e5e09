import numpy as np
import pytest

from rrank import corpus
from rrank.factors import FactorModel, ModelDims

ACCEPTANCE_RESULTS = []


def record_acceptance(name, passed, detail=""):
    """Collect one line per acceptance criterion for the terminal summary."""
    status = {True: "PASS", False: "FAIL", None: "SKIP"}[passed]
    ACCEPTANCE_RESULTS.append(f"[{status}] {name}" + (f" -- {detail}" if detail else ""))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)


def small_corpus_text(seed=3, n_users=8, n_items=6, n_rationales=15, n_train=40, n_test=10):
    """Deterministic tiny TSV contents for CLI and pipeline tests."""
    rng = np.random.default_rng(seed)
    lines = []
    for _ in range(n_train + n_test):
        u = rng.integers(n_users)
        i = rng.integers(n_items)
        k = int(rng.integers(1, 4))
        rats = sorted(set(int(rng.integers(n_rationales)) for _ in range(k)))
        lines.append(f"u{u}\ti{i}\t" + ",".join(f"e{r}" for r in rats))
    train = "\n".join(lines[:n_train]) + "\n"
    test = "\n".join(lines[n_train:]) + "\n"
    texts = "".join(f"e{r}\tsnippet number {r}\n" for r in range(n_rationales))
    return train, test, texts


@pytest.fixture
def small_dataset(tmp_path):
    train, test, texts = small_corpus_text()
    paths = {
        "train": tmp_path / "train.tsv",
        "test": tmp_path / "test.tsv",
        "texts": tmp_path / "texts.tsv",
    }
    paths["train"].write_text(train)
    paths["test"].write_text(test)
    paths["texts"].write_text(texts)
    return paths


def random_model(rng, dims, dtype=np.float64, scale=1.0):
    """Dense random model in the requested dtype (float64 for gradchecks)."""
    return FactorModel(
        dims,
        (rng.normal(size=(dims.n_users, dims.d)) * scale).astype(dtype),
        (rng.normal(size=(dims.n_items, dims.d)) * scale).astype(dtype),
        (rng.normal(size=(dims.n_rationales, dims.d)) * scale).astype(dtype),
        (rng.normal(size=(dims.n_rationales, dims.d)) * scale).astype(dtype),
        (rng.normal(size=dims.n_rationales) * scale).astype(dtype),
        (rng.normal(size=dims.n_rationales) * scale).astype(dtype),
    )


def toy_training_setup(seed=11, n_users=20, n_items=10, n_rationales=30, n_records=160, d=8):
    """Small planted-ish dataset wired all the way to triplets and histories."""
    rng = np.random.default_rng(seed)
    records = []
    for _ in range(n_records):
        u = int(rng.integers(n_users))
        i = int(rng.integers(n_items))
        base = (u % 3) * 10
        rats = sorted(set(int(base + rng.integers(10)) for _ in range(int(rng.integers(1, 3)))))
        records.append(corpus.InteractionRecord(
            f"u{u}", f"i{i}", tuple(f"e{r}" for r in rats)))
    train_recs, val_recs = corpus.split_validation(records, 0.1, seed)
    catalog = corpus.build_catalog(records)
    histories = corpus.build_histories(catalog, train_recs, val_recs)
    triplets = corpus.records_to_triplets(train_recs, catalog)
    dims = ModelDims(catalog.n_users, catalog.n_items, catalog.n_rationales, d)
    return catalog, histories, triplets, dims
