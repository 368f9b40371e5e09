import struct

import numpy as np
import pytest

from rrank import corpus
from rrank.factors import ModelDims
from rrank.seminit import (
    EmbeddingFormatError,
    EmbeddingTable,
    read_embedding_file,
    semantic_initialize,
    write_embedding_file,
)


def table_of(pairs, dim):
    return EmbeddingTable(dim=dim, vectors={k: np.asarray(v, dtype=np.float32)
                                            for k, v in pairs.items()})


class TestEmbeddingFile:
    def test_roundtrip_is_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        table = table_of({f"e{k}": rng.normal(size=5) for k in range(9)}, dim=5)
        path = tmp_path / "t.sebp"
        write_embedding_file(table, path)
        back = read_embedding_file(path)
        assert back.dim == 5
        assert set(back.vectors) == set(table.vectors)
        for rid, vec in table.vectors.items():
            assert np.array_equal(back.vectors[rid], vec)

    def test_write_is_deterministic(self, tmp_path):
        rng = np.random.default_rng(1)
        table = table_of({f"e{k}": rng.normal(size=3) for k in range(4)}, dim=3)
        write_embedding_file(table, tmp_path / "a")
        write_embedding_file(table, tmp_path / "b")
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()

    def test_hand_assembled_bytes(self, tmp_path):
        # byte oracle assembled independently with struct: header then two
        # id-sorted records with known payloads
        v1 = np.array([1.5, -2.0, 0.25], dtype="<f4")
        v2 = np.array([0.0, 3.0, -1.0], dtype="<f4")
        blob = struct.pack("<4sIQI", b"SEBP", 1, 2, 3)
        blob += struct.pack("<H", 2) + b"e1" + v1.tobytes()
        blob += struct.pack("<H", 2) + b"e2" + v2.tobytes()
        path = tmp_path / "hand.sebp"
        path.write_bytes(blob)
        table = read_embedding_file(path)
        assert np.array_equal(table.vectors["e1"], v1)
        assert np.array_equal(table.vectors["e2"], v2)
        # and writing the parsed table reproduces the identical bytes
        write_embedding_file(table, tmp_path / "again.sebp")
        assert (tmp_path / "again.sebp").read_bytes() == blob

    def test_single_record_length_arithmetic(self, tmp_path):
        table = table_of({"a": [1.0]}, dim=1)
        path = tmp_path / "one.sebp"
        write_embedding_file(table, path)
        assert len(path.read_bytes()) == 20 + 2 + 1 + 4

    def test_truncation_reports_byte_offset(self, tmp_path):
        table = table_of({"e1": [1.0, 2.0], "e2": [3.0, 4.0]}, dim=2)
        path = tmp_path / "t.sebp"
        write_embedding_file(table, path)
        path.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(EmbeddingFormatError, match="at byte"):
            read_embedding_file(path)

    def test_duplicate_id_rejected(self, tmp_path):
        v = np.zeros(1, dtype="<f4")
        blob = struct.pack("<4sIQI", b"SEBP", 1, 2, 1)
        blob += (struct.pack("<H", 1) + b"x" + v.tobytes()) * 2
        path = tmp_path / "dup.sebp"
        path.write_bytes(blob)
        with pytest.raises(EmbeddingFormatError, match="duplicate"):
            read_embedding_file(path)

    def test_bad_version_rejected(self, tmp_path):
        blob = struct.pack("<4sIQI", b"SEBP", 9, 0, 1)
        path = tmp_path / "v9.sebp"
        path.write_bytes(blob)
        with pytest.raises(EmbeddingFormatError, match="version"):
            read_embedding_file(path)

    def test_tsv_fallback(self, tmp_path):
        path = tmp_path / "t.tsv"
        path.write_text("e1\t1.0,2.5\ne2\t-3.0,0.125\n")
        table = read_embedding_file(path)
        assert table.dim == 2
        assert np.allclose(table.vectors["e2"], [-3.0, 0.125])

    def test_garbage_is_a_format_error(self, tmp_path):
        path = tmp_path / "junk"
        path.write_bytes(b"\xff\xfe\x00\x01 garbage")
        with pytest.raises(EmbeddingFormatError):
            read_embedding_file(path)

    def test_empty_table_refused_on_write(self, tmp_path):
        with pytest.raises(ValueError):
            write_embedding_file(EmbeddingTable(dim=2, vectors={}), tmp_path / "no")


class TestSemanticInitialize:
    def _setup(self):
        records = corpus.parse_interactions(iter([
            "u1\ti1\te1\n",
            "u1\ti2\te2\n",
            "u2\ti1\te2\n",
        ]))
        catalog = corpus.build_catalog(records)
        # u3/i3 enter through the testset only: cold entities
        test = corpus.parse_interactions(iter(["u3\ti3\te1\n"]))
        corpus.extend_catalog(catalog, test)
        histories = corpus.build_histories(catalog, records, test)
        return catalog, histories

    def test_single_history_mean_is_the_embedding(self):
        catalog, histories = self._setup()
        table = table_of({"e1": [1.0, 0.0], "e2": [0.0, 1.0]}, dim=2)
        dims = ModelDims(catalog.n_users, catalog.n_items, catalog.n_rationales, 2)
        model = semantic_initialize(dims, table, catalog, histories)
        u2 = catalog.users["u2"]
        np.testing.assert_array_equal(model.user_factors[u2], [0.0, 1.0])

    def test_mean_symmetry(self):
        catalog, histories = self._setup()
        table = table_of({"e1": [1.0, 0.0], "e2": [0.0, 1.0]}, dim=2)
        dims = ModelDims(catalog.n_users, catalog.n_items, catalog.n_rationales, 2)
        model = semantic_initialize(dims, table, catalog, histories)
        u1 = catalog.users["u1"]
        np.testing.assert_array_equal(model.user_factors[u1], [0.5, 0.5])

    def test_cold_entities_get_global_mean(self):
        catalog, histories = self._setup()
        table = table_of({"e1": [1.0, 0.0], "e2": [3.0, 0.0]}, dim=2)
        dims = ModelDims(catalog.n_users, catalog.n_items, catalog.n_rationales, 2)
        model = semantic_initialize(dims, table, catalog, histories)
        np.testing.assert_array_equal(model.user_factors[catalog.users["u3"]], [2.0, 0.0])
        np.testing.assert_array_equal(model.item_factors[catalog.items["i3"]], [2.0, 0.0])

    def test_rationale_rows_are_copies_of_embeddings_and_equal_bitwise(self):
        catalog, histories = self._setup()
        rng = np.random.default_rng(2)
        table = table_of({rid: rng.normal(size=4) for rid in catalog.rationale_ids}, dim=4)
        dims = ModelDims(catalog.n_users, catalog.n_items, catalog.n_rationales, 4)
        model = semantic_initialize(dims, table, catalog, histories)
        assert np.array_equal(model.rat_factors_u, model.rat_factors_i)
        for rid, idx in catalog.rationales.items():
            assert np.array_equal(model.rat_factors_u[idx], table.vectors[rid])
        assert np.all(model.rat_bias_u == 0.0) and np.all(model.rat_bias_i == 0.0)

    def test_user_factor_in_convex_hull_norm_bound(self):
        rng = np.random.default_rng(3)
        records = [corpus.InteractionRecord("u", f"i{k}", (f"e{k}",)) for k in range(6)]
        catalog = corpus.build_catalog(records)
        histories = corpus.build_histories(catalog, records)
        table = table_of({f"e{k}": rng.normal(size=5) for k in range(6)}, dim=5)
        dims = ModelDims(1, 6, 6, 5)
        model = semantic_initialize(dims, table, catalog, histories)
        max_norm = max(np.linalg.norm(v) for v in table.vectors.values())
        assert np.linalg.norm(model.user_factors[0]) <= max_norm + 1e-6

    def test_initialization_is_pure(self):
        catalog, histories = self._setup()
        rng = np.random.default_rng(4)
        table = table_of({rid: rng.normal(size=3) for rid in catalog.rationale_ids}, dim=3)
        dims = ModelDims(catalog.n_users, catalog.n_items, catalog.n_rationales, 3)
        a = semantic_initialize(dims, table, catalog, histories)
        b = semantic_initialize(dims, table, catalog, histories)
        for x, y in zip(a.param_blocks().values(), b.param_blocks().values()):
            assert np.array_equal(x, y)

    def test_missing_embedding_lists_ids(self):
        catalog, histories = self._setup()
        table = table_of({"e1": [0.0, 0.0]}, dim=2)
        dims = ModelDims(catalog.n_users, catalog.n_items, catalog.n_rationales, 2)
        with pytest.raises(ValueError, match="'e2'"):
            semantic_initialize(dims, table, catalog, histories)

    def test_extra_embeddings_ignored_with_warning(self, caplog):
        catalog, histories = self._setup()
        table = table_of({"e1": [1.0, 0.0], "e2": [0.0, 1.0], "ghost": [9.0, 9.0]}, dim=2)
        dims = ModelDims(catalog.n_users, catalog.n_items, catalog.n_rationales, 2)
        with caplog.at_level("WARNING"):
            semantic_initialize(dims, table, catalog, histories)
        assert "ignoring 1 embeddings" in caplog.text

    def test_dimension_mismatch_rejected(self):
        catalog, histories = self._setup()
        table = table_of({"e1": [1.0], "e2": [2.0]}, dim=1)
        dims = ModelDims(catalog.n_users, catalog.n_items, catalog.n_rationales, 2)
        with pytest.raises(ValueError, match="dim"):
            semantic_initialize(dims, table, catalog, histories)
