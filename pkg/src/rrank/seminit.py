"""Embedding exchange format and semantic warm-start initialization.

Binary layout (little-endian): magic ``SEBP``, version u32, count u64,
dim u32, then per record: id length u16, id UTF-8 bytes, dim x f32.
Records are sorted by id, so writing the same table twice is
byte-identical.  A TSV fallback (``id <TAB> comma-separated decimals``)
is accepted on read, with the usual decimal round-trip precision loss.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass

import numpy as np

from .factors import FactorModel

log = logging.getLogger(__name__)

EMBEDDING_MAGIC = b"SEBP"
EMBEDDING_VERSION = 1


class EmbeddingFormatError(ValueError):
    pass


@dataclass
class EmbeddingTable:
    """rationale id -> float32 vector, all sharing one dimension."""

    dim: int
    vectors: dict

    def __len__(self):
        return len(self.vectors)

    def validate(self):
        for rid, vec in self.vectors.items():
            if vec.shape != (self.dim,):
                raise EmbeddingFormatError(
                    f"vector for {rid!r} has shape {vec.shape}, expected ({self.dim},)")
            if not np.all(np.isfinite(vec)):
                raise EmbeddingFormatError(f"non-finite values in vector for {rid!r}")
        return self


def write_embedding_file(table, path):
    """Write the table in the binary exchange format, records sorted by id."""
    if not table.vectors:
        raise ValueError("refusing to write an empty embedding table")
    table.validate()
    out = [struct.pack("<4sIQI", EMBEDDING_MAGIC, EMBEDDING_VERSION,
                       len(table.vectors), table.dim)]
    for rid in sorted(table.vectors):
        encoded = rid.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise ValueError(f"rationale id too long to encode: {rid[:40]!r}...")
        out.append(struct.pack("<H", len(encoded)))
        out.append(encoded)
        out.append(np.ascontiguousarray(table.vectors[rid], dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(out))


def read_embedding_file(path):
    """Read an embedding table; binary if the magic matches, else TSV."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] == EMBEDDING_MAGIC:
        return _read_binary(data)
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise EmbeddingFormatError(
            f"bad magic {data[:4]!r} at byte 0 and not UTF-8 text") from None
    return _read_tsv(text)


def _read_binary(data):
    offset = 0

    def take(n, what):
        nonlocal offset
        if offset + n > len(data):
            raise EmbeddingFormatError(
                f"truncated embedding file: needed {n} bytes for {what} at byte {offset}, "
                f"file has {len(data)}")
        chunk = data[offset:offset + n]
        offset += n
        return chunk

    _, version, count, dim = struct.unpack("<4sIQI", take(20, "header"))
    if version != EMBEDDING_VERSION:
        raise EmbeddingFormatError(f"unsupported version {version} at byte 4")
    vectors = {}
    for _ in range(count):
        (id_len,) = struct.unpack("<H", take(2, "id length"))
        rid = take(id_len, "id bytes").decode("utf-8")
        vec = np.frombuffer(take(dim * 4, f"vector for {rid!r}"), dtype="<f4").copy()
        if rid in vectors:
            raise EmbeddingFormatError(f"duplicate id {rid!r}")
        vectors[rid] = vec
    if offset != len(data):
        raise EmbeddingFormatError(f"{len(data) - offset} trailing bytes at byte {offset}")
    return EmbeddingTable(dim=dim, vectors=vectors).validate()


def _read_tsv(text):
    vectors = {}
    dim = None
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise EmbeddingFormatError(f"line {line_no}: expected `id<TAB>v1,v2,...`")
        rid, payload = fields
        if rid in vectors:
            raise EmbeddingFormatError(f"line {line_no}: duplicate id {rid!r}")
        try:
            vec = np.array([float(x) for x in payload.split(",")], dtype=np.float32)
        except ValueError:
            raise EmbeddingFormatError(f"line {line_no}: bad decimal value") from None
        if dim is None:
            dim = vec.shape[0]
        elif vec.shape[0] != dim:
            raise EmbeddingFormatError(
                f"line {line_no}: dimension {vec.shape[0]} != {dim}")
        vectors[rid] = vec
    if not vectors:
        raise EmbeddingFormatError("no embedding records found")
    return EmbeddingTable(dim=dim, vectors=vectors).validate()


def semantic_matrix(table, catalog):
    """Embeddings as a dense matrix in catalog index order.

    Every catalog rationale must have a vector; vectors for ids outside
    the catalog are ignored with a logged count.
    """
    missing = [rid for rid in catalog.rationale_ids if rid not in table.vectors]
    if missing:
        shown = ", ".join(repr(r) for r in missing[:10])
        more = "" if len(missing) <= 10 else f" (+{len(missing) - 10} more)"
        raise ValueError(f"no embedding for catalog rationales: {shown}{more}")
    extra = len(table.vectors) - catalog.n_rationales
    if extra > 0:
        log.warning("ignoring %d embeddings for rationales not in the catalog", extra)
    mat = np.empty((catalog.n_rationales, table.dim), dtype=np.float32)
    for idx, rid in enumerate(catalog.rationale_ids):
        mat[idx] = table.vectors[rid]
    return mat


def semantic_initialize(dims, table, catalog, histories, dtype=np.float32):
    """Warm-start a model from text embeddings instead of random values.

    Both rationale factor matrices start as exact copies of the embedding
    rows.  Each user factor is the mean of the embeddings in that user's
    history (ascending rationale index, accumulated in float64); item
    factors likewise.  Users or items with an empty history fall back to
    the global mean embedding.  Biases start at zero.
    """
    if table.dim != dims.d:
        raise ValueError(f"embedding dim {table.dim} != latent dim {dims.d}")
    sem = semantic_matrix(table, catalog)
    sem64 = sem.astype(np.float64)
    global_mean = sem64.mean(axis=0)

    def history_means(history_sets, count):
        out = np.empty((count, dims.d), dtype=np.float64)
        for idx in range(count):
            hist = history_sets[idx]
            out[idx] = sem64[hist].mean(axis=0) if len(hist) else global_mean
        return out.astype(dtype)

    return FactorModel(
        dims=dims,
        user_factors=history_means(histories.e_u, dims.n_users),
        item_factors=history_means(histories.e_i, dims.n_items),
        rat_factors_u=sem.astype(dtype),
        rat_factors_i=sem.astype(dtype),
        rat_bias_u=np.zeros(dims.n_rationales, dtype=dtype),
        rat_bias_i=np.zeros(dims.n_rationales, dtype=dtype),
    )
