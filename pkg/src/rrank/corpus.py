"""Interaction-data ingestion: TSV parsing, ID catalogs, rationale histories.

Input is line-oriented UTF-8 TSV, one observation per line::

    user_id <TAB> item_id <TAB> rationale_id[,rationale_id...]

Lines starting with ``#`` and blank lines are ignored.  Five-fold
partitions follow the ``train.<k>.tsv`` / ``test.<k>.tsv`` naming
convention with k in 0..4.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


class ParseError(ValueError):
    """Raised for malformed interaction or text lines; carries the line number."""

    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class InteractionRecord:
    """One (user, item, rationale-set) observation.

    ``rationale_ids`` is non-empty and free of duplicates, in the order the
    ids first appeared on the source line.
    """

    user_id: str
    item_id: str
    rationale_ids: tuple

    def __post_init__(self):
        if len(self.rationale_ids) == 0:
            raise ValueError("record needs at least one rationale id")
        if len(set(self.rationale_ids)) != len(self.rationale_ids):
            raise ValueError("duplicate rationale ids within one record")


@dataclass
class Catalog:
    """Bijective string-id <-> dense-index maps for users, items, rationales.

    Indices are assigned in first-appearance order and are contiguous from 0.
    ``texts`` optionally maps rationale ids to their snippet text.
    """

    users: dict
    items: dict
    rationales: dict
    texts: dict | None = None
    user_ids: list = field(default_factory=list)
    item_ids: list = field(default_factory=list)
    rationale_ids: list = field(default_factory=list)

    @property
    def n_users(self):
        return len(self.users)

    @property
    def n_items(self):
        return len(self.items)

    @property
    def n_rationales(self):
        return len(self.rationales)

    def user_index(self, user_id):
        try:
            return self.users[user_id]
        except KeyError:
            raise KeyError(f"unknown user id: {user_id!r}") from None

    def item_index(self, item_id):
        try:
            return self.items[item_id]
        except KeyError:
            raise KeyError(f"unknown item id: {item_id!r}") from None

    def rationale_index(self, rationale_id):
        try:
            return self.rationales[rationale_id]
        except KeyError:
            raise KeyError(f"unknown rationale id: {rationale_id!r}") from None


@dataclass
class Histories:
    """Per-user / per-item rationale sets from the trainset, plus test truths.

    ``e_u[u]`` and ``e_i[i]`` are sorted unique index arrays built from train
    records only.  ``e_ui[(u, i)]`` holds the ground-truth rationale indices
    of a test pair.  A test pair is retained even if none of its rationales
    occur in train; such rationales simply count as misses at evaluation.
    """

    e_u: list
    e_i: list
    e_ui: dict


def parse_interactions(stream):
    """Parse an interaction stream into records.

    ``stream`` is any iterable of lines (an open file works).  Duplicate
    rationale ids within one line are dropped; the total drop count is
    reported through ``logging`` as a single warning.
    """
    records = []
    duplicates = 0
    for line_no, raw in enumerate(stream, start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ParseError(line_no, f"expected 3 tab-separated fields, got {len(fields)}")
        user_id, item_id, rationale_field = fields
        if not user_id or not item_id:
            raise ParseError(line_no, "empty user or item id")
        if not rationale_field:
            raise ParseError(line_no, "empty rationale field")
        seen = []
        for rid in rationale_field.split(","):
            if not rid:
                raise ParseError(line_no, "empty rationale id in list")
            if rid in seen:
                duplicates += 1
            else:
                seen.append(rid)
        records.append(InteractionRecord(user_id, item_id, tuple(seen)))
    if duplicates:
        log.warning("dropped %d duplicate rationale ids within lines", duplicates)
    return records


def serialize_interactions(records, fh):
    """Write records back to TSV; inverse of :func:`parse_interactions`."""
    for rec in records:
        fh.write(f"{rec.user_id}\t{rec.item_id}\t{','.join(rec.rationale_ids)}\n")


def load_interactions(path):
    with open(path, encoding="utf-8") as fh:
        return parse_interactions(fh)


def read_texts(path):
    """Read a ``rationale_id <TAB> utf8-text`` table."""
    texts = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t", 1)
            if len(fields) != 2:
                raise ParseError(line_no, "expected `rationale_id<TAB>text`")
            texts[fields[0]] = fields[1]
    return texts


def build_catalog(records, texts=None):
    """Assign contiguous indices in first-appearance order over ``records``.

    If a text table is given, every id it references must be a known
    rationale.
    """
    if not records:
        raise ValueError("cannot build a catalog from zero records")
    users, items, rationales = {}, {}, {}
    for rec in records:
        if rec.user_id not in users:
            users[rec.user_id] = len(users)
        if rec.item_id not in items:
            items[rec.item_id] = len(items)
        for rid in rec.rationale_ids:
            if rid not in rationales:
                rationales[rid] = len(rationales)
    if texts is not None:
        unknown = sorted(set(texts) - set(rationales))
        if unknown:
            raise ValueError(f"text table references unknown rationale ids: {unknown[:10]}")
    return Catalog(
        users=users,
        items=items,
        rationales=rationales,
        texts=dict(texts) if texts is not None else None,
        user_ids=list(users),
        item_ids=list(items),
        rationale_ids=list(rationales),
    )


def extend_catalog(catalog, records):
    """Add ids seen only in ``records`` (e.g. the testset) to the catalog."""
    for rec in records:
        if rec.user_id not in catalog.users:
            catalog.users[rec.user_id] = len(catalog.users)
            catalog.user_ids.append(rec.user_id)
        if rec.item_id not in catalog.items:
            catalog.items[rec.item_id] = len(catalog.items)
            catalog.item_ids.append(rec.item_id)
        for rid in rec.rationale_ids:
            if rid not in catalog.rationales:
                catalog.rationales[rid] = len(catalog.rationales)
                catalog.rationale_ids.append(rid)
    return catalog


def build_histories(catalog, train, test=()):
    """Union train records into E_u / E_i; collect test-pair truths into E_ui.

    All ids must already be in the catalog (run :func:`extend_catalog` with
    the test records first).
    """
    e_u = [set() for _ in range(catalog.n_users)]
    e_i = [set() for _ in range(catalog.n_items)]
    for rec in train:
        u = catalog.user_index(rec.user_id)
        i = catalog.item_index(rec.item_id)
        for rid in rec.rationale_ids:
            e = catalog.rationale_index(rid)
            e_u[u].add(e)
            e_i[i].add(e)
    e_ui = {}
    for rec in test:
        u = catalog.user_index(rec.user_id)
        i = catalog.item_index(rec.item_id)
        truth = e_ui.setdefault((u, i), set())
        for rid in rec.rationale_ids:
            truth.add(catalog.rationale_index(rid))
    return Histories(
        e_u=[np.array(sorted(s), dtype=np.int64) for s in e_u],
        e_i=[np.array(sorted(s), dtype=np.int64) for s in e_i],
        e_ui={k: np.array(sorted(s), dtype=np.int64) for k, s in e_ui.items()},
    )


def split_validation(records, fraction, seed):
    """Deterministically split off a validation slice of ``records``.

    The split is an exact partition: every record lands in exactly one of
    the two outputs.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"validation fraction must be in (0, 1), got {fraction}")
    n = len(records)
    n_val = int(n * fraction)
    if n_val < 1:
        raise ValueError(f"fraction {fraction} yields an empty validation set for {n} records")
    if n_val >= n:
        raise ValueError(f"fraction {fraction} leaves no training records")
    order = np.random.default_rng(seed).permutation(n)
    val_positions = set(order[:n_val].tolist())
    train_out = [records[i] for i in range(n) if i not in val_positions]
    val_out = [records[i] for i in range(n) if i in val_positions]
    return train_out, val_out


def records_to_triplets(records, catalog):
    """Expand records to one (u, i, e) row per rationale, as an int64 array.

    Multi-rationale records contribute one training event per rationale;
    repeated observations across records are kept.
    """
    rows = []
    for rec in records:
        u = catalog.user_index(rec.user_id)
        i = catalog.item_index(rec.item_id)
        for rid in rec.rationale_ids:
            rows.append((u, i, catalog.rationale_index(rid)))
    return np.array(rows, dtype=np.int64).reshape(-1, 3)


def fold_paths(data_dir, fold):
    """Paths for the five-fold convention ``train.<k>.tsv`` / ``test.<k>.tsv``."""
    return (f"{data_dir}/train.{fold}.tsv", f"{data_dir}/test.{fold}.tsv")
