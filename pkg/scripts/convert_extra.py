"""Convert EXTRA-style dataset dumps to the TSV inputs this package reads.

The public rationale-ranking datasets ship as Python pickles (or JSON):
a record list where each entry carries a user id, an item id and one or
more rationale ids, an id -> snippet-text table, and five train/test
index partitions.  Key names vary between releases, so they are flags
here rather than assumptions.

Typical use:

    python scripts/convert_extra.py \
        --records reviews.pickle --texts explanations.pickle \
        --splits splits.pickle --out data/amazon

writes ``train.<k>.tsv`` / ``test.<k>.tsv`` for k in 0..4 plus
``texts.tsv``.  Without ``--splits`` a single ``interactions.tsv`` is
written.  Splits are accepted either as a list of five
``(train_indices, test_indices)`` pairs or a dict with ``train``/``test``
lists of five index lists.
"""

import argparse
import json
import os
import pickle
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from rrank.corpus import InteractionRecord, serialize_interactions  # noqa: E402


def load_any(path):
    if path.endswith((".json", ".jsonl")):
        with open(path, encoding="utf-8") as fh:
            if path.endswith(".jsonl"):
                return [json.loads(line) for line in fh if line.strip()]
            return json.load(fh)
    with open(path, "rb") as fh:
        return pickle.load(fh)


def to_records(raw, user_key, item_key, rationale_key):
    records = []
    for row in raw:
        rationales = row[rationale_key]
        if isinstance(rationales, (str, int)):
            rationales = [rationales]
        seen = []
        for rid in (str(r) for r in rationales):
            if rid not in seen:
                seen.append(rid)
        records.append(InteractionRecord(str(row[user_key]), str(row[item_key]), tuple(seen)))
    return records


def split_pairs(raw_splits):
    if isinstance(raw_splits, dict):
        return list(zip(raw_splits["train"], raw_splits["test"]))
    return [tuple(pair) for pair in raw_splits]


def write_tsv(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        serialize_interactions(records, fh)
    print(f"wrote {len(records):>8} records  {path}")


def main():
    parser = argparse.ArgumentParser(description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--records", required=True)
    parser.add_argument("--texts")
    parser.add_argument("--splits")
    parser.add_argument("--out", required=True)
    parser.add_argument("--user-key", default="user")
    parser.add_argument("--item-key", default="item")
    parser.add_argument("--rationale-key", default="explanation_ids")
    parser.add_argument("--text-id-key", default="exp_id",
                        help="id field when --texts rows are dicts")
    parser.add_argument("--text-key", default="text")
    args = parser.parse_args()

    os.makedirs(args.out, exist_ok=True)
    records = to_records(load_any(args.records), args.user_key, args.item_key,
                         args.rationale_key)

    if args.splits:
        for k, (train_idx, test_idx) in enumerate(split_pairs(load_any(args.splits))):
            write_tsv([records[i] for i in train_idx],
                      os.path.join(args.out, f"train.{k}.tsv"))
            write_tsv([records[i] for i in test_idx],
                      os.path.join(args.out, f"test.{k}.tsv"))
    else:
        write_tsv(records, os.path.join(args.out, "interactions.tsv"))

    if args.texts:
        raw = load_any(args.texts)
        if isinstance(raw, dict):
            table = {str(k): str(v) for k, v in raw.items()}
        else:
            table = {str(row[args.text_id_key]): str(row[args.text_key]) for row in raw}
        path = os.path.join(args.out, "texts.tsv")
        with open(path, "w", encoding="utf-8") as fh:
            for rid in sorted(table):
                text = table[rid].replace("\t", " ").replace("\n", " ")
                fh.write(f"{rid}\t{text}\n")
        print(f"wrote {len(table):>8} texts    {path}")


if __name__ == "__main__":
    main()
