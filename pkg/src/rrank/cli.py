"""Command-line surface: train, evaluate, rank, convert, inspect.

Flag precedence is CLI > config file > defaults.  The config file is
plain text, one ``key = value`` per line, keys matching the long flag
names.  ``RRANK_WORKERS`` is the environment fallback for ``--workers``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import corpus, evalrank, factors, seminit, train

MODEL_NAMES = ("rand", "pitf", "bper", "bper-plus", "se-bper")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    model: str = "bper"
    train: str = None
    test: str = None
    data: str = None
    fold: int = None
    all_folds: bool = False
    texts: str = None
    embeddings: str = None
    dim: int = 64
    scale: float = 0.01
    lr: float = 1e-3
    l2: float = 1e-4
    negatives: int = 3
    mu: float = 0.7
    alpha: float = 1.0
    epochs: int = 100
    patience: int = 3
    batch: int = 32
    seed: int = 0
    val_fraction: float = 0.05
    cutoff: int = 10
    workers: int = 1
    out: str = "run"

    def train_config(self, mode):
        return train.TrainConfig(
            learning_rate=self.lr, l2=self.l2, n_negatives=self.negatives,
            mu=self.mu, alpha=self.alpha, max_epochs=self.epochs,
            patience=self.patience, batch_size=self.batch, seed=self.seed,
            mode=mode)


def read_config_file(path):
    values = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{line_no}: expected `key = value`")
            key, _, value = line.partition("=")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _coerce(name, value, kind):
    try:
        if kind is bool:
            return value if isinstance(value, bool) else value.lower() in ("1", "true", "yes")
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {name}: {value!r}") from None


def merge_run_config(args):
    """CLI flags override config-file values override dataclass defaults."""
    file_values = read_config_file(args.config) if args.config else {}
    cfg = RunConfig()
    for f in fields(RunConfig):
        kind = {"model": str, "train": str, "test": str, "data": str, "texts": str,
                "embeddings": str, "out": str}.get(f.name)
        if kind is None:
            kind = type(f.default) if f.default is not None else (bool if f.name == "all_folds" else int)
        cli_value = getattr(args, f.name, None)
        if cli_value is not None:
            setattr(cfg, f.name, cli_value)
        elif f.name in file_values:
            setattr(cfg, f.name, _coerce(f.name, file_values[f.name], kind))
    if getattr(args, "workers", None) is None and "workers" not in file_values:
        cfg.workers = int(os.environ.get("RRANK_WORKERS", cfg.workers))
    return cfg


def _require_file(path, what):
    if path is None:
        raise ConfigError(f"missing required path: {what}")
    if not os.path.isfile(path):
        raise ConfigError(f"{what} file not found: {path}")
    return path


def _dataset_paths(cfg, fold=None):
    if cfg.data is not None:
        k = cfg.fold if fold is None else fold
        if k is None:
            raise ConfigError("--data requires --fold (or --all-folds)")
        train_path, test_path = corpus.fold_paths(cfg.data, k)
    else:
        train_path, test_path = cfg.train, cfg.test
    _require_file(train_path, "train interactions")
    if test_path is not None:
        _require_file(test_path, "test interactions")
    return train_path, test_path


def _load_dataset(train_path, test_path, texts_path=None):
    texts = corpus.read_texts(texts_path) if texts_path else None
    train_records = corpus.load_interactions(train_path)
    test_records = corpus.load_interactions(test_path) if test_path else []
    if texts is not None:
        # a shared texts.tsv may cover rationales absent from this fold;
        # drop those here (build_catalog itself rejects unknown text ids)
        known = {rid for rec in train_records + test_records for rid in rec.rationale_ids}
        texts = {rid: t for rid, t in texts.items() if rid in known}
    catalog = corpus.build_catalog(train_records, texts=texts)
    corpus.extend_catalog(catalog, test_records)
    return catalog, train_records, test_records


def _init_model_and_extras(cfg, catalog, histories):
    """Build the starting model per the requested variant."""
    if cfg.model in ("se-bper", "bper-plus") and cfg.embeddings is None:
        raise ConfigError(f"--model {cfg.model} requires --embeddings")
    n = (catalog.n_users, catalog.n_items, catalog.n_rationales)

    if cfg.model == "se-bper":
        table = seminit.read_embedding_file(_require_file(cfg.embeddings, "embeddings"))
        dims = factors.ModelDims(*n, table.dim)
        model = seminit.semantic_initialize(dims, table, catalog, histories)
        return model, None, "bper", dims

    dims = factors.ModelDims(*n, cfg.dim)
    model = factors.init_random(dims, seed=cfg.seed, scale=cfg.scale)
    if cfg.model == "bper-plus":
        table = seminit.read_embedding_file(_require_file(cfg.embeddings, "embeddings"))
        semantic = seminit.semantic_matrix(table, catalog)
        limit = np.sqrt(6.0 / (dims.d + table.dim))
        projection = np.random.default_rng([cfg.seed, 1]).uniform(
            -limit, limit, size=(dims.d, table.dim)).astype(np.float32)
        return model, factors.BperPlusExtras(projection, semantic), "bper_plus", dims
    mode = "pitf" if cfg.model == "pitf" else "bper"
    return model, None, mode, dims


def cmd_train(cfg, fold=None, out_dir=None, progress=print):
    train_path, test_path = _dataset_paths(cfg, fold=fold)
    catalog, train_records, test_records = _load_dataset(train_path, test_path, cfg.texts)

    train_part, val_part = corpus.split_validation(train_records, cfg.val_fraction, cfg.seed)
    histories = corpus.build_histories(catalog, train_part, val_part)
    val_pairs = evalrank.pairs_from_histories(histories)
    model, extras, mode, dims = _init_model_and_extras(cfg, catalog, histories)

    if cfg.model == "rand":
        init_report = train.TrainReport(init_val=0.0)
        best_model, best_extras, report = model, extras, init_report
    else:
        triplets = corpus.records_to_triplets(train_part, catalog)
        best_model, best_extras, report = train.fit(
            model, triplets, histories, val_pairs, cfg.train_config(mode),
            extras=extras, progress=progress)

    out_dir = out_dir or cfg.out
    os.makedirs(out_dir, exist_ok=True)
    ckpt_path = os.path.join(out_dir, "checkpoint.rrnk")
    factors.save_checkpoint(best_model, ckpt_path, mode=mode, mu=cfg.mu, extras=best_extras)
    payload = dict(report.to_dict(), config={f.name: getattr(cfg, f.name) for f in fields(cfg)},
                   dims={"n_users": dims.n_users, "n_items": dims.n_items,
                         "n_rationales": dims.n_rationales, "d": dims.d})
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")

    eval_report = None
    if test_records:
        test_hist = corpus.build_histories(catalog, train_records, test_records)
        pairs = evalrank.pairs_from_histories(test_hist)
        eval_report = evalrank.evaluate(best_model, pairs, p=cfg.cutoff, mu=cfg.mu,
                                        mode=mode, extras=best_extras, workers=cfg.workers)
        with open(os.path.join(out_dir, "eval.txt"), "w", encoding="utf-8") as fh:
            fh.write("\n".join(eval_report.lines()) + "\n")
        for line in eval_report.lines():
            progress(line)
    return ckpt_path, report, eval_report


def cmd_train_all_folds(cfg, progress=print):
    reports = []
    for k in range(5):
        progress(f"# fold {k}")
        _, _, ev = cmd_train(cfg, fold=k, out_dir=os.path.join(cfg.out, f"fold{k}"),
                             progress=progress)
        if ev is None:
            raise ConfigError("--all-folds needs test files for every fold")
        reports.append(ev)
    means = {name: float(np.mean([r.means[name] for r in reports]))
             for name in reports[0].means}
    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, "means.json"), "w", encoding="utf-8") as fh:
        json.dump({"folds": 5, "cutoff": cfg.cutoff, "means": means}, fh, indent=2)
        fh.write("\n")
    for name, value in means.items():
        progress(f"mean {name}@{cfg.cutoff} {value:.3f}")
    return means


def cmd_evaluate(checkpoint, train_path, test_path, cutoff=10, mu=None,
                 workers=1, out_path=None, per_pair_path=None, candidates=None,
                 progress=print):
    model, extras, mode, ckpt_mu = factors.load_checkpoint(checkpoint)
    catalog, train_records, test_records = _load_dataset(train_path, test_path)
    if (catalog.n_users, catalog.n_items, catalog.n_rationales) != (
            model.dims.n_users, model.dims.n_items, model.dims.n_rationales):
        raise ConfigError(
            f"checkpoint was trained on a different catalog: checkpoint has "
            f"({model.dims.n_users}, {model.dims.n_items}, {model.dims.n_rationales}) "
            f"(users, items, rationales), dataset has "
            f"({catalog.n_users}, {catalog.n_items}, {catalog.n_rationales})")
    if not test_records:
        raise ConfigError("evaluation needs a test file")
    histories = corpus.build_histories(catalog, train_records, test_records)
    pairs = evalrank.pairs_from_histories(histories)
    cand = None
    if candidates is not None:
        # speed-experiment restriction: the `candidates` most frequent train rationales
        counts = np.zeros(catalog.n_rationales, dtype=np.int64)
        for rec in train_records:
            for rid in rec.rationale_ids:
                counts[catalog.rationale_index(rid)] += 1
        cand = np.sort(np.argsort(-counts, kind="stable")[:candidates])
    report = evalrank.evaluate(model, pairs, p=cutoff, mu=ckpt_mu if mu is None else mu,
                               mode=mode, extras=extras, workers=workers,
                               keep_per_pair=per_pair_path is not None, candidates=cand)
    for line in report.lines():
        progress(line)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(report.lines()) + "\n")
    if per_pair_path:
        with open(per_pair_path, "w", encoding="utf-8") as fh:
            evalrank.write_per_pair_tsv(report, catalog, fh)
    return report


def cmd_rank(checkpoint, train_path, test_path, user_id, item_id, k=10,
             texts_path=None, mu=None, progress=print):
    model, extras, mode, ckpt_mu = factors.load_checkpoint(checkpoint)
    catalog, _, _ = _load_dataset(train_path, test_path, texts_path)
    u = catalog.user_index(user_id)
    i = catalog.item_index(item_id)
    candidates = np.arange(model.dims.n_rationales, dtype=np.int64)
    ranked = factors.rank_rationales(model, u, i, candidates, k,
                                     ckpt_mu if mu is None else mu, mode, extras=extras)
    for rank, (e, score) in enumerate(ranked, start=1):
        rid = catalog.rationale_ids[e]
        text = ""
        if catalog.texts and rid in catalog.texts:
            text = f"\t{catalog.texts[rid]}"
        progress(f"{rank}\t{score:.6f}\t{rid}{text}")
    return ranked


def cmd_inspect(checkpoint, progress=print):
    model, extras, mode, mu = factors.load_checkpoint(checkpoint)
    d = model.dims
    progress(f"mode {mode} mu {mu}")
    progress(f"users {d.n_users} items {d.n_items} rationales {d.n_rationales} dim {d.d}")
    if extras is not None:
        progress(f"projection {extras.projection.shape[0]}x{extras.projection.shape[1]} "
                 f"semantic dim {extras.d_sem}")
    return model


def cmd_convert(input_path, out_path, user_key="user", item_key="item",
                rationale_key="rationales", progress=print):
    """Convert a JSON-lines interaction dump to the TSV input format."""
    records = []
    with open(input_path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            obj = json.loads(raw)
            try:
                rationales = obj[rationale_key]
                if isinstance(rationales, (str, int)):
                    rationales = [rationales]
                seen = []
                for rid in (str(r) for r in rationales):
                    if rid not in seen:
                        seen.append(rid)
                records.append(corpus.InteractionRecord(
                    str(obj[user_key]), str(obj[item_key]), tuple(seen)))
            except KeyError as exc:
                raise ConfigError(f"{input_path}:{line_no}: missing field {exc}") from None
    with open(out_path, "w", encoding="utf-8") as fh:
        corpus.serialize_interactions(records, fh)
    progress(f"wrote {len(records)} records to {out_path}")
    return len(records)


def build_parser():
    parser = argparse.ArgumentParser(prog="rrank", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="train a model and write a checkpoint")
    tr.add_argument("--config", help="plain-text config file (key = value lines)")
    tr.add_argument("--model", choices=MODEL_NAMES)
    tr.add_argument("--train", dest="train")
    tr.add_argument("--test", dest="test")
    tr.add_argument("--data", help="directory holding train.<k>.tsv / test.<k>.tsv")
    tr.add_argument("--fold", type=int)
    tr.add_argument("--all-folds", dest="all_folds", action="store_const", const=True)
    tr.add_argument("--texts")
    tr.add_argument("--embeddings")
    tr.add_argument("--dim", type=int)
    tr.add_argument("--scale", type=float)
    tr.add_argument("--lr", type=float)
    tr.add_argument("--l2", type=float)
    tr.add_argument("--negatives", type=int)
    tr.add_argument("--mu", type=float)
    tr.add_argument("--alpha", type=float)
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--patience", type=int)
    tr.add_argument("--batch", type=int)
    tr.add_argument("--seed", type=int)
    tr.add_argument("--val-fraction", dest="val_fraction", type=float)
    tr.add_argument("--cutoff", type=int)
    tr.add_argument("--workers", type=int)
    tr.add_argument("--out")

    ev = sub.add_parser("evaluate", help="evaluate a checkpoint on a test set")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--train", required=True)
    ev.add_argument("--test", required=True)
    ev.add_argument("--cutoff", type=int, default=10)
    ev.add_argument("--mu", type=float)
    ev.add_argument("--workers", type=int,
                    default=int(os.environ.get("RRANK_WORKERS", "1")))
    ev.add_argument("--candidates", type=int,
                    help="restrict scoring to the N most frequent train rationales")
    ev.add_argument("--out", help="write the metric lines to this file")
    ev.add_argument("--per-pair", dest="per_pair", help="write a per-pair metric TSV")

    rk = sub.add_parser("rank", help="print the top-k rationales for one (user, item)")
    rk.add_argument("--checkpoint", required=True)
    rk.add_argument("--train", required=True)
    rk.add_argument("--test")
    rk.add_argument("--texts")
    rk.add_argument("--user", required=True)
    rk.add_argument("--item", required=True)
    rk.add_argument("-k", type=int, default=10)
    rk.add_argument("--mu", type=float)

    ins = sub.add_parser("inspect", help="print checkpoint header information")
    ins.add_argument("--checkpoint", required=True)

    cv = sub.add_parser("convert", help="convert JSON-lines interactions to TSV")
    cv.add_argument("--input", required=True)
    cv.add_argument("--out", required=True)
    cv.add_argument("--user-key", default="user")
    cv.add_argument("--item-key", default="item")
    cv.add_argument("--rationale-key", default="rationales")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "train":
            cfg = merge_run_config(args)
            if cfg.model not in MODEL_NAMES:
                raise ConfigError(f"unknown model {cfg.model!r}")
            if cfg.cutoff < 1:
                raise ConfigError("cutoff must be >= 1")
            if cfg.all_folds:
                cmd_train_all_folds(cfg)
            else:
                cmd_train(cfg)
        elif args.command == "evaluate":
            if args.cutoff < 1:
                raise ConfigError("cutoff must be >= 1")
            cmd_evaluate(args.checkpoint, args.train, args.test, cutoff=args.cutoff,
                         mu=args.mu, workers=args.workers, out_path=args.out,
                         per_pair_path=args.per_pair, candidates=args.candidates)
        elif args.command == "rank":
            cmd_rank(args.checkpoint, args.train, args.test, args.user, args.item,
                     k=args.k, texts_path=args.texts, mu=args.mu)
        elif args.command == "inspect":
            cmd_inspect(args.checkpoint)
        elif args.command == "convert":
            cmd_convert(args.input, args.out, user_key=args.user_key,
                        item_key=args.item_key, rationale_key=args.rationale_key)
    except (ConfigError, corpus.ParseError, factors.CheckpointError,
            seminit.EmbeddingFormatError, KeyError, ValueError) as exc:
        message = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {message}", file=sys.stderr)
        return 1
    except train.DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
