"""rrank: latent-factor rationale rankers for explainable recommendation."""

__version__ = "0.1.0"

from .corpus import (  # noqa: F401
    Catalog,
    Histories,
    InteractionRecord,
    build_catalog,
    build_histories,
    parse_interactions,
    split_validation,
)
from .factors import (  # noqa: F401
    BperPlusExtras,
    FactorModel,
    ModelDims,
    RankList,
    init_random,
    load_checkpoint,
    rank_rationales,
    save_checkpoint,
)
from .seminit import EmbeddingTable, read_embedding_file, semantic_initialize, write_embedding_file  # noqa: F401
from .train import AdamState, TrainConfig, TrainReport, fit  # noqa: F401
from .evalrank import EvalPair, EvalReport, evaluate, ndcg_at, precision_recall_f1_at  # noqa: F401
