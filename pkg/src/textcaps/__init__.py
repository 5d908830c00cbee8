"""Capsule networks for text: adaptive KDE routing, capsule compression,
partial routing, and toy-scale training harnesses for multi-label
classification and QA pair ranking."""

from .data import (
    Document,
    EmbeddingTable,
    QaPair,
    doc_matrix,
    load_dataset,
    load_embeddings,
    save_dataset,
    synth_multilabel,
    synth_qa,
    write_embeddings,
)
from .metrics import (
    EvalReport,
    map_score,
    mrr_score,
    ndcg_at_k,
    precision_at_k,
    rank_by_score,
)
from .model import (
    AdamState,
    Instance,
    ModelConfig,
    ModelParams,
    TrainConfig,
    adam_step,
    backward,
    batch_loss,
    candidate_labels,
    finite_diff_check,
    forward,
    load_checkpoint,
    margin_loss,
    qa_score,
    save_checkpoint,
    sgd_step,
)
from .routing import (
    RoutingConfig,
    RoutingResult,
    dynamic_route_baseline,
    kde_route_adaptive,
    mean_shift_step,
    nas_log_score,
    nas_score,
    partial_route,
    predict_candidates,
    write_trace,
)
from .training import (
    EpochStats,
    evaluate_classifier,
    evaluate_qa,
    train_classifier,
    train_qa,
)

__all__ = [
    "AdamState",
    "Document",
    "EmbeddingTable",
    "EpochStats",
    "EvalReport",
    "Instance",
    "ModelConfig",
    "ModelParams",
    "QaPair",
    "RoutingConfig",
    "RoutingResult",
    "TrainConfig",
    "adam_step",
    "backward",
    "batch_loss",
    "candidate_labels",
    "doc_matrix",
    "dynamic_route_baseline",
    "evaluate_classifier",
    "evaluate_qa",
    "finite_diff_check",
    "forward",
    "kde_route_adaptive",
    "load_checkpoint",
    "load_dataset",
    "load_embeddings",
    "map_score",
    "margin_loss",
    "mean_shift_step",
    "mrr_score",
    "ndcg_at_k",
    "nas_log_score",
    "nas_score",
    "partial_route",
    "precision_at_k",
    "predict_candidates",
    "qa_score",
    "rank_by_score",
    "save_checkpoint",
    "save_dataset",
    "sgd_step",
    "synth_multilabel",
    "synth_qa",
    "train_classifier",
    "train_qa",
    "write_embeddings",
    "write_trace",
]

__version__ = "0.1.0"
