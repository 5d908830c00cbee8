"""Toy-scale trainers and evaluators for the two tasks.

Both trainers are fully deterministic given (seed, config): one
numpy Generator drives parameter init, epoch shuffling, and negative
sampling, in a fixed draw order.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .data import Document, EmbeddingTable, QaPair, doc_matrix
from .metrics import EvalReport, map_score, mrr_score, ndcg_at_k, precision_at_k, rank_by_score
from .model import (
    AdamState,
    Instance,
    ModelConfig,
    ModelParams,
    TrainConfig,
    adam_step,
    candidate_labels,
    forward,
    instance_loss,
)
from .numerics import cosine_sim


@dataclass
class EpochStats:
    epoch: int
    loss: float
    seconds: float


def draw_negatives(
    rng: np.random.Generator,
    labels: Sequence[int],
    n_labels: int,
    neg_samples: int | None,
) -> tuple[int, ...]:
    """Uniform sample without replacement from the non-positive labels;
    None picks 2x|labels| capped at 10 (and always capped by the pool)."""
    pool = np.array([j for j in range(n_labels) if j not in set(labels)])
    count = min(2 * len(labels), 10) if neg_samples is None else neg_samples
    count = min(count, len(pool))
    if count == 0:
        return ()
    picks = rng.choice(pool, size=count, replace=False)
    return tuple(sorted(int(x) for x in picks))


def _optimize_batch(batch: list[Instance], params: ModelParams, cfg: TrainConfig, adam: AdamState) -> float:
    params.zero_grad()
    total = None
    value = 0.0
    for inst in batch:
        loss = instance_loss(inst, params, cfg, record=True)
        value += float(ad.raw(loss))
        total = loss if total is None else total + loss
    scaled = total * (1.0 / len(batch))
    if isinstance(scaled, ad.Tensor):
        scaled.backward()
    adam_step(params, adam, cfg.learning_rate)
    return value / len(batch)


def train_classifier(
    docs: Sequence[Document],
    table: EmbeddingTable,
    model_cfg: ModelConfig,
    cfg: TrainConfig,
) -> tuple[ModelParams, list[EpochStats]]:
    """Partial-routing training of the multi-label classifier."""
    if not docs:
        raise ValueError("no training documents")
    rng = np.random.default_rng(cfg.seed)
    params = ModelParams(model_cfg, rng)
    adam = AdamState(params)
    mats = [doc_matrix(d.token_ids, table, model_cfg.max_len) for d in docs]
    labels = [tuple(sorted(d.labels)) for d in docs]

    stats: list[EpochStats] = []
    for epoch in range(1, cfg.epochs + 1):
        start = time.perf_counter()
        negs = [
            draw_negatives(rng, labels[i], model_cfg.n_labels, cfg.routing.neg_samples)
            for i in range(len(docs))
        ]
        order = rng.permutation(len(docs))
        epoch_loss = 0.0
        n_batches = 0
        for lo in range(0, len(order), cfg.batch_size):
            batch = [
                Instance(X=mats[i], labels=labels[i], neg=negs[i])
                for i in order[lo : lo + cfg.batch_size]
            ]
            epoch_loss += _optimize_batch(batch, params, cfg, adam)
            n_batches += 1
        stats.append(EpochStats(epoch, epoch_loss / n_batches, time.perf_counter() - start))
    return params, stats


def evaluate_classifier(
    docs: Sequence[Document],
    table: EmbeddingTable,
    params: ModelParams,
    cfg: TrainConfig,
    ks: Sequence[int] = (1, 3, 5),
) -> EvalReport:
    """Candidate-constrained inference, then P@k and NDCG@k means."""
    if not docs:
        raise ValueError("no evaluation documents")
    mcfg = params.config
    ks = [k for k in ks if k <= mcfg.n_labels]
    sums = {f"P@{k}": 0.0 for k in ks}
    sums.update({f"NDCG@{k}": 0.0 for k in ks})
    for doc in docs:
        X = doc_matrix(doc.token_ids, table, mcfg.max_len)
        cands = candidate_labels(X, params, cfg.candidate_k)
        res = forward(X, params, cfg, mode="infer", candidates=cands)
        scores = ad.raw(res.a)[cands]
        ranked = rank_by_score(scores, ids=cands)
        for k in ks:
            sums[f"P@{k}"] += precision_at_k(ranked, doc.labels, k)
            sums[f"NDCG@{k}"] += ndcg_at_k(ranked, doc.labels, k)
    metrics = {name: value / len(docs) for name, value in sums.items()}
    return EvalReport(metrics=metrics, instances=len(docs))


def _group_pairs(pairs: Sequence[QaPair]) -> dict[int, list[QaPair]]:
    groups: dict[int, list[QaPair]] = {}
    for p in pairs:
        groups.setdefault(p.question_id, []).append(p)
    return groups


def _final_capsule(X: np.ndarray, params: ModelParams, cfg: TrainConfig, record: bool):
    res = forward(X, params, cfg, mode="infer", record=record)
    return ad.take(res.v, 0) if isinstance(res.v, ad.Tensor) else ad.raw(res.v)[0]


def train_qa(
    pairs: Sequence[QaPair],
    table: EmbeddingTable,
    model_cfg: ModelConfig,
    cfg: TrainConfig,
) -> tuple[ModelParams, list[EpochStats]]:
    """Pairwise hinge training: a question's relevant answer must outscore
    each sampled negative by the configured cosine margin."""
    if model_cfg.n_labels != 1 or model_cfg.task != "qa":
        raise ValueError("QA training expects task='qa' with a single output capsule")
    groups = _group_pairs(pairs)
    qids = sorted(groups)
    usable = [
        q for q in qids
        if any(p.relevant for p in groups[q]) and any(not p.relevant for p in groups[q])
    ]
    if not usable:
        raise ValueError("QA training needs questions with both positive and negative answers")
    rng = np.random.default_rng(cfg.seed)
    params = ModelParams(model_cfg, rng)
    adam = AdamState(params)

    q_mat = {q: doc_matrix(groups[q][0].question_ids, table, model_cfg.max_len) for q in usable}
    pos_mats = {
        q: [doc_matrix(p.answer_ids, table, model_cfg.max_len) for p in groups[q] if p.relevant]
        for q in usable
    }
    neg_mats = {
        q: [doc_matrix(p.answer_ids, table, model_cfg.max_len) for p in groups[q] if not p.relevant]
        for q in usable
    }

    stats: list[EpochStats] = []
    for epoch in range(1, cfg.epochs + 1):
        start = time.perf_counter()
        order = rng.permutation(len(usable))
        epoch_loss = 0.0
        n_batches = 0
        for lo in range(0, len(order), cfg.batch_size):
            qbatch = [usable[i] for i in order[lo : lo + cfg.batch_size]]
            params.zero_grad()
            total = None
            n_terms = 0
            for q in qbatch:
                vq = _final_capsule(q_mat[q], params, cfg, record=True)
                pos_scores = [
                    cosine_sim(vq, _final_capsule(X, params, cfg, record=True))
                    for X in pos_mats[q]
                ]
                neg_scores = [
                    cosine_sim(vq, _final_capsule(X, params, cfg, record=True))
                    for X in neg_mats[q]
                ]
                for s_pos in pos_scores:
                    for s_neg in neg_scores:
                        hinge = ad.maximum(cfg.qa_margin - s_pos + s_neg, 0.0)
                        total = hinge if total is None else total + hinge
                        n_terms += 1
            scaled = total * (1.0 / n_terms)
            if isinstance(scaled, ad.Tensor):
                scaled.backward()
            adam_step(params, adam, cfg.learning_rate)
            epoch_loss += float(ad.raw(scaled))
            n_batches += 1
        stats.append(EpochStats(epoch, epoch_loss / n_batches, time.perf_counter() - start))
    return params, stats


def evaluate_qa(
    pairs: Sequence[QaPair],
    table: EmbeddingTable,
    params: ModelParams,
    cfg: TrainConfig,
) -> EvalReport:
    """Rank each question's answers by capsule cosine; report MAP and MRR."""
    from .model import qa_score

    groups = _group_pairs(pairs)
    mcfg = params.config
    flag_groups: list[list[bool]] = []
    for qid in sorted(groups):
        batch = groups[qid]
        q_X = doc_matrix(batch[0].question_ids, table, mcfg.max_len)
        scores = [
            qa_score(q_X, doc_matrix(p.answer_ids, table, mcfg.max_len), params, cfg)
            for p in batch
        ]
        ranked = rank_by_score(scores)
        flag_groups.append([batch[i].relevant for i in ranked])
    metrics = {"MAP": map_score(flag_groups), "MRR": mrr_score(flag_groups)}
    return EvalReport(metrics=metrics, instances=len(flag_groups))
