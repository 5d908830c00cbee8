"""Independent straight-line reference implementations used as test oracles.

Everything here is deliberately written with explicit python loops and its
own little helper functions, sharing no code with the package beyond numpy,
so a vectorization or bookkeeping bug in the package cannot hide in the
oracle too.
"""

from __future__ import annotations

import math

import numpy as np


def squash_ref(x: np.ndarray) -> np.ndarray:
    nrm = math.sqrt(float((x * x).sum()))
    if nrm == 0.0:
        return np.zeros_like(x)
    return (nrm * nrm / (1.0 + nrm * nrm)) * (x / nrm)


def leaky_softmax_ref(row: np.ndarray) -> np.ndarray:
    mx = max(float(np.max(row)), 0.0)
    e = np.exp(row - mx)
    return e / (e.sum() + math.exp(-mx))


def kernel_ref(x: float) -> float:
    return 1.0 - x if x < 1.0 else 0.0


def sqdist_ref(u: np.ndarray, v: np.ndarray, h: float) -> float:
    d = u - v
    return float((d * d).sum()) / (h * h)


def nas_ref(c: np.ndarray, v: np.ndarray, cands: np.ndarray, h: float) -> float:
    """Eq-style double loop: -sum_ij c_ij k(d(v_j, u_ji))."""
    m, n = c.shape
    total = 0.0
    for i in range(m):
        for j in range(n):
            total += c[i, j] * kernel_ref(sqdist_ref(v[j], cands[j, i], h))
    return -total


def kde_route_ref(cands: np.ndarray, cfg, col_weights=None):
    """Literal transcription of the adaptive routing loop.

    Returns (v, a, c, iterations, nas_trace) with c in (m, n) orientation.
    col_weights, when given, weights each output column's kernel terms in
    the coupling update and the agreement sum (partial-routing negatives).
    """
    n, m, d = cands.shape
    w = np.ones(n) if col_weights is None else np.asarray(col_weights, dtype=float)
    c = np.full((m, n), 1.0 / n)
    v = np.array([cands[j].mean(axis=0) for j in range(n)])
    last = math.inf
    trace: list[float] = []
    iterations = 0
    for _ in range(cfg.max_iterations):
        iterations += 1
        for i in range(m):
            c[i] = leaky_softmax_ref(c[i])
        v_new = v.copy()
        for j in range(n):
            num = np.zeros(d)
            den = 0.0
            for i in range(m):
                if sqdist_ref(v[j], cands[j, i], cfg.bandwidth) < 1.0:
                    num = num + c[i, j] * cands[j, i]
                    den += c[i, j]
            if den > 0.0:
                v_new[j] = num / den
        v = v_new
        total = 0.0
        for i in range(m):
            for j in range(n):
                k = kernel_ref(sqdist_ref(v[j], cands[j, i], cfg.bandwidth))
                c[i, j] = c[i, j] + cfg.step_size * w[j] * k
                total += c[i, j] * k * w[j]
        nas = math.log(total) if total > 0.0 else -math.inf
        trace.append(nas)
        if nas == last:
            delta = 0.0
        elif math.isinf(nas) or math.isinf(last):
            delta = math.inf
        else:
            delta = abs(nas - last)
        if delta < cfg.tol:
            break
        last = nas
    a = np.array([math.sqrt(float((v[j] * v[j]).sum())) for j in range(n)])
    return v, a, c, iterations, trace


def sabour_route_ref(cands: np.ndarray, iterations: int):
    """Hand-rolled routing-by-agreement: softmax over outputs, squashed
    weighted vote sums, dot-product logit updates."""
    n, m, d = cands.shape
    b = np.zeros((m, n))
    for _ in range(iterations):
        c = np.zeros((m, n))
        for i in range(m):
            e = np.exp(b[i] - b[i].max())
            c[i] = e / e.sum()
        v = np.zeros((n, d))
        for j in range(n):
            s = np.zeros(d)
            for i in range(m):
                s = s + c[i, j] * cands[j, i]
            v[j] = squash_ref(s)
        for i in range(m):
            for j in range(n):
                b[i, j] += float(cands[j, i] @ v[j])
    a = np.array([math.sqrt(float((v[j] * v[j]).sum())) for j in range(n)])
    return v, a, c


# -- metric oracles ------------------------------------------------------------


def precision_ref(ranked, truth, k) -> float:
    truth = set(truth)
    if not truth:
        return 0.0
    return len([x for x in ranked[:k] if x in truth]) / k


def ndcg_ref(ranked, truth, k) -> float:
    truth = set(truth)
    if not truth:
        return 0.0
    gains = [1.0 if x in truth else 0.0 for x in ranked[:k]]
    dcg = 0.0
    for r, g in enumerate(gains, start=1):
        dcg += g / math.log2(r + 1)
    ideal = sorted([1.0] * len(truth) + [0.0] * max(0, k - len(truth)), reverse=True)[:k]
    idcg = 0.0
    for r, g in enumerate(ideal, start=1):
        idcg += g / math.log2(r + 1)
    return dcg / idcg


def ap_ref(flags) -> float:
    hits = 0
    acc = 0.0
    for rank, f in enumerate(flags, start=1):
        if f:
            hits += 1
            acc += hits / rank
    return acc / hits


def map_ref(groups) -> float:
    judged = [g for g in groups if any(g)]
    return sum(ap_ref(g) for g in judged) / len(judged)


def mrr_ref(groups) -> float:
    judged = [g for g in groups if any(g)]
    acc = 0.0
    for g in judged:
        for rank, f in enumerate(g, start=1):
            if f:
                acc += 1.0 / rank
                break
    return acc / len(judged)
