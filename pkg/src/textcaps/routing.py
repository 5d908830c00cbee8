"""Routing from condensed capsules to output capsules.

Candidates are held as a (n_out, n_in, d) array: ``candidates[j, i]`` is the
vote of input capsule i for output capsule j.  Coupling matrices follow the
opposite, conventional orientation (n_in, n_out) in all public results.

Three routers are provided:

* :func:`kde_route_adaptive` - iterative minimization of the negative
  agreement score in kernel-density form.  Each iteration renormalizes the
  couplings with a leaky softmax, moves every output capsule to the
  coupling-weighted mean of the votes inside its kernel support (one mean
  shift step), reinforces couplings by the kernel agreement, and stops as
  soon as the log agreement score stabilizes - so the iteration count
  adapts per instance.
* :func:`dynamic_route_baseline` - classic routing-by-agreement with a
  fixed iteration count, kept as a comparator.
* :func:`partial_route` - the adaptive router restricted to a positive set
  plus sampled negatives, with the negative terms down-weighted; output
  capsules outside the restriction stay at zero.

Functions accept candidate tensors as ndarrays or autodiff Tensors; in the
latter case the executed iterations are recorded so training can
differentiate through the unrolled routing (the convergence test itself is
control flow and carries no gradient).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .numerics import leaky_softmax, squash

_NO_AGREEMENT = -math.inf  # log of a zero agreement sum


@dataclass
class RoutingConfig:
    """Knobs for the adaptive router and partial routing.

    step_size: coupling reinforcement rate per iteration.
    tol: convergence tolerance on the change of the log agreement score.
    max_iterations: hard cap on routing iterations.
    bandwidth: kernel bandwidth h in |u - v|^2 / h^2.
    neg_weight: down-weighting of sampled-negative terms in partial routing.
    neg_samples: negatives drawn per instance; None picks 2x|positives|,
        capped at 10.
    """

    step_size: float = 0.1
    tol: float = 1e-3
    max_iterations: int = 10
    bandwidth: float = 1.0
    neg_weight: float = 0.5
    neg_samples: int | None = None

    def __post_init__(self) -> None:
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.neg_weight < 0:
            raise ValueError("neg_weight must be nonnegative")
        if self.neg_samples is not None and self.neg_samples < 0:
            raise ValueError("neg_samples must be nonnegative")


@dataclass
class RoutingResult:
    """Outcome of one routing run.

    v: (n_out, d) output capsules.  a: (n_out,) activations, exactly the
    capsule norms.  c: (n_in, n_out) coupling matrix (current accumulator
    values, detached from any gradient tape).  nas_trace holds the
    per-iteration log agreement score; delta_trace the per-iteration max
    elementwise capsule movement.  v and a are Tensors when routing was
    recorded for training, plain arrays otherwise.
    """

    v: object
    a: object
    c: np.ndarray
    iterations: int
    nas_trace: list[float] = field(default_factory=list)
    delta_trace: list[float] = field(default_factory=list)


def predict_candidates(capsules, transforms):
    """Per-output linear votes: candidates[j, i] = W_j @ u_i.

    capsules: (n_in, d); transforms: (n_out, d, d), one matrix per output
    capsule, shared across inputs.  Returns (n_out, n_in, d).
    """
    m, d = ad.raw(capsules).shape
    n, dr, dc = ad.raw(transforms).shape
    if dr != d or dc != d:
        raise ValueError(f"transform shape {(dr, dc)} does not match capsule dim {d}")
    flat = ad.reshape(transforms, (n * d, d))  # rows: output j, row r of W_j
    votes = ad.matmul(capsules, ad.transpose(flat))  # (m, n*d)
    return ad.transpose(ad.reshape(votes, (m, n, d)), (1, 0, 2))


def _pair_kernels(candidates, v, bandwidth: float):
    """Kernel values k(|v_j - u_ji|^2 / h^2) for all pairs: (n_out, n_in)."""
    n, m, d = ad.raw(candidates).shape
    diff = candidates - ad.reshape(v, (n, 1, d))
    dist = ad.sum(diff * diff, axis=2) / (bandwidth * bandwidth)
    return ad.where(ad.raw(dist) < 1.0, 1.0 - dist, np.zeros((n, m)))


def nas_score(c, v, candidates, cfg: RoutingConfig):
    """Negative agreement score: -sum_ij c_ij * k(d(v_j, u_ji)).

    c: (n_in, n_out) couplings; v: (n_out, d); candidates: (n_out, n_in, d).
    Lower is better; 0 means no vote lies inside any kernel support.
    """
    kern = _pair_kernels(candidates, v, cfg.bandwidth)  # (n, m)
    score = -ad.sum(ad.transpose(c) * kern)
    return score if isinstance(score, ad.Tensor) else float(score)


def nas_log_score(c, v, candidates, cfg: RoutingConfig) -> float:
    """log of the total agreement sum, -inf when the sum is zero."""
    total = -nas_score(c, v, candidates, cfg)
    total = float(ad.raw(total))
    return math.log(total) if total > 0.0 else _NO_AGREEMENT


def mean_shift_step(candidates, v, c, bandwidth: float):
    """One density-ascent move of every output capsule.

    Each v_j jumps to the coupling-weighted mean of the votes currently
    inside its kernel support; a capsule whose support is empty keeps its
    position.  With couplings held fixed this step never increases the
    negative agreement score.  c is (n_in, n_out).
    """
    return _mean_shift(candidates, v, ad.transpose(c), bandwidth)


def _mean_shift(candidates, v, c_t, bandwidth: float):
    """Mean-shift step in internal (n_out, n_in) orientation."""
    n, m, d = ad.raw(candidates).shape
    diff = candidates - ad.reshape(v, (n, 1, d))
    dist = ad.sum(diff * diff, axis=2) / (bandwidth * bandwidth)
    inside = ad.raw(dist) < 1.0  # strict: boundary points count as outside
    w = ad.where(inside, c_t, np.zeros((n, m)))
    denom = ad.sum(w, axis=1, keepdims=True)  # (n, 1)
    num = ad.sum(ad.reshape(w, (n, m, 1)) * candidates, axis=1)  # (n, d)
    has_support = ad.raw(denom) > 0.0
    safe = ad.where(has_support, denom, np.ones_like(ad.raw(denom)))
    return ad.where(has_support, num / safe, v)


def _nas_delta(nas: float, last: float) -> float:
    if nas == last:
        return 0.0
    if math.isinf(nas) or math.isinf(last):
        return math.inf
    return abs(nas - last)


def _adaptive_core(candidates, cfg: RoutingConfig, col_weights: np.ndarray | None = None):
    """Adaptive routing loop on (n_out, n_in, d) candidates.

    col_weights optionally down-weights whole output capsules (partial
    routing negatives) in both the coupling reinforcement and the
    agreement sum.  Returns (v, a, c_t, iterations, nas_trace, delta_trace)
    with c_t in internal (n_out, n_in) orientation.
    """
    n, m, d = ad.raw(candidates).shape
    if n < 1 or m < 1:
        raise ValueError("routing needs at least one input and one output capsule")
    h = cfg.bandwidth
    wcol = None if col_weights is None else np.asarray(col_weights, dtype=np.float64).reshape(n, 1)

    raw_c = np.full((n, m), 1.0 / n)
    # The first distance evaluation reads v before any assignment; start at
    # the uniform mean of each output's votes (parameter-free and inside
    # their convex hull).
    v = ad.sum(candidates, axis=1) / float(m)

    last_nas = math.inf
    nas_trace: list[float] = []
    delta_trace: list[float] = []
    iterations = 0
    for _ in range(cfg.max_iterations):
        iterations += 1
        c = leaky_softmax(raw_c, axis=0)  # normalize over outputs, per input
        v_new = _mean_shift(candidates, v, c, h)
        kern = _pair_kernels(candidates, v_new, h)
        step = cfg.step_size * kern
        if wcol is not None:
            step = step * wcol
        raw_c = c + step
        terms = raw_c * kern
        if wcol is not None:
            terms = terms * wcol
        total = float(ad.raw(ad.sum(terms)))
        nas = math.log(total) if total > 0.0 else _NO_AGREEMENT
        nas_trace.append(nas)
        delta_trace.append(float(np.max(np.abs(ad.raw(v_new) - ad.raw(v)))))
        v = v_new
        if _nas_delta(nas, last_nas) < cfg.tol:
            break
        last_nas = nas

    a = ad.sqrt_guarded(ad.sum(v * v, axis=1))
    return v, a, raw_c, iterations, nas_trace, delta_trace


def kde_route_adaptive(candidates, cfg: RoutingConfig) -> RoutingResult:
    """Route with per-instance adaptive iteration count (see module docs)."""
    v, a, c_t, iterations, nas_trace, delta_trace = _adaptive_core(candidates, cfg)
    return RoutingResult(
        v=v,
        a=a,
        c=np.array(ad.raw(ad.transpose(c_t))),
        iterations=iterations,
        nas_trace=nas_trace,
        delta_trace=delta_trace,
    )


def _softmax(logits, axis: int):
    shift = np.max(ad.raw(logits), axis=axis, keepdims=True)
    e = ad.exp(logits - shift)
    return e / ad.sum(e, axis=axis, keepdims=True)


def dynamic_route_baseline(candidates, iterations: int, cfg: RoutingConfig | None = None) -> RoutingResult:
    """Classic routing-by-agreement with a fixed iteration count.

    Logits start at zero; couplings are a softmax over outputs; each output
    capsule is the squashed coupling-weighted vote sum; logits grow by the
    vote/output dot products.  The same log agreement score as the adaptive
    router is traced per iteration for comparison, but never used to stop
    early.
    """
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    cfg = cfg or RoutingConfig()
    n, m, d = ad.raw(candidates).shape
    b = np.zeros((n, m))
    nas_trace: list[float] = []
    delta_trace: list[float] = []
    v_prev = np.zeros((n, d))
    v = None
    c = None
    for _ in range(iterations):
        c = _softmax(b, axis=0)
        s = ad.sum(ad.reshape(c, (n, m, 1)) * candidates, axis=1)
        v = squash(s, axis=-1)
        b = b + ad.sum(candidates * ad.reshape(v, (n, 1, d)), axis=2)
        kern = _pair_kernels(candidates, v, cfg.bandwidth)
        total = float(ad.raw(ad.sum(c * kern)))
        nas_trace.append(math.log(total) if total > 0.0 else _NO_AGREEMENT)
        delta_trace.append(float(np.max(np.abs(ad.raw(v) - v_prev))))
        v_prev = ad.raw(v)
    a = ad.sqrt_guarded(ad.sum(v * v, axis=1))
    return RoutingResult(
        v=v,
        a=a,
        c=np.array(ad.raw(ad.transpose(c))),
        iterations=iterations,
        nas_trace=nas_trace,
        delta_trace=delta_trace,
    )


def partial_route(
    candidates,
    pos: Iterable[int],
    neg: Iterable[int],
    cfg: RoutingConfig,
) -> RoutingResult:
    """Adaptive routing restricted to pos + neg output capsules.

    Kernel terms of negative outputs are weighted by cfg.neg_weight in both
    the coupling reinforcement and the agreement sum.  Capsules outside the
    restriction come back as zero vectors with zero activation; their
    coupling columns are zero.  With full coverage and neg_weight == 1 this
    reproduces unrestricted routing exactly.
    """
    pos = sorted(set(int(j) for j in pos))
    neg = sorted(set(int(j) for j in neg))
    if not pos:
        raise ValueError("positive output set must be nonempty")
    overlap = set(pos) & set(neg)
    if overlap:
        raise ValueError(f"positive and negative sets overlap: {sorted(overlap)}")
    n_full, m, d = ad.raw(candidates).shape
    cols = np.array(sorted(pos + neg), dtype=np.intp)
    if cols[0] < 0 or cols[-1] >= n_full:
        raise ValueError("output ids fall outside the output space")

    neg_set = set(neg)
    if neg_set and cfg.neg_weight != 1.0:
        col_weights = np.array([cfg.neg_weight if j in neg_set else 1.0 for j in cols])
    else:
        col_weights = None

    sub = ad.take(candidates, cols) if isinstance(candidates, ad.Tensor) else ad.raw(candidates)[cols]
    v_sub, a_sub, c_t, iterations, nas_trace, delta_trace = _adaptive_core(sub, cfg, col_weights)

    v = ad.embed_rows(v_sub, cols, n_full)
    a = ad.embed_rows(a_sub, cols, n_full)
    c = np.zeros((m, n_full))
    c[:, cols] = ad.raw(c_t).T
    return RoutingResult(
        v=v,
        a=a,
        c=c,
        iterations=iterations,
        nas_trace=nas_trace,
        delta_trace=delta_trace,
    )


def write_trace(result: RoutingResult, out: IO[str]) -> None:
    """One line per iteration: ``iter<TAB>log_nas<TAB>max_delta_v``."""
    for i, (nas, dv) in enumerate(zip(result.nas_trace, result.delta_trace), start=1):
        out.write(f"{i}\t{nas!r}\t{dv!r}\n")
