"""Shared scalar/vector primitives: squashing, leaky softmax, the compact
kernel used by routing, and the distance/similarity measures.

All functions accept plain ndarrays (returning ndarrays) or autodiff
Tensors (returning Tensors), so the same formula serves inference and
training.  Everything here is pure and safe to share across threads.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad

# Keeps the gradient of the vector norm finite at the origin without
# perturbing double-precision forward values (sqrt(x + 1e-30) == sqrt(x)
# to machine precision for any x of practical magnitude).
_NORM_EPS = 1e-30


def squash(x, axis: int = -1):
    """Norm-bounding nonlinearity: (|x|^2 / (1 + |x|^2)) * x / |x|.

    Maps any vector onto the same direction with length in [0, 1); the
    zero vector maps to itself (continuity limit).  ``axis`` selects the
    vector dimension, so a matrix of stacked capsules squashes row-wise.
    """
    sq = ad.sum(x * x, axis=axis, keepdims=True)
    scale = ad.sqrt(sq + _NORM_EPS) / (1.0 + sq)
    return x * scale


def leaky_softmax(logits, axis: int = -1):
    """Softmax with an implicit zero logit absorbing orphan mass.

    Appends one always-zero logit, normalizes over the extended set, and
    returns only the original components: every output lies in (0, 1) and
    each row sums to strictly less than one.  Shift-by-max keeps the
    exponentials overflow-safe.
    """
    shift = np.maximum(np.max(ad.raw(logits), axis=axis, keepdims=True), 0.0)
    e = ad.exp(logits - shift)
    denom = ad.sum(e, axis=axis, keepdims=True) + np.exp(-shift)
    return e / denom


def epanechnikov(x):
    """Compactly supported kernel: 1 - x on [0, 1), 0 for x >= 1."""
    xr = ad.raw(x)
    if np.any(xr < 0):
        raise ValueError("epanechnikov kernel is defined for x >= 0")
    out = ad.where(xr < 1.0, 1.0 - x, np.zeros_like(xr))
    return float(out) if np.isscalar(x) or getattr(x, "ndim", 1) == 0 else out


def epanechnikov_deriv(x):
    """Kernel slope: -1 inside the support, 0 on and beyond the boundary."""
    xr = ad.raw(x)
    if np.any(xr < 0):
        raise ValueError("epanechnikov kernel is defined for x >= 0")
    out = np.where(xr < 1.0, -1.0, 0.0)
    return float(out) if np.isscalar(x) or getattr(x, "ndim", 1) == 0 else out


def sq_distance(u, v, bandwidth: float = 1.0):
    """Squared euclidean distance scaled by the kernel bandwidth: |u-v|^2 / h^2."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    ur, vr = ad.raw(u), ad.raw(v)
    if ur.shape != vr.shape:
        raise ValueError(f"dimension mismatch: {ur.shape} vs {vr.shape}")
    diff = u - v
    return ad.sum(diff * diff) / (bandwidth * bandwidth)


def cosine_sim(u, v):
    """Cosine of the angle between two nonzero vectors, in [-1, 1]."""
    ur, vr = ad.raw(u), ad.raw(v)
    if ur.shape != vr.shape:
        raise ValueError(f"dimension mismatch: {ur.shape} vs {vr.shape}")
    nu, nv = np.linalg.norm(ur), np.linalg.norm(vr)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine similarity is undefined for zero-norm vectors")
    dot = ad.sum(u * v)
    norm_u = ad.sqrt(ad.sum(u * u) + _NORM_EPS)
    norm_v = ad.sqrt(ad.sum(v * v) + _NORM_EPS)
    return dot / (norm_u * norm_v)


def l2_norm(x, axis: int = -1):
    """Vector norms along ``axis``; differentiable away from zero
    (the origin takes a finite, near-zero slope)."""
    return ad.sqrt(ad.sum(x * x, axis=axis) + _NORM_EPS)
