"""Feature extraction and capsule-forming layers.

The pipeline below turns a document matrix (stacked word embeddings) into a
fixed-size set of capsules:

    conv_features     multi-window 1-D convolutions with ReLU
    primary_capsules  per-channel group convolution + squash
    compress          learned weighted pooling down to a fixed capsule count

Document matrices are constants (embeddings are not trained); only the
filter/weight arguments participate in gradients, so each function accepts
them as ndarrays or autodiff Tensors.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .numerics import squash


def _pad_rows(X: np.ndarray, min_len: int) -> np.ndarray:
    """Left-pad with zero rows until the document has at least min_len rows."""
    if X.shape[0] >= min_len:
        return X
    pad = np.zeros((min_len - X.shape[0], X.shape[1]))
    return np.concatenate([pad, X], axis=0)


def _window_matrix(X: np.ndarray, k: int) -> np.ndarray:
    """All length-k row windows of X, flattened: shape (l - k + 1, k * v)."""
    l, v = X.shape
    windows = np.lib.stride_tricks.sliding_window_view(X, (k, v))[:, 0]
    return windows.reshape(l - k + 1, k * v)


def conv_features(X, filters: Mapping[int, object], window_sizes: Sequence[int]):
    """Slide each window size's filter bank over the document.

    X: (l, v) document matrix.  filters[k]: (k * v, n_filters) bank for
    window size k.  Returns {k: (l - k + 1, n_filters)} of ReLU-activated
    features; documents shorter than k are left-padded with zero rows.
    """
    Xr = ad.raw(X)
    if Xr.size == 0:
        raise ValueError("empty document matrix")
    maps = {}
    for k in window_sizes:
        Xk = _pad_rows(Xr, k)
        maps[k] = ad.relu(ad.matmul(_window_matrix(Xk, k), filters[k]))
    return maps


def primary_capsules(feature_maps: Mapping[int, object], group_weights, d: int):
    """Turn every feature scalar into a d-dimensional capsule.

    Each channel (window size, filter) owns one weight vector w in R^d; the
    scalar m scales it to m * w, which is then squashed.  group_weights is
    (n_channels, d) with channels ordered by window size then filter index.
    Output is (total_scalars, d), position-major within each map.
    """
    if d < 2:
        raise ValueError("capsule dimension must be at least 2")
    blocks = []
    offset = 0
    for k in sorted(feature_maps):
        fmap = feature_maps[k]
        n_pos, n_filt = ad.raw(fmap).shape
        w = group_weights[offset : offset + n_filt]  # (n_filt, d)
        offset += n_filt
        # (pos, filt, 1) * (1, filt, d) -> (pos, filt, d)
        caps = ad.reshape(fmap, (n_pos, n_filt, 1)) * ad.reshape(w, (1, n_filt, d))
        blocks.append(ad.reshape(caps, (n_pos * n_filt, d)))
    if offset != ad.raw(group_weights).shape[0]:
        raise ValueError(
            f"group weight count {ad.raw(group_weights).shape[0]} does not match "
            f"{offset} feature-map channels"
        )
    return squash(ad.concatenate(blocks, axis=0), axis=-1)


def compress(capsules, B):
    """Condense capsules by a learned weighted sum, then re-squash.

    B: (n_condensed, n_primary).  Re-squashing keeps the length-as-
    probability invariant for the routing layer; output size is fixed at
    n_condensed regardless of document length.
    """
    n_primary = ad.raw(capsules).shape[0]
    if ad.raw(B).shape[1] != n_primary:
        raise ValueError(
            f"compression matrix has {ad.raw(B).shape[1]} columns "
            f"but {n_primary} capsules were given"
        )
    return squash(ad.matmul(B, capsules), axis=-1)
