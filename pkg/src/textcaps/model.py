"""End-to-end capsule model: parameter container, forward pass, losses,
reverse-mode batch gradients with a finite-difference oracle, optimizer
steps, candidate-label generation, QA scoring, and the checkpoint
container.

Documents enter as fixed-length embedding matrices (the harness pads or
truncates); embeddings themselves are frozen inputs, so every gradient
lands in one of the parameter tensors below.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .layers import compress, conv_features, primary_capsules
from .numerics import cosine_sim
from .routing import (
    RoutingConfig,
    RoutingResult,
    dynamic_route_baseline,
    partial_route,
    predict_candidates,
)

_CHECKPOINT_MAGIC = b"TCPS"
_CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    """Architecture of the capsule network (all sizes fixed per model)."""

    embed_dim: int
    max_len: int
    n_labels: int
    window_sizes: tuple[int, ...] = (2, 4, 8)
    n_filters: int = 32
    capsule_dim: int = 16
    n_condensed: int = 256
    task: str = "classify"  # "classify" | "qa"

    def __post_init__(self) -> None:
        self.window_sizes = tuple(int(k) for k in self.window_sizes)
        if self.embed_dim < 1 or self.n_labels < 1 or self.n_filters < 1:
            raise ValueError("embed_dim, n_labels and n_filters must be positive")
        if self.capsule_dim < 2:
            raise ValueError("capsule_dim must be at least 2")
        if not self.window_sizes:
            raise ValueError("at least one window size is required")
        if self.max_len < max(self.window_sizes):
            raise ValueError("max_len must cover the largest window")
        if not 1 <= self.n_condensed < self.n_primary:
            raise ValueError(
                f"n_condensed must lie in [1, {self.n_primary}) for this geometry"
            )
        if self.task not in ("classify", "qa"):
            raise ValueError(f"unknown task {self.task!r}")

    @property
    def n_channels(self) -> int:
        return len(self.window_sizes) * self.n_filters

    @property
    def n_primary(self) -> int:
        return sum(self.max_len - k + 1 for k in self.window_sizes) * self.n_filters


@dataclass
class TrainConfig:
    """Optimization and loss settings, including the routing config."""

    learning_rate: float = 1e-3
    batch_size: int = 16
    epochs: int = 20
    seed: int = 0
    margin_pos: float = 0.9
    margin_neg: float = 0.1
    down_weight: float = 0.5
    candidate_k: int = 200
    routing_kind: str = "adaptive"  # "adaptive" | "sabour"
    baseline_iterations: int = 3
    scorer_loss_weight: float = 1.0
    qa_margin: float = 0.2
    routing: RoutingConfig = field(default_factory=RoutingConfig)

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be at least 1")
        if not 0.0 < self.margin_neg < self.margin_pos <= 1.0:
            raise ValueError("margins must satisfy 0 < margin_neg < margin_pos <= 1")
        if self.down_weight < 0:
            raise ValueError("down_weight must be nonnegative")
        if self.candidate_k < 1:
            raise ValueError("candidate_k must be at least 1")
        if self.routing_kind not in ("adaptive", "sabour"):
            raise ValueError(f"unknown routing_kind {self.routing_kind!r}")
        if self.baseline_iterations < 1:
            raise ValueError("baseline_iterations must be at least 1")
        if self.scorer_loss_weight < 0:
            raise ValueError("scorer_loss_weight must be nonnegative")
        if self.qa_margin <= 0:
            raise ValueError("qa_margin must be positive")
        if isinstance(self.routing, dict):
            self.routing = RoutingConfig(**self.routing)


@dataclass
class Instance:
    """One training example: document matrix, true labels, sampled negatives."""

    X: np.ndarray
    labels: tuple[int, ...]
    neg: tuple[int, ...] = ()


class ModelParams:
    """All learnable tensors, each an autodiff leaf with a grad buffer."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator | None = None):
        self.config = config
        cfg = config
        d, v = cfg.capsule_dim, cfg.embed_dim

        def init(shape, scale):
            if rng is None:
                return np.zeros(shape)
            return rng.normal(0.0, scale, size=shape)

        self._tensors: dict[str, ad.Tensor] = {}
        for k in cfg.window_sizes:
            self._tensors[f"conv{k}"] = ad.Tensor(init((k * v, cfg.n_filters), 2.0 / np.sqrt(k * v)))
        self._tensors["group"] = ad.Tensor(init((cfg.n_channels, d), 2.0 / np.sqrt(d)))
        self._tensors["compress"] = ad.Tensor(init((cfg.n_condensed, cfg.n_primary), 2.0 / np.sqrt(cfg.n_primary)))
        self._tensors["transform"] = ad.Tensor(init((cfg.n_labels, d, d), 2.0 / np.sqrt(d)))
        self._tensors["scorer"] = ad.Tensor(np.zeros((cfg.n_labels, v)))

    def named(self) -> list[tuple[str, ad.Tensor]]:
        return list(self._tensors.items())

    def __getitem__(self, name: str) -> ad.Tensor:
        return self._tensors[name]

    def view(self, record: bool) -> dict[str, object]:
        """Tensors when recording a graph, raw arrays otherwise."""
        if record:
            return dict(self._tensors)
        return {name: t.data for name, t in self._tensors.items()}

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.zero_grad()

    def copy_state(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._tensors.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for name, t in self._tensors.items():
            if state[name].shape != t.data.shape:
                raise ValueError(f"shape mismatch for {name}: {state[name].shape} vs {t.data.shape}")
            t.data = state[name].astype(np.float64).copy()


def _restricted_baseline(candidates, cols: np.ndarray, iterations: int, rcfg: RoutingConfig) -> RoutingResult:
    """Fixed-iteration baseline routing on a column subset, lifted back to
    the full output space (zeros elsewhere)."""
    n_full, m, _ = ad.raw(candidates).shape
    if len(cols) == n_full:
        return dynamic_route_baseline(candidates, iterations, rcfg)
    sub = ad.take(candidates, cols) if isinstance(candidates, ad.Tensor) else ad.raw(candidates)[cols]
    res = dynamic_route_baseline(sub, iterations, rcfg)
    c = np.zeros((m, n_full))
    c[:, cols] = res.c
    return RoutingResult(
        v=ad.embed_rows(res.v, cols, n_full),
        a=ad.embed_rows(res.a, cols, n_full),
        c=c,
        iterations=res.iterations,
        nas_trace=res.nas_trace,
        delta_trace=res.delta_trace,
    )


def forward(
    X,
    params: ModelParams,
    cfg: TrainConfig,
    *,
    mode: str = "infer",
    pos: Sequence[int] | None = None,
    neg: Sequence[int] | None = None,
    candidates: Sequence[int] | None = None,
    record: bool = False,
) -> RoutingResult:
    """Document matrix -> routed output capsules.

    Train mode routes only the positive labels plus sampled negatives
    (partial routing).  Infer mode routes a candidate-constrained output
    space (all labels when ``candidates`` is None).  With ``record`` the
    executed computation is taped for a later backward pass.
    """
    mcfg = params.config
    Xr = ad.raw(X)
    if Xr.shape != (mcfg.max_len, mcfg.embed_dim):
        raise ValueError(f"expected document matrix {(mcfg.max_len, mcfg.embed_dim)}, got {Xr.shape}")
    p = params.view(record)
    fmaps = conv_features(Xr, {k: p[f"conv{k}"] for k in mcfg.window_sizes}, mcfg.window_sizes)
    prim = primary_capsules(fmaps, p["group"], mcfg.capsule_dim)
    condensed = compress(prim, p["compress"])
    votes = predict_candidates(condensed, p["transform"])

    if mode == "train":
        if not pos:
            raise ValueError("train mode requires a nonempty positive label set")
        pos = tuple(pos)
        neg = tuple(neg or ())
        if cfg.routing_kind == "sabour":
            cols = np.array(sorted(set(pos) | set(neg)), dtype=np.intp)
            return _restricted_baseline(votes, cols, cfg.baseline_iterations, cfg.routing)
        return partial_route(votes, pos, neg, cfg.routing)
    if mode != "infer":
        raise ValueError(f"unknown mode {mode!r}")
    cols = tuple(range(mcfg.n_labels)) if candidates is None else tuple(candidates)
    if cfg.routing_kind == "sabour":
        return _restricted_baseline(votes, np.array(sorted(set(cols)), dtype=np.intp), cfg.baseline_iterations, cfg.routing)
    return partial_route(votes, cols, (), cfg.routing)


def margin_loss(a, labels: Iterable[int], cfg: TrainConfig):
    """Separation loss on capsule lengths.

    Positive labels are hinged below margin_pos, the rest above margin_neg
    with the absent-label term down-weighted; both hinges are squared.
    Zero exactly when every hinge is inactive.
    """
    n = ad.raw(a).shape[0]
    y = np.zeros(n)
    y[list(labels)] = 1.0
    pos_hinge = ad.maximum(cfg.margin_pos - a, 0.0)
    neg_hinge = ad.maximum(a - cfg.margin_neg, 0.0)
    loss = ad.sum(y * pos_hinge * pos_hinge + cfg.down_weight * (1.0 - y) * neg_hinge * neg_hinge)
    return loss if isinstance(loss, ad.Tensor) else float(loss)


def _scorer_logits(X, scorer):
    pooled = ad.raw(X).mean(axis=0)
    return ad.matmul(scorer, pooled)


def _scorer_bce(X, labels: Iterable[int], scorer):
    """Per-label binary cross-entropy of the linear candidate scorer,
    in the overflow-safe max(z,0) - z*y + log(1 + exp(-|z|)) form."""
    z = _scorer_logits(X, scorer)
    n = ad.raw(z).shape[0]
    y = np.zeros(n)
    y[list(labels)] = 1.0
    abs_z = ad.where(ad.raw(z) >= 0, z, -z)
    per_label = ad.maximum(z, 0.0) - z * y + ad.log(1.0 + ad.exp(-abs_z))
    return ad.sum(per_label) / float(n)


def instance_loss(inst: Instance, params: ModelParams, cfg: TrainConfig, *, record: bool):
    """Margin loss through routing plus the candidate-scorer term."""
    res = forward(inst.X, params, cfg, mode="train", pos=inst.labels, neg=inst.neg, record=record)
    loss = margin_loss(res.a, inst.labels, cfg)
    if cfg.scorer_loss_weight > 0:
        scorer = params.view(record)["scorer"]
        loss = loss + cfg.scorer_loss_weight * _scorer_bce(inst.X, inst.labels, scorer)
    return loss


def batch_loss(batch: Sequence[Instance], params: ModelParams, cfg: TrainConfig) -> float:
    """Mean instance loss, evaluated without recording a graph."""
    total = 0.0
    for inst in batch:
        total += float(ad.raw(instance_loss(inst, params, cfg, record=False)))
    return total / len(batch)


def backward(batch: Sequence[Instance], params: ModelParams, cfg: TrainConfig) -> dict[str, np.ndarray]:
    """Gradients of the mean batch loss for every parameter tensor.

    Routing iterations are differentiated exactly as executed; the
    convergence test and iteration counts are control flow and carry no
    gradient.  Leaves params' grad buffers populated and also returns
    copies keyed by tensor name.
    """
    if not batch:
        raise ValueError("batch must be nonempty")
    params.zero_grad()
    total = None
    for inst in batch:
        loss = instance_loss(inst, params, cfg, record=True)
        total = loss if total is None else total + loss
    scaled = total * (1.0 / len(batch))
    if isinstance(scaled, ad.Tensor):
        scaled.backward()
    return {
        name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for name, t in params.named()
    }


def finite_diff_check(
    params: ModelParams,
    instance: Instance,
    step: float,
    cfg: TrainConfig,
) -> float:
    """Max relative error between backward() and central differences.

    Every parameter entry is perturbed by +-step; the relative error uses
    max(|analytic|, |numeric|, 1e-8) as denominator.  This is the
    independent oracle for the reverse-mode path: it only ever evaluates
    the unrecorded forward loss.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    grads = backward([instance], params, cfg)
    worst = 0.0
    for name, t in params.named():
        g = grads[name]
        flat = t.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = batch_loss([instance], params, cfg)
            flat[i] = orig - step
            down = batch_loss([instance], params, cfg)
            flat[i] = orig
            fd = (up - down) / (2.0 * step)
            denom = max(abs(gflat[i]), abs(fd), 1e-8)
            worst = max(worst, abs(gflat[i] - fd) / denom)
    return worst


def random_gradcheck_setup(seed: int) -> tuple[ModelParams, Instance, TrainConfig]:
    """A small random model plus one training instance.

    Sized so a full central-difference sweep stays cheap (few output
    capsules, few condensed capsules, low capsule dimension) and so
    per-entry gradients sit well above the difference oracle's truncation
    noise (short documents keep the compression matrix narrow, and the
    document scale keeps forward signals strong).
    """
    rng = np.random.default_rng(seed)
    embed_dim = int(rng.integers(3, 5))
    max_len = 6
    n_labels = int(rng.integers(2, 5))
    cfg = ModelConfig(
        embed_dim=embed_dim,
        max_len=max_len,
        n_labels=n_labels,
        window_sizes=(2, 3),
        n_filters=2,
        capsule_dim=int(rng.integers(2, 5)),
        n_condensed=int(rng.integers(3, 7)),
    )
    params = ModelParams(cfg, rng)
    X = rng.normal(size=(max_len, embed_dim))
    n_pos = int(rng.integers(1, min(3, n_labels) + 1))
    labels = tuple(sorted(int(x) for x in rng.choice(n_labels, size=n_pos, replace=False)))
    pool = [j for j in range(n_labels) if j not in labels]
    neg = tuple(sorted(int(x) for x in rng.choice(pool, size=min(2, len(pool)), replace=False))) if pool else ()
    instance = Instance(X=X, labels=labels, neg=neg)
    return params, instance, TrainConfig()


def sgd_step(params: ModelParams, lr: float) -> None:
    """Plain in-place descent; tensors without gradients stay put."""
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    for _, t in params.named():
        if t.grad is not None:
            t.data -= lr * t.grad


class AdamState:
    """First/second moment buffers for adaptive-moment updates."""

    def __init__(self, params: ModelParams):
        self.m = {name: np.zeros_like(t.data) for name, t in params.named()}
        self.v = {name: np.zeros_like(t.data) for name, t in params.named()}
        self.t = 0


def adam_step(
    params: ModelParams,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Adaptive-moment descent step with standard bias correction."""
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    state.t += 1
    for name, t in params.named():
        g = t.grad if t.grad is not None else np.zeros_like(t.data)
        state.m[name] = beta1 * state.m[name] + (1 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1 - beta2) * g * g
        m_hat = state.m[name] / (1 - beta1 ** state.t)
        v_hat = state.v[name] / (1 - beta2 ** state.t)
        t.data -= lr * m_hat / (np.sqrt(v_hat) + eps)


def candidate_labels(X, params: ModelParams, k: int) -> list[int]:
    """Top-k labels under the auxiliary linear scorer.

    Scores are linear in the mean-pooled document embedding; ties break by
    ascending label id; k larger than the label space returns all labels.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    scores = params["scorer"].data @ ad.raw(X).mean(axis=0)
    n = scores.shape[0]
    order = np.lexsort((np.arange(n), -scores))
    return [int(i) for i in order[: min(k, n)]]


def qa_score(q_X, a_X, params: ModelParams, cfg: TrainConfig) -> float:
    """Cosine similarity of the two final capsules of a question/answer
    pair; 0 by convention when either capsule is zero."""
    vq = ad.raw(forward(q_X, params, cfg).v)[0]
    va = ad.raw(forward(a_X, params, cfg).v)[0]
    if np.linalg.norm(vq) == 0.0 or np.linalg.norm(va) == 0.0:
        return 0.0
    return float(ad.raw(cosine_sim(vq, va)))


# -- checkpoint container ------------------------------------------------------


def save_checkpoint(path: str, params: ModelParams, train_cfg: TrainConfig) -> None:
    """Write magic/version, a JSON header echoing both configs and the
    tensor shapes, then the raw little-endian float64 tensor payloads."""
    header = {
        "model": asdict(params.config),
        "train": asdict(train_cfg),
        "tensors": [{"name": name, "shape": list(t.data.shape)} for name, t in params.named()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_CHECKPOINT_MAGIC)
        f.write(bytes([_CHECKPOINT_VERSION]))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for _, t in params.named():
            f.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_checkpoint(path: str) -> tuple[ModelParams, TrainConfig]:
    """Read a checkpoint, rejecting bad magic/version and any tensor whose
    shape disagrees with the architecture echoed in the header."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _CHECKPOINT_MAGIC:
            raise ValueError(f"not a checkpoint file (magic {magic!r})")
        version = f.read(1)
        if len(version) != 1 or version[0] != _CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version!r}")
        (header_len,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(header_len).decode("utf-8"))
        model_cfg = ModelConfig(**header["model"])
        train_raw = dict(header["train"])
        train_raw["routing"] = RoutingConfig(**train_raw["routing"])
        train_cfg = TrainConfig(**train_raw)
        params = ModelParams(model_cfg)
        expected = {name: t.data.shape for name, t in params.named()}
        entries = header["tensors"]
        if [e["name"] for e in entries] != list(expected):
            raise ValueError("checkpoint tensor list does not match the architecture")
        for entry in entries:
            name, shape = entry["name"], tuple(entry["shape"])
            if shape != expected[name]:
                raise ValueError(f"shape mismatch for {name}: file {shape}, model {expected[name]}")
            count = int(np.prod(shape)) if shape else 1
            buf = f.read(count * 8)
            if len(buf) != count * 8:
                raise ValueError(f"truncated tensor payload for {name}")
            params[name].data = np.frombuffer(buf, dtype="<f8").reshape(shape).astype(np.float64)
    return params, train_cfg
