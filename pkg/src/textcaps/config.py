"""Experiment configuration files.

A config file is one flat YAML mapping; every routing and training field is
addressable by its name, alongside the task, data paths, and architecture
sizes.  Unknown keys are hard errors so typos cannot silently fall back to
defaults.  Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

import yaml

from .model import ModelConfig, TrainConfig
from .routing import RoutingConfig

_PATH_KEYS = {"train_data", "eval_data", "embeddings"}
_TASK_KEYS = {"task"}
_MODEL_KEYS = {"max_len", "n_labels", "window_sizes", "n_filters", "capsule_dim", "n_condensed"}
_TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"routing"}
_ROUTING_KEYS = {f.name for f in fields(RoutingConfig)}
KNOWN_KEYS = _PATH_KEYS | _TASK_KEYS | _MODEL_KEYS | _TRAIN_KEYS | _ROUTING_KEYS


@dataclass
class Experiment:
    """Parsed experiment: task, file paths, architecture kwargs (without
    embed_dim, which comes from the embedding file), and training config."""

    task: str
    train_data: str
    embeddings: str
    eval_data: str | None
    model_kwargs: dict
    train: TrainConfig

    def model_config(self, embed_dim: int) -> ModelConfig:
        n_labels = 1 if self.task == "qa" else self.model_kwargs.get("n_labels")
        if n_labels is None:
            raise ValueError("classification experiments must set n_labels")
        kwargs = {k: v for k, v in self.model_kwargs.items() if k != "n_labels"}
        return ModelConfig(embed_dim=embed_dim, n_labels=n_labels, task=self.task, **kwargs)


def load_experiment(path: str) -> Experiment:
    with open(path, "r", encoding="utf-8") as f:
        raw = yaml.safe_load(f)
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: config must be a flat key-value mapping")
    unknown = sorted(set(raw) - KNOWN_KEYS)
    if unknown:
        raise ValueError(f"{path}: unknown config keys: {', '.join(unknown)}")

    task = raw.get("task", "classify")
    if task not in ("classify", "qa"):
        raise ValueError(f"{path}: task must be 'classify' or 'qa', got {task!r}")
    for key in ("train_data", "embeddings"):
        if key not in raw:
            raise ValueError(f"{path}: missing required key {key!r}")

    base = os.path.dirname(os.path.abspath(path))

    def resolve(p: str | None) -> str | None:
        if p is None:
            return None
        return p if os.path.isabs(p) else os.path.join(base, p)

    routing = RoutingConfig(**{k: raw[k] for k in _ROUTING_KEYS if k in raw})
    train = TrainConfig(routing=routing, **{k: raw[k] for k in _TRAIN_KEYS if k in raw})
    model_kwargs = {k: raw[k] for k in _MODEL_KEYS if k in raw}
    if "window_sizes" in model_kwargs:
        model_kwargs["window_sizes"] = tuple(model_kwargs["window_sizes"])

    return Experiment(
        task=task,
        train_data=resolve(raw["train_data"]),
        embeddings=resolve(raw["embeddings"]),
        eval_data=resolve(raw.get("eval_data")),
        model_kwargs=model_kwargs,
        train=train,
    )
