"""Incremental-budget training harness for the domain decoder.

Budgets are drawn as prefixes of one seeded permutation of the training ids,
so the selected sets are nested exactly (an annotation made for budget 5 is
still used at budget 50). Independent per-budget resampling is available
behind ``nested=False`` for ablations. Training runs a fixed number of epochs
with no early stopping or schedule; the encoder is never touched.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import errors
from .data import Manifest
from .decoder import (DecoderConfig, DecoderParams, forward_batch,
                      backward_batch, init_decoder)
from .metrics import MetricsReport, evaluate_model
from .prompts import AnnotationRecord

DEFAULT_BUDGETS = (5, 10, 15, 20, 25, 50)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run; all values are config-pinned."""

    budgets: tuple[int, ...] = DEFAULT_BUDGETS
    epochs: int = 100
    batch_size: int = 4
    learning_rate: float = 1e-4
    optimizer: str = "adaptive_moment"  # or "plain_sgd"
    seed: int = 0
    tau: float = 0.5
    nested: bool = True

    def __post_init__(self):
        object.__setattr__(self, "budgets", tuple(self.budgets))
        if any(b2 <= b1 for b1, b2 in zip(self.budgets, self.budgets[1:])):
            raise errors.InvalidConfig(
                f"budgets must be strictly increasing: {self.budgets}")
        if self.epochs < 1:
            raise errors.InvalidConfig("epochs must be >= 1")
        if self.batch_size < 1:
            raise errors.InvalidConfig("batch_size must be >= 1")
        if self.optimizer not in ("adaptive_moment", "plain_sgd"):
            raise errors.InvalidConfig(f"unknown optimizer {self.optimizer!r}")
        if not 0.0 < self.tau < 1.0:
            raise errors.InvalidConfig("tau must be in (0,1)")

    def to_dict(self) -> dict:
        return {"budgets": list(self.budgets), "epochs": self.epochs,
                "batch_size": self.batch_size,
                "learning_rate": self.learning_rate,
                "optimizer": self.optimizer, "seed": self.seed,
                "tau": self.tau, "nested": self.nested}

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        return cls(budgets=tuple(doc.get("budgets", DEFAULT_BUDGETS)),
                   epochs=doc.get("epochs", 100),
                   batch_size=doc.get("batch_size", 4),
                   learning_rate=doc.get("learning_rate", 1e-4),
                   optimizer=doc.get("optimizer", "adaptive_moment"),
                   seed=doc.get("seed", 0), tau=doc.get("tau", 0.5),
                   nested=doc.get("nested", True))


@dataclass
class TrainHistory:
    epoch_losses: list[float]
    wall_time: float
    param_digest: str


# -- budget selection -----------------------------------------------------------

def select_increment(train_ids: list[str], n: int, seed: int) -> list[str]:
    """First n entries of a seeded permutation of the (sorted) ids.

    Prefixes of one permutation make the budget sets nested by construction:
    select(ids, 5, s) is a subset of select(ids, 10, s).
    """
    if n > len(train_ids):
        raise errors.BudgetTooLarge(
            f"budget {n} exceeds {len(train_ids)} available training ids")
    ordered = sorted(train_ids)
    perm = np.random.default_rng(seed).permutation(len(ordered))
    return [ordered[i] for i in perm[:n]]


def select_independent(train_ids: list[str], n: int, seed: int) -> list[str]:
    """Non-nested ablation: fresh uniform sample per (n, seed)."""
    if n > len(train_ids):
        raise errors.BudgetTooLarge(
            f"budget {n} exceeds {len(train_ids)} available training ids")
    ordered = sorted(train_ids)
    rng = np.random.default_rng([seed, n])
    return [ordered[i] for i in rng.choice(len(ordered), size=n, replace=False)]


# -- optimizers -------------------------------------------------------------------

class _Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, arrays: list[np.ndarray], grads: list[np.ndarray]) -> None:
        for a, g in zip(arrays, grads):
            a -= self.lr * g


class _Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: list[np.ndarray] | None = None
        self.v: list[np.ndarray] | None = None

    def step(self, arrays: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self.m is None:
            self.m = [np.zeros_like(a) for a in arrays]
            self.v = [np.zeros_like(a) for a in arrays]
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for a, g, m, v in zip(arrays, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            a -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def _make_optimizer(config: TrainConfig):
    if config.optimizer == "plain_sgd":
        return _Sgd(config.learning_rate)
    return _Adam(config.learning_rate)


# -- training ---------------------------------------------------------------------

def _stack_embeddings(records: list[AnnotationRecord], provider) -> np.ndarray:
    values = []
    for record in records:
        try:
            emb = provider(record.sample_id)
        except errors.DistillsegError as exc:
            raise errors.MissingEmbedding(
                f"{record.sample_id}: {exc}") from exc
        if emb is None:
            raise errors.MissingEmbedding(record.sample_id)
        values.append(emb.values.astype(np.float64))
    return np.stack(values)


def train_decoder(config: TrainConfig, decoder_config: DecoderConfig,
                  records: list[AnnotationRecord], embeddings,
                  initial_params: DecoderParams | None = None,
                  ) -> tuple[DecoderParams, TrainHistory]:
    """Train the decoder on annotation masks for exactly config.epochs passes.

    ``embeddings`` maps a sample id to its Embedding: an EncoderGateway-backed
    callable, a dict, or anything with __call__/__getitem__. Only decoder
    parameters change; the embedding source is read-only here.
    """
    if not records:
        raise errors.EmptyList("no annotation records to train on")
    provider = embeddings if callable(embeddings) else embeddings.__getitem__
    x_all = _stack_embeddings(records, provider)
    y_all = np.stack([
        np.asarray(r.mask, dtype=np.float64)[None] for r in records])
    expected = (decoder_config.out_channels, decoder_config.target_height,
                decoder_config.target_width)
    if y_all.shape[1:] != expected:
        if y_all.shape[2:] != expected[1:]:
            raise errors.ShapeMismatch(
                f"annotation masks {y_all.shape[2:]} vs decoder target "
                f"{expected[1:]}")
        # multi-channel fidelity mode: supervise every channel with the mask
        y_all = np.repeat(y_all, decoder_config.out_channels, axis=1)

    params = (initial_params.copy() if initial_params is not None
              else init_decoder(decoder_config))
    optimizer = _make_optimizer(config)
    rng = np.random.default_rng(config.seed)
    start = time.perf_counter()
    epoch_losses = []
    n = len(records)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        batch_losses = []
        for lo in range(0, n, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            loss, grads = _loss_and_grads_checked(params, x_all[idx],
                                                  y_all[idx], epoch)
            optimizer.step(params.arrays, grads)
            batch_losses.append(loss)
        epoch_losses.append(float(np.mean(batch_losses)))
    history = TrainHistory(epoch_losses=epoch_losses,
                           wall_time=time.perf_counter() - start,
                           param_digest=params.digest())
    return params, history


def _loss_and_grads_checked(params, x, y, epoch):
    _, cache = forward_batch(params, x, keep_cache=True)
    loss, grads = backward_batch(params, cache, y)
    if not np.isfinite(loss):
        raise errors.NonFiniteLoss(f"loss {loss} at epoch {epoch}")
    return loss, grads


# -- learning curve ---------------------------------------------------------------

@dataclass
class CurveEntry:
    budget: int
    metrics: MetricsReport
    param_digest: str
    wall_time: float
    selected_ids: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"budget": self.budget, "metrics": self.metrics.to_dict(),
                "param_digest": self.param_digest, "wall_time": self.wall_time,
                "selected_ids": self.selected_ids}


@dataclass
class CurveReport:
    config: dict
    entries: list[CurveEntry]

    def to_dict(self) -> dict:
        return {"config": self.config,
                "entries": [e.to_dict() for e in self.entries]}

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def latest_records_by_id(records: list[AnnotationRecord],
                         ) -> dict[str, AnnotationRecord]:
    """Last committed record wins when a sample was annotated repeatedly."""
    table: dict[str, AnnotationRecord] = {}
    for record in records:
        table[record.sample_id] = record
    return table


def run_curve(config: TrainConfig, decoder_config: DecoderConfig,
              manifest: Manifest, annotations: list[AnnotationRecord],
              gateway, eval_split: str = "test") -> CurveReport:
    """Train at every budget from a fresh init and evaluate on the test split."""
    train_ids = manifest.ids("train")
    by_id = latest_records_by_id(annotations)
    select = select_increment if config.nested else select_independent
    provider = lambda sample_id: gateway.embedding(manifest.get(sample_id))

    entries = []
    for budget in config.budgets:
        selected = select(train_ids, budget, config.seed)
        missing = [i for i in selected if i not in by_id]
        if missing:
            raise errors.MissingAnnotation(
                f"budget {budget}: no annotation for {missing[:5]}"
                + ("..." if len(missing) > 5 else ""))
        records = [by_id[i] for i in selected]
        params, history = train_decoder(config, decoder_config, records,
                                        provider)
        report = evaluate_model(params, manifest, eval_split, config.tau,
                                gateway)
        entries.append(CurveEntry(
            budget=budget, metrics=report, param_digest=history.param_digest,
            wall_time=history.wall_time, selected_ids=list(selected)))
    run_config = {"train": config.to_dict(), "decoder": decoder_config.to_dict(),
                  "encoder_id": getattr(gateway, "encoder_id", None),
                  "eval_split": eval_split}
    return CurveReport(config=run_config, entries=entries)


# -- foundation mask-decoder fine-tuning baseline -----------------------------------

def fine_tune_foundation_decoder(adapter, manifest: Manifest,
                                 records: list[AnnotationRecord],
                                 epochs: int = 100, lr: float = 1e-4) -> dict:
    """Fine-tune only the foundation model's mask decoder on annotated images.

    The image and prompt encoders stay frozen (checked via digest). Returns
    the per-epoch losses plus before/after digests for the qualitative
    comparison baseline.
    """
    from .data import load_image

    if adapter is None or not adapter.supports_fine_tuning():
        raise errors.AdapterUnavailable(
            "fine-tuning requires an adapter with a trainable mask decoder")
    encoder_before = adapter.encoder_digest()
    decoder_before = adapter.mask_decoder_digest()
    images = {r.sample_id: load_image(manifest.get(r.sample_id).pixel_path)
              for r in records}
    epoch_losses = []
    for _ in range(epochs):
        losses = [adapter.fine_tune_step(images[r.sample_id], r.mask, lr)
                  for r in records]
        epoch_losses.append(float(np.mean(losses)))
    encoder_after = adapter.encoder_digest()
    if encoder_after != encoder_before:
        raise errors.DistillsegError(
            "encoder parameters changed during mask-decoder fine-tuning")
    return {"epoch_losses": epoch_losses,
            "encoder_digest": encoder_after,
            "mask_decoder_digest_before": decoder_before,
            "mask_decoder_digest_after": adapter.mask_decoder_digest()}
