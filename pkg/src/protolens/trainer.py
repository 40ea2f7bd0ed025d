"""Training loop with teacher forcing, early stopping, and evaluation.

Training minimizes per-step cross entropy (averaged per target symbol
within a batch) with Adam and global-norm gradient clipping. When a dev
set is given it is greedy-decoded after every epoch and the checkpoint
with the lowest dev average edit distance is kept, ties going to the
earlier epoch; patience counts dev evaluations without improvement.
Everything is seeded, so identical runs produce identical logs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import metrics
from .autodiff import Adam, Tape, clip_gradients
from .corpus import (
    CognateSet,
    Vocabulary,
    Word,
    attested_symbols,
    build_vocab,
    encode_example,
)
from .model import Model, ModelConfig, pack_batch, teacher_forced_loss


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 5
    grad_clip: float = 5.0
    seed: int = 0

    def __post_init__(self):
        for name in ("learning_rate", "batch_size", "max_epochs", "patience", "grad_clip"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "grad_clip": self.grad_clip,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    train_loss: float
    dev_avg_edit: float | None
    dev_exact_rate: float | None


@dataclass
class TrainResult:
    model: Model
    log: list[EpochLog]
    best_epoch: int | None


def log_to_csv(log: Sequence[EpochLog]) -> str:
    lines = ["epoch,train_loss,dev_avg_edit,dev_exact_rate"]
    for row in log:
        dev_edit = "" if row.dev_avg_edit is None else f"{row.dev_avg_edit:.6f}"
        dev_exact = "" if row.dev_exact_rate is None else f"{row.dev_exact_rate:.6f}"
        lines.append(f"{row.epoch},{row.train_loss:.6f},{dev_edit},{dev_exact}")
    return "\n".join(lines) + "\n"


def predict(model: Model, entry: CognateSet) -> Word:
    """Greedy reconstruction for one cognate set; unseen symbols map to UNK."""
    example = encode_example(entry, model.vocab, unknown_to_unk=True)
    word, _ = model.greedy_decode(example)
    return word


def evaluate(
    dataset: Sequence[CognateSet],
    model: Model,
    predict_fn: Callable[[CognateSet], Word] | None = None,
) -> metrics.EditDistanceReport:
    """Greedy-decode every entry and aggregate edit distances.

    predict_fn overrides the model's prediction (used by the rule
    harness's gold-echo mode and by tests).
    """
    if not dataset:
        raise ValueError("cannot evaluate an empty dataset")
    fn = predict_fn or (lambda entry: predict(model, entry))
    pairs = [(fn(entry), entry.latin) for entry in dataset]
    return metrics.report(pairs)


def train(
    train_set: Sequence[CognateSet],
    dev_set: Sequence[CognateSet],
    model_config: ModelConfig,
    train_config: TrainConfig,
    vocab: Vocabulary | None = None,
) -> TrainResult:
    """Train a fresh model; returns the best checkpoint and per-epoch log."""
    if not train_set:
        raise ValueError("cannot train on an empty dataset")
    if vocab is None:
        vocab = build_vocab(train_set)
    longest = max(len(entry.latin) for entry in train_set) + 1  # word plus EOS
    if model_config.max_decode_len < longest:
        raise ValueError(
            f"max_decode_len {model_config.max_decode_len} cannot cover the longest "
            f"training word ({longest} symbols with EOS)"
        )
    model = Model.new(model_config, vocab, attested=attested_symbols(train_set))
    params = model.params.all()
    examples = [encode_example(entry, vocab) for entry in train_set]
    optimizer = Adam(learning_rate=train_config.learning_rate)
    rng = np.random.default_rng(train_config.seed)

    log: list[EpochLog] = []
    best_epoch: int | None = None
    best_dev = np.inf
    best_snapshot: list[np.ndarray] | None = None
    evals_since_best = 0

    for epoch in range(1, train_config.max_epochs + 1):
        order = rng.permutation(len(examples))
        loss_sum = 0.0
        symbol_count = 0
        for start in range(0, len(order), train_config.batch_size):
            chunk = [examples[i] for i in order[start : start + train_config.batch_size]]
            batch = pack_batch(chunk, vocab)
            with Tape() as tape:
                loss = teacher_forced_loss(model.params, batch)
            loss_value = float(loss.data)
            if not np.isfinite(loss_value):
                raise TrainingDiverged(
                    f"loss became {loss_value} at epoch {epoch}, batch {start // train_config.batch_size}"
                )
            grads = tape.gradients(loss, params)
            clip_gradients(grads, train_config.grad_clip)
            optimizer.step(params, grads)
            loss_sum += loss_value * batch.n_symbols
            symbol_count += batch.n_symbols
        train_loss = loss_sum / symbol_count

        dev_avg = None
        dev_exact = None
        if dev_set:
            report = evaluate(dev_set, model)
            dev_avg = report.average
            dev_exact = report.exact_rate()
            if dev_avg < best_dev:
                best_dev = dev_avg
                best_epoch = epoch
                best_snapshot = [p.data.copy() for p in params]
                evals_since_best = 0
            else:
                evals_since_best += 1
        log.append(EpochLog(epoch, train_loss, dev_avg, dev_exact))
        if dev_set and evals_since_best >= train_config.patience:
            break

    if best_snapshot is not None:
        for p, saved in zip(params, best_snapshot):
            p.data = saved
    return TrainResult(model=model, log=log, best_epoch=best_epoch)
