"""Teacher-forced fine-tuning of the seq2seq summarizers."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .corpus import CorpusSample
from .models import T5_TASK_PREFIX, family_of, load_checkpoint, save_checkpoint

log = logging.getLogger(__name__)


class TrainingError(Exception):
    pass


@dataclass(frozen=True)
class TrainConfig:
    model_family: str = "bart-like"  # informational once a checkpoint is given
    learning_rate: float = 1e-4
    batch_size: int = 8  # 8 for parity runs, 4 as the memory fallback
    max_input_tokens: int = 500
    max_target_tokens: int = 250
    epochs: int = 4
    seed: int = 0
    early_stop: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if self.max_input_tokens < 1 or self.max_target_tokens < 1:
            raise ValueError("token limits must be positive")

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in obj.items() if k in known})


@dataclass
class TrainReport:
    model_id: str
    initial_train_loss: float
    final_train_loss: float
    epoch_train_losses: list[float] = field(default_factory=list)
    validation_loss: float = float("nan")

    def __post_init__(self):
        values = [self.initial_train_loss, self.final_train_loss]
        values += self.epoch_train_losses
        if not self.epoch_train_losses:
            raise ValueError("report needs at least one epoch loss")
        if not math.isnan(self.validation_loss):  # NaN: no validation split
            values.append(self.validation_loss)
        for v in values:
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"loss must be finite and >= 0, got {v}")

    def to_json(self) -> dict:
        return {
            "model_id": self.model_id,
            "initial_train_loss": self.initial_train_loss,
            "final_train_loss": self.final_train_loss,
            "epoch_train_losses": self.epoch_train_losses,
            "validation_loss": self.validation_loss,
        }


def prepare_inputs(samples: list[CorpusSample], prefix: bool) -> list[str]:
    head = T5_TASK_PREFIX if prefix else ""
    return [head + s.input_text for s in samples]


def _batches(n: int, size: int):
    for start in range(0, n, size):
        yield start, min(start + size, n)


def _encode(tokenizer, inputs, targets, cfg):
    enc = tokenizer(
        inputs,
        return_tensors="pt",
        padding=True,
        truncation=True,
        max_length=cfg.max_input_tokens,
    )
    with_labels = tokenizer(
        targets,
        return_tensors="pt",
        padding=True,
        truncation=True,
        max_length=cfg.max_target_tokens,
    )
    labels = with_labels.input_ids.clone()
    labels[labels == tokenizer.pad_token_id] = -100
    return enc.input_ids, enc.attention_mask, labels


def _mean_loss(model, tokenizer, samples, cfg, prefix) -> float:
    inputs = prepare_inputs(samples, prefix)
    targets = [s.target_summary for s in samples]
    total, count = 0.0, 0
    model.eval()
    with torch.no_grad():
        for start, end in _batches(len(samples), cfg.batch_size):
            ids, mask, labels = _encode(
                tokenizer, inputs[start:end], targets[start:end], cfg
            )
            loss = model(input_ids=ids, attention_mask=mask, labels=labels).loss
            total += float(loss) * (end - start)
            count += end - start
    return total / count


def fine_tune(
    train: list[CorpusSample],
    validation: list[CorpusSample],
    checkpoint_dir: str | Path,
    cfg: TrainConfig,
    out_dir: str | Path | None = None,
    model_id: str | None = None,
) -> TrainReport:
    """Fine-tune the checkpoint on the corpus split.

    Inputs and targets are truncated in the model tokenizer's own space to
    the configured limits.  Early stopping watches validation loss when a
    validation split is present.
    """
    if not train:
        raise TrainingError("training split is empty")
    model, tokenizer = load_checkpoint(checkpoint_dir)
    prefix = family_of(model) == "t5-like"
    model_id = model_id or f"{family_of(model)}-tuned"
    torch.manual_seed(cfg.seed)

    inputs = prepare_inputs(train, prefix)
    targets = [s.target_summary for s in train]
    optimizer = torch.optim.AdamW(model.parameters(), lr=cfg.learning_rate)

    initial = _mean_loss(model, tokenizer, train, cfg, prefix)
    log.info("initial training loss %.4f over %d samples", initial, len(train))

    epoch_losses: list[float] = []
    best_val = float("inf")
    try:
        for epoch in range(cfg.epochs):
            model.train()
            running, seen = 0.0, 0
            for start, end in _batches(len(train), cfg.batch_size):
                ids, mask, labels = _encode(
                    tokenizer, inputs[start:end], targets[start:end], cfg
                )
                optimizer.zero_grad()
                loss = model(input_ids=ids, attention_mask=mask, labels=labels).loss
                loss.backward()
                optimizer.step()
                running += float(loss.detach()) * (end - start)
                seen += end - start
            epoch_losses.append(running / seen)
            log.info("epoch %d training loss %.4f", epoch + 1, epoch_losses[-1])
            if validation and cfg.early_stop:
                val = _mean_loss(model, tokenizer, validation, cfg, prefix)
                log.info("epoch %d validation loss %.4f", epoch + 1, val)
                if val > best_val:
                    log.info("validation loss rose; stopping early")
                    break
                best_val = val
    except (RuntimeError, torch.cuda.OutOfMemoryError) as exc:
        if "out of memory" in str(exc).lower():
            raise TrainingError(
                "out of memory during fine-tuning; retry with batch_size=4"
            ) from exc
        raise

    final = _mean_loss(model, tokenizer, train, cfg, prefix)
    val_loss = (
        _mean_loss(model, tokenizer, validation, cfg, prefix)
        if validation
        else float("nan")
    )
    report = TrainReport(
        model_id=model_id,
        initial_train_loss=initial,
        final_train_loss=final,
        epoch_train_losses=epoch_losses,
        validation_loss=val_loss,
    )
    if out_dir is not None:
        out_dir = Path(out_dir)
        save_checkpoint(model, tokenizer, out_dir)
        (out_dir / "train_report.json").write_text(
            json.dumps(report.to_json(), sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )
        (out_dir / "model_id").write_text(model_id + "\n", encoding="utf-8")
    return report
