"""Checkpoint construction and loading for the two model families."""

from __future__ import annotations

from pathlib import Path

import torch
from transformers import (
    AutoModelForSeq2SeqLM,
    AutoTokenizer,
    BartConfig,
    BartForConditionalGeneration,
    T5Config,
    T5ForConditionalGeneration,
)

FAMILIES = ("bart-like", "t5-like")

# Prefix prepended to every t5-like input, training and inference alike.
T5_TASK_PREFIX = "summarize: "

# Small enough to train on a laptop CPU in seconds, big enough to learn
# the fixture corpus.  Position budget covers 1000-token inputs.
TINY_DIMS = dict(d_model=64, ffn=128, layers=2, heads=2)
MAX_POSITIONS = 1152


class ModelError(Exception):
    pass


def build_model(family: str, vocab_size: int, seed: int = 0):
    """Randomly initialized tiny member of the family.

    Public pretrained checkpoints are not reachable from this environment,
    so local runs start from these; any directory saved by
    ``save_pretrained`` (including real pretrained weights) loads through
    ``load_checkpoint`` identically.
    """
    if family not in FAMILIES:
        raise ModelError(f"unknown model family {family!r} (use one of {FAMILIES})")
    torch.manual_seed(seed)
    if family == "bart-like":
        config = BartConfig(
            vocab_size=vocab_size,
            d_model=TINY_DIMS["d_model"],
            encoder_layers=TINY_DIMS["layers"],
            decoder_layers=TINY_DIMS["layers"],
            encoder_attention_heads=TINY_DIMS["heads"],
            decoder_attention_heads=TINY_DIMS["heads"],
            encoder_ffn_dim=TINY_DIMS["ffn"],
            decoder_ffn_dim=TINY_DIMS["ffn"],
            max_position_embeddings=MAX_POSITIONS,
            pad_token_id=0,
            bos_token_id=1,
            eos_token_id=2,
            decoder_start_token_id=2,
            forced_bos_token_id=None,
        )
        return BartForConditionalGeneration(config)
    config = T5Config(
        vocab_size=vocab_size,
        d_model=TINY_DIMS["d_model"],
        d_ff=TINY_DIMS["ffn"],
        d_kv=TINY_DIMS["d_model"] // TINY_DIMS["heads"],
        num_layers=TINY_DIMS["layers"],
        num_heads=TINY_DIMS["heads"],
        pad_token_id=0,
        eos_token_id=2,
        decoder_start_token_id=0,
    )
    return T5ForConditionalGeneration(config)


def family_of(model) -> str:
    return "t5-like" if model.config.model_type == "t5" else "bart-like"


def uses_task_prefix(model) -> bool:
    return model.config.model_type == "t5"


def save_checkpoint(model, tokenizer, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model.save_pretrained(str(out_dir))
    tokenizer.save_pretrained(str(out_dir))


def load_checkpoint(path: str | Path):
    """(model, tokenizer) from a saved directory."""
    path = Path(path)
    if not path.is_dir():
        raise ModelError(f"checkpoint directory not found: {path}")
    model = AutoModelForSeq2SeqLM.from_pretrained(str(path))
    tokenizer = AutoTokenizer.from_pretrained(str(path))
    model.eval()
    return model, tokenizer
