"""Word-level tokenizers trained on the corpus.

Checkpoints built here are tiny and self-contained: the vocabulary comes
from the training split, so nothing needs to be downloaded.  Production
checkpoints with subword tokenizers load through the same
``AutoTokenizer`` path.
"""

from __future__ import annotations

from collections import Counter
from pathlib import Path

from tokenizers import Tokenizer, models, pre_tokenizers
from transformers import PreTrainedTokenizerFast

PAD, BOS, EOS, UNK = "<pad>", "<s>", "</s>", "<unk>"
SPECIAL_TOKENS = (PAD, BOS, EOS, UNK)


def build_tokenizer(texts: list[str], vocab_size: int = 2000) -> PreTrainedTokenizerFast:
    """Frequency-ranked word-level vocabulary over whitespace tokens.

    Ties break lexicographically so the same corpus always yields the
    same tokenizer.
    """
    counts: Counter[str] = Counter()
    for text in texts:
        counts.update(text.split())
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    vocab = {token: i for i, token in enumerate(SPECIAL_TOKENS)}
    for word, _ in ranked[: max(0, vocab_size - len(SPECIAL_TOKENS))]:
        vocab[word] = len(vocab)

    tokenizer = Tokenizer(models.WordLevel(vocab, unk_token=UNK))
    tokenizer.pre_tokenizer = pre_tokenizers.WhitespaceSplit()
    return PreTrainedTokenizerFast(
        tokenizer_object=tokenizer,
        pad_token=PAD,
        bos_token=BOS,
        eos_token=EOS,
        unk_token=UNK,
    )


def save_tokenizer(tokenizer: PreTrainedTokenizerFast, out_dir: str | Path) -> None:
    tokenizer.save_pretrained(str(out_dir))
