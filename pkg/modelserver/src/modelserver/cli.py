"""Command-line entry points: init a checkpoint, train, serve."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import corpus, models, tokenization, training


def cmd_init(args) -> int:
    samples = corpus.read_corpus_file(args.corpus)
    texts = [s.input_text for s in samples] + [s.target_summary for s in samples]
    if args.family == "t5-like":
        texts.append(models.T5_TASK_PREFIX.strip())
    tokenizer = tokenization.build_tokenizer(texts, vocab_size=args.vocab_size)
    model = models.build_model(args.family, vocab_size=len(tokenizer), seed=args.seed)
    models.save_checkpoint(model, tokenizer, args.out)
    print(
        f"initialized {args.family} checkpoint (vocab {len(tokenizer)}) -> {args.out}"
    )
    return 0


def cmd_train(args) -> int:
    split = corpus.read_split_dir(args.corpus_dir)
    cfg_obj = {}
    if args.config:
        cfg_obj = json.loads(Path(args.config).read_text(encoding="utf-8"))
    overrides = {
        "learning_rate": args.lr,
        "batch_size": args.batch_size,
        "max_input_tokens": args.max_input_tokens,
        "max_target_tokens": args.max_target_tokens,
        "epochs": args.epochs,
        "seed": args.seed,
    }
    cfg_obj.update({k: v for k, v in overrides.items() if v is not None})
    cfg = training.TrainConfig.from_json(cfg_obj)
    try:
        report = training.fine_tune(
            split["train"],
            split["validation"],
            args.checkpoint,
            cfg,
            out_dir=args.out,
        )
    except training.TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(
        f"{report.model_id}: train loss {report.initial_train_loss:.4f} -> "
        f"{report.final_train_loss:.4f}, validation {report.validation_loss:.4f}"
    )
    print(f"model -> {args.out}")
    return 0


def cmd_serve(args) -> int:
    from . import service

    service.serve(args.model_dir, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modelserver",
        description="Fine-tune and serve seq2seq summarizers for the CVE corpus.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="build a tiny local checkpoint from a corpus")
    p.add_argument("--family", choices=models.FAMILIES, required=True)
    p.add_argument("--corpus", required=True, help="corpus JSONL for the vocabulary")
    p.add_argument("--out", required=True)
    p.add_argument("--vocab-size", dest="vocab_size", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("train", help="fine-tune a checkpoint on a corpus split")
    p.add_argument("--corpus-dir", dest="corpus_dir", required=True,
                   help="directory holding train/validation/test JSONL")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="TrainConfig JSON file")
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--max-input-tokens", dest="max_input_tokens", type=int)
    p.add_argument("--max-target-tokens", dest="max_target_tokens", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("serve", help="serve /summarize and /embed")
    p.add_argument("--model-dir", dest="model_dir", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8900)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (corpus.CorpusError, models.ModelError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
