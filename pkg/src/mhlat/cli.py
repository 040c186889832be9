"""Command-line surface: generate / train / eval / gradcheck.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical-check
failure (gradcheck above tolerance or a non-finite probe).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from mhlat import attention, decoder
from mhlat.backend import backend_name
from mhlat.data import generate_corpus, load_jsonl, save_jsonl
from mhlat.errors import ConfigError, DataError, TrainingDiverged
from mhlat.model import ModelConfig
from mhlat.tensor import slice_rows
from mhlat.train import (GRADCHECK_TOLERANCE, evaluate_checkpoint, prepare_docs,
                         run_gradcheck, save_model, train)

TRAIN_FRACTION = 0.8
DEV_FRACTION = 0.1


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the CLI contract reserves 2 for
    numerical-check failures, so usage problems exit 1 instead."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="mhlat",
        description="Multi-hop label-wise attention over chunked long documents.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic planted-signal corpus")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--docs", type=int, required=True)
    gen.add_argument("--labels", type=int, required=True)
    gen.add_argument("--max-len", type=int, required=True)
    gen.add_argument("--out", type=Path, required=True,
                     help="output directory (train/dev/test.jsonl + labels.txt)")
    gen.add_argument("--planted-len", type=int, default=4)
    gen.add_argument("--zipf-exponent", type=float, default=0.0)

    tr = sub.add_parser("train", help="train a model and save the best checkpoint")
    tr.add_argument("--config", type=Path, required=True,
                    help="JSON object mirroring ModelConfig field names")
    tr.add_argument("--train", dest="train_path", type=Path, required=True)
    tr.add_argument("--dev", dest="dev_path", type=Path, required=True)
    tr.add_argument("--out", type=Path, required=True, help="checkpoint path")
    tr.add_argument("--min-freq", type=int, default=1)
    tr.add_argument("--quiet", action="store_true")

    ev = sub.add_parser("eval", help="evaluate a checkpoint on a JSONL split")
    ev.add_argument("--ckpt", type=Path, required=True)
    ev.add_argument("--data", type=Path, required=True)
    ev.add_argument("--report", type=Path, required=True, help="metrics JSON output")
    ev.add_argument("--preds", type=Path, default=None,
                    help="optional predictions JSONL output")
    ev.add_argument("--attention-dump", type=Path, default=None,
                    help="optional final-hop attention CSV output")
    ev.add_argument("--attention-top", type=int, default=5)

    gc = sub.add_parser("gradcheck", help="finite-difference check of the pipeline")
    gc.add_argument("--config", type=Path, required=True)
    gc.add_argument("--n-tokens", type=int, default=24)
    gc.add_argument("--vocab-size", type=int, default=32)
    gc.add_argument("--eps", type=float, default=None,
                    help="finite-difference step (default tuned for noise floor)")

    return parser


def _cmd_generate(args) -> int:
    examples, space = generate_corpus(
        seed=args.seed, n_docs=args.docs, n_labels=args.labels, n_max=args.max_len,
        planted_len=args.planted_len, zipf_exponent=args.zipf_exponent)
    args.out.mkdir(parents=True, exist_ok=True)
    n_train = int(len(examples) * TRAIN_FRACTION)
    n_dev = int(len(examples) * DEV_FRACTION)
    splits = {
        "train": examples[:n_train],
        "dev": examples[n_train:n_train + n_dev],
        "test": examples[n_train + n_dev:],
    }
    for name, split in splits.items():
        if not split:
            raise ConfigError(
                f"--docs {args.docs} leaves the {name} split empty; use more documents")
        save_jsonl(args.out / f"{name}.jsonl", split)
    space.save(args.out / "labels.txt")
    print(f"wrote {len(examples)} documents "
          f"({', '.join(f'{k}: {len(v)}' for k, v in splits.items())}) to {args.out}")
    return 0


def _cmd_train(args) -> int:
    config = ModelConfig.from_json_file(args.config)
    train_examples, label_space = load_jsonl(args.train_path)
    dev_examples, _ = load_jsonl(args.dev_path, label_space=label_space)
    log = None if args.quiet else (lambda msg: print(msg, flush=True))
    if log:
        log(f"kernel backend: {backend_name()}")
    result = train(config, train_examples, dev_examples, label_space=label_space,
                   min_freq=args.min_freq, log=log)
    save_model(args.out, result.model, result.vocab, result.label_space)
    print(f"best dev micro-F1 {result.best_micro_f1:.4f} at epoch "
          f"{result.best_epoch}; checkpoint: {args.out}")
    return 0


def _cmd_eval(args) -> int:
    report, predictions, model, vocab, label_space = evaluate_checkpoint(
        args.ckpt, args.data)
    args.report.parent.mkdir(parents=True, exist_ok=True)
    args.report.write_text(report.to_json() + "\n", encoding="utf-8")
    print(report.format_table())
    if args.preds is not None:
        decoder.write_predictions_jsonl(args.preds, predictions)
    if args.attention_dump is not None:
        examples, _ = load_jsonl(args.data, label_space=label_space)
        docs = prepare_docs(examples, vocab, label_space, model.config.L, model)
        rows = []
        for pdoc in docs:
            alpha = model.final_alpha(pdoc.doc)
            if alpha is None:
                raise ConfigError("attention dump requires N >= 1 hops")
            for i, label in enumerate(label_space.labels):
                rows.append((pdoc.id, label, slice_rows(alpha, i, i + 1)))
        attention.write_attention_csv(args.attention_dump, rows,
                                      top=args.attention_top)
    return 0


def _cmd_gradcheck(args) -> int:
    config = ModelConfig.from_json_file(args.config)
    kwargs = {} if args.eps is None else {"eps": args.eps}
    try:
        result = run_gradcheck(config, n_tokens=args.n_tokens,
                               vocab_size=args.vocab_size, **kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        # non-finite probe or comparable numerical failure
        print(f"gradcheck failed: {exc}", file=sys.stderr)
        return 2
    for line in result.format_lines():
        print(line)
    if not result.passed():
        print(f"FAIL: max relative error {result.max_rel_error:.3e} "
              f">= {GRADCHECK_TOLERANCE:.0e}", file=sys.stderr)
        return 2
    print(f"OK: all gradients within {GRADCHECK_TOLERANCE:.0e}")
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "gradcheck": _cmd_gradcheck,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help exits 0, usage errors exit 1
        return exc.code if isinstance(exc.code, int) else 1
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
