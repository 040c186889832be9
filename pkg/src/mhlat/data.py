"""Synthetic long-document multi-label corpus, vocabulary, and JSONL IO.

The generator plants one label-specific token sequence per drawn label into
filler noise, so the label signal is literally present in the text: an exact
substring scan recovers the labels perfectly, which makes model failures
attributable to the model rather than the data. Generation is a pure
function of the seed.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

from mhlat.errors import ConfigError, DataError

PAD_TOKEN_ID = 0
UNK_TOKEN_ID = 1
_NOISE_VOCAB = 120


@dataclass
class Example:
    id: str
    tokens: list[str]
    labels: list[str]


class LabelSpace:
    """Ordered, unique label strings with a stable index map."""

    def __init__(self, labels: list[str]):
        if len(set(labels)) != len(labels):
            raise DataError("duplicate labels in label space")
        self.labels = list(labels)
        self.index = {lab: i for i, lab in enumerate(self.labels)}

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label: str) -> bool:
        return label in self.index

    def y_vector(self, labels) -> list[int]:
        y = [0] * len(self.labels)
        for lab in labels:
            y[self.index[lab]] = 1
        return y

    @classmethod
    def from_examples(cls, examples: list[Example]) -> "LabelSpace":
        return cls(sorted({lab for ex in examples for lab in ex.labels}))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for lab in self.labels:
                fh.write(lab + "\n")

    @classmethod
    def load(cls, path) -> "LabelSpace":
        with open(path, encoding="utf-8") as fh:
            labels = [line.rstrip("\n") for line in fh if line.strip()]
        if not labels:
            raise DataError(f"{path}: empty label space file")
        return cls(labels)


@dataclass
class Vocab:
    """token -> dense id map; id 0 is pad, id 1 is unknown."""

    token_to_id: dict[str, int] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return 2 + len(self.token_to_id)

    def id(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_TOKEN_ID)

    def tokens(self) -> list[str]:
        return sorted(self.token_to_id, key=self.token_to_id.get)

    @classmethod
    def from_tokens(cls, tokens: list[str]) -> "Vocab":
        return cls({tok: i + 2 for i, tok in enumerate(tokens)})


def build_vocab(train: list[Example], min_freq: int = 1) -> Vocab:
    """Vocabulary from the train split only; rare tokens map to unknown."""
    if min_freq < 1:
        raise ConfigError(f"min_freq must be >= 1, got {min_freq}")
    freq: dict[str, int] = {}
    for ex in train:
        for tok in ex.tokens:
            freq[tok] = freq.get(tok, 0) + 1
    kept = sorted(tok for tok, n in freq.items() if n >= min_freq)
    return Vocab.from_tokens(kept)


def tokenize(example: Example, vocab: Vocab) -> list[int]:
    return [vocab.id(tok) for tok in example.tokens]


def planted_sequence(label_index: int, planted_len: int) -> list[str]:
    return [f"sig{label_index:03d}t{p}" for p in range(planted_len)]


def _draw_labels(rng: random.Random, n_labels: int, count: int,
                 zipf_exponent: float) -> list[int]:
    """Sample `count` distinct label indices, optionally Zipf-weighted."""
    if zipf_exponent <= 0.0:
        return sorted(rng.sample(range(n_labels), count))
    weights = [(i + 1) ** (-zipf_exponent) for i in range(n_labels)]
    chosen: list[int] = []
    pool = list(range(n_labels))
    for _ in range(count):
        total = sum(weights[i] for i in pool)
        r = rng.random() * total
        acc = 0.0
        pick = pool[-1]
        for i in pool:
            acc += weights[i]
            if r <= acc:
                pick = i
                break
        chosen.append(pick)
        pool.remove(pick)
    return sorted(chosen)


def generate_corpus(seed: int, n_docs: int, n_labels: int, n_max: int,
                    planted_len: int = 4, zipf_exponent: float = 0.0
                    ) -> tuple[list[Example], LabelSpace]:
    """Deterministic planted-signal corpus.

    Each document draws 1-4 labels; the planted sequence of every drawn label
    is spliced between filler tokens at a random point, so each sequence stays
    contiguous. Document lengths are uniform in [n_max/4, n_max] (lower bound
    raised when four planted sequences would not fit).
    """
    if n_labels < 2:
        raise ConfigError(f"need at least 2 labels, got {n_labels}")
    if n_max < 10 * planted_len:
        raise ConfigError(
            f"n_max={n_max} too small for planted_len={planted_len} "
            f"(need n_max >= {10 * planted_len})")
    if n_docs < 1:
        raise ConfigError(f"need at least 1 document, got {n_docs}")

    rng = random.Random(seed)
    space = LabelSpace([f"L{i:03d}" for i in range(n_labels)])
    max_drawn = min(4, n_labels)
    n_lo = max(n_max // 4, max_drawn * planted_len + max_drawn)
    examples: list[Example] = []
    for d in range(n_docs):
        n = rng.randint(n_lo, n_max)
        drawn = _draw_labels(rng, n_labels, rng.randint(1, max_drawn), zipf_exponent)
        filler_len = n - len(drawn) * planted_len
        filler = [f"w{rng.randrange(_NOISE_VOCAB):03d}" for _ in range(filler_len)]
        # splice points are indices into the filler, so no planted sequence
        # can land inside another
        inserts = sorted(((rng.randint(0, filler_len), li) for li in drawn),
                         key=lambda pair: pair[0])
        tokens: list[str] = []
        prev = 0
        for pos, li in inserts:
            tokens.extend(filler[prev:pos])
            tokens.extend(planted_sequence(li, planted_len))
            prev = pos
        tokens.extend(filler[prev:])
        examples.append(Example(
            id=f"doc{d:05d}",
            tokens=tokens,
            labels=[space.labels[li] for li in drawn],
        ))
    return examples, space


def save_jsonl(path, examples: list[Example]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(
                {"id": ex.id, "tokens": ex.tokens, "labels": ex.labels},
                sort_keys=True) + "\n")


def load_jsonl(path, label_space: LabelSpace | None = None
               ) -> tuple[list[Example], LabelSpace]:
    """Read examples; validate against a label space or build one from the file.

    Building from the file is only correct for the training split;
    evaluation splits must pass the training label space so unseen labels
    are rejected.
    """
    examples: list[Example] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict) or not {"id", "tokens", "labels"} <= set(obj):
                raise DataError(
                    f"{path}: line {lineno}: expected an object with id/tokens/labels")
            if not isinstance(obj["tokens"], list) or not isinstance(obj["labels"], list):
                raise DataError(
                    f"{path}: line {lineno}: tokens and labels must be arrays")
            if not obj["tokens"]:
                raise DataError(f"{path}: line {lineno}: empty token list")
            examples.append(Example(
                id=str(obj["id"]),
                tokens=[str(t) for t in obj["tokens"]],
                labels=[str(la) for la in obj["labels"]],
            ))
    if not examples:
        raise DataError(f"{path}: no examples")
    if label_space is None:
        label_space = LabelSpace.from_examples(examples)
    else:
        for ex in examples:
            for lab in ex.labels:
                if lab not in label_space:
                    raise DataError(
                        f"{path}: example {ex.id}: label {lab!r} not in label space")
    return examples, label_space
