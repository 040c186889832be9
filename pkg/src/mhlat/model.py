"""Full model assembly and its configuration.

Wires the chunk encoder, the multi-hop label-wise attention stack, and the
label-specific classifiers over one shared ParamStore. All randomness at
construction comes from a single seeded RNG consumed in a fixed order, so a
(config, vocab) pair fully determines the initial parameters.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass

from mhlat import attention, decoder
from mhlat.chunking import ChunkedDocument, chunk
from mhlat.decoder import ClassifierParams
from mhlat.encoder import Encoder
from mhlat.errors import ConfigError
from mhlat.params import TUNING_MODES, ParamStore, partition_for_mode
from mhlat.tensor import Tensor


@dataclass
class ModelConfig:
    L: int = 64
    d_m: int = 32
    B: int = 1
    C: int = 20
    N: int = 2
    share_hops: bool = False
    tuning_mode: str = "bitfit"
    threshold: float = 0.5
    lr: float = 1e-3
    epochs: int = 20
    batch_size: int = 8
    seed: int = 0

    def validate(self) -> "ModelConfig":
        if self.L < 1:
            raise ConfigError(f"L must be >= 1, got {self.L}")
        if self.d_m < 1:
            raise ConfigError(f"d_m must be >= 1, got {self.d_m}")
        if self.B < 0:
            raise ConfigError(f"B must be >= 0, got {self.B}")
        if self.C < 1:
            raise ConfigError(f"C must be >= 1, got {self.C}")
        if self.N < 0:
            raise ConfigError(f"N must be >= 0, got {self.N}")
        if self.tuning_mode not in TUNING_MODES:
            raise ConfigError(
                f"tuning_mode must be one of {TUNING_MODES}, got {self.tuning_mode!r}")
        if not (0.0 < self.threshold < 1.0):
            raise ConfigError(f"threshold must be in (0, 1), got {self.threshold}")
        if self.lr < 0.0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj).validate()

    @classmethod
    def from_json_file(cls, path) -> "ModelConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from exc
        if not isinstance(obj, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(obj)


class Model:
    """Encoder + multi-hop attention + label-specific classifiers."""

    def __init__(self, config: ModelConfig, vocab_size: int):
        config.validate()
        self.config = config
        self.vocab_size = vocab_size
        self.store = ParamStore()
        rng = random.Random(config.seed)
        self.encoder = Encoder(self.store, rng, vocab_size,
                               config.L, config.d_m, config.B)
        self.hops = attention.make_hops(self.store, rng, config.d_m,
                                        config.N, config.share_hops)
        self.label_emb = attention.init_label_embedding(self.store, rng,
                                                        config.C, config.d_m)
        self.classifier = ClassifierParams.create(self.store, rng,
                                                  config.C, config.d_m)

    def chunk_tokens(self, token_ids: list[int]) -> ChunkedDocument:
        return chunk(token_ids, self.config.L)

    def label_representations(self, doc: ChunkedDocument) -> Tensor:
        if self.config.N == 0:
            # zero hops never look at the document
            return self.label_emb
        h0 = self.encoder.encode_document(doc)
        return attention.multi_hop(h0, self.label_emb, self.hops, self.config.N)

    def logits(self, doc: ChunkedDocument) -> Tensor:
        return decoder.score_labels(self.label_representations(doc), self.classifier)

    def loss(self, doc: ChunkedDocument, y: list[int]) -> Tensor:
        return decoder.bce_loss(self.logits(doc), y)

    def probabilities(self, doc: ChunkedDocument) -> list[float]:
        return decoder.probabilities(self.logits(doc))

    def final_alpha(self, doc: ChunkedDocument) -> Tensor | None:
        """Final-hop label-over-token attention (None when N = 0)."""
        if self.config.N == 0:
            return None
        h0 = self.encoder.encode_document(doc)
        return attention.final_hop_alpha(h0, self.label_emb, self.hops, self.config.N)

    def trainable_names(self) -> set[str]:
        return partition_for_mode(self.store, self.config.tuning_mode)
