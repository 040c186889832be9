"""Training loop, mode-filtered Adam, evaluation, and gradient checking.

The optimizer only ever updates the names returned by the tuning-mode
partition; everything else keeps its initial bits. A fixed seed determines
initialization and batch order, so checkpoints and reports are reproducible
byte-for-byte. The best-dev-micro-F1 parameter snapshot is what training
returns and saves.
"""

from __future__ import annotations

import json
import math
import random
from array import array
from dataclasses import dataclass, field

from mhlat import decoder
from mhlat import tensor as T
from mhlat.backend import kernels as K
from mhlat.chunking import ChunkedDocument
from mhlat.data import Example, LabelSpace, Vocab, build_vocab, load_jsonl, tokenize
from mhlat.errors import ConfigError, DataError, TrainingDiverged
from mhlat.metrics import MetricsReport, compute_report
from mhlat.model import Model, ModelConfig
from mhlat.params import ParamStore, load_checkpoint_into, save_checkpoint
from mhlat.tensor import FiniteDiffReport, Tape, finite_diff_check

EARLY_STOP_PATIENCE = 5
GRADCHECK_TOLERANCE = 1e-3


@dataclass
class PreparedDoc:
    id: str
    doc: ChunkedDocument
    y: list[int]


def prepare_docs(examples: list[Example], vocab: Vocab, space: LabelSpace,
                 L: int, model: Model) -> list[PreparedDoc]:
    return [
        PreparedDoc(id=ex.id, doc=model.chunk_tokens(tokenize(ex, vocab)),
                    y=space.y_vector(ex.labels))
        for ex in examples
    ]


class Adam:
    """Adam with bias correction; moments exist only for the given names."""

    def __init__(self, store: ParamStore, names: list[str], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.store = store
        self.names = list(names)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.moments: dict[str, tuple[array, array]] = {
            name: (array("d", bytes(8 * len(store[name].data))),
                   array("d", bytes(8 * len(store[name].data))))
            for name in self.names
        }

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name in self.names:
            tensor = self.store[name]
            g = tensor.grad
            if g is None:
                continue
            m, v = self.moments[name]
            K.adam_step(tensor.data, g, m, v, self.lr, self.beta1, self.beta2,
                        self.eps, c1, c2, len(tensor.data))

    def zero_grad(self) -> None:
        self.store.zero_grads()


def _apply_trainable_partition(model: Model) -> set[str]:
    """Freeze gradient flow for everything outside the trainable set."""
    trainable = model.trainable_names()
    for name, tensor in model.store.items():
        tensor.requires_grad = name in trainable
    return trainable


def _divergence_diagnostics(model: Model, epoch: int, batch_idx: int,
                            loss_val: float) -> str:
    norms = sorted(
        ((max(abs(v) for v in t.data) if len(t.data) else 0.0, name)
         for name, t in model.store.items()),
        reverse=True)
    top = ", ".join(f"{name}: |max|={norm:.3e}" for norm, name in norms[:3])
    return (f"non-finite loss {loss_val} at epoch {epoch}, batch {batch_idx}; "
            f"largest parameters: {top}")


@dataclass
class TrainResult:
    model: Model
    vocab: Vocab
    label_space: LabelSpace
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_micro_f1: float = 0.0


def train(config: ModelConfig, train_examples: list[Example],
          dev_examples: list[Example], label_space: LabelSpace | None = None,
          min_freq: int = 1, log=None) -> TrainResult:
    """Train on the train split, track dev metrics, keep the best checkpoint."""
    config.validate()
    if not train_examples or not dev_examples:
        raise DataError("train and dev splits must be non-empty")
    if label_space is None:
        label_space = LabelSpace.from_examples(train_examples)
    if len(label_space) != config.C:
        raise ConfigError(
            f"config C={config.C} but label space has {len(label_space)} labels")
    for ex in dev_examples:
        for lab in ex.labels:
            if lab not in label_space:
                raise DataError(f"dev example {ex.id}: unknown label {lab!r}")

    vocab = build_vocab(train_examples, min_freq=min_freq)
    model = Model(config, vocab.size)
    trainable = _apply_trainable_partition(model)
    train_docs = prepare_docs(train_examples, vocab, label_space, config.L, model)
    dev_docs = prepare_docs(dev_examples, vocab, label_space, config.L, model)

    opt = Adam(model.store, sorted(trainable), config.lr)
    shuffle_rng = random.Random(f"{config.seed}-shuffle")
    result = TrainResult(model=model, vocab=vocab, label_space=label_space)
    best_snapshot = model.store.snapshot()
    best_micro, best_epoch = -1.0, 0
    stale = 0

    for epoch in range(1, config.epochs + 1):
        order = list(train_docs)
        shuffle_rng.shuffle(order)
        epoch_loss = 0.0
        for b_start in range(0, len(order), config.batch_size):
            batch = order[b_start:b_start + config.batch_size]
            inv = 1.0 / len(batch)
            for pdoc in batch:
                with Tape() as tape:
                    loss = model.loss(pdoc.doc, pdoc.y)
                    scaled = T.scale(loss, inv)
                tape.backward(scaled)
                loss_val = loss.item()
                if not math.isfinite(loss_val):
                    raise TrainingDiverged(_divergence_diagnostics(
                        model, epoch, b_start // config.batch_size, loss_val))
                epoch_loss += loss_val
            opt.step()
            opt.zero_grad()

        report, _ = evaluate_model(model, dev_docs, label_space)
        result.history.append({
            "epoch": epoch,
            "train_loss": epoch_loss / len(order),
            "dev": report.to_json_dict(),
        })
        if log is not None:
            log(f"epoch {epoch:3d}  loss {epoch_loss / len(order):.4f}  "
                f"dev micro-F1 {report.micro_f1:.4f}")
        if report.micro_f1 > best_micro:
            best_micro, best_epoch = report.micro_f1, epoch
            best_snapshot = model.store.snapshot()
            stale = 0
        else:
            stale += 1
            if stale >= EARLY_STOP_PATIENCE:
                break

    model.store.restore(best_snapshot)
    result.best_epoch = best_epoch
    result.best_micro_f1 = best_micro
    return result


def evaluate_model(model: Model, docs: list[PreparedDoc],
                   label_space: LabelSpace) -> tuple[MetricsReport, list[dict]]:
    """Deterministic evaluation: metrics report plus per-document predictions."""
    scores: list[list[float]] = []
    preds: list[list[int]] = []
    gold: list[list[int]] = []
    predictions: list[dict] = []
    threshold = model.config.threshold
    for pdoc in docs:
        logit_t = model.logits(pdoc.doc)
        logit_vals = list(logit_t.data)
        flags, _ = decoder.predict(logit_vals, threshold)
        probs = decoder.probabilities(logit_t)
        scores.append(probs)
        preds.append(flags)
        gold.append(pdoc.y)
        predictions.append({
            "id": pdoc.id,
            "scores": probs,
            "predicted": [label_space.labels[i] for i, f in enumerate(flags) if f],
        })
    report = compute_report(scores, preds, gold)
    return report, predictions


# ---------------------------------------------------------------------------
# persistence (binary checkpoint + JSON sidecar with config/vocab/labels)

def _meta_path(path) -> str:
    return str(path) + ".meta.json"


def save_model(path, model: Model, vocab: Vocab, label_space: LabelSpace) -> None:
    save_checkpoint(path, model.store)
    meta = {
        "config": model.config.to_dict(),
        "vocab": vocab.tokens(),
        "labels": label_space.labels,
    }
    with open(_meta_path(path), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_model(path) -> tuple[Model, Vocab, LabelSpace]:
    try:
        with open(_meta_path(path), encoding="utf-8") as fh:
            meta = json.load(fh)
    except FileNotFoundError as exc:
        raise DataError(f"missing checkpoint metadata {_meta_path(path)}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{_meta_path(path)}: invalid JSON ({exc.msg})") from exc
    config = ModelConfig.from_dict(meta["config"])
    vocab = Vocab.from_tokens(meta["vocab"])
    label_space = LabelSpace(meta["labels"])
    if len(label_space) != config.C:
        raise DataError(
            f"checkpoint label space mismatch: config expects C={config.C}, "
            f"found {len(label_space)} labels")
    model = Model(config, vocab.size)
    load_checkpoint_into(path, model.store)
    return model, vocab, label_space


def evaluate_checkpoint(ckpt_path, data_path
                        ) -> tuple[MetricsReport, list[dict], Model, Vocab, LabelSpace]:
    model, vocab, label_space = load_model(ckpt_path)
    examples, _ = load_jsonl(data_path, label_space=label_space)
    docs = prepare_docs(examples, vocab, label_space, model.config.L, model)
    report, predictions = evaluate_model(model, docs, label_space)
    return report, predictions, model, vocab, label_space


# ---------------------------------------------------------------------------
# gradient checking entry point

_MODULE_PREFIXES = (
    ("encoder.", "encoder"),
    ("head.hop", "mhlat"),
    ("head.label_emb", "mhlat"),
    ("head.cls", "decoder"),
)


def module_of(param_name: str) -> str:
    for prefix, mod in _MODULE_PREFIXES:
        if param_name.startswith(prefix):
            return mod
    return "other"


@dataclass
class GradCheckResult:
    report: FiniteDiffReport
    per_module: dict[str, float]
    n_tokens: int
    mode: str

    @property
    def max_rel_error(self) -> float:
        return self.report.max_rel_error

    def passed(self, tolerance: float = GRADCHECK_TOLERANCE) -> bool:
        return self.report.max_rel_error < tolerance

    def format_lines(self) -> list[str]:
        lines = [f"gradcheck mode={self.mode} n={self.n_tokens}: "
                 f"max relative error {self.report.max_rel_error:.3e} "
                 f"(worst: {self.report.worst_name}[{self.report.worst_index}])"]
        for mod in sorted(self.per_module):
            lines.append(f"  {mod:<8} worst {self.per_module[mod]:.3e}")
        return lines


GRADCHECK_EPS = 2e-4   # large enough that structurally-zero gradients (for
                       # example the key-projection bias, which softmax shift
                       # invariance cancels) sit below tolerance as FD noise,
                       # small enough that relu-kink truncation stays tiny


def run_gradcheck(config: ModelConfig, n_tokens: int = 24, vocab_size: int = 32,
                  eps: float = GRADCHECK_EPS) -> GradCheckResult:
    """Finite-difference check of every trainable tensor on one random document."""
    config.validate()
    if n_tokens > 32 or config.C > 6 or config.d_m > 8:
        raise ConfigError(
            "gradcheck needs a small instance: n_tokens <= 32, C <= 6, d_m <= 8 "
            f"(got n={n_tokens}, C={config.C}, d_m={config.d_m})")
    rng = random.Random(config.seed)
    ids = [rng.randrange(2, vocab_size) for _ in range(n_tokens)]
    y = [rng.randint(0, 1) for _ in range(config.C)]
    y[rng.randrange(config.C)] = 1

    model = Model(config, vocab_size)
    trainable = _apply_trainable_partition(model)
    doc = model.chunk_tokens(ids)
    probes = model.store.subset(sorted(trainable))
    report = finite_diff_check(lambda: model.loss(doc, y), probes, eps=eps)

    per_module: dict[str, float] = {}
    for name, err in report.per_tensor.items():
        mod = module_of(name)
        if err > per_module.get(mod, -1.0):
            per_module[mod] = err
    return GradCheckResult(report=report, per_module=per_module,
                           n_tokens=n_tokens, mode=config.tuning_mode)
