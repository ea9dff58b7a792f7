"""Datasets, vocabulary, optimization, checkpoints and evaluation."""

from __future__ import annotations

import io
import json
import logging
import re
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nets
from . import tensor as T
from .dag import VAR_TOKEN, FormulaDag, build_dag
from .nets import GraphBatch, ModelConfig, ParameterStore, Pooling
from .syntax import FormulaParseError, alpha_normalize, parse_sexpr

log = logging.getLogger(__name__)

UNK_TOKEN = "<unk>"
MAGIC = b"FMLN"
FORMAT_VERSION = 1
TOP_K_CUTOFFS = (16, 32, 64, 128, 256, 512, 1024, 2048, None)  # None: all premises


class DatasetError(ValueError):
    def __init__(self, problems, path=None):
        self.problems = list(problems)
        where = f"{path}: " if path else ""
        lines = "; ".join(f"line {n}: {msg}" for n, msg in self.problems[:10])
        more = f" (+{len(self.problems) - 10} more)" if len(self.problems) > 10 else ""
        super().__init__(f"{where}{lines}{more}")


class CheckpointError(ValueError):
    pass


def compile_formula(text: str) -> FormulaDag:
    return build_dag(alpha_normalize(parse_sexpr(text)))


# ---------------------------------------------------------------------------
# data


@dataclass
class Example:
    premise: FormulaDag
    conjecture: FormulaDag
    label: int
    premise_text: str = ""
    conjecture_text: str = ""


@dataclass
class Dataset:
    examples: list = field(default_factory=list)

    def __len__(self):
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    def __getitem__(self, i):
        return self.examples[i]

    @property
    def labels(self) -> np.ndarray:
        return np.array([e.label for e in self.examples], dtype=np.int64)

    def subset(self, idx) -> "Dataset":
        return Dataset([self.examples[i] for i in idx])

    def to_text(self) -> str:
        return "".join(f"{e.label}\t{e.premise_text}\t{e.conjecture_text}\n" for e in self.examples)

    def write(self, path):
        Path(path).write_text(self.to_text(), encoding="utf-8")


def parse_dataset(text: str, path=None) -> Dataset:
    """Parse ``label<TAB>premise<TAB>conjecture`` lines; ``#`` lines are skipped."""
    examples, problems = [], []
    for n, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            problems.append((n, f"expected 3 tab-separated fields, found {len(parts)}"))
            continue
        label, prem, conj = parts
        if label not in ("0", "1"):
            problems.append((n, f"label must be 0 or 1, found {label!r}"))
            continue
        try:
            examples.append(Example(compile_formula(prem), compile_formula(conj), int(label), prem, conj))
        except FormulaParseError as e:
            problems.append((n, str(e)))
    if problems:
        raise DatasetError(problems, path)
    return Dataset(examples)


def load_dataset(path, allow_empty: bool = False) -> Dataset:
    ds = parse_dataset(Path(path).read_text(encoding="utf-8"), path)
    if not ds.examples and not allow_empty:
        raise DatasetError([(0, "dataset is empty")], path)
    return ds


class Vocabulary:
    """Token ids; 0 is UNK and 1 is VAR, others by first occurrence."""

    def __init__(self, tokens=()):
        self.tokens: list[str] = [UNK_TOKEN, VAR_TOKEN]
        self.index = {t: i for i, t in enumerate(self.tokens)}
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        i = self.index.get(token)
        if i is None:
            i = self.index[token] = len(self.tokens)
            self.tokens.append(token)
        return i

    def __len__(self):
        return len(self.tokens)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def encode(self, tokens) -> np.ndarray:
        get = self.index.get
        return np.array([get(t, 0) for t in tokens], dtype=np.int64)

    @classmethod
    def build(cls, dataset: Dataset) -> "Vocabulary":
        vocab = cls()
        for ex in dataset:
            for g in (ex.premise, ex.conjecture):
                for tok in sorted(set(g.tokens) - set(vocab.index)):
                    vocab.add(tok)
        return vocab

    @classmethod
    def from_list(cls, tokens) -> "Vocabulary":
        tokens = list(tokens)
        if tokens[:2] != [UNK_TOKEN, VAR_TOKEN]:
            raise CheckpointError("vocabulary must start with the reserved UNK and VAR tokens")
        vocab = cls(tokens[2:])
        if len(vocab) != len(tokens):
            raise CheckpointError("vocabulary contains duplicate tokens")
        return vocab


# ---------------------------------------------------------------------------
# loss and optimizer


def bce_loss(predictions: T.Tensor, labels) -> T.Tensor:
    return T.bce(predictions, labels)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, t: int | None = None) -> None:
    """Bias-corrected Adam update applied in place to ``params``' arrays."""
    state.t = state.t + 1 if t is None else t
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name in sorted(params):
        p, g = params[name], grads.get(name)
        if g is None:
            continue
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype, copy=False)


# ---------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    config: ModelConfig
    vocab: Vocabulary
    params: ParameterStore


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<I", FORMAT_VERSION))
    for block in (_canonical_json(ckpt.config.to_dict()), _canonical_json(ckpt.vocab.tokens)):
        out.write(struct.pack("<I", len(block)))
        out.write(block)
    for name, arr in ckpt.params.records():
        raw = name.encode("utf-8")
        out.write(struct.pack("<I", len(raw)))
        out.write(raw)
        out.write(struct.pack("<I", arr.ndim))
        out.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return out.getvalue()


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(ckpt))


def _is_buffer(name):
    return name.endswith((".running_mean", ".running_var"))


def checkpoint_from_bytes(data: bytes) -> Checkpoint:
    buf = memoryview(data)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError("checkpoint is truncated")
        chunk = buf[pos : pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    (version,) = struct.unpack("<I", take(4))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        (n,) = struct.unpack("<I", take(4))
        config = ModelConfig.from_dict(json.loads(bytes(take(n)).decode("utf-8")))
        (n,) = struct.unpack("<I", take(4))
        vocab = Vocabulary.from_list(json.loads(bytes(take(n)).decode("utf-8")))
    except (ValueError, TypeError) as e:
        raise CheckpointError(f"bad checkpoint header: {e}") from None
    store = ParameterStore(np.float32)
    while pos < len(buf):
        (n,) = struct.unpack("<I", take(4))
        name = bytes(take(n)).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{rank}Q", take(8 * rank))
        size = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(take(4 * size), dtype="<f4").reshape(shape).astype(np.float32)
        (store.add_buffer if _is_buffer(name) else store.add)(name, arr)
    expected = nets.init_params(config, len(vocab), seed=0)
    want = {k: a.shape for k, a in expected.records()}
    got = {k: a.shape for k, a in store.records()}
    if want != got:
        missing = sorted(set(want) - set(got))
        extra = sorted(set(got) - set(want))
        raise CheckpointError(f"parameters do not match the config (missing {missing[:5]}, extra {extra[:5]})")
    return Checkpoint(config, vocab, store)


def load_checkpoint(path) -> Checkpoint:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from None
    return checkpoint_from_bytes(data)


# ---------------------------------------------------------------------------
# training and evaluation


def _batches(n, batch_size, order=None):
    order = np.arange(n) if order is None else order
    for s in range(0, n, batch_size):
        yield order[s : s + batch_size]


def predict_pairs(ckpt: Checkpoint, pairs, batch_size: int = 64) -> np.ndarray:
    """Eval-mode probabilities for a list of (premise dag, conjecture dag)."""
    params = ckpt.params
    params.training = False
    out = []
    for idx in _batches(len(pairs), batch_size):
        batch = GraphBatch.from_pairs([pairs[i] for i in idx], ckpt.vocab)
        out.append(nets.forward_pairs(batch, params, ckpt.config).data.astype(np.float64))
    return np.concatenate(out) if out else np.zeros(0)


def evaluate(ckpt: Checkpoint, dataset: Dataset, batch_size: int = 64) -> dict:
    """Accuracy at threshold 0.5, mean BCE, and per-example scores."""
    if len(dataset) == 0:
        raise DatasetError([(0, "cannot evaluate an empty dataset")])
    rows = ckpt.params.params["embed.token"].shape[0]
    if rows != len(ckpt.vocab):
        raise CheckpointError(f"token table has {rows} rows but the vocabulary has {len(ckpt.vocab)}")
    scores = predict_pairs(ckpt, [(e.premise, e.conjecture) for e in dataset], batch_size)
    y = dataset.labels
    p = np.clip(scores, 1e-7, 1 - 1e-7)
    loss = float(-(y * np.log(p) + (1 - y) * np.log(1 - p)).mean())
    acc = float(((scores >= 0.5).astype(np.int64) == y).mean())
    return {"accuracy": acc, "loss": loss, "n": len(dataset), "scores": scores}


def train(
    config: ModelConfig,
    dataset: Dataset,
    dev_dataset: Dataset,
    epochs: int,
    seed: int = 0,
    batch_size: int = 32,
    lr: float = 1e-3,
    vocab: Vocabulary | None = None,
    metrics_path=None,
    target_accuracy: float | None = None,
):
    """Minibatch Adam on BCE; returns the best-dev checkpoint and epoch metrics.

    ``target_accuracy`` stops after the first epoch whose dev accuracy reaches
    it.  Metrics records are appended to ``metrics_path`` as canonical JSON.
    """
    if len(dataset) == 0 or len(dev_dataset) == 0:
        raise DatasetError([(0, "training and dev datasets must be non-empty")])
    vocab = vocab or Vocabulary.build(dataset)
    init_seq, shuffle_seq = np.random.SeedSequence(seed).spawn(2)
    params = nets.init_params(config, len(vocab), seed=np.random.default_rng(init_seq), dtype=np.float32)
    rng = np.random.default_rng(shuffle_seq)
    state = AdamState(lr=lr)
    best = Checkpoint(config, vocab, params.copy())
    best_acc = -1.0
    metrics = []
    sink = open(metrics_path, "w", encoding="utf-8") if metrics_path else None
    y_all = dataset.labels
    try:
        for epoch in range(1, epochs + 1):
            t0 = time.perf_counter()
            params.training = True
            total, count = 0.0, 0
            for idx in _batches(len(dataset), batch_size, rng.permutation(len(dataset))):
                exs = [dataset[i] for i in idx]
                batch = GraphBatch.from_pairs([(e.premise, e.conjecture) for e in exs], vocab)
                params.zero_grad()
                with T.Tape():
                    loss = bce_loss(nets.forward_pairs(batch, params, config), y_all[idx])
                    T.backward(loss)
                adam_step(params.params, {k: params.grad(k) for k in params.names()}, state)
                total += float(loss.data) * len(idx)
                count += len(idx)
            current = Checkpoint(config, vocab, params)
            dev = evaluate(current, dev_dataset)
            rec = {
                "epoch": epoch,
                "train_loss": total / count,
                "dev_loss": dev["loss"],
                "dev_accuracy": dev["accuracy"],
            }
            metrics.append(rec)
            if sink:
                sink.write(_canonical_json(rec).decode("utf-8") + "\n")
                sink.flush()
            log.info("epoch %d: %s (%.1fs)", epoch, rec, time.perf_counter() - t0)
            if dev["accuracy"] > best_acc:
                best_acc = dev["accuracy"]
                best = Checkpoint(config, vocab, params.copy())
            if target_accuracy is not None and dev["accuracy"] >= target_accuracy:
                break
    finally:
        if sink:
            sink.close()
    best.params.training = False
    return best, metrics


def metrics_jsonl(metrics) -> str:
    return "".join(_canonical_json(r).decode("utf-8") + "\n" for r in metrics)


def _id_key(pid):
    s = str(pid)
    return (0, int(s), s) if s.isdigit() else (1, 0, s)


def rank_premises(ckpt: Checkpoint, conjecture: FormulaDag, premises, batch_size: int = 64):
    """Score each ``(premise_id, dag)`` against the conjecture, best first.

    Ties are broken by ascending id (numeric ids compare numerically).  The
    conjecture is embedded once unless the pooling uses attention.
    """
    premises = list(premises)
    if not premises:
        return []
    params, config = ckpt.params, ckpt.config
    params.training = False
    if config.pooling is Pooling.ATT_DAG_POOL:
        scores = predict_pairs(ckpt, [(d, conjecture) for _, d in premises], batch_size)
    else:
        s_c = nets.graph_embeddings(GraphBatch.from_dags([conjecture], ckpt.vocab), params, config)
        out = []
        for idx in _batches(len(premises), batch_size):
            s_p = nets.graph_embeddings(GraphBatch.from_dags([premises[i][1] for i in idx], ckpt.vocab), params, config)
            tiled = T.Tensor(np.repeat(s_c.data, len(idx), axis=0))
            out.append(nets.classify_pair(s_p, tiled, params).data.astype(np.float64))
        scores = np.concatenate(out)
    ranked = sorted(zip((p for p, _ in premises), scores.tolist()), key=lambda r: (-r[1], _id_key(r[0])))
    return ranked


def top_k(ranking, k):
    return list(ranking) if k is None else list(ranking[:k])


# ---------------------------------------------------------------------------
# synthetic tasks

_PREDICATES = [f"p{i}" for i in range(8)]
_PRED_ARITY = {p: 1 + (i >= 4) for i, p in enumerate(_PREDICATES)}
_CONSTANTS = ["c0", "c1", "c2", "c3"]
_FUNCTIONS = {"f0": 1, "f1": 1, "g0": 2}
_BINARY = ["and", "or", "implies", "iff"]
_PRED_RE = re.compile(r"(?<![A-Za-z0-9_])p[0-9]+(?![A-Za-z0-9_])")


def _term(rng, depth, variables):
    r = rng.random()
    if depth <= 0 or r < 0.55:
        if variables and rng.random() < 0.5:
            return str(rng.choice(variables))
        return str(rng.choice(_CONSTANTS))
    name = str(rng.choice(list(_FUNCTIONS)))
    args = " ".join(_term(rng, depth - 1, variables) for _ in range(_FUNCTIONS[name]))
    return f"({name} {args})"


def _atom(rng, pred, variables):
    args = " ".join(_term(rng, 2, variables) for _ in range(_PRED_ARITY[pred]))
    return f"({pred} {args})"


def _predicate_formula(rng, preds):
    """A random formula whose predicate symbols are exactly ``preds``."""
    variables = []
    quant = None
    if rng.random() < 0.6:
        variables = ["x"] if rng.random() < 0.6 else ["x", "y"]
        quant = str(rng.choice(["forall", "exists"]))
    atoms = [_atom(rng, p, variables) for p in preds]
    if rng.random() < 0.3:
        atoms.append(_atom(rng, str(rng.choice(preds)), variables))
    rng.shuffle(atoms)
    atoms = [f"(not {a})" if rng.random() < 0.25 else a for a in atoms]
    f = atoms[0]
    for a in atoms[1:]:
        f = f"({rng.choice(_BINARY)} {f} {a})"
    if quant:
        f = f"({quant} ({' '.join(variables)}) {f})"
    return f


def shared_predicate_label(premise_text: str, conjecture_text: str) -> int:
    return int(bool(set(_PRED_RE.findall(premise_text)) & set(_PRED_RE.findall(conjecture_text))))


def _depth_formula(rng, target):
    """Connective/predicate formula of exact tree depth ``target`` (>= 2)."""
    if target == 2:
        return f"(p{rng.integers(4)} {rng.choice(_CONSTANTS)})"
    if target == 3 and rng.random() < 0.5:
        return f"(p{rng.integers(4)} (f0 {rng.choice(_CONSTANTS)}))"
    if rng.random() < 0.3:
        return f"(not {_depth_formula(rng, target - 1)})"
    deep = _depth_formula(rng, target - 1)
    other = _depth_formula(rng, int(rng.integers(2, target)))
    kids = [deep, other]
    rng.shuffle(kids)
    return f"({rng.choice(['and', 'or', 'implies'])} {kids[0]} {kids[1]})"


def generate_synthetic(n: int, seed: int = 0, task: str = "shared-predicate") -> Dataset:
    """Balanced synthetic pairs for desk-scale checks.

    ``shared-predicate``: label 1 iff the two formulae share a predicate
    symbol.  ``depth-parity``: label is the parity of the premise's depth.
    """
    if task not in ("shared-predicate", "depth-parity"):
        raise ValueError(f"unknown synthetic task {task!r}")
    rng = np.random.default_rng(seed)
    labels = np.array([1] * (n // 2) + [0] * (n - n // 2))
    rng.shuffle(labels)
    examples = []
    for label in labels.tolist():
        if task == "shared-predicate":
            a = [str(p) for p in rng.choice(_PREDICATES, 2, replace=False)]
            if label:
                keep = str(rng.choice(a))
                other = str(rng.choice([p for p in _PREDICATES if p != keep]))
                b = [keep, other]
            else:
                b = [str(p) for p in rng.choice([p for p in _PREDICATES if p not in a], 2, replace=False)]
            prem, conj = _predicate_formula(rng, a), _predicate_formula(rng, b)
        else:
            d = int(rng.integers(2, 8))
            if d % 2 != label:
                d += 1
            prem = _depth_formula(rng, d)
            conj = _depth_formula(rng, int(rng.integers(2, 7)))
        examples.append(Example(compile_formula(prem), compile_formula(conj), label, prem, conj))
    return Dataset(examples)
