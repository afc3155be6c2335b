"""Self-contained neural components: embeddings, BiLSTM encoder, span
representations, MLP scoring heads and a biaffine pair scorer.

Everything runs on numpy through the :mod:`uccatree.autodiff` tape, in
64-bit floats by default, with fully seeded initialization so that two
runs from the same seed produce bit-identical parameters.
"""

from __future__ import annotations

import base64
import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .graph_model import Token

UNK = "<unk>"
NOT_PARENT = "NOT-PARENT"


class OptimizationError(Exception):
    """Raised when training produces non-finite gradients."""


@dataclass
class ModelConfig:
    """Dimensions, feature toggles and vocabularies of one model.

    Vocabulary lists carry their reserved first entry explicitly: index 0
    is ``<unk>`` for token-feature vocabularies, the empty label for span
    labels, and ``NOT-PARENT`` for remote labels.
    """

    word_dim: int = 100
    tag_dim: int = 50
    lang_dim: int = 50
    lstm_hidden: int = 250
    mlp_hidden: int = 250
    remote_mlp_dim: int = 100
    use_pos: bool = True
    use_ner: bool = True
    use_dep: bool = True
    multilingual: bool = False
    pretrained_dim: int = 0
    freeze_pretrained: bool = False
    external_dim: int = 0
    share_span_hidden: bool = False
    dtype: str = "float64"
    words: list[str] = field(default_factory=lambda: [UNK])
    pos_tags: list[str] = field(default_factory=lambda: [UNK])
    ner_tags: list[str] = field(default_factory=lambda: [UNK])
    dep_labels: list[str] = field(default_factory=lambda: [UNK])
    languages: list[str] = field(default_factory=lambda: [UNK])
    pretrained_words: list[str] = field(default_factory=list)
    labels: list[str] = field(default_factory=lambda: [""])
    remote_labels: list[str] = field(default_factory=lambda: [NOT_PARENT])

    @property
    def np_dtype(self) -> np.dtype:
        return np.dtype({"float64": np.float64, "float32": np.float32}[self.dtype])

    @property
    def input_dim(self) -> int:
        dim = self.word_dim
        dim += self.tag_dim * (int(self.use_pos) + int(self.use_ner) + int(self.use_dep))
        if self.multilingual:
            dim += self.lang_dim
        dim += self.pretrained_dim
        dim += self.external_dim
        return dim

    @property
    def span_dim(self) -> int:
        return 2 * self.lstm_hidden

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> ModelConfig:
        return cls(**data)


def _glorot(rng: np.random.Generator, shape: tuple[int, ...], dtype) -> np.ndarray:
    fan_in, fan_out = shape[-1], shape[0]
    limit = float(np.sqrt(6.0 / (fan_in + fan_out)))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _embedding(rng: np.random.Generator, rows: int, dim: int, dtype) -> np.ndarray:
    return rng.uniform(-0.01, 0.01, size=(rows, dim)).astype(dtype)


class Vocab:
    """String-to-index mapping with a reserved fallback at index 0."""

    def __init__(self, items: Sequence[str]):
        self.items = list(items)
        self.index = {item: i for i, item in enumerate(self.items)}

    def __len__(self) -> int:
        return len(self.items)

    def lookup(self, item: str) -> int:
        return self.index.get(item, 0)

    @classmethod
    def build(cls, seen: Iterable[str], reserved: str = UNK) -> Vocab:
        uniq = sorted({s for s in seen if s != reserved})
        return cls([reserved] + uniq)


class ModelParams:
    """All trainable tensors plus the configuration that shapes them."""

    def __init__(self, config: ModelConfig, tensors: dict[str, np.ndarray]):
        self.config = config
        self.tensors = tensors
        self.words = Vocab(config.words)
        self.pos_tags = Vocab(config.pos_tags)
        self.ner_tags = Vocab(config.ner_tags)
        self.dep_labels = Vocab(config.dep_labels)
        self.languages = Vocab(config.languages)
        self.pretrained_words = Vocab(config.pretrained_words) if config.pretrained_words else None
        self.labels = Vocab(config.labels)
        self.remote_labels = Vocab(config.remote_labels)

    @classmethod
    def initialize(
        cls,
        config: ModelConfig,
        seed: int = 0,
        pretrained: np.ndarray | None = None,
    ) -> ModelParams:
        rng = np.random.default_rng(seed)
        dt = config.np_dtype
        h = config.lstm_hidden
        tensors: dict[str, np.ndarray] = {}

        tensors["emb_word"] = _embedding(rng, len(config.words), config.word_dim, dt)
        if config.use_pos:
            tensors["emb_pos"] = _embedding(rng, len(config.pos_tags), config.tag_dim, dt)
        if config.use_ner:
            tensors["emb_ner"] = _embedding(rng, len(config.ner_tags), config.tag_dim, dt)
        if config.use_dep:
            tensors["emb_dep"] = _embedding(rng, len(config.dep_labels), config.tag_dim, dt)
        if config.multilingual:
            tensors["emb_lang"] = _embedding(rng, len(config.languages), config.lang_dim, dt)
        if config.pretrained_dim:
            if pretrained is not None:
                if pretrained.shape != (len(config.pretrained_words) + 1, config.pretrained_dim):
                    raise ValueError(
                        f"pretrained matrix shape {pretrained.shape} does not match "
                        f"{len(config.pretrained_words) + 1} words x {config.pretrained_dim}"
                    )
                tensors["emb_pre"] = pretrained.astype(dt)
            else:
                tensors["emb_pre"] = _embedding(
                    rng, len(config.pretrained_words) + 1, config.pretrained_dim, dt
                )

        in_dims = [config.input_dim, 2 * h]
        for layer, d_in in enumerate(in_dims, start=1):
            for direction in ("f", "b"):
                prefix = f"lstm{layer}{direction}"
                tensors[prefix + "_wx"] = _glorot(rng, (4 * h, d_in), dt)
                tensors[prefix + "_wh"] = _glorot(rng, (4 * h, h), dt)
                bias = np.zeros(4 * h, dtype=dt)
                bias[h : 2 * h] = 1.0  # encourage remembering at the start
                tensors[prefix + "_b"] = bias

        span_dim = config.span_dim
        if config.share_span_hidden:
            tensors["head_hidden_w"] = _glorot(rng, (config.mlp_hidden, span_dim), dt)
            tensors["head_hidden_b"] = np.zeros(config.mlp_hidden, dtype=dt)
        else:
            tensors["label_hidden_w"] = _glorot(rng, (config.mlp_hidden, span_dim), dt)
            tensors["label_hidden_b"] = np.zeros(config.mlp_hidden, dtype=dt)
            tensors["span_hidden_w"] = _glorot(rng, (config.mlp_hidden, span_dim), dt)
            tensors["span_hidden_b"] = np.zeros(config.mlp_hidden, dtype=dt)
        tensors["label_out_w"] = _glorot(rng, (len(config.labels), config.mlp_hidden), dt)
        tensors["label_out_b"] = np.zeros(len(config.labels), dtype=dt)
        tensors["span_out_w"] = _glorot(rng, (1, config.mlp_hidden), dt)
        tensors["span_out_b"] = np.zeros(1, dtype=dt)

        dc = dp = config.remote_mlp_dim
        tensors["remote_child_w"] = _glorot(rng, (dc, span_dim), dt)
        tensors["remote_child_b"] = np.zeros(dc, dtype=dt)
        tensors["remote_parent_w"] = _glorot(rng, (dp, span_dim), dt)
        tensors["remote_parent_b"] = np.zeros(dp, dtype=dt)
        tensors["biaffine_w"] = _glorot(rng, (dc + 1, len(config.remote_labels), dp), dt)
        return cls(config, tensors)

    # -- checkpointing --------------------------------------------------

    CHECKPOINT_VERSION = 1

    def save(self, path: str) -> None:
        payload = {
            "version": self.CHECKPOINT_VERSION,
            "config": self.config.to_json(),
            "tensors": {
                name: {
                    "shape": list(arr.shape),
                    "data": base64.b64encode(
                        np.ascontiguousarray(arr, dtype="<f8").tobytes()
                    ).decode("ascii"),
                }
                for name, arr in sorted(self.tensors.items())
            },
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> ModelParams:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        version = payload.get("version")
        if version != cls.CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version!r}")
        config = ModelConfig.from_json(payload["config"])
        tensors = {}
        for name, spec in payload["tensors"].items():
            raw = np.frombuffer(base64.b64decode(spec["data"]), dtype="<f8")
            tensors[name] = raw.reshape(spec["shape"]).astype(config.np_dtype)
        return cls(config, tensors)

    def copy_tensors(self) -> dict[str, np.ndarray]:
        return {name: arr.copy() for name, arr in self.tensors.items()}


class BoundParams:
    """Per-forward-pass tape leaves for every parameter tensor."""

    def __init__(self, params: ModelParams):
        self.params = params
        self.config = params.config
        self.vars = {name: Var(arr) for name, arr in params.tensors.items()}

    def __getitem__(self, name: str) -> Var:
        return self.vars[name]

    def grads(self) -> dict[str, np.ndarray]:
        return {
            name: v.grad for name, v in self.vars.items() if v.grad is not None
        }


# ---------------------------------------------------------------------------
# Embedding


def embed(
    tokens: Sequence[Token],
    lang: str,
    bound: BoundParams,
    external: np.ndarray | None = None,
) -> Var:
    """Concatenate per-token feature embeddings into an (n, input_dim) matrix.

    Lookups of unseen strings fall back to the reserved row 0.  When the
    model was built with external features, ``external`` must supply one
    vector per token of the configured width.
    """
    cfg = bound.config
    p = bound.params
    n = len(tokens)
    parts: list[Var] = []
    word_ids = [p.words.lookup(t.form) for t in tokens]
    parts.append(ad.take_rows(bound["emb_word"], word_ids))
    if cfg.use_pos:
        parts.append(ad.take_rows(bound["emb_pos"], [p.pos_tags.lookup(t.pos) for t in tokens]))
    if cfg.use_ner:
        parts.append(ad.take_rows(bound["emb_ner"], [p.ner_tags.lookup(t.ner) for t in tokens]))
    if cfg.use_dep:
        parts.append(ad.take_rows(bound["emb_dep"], [p.dep_labels.lookup(t.dep) for t in tokens]))
    if cfg.multilingual:
        parts.append(ad.take_rows(bound["emb_lang"], [p.languages.lookup(lang)] * n))
    if cfg.pretrained_dim:
        assert p.pretrained_words is not None
        parts.append(
            ad.take_rows(bound["emb_pre"], [p.pretrained_words.lookup(t.form) for t in tokens])
        )
    if cfg.external_dim:
        if external is None:
            raise ValueError("model expects external feature vectors but none were given")
        external = np.asarray(external, dtype=cfg.np_dtype)
        if external.shape != (n, cfg.external_dim):
            raise ValueError(
                f"external feature shape {external.shape} does not match "
                f"({n}, {cfg.external_dim})"
            )
        parts.append(Var(external))
    return ad.concat(parts, axis=1) if len(parts) > 1 else parts[0]


# ---------------------------------------------------------------------------
# BiLSTM encoder


@dataclass
class Encoding:
    """Fencepost outputs of the top BiLSTM layer.

    ``forward[i]`` is the forward output after consuming tokens 1..i
    (row 0 is the initial state output); ``backward[i]`` is the backward
    output after consuming tokens n..i+1 (row n is the initial state
    output).  Both are (n+1, hidden) matrices.
    """

    forward: Var
    backward: Var
    n: int


def _lstm_direction(
    inputs: list[Var], bound: BoundParams, prefix: str, reverse: bool
) -> list[Var]:
    cfg = bound.config
    h_dim = cfg.lstm_hidden
    wx, wh, b = bound[prefix + "_wx"], bound[prefix + "_wh"], bound[prefix + "_b"]
    zeros = Var(np.zeros(h_dim, dtype=cfg.np_dtype))
    h, c = zeros, zeros
    outputs: list[Var] = []
    order = reversed(inputs) if reverse else inputs
    for x in order:
        gates = ad.matmul(wx, x) + ad.matmul(wh, h) + b
        i = ad.sigmoid(ad.slice0(gates, 0, h_dim))
        f = ad.sigmoid(ad.slice0(gates, h_dim, 2 * h_dim))
        o = ad.sigmoid(ad.slice0(gates, 2 * h_dim, 3 * h_dim))
        g = ad.tanh(ad.slice0(gates, 3 * h_dim, 4 * h_dim))
        c = f * c + i * g
        h = o * ad.tanh(c)
        outputs.append(h)
    if reverse:
        outputs.reverse()
    return outputs


def encode(inputs: Var, bound: BoundParams) -> Encoding:
    """Run the two-layer BiLSTM over an (n, input_dim) matrix."""
    cfg = bound.config
    n = inputs.shape[0]
    if n == 0:
        raise ValueError("cannot encode an empty sentence")
    xs = [ad.row(inputs, i) for i in range(n)]
    f1 = _lstm_direction(xs, bound, "lstm1f", reverse=False)
    b1 = _lstm_direction(xs, bound, "lstm1b", reverse=True)
    xs2 = [ad.concat([f1[i], b1[i]], axis=0) for i in range(n)]
    f2 = _lstm_direction(xs2, bound, "lstm2f", reverse=False)
    b2 = _lstm_direction(xs2, bound, "lstm2b", reverse=True)
    zeros = Var(np.zeros(cfg.lstm_hidden, dtype=cfg.np_dtype))
    forward = ad.stack_rows([zeros] + f2)
    backward = ad.stack_rows(b2 + [zeros])
    return Encoding(forward=forward, backward=backward, n=n)


def span_reprs(enc: Encoding, spans: Sequence[tuple[int, int]]) -> Var:
    """Batch of span representations (f_j - f_i) ++ (b_i - b_j)."""
    for i, j in spans:
        if not (0 <= i < j <= enc.n):
            raise ValueError(f"degenerate or out-of-range span ({i}, {j}) for n={enc.n}")
    lo = [i for i, _ in spans]
    hi = [j for _, j in spans]
    fwd = ad.sub(ad.take_rows(enc.forward, hi), ad.take_rows(enc.forward, lo))
    bwd = ad.sub(ad.take_rows(enc.backward, lo), ad.take_rows(enc.backward, hi))
    return ad.concat([fwd, bwd], axis=1)


def span_repr(enc: Encoding, i: int, j: int) -> Var:
    """Single span representation as a vector."""
    return ad.row(span_reprs(enc, [(i, j)]), 0)


# ---------------------------------------------------------------------------
# Scoring heads


def _hidden(bound: BoundParams, reprs: Var, head: str) -> Var:
    if bound.config.share_span_hidden:
        w, b = bound["head_hidden_w"], bound["head_hidden_b"]
    else:
        w, b = bound[f"{head}_hidden_w"], bound[f"{head}_hidden_b"]
    return ad.relu(ad.matmul(reprs, transpose(w)) + b)


def transpose(a: Var) -> Var:
    out = Var(a.value.T, (a,))

    def bw(g: np.ndarray) -> None:
        a._accumulate(g.T)

    out._bw = bw
    return out


def label_scores(reprs: Var, bound: BoundParams) -> Var:
    """(m, num_labels) span-label scores for a batch of span reprs."""
    hidden = _hidden(bound, reprs, "label")
    return ad.matmul(hidden, transpose(bound["label_out_w"])) + bound["label_out_b"]


def split_scores(reprs: Var, bound: BoundParams) -> Var:
    """(m,) scalar span scores used for split decisions."""
    hidden = _hidden(bound, reprs, "span")
    return ad.matmul(hidden, ad.row(bound["span_out_w"], 0)) + ad.pick(bound["span_out_b"], 0)


def remote_child_repr(reprs: Var, bound: BoundParams) -> Var:
    return ad.relu(ad.matmul(reprs, transpose(bound["remote_child_w"])) + bound["remote_child_b"])


def remote_parent_repr(reprs: Var, bound: BoundParams) -> Var:
    return ad.relu(ad.matmul(reprs, transpose(bound["remote_parent_w"])) + bound["remote_parent_b"])


def biaffine(child_repr: Var, parent_repr: Var, w: Var) -> Var:
    """Score every remote label for one (child, parent) pair.

    The child representation is extended with a constant 1 so the last
    row of each label slice acts as a parent-only bias term.
    """
    one = Var(np.ones(1, dtype=child_repr.value.dtype))
    extended = ad.concat([child_repr, one], axis=0)
    return ad.bilinear_vec(extended, w, parent_repr)


# ---------------------------------------------------------------------------
# Optimizers


def _check_finite(name: str, grad: np.ndarray) -> None:
    if not np.isfinite(grad).all():
        raise OptimizationError(f"non-finite gradient for tensor {name!r}")


def sgd_step(
    tensors: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    lr: float,
    skip: frozenset[str] = frozenset(),
) -> None:
    """Plain gradient descent, updating tensors in place."""
    for name, grad in grads.items():
        if name in skip:
            continue
        _check_finite(name, grad)
        tensors[name] -= lr * grad


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    tensors: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    skip: frozenset[str] = frozenset(),
) -> None:
    """Adam with bias correction, updating tensors in place."""
    state.t += 1
    t = state.t
    for name, grad in grads.items():
        if name in skip:
            continue
        _check_finite(name, grad)
        if name not in state.m:
            state.m[name] = np.zeros_like(tensors[name])
            state.v[name] = np.zeros_like(tensors[name])
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        tensors[name] -= lr * m_hat / (np.sqrt(v_hat) + eps)
