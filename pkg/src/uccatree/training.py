"""Joint training of the span parser and the remote-edge classifier.

Both objectives share the encoder: each sentence contributes
``loss = loss_topdown + loss_remote`` (the decomposition is asserted at
every step), gradients flow through one backward pass, and one optimizer
step is taken per sentence.  Model selection tracks the pooled F1 of the
full parse pipeline on the dev set; training stops after ``patience``
epochs without improvement or at the epoch cap.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

from .conversion import graph_to_tree, tree_to_graph
from .evaluation import F1Report, score_corpus
from .graph_model import Edge, Token, UccaGraph
from .neural_core import (
    NOT_PARENT,
    UNK,
    AdamState,
    BoundParams,
    ModelConfig,
    ModelParams,
    Vocab,
    adam_step,
    embed,
    encode,
    sgd_step,
)
from .remote_recovery import (
    RemoteCandidatePair,
    enumerate_pairs,
    loss_remote,
    predict_remotes,
)
from .span_parser import GoldTrace, gold_trace, loss_topdown, parse_topdown

DECOMPOSITION_TOLERANCE = 1e-12


@dataclass
class TrainConfig:
    """Training hyperparameters and model dimensions."""

    seed: int = 1
    max_epochs: int = 100
    patience: int = 10
    optimizer: str = "adam"  # "adam" or "sgd"
    learning_rate: float = 1e-3
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
    share_span_hidden: bool = False
    dtype: str = "float64"
    pretrained_path: str | None = None
    freeze_pretrained: bool = False
    external_dim: int = 0

    @classmethod
    def from_json(cls, data: dict) -> TrainConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class Example:
    """A training sentence with its precomputed supervision."""

    tokens: tuple[Token, ...]
    lang: str
    trace: GoldTrace
    pairs: list[RemoteCandidatePair]
    gold_remotes: list[tuple[int, int, str]]
    external: np.ndarray | None = None


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    dev_f1: float


@dataclass
class TrainResult:
    params: ModelParams
    best_f1: float
    best_epoch: int
    epochs_run: int
    history: list[EpochStats] = field(default_factory=list)


def prepare_example(graph: UccaGraph, external: np.ndarray | None = None) -> Example:
    """Convert one gold graph into parser and remote supervision."""
    result = graph_to_tree(graph)
    trace = gold_trace(result.tree)
    gold_remotes = list(result.dropped_remote_edges)
    marked = sorted({child for _, child, _ in gold_remotes})
    pairs = enumerate_pairs(graph, marked)
    lang = graph.tokens[0].lang
    return Example(
        tokens=graph.tokens,
        lang=lang,
        trace=trace,
        pairs=pairs,
        gold_remotes=gold_remotes,
        external=external,
    )


def build_model_config(
    train_graphs: Sequence[UccaGraph],
    config: TrainConfig,
    pretrained_words: list[str] | None = None,
    pretrained_dim: int = 0,
) -> ModelConfig:
    """Collect vocabularies and label inventories from the training set."""
    examples = [prepare_example(g) for g in train_graphs]
    return _model_config_from_examples(examples, config, pretrained_words, pretrained_dim)


def _model_config_from_examples(
    examples: Sequence[Example],
    config: TrainConfig,
    pretrained_words: list[str] | None = None,
    pretrained_dim: int = 0,
) -> ModelConfig:
    words: set[str] = set()
    pos: set[str] = set()
    ner: set[str] = set()
    dep: set[str] = set()
    langs: set[str] = set()
    labels: set[str] = set()
    remote_labels: set[str] = set()
    for ex in examples:
        for t in ex.tokens:
            words.add(t.form)
            pos.add(t.pos)
            ner.add(t.ner)
            dep.add(t.dep)
        langs.add(ex.lang)
        for entry in ex.trace.entries:
            labels.add(entry.label)
        for _, _, label in ex.gold_remotes:
            remote_labels.add(label)
    labels.discard("")
    remote_labels.discard(NOT_PARENT)
    return ModelConfig(
        word_dim=config.word_dim,
        tag_dim=config.tag_dim,
        lang_dim=config.lang_dim,
        lstm_hidden=config.lstm_hidden,
        mlp_hidden=config.mlp_hidden,
        remote_mlp_dim=config.remote_mlp_dim,
        use_pos=config.use_pos,
        use_ner=config.use_ner,
        use_dep=config.use_dep,
        multilingual=config.multilingual,
        pretrained_dim=pretrained_dim,
        freeze_pretrained=config.freeze_pretrained,
        external_dim=config.external_dim,
        share_span_hidden=config.share_span_hidden,
        dtype=config.dtype,
        words=Vocab.build(words).items,
        pos_tags=Vocab.build(pos).items,
        ner_tags=Vocab.build(ner).items,
        dep_labels=Vocab.build(dep).items,
        languages=Vocab.build(langs).items,
        pretrained_words=pretrained_words or [],
        labels=[""] + sorted(labels),
        remote_labels=[NOT_PARENT] + sorted(remote_labels),
    )


def load_pretrained(path: str) -> tuple[list[str], np.ndarray]:
    """Read text-format word vectors: one ``word v1 .. vk`` line per word.

    A leading ``count dim`` header line is accepted and skipped.  Returns
    the word list and a matrix with a zero row 0 reserved for unknowns.
    """
    words: list[str] = []
    vectors: list[list[float]] = []
    dim: int | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if lineno == 1 and len(parts) == 2:
                try:
                    int(parts[0]), int(parts[1])
                    continue  # header line
                except ValueError:
                    pass
            if len(parts) < 2:
                continue
            word, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise ValueError(
                    f"{path}:{lineno}: vector of width {len(values)}, expected {dim}"
                )
            words.append(word)
            vectors.append([float(v) for v in values])
    if dim is None:
        raise ValueError(f"{path}: no vectors found")
    matrix = np.vstack([np.zeros((1, dim)), np.asarray(vectors, dtype=np.float64)])
    return words, matrix


def sentence_loss(
    example: Example, params: ModelParams
) -> tuple[float, float, float, dict[str, np.ndarray]]:
    """Forward/backward for one sentence.

    Returns (joint, topdown, remote) loss values and the gradients.
    Raises if the joint loss stops being the exact sum of its parts.
    """
    bound = BoundParams(params)
    inputs = embed(example.tokens, example.lang, bound, external=example.external)
    enc = encode(inputs, bound)
    lt = loss_topdown(enc, example.trace, bound)
    lr = loss_remote(example.pairs, example.gold_remotes, enc, bound)
    joint = lt + lr
    drift = abs((float(lt.value) + float(lr.value)) - float(joint.value))
    if drift > DECOMPOSITION_TOLERANCE:
        raise AssertionError(
            f"joint loss decomposition violated: |{lt.value} + {lr.value} - {joint.value}| = {drift}"
        )
    joint.backward()
    return float(joint.value), float(lt.value), float(lr.value), bound.grads()


def parse_pipeline(
    tokens: Sequence[Token],
    params: ModelParams,
    external: np.ndarray | None = None,
) -> UccaGraph:
    """Tokens -> tree -> restored graph -> graph with predicted remotes."""
    tokens = tuple(tokens)
    if not tokens:
        raise ValueError("cannot parse an empty sentence")
    lang = tokens[0].lang
    bound = BoundParams(params)
    inputs = embed(tokens, lang, bound, external=external)
    enc = encode(inputs, bound)
    tree = parse_topdown(enc, tokens, bound)
    graph, marked = tree_to_graph(tree)
    remotes = predict_remotes(graph, marked, enc, bound)
    if remotes:
        edges = graph.edges + tuple(Edge(p, c, label, remote=True) for p, c, label in remotes)
        graph = UccaGraph(
            tokens=graph.tokens,
            root=graph.root,
            nonterminals=graph.nonterminals,
            edges=edges,
        )
    problems = graph.validate()
    if problems:  # the pipeline must only emit valid graphs
        raise AssertionError(f"parse produced an invalid graph: {problems}")
    return graph


def evaluate_model(
    params: ModelParams,
    graphs: Sequence[UccaGraph],
    external: Sequence[np.ndarray] | None = None,
) -> F1Report:
    """Parse every sentence and score the result against its gold graph."""
    predictions = []
    for k, gold in enumerate(graphs):
        ext = external[k] if external is not None else None
        predictions.append(parse_pipeline(gold.tokens, params, external=ext))
    return score_corpus(list(graphs), predictions)


def train(
    train_graphs: Sequence[UccaGraph],
    dev_graphs: Sequence[UccaGraph],
    config: TrainConfig,
    external_train: Sequence[np.ndarray] | None = None,
    external_dev: Sequence[np.ndarray] | None = None,
) -> TrainResult:
    """Run joint training and return the best-on-dev model."""
    pretrained_matrix = None
    pretrained_words: list[str] | None = None
    pretrained_dim = 0
    if config.pretrained_path:
        pretrained_words, pretrained_matrix = load_pretrained(config.pretrained_path)
        pretrained_dim = pretrained_matrix.shape[1]

    examples = []
    for k, g in enumerate(train_graphs):
        ext = external_train[k] if external_train is not None else None
        examples.append(prepare_example(g, external=ext))
    model_config = _model_config_from_examples(
        examples, config, pretrained_words, pretrained_dim
    )
    params = ModelParams.initialize(model_config, seed=config.seed, pretrained=pretrained_matrix)

    skip = frozenset({"emb_pre"}) if config.freeze_pretrained else frozenset()
    adam = AdamState()
    rng = np.random.default_rng(config.seed)

    best_f1 = -1.0
    best_epoch = 0
    best_tensors = params.copy_tensors()
    stale = 0
    history: list[EpochStats] = []
    epochs_run = 0

    for epoch in range(1, config.max_epochs + 1):
        epochs_run = epoch
        order = rng.permutation(len(examples))
        epoch_loss = 0.0
        for idx in order:
            joint, _, _, grads = sentence_loss(examples[int(idx)], params)
            epoch_loss += joint
            if config.optimizer == "adam":
                adam_step(params.tensors, grads, adam, lr=config.learning_rate, skip=skip)
            elif config.optimizer == "sgd":
                sgd_step(params.tensors, grads, config.learning_rate, skip=skip)
            else:
                raise ValueError(f"unknown optimizer {config.optimizer!r}")
        report = evaluate_model(params, dev_graphs, external=external_dev)
        dev_f1 = report.averaged.f1
        history.append(EpochStats(epoch=epoch, train_loss=epoch_loss, dev_f1=dev_f1))
        if dev_f1 > best_f1:
            best_f1 = dev_f1
            best_epoch = epoch
            best_tensors = params.copy_tensors()
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break

    params.tensors = best_tensors
    return TrainResult(
        params=params,
        best_f1=best_f1,
        best_epoch=best_epoch,
        epochs_run=epochs_run,
        history=history,
    )
