"""Command-line interface.

Subcommands cover the whole workflow: ``gen`` (synthetic corpora),
``stats`` (discontinuity distribution), ``convert`` (graphs to trees),
``train``, ``parse``, ``restore`` (trees back to graphs with predicted
remotes) and ``eval``.  Errors exit nonzero and print a JSON object
``{"error": {"type": ..., "message": ...}}`` on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from typing import Sequence

import numpy as np

from .conversion import graph_to_tree, tree_from_sexpr, tree_to_graph, tree_to_sexpr
from .evaluation import report_json, score_corpus
from .generator import SyntheticSpec, generate
from .graph_model import (
    ConstituentTree,
    Edge,
    UccaGraph,
    dump_corpus,
    load_corpus,
    load_token_lines,
)
from .neural_core import BoundParams, ModelParams, embed, encode
from .remote_recovery import predict_remotes
from .stats import discontinuity_stats
from .training import TrainConfig, parse_pipeline, train


class CliError(Exception):
    """A user-facing failure (bad arguments, malformed input, ...)."""


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise CliError(message)


def _load_external(path: str) -> list[np.ndarray]:
    vectors = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                vectors.append(np.asarray(record["vectors"], dtype=np.float64))
            except (KeyError, ValueError) as exc:
                raise CliError(f"{path}:{lineno}: malformed external feature record: {exc}")
    return vectors


def _cmd_gen(args: argparse.Namespace) -> int:
    spec = SyntheticSpec()
    if args.spec:
        with open(args.spec, encoding="utf-8") as fh:
            data = json.load(fh)
        known = {f.name for f in dataclasses.fields(SyntheticSpec)}
        unknown = set(data) - known
        if unknown:
            raise CliError(f"unknown generator spec keys: {sorted(unknown)}")
        if "labels" in data:
            data["labels"] = tuple(data["labels"])
        spec = SyntheticSpec(**data)
    graphs = generate(spec, seed=args.seed, lang=args.lang)
    dump_corpus(graphs, args.out)
    print(f"wrote {len(graphs)} graphs to {args.out}")
    return 0


def _cmd_stats(args: argparse.Namespace) -> int:
    graphs = load_corpus(args.infile)
    table = discontinuity_stats(graphs)
    print(json.dumps(table, sort_keys=True, indent=2))
    return 0


def _cmd_convert(args: argparse.Namespace) -> int:
    graphs = load_corpus(args.infile)
    lossy = 0
    dropped = 0
    with open(args.out, "w", encoding="utf-8") as fh:
        for g in graphs:
            result = graph_to_tree(g)
            lossy += result.lossy_moves
            dropped += len(result.dropped_remote_edges)
            if args.format == "sexpr":
                fh.write(tree_to_sexpr(result.tree) + "\n")
            else:
                fh.write(json.dumps(result.tree.to_json(), sort_keys=True) + "\n")
    print(
        f"converted {len(graphs)} graphs to {args.out} "
        f"({dropped} remote edges dropped, {lossy} lossy moves)"
    )
    return 0


def _read_trees(path: str, fmt: str, lang: str) -> list[ConstituentTree]:
    trees = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                if fmt == "sexpr":
                    trees.append(tree_from_sexpr(line, lang=lang))
                else:
                    trees.append(ConstituentTree.from_json(json.loads(line)))
            except Exception as exc:
                raise CliError(f"{path}:{lineno}: {exc}")
    return trees


def _cmd_restore(args: argparse.Namespace) -> int:
    params = ModelParams.load(args.remotes_model)
    trees = _read_trees(args.infile, args.format, args.lang)
    restored = []
    for tree in trees:
        graph, marked = tree_to_graph(tree)
        bound = BoundParams(params)
        inputs = embed(tree.tokens, args.lang, bound)
        enc = encode(inputs, bound)
        remotes = predict_remotes(graph, marked, enc, bound)
        if remotes:
            graph = UccaGraph(
                tokens=graph.tokens,
                root=graph.root,
                nonterminals=graph.nonterminals,
                edges=graph.edges
                + tuple(Edge(p, c, label, remote=True) for p, c, label in remotes),
            )
        restored.append(graph)
    dump_corpus(restored, args.out)
    print(f"restored {len(restored)} graphs to {args.out}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    config = TrainConfig()
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            config = TrainConfig.from_json(json.load(fh))
    if args.seed is not None:
        config.seed = args.seed
    train_graphs: list[UccaGraph] = []
    for path in args.train:
        train_graphs.extend(load_corpus(path))
    dev_graphs = load_corpus(args.dev)
    external_train = None
    if args.external_features:
        external_train = []
        for path in args.external_features:
            external_train.extend(_load_external(path))
        if len(external_train) != len(train_graphs):
            raise CliError(
                f"{len(external_train)} external feature records for "
                f"{len(train_graphs)} training sentences"
            )
        if config.external_dim == 0 and external_train:
            config.external_dim = external_train[0].shape[1]
    external_dev = None
    if args.dev_external_features:
        external_dev = _load_external(args.dev_external_features)
        if len(external_dev) != len(dev_graphs):
            raise CliError(
                f"{len(external_dev)} external feature records for "
                f"{len(dev_graphs)} dev sentences"
            )
    result = train(
        train_graphs,
        dev_graphs,
        config,
        external_train=external_train,
        external_dev=external_dev,
    )
    result.params.save(args.out)
    print(
        f"trained for {result.epochs_run} epochs; "
        f"best dev F1 {result.best_f1:.4f} at epoch {result.best_epoch}; "
        f"checkpoint written to {args.out}"
    )
    return 0


def _cmd_parse(args: argparse.Namespace) -> int:
    params = ModelParams.load(args.model)
    sentences = load_token_lines(args.infile)
    external = _load_external(args.external_features) if args.external_features else None
    if external is not None and len(external) != len(sentences):
        raise CliError(
            f"{len(external)} external feature records for {len(sentences)} sentences"
        )
    parsed = []
    for k, tokens in enumerate(sentences):
        ext = external[k] if external is not None else None
        parsed.append(parse_pipeline(tokens, params, external=ext))
    dump_corpus(parsed, args.out)
    print(f"parsed {len(parsed)} sentences to {args.out}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    gold = load_corpus(args.gold)
    pred = load_corpus(args.pred)
    report = score_corpus(gold, pred)
    print(report_json(report))
    if args.tsv:
        with open(args.tsv, "w", encoding="utf-8") as fh:
            fh.write(report.to_tsv() + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="ucca", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic corpus")
    p.add_argument("--spec", help="JSON file with generator settings")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lang", default="en")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("stats", help="discontinuity distribution of a corpus")
    p.add_argument("--in", dest="infile", required=True)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("convert", help="convert graphs to constituent trees")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["sexpr", "jsonl"], default="sexpr")
    p.set_defaults(func=_cmd_convert)

    p = sub.add_parser("restore", help="restore graphs from trees, predicting remotes")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--remotes-model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["sexpr", "jsonl"], default="sexpr")
    p.add_argument("--lang", default="")
    p.set_defaults(func=_cmd_restore)

    p = sub.add_parser("train", help="train a parser and remote classifier jointly")
    p.add_argument("--train", action="append", required=True, help="training corpus JSONL (repeatable)")
    p.add_argument("--dev", required=True)
    p.add_argument("--config", help="JSON file with TrainConfig overrides")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument(
        "--external-features",
        action="append",
        help="JSONL with per-token vectors, aligned with --train (repeatable)",
    )
    p.add_argument("--dev-external-features")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("parse", help="parse token sequences into graphs")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="infile", required=True, help="JSONL with tokens (edges ignored)")
    p.add_argument("--external-features")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_parse)

    p = sub.add_parser("eval", help="score predicted graphs against gold graphs")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--tsv", help="also write a one-line TSV to this path")
    p.set_defaults(func=_cmd_eval)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - single reporting point
        payload = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        print(json.dumps(payload), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
