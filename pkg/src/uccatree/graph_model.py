"""Data model for UCCA-style semantic graphs and constituent trees.

Conventions used throughout the package:

* Token positions are 1-based.  A sentence with n tokens has fencepost
  positions 0..n; the span (i, j) covers tokens i+1..j.
* Terminal nodes share their id with their token position (1..n).
  Nonterminal ids are integers greater than n.
* Every node except the root has exactly one *primary* parent; primary
  edges form a tree.  *Remote* edges add reentrancies on top of that
  tree and the full edge set must stay acyclic.
* Terminal-attaching edges carry the empty label ""; terminals carry no
  label of their own.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator

PRIMARY = "primary"
REMOTE = "remote"

NodeId = int


@dataclass(frozen=True)
class Token:
    """One token of the underlying sentence with its standard features."""

    form: str
    pos: str = ""
    ner: str = ""
    dep: str = ""
    lang: str = ""


@dataclass(frozen=True)
class Edge:
    """A labeled parent->child edge, either primary (tree) or remote."""

    parent: NodeId
    child: NodeId
    label: str
    remote: bool = False

    @property
    def kind(self) -> str:
        return REMOTE if self.remote else PRIMARY


@dataclass(frozen=True)
class EdgeRecord:
    """Yield-based identity of a labeled edge, used for scoring.

    Two edges count as the same prediction when the terminal yield of
    their child, their label and their kind all agree.
    """

    positions: frozenset[int]
    label: str
    remote: bool = False


@dataclass(frozen=True)
class UccaGraph:
    """An immutable semantic graph over a token sequence.

    Derived accessors (parents, yields, depths, ...) assume the graph is
    valid; call :meth:`validate` on untrusted input first.
    """

    tokens: tuple[Token, ...]
    root: NodeId
    nonterminals: frozenset[NodeId]
    edges: tuple[Edge, ...]

    # -- basic structure ------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.tokens)

    @property
    def terminals(self) -> range:
        return range(1, self.n + 1)

    @cached_property
    def node_ids(self) -> frozenset[NodeId]:
        return self.nonterminals | frozenset(self.terminals)

    @cached_property
    def primary_edges(self) -> tuple[Edge, ...]:
        return tuple(e for e in self.edges if not e.remote)

    @cached_property
    def remote_edges(self) -> tuple[Edge, ...]:
        return tuple(e for e in self.edges if e.remote)

    @cached_property
    def primary_parent(self) -> dict[NodeId, NodeId]:
        return {e.child: e.parent for e in self.primary_edges}

    @cached_property
    def primary_label(self) -> dict[NodeId, str]:
        """Label of the unique primary edge above each non-root node."""
        return {e.child: e.label for e in self.primary_edges}

    @cached_property
    def primary_children(self) -> dict[NodeId, tuple[NodeId, ...]]:
        children: dict[NodeId, list[NodeId]] = {v: [] for v in self.node_ids}
        for e in self.primary_edges:
            children[e.parent].append(e.child)
        return {v: tuple(cs) for v, cs in children.items()}

    @cached_property
    def depth(self) -> dict[NodeId, int]:
        depths = {self.root: 0}
        stack = [self.root]
        while stack:
            v = stack.pop()
            for c in self.primary_children[v]:
                depths[c] = depths[v] + 1
                stack.append(c)
        return depths

    # -- yields ---------------------------------------------------------

    @cached_property
    def _yields(self) -> dict[NodeId, tuple[int, ...]]:
        yields: dict[NodeId, tuple[int, ...]] = {}

        def visit(v: NodeId) -> tuple[int, ...]:
            if v in self.terminals:
                return (v,)
            out: list[int] = []
            for c in self.primary_children[v]:
                out.extend(visit(c))
            result = tuple(sorted(out))
            yields[v] = result
            return result

        visit(self.root)
        for t in self.terminals:
            yields[t] = (t,)
        return yields

    def yield_of(self, node: NodeId) -> tuple[int, ...]:
        """Sorted token positions reachable from ``node`` via primary edges."""
        if node not in self._yields:
            raise ValueError(f"unknown node id {node}")
        return self._yields[node]

    def is_discontinuous(self, node: NodeId) -> bool:
        """True when the node's yield does not form a contiguous block."""
        if node in self.terminals:
            raise ValueError(f"node {node} is a terminal")
        y = self.yield_of(node)
        return bool(y) and (y[-1] - y[0] + 1) != len(y)

    def fencepost_span(self, node: NodeId) -> tuple[int, int]:
        """(min position - 1, max position) of the node's yield."""
        y = self.yield_of(node)
        return (y[0] - 1, y[-1])

    def lca(self, a: NodeId, b: NodeId) -> NodeId:
        """Lowest common ancestor of two nodes in the primary tree."""
        da, db = self.depth[a], self.depth[b]
        while da > db:
            a = self.primary_parent[a]
            da -= 1
        while db > da:
            b = self.primary_parent[b]
            db -= 1
        while a != b:
            a = self.primary_parent[a]
            b = self.primary_parent[b]
        return a

    # -- validation -----------------------------------------------------

    def validate(self) -> list[str]:
        """Check all structural invariants; return human-readable violations.

        An empty list means the graph is well-formed.  This method never
        touches the cached accessors, so it is safe on malformed input.
        """
        problems: list[str] = []
        n = self.n
        if n == 0:
            problems.append("graph has no tokens")
        for i, tok in enumerate(self.tokens, start=1):
            if not tok.form:
                problems.append(f"token {i} has an empty form")
        terminals = set(range(1, n + 1))
        if self.root not in self.nonterminals:
            problems.append(f"root {self.root} is not a nonterminal")
        for v in self.nonterminals:
            if v <= n:
                problems.append(f"nonterminal id {v} collides with terminal range 1..{n}")
        nodes = terminals | set(self.nonterminals)

        for e in self.edges:
            if e.parent not in nodes:
                problems.append(f"edge references unknown parent {e.parent}")
            if e.child not in nodes:
                problems.append(f"edge references unknown child {e.child}")
            if e.parent in terminals:
                problems.append(f"terminal {e.parent} has a child ({e.child})")

        seen_pairs = Counter((e.parent, e.child) for e in self.edges)
        for (p, c), count in seen_pairs.items():
            if count > 1:
                problems.append(f"duplicate edge {p}->{c}")

        primary_parents: dict[NodeId, list[NodeId]] = {}
        for e in self.edges:
            if not e.remote:
                primary_parents.setdefault(e.child, []).append(e.parent)
        for v in sorted(nodes):
            parents = primary_parents.get(v, [])
            if v == self.root:
                if parents:
                    problems.append(f"root {v} has a primary parent {parents[0]}")
            elif len(parents) != 1:
                problems.append(f"node {v} has {len(parents)} primary parents, expected 1")

        for e in self.edges:
            if e.remote and e.child in terminals:
                problems.append(f"remote edge {e.parent}->{e.child} points at a terminal")
            if e.remote and (e.parent, e.child) in {
                (pe.parent, pe.child) for pe in self.edges if not pe.remote
            }:
                problems.append(f"remote edge {e.parent}->{e.child} duplicates a primary edge")

        if problems:
            return problems

        # Reachability of the primary tree (parent uniqueness already holds,
        # so full coverage plus the edge count rules out primary cycles).
        children: dict[NodeId, list[NodeId]] = {v: [] for v in nodes}
        for e in self.edges:
            if not e.remote:
                children[e.parent].append(e.child)
        reached = {self.root}
        stack = [self.root]
        while stack:
            v = stack.pop()
            for c in children[v]:
                if c not in reached:
                    reached.add(c)
                    stack.append(c)
        missing = nodes - reached
        if missing:
            problems.append(f"nodes unreachable from root via primary edges: {sorted(missing)}")
            return problems
        for v in sorted(self.nonterminals):
            if not children[v]:
                problems.append(f"nonterminal {v} has no children")
        if problems:
            return problems

        # Acyclicity of the full edge set (remote edges included).
        out: dict[NodeId, list[NodeId]] = {v: [] for v in nodes}
        for e in self.edges:
            out[e.parent].append(e.child)
        state: dict[NodeId, int] = {}  # 1 = on stack, 2 = done

        def has_cycle(v: NodeId) -> bool:
            stack = [(v, iter(out[v]))]
            state[v] = 1
            while stack:
                node, it = stack[-1]
                advanced = False
                for w in it:
                    if state.get(w) == 1:
                        return True
                    if w not in state:
                        state[w] = 1
                        stack.append((w, iter(out[w])))
                        advanced = True
                        break
                if not advanced:
                    state[node] = 2
                    stack.pop()
            return False

        for v in sorted(nodes):
            if v not in state and has_cycle(v):
                problems.append("full edge set contains a cycle")
                break
        return problems

    # -- canonical identity ---------------------------------------------

    def canonical_ids(self) -> dict[NodeId, NodeId]:
        """Renumber nonterminals by preorder over the primary tree.

        Children are visited in order of their leftmost terminal, so two
        graphs that differ only in nonterminal numbering map to the same
        canonical ids.  Terminals map to themselves.
        """
        mapping: dict[NodeId, NodeId] = {t: t for t in self.terminals}
        next_id = self.n + 1

        def visit(v: NodeId) -> None:
            nonlocal next_id
            if v in self.terminals:
                return
            mapping[v] = next_id
            next_id += 1
            kids = sorted(self.primary_children[v], key=lambda c: self.yield_of(c)[0])
            for c in kids:
                visit(c)

        visit(self.root)
        return mapping

    def canonical(self) -> UccaGraph:
        """Equivalent graph with canonical ids and sorted edges."""
        mapping = self.canonical_ids()
        edges = tuple(
            sorted(
                (
                    Edge(mapping[e.parent], mapping[e.child], e.label, e.remote)
                    for e in self.edges
                ),
                key=lambda e: (e.parent, e.child, e.remote, e.label),
            )
        )
        return UccaGraph(
            tokens=self.tokens,
            root=mapping[self.root],
            nonterminals=frozenset(mapping[v] for v in self.nonterminals),
            edges=edges,
        )

    def same_structure(self, other: UccaGraph) -> bool:
        """Edge-set equality modulo nonterminal numbering."""
        a, b = self.canonical(), other.canonical()
        return a.tokens == b.tokens and a.root == b.root and a.edges == b.edges

    # -- serialization --------------------------------------------------

    def to_json(self) -> dict:
        lang = self.tokens[0].lang if self.tokens else ""
        return {
            "tokens": [
                {"form": t.form, "pos": t.pos, "ner": t.ner, "dep": t.dep}
                for t in self.tokens
            ],
            "lang": lang,
            "nodes": sorted(self.nonterminals),
            "root": self.root,
            "edges": [
                {"parent": e.parent, "child": e.child, "label": e.label, "remote": e.remote}
                for e in self.edges
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> UccaGraph:
        lang = data.get("lang", "")
        tokens = tuple(
            Token(
                form=t["form"],
                pos=t.get("pos", ""),
                ner=t.get("ner", ""),
                dep=t.get("dep", ""),
                lang=lang,
            )
            for t in data["tokens"]
        )
        edges = tuple(
            Edge(
                parent=int(e["parent"]),
                child=int(e["child"]),
                label=e.get("label", ""),
                remote=bool(e.get("remote", False)),
            )
            for e in data["edges"]
        )
        return cls(
            tokens=tokens,
            root=int(data["root"]),
            nonterminals=frozenset(int(v) for v in data["nodes"]),
            edges=edges,
        )


def load_corpus(path: str) -> list[UccaGraph]:
    """Read one graph per line from a JSONL file."""
    graphs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                graphs.append(UccaGraph.from_json(json.loads(line)))
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed graph record: {exc}") from exc
    return graphs


def dump_corpus(graphs: Iterable[UccaGraph], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for g in graphs:
            fh.write(json.dumps(g.to_json(), sort_keys=True) + "\n")


def load_token_lines(path: str) -> list[tuple[Token, ...]]:
    """Read token sequences from corpus JSONL, ignoring any graph part."""
    sentences = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
                lang = data.get("lang", "")
                sentences.append(
                    tuple(
                        Token(
                            form=t["form"],
                            pos=t.get("pos", ""),
                            ner=t.get("ner", ""),
                            dep=t.get("dep", ""),
                            lang=lang,
                        )
                        for t in data["tokens"]
                    )
                )
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed token record: {exc}") from exc
    return sentences


# ---------------------------------------------------------------------------
# Constituent trees


@dataclass(frozen=True)
class TreeNode:
    """A node of a constituent tree.

    Internal nodes have a label and children; leaves reference a token
    position and carry no label.
    """

    label: str | None = None
    children: tuple[TreeNode, ...] = ()
    leaf: int | None = None

    @property
    def is_leaf(self) -> bool:
        return self.leaf is not None

    def leaves(self) -> Iterator[int]:
        if self.is_leaf:
            yield self.leaf  # type: ignore[misc]
            return
        for c in self.children:
            yield from c.leaves()

    @cached_property
    def leaf_positions(self) -> tuple[int, ...]:
        return tuple(self.leaves())

    @property
    def span(self) -> tuple[int, int]:
        """Fencepost span covered by this node."""
        pos = self.leaf_positions
        return (pos[0] - 1, pos[-1])

    def iter_nodes(self) -> Iterator[TreeNode]:
        yield self
        for c in self.children:
            yield from c.iter_nodes()


ROOT_LABEL = "ROOT"


@dataclass(frozen=True)
class ConstituentTree:
    """An ordered tree over the sentence with the root labeled "ROOT"."""

    tokens: tuple[Token, ...]
    root: TreeNode

    @property
    def n(self) -> int:
        return len(self.tokens)

    def validate(self) -> list[str]:
        problems: list[str] = []
        if not self.tokens:
            problems.append("tree has no tokens")
        if self.root.is_leaf or self.root.label != ROOT_LABEL:
            problems.append(f"root label is {self.root.label!r}, expected {ROOT_LABEL!r}")
        leaves = list(self.root.leaves())
        if leaves != list(range(1, len(self.tokens) + 1)):
            problems.append(f"leaves {leaves} do not cover positions 1..{len(self.tokens)} in order")
            return problems
        for node in self.root.iter_nodes():
            if node.is_leaf:
                continue
            if not node.label and node is not self.root:
                problems.append("internal node with empty label")
            if not node.children:
                problems.append(f"internal node {node.label!r} has no children")
                continue
            pos = node.leaf_positions
            if pos[-1] - pos[0] + 1 != len(pos):
                problems.append(f"node {node.label!r} spans a non-contiguous interval {pos}")
        return problems

    # The JSONL tree form mirrors the graph corpus format: one object per
    # line with "tokens" and "lang" keys plus the nested tree.

    def to_json(self) -> dict:
        def encode(node: TreeNode) -> dict:
            if node.is_leaf:
                return {"leaf": node.leaf}
            return {"label": node.label, "children": [encode(c) for c in node.children]}

        lang = self.tokens[0].lang if self.tokens else ""
        return {
            "tokens": [
                {"form": t.form, "pos": t.pos, "ner": t.ner, "dep": t.dep}
                for t in self.tokens
            ],
            "lang": lang,
            "tree": encode(self.root),
        }

    @classmethod
    def from_json(cls, data: dict) -> ConstituentTree:
        lang = data.get("lang", "")
        tokens = tuple(
            Token(
                form=t["form"],
                pos=t.get("pos", ""),
                ner=t.get("ner", ""),
                dep=t.get("dep", ""),
                lang=lang,
            )
            for t in data["tokens"]
        )

        def decode(node: dict) -> TreeNode:
            if "leaf" in node:
                return TreeNode(leaf=int(node["leaf"]))
            return TreeNode(
                label=node["label"],
                children=tuple(decode(c) for c in node["children"]),
            )

        return cls(tokens=tokens, root=decode(data["tree"]))
