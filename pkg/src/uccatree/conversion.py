"""Lossy-bounded conversion between semantic graphs and constituent trees.

The forward direction turns a graph into a tree in three passes:

1. ``strip_remotes`` drops reentrant edges and marks each node that had a
   remote parent by suffixing ``-remote`` onto its primary edge label.
2. ``remove_discontinuities`` repairs non-contiguous yields by moving the
   subtree that fills a gap down into the discontinuous node.  When the
   moved subtree came from the discontinuous node's own parent (distance
   one, which is also the lowest common ancestor) the move is recorded on
   the label as ``-ancestor1`` and can be undone exactly; all other moves
   are lossy and only counted.
3. ``push_labels`` turns edge labels into node labels, names the root
   "ROOT", and collapses unary chains with ``+``.

``tree_to_graph`` inverts pass 3, re-expands ``-ancestor1`` moves and
returns the list of nodes whose incoming remote edges must be recovered
by a classifier.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .graph_model import (
    ROOT_LABEL,
    ConstituentTree,
    Edge,
    Token,
    TreeNode,
    UccaGraph,
)

REMOTE_SUFFIX = "-remote"
ANCESTOR_SUFFIX = "-ancestor1"

# A node label is one or more "+"-joined parts; each part is a base
# category optionally carrying the remote marker and then the move marker.
LABEL_PART_RE = re.compile(r"[^+\s()]+?(-remote)?(-ancestor1)?$")


class ConversionError(Exception):
    """Raised when a graph or tree cannot be converted faithfully."""


@dataclass(frozen=True)
class MoveRecord:
    """One structural move performed while removing a discontinuity.

    ``category`` is "ancestor" when the detachment point was the lowest
    common ancestor of the discontinuous node and the gap terminal (then
    ``ancestor_distance`` counts the primary edges from there down to the
    discontinuous node), or "discontinuous" when the upward walk stopped
    early at another discontinuous node.
    """

    moved: int
    from_parent: int
    to_parent: int
    category: str
    ancestor_distance: int | None = None


@dataclass(frozen=True)
class ConversionResult:
    tree: ConstituentTree
    dropped_remote_edges: tuple[tuple[int, int, str], ...]
    lossy_moves: int


def split_label(label: str) -> tuple[str, bool, bool]:
    """Split a label part into (base, has_remote, has_ancestor1)."""
    ancestor = label.endswith(ANCESTOR_SUFFIX)
    if ancestor:
        label = label[: -len(ANCESTOR_SUFFIX)]
    remote = label.endswith(REMOTE_SUFFIX)
    if remote:
        label = label[: -len(REMOTE_SUFFIX)]
    return label, remote, ancestor


def strip_suffixes(label: str) -> str:
    return split_label(label)[0]


# ---------------------------------------------------------------------------
# Pass 1: remote edges


def strip_remotes(graph: UccaGraph) -> tuple[UccaGraph, tuple[tuple[int, int, str], ...]]:
    """Drop remote edges, marking former remote children on their labels.

    Returns the remote-free graph and the dropped (parent, child, label)
    triples in their original order.  A node with several remote parents
    still gets a single ``-remote`` marker.
    """
    dropped = tuple((e.parent, e.child, e.label) for e in graph.remote_edges)
    marked = {e.child for e in graph.remote_edges}
    edges = []
    for e in graph.primary_edges:
        if e.child in marked:
            edges.append(Edge(e.parent, e.child, e.label + REMOTE_SUFFIX))
        else:
            edges.append(Edge(e.parent, e.child, e.label))
    stripped = UccaGraph(
        tokens=graph.tokens,
        root=graph.root,
        nonterminals=graph.nonterminals,
        edges=tuple(edges),
    )
    return stripped, dropped


# ---------------------------------------------------------------------------
# Pass 2: discontinuities


class _MutableTree:
    """Scratch parent/children/label maps for the move procedure."""

    def __init__(self, graph: UccaGraph):
        if graph.remote_edges:
            raise ConversionError("remove_discontinuities expects a remote-free graph")
        self.n = graph.n
        self.root = graph.root
        self.nonterminals = set(graph.nonterminals)
        self.parent = dict(graph.primary_parent)
        self.label = dict(graph.primary_label)
        self.children: dict[int, list[int]] = {v: [] for v in graph.node_ids}
        for e in graph.primary_edges:
            self.children[e.parent].append(e.child)

    def yields(self) -> dict[int, tuple[int, ...]]:
        out: dict[int, tuple[int, ...]] = {}

        def visit(v: int) -> tuple[int, ...]:
            if v <= self.n:
                return (v,)
            acc: list[int] = []
            for c in self.children[v]:
                acc.extend(visit(c))
            y = tuple(sorted(acc))
            out[v] = y
            return y

        visit(self.root)
        return out

    def depth(self, v: int) -> int:
        d = 0
        while v != self.root:
            v = self.parent[v]
            d += 1
        return d

    def ancestors(self, v: int) -> list[int]:
        chain = [v]
        while chain[-1] != self.root:
            chain.append(self.parent[chain[-1]])
        return chain

    def move(self, child: int, new_parent: int) -> None:
        old = self.parent[child]
        self.children[old].remove(child)
        self.children[new_parent].append(child)
        self.parent[child] = new_parent

    def to_graph(self, tokens: tuple[Token, ...]) -> UccaGraph:
        yields = self.yields()
        yields.update({t: (t,) for t in range(1, self.n + 1)})
        edges: list[Edge] = []

        def emit(v: int) -> None:
            kids = sorted(self.children[v], key=lambda c: yields[c][0])
            for c in kids:
                edges.append(Edge(v, c, self.label[c]))
                if c > self.n:
                    emit(c)

        emit(self.root)
        return UccaGraph(
            tokens=tokens,
            root=self.root,
            nonterminals=frozenset(self.nonterminals),
            edges=tuple(edges),
        )


def _discontinuity_pairs(yields: dict[int, tuple[int, ...]]) -> int:
    """Total count of (node, missing terminal inside its interval) pairs."""
    total = 0
    for y in yields.values():
        total += (y[-1] - y[0] + 1) - len(y)
    return total


def remove_discontinuities(
    graph: UccaGraph,
) -> tuple[UccaGraph, tuple[MoveRecord, ...]]:
    """Repair all non-contiguous yields by moving gap subtrees.

    Repeatedly picks the discontinuous node A with the smallest leftmost
    terminal (deepest first on ties), finds the leftmost terminal B inside
    A's interval that is not a descendant of A, and walks up from B to the
    node C whose parent is either lca(A, B) or another discontinuous node.
    C is moved under A.  Only moves with the detachment point equal to the
    lca at distance one from A gain the ``-ancestor1`` label marker; every
    other move is lossy.
    """
    state = _MutableTree(graph)
    moves: list[MoveRecord] = []
    guard = max(1, len(graph.node_ids)) ** 2

    previous_pairs: int | None = None
    for _ in range(guard + 1):
        yields = state.yields()
        pairs = _discontinuity_pairs(yields)
        if previous_pairs is not None and pairs >= previous_pairs:
            raise ConversionError(
                f"discontinuity repair failed to make progress "
                f"({previous_pairs} -> {pairs} gap pairs)"
            )
        previous_pairs = pairs
        discontinuous = {
            v for v, y in yields.items() if (y[-1] - y[0] + 1) != len(y)
        }
        if not discontinuous:
            return state.to_graph(graph.tokens), tuple(moves)

        a = min(discontinuous, key=lambda v: (yields[v][0], -state.depth(v)))
        ya = set(yields[a])
        b = next(t for t in range(yields[a][0], yields[a][-1] + 1) if t not in ya)

        ancestors_a = set(state.ancestors(a))
        chain_b = state.ancestors(b)
        lca = next(v for v in chain_b if v in ancestors_a)

        c = b
        while True:
            father = state.parent[c]
            if father == lca or (father in discontinuous and father != lca):
                break
            c = father
        detach = state.parent[c]

        if detach == lca:
            distance = state.depth(a) - state.depth(lca)
            category = "ancestor"
        else:
            distance = None
            category = "discontinuous"
        state.move(c, a)
        if category == "ancestor" and distance == 1 and c > state.n:
            state.label[c] = state.label[c] + ANCESTOR_SUFFIX
        moves.append(
            MoveRecord(
                moved=c,
                from_parent=detach,
                to_parent=a,
                category=category,
                ancestor_distance=distance,
            )
        )
    raise ConversionError(
        f"discontinuity repair did not terminate within {guard} iterations"
    )


def is_lossless_move(move: MoveRecord, moved_is_terminal: bool = False) -> bool:
    return (
        move.category == "ancestor"
        and move.ancestor_distance == 1
        and not moved_is_terminal
    )


# ---------------------------------------------------------------------------
# Pass 3: labels onto nodes


def push_labels(tree_graph: UccaGraph) -> ConstituentTree:
    """Turn a projective remote-free graph into a constituent tree.

    Edge labels become node labels, the root is named "ROOT", children
    are ordered by leftmost terminal, and unary chains of nonterminals
    (other than the root itself) collapse into a "+"-joined label.
    """
    if tree_graph.remote_edges:
        raise ConversionError("push_labels expects a remote-free graph")
    for v in tree_graph.nonterminals:
        if tree_graph.is_discontinuous(v):
            raise ConversionError(f"push_labels expects a projective graph; node {v} is discontinuous")

    n = tree_graph.n
    labels = tree_graph.primary_label

    def build(v: int) -> TreeNode:
        if v <= n:
            label = labels[v]
            if label != "":
                raise ConversionError(
                    f"terminal {v} has a labeled edge ({label!r}); terminal edges must be unlabeled"
                )
            return TreeNode(leaf=v)
        parts = [labels[v]] if v != tree_graph.root else [ROOT_LABEL]
        node = v
        kids = tree_graph.primary_children[node]
        # Collapse chains below this node, but never into the root itself.
        while v != tree_graph.root and len(kids) == 1 and kids[0] > n:
            node = kids[0]
            parts.append(labels[node])
            kids = tree_graph.primary_children[node]
        for part in parts:
            if part != ROOT_LABEL and strip_suffixes(part) == "":
                raise ConversionError(f"nonterminal edge above node {node} has an empty label")
        ordered = sorted(kids, key=lambda c: tree_graph.yield_of(c)[0])
        return TreeNode(label="+".join(parts), children=tuple(build(c) for c in ordered))

    root = build(tree_graph.root)
    return ConstituentTree(tokens=tree_graph.tokens, root=root)


def graph_to_tree(graph: UccaGraph) -> ConversionResult:
    """Full forward conversion: graph -> constituent tree."""
    problems = graph.validate()
    if problems:
        raise ConversionError("invalid graph: " + "; ".join(problems))
    stripped, dropped = strip_remotes(graph)
    projective, moves = remove_discontinuities(stripped)
    tree = push_labels(projective)
    lossy = sum(
        0 if is_lossless_move(m, moved_is_terminal=m.moved <= graph.n) else 1
        for m in moves
    )
    return ConversionResult(tree=tree, dropped_remote_edges=dropped, lossy_moves=lossy)


# ---------------------------------------------------------------------------
# Tree -> graph


def tree_to_graph(tree: ConstituentTree) -> tuple[UccaGraph, tuple[int, ...]]:
    """Invert label pushing and undo recorded ``-ancestor1`` moves.

    Returns the primary graph together with the ids of nodes whose labels
    carried the ``-remote`` marker, i.e. the nodes for which incoming
    remote edges still need to be recovered.
    """
    problems = tree.validate()
    if problems:
        raise ConversionError("invalid tree: " + "; ".join(problems))

    n = tree.n
    parent: dict[int, int] = {}
    children: dict[int, list[int]] = {}
    labels: dict[int, str] = {}
    remote_marked: list[int] = []
    ancestor_marked: list[int] = []
    next_id = n + 1

    def expand(node: TreeNode, parent_id: int | None) -> int:
        nonlocal next_id
        if node.is_leaf:
            ident = node.leaf
            labels[ident] = ""
            if parent_id is not None:
                parent[ident] = parent_id
                children[parent_id].append(ident)
            return ident
        parts = (node.label or "").split("+")
        top_id: int | None = None
        for part in parts:
            base, remote, ancestor = split_label(part)
            if base != ROOT_LABEL and not base:
                raise ConversionError(f"empty label part in {node.label!r}")
            ident = next_id
            next_id += 1
            children[ident] = []
            labels[ident] = base
            if remote:
                remote_marked.append(ident)
            if ancestor:
                ancestor_marked.append(ident)
            if parent_id is not None:
                parent[ident] = parent_id
                children[parent_id].append(ident)
            if top_id is None:
                top_id = ident
            parent_id = ident
        for child in node.children:
            expand(child, parent_id)
        assert top_id is not None
        return top_id

    root_id = expand(tree.root, None)

    # Undo recorded moves top-down, left-to-right (ids were assigned in
    # preorder, so sorting gives exactly that order).
    for ident in sorted(ancestor_marked):
        origin = parent.get(ident)
        if origin is None or origin == root_id:
            raise ConversionError(
                f"-ancestor1 marker on a child of the root (node {ident}): no grandparent to return to"
            )
        if len(children[origin]) == 1:
            raise ConversionError(
                f"-ancestor1 marker on node {ident} cannot be undone: "
                f"its parent (node {origin}) would be left without children"
            )
        target = parent[origin]
        children[origin].remove(ident)
        children[target].append(ident)
        parent[ident] = target

    yields: dict[int, tuple[int, ...]] = {}

    def collect(v: int) -> tuple[int, ...]:
        if v <= n:
            return (v,)
        acc: list[int] = []
        for c in children[v]:
            acc.extend(collect(c))
        y = tuple(sorted(acc))
        yields[v] = y
        return y

    collect(root_id)

    edges: list[Edge] = []

    def emit(v: int) -> None:
        kids = sorted(children[v], key=lambda c: c if c <= n else yields[c][0])
        for c in kids:
            edges.append(Edge(v, c, labels[c]))
            if c > n:
                emit(c)

    emit(root_id)
    graph = UccaGraph(
        tokens=tree.tokens,
        root=root_id,
        nonterminals=frozenset(v for v in children if v > n),
        edges=tuple(edges),
    )
    return graph, tuple(remote_marked)


# ---------------------------------------------------------------------------
# Bracketed serialization

_TOKEN_ESCAPES = {
    "(": "-LRB-",
    ")": "-RRB-",
    " ": "-SP-",
    "\t": "-TAB-",
}
_TOKEN_UNESCAPES = {v: k for k, v in _TOKEN_ESCAPES.items()}


def escape_token(form: str) -> str:
    for raw, esc in _TOKEN_ESCAPES.items():
        form = form.replace(raw, esc)
    return form


def unescape_token(form: str) -> str:
    for esc, raw in _TOKEN_UNESCAPES.items():
        form = form.replace(esc, raw)
    return form


def tree_to_sexpr(tree: ConstituentTree) -> str:
    """Serialize a tree to a single-line bracketed expression."""

    def render(node: TreeNode) -> str:
        if node.is_leaf:
            return escape_token(tree.tokens[node.leaf - 1].form)
        label = node.label or ""
        if "(" in label or ")" in label or " " in label:
            raise ConversionError(f"label {label!r} contains reserved characters")
        inner = " ".join(render(c) for c in node.children)
        return f"({label} {inner})"

    return render(tree.root)


def tree_from_sexpr(line: str, lang: str = "") -> ConstituentTree:
    """Parse a bracketed expression produced by :func:`tree_to_sexpr`.

    Token features other than the form are not representable in this
    format and come back empty.
    """
    tokens: list[Token] = []
    pos = 0
    text = line.strip()

    def parse() -> TreeNode:
        nonlocal pos
        if pos >= len(text):
            raise ConversionError("unexpected end of bracketed expression")
        if text[pos] != "(":
            start = pos
            while pos < len(text) and text[pos] not in "() \t":
                pos += 1
            form = unescape_token(text[start:pos])
            tokens.append(Token(form=form, lang=lang))
            return TreeNode(leaf=len(tokens))
        pos += 1  # consume "("
        start = pos
        while pos < len(text) and text[pos] not in "() \t":
            pos += 1
        label = text[start:pos]
        if not label:
            raise ConversionError(f"missing label at position {start} in {text!r}")
        children: list[TreeNode] = []
        while True:
            while pos < len(text) and text[pos] in " \t":
                pos += 1
            if pos >= len(text):
                raise ConversionError("unbalanced brackets")
            if text[pos] == ")":
                pos += 1
                break
            children.append(parse())
        return TreeNode(label=label, children=tuple(children))

    root = parse()
    while pos < len(text) and text[pos] in " \t":
        pos += 1
    if pos != len(text):
        raise ConversionError(f"trailing content after tree: {text[pos:]!r}")
    tree = ConstituentTree(tokens=tuple(tokens), root=root)
    problems = tree.validate()
    if problems:
        raise ConversionError("invalid tree: " + "; ".join(problems))
    return tree
