"""Rooted-DAG compilation of normalized formulae.

Variables collapse to one ``VAR`` node per scope, identical subterms are
hash-consed into one node, and every argument edge carries a label built from
the parent's kind and the argument's rank under the parent's ordering.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ._trampoline import run
from .syntax import KINDS, ArityClass, FormulaAst, Kind, is_normalized

VAR_TOKEN = "VAR"
APPLY_TOKEN = "apply"
RANK_CAP = 16
NUM_RANKS = RANK_CAP + 1
NUM_EDGE_LABELS = len(KINDS) * NUM_RANKS
KIND_INDEX = {k: i for i, k in enumerate(KINDS)}


class CycleError(RuntimeError):
    pass


class Direction(str, Enum):
    UP = "Up"  # leaves -> root
    DOWN = "Down"  # root -> leaves


def edge_label(parent_kind: Kind, rank: int) -> int:
    return KIND_INDEX[parent_kind] * NUM_RANKS + min(rank, RANK_CAP)


def decode_label(label_id: int) -> tuple[Kind, int]:
    return KINDS[label_id // NUM_RANKS], label_id % NUM_RANKS


@dataclass(frozen=True)
class DagNode:
    token: str
    node_kind: Kind
    in_edges: tuple = ()
    out_edges: tuple = ()


@dataclass(frozen=True)
class DagEdge:
    src: int
    dst: int
    rank: int
    parent_kind: Kind

    @property
    def label_id(self) -> int:
        return edge_label(self.parent_kind, self.rank)


@dataclass(frozen=True)
class TopoSchedule:
    layers: tuple

    def rank_of(self) -> dict:
        return {v: t for t, layer in enumerate(self.layers) for v in layer}


@dataclass(frozen=True, eq=False)
class FormulaDag:
    nodes: tuple
    edges: tuple
    root: int
    up_schedule: TopoSchedule
    down_schedule: TopoSchedule
    scope_nodes: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.nodes)

    @property
    def tokens(self) -> list[str]:
        return [n.token for n in self.nodes]

    def schedule(self, direction: Direction) -> TopoSchedule:
        return self.up_schedule if Direction(direction) is Direction.UP else self.down_schedule

    def arrays(self):
        """Cached numpy views: (edge src, edge dst, edge label, node kind index)."""
        cached = self.__dict__.get("_arrays")
        if cached is None:
            cached = (
                np.array([e.src for e in self.edges], dtype=np.int64),
                np.array([e.dst for e in self.edges], dtype=np.int64),
                np.array([e.label_id for e in self.edges], dtype=np.int64),
                np.array([KIND_INDEX[n.node_kind] for n in self.nodes], dtype=np.int64),
            )
            object.__setattr__(self, "_arrays", cached)
        return cached

    def to_dict(self) -> dict:
        return {
            "root": self.root,
            "nodes": [
                {"id": i, "token": n.token, "kind": n.node_kind.value} for i, n in enumerate(self.nodes)
            ],
            "edges": [
                {
                    "id": i,
                    "src": e.src,
                    "dst": e.dst,
                    "rank": e.rank,
                    "parent_kind": e.parent_kind.value,
                    "label_id": e.label_id,
                }
                for i, e in enumerate(self.edges)
            ],
            "up_schedule": [list(layer) for layer in self.up_schedule.layers],
            "down_schedule": [list(layer) for layer in self.down_schedule.layers],
        }


def _edge_ranks(node: FormulaAst) -> list[int]:
    n = len(node.children)
    ac = node.arity_class
    if ac is ArityClass.UNORDERED:
        return [0] * n
    if ac is ArityClass.QUANTIFIER_HYBRID:
        return [0] * (n - 1) + [1]
    return list(range(n))


def _token(node: FormulaAst) -> str:
    if node.kind is Kind.VARIABLE:
        return VAR_TOKEN
    if node.kind is Kind.APPLY:
        return APPLY_TOKEN
    return node.symbol


class _Builder:
    def __init__(self):
        self.table: dict = {}
        self.nodes: list = []  # (token, kind, [(child, rank)])
        self.scope_nodes: dict = {}

    def _intern(self, key, token, kind, out):
        idx = self.table.get(key)
        if idx is None:
            idx = len(self.nodes)
            self.table[key] = idx
            self.nodes.append((token, kind, out))
        return idx

    def visit(self, node: FormulaAst):
        if node.kind is Kind.VARIABLE:
            idx = self._intern(("var", node.scope), VAR_TOKEN, Kind.VARIABLE, [])
            self.scope_nodes[node.scope] = idx
            return idx
        ids = []
        for c in node.children:
            ids.append((yield self.visit(c)))
        out = list(zip(ids, _edge_ranks(node)))
        key = (node.kind, _token(node), tuple(out))
        return self._intern(key, _token(node), node.kind, out)


def build_dag(ast: FormulaAst) -> FormulaDag:
    """Compile an alpha-normalized AST into a FormulaDag."""
    if not is_normalized(ast):
        raise ValueError("build_dag expects an alpha-normalized AST")
    b = _Builder()
    root = run(b.visit(ast))
    return _assemble(b.nodes, root, b.scope_nodes)


def _assemble(raw_nodes, root, scope_nodes=None) -> FormulaDag:
    edges = []
    outs = [[] for _ in raw_nodes]
    ins = [[] for _ in raw_nodes]
    for src, (_, kind, out) in enumerate(raw_nodes):
        for dst, rank in out:
            outs[src].append(len(edges))
            ins[dst].append(len(edges))
            edges.append(DagEdge(src, dst, rank, kind))
    nodes = tuple(
        DagNode(tok, kind, tuple(ins[i]), tuple(outs[i])) for i, (tok, kind, _) in enumerate(raw_nodes)
    )
    sources = [i for i, n in enumerate(nodes) if not n.in_edges]
    if sources != [root]:
        raise CycleError(f"expected the root {root} as the only source, found {sources}")
    partial = FormulaDag(nodes, tuple(edges), root, TopoSchedule(()), TopoSchedule(()), dict(scope_nodes or {}))
    up = topo_ranks(partial, Direction.UP)
    down = topo_ranks(partial, Direction.DOWN)
    return FormulaDag(nodes, tuple(edges), root, up, down, dict(scope_nodes or {}))


def from_dict(data: dict) -> FormulaDag:
    """Inverse of :meth:`FormulaDag.to_dict` (schedules are recomputed)."""
    raw = [[n["token"], Kind(n["kind"]), []] for n in data["nodes"]]
    for e in data["edges"]:
        if raw[e["src"]][1] is not Kind(e["parent_kind"]):
            raise ValueError(f"edge {e['id']}: parent_kind does not match its source node")
        raw[e["src"]][2].append((e["dst"], e["rank"]))
    return _assemble(raw, data["root"])


def topo_ranks(dag: FormulaDag, direction: Direction) -> TopoSchedule:
    """Longest-path layering; layer 0 holds the sources in ``direction``."""
    n = len(dag.nodes)
    up = Direction(direction) is Direction.UP
    # preds[v]: nodes whose rank must be known before v's
    if up:
        preds = [[dag.edges[e].dst for e in node.out_edges] for node in dag.nodes]
        succs = [[dag.edges[e].src for e in node.in_edges] for node in dag.nodes]
    else:
        preds = [[dag.edges[e].src for e in node.in_edges] for node in dag.nodes]
        succs = [[dag.edges[e].dst for e in node.out_edges] for node in dag.nodes]
    waiting = [len(p) for p in preds]
    rank = [0] * n
    ready = [v for v in range(n) if waiting[v] == 0]
    seen = 0
    while ready:
        v = ready.pop()
        seen += 1
        for w in succs[v]:
            rank[w] = max(rank[w], rank[v] + 1)
            waiting[w] -= 1
            if waiting[w] == 0:
                ready.append(w)
    if seen != n:
        raise CycleError("edge relation contains a cycle")
    layers = [[] for _ in range(max(rank) + 1)] if n else []
    for v in range(n):
        layers[rank[v]].append(v)
    return TopoSchedule(tuple(tuple(layer) for layer in layers))


def neighborhoods(dag: FormulaDag, node: int) -> tuple[frozenset, frozenset]:
    """(immediate ancestors, immediate children) of ``node``."""
    n = dag.nodes[node]
    return (
        frozenset(dag.edges[e].src for e in n.in_edges),
        frozenset(dag.edges[e].dst for e in n.out_edges),
    )


def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def to_dot(dag: FormulaDag) -> str:
    lines = ["digraph formula {"]
    for i, n in enumerate(dag.nodes):
        shape = ', shape="doublecircle"' if i == dag.root else ""
        lines.append(f'  n{i} [label="{_dot_escape(n.token)}"{shape}];')
    for e in dag.edges:
        lines.append(f'  n{e.src} -> n{e.dst} [label="{e.parent_kind.value}:{e.rank}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def to_json(dag: FormulaDag) -> str:
    return json.dumps(dag.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"
