"""Graph embedding networks over batches of formula DAGs.

Stage one is an initial node embedder (MPNN, GCN, DagLSTM, BidirDagLSTM);
stage two pools node states into one vector per graph (MaxPool, DagPool,
AttDagPool).  A minibatch of graphs is processed as one disjoint union: edge
sets, schedules and segment ids are concatenated, so every layer runs once per
batch instead of once per graph.

Row-vector convention: a linear map is ``x @ W`` with ``W`` of shape
``(in, out)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from enum import Enum

import numpy as np

from . import tensor as T
from .dag import NUM_EDGE_LABELS, Direction, FormulaDag
from .syntax import KINDS
from .tensor import Tensor

GATES = ("i", "o", "f", "c")
_I, _O, _F, _C = range(4)


class ConfigError(ValueError):
    pass


class NodeEmbedder(str, Enum):
    MPNN = "MPNN"
    GCN = "GCN"
    DAG_LSTM = "DagLSTM"
    BIDIR_DAG_LSTM = "BidirDagLSTM"


class Pooling(str, Enum):
    MAX_POOL = "MaxPool"
    DAG_POOL = "DagPool"
    ATT_DAG_POOL = "AttDagPool"


# the ten (embedder, pooling) rows of the ablation grid
ABLATION_ROWS = (
    (NodeEmbedder.MPNN, Pooling.MAX_POOL),
    (NodeEmbedder.MPNN, Pooling.DAG_POOL),
    (NodeEmbedder.MPNN, Pooling.ATT_DAG_POOL),
    (NodeEmbedder.GCN, Pooling.MAX_POOL),
    (NodeEmbedder.GCN, Pooling.DAG_POOL),
    (NodeEmbedder.GCN, Pooling.ATT_DAG_POOL),
    (NodeEmbedder.DAG_LSTM, Pooling.DAG_POOL),
    (NodeEmbedder.DAG_LSTM, Pooling.ATT_DAG_POOL),
    (NodeEmbedder.BIDIR_DAG_LSTM, Pooling.DAG_POOL),
    (NodeEmbedder.BIDIR_DAG_LSTM, Pooling.ATT_DAG_POOL),
)


@dataclass(frozen=True)
class ModelConfig:
    node_dim: int = 256
    edge_dim: int = 64
    node_embedder: NodeEmbedder = NodeEmbedder.BIDIR_DAG_LSTM
    pooling: Pooling = Pooling.ATT_DAG_POOL
    rounds_k: int = 2
    attention_heads: int = 2
    attention_inner_dim: int | None = None

    def __post_init__(self):
        try:
            object.__setattr__(self, "node_embedder", NodeEmbedder(self.node_embedder))
            object.__setattr__(self, "pooling", Pooling(self.pooling))
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if self.attention_inner_dim is None:
            object.__setattr__(self, "attention_inner_dim", 2 * self.node_dim)
        for name in ("node_dim", "edge_dim", "attention_heads", "attention_inner_dim", "rounds_k"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")

    @classmethod
    def holstep(cls, **kw):
        return cls(**{"node_dim": 256, "edge_dim": 64, **kw})

    @classmethod
    def mizar(cls, **kw):
        return cls(**{"node_dim": 128, "edge_dim": 32, **kw})

    @property
    def uses_rounds(self) -> bool:
        return self.node_embedder in (NodeEmbedder.MPNN, NodeEmbedder.GCN)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["node_embedder"] = self.node_embedder.value
        d["pooling"] = self.pooling.value
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)


class ParameterStore:
    """Named learned arrays plus non-learned buffers (batch-norm statistics).

    ``store[name]`` returns a cached :class:`Tensor` leaf that shares memory
    with the array, so in-place optimizer updates are seen by later passes.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.params: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.training = False
        self.update_stats = True
        self._leaves: dict[str, Tensor] = {}

    def add(self, name, array):
        if name in self.params or name in self.buffers:
            raise KeyError(f"duplicate parameter name {name!r}")
        self.params[name] = np.ascontiguousarray(array, dtype=self.dtype)

    def add_buffer(self, name, array):
        if name in self.params or name in self.buffers:
            raise KeyError(f"duplicate parameter name {name!r}")
        self.buffers[name] = np.ascontiguousarray(array, dtype=self.dtype)

    def __getitem__(self, name) -> Tensor:
        leaf = self._leaves.get(name)
        if leaf is None or leaf.data is not self.params[name]:
            leaf = Tensor(self.params[name], requires_grad=True)
            self._leaves[name] = leaf
        return leaf

    def __contains__(self, name):
        return name in self.params

    def names(self) -> list[str]:
        return sorted(self.params)

    def zero_grad(self):
        for leaf in self._leaves.values():
            leaf.grad = None

    def grad(self, name):
        leaf = self._leaves.get(name)
        if leaf is None or leaf.grad is None:
            return np.zeros_like(self.params[name])
        return leaf.grad

    def num_parameters(self) -> int:
        return int(sum(a.size for a in self.params.values()))

    def astype(self, dtype) -> "ParameterStore":
        out = ParameterStore(dtype)
        for k in sorted(self.params):
            out.add(k, self.params[k])
        for k in sorted(self.buffers):
            out.add_buffer(k, self.buffers[k])
        return out

    def copy(self) -> "ParameterStore":
        return self.astype(self.dtype)

    def records(self):
        """All arrays (parameters and buffers) sorted by name."""
        merged = {**self.params, **self.buffers}
        return [(k, merged[k]) for k in sorted(merged)]


# ---------------------------------------------------------------------------
# initialization


def _uniform(rng, fan_in, shape):
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _add_linear(store, rng, name, din, dout, bias=True):
    store.add(f"{name}.W", _uniform(rng, din, (din, dout)))
    if bias:
        store.add(f"{name}.b", np.zeros(dout))


def _add_bn(store, name, dim):
    store.add(f"{name}.gamma", np.ones(dim))
    store.add(f"{name}.beta", np.zeros(dim))
    store.add_buffer(f"{name}.running_mean", np.zeros(dim))
    store.add_buffer(f"{name}.running_var", np.ones(dim))


def _add_ffn(store, rng, name, din, dhidden, dout, hidden_bn=True):
    _add_linear(store, rng, f"{name}.lin1", din, dhidden)
    if hidden_bn:
        _add_bn(store, f"{name}.bn1", dhidden)
    _add_linear(store, rng, f"{name}.lin2", dhidden, dout)


def _add_lstm(store, rng, name, din, d):
    # gate blocks along the last axis, in GATES order
    store.add(f"{name}.W", _uniform(rng, din, (din, 4 * d)))
    store.add(f"{name}.U", _uniform(rng, d, (NUM_EDGE_LABELS, d, 4 * d)))
    store.add(f"{name}.b", np.zeros((4, d)))
    for site in ("ln_W", "ln_U"):
        store.add(f"{name}.{site}.gamma", np.ones((4, d)))
        store.add(f"{name}.{site}.beta", np.zeros((4, d)))


def init_params(config: ModelConfig, vocab_size: int, seed=0, dtype=np.float32) -> ParameterStore:
    """Fresh parameters for ``config``; weights U(+-1/sqrt(fan_in)), biases 0."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    d, e = config.node_dim, config.edge_dim
    s = ParameterStore(dtype)
    s.add("embed.token", rng.normal(0.0, 0.05, size=(vocab_size, d)))
    s.add("embed.edge", rng.normal(0.0, 0.05, size=(NUM_EDGE_LABELS, e)))
    _add_bn(s, "F_V.bn", d)
    _add_bn(s, "F_E.bn", e)
    emb = config.node_embedder
    if emb is NodeEmbedder.MPNN:
        for t in range(1, config.rounds_k + 1):
            _add_ffn(s, rng, f"mpnn.{t}.F_MA", 2 * d + e, d, d)
            _add_ffn(s, rng, f"mpnn.{t}.F_MC", 2 * d + e, d, d)
            _add_ffn(s, rng, f"mpnn.{t}.F_A", 3 * d, d, d)
    elif emb is NodeEmbedder.GCN:
        for t in range(1, config.rounds_k + 1):
            _add_linear(s, rng, f"gcn.{t}", d, d, bias=False)
    elif emb is NodeEmbedder.DAG_LSTM:
        _add_lstm(s, rng, "embed_lstm", d, d)
    else:
        _add_lstm(s, rng, "embed_lstm_up", d, d)
        _add_lstm(s, rng, "embed_lstm_down", d, d)
        _add_ffn(s, rng, "F_BD", 2 * d, d, d)
    pool_in = d
    if config.pooling is Pooling.ATT_DAG_POOL:
        hb = config.attention_heads * config.attention_inner_dim
        for m in ("W_q", "W_k", "W_v"):
            s.add(f"att.{m}", _uniform(rng, d, (d, hb)))
        s.add("att.W_o", _uniform(rng, hb, (hb, d)))
        s.add("att.W_g", _uniform(rng, d, (d, d)))
        s.add("att.r", rng.normal(0.0, 0.05, size=(len(KINDS), d)))
        pool_in = 2 * d
    if config.pooling is not Pooling.MAX_POOL:
        _add_lstm(s, rng, "pool_lstm", pool_in, d)
    _add_ffn(s, rng, "F_CL", 2 * d, d, 1, hidden_bn=False)
    return s


# ---------------------------------------------------------------------------
# batches


class GraphBatch:
    """Disjoint union of formula DAGs with global node numbering.

    ``partner[g]`` is the graph whose nodes graph ``g`` attends to, or -1.
    """

    def __init__(self, dags: list[FormulaDag], token_ids: list, partner=None):
        self.dags = list(dags)
        self.num_graphs = len(self.dags)
        sizes = [len(g) for g in self.dags]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self.num_nodes = int(self.offsets[-1])
        self.graph_of_node = np.repeat(np.arange(self.num_graphs), sizes)
        self.roots = np.array([g.root + o for g, o in zip(self.dags, self.offsets)], dtype=np.int64)
        self.token_ids = (
            np.concatenate([np.asarray(t, dtype=np.int64) for t in token_ids])
            if token_ids
            else np.zeros(0, np.int64)
        )
        src, dst, lab, kind = [], [], [], []
        for g, o in zip(self.dags, self.offsets):
            s_, d_, l_, k_ = g.arrays()
            src.append(s_ + o)
            dst.append(d_ + o)
            lab.append(l_)
            kind.append(k_)
        cat = lambda xs: np.concatenate(xs) if xs else np.zeros(0, np.int64)  # noqa: E731
        self.edge_src, self.edge_dst, self.edge_label, self.kinds = cat(src), cat(dst), cat(lab), cat(kind)
        self.num_edges = len(self.edge_src)
        self.partner = np.full(self.num_graphs, -1) if partner is None else np.asarray(partner)
        self._plans: dict = {}
        self._gcn = None
        self._matches = None

    @classmethod
    def from_pairs(cls, pairs, vocab):
        """Premise graphs first, then conjecture graphs; pair ``i`` is ``(i, B+i)``."""
        b = len(pairs)
        dags = [p for p, _ in pairs] + [c for _, c in pairs]
        partner = list(range(b, 2 * b)) + list(range(b))
        return cls(dags, [vocab.encode(g.tokens) for g in dags], partner)

    @classmethod
    def from_dags(cls, dags, vocab):
        return cls(dags, [vocab.encode(g.tokens) for g in dags])

    def layers(self, direction: Direction):
        """Merged topological layers; layer t holds every graph's layer t."""
        direction = Direction(direction)
        out: list[list] = []
        for g, o in zip(self.dags, self.offsets):
            for t, layer in enumerate(g.schedule(direction).layers):
                if t == len(out):
                    out.append([])
                out[t].append(np.asarray(layer, dtype=np.int64) + o)
        return [np.concatenate(x) for x in out]

    def sequential_layers(self, direction: Direction):
        """One node per layer, in a valid topological order."""
        return [np.array([v]) for layer in self.layers(direction) for v in layer]

    def lstm_plan(self, direction: Direction, layers=None):
        key = Direction(direction)
        if layers is None and key in self._plans:
            return self._plans[key]
        plan = _LstmPlan(self, key, self.layers(key) if layers is None else layers)
        if layers is None:
            self._plans[key] = plan
        return plan

    def gcn_structure(self):
        """Distinct undirected neighbour pairs (both orientations) and degrees."""
        if self._gcn is None:
            pairs = set()
            for s, d in zip(self.edge_src.tolist(), self.edge_dst.tolist()):
                pairs.add((s, d))
                pairs.add((d, s))
            pairs = sorted(pairs, key=lambda p: (p[1], p[0]))
            nbr_src = np.array([p[0] for p in pairs], dtype=np.int64)
            nbr_dst = np.array([p[1] for p in pairs], dtype=np.int64)
            deg = np.bincount(nbr_dst, minlength=self.num_nodes).astype(np.float64)
            deg = np.maximum(deg, 1.0)
            coef = 1.0 / np.sqrt(deg[nbr_dst] * deg[nbr_src])
            self._gcn = (nbr_src, nbr_dst, deg, coef)
        return self._gcn

    def matches(self):
        """Cross-graph pairs (u, v) with identical node tokens, sorted by (u, v)."""
        if self._matches is None:
            mu, mv = [], []
            for g in range(self.num_graphs):
                p = int(self.partner[g])
                if p < 0:
                    continue
                by_token: dict = {}
                for j, tok in enumerate(self.dags[p].tokens):
                    by_token.setdefault(tok, []).append(j + int(self.offsets[p]))
                for j, tok in enumerate(self.dags[g].tokens):
                    for v in by_token.get(tok, ()):
                        mu.append(j + int(self.offsets[g]))
                        mv.append(v)
            order = sorted(range(len(mu)), key=lambda k: (mu[k], mv[k]))
            self._matches = (
                np.array([mu[k] for k in order], dtype=np.int64),
                np.array([mv[k] for k in order], dtype=np.int64),
            )
        return self._matches


class _LstmPlan:
    """Per-layer gather indices for one DAG LSTM direction.

    For layer t: ``nodes[t]`` (global ids), and for the predecessor edges of
    those nodes: ``pos[t]`` (row of the predecessor in the concatenation of
    earlier layer outputs), ``labels[t]`` and ``seg[t]`` (row of the receiving
    node within layer t).
    """

    def __init__(self, batch: GraphBatch, direction: Direction, layers):
        up = direction is Direction.UP
        n = batch.num_nodes
        by_node = [[] for _ in range(n)]
        if up:  # predecessors are children: edges leaving the node
            for k in range(batch.num_edges):
                by_node[batch.edge_src[k]].append((batch.edge_dst[k], batch.edge_label[k]))
        else:
            for k in range(batch.num_edges):
                by_node[batch.edge_dst[k]].append((batch.edge_src[k], batch.edge_label[k]))
        row = np.full(n, -1, dtype=np.int64)
        self.nodes, self.pos, self.labels, self.seg = [], [], [], []
        done = 0
        for layer in layers:
            layer = np.asarray(layer, dtype=np.int64)
            pos, lab, seg = [], [], []
            for r, v in enumerate(layer.tolist()):
                for w, label in by_node[v]:
                    if row[w] < 0:
                        raise ValueError(f"schedule places node {v} before its predecessor {w}")
                    pos.append(row[w])
                    lab.append(label)
                    seg.append(r)
            row[layer] = np.arange(done, done + len(layer))
            done += len(layer)
            self.nodes.append(layer)
            self.pos.append(np.array(pos, dtype=np.int64))
            self.labels.append(np.array(lab, dtype=np.int64))
            self.seg.append(np.array(seg, dtype=np.int64))
        if done != n or (row < 0).any():
            raise ValueError("schedule does not cover every node exactly once")
        self.row = row


# ---------------------------------------------------------------------------
# building blocks


def _bn(x, params: ParameterStore, name):
    return T.batch_norm(
        x,
        params[f"{name}.gamma"],
        params[f"{name}.beta"],
        params.buffers[f"{name}.running_mean"],
        params.buffers[f"{name}.running_var"],
        training=params.training,
        update_stats=params.update_stats,
    )


def _linear(x, params, name):
    y = x @ params[f"{name}.W"]
    b = f"{name}.b"
    return y + params[b] if b in params else y


def ffn(x: Tensor, params: ParameterStore, name: str, final: str = "relu") -> Tensor:
    """One hidden layer (+ batch norm when present) and a final activation."""
    z = _linear(x, params, f"{name}.lin1")
    if f"{name}.bn1.gamma" in params:
        z = _bn(z, params, f"{name}.bn1")
    z = T.relu(z)
    y = _linear(z, params, f"{name}.lin2")
    if final == "relu":
        return T.relu(y)
    if final == "sigmoid":
        return T.sigmoid(y)
    return y


def init_states(batch: GraphBatch, params: ParameterStore, with_edges: bool = True):
    """h_v = ReLU(BN(x_v)) per node and h_e = ReLU(BN(x_e)) per edge."""
    xv = T.embedding(params["embed.token"], batch.token_ids)
    hv = T.relu(_bn(xv, params, "F_V.bn"))
    if not with_edges:
        return hv, None
    xe = T.embedding(params["embed.edge"], batch.edge_label)
    he = T.relu(_bn(xe, params, "F_E.bn"))
    return hv, he


def mpnn_round(batch: GraphBatch, h: Tensor, he: Tensor, t: int, params: ParameterStore) -> Tensor:
    """One residual round with ancestor and child messages summed per edge."""
    src, dst = batch.edge_src, batch.edge_dst
    h_src = T.take_rows(h, src)
    h_dst = T.take_rows(h, dst)
    # each edge (parent=src, child=dst) carries one message in each direction
    m_anc = ffn(T.concat([h_dst, h_src, he], axis=1), params, f"mpnn.{t}.F_MA")
    m_chi = ffn(T.concat([h_src, h_dst, he], axis=1), params, f"mpnn.{t}.F_MC")
    mp = T.segment_sum(m_anc, dst, batch.num_nodes)
    mc = T.segment_sum(m_chi, src, batch.num_nodes)
    return h + ffn(T.concat([h, mp, mc], axis=1), params, f"mpnn.{t}.F_A")


def gcn_round(batch: GraphBatch, h: Tensor, t: int, params: ParameterStore) -> Tensor:
    nbr_src, nbr_dst, deg, coef = batch.gcn_structure()
    dt = h.dtype
    self_term = h * (1.0 / deg).astype(dt)[:, None]
    nbr = T.segment_sum(T.take_rows(h, nbr_src) * coef.astype(dt)[:, None], nbr_dst, batch.num_nodes)
    return T.relu((self_term + nbr) @ params[f"gcn.{t}.W"])


def dag_lstm_forward(
    batch: GraphBatch,
    s: Tensor,
    direction: Direction,
    params: ParameterStore,
    prefix: str,
    layers=None,
) -> Tensor:
    """N-ary DAG LSTM evaluated layer by layer along a topological schedule.

    Every matrix product (input and per-edge recurrent) is layer-normalized
    with its own scale/shift.  ``layers`` overrides the batch schedule; pass
    ``batch.sequential_layers(direction)`` for node-at-a-time evaluation.
    Returns the hidden state of every node in global node order.
    """
    plan = batch.lstm_plan(direction, layers)
    d = params.params[f"{prefix}.b"].shape[1]
    n = batch.num_nodes
    ws = T.reshape(s @ params[f"{prefix}.W"], (n, 4, d))
    ws = T.layer_norm(ws, params[f"{prefix}.ln_W.gamma"], params[f"{prefix}.ln_W.beta"])
    ws = ws + params[f"{prefix}.b"]
    U = params[f"{prefix}.U"]
    ln_g, ln_b = params[f"{prefix}.ln_U.gamma"], params[f"{prefix}.ln_U.beta"]
    hs, cs = [], []
    for nodes, pos, labels, seg in zip(plan.nodes, plan.pos, plan.labels, plan.seg):
        m = len(nodes)
        pre = T.take_rows(ws, nodes)
        if len(pos):
            hp = T.take_rows(hs, pos)
            cp = T.take_rows(cs, pos)
            uh = T.reshape(T.label_matvec(hp, U, labels), (len(pos), 4, d))
            uh = T.layer_norm(uh, ln_g, ln_b)
            pre_node = pre + T.segment_sum(uh, seg, m)
            f = T.sigmoid(T.take_rows(pre[:, _F], seg) + uh[:, _F])
            fc = T.segment_sum(f * cp, seg, m)
        else:
            pre_node, fc = pre, None
        io = T.sigmoid(pre_node[:, :2])
        c = io[:, _I] * T.tanh(pre_node[:, _C])
        if fc is not None:
            c = c + fc
        h = io[:, _O] * T.tanh(c)
        hs.append(h)
        cs.append(c)
    return T.take_rows(hs, plan.row)


def bidir_dag_lstm(batch: GraphBatch, s: Tensor, params: ParameterStore) -> Tensor:
    up = dag_lstm_forward(batch, s, Direction.UP, params, "embed_lstm_up")
    down = dag_lstm_forward(batch, s, Direction.DOWN, params, "embed_lstm_down")
    return ffn(T.concat([up, down], axis=1), params, "F_BD")


def attention_exchange(
    batch: GraphBatch,
    s: Tensor,
    params: ParameterStore,
    heads: int,
    return_weights: bool = False,
    gate_override=None,
):
    """Gated multi-head attention between identically labeled nodes.

    Each node attends to the nodes of its partner graph with the same token;
    the result ``s || s'`` has twice the input width.  Nodes without a match
    get ``s' = 0``.  ``gate_override`` replaces the per-kind gate table.
    """
    mu, mv = batch.matches()
    n = batch.num_nodes
    width = params.params["att.W_q"].shape[1]
    b = width // heads
    q = T.reshape(s @ params["att.W_q"], (n, heads, b))
    k = T.reshape(s @ params["att.W_k"], (n, heads, b))
    v = T.reshape(s @ params["att.W_v"], (n, heads, b))
    scores = T.sum(T.take_rows(q, mu) * T.take_rows(k, mv), axis=2) / math.sqrt(b)
    alpha = T.segment_softmax(scores, mu, n)
    mixed = T.segment_sum(T.reshape(alpha, (len(mu), heads, 1)) * T.take_rows(v, mv), mu, n)
    proj = T.reshape(mixed, (n, width)) @ params["att.W_o"]
    if gate_override is None:
        gate_table = T.sigmoid(params["att.r"] @ params["att.W_g"])
    else:
        gate_table = T.as_tensor(gate_override, s)
    s_prime = T.take_rows(gate_table, batch.kinds) * proj
    out = T.concat([s, s_prime], axis=1)
    return (out, alpha, s_prime) if return_weights else out


def node_embed(batch: GraphBatch, params: ParameterStore, config: ModelConfig) -> Tensor:
    emb = config.node_embedder
    h, he = init_states(batch, params, with_edges=emb is NodeEmbedder.MPNN)
    if emb is NodeEmbedder.MPNN:
        for t in range(1, config.rounds_k + 1):
            h = mpnn_round(batch, h, he, t, params)
        return h
    if emb is NodeEmbedder.GCN:
        for t in range(1, config.rounds_k + 1):
            h = gcn_round(batch, h, t, params)
        return h
    if emb is NodeEmbedder.DAG_LSTM:
        return dag_lstm_forward(batch, h, Direction.UP, params, "embed_lstm")
    return bidir_dag_lstm(batch, h, params)


def pool(batch: GraphBatch, s: Tensor, params: ParameterStore, mode: Pooling) -> Tensor:
    """One embedding per graph: root DAG-LSTM state, or columnwise max."""
    if Pooling(mode) is Pooling.MAX_POOL:
        return T.segment_max(s, batch.graph_of_node, batch.num_graphs)
    h = dag_lstm_forward(batch, s, Direction.UP, params, "pool_lstm")
    return T.take_rows(h, batch.roots)


def classify_pair(s_p: Tensor, s_c: Tensor, params: ParameterStore) -> Tensor:
    """Probability per row from ``F_CL([s_P || s_C])``."""
    out = ffn(T.concat([s_p, s_c], axis=1), params, "F_CL", final="sigmoid")
    return T.reshape(out, (out.shape[0],))


def graph_embeddings(batch: GraphBatch, params: ParameterStore, config: ModelConfig) -> Tensor:
    """Per-graph embeddings for the pooling modes without cross-graph attention."""
    if config.pooling is Pooling.ATT_DAG_POOL:
        raise ConfigError("AttDagPool embeds graphs in pairs; use forward_pairs")
    return pool(batch, node_embed(batch, params, config), params, config.pooling)


def forward_pairs(batch: GraphBatch, params: ParameterStore, config: ModelConfig) -> Tensor:
    """Probabilities for a batch built by :meth:`GraphBatch.from_pairs`."""
    b = batch.num_graphs // 2
    s = node_embed(batch, params, config)
    if config.pooling is Pooling.ATT_DAG_POOL:
        if (batch.partner < 0).any():
            raise ConfigError("AttDagPool requires two input graphs per example")
        s = attention_exchange(batch, s, params, config.attention_heads)
    g = pool(batch, s, params, config.pooling)
    return classify_pair(T.take_rows(g, np.arange(b)), T.take_rows(g, np.arange(b, 2 * b)), params)


def embed_pair(premise: FormulaDag, conjecture: FormulaDag, config: ModelConfig, params: ParameterStore, vocab):
    """Probability for a single (premise, conjecture) pair."""
    batch = GraphBatch.from_pairs([(premise, conjecture)], vocab)
    return float(forward_pairs(batch, params, config).data[0])
