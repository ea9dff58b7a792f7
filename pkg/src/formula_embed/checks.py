"""Independent oracles and property checks shared by the self-check and tests.

The oracles here deliberately avoid the batched code paths: the tree LSTM is
a per-node recursion, the GCN reference builds a dense adjacency matrix, the
MPNN reference loops over nodes, and subterm counting enumerates strings.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import nets
from . import tensor as T
from .dag import FormulaDag, build_dag
from .nets import GraphBatch, ModelConfig, NodeEmbedder, Pooling
from .syntax import UNORDERED_SYMBOLS, FormulaAst, Kind, alpha_normalize, parse_sexpr

# ---------------------------------------------------------------------------
# random formulas as nested lists, printed to s-expression text

_CONSTS = ["a", "b", "c", "d"]
_FUNCS = {"f": 1, "g": 2, "h": 1}
_PREDS = {"p": 1, "q": 2, "r": 0, "s": 1}
_BINDER_NAMES = ["X", "Y", "Z", "W", "V"]


def to_text(t) -> str:
    if isinstance(t, str):
        return t
    return "(" + " ".join(to_text(c) for c in t) + ")"


def _rand_term(rng, depth, bound):
    if depth <= 0 or rng.random() < 0.5:
        if bound and rng.random() < 0.6:
            return bound[int(rng.integers(len(bound)))]
        return _CONSTS[int(rng.integers(len(_CONSTS)))]
    name = list(_FUNCS)[int(rng.integers(len(_FUNCS)))]
    return [name] + [_rand_term(rng, depth - 1, bound) for _ in range(_FUNCS[name])]


def _rand_formula(rng, depth, bound, counter):
    r = rng.random()
    if depth <= 0 or r < 0.3:
        if rng.random() < 0.2:
            return ["=", _rand_term(rng, 1, bound), _rand_term(rng, 1, bound)]
        name = list(_PREDS)[int(rng.integers(len(_PREDS)))]
        if _PREDS[name] == 0:
            return name
        return [name] + [_rand_term(rng, 1, bound) for _ in range(_PREDS[name])]
    if r < 0.4:
        return ["not", _rand_formula(rng, depth - 1, bound, counter)]
    if r < 0.75:
        op = ["and", "or", "iff", "implies"][int(rng.integers(4))]
        n = 2 if op in ("iff", "implies") else int(rng.integers(2, 4))
        return [op] + [_rand_formula(rng, depth - 1, bound, counter) for _ in range(n)]
    q = "forall" if rng.random() < 0.5 else "exists"
    nv = int(rng.integers(1, 3))
    names = []
    for _ in range(nv):
        counter[0] += 1
        names.append(f"{_BINDER_NAMES[counter[0] % len(_BINDER_NAMES)]}{counter[0]}")
    return [q, names, _rand_formula(rng, depth - 1, bound + names, counter)]


def random_formula(rng, max_depth: int = 4):
    """A random closed formula as a nested list."""
    return _rand_formula(rng, max_depth, [], [0])


def compile_tree(t) -> FormulaDag:
    return build_dag(alpha_normalize(parse_sexpr(to_text(t))))


def random_small_formula(rng, max_nodes: int, max_depth: int = 3, min_nodes: int = 3):
    """Rejection-sample a formula whose DAG has ``min_nodes..max_nodes`` nodes."""
    while True:
        t = random_formula(rng, max_depth)
        g = compile_tree(t)
        if min_nodes <= len(g) <= max_nodes:
            return t, g


def permute_unordered(t, rng):
    """Shuffle the arguments of every unordered connective, recursively."""
    if isinstance(t, str):
        return t
    head = t[0]
    if head in ("forall", "exists"):
        return [head, list(t[1]), permute_unordered(t[2], rng)]
    args = [permute_unordered(c, rng) for c in t[1:]]
    if head in UNORDERED_SYMBOLS:
        args = [args[i] for i in rng.permutation(len(args))]
    return [head] + args


def rename_bound(t, rng, env=None):
    """Consistently rename bound variables to fresh names."""
    env = env or {}
    if isinstance(t, str):
        return env.get(t, t)
    if t[0] in ("forall", "exists"):
        inner = dict(env)
        names = []
        for v in t[1]:
            fresh = f"R{int(rng.integers(10**6))}_{v}"
            inner[v] = fresh
            names.append(fresh)
        return [t[0], names, rename_bound(t[2], rng, inner)]
    return [t[0]] + [rename_bound(c, rng, env) for c in t[1:]]


def random_tree_formula(rng, max_depth: int = 4):
    """Quantifier-free formula with pairwise-distinct leaves, hence no sharing."""
    fresh = iter(range(10**6))

    def term(d):
        if d <= 0 or rng.random() < 0.5:
            return f"k{next(fresh)}"
        ar = int(rng.integers(1, 3))
        return [f"fn{next(fresh)}"] + [term(d - 1) for _ in range(ar)]

    def form(d):
        r = rng.random()
        if d <= 0 or r < 0.3:
            ar = int(rng.integers(0, 3))
            name = f"pr{next(fresh)}"
            return name if ar == 0 else [name] + [term(2) for _ in range(ar)]
        if r < 0.45:
            return ["not", form(d - 1)]
        op = ["and", "or", "implies"][int(rng.integers(3))]
        n = 2 if op == "implies" else int(rng.integers(2, 4))
        return [op] + [form(d - 1) for _ in range(n)]

    return form(max_depth)


# ---------------------------------------------------------------------------
# subterm enumeration


def distinct_subterms(ast: FormulaAst) -> int:
    """Count distinct subterms of a normalized AST by string enumeration.

    Bound variables are identified by their scope; arguments of unordered
    parents are compared as multisets.
    """
    seen = set()

    def key(node):
        if node.kind is Kind.VARIABLE:
            k = f"VAR#{node.scope}"
        else:
            parts = [key(c) for c in node.children]
            if node.symbol in UNORDERED_SYMBOLS and node.kind is not Kind.QUANTIFIER:
                parts.sort()
            if node.kind is Kind.QUANTIFIER:
                parts = sorted(parts[:-1]) + ["|"] + parts[-1:]
            k = f"{node.kind.value}:{node.symbol}(" + ",".join(parts) + ")"
        seen.add(k)
        return k

    key(ast)
    return len(seen)


# ---------------------------------------------------------------------------
# numeric oracles


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _ln(x, gamma, beta, eps=1e-5):
    mu = x.mean()
    var = ((x - mu) ** 2).mean()
    return (x - mu) / math.sqrt(var + eps) * gamma + beta


def tree_lstm_oracle(dag: FormulaDag, s: np.ndarray, params: nets.ParameterStore, prefix: str) -> np.ndarray:
    """Recursive N-ary tree LSTM over a sharing-free DAG (children first).

    Gate parameters are read one gate at a time from the fused arrays.
    """
    W = params.params[f"{prefix}.W"]
    U = params.params[f"{prefix}.U"]
    b = params.params[f"{prefix}.b"]
    gW, bW = params.params[f"{prefix}.ln_W.gamma"], params.params[f"{prefix}.ln_W.beta"]
    gU, bU = params.params[f"{prefix}.ln_U.gamma"], params.params[f"{prefix}.ln_U.beta"]
    d = b.shape[1]
    gate = {name: k for k, name in enumerate(nets.GATES)}
    h_out = np.zeros((len(dag), d))
    memo = {}

    def cell(v):
        if v in memo:
            return memo[v]
        kids = [(dag.edges[e].dst, dag.edges[e].label_id) for e in dag.nodes[v].out_edges]
        states = [cell(w) + (lab,) for w, lab in kids]  # (h_w, c_w, label)

        def x_part(g):
            k = gate[g]
            return _ln(s[v] @ W[:, k * d : (k + 1) * d], gW[k], bW[k]) + b[k]

        def h_part(g, h_w, lab):
            k = gate[g]
            return _ln(h_w @ U[lab][:, k * d : (k + 1) * d], gU[k], bU[k])

        i = _sigmoid(x_part("i") + sum((h_part("i", hw, lab) for hw, _, lab in states), np.zeros(d)))
        o = _sigmoid(x_part("o") + sum((h_part("o", hw, lab) for hw, _, lab in states), np.zeros(d)))
        u = np.tanh(x_part("c") + sum((h_part("c", hw, lab) for hw, _, lab in states), np.zeros(d)))
        c = i * u
        for hw, cw, lab in states:
            c = c + _sigmoid(x_part("f") + h_part("f", hw, lab)) * cw
        h = o * np.tanh(c)
        memo[v] = (h, c)
        h_out[v] = h
        return memo[v]

    cell(dag.root)
    return h_out


def dense_gcn_oracle(dag: FormulaDag, h: np.ndarray, W: np.ndarray) -> np.ndarray:
    n = len(dag)
    A = np.zeros((n, n))
    for e in dag.edges:
        A[e.src, e.dst] = A[e.dst, e.src] = 1.0
    deg = np.maximum(A.sum(1), 1.0)
    Dm = np.diag(1.0 / np.sqrt(deg))
    return np.maximum((np.diag(1.0 / deg) @ h + Dm @ A @ Dm @ h) @ W, 0.0)


def _ffn_eval(x, params, name, final="relu"):
    p = params.params
    z = x @ p[f"{name}.lin1.W"] + p[f"{name}.lin1.b"]
    if f"{name}.bn1.gamma" in p:
        mean = params.buffers[f"{name}.bn1.running_mean"]
        var = params.buffers[f"{name}.bn1.running_var"]
        z = (z - mean) / np.sqrt(var + 1e-5) * p[f"{name}.bn1.gamma"] + p[f"{name}.bn1.beta"]
    z = np.maximum(z, 0.0)
    y = z @ p[f"{name}.lin2.W"] + p[f"{name}.lin2.b"]
    return np.maximum(y, 0.0) if final == "relu" else _sigmoid(y)


def mpnn_reference(dag: FormulaDag, h: np.ndarray, he: np.ndarray, t: int, params) -> np.ndarray:
    """Per-node direct summation of one MPNN round (batch norm in eval mode)."""
    n, d = h.shape
    out = np.zeros_like(h)
    for v in range(n):
        mp = np.zeros(d)
        mc = np.zeros(d)
        for k in dag.nodes[v].in_edges:
            w = dag.edges[k].src
            mp += _ffn_eval(np.concatenate([h[v], h[w], he[k]]), params, f"mpnn.{t}.F_MA")
        for k in dag.nodes[v].out_edges:
            w = dag.edges[k].dst
            mc += _ffn_eval(np.concatenate([h[v], h[w], he[k]]), params, f"mpnn.{t}.F_MC")
        out[v] = h[v] + _ffn_eval(np.concatenate([h[v], mp, mc]), params, f"mpnn.{t}.F_A")
    return out


# ---------------------------------------------------------------------------
# helpers for random models


class TokenVocab:
    """Vocabulary over an explicit set of graphs (no UNK collisions)."""

    def __init__(self, dags):
        from .trainer import Vocabulary

        self.inner = Vocabulary()
        for g in dags:
            for tok in sorted(set(g.tokens)):
                self.inner.add(tok)

    def __len__(self):
        return len(self.inner)

    def encode(self, tokens):
        return self.inner.encode(tokens)


def randomize(params: nets.ParameterStore, rng, scale: float = 0.2) -> nets.ParameterStore:
    """Move a fresh store to a generic point: unit-scale embeddings, noisy offsets."""
    for k in params.names():
        a = params.params[k]
        if k.startswith("embed.") or k == "att.r":
            a[...] = rng.normal(0.0, 1.0, a.shape)
        elif k.endswith((".b", ".beta", ".gamma")):
            a += rng.normal(0.0, scale, a.shape)
    return params


def small_config(embedder, pooling, dim=4, edge_dim=3) -> ModelConfig:
    return ModelConfig(node_dim=dim, edge_dim=edge_dim, node_embedder=embedder, pooling=pooling)


# ---------------------------------------------------------------------------
# gradient check


@dataclass
class GradCheckResult:
    embedder: str
    pooling: str
    coords: int
    nonzero_coords: int
    max_rel_error: float
    worst: str
    margin: float
    attempts: int
    seconds: float

    @property
    def row(self):
        return f"{self.embedder}+{self.pooling}"

    def passed(self, tol: float = 1e-4, min_coords: int = 200) -> bool:
        return self.coords >= min_coords and self.max_rel_error < tol


def gradient_check(
    embedder,
    pooling,
    seed: int = 0,
    n_coords: int = 200,
    eps: float = 1e-5,
    margin: float = 1e-3,
    max_nodes: int = 10,
    corrupt: float = 0.0,
    max_attempts: int = 200,
) -> GradCheckResult:
    """Central differences vs. the tape gradient of the end-to-end BCE loss.

    A premise/conjecture pair of at most ``max_nodes`` nodes each and a
    parameter point are drawn from ``(seed, attempt)``; draws where some ReLU
    input or max gap lies within ``margin`` of its kink are skipped, since a
    central difference across a kink measures a different function.
    ``corrupt`` scales the analytic gradient (fault-injection hook).
    """
    t0 = time.perf_counter()
    config = small_config(NodeEmbedder(embedder), Pooling(pooling))
    for attempt in range(1, max_attempts + 1):
        rng = np.random.default_rng([seed, attempt])
        _, prem = random_small_formula(rng, max_nodes)
        _, conj = random_small_formula(rng, max_nodes)
        vocab = TokenVocab([prem, conj])
        params = nets.init_params(config, len(vocab), seed=rng, dtype=np.float64)
        randomize(params, rng)
        params.training, params.update_stats = True, False
        label = [int(rng.integers(2))]
        batch = GraphBatch.from_pairs([(prem, conj)], vocab)

        def loss_value():
            return float(T.bce(nets.forward_pairs(batch, params, config), label).data)

        params.zero_grad()
        with T.KinkMonitor() as km, T.Tape():
            loss = T.bce(nets.forward_pairs(batch, params, config), label)
            T.backward(loss)
        if km.margin < margin:
            continue
        names = params.names()
        grads = [params.grad(n).reshape(-1) * (1.0 + corrupt) for n in names]
        nz = [(k, int(i)) for k, g in enumerate(grads) for i in np.flatnonzero(g)]
        zero = [(k, int(i)) for k, g in enumerate(grads) for i in np.flatnonzero(g == 0)]
        if len(nz) >= n_coords:
            pick = [nz[j] for j in rng.choice(len(nz), n_coords, replace=False)]
        else:
            fill = min(n_coords - len(nz), len(zero))
            pick = nz + [zero[j] for j in rng.choice(len(zero), fill, replace=False)]
        arrays = [params.params[n] for n in names]
        numeric = T.finite_difference(loss_value, arrays, eps, pick)
        analytic = np.array([grads[k][i] for k, i in pick])
        rel = T.relative_error(analytic, numeric)
        w = int(np.argmax(rel)) if len(rel) else 0
        worst = f"{names[pick[w][0]]}[{pick[w][1]}]" if pick else ""
        return GradCheckResult(
            NodeEmbedder(embedder).value,
            Pooling(pooling).value,
            len(pick),
            len(nz),
            float(rel.max()) if len(rel) else 0.0,
            worst,
            float(km.margin),
            attempt,
            time.perf_counter() - t0,
        )
    raise RuntimeError(f"no kink-free parameter point found in {max_attempts} attempts")


# ---------------------------------------------------------------------------
# property checks: each returns (ok, detail)


def _model(embedder, pooling, rng, dim=6, dags=()):
    config = small_config(embedder, pooling, dim=dim, edge_dim=4)
    vocab = TokenVocab(dags)
    params = nets.init_params(config, len(vocab), seed=rng, dtype=np.float64)
    randomize(params, rng)
    params.training = False
    return config, vocab, params


def check_batching_equivalence(n_dags=100, max_nodes=50, seed=0):
    """Layer-batched vs one-node-at-a-time DAG LSTM, bitwise in float64."""
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n_dags):
        _, g = random_small_formula(rng, max_nodes, max_depth=6, min_nodes=int(rng.integers(1, 40)))
        config, vocab, params = _model(NodeEmbedder.DAG_LSTM, Pooling.DAG_POOL, rng, dags=[g])
        batch = GraphBatch.from_dags([g], vocab)
        s = T.Tensor(rng.normal(size=(len(g), config.node_dim)))
        for direction in ("Up", "Down"):
            a = nets.dag_lstm_forward(batch, s, direction, params, "embed_lstm").data
            b = nets.dag_lstm_forward(
                batch, s, direction, params, "embed_lstm", layers=batch.sequential_layers(direction)
            ).data
            bad += not np.array_equal(a, b)
    return bad == 0, f"{bad} mismatching dag/direction runs out of {2 * n_dags}"


def check_tree_oracle(n=100, seed=0, tol=1e-10):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        g = compile_tree(random_tree_formula(rng, int(rng.integers(1, 5))))
        if any(len(node.in_edges) > 1 for node in g.nodes):
            return False, "generator produced a shared node"
        config, vocab, params = _model(NodeEmbedder.DAG_LSTM, Pooling.DAG_POOL, rng, dags=[g])
        s = rng.normal(size=(len(g), config.node_dim))
        got = nets.dag_lstm_forward(GraphBatch.from_dags([g], vocab), T.Tensor(s), "Up", params, "embed_lstm").data
        want = tree_lstm_oracle(g, s, params, "embed_lstm")
        worst = max(worst, float(np.abs(got - want).max()))
    return worst <= tol, f"max abs deviation {worst:.3g} (tolerance {tol:g})"


def _pair_prob(config, vocab, params, p, c):
    batch = GraphBatch.from_pairs([(p, c)], vocab)
    return nets.forward_pairs(batch, params, config).data.copy()


def check_permutation_invariance(cases=50, seed=0, rows=nets.ABLATION_ROWS):
    rng = np.random.default_rng(seed)
    bad = []
    for emb, pl in rows:
        for _ in range(cases):
            while True:  # only cases where the permutation changes the input text
                tp, tc = random_formula(rng, 4), random_formula(rng, 4)
                tp2, tc2 = permute_unordered(tp, rng), permute_unordered(tc, rng)
                if to_text(tp) != to_text(tp2) or to_text(tc) != to_text(tc2):
                    break
            p, c = compile_tree(tp), compile_tree(tc)
            p2, c2 = compile_tree(tp2), compile_tree(tc2)
            config, vocab, params = _model(emb, pl, rng, dags=[p, c])
            if not np.array_equal(_pair_prob(config, vocab, params, p, c), _pair_prob(config, vocab, params, p2, c2)):
                bad.append(f"{emb.value}+{pl.value}")
    return not bad, f"{len(bad)} differing cases" + (f" ({sorted(set(bad))})" if bad else "")


def check_alpha_invariance(cases=50, seed=0):
    rng = np.random.default_rng(seed)
    bad = 0
    rows = nets.ABLATION_ROWS
    for j in range(cases):
        emb, pl = rows[j % len(rows)]
        tp, tc = random_formula(rng, 4), random_formula(rng, 4)
        p, c = compile_tree(tp), compile_tree(tc)
        p2, c2 = compile_tree(rename_bound(tp, rng)), compile_tree(rename_bound(tc, rng))
        config, vocab, params = _model(emb, pl, rng, dags=[p, c])
        bad += not np.array_equal(_pair_prob(config, vocab, params, p, c), _pair_prob(config, vocab, params, p2, c2))
    return bad == 0, f"{bad} differing cases out of {cases}"


def check_subterm_counts(cases=200, seed=0):
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(cases):
        ast = alpha_normalize(parse_sexpr(to_text(random_formula(rng, int(rng.integers(1, 6))))))
        bad += len(build_dag(ast)) != distinct_subterms(ast)
    return bad == 0, f"{bad} mismatches out of {cases}"


def check_attention_reductions(seed=0):
    rng = np.random.default_rng(seed)
    p = compile_tree(["and", ["p", "a"], ["q", "b", "c"]])
    c = compile_tree(["or", ["p", "d"], ["s", "d"]])
    config, vocab, params = _model(NodeEmbedder.MPNN, Pooling.ATT_DAG_POOL, rng, dags=[p, c])
    batch = GraphBatch.from_pairs([(p, c)], vocab)
    s = nets.node_embed(batch, params, config)
    _, alpha, s_prime = nets.attention_exchange(batch, s, params, config.attention_heads, return_weights=True)
    mu, mv = batch.matches()
    counts = np.bincount(mu, minlength=batch.num_nodes)
    single = counts[mu] == 1
    ok_single = bool(single.any()) and bool((alpha.data[single] == 1.0).all())
    unmatched = counts == 0
    ok_empty = bool(unmatched.any()) and bool((s_prime.data[unmatched] == 0.0).all())
    gate0 = np.zeros((len(params.params["att.r"]), config.node_dim))
    _, _, closed = nets.attention_exchange(batch, s, params, config.attention_heads, True, gate_override=gate0)
    ok_gate = bool((closed.data == 0.0).all())
    ok = ok_single and ok_empty and ok_gate
    return ok, f"single-match alpha==1: {ok_single}; empty-match zero: {ok_empty}; closed gate zero: {ok_gate}"


def check_rplus_sensitivity(trials=20, seed=0, tol=1e-12):
    """Perturb one leaf's input state; the DagPool root embedding must move."""
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(trials):
        _, g = random_small_formula(rng, 25, max_depth=4, min_nodes=5)
        config, vocab, params = _model(NodeEmbedder.DAG_LSTM, Pooling.DAG_POOL, rng, dags=[g])
        batch = GraphBatch.from_dags([g], vocab)
        s = rng.normal(size=(len(g), config.node_dim))
        leaves = [v for v, node in enumerate(g.nodes) if not node.out_edges]
        leaf = leaves[int(rng.integers(len(leaves)))]
        s2 = s.copy()
        s2[leaf] += rng.normal(size=config.node_dim)
        r1 = nets.pool(batch, T.Tensor(s), params, Pooling.DAG_POOL).data
        r2 = nets.pool(batch, T.Tensor(s2), params, Pooling.DAG_POOL).data
        hits += float(np.abs(r1 - r2).max()) > tol
    return hits == trials, f"root changed in {hits}/{trials} trials"


def check_gcn_oracle(cases=20, seed=0, tol=1e-6):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        _, g = random_small_formula(rng, 12, min_nodes=2)
        config, vocab, params = _model(NodeEmbedder.GCN, Pooling.MAX_POOL, rng, dags=[g])
        h = rng.normal(size=(len(g), config.node_dim))
        got = nets.gcn_round(GraphBatch.from_dags([g], vocab), T.Tensor(h), 1, params).data
        want = dense_gcn_oracle(g, h, params.params["gcn.1.W"])
        worst = max(worst, float(np.abs(got - want).max()))
    return worst <= tol, f"max abs deviation {worst:.3g}"


def check_mpnn_reference(cases=20, seed=0, tol=1e-6):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        _, g = random_small_formula(rng, 12, min_nodes=2)
        config, vocab, params = _model(NodeEmbedder.MPNN, Pooling.MAX_POOL, rng, dags=[g])
        for name in params.buffers:
            if name.endswith("running_mean"):
                params.buffers[name][...] = rng.normal(0, 0.3, params.buffers[name].shape)
        h = rng.normal(size=(len(g), config.node_dim))
        he = rng.normal(size=(len(g.edges), config.edge_dim))
        got = nets.mpnn_round(GraphBatch.from_dags([g], vocab), T.Tensor(h), T.Tensor(he), 1, params).data
        want = mpnn_reference(g, h, he, 1, params)
        worst = max(worst, float(np.abs(got - want).max()))
    return worst <= tol, f"max abs deviation {worst:.3g}"


# ---------------------------------------------------------------------------
# self-check driver


@dataclass
class CheckOutcome:
    name: str
    ok: bool
    detail: str
    seconds: float = 0.0


@dataclass
class SelfCheckReport:
    outcomes: list = field(default_factory=list)

    @property
    def ok(self):
        return all(o.ok for o in self.outcomes)

    @property
    def failures(self):
        return [o.name for o in self.outcomes if not o.ok]


def _grad_property(emb, pl, seed, n_coords, corrupt):
    def run():
        r = gradient_check(emb, pl, seed=seed, n_coords=n_coords, corrupt=corrupt)
        return r.passed(min_coords=n_coords), f"max rel error {r.max_rel_error:.2e} over {r.coords} coords"

    return run


def selfcheck_properties(level: str = "fast", fault: str | None = None):
    """Ordered ``(name, thunk)`` pairs for the requested level.

    ``fault="gradient"`` corrupts analytic gradients by 1%, which the
    gradient properties must flag.
    """
    corrupt = 1e-2 if fault == "gradient" else 0.0
    full = level == "full"
    rows = nets.ABLATION_ROWS if full else (nets.ABLATION_ROWS[0], nets.ABLATION_ROWS[-1])
    props = [
        (f"gradient:{e.value}+{p.value}", _grad_property(e, p, 0, 200 if full else 60, corrupt)) for e, p in rows
    ]
    scale = 1 if full else 5
    props += [
        ("batching-equivalence", lambda: check_batching_equivalence(100 // scale)),
        ("tree-oracle", lambda: check_tree_oracle(100 // scale)),
        ("unordered-permutation", lambda: check_permutation_invariance(50 // scale if full else 2, rows=rows)),
        ("alpha-renaming", lambda: check_alpha_invariance(50 // scale)),
        ("subterm-count", lambda: check_subterm_counts(200 // scale)),
        ("attention-reductions", check_attention_reductions),
        ("rplus-sensitivity", lambda: check_rplus_sensitivity(20)),
        ("gcn-dense-oracle", lambda: check_gcn_oracle(20 // scale)),
        ("mpnn-reference", lambda: check_mpnn_reference(20 // scale)),
    ]
    return props


def run_selfcheck(level: str = "fast", fault: str | None = None, progress=None) -> SelfCheckReport:
    report = SelfCheckReport()
    for name, thunk in selfcheck_properties(level, fault):
        t0 = time.perf_counter()
        try:
            ok, detail = thunk()
        except Exception as e:  # a crash is a failure of that property
            ok, detail = False, f"{type(e).__name__}: {e}"
        outcome = CheckOutcome(name, bool(ok), detail, time.perf_counter() - t0)
        report.outcomes.append(outcome)
        if progress:
            progress(outcome)
    return report
