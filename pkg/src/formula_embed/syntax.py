"""Formula syntax: the AST, the s-expression and TPTP FOF front-ends, printers,
and alpha-normalization.

All tree walks go through :func:`formula_embed._trampoline.run`, so nothing
here depends on the interpreter recursion limit.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from enum import Enum

from ._trampoline import run

MAX_DEPTH = 10_000


class Kind(str, Enum):
    QUANTIFIER = "Quantifier"
    CONNECTIVE = "Connective"
    PREDICATE = "Predicate"
    FUNCTION = "Function"
    CONSTANT = "Constant"
    VARIABLE = "Variable"
    APPLY = "Apply"


KINDS = tuple(Kind)


class ArityClass(str, Enum):
    UNORDERED = "Unordered"
    ORDERED = "Ordered"
    QUANTIFIER_HYBRID = "QuantifierHybrid"


QUANTIFIERS = ("forall", "exists")
CONNECTIVES = ("and", "or", "not", "implies", "iff")
UNORDERED_SYMBOLS = frozenset({"and", "or", "iff", "="})
RESERVED = frozenset(QUANTIFIERS + CONNECTIVES + ("=", "apply"))

_SYMBOL_CHARS = frozenset(
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789_$.!?'-="
)
# Unbound symbols in term position that read as (free) variables.
_FREE_VAR_RE = re.compile(r"^(?:[A-Z?_].*|[u-z][0-9_']*)$")


class FormulaParseError(ValueError):
    """Base class for formula input errors; carries a character offset."""

    def __init__(self, message: str, offset: int = -1, text: str | None = None):
        self.message = message
        self.offset = offset
        self.line, self.column = _line_col(text, offset)
        where = f" at line {self.line}, column {self.column} (offset {offset})" if offset >= 0 else ""
        super().__init__(f"{message}{where}")


class FormulaSyntaxError(FormulaParseError):
    pass


class ArityError(FormulaParseError):
    pass


class UnboundVariableError(FormulaParseError):
    pass


class UnsupportedConstructError(FormulaParseError):
    pass


def _line_col(text, offset):
    if text is None or offset < 0:
        return 0, 0
    head = text[:offset]
    line = head.count("\n") + 1
    return line, offset - (head.rfind("\n") + 1) + 1


@dataclass(frozen=True, eq=False)
class FormulaAst:
    """One node of a formula parse tree.

    ``symbol`` of a Variable is its source name; after :func:`alpha_normalize`
    the binding identity lives in ``scope`` and the name is only kept for
    display.  ``pos`` is the source offset, ``free`` is set on roots only.
    """

    kind: Kind
    symbol: str
    children: tuple = ()
    scope: int | None = None
    pos: int = field(default=-1, compare=False)
    free: tuple = field(default=(), compare=False)

    @property
    def arity_class(self) -> ArityClass:
        if self.kind is Kind.QUANTIFIER:
            return ArityClass.QUANTIFIER_HYBRID
        if self.kind in (Kind.CONNECTIVE, Kind.PREDICATE) and self.symbol in UNORDERED_SYMBOLS:
            return ArityClass.UNORDERED
        return ArityClass.ORDERED

    def _label(self):
        if self.kind is Kind.VARIABLE and self.scope is not None:
            return (self.kind, None, self.scope, len(self.children))
        return (self.kind, self.symbol, self.scope, len(self.children))

    def __eq__(self, other):
        if not isinstance(other, FormulaAst):
            return NotImplemented
        stack = [(self, other)]
        while stack:
            a, b = stack.pop()
            if a is b:
                continue
            if a._label() != b._label():
                return False
            stack.extend(zip(a.children, b.children))
        return True

    __hash__ = None

    def __repr__(self):
        try:
            return f"FormulaAst({to_sexpr(self)})"
        except Exception:
            return f"FormulaAst({self.kind.value}:{self.symbol})"


def _make(kind, symbol, children=(), pos=-1, scope=None):
    return FormulaAst(Kind(kind), symbol, tuple(children), scope, pos)


# ---------------------------------------------------------------------------
# s-expressions


def _sexpr_tokens(text):
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch in " \t\r\n\f\v":
            i += 1
        elif ch == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif ch in "()":
            yield ch, ch, i
            i += 1
        elif ch in _SYMBOL_CHARS:
            j = i
            while j < n and text[j] in _SYMBOL_CHARS:
                j += 1
            sym = text[i:j]
            if "=" in sym and sym != "=":
                raise FormulaSyntaxError(f"invalid symbol {sym!r}", i, text)
            yield "sym", sym, i
            i = j
        else:
            raise FormulaSyntaxError(f"unexpected character {ch!r}", i, text)


class _SList:
    __slots__ = ("items", "pos")

    def __init__(self, pos):
        self.items = []
        self.pos = pos


class _SAtom:
    __slots__ = ("text", "pos")

    def __init__(self, text, pos):
        self.text = text
        self.pos = pos


def _read_sexprs(text):
    """Group tokens into nested lists without recursion."""
    top = []
    stack = []
    for kind, value, pos in _sexpr_tokens(text):
        if kind == "(":
            if len(stack) >= MAX_DEPTH:
                raise FormulaSyntaxError(f"nesting deeper than {MAX_DEPTH}", pos, text)
            stack.append(_SList(pos))
        elif kind == ")":
            if not stack:
                raise FormulaSyntaxError("unbalanced ')'", pos, text)
            done = stack.pop()
            (stack[-1].items if stack else top).append(done)
        else:
            (stack[-1].items if stack else top).append(_SAtom(value, pos))
    if stack:
        raise FormulaSyntaxError("expected ')' before end of input", len(text), text)
    return top


class _Converter:
    """Lower generic s-expressions to FormulaAst nodes."""

    def __init__(self, text, strict):
        self.text = text
        self.strict = strict
        self.bound: dict[str, int] = {}
        self.free: list[str] = []

    def err(self, cls, msg, pos):
        return cls(msg, pos, self.text)

    def _var(self, name, pos):
        if not self.bound.get(name) and name not in self.free:
            if self.strict:
                raise self.err(UnboundVariableError, f"unbound variable {name!r}", pos)
            self.free.append(name)
        return _make(Kind.VARIABLE, name, (), pos)

    def formula(self, item):
        if isinstance(item, _SAtom):
            name = item.text
            if name in RESERVED:
                raise self.err(FormulaSyntaxError, f"expected formula, found {name!r}", item.pos)
            if self.bound.get(name):
                return _make(Kind.VARIABLE, name, (), item.pos)
            return _make(Kind.PREDICATE, name, (), item.pos)
        if not item.items:
            raise self.err(FormulaSyntaxError, "expected symbol after '('", item.pos)
        head, args = item.items[0], item.items[1:]
        if not isinstance(head, _SAtom):
            raise self.err(FormulaSyntaxError, "expected symbol in head position", head.pos)
        sym = head.text
        if sym in QUANTIFIERS:
            if len(args) < 2:
                raise self.err(ArityError, f"'{sym}' needs a variable list and a body", item.pos)
            if len(args) > 2:
                raise self.err(ArityError, f"'{sym}' takes exactly one body", args[2].pos)
            varlist = args[0]
            if not isinstance(varlist, _SList) or not varlist.items:
                raise self.err(FormulaSyntaxError, "expected non-empty variable list", varlist.pos)
            names = []
            for v in varlist.items:
                if not isinstance(v, _SAtom) or v.text in RESERVED:
                    raise self.err(FormulaSyntaxError, "expected variable symbol", v.pos)
                if v.text in names:
                    raise self.err(FormulaSyntaxError, f"duplicate bound variable {v.text!r}", v.pos)
                names.append(v.text)
            for name in names:
                self.bound[name] = self.bound.get(name, 0) + 1
            body = yield self.formula(args[1])
            for name in names:
                self.bound[name] -= 1
            bvars = [_make(Kind.VARIABLE, v.text, (), v.pos) for v in varlist.items]
            return _make(Kind.QUANTIFIER, sym, bvars + [body], item.pos)
        if sym in CONNECTIVES:
            need = {"not": (1, 1), "implies": (2, 2)}.get(sym, (2, None))
            lo, hi = need
            if len(args) < lo or (hi is not None and len(args) > hi):
                want = f"exactly {lo}" if lo == hi else f"at least {lo}"
                raise self.err(ArityError, f"'{sym}' takes {want} argument(s), got {len(args)}", item.pos)
            kids = []
            for a in args:
                kids.append((yield self.formula(a)))
            return _make(Kind.CONNECTIVE, sym, kids, item.pos)
        if sym == "=":
            if len(args) != 2:
                raise self.err(ArityError, f"'=' takes exactly 2 arguments, got {len(args)}", item.pos)
            kids = []
            for a in args:
                kids.append((yield self.term(a)))
            return _make(Kind.PREDICATE, "=", kids, item.pos)
        return (yield self._application(item, sym, args, Kind.PREDICATE))

    def _application(self, item, sym, args, kind):
        if sym == "apply":
            if len(args) < 2:
                raise self.err(ArityError, "'apply' takes a head and at least one argument", item.pos)
            kids = []
            for a in args:
                kids.append((yield self.term(a)))
            return _make(Kind.APPLY, "", kids, item.pos)
        kids = []
        for a in args:
            kids.append((yield self.term(a)))
        if self.bound.get(sym):
            head = _make(Kind.VARIABLE, sym, (), item.items[0].pos)
            return _make(Kind.APPLY, "", [head] + kids, item.pos) if kids else head
        if kind is Kind.FUNCTION and not kids:
            return _make(Kind.CONSTANT, sym, (), item.pos)
        return _make(kind, sym, kids, item.pos)

    def term(self, item):
        if isinstance(item, _SAtom):
            name = item.text
            if name in RESERVED:
                raise self.err(FormulaSyntaxError, f"expected term, found {name!r}", item.pos)
            if self.bound.get(name) or _FREE_VAR_RE.match(name):
                return self._var(name, item.pos)
            return _make(Kind.CONSTANT, name, (), item.pos)
        if not item.items:
            raise self.err(FormulaSyntaxError, "expected symbol after '('", item.pos)
        head, args = item.items[0], item.items[1:]
        if not isinstance(head, _SAtom):
            raise self.err(FormulaSyntaxError, "expected symbol in head position", head.pos)
        if head.text in RESERVED and head.text != "apply":
            raise self.err(FormulaSyntaxError, f"'{head.text}' cannot appear in term position", head.pos)
        return (yield self._application(item, head.text, args, Kind.FUNCTION))


def _finish(root, conv):
    return FormulaAst(root.kind, root.symbol, root.children, root.scope, root.pos, tuple(conv.free))


def parse_sexpr(text: str, strict: bool = False) -> FormulaAst:
    """Parse exactly one formula in s-expression syntax."""
    items = _read_sexprs(text)
    if not items:
        raise FormulaSyntaxError("expected formula, found end of input", len(text), text)
    if len(items) > 1:
        raise FormulaSyntaxError("unexpected input after formula", items[1].pos, text)
    conv = _Converter(text, strict)
    return _finish(run(conv.formula(items[0])), conv)


def parse_sexpr_many(text: str, strict: bool = False) -> list[FormulaAst]:
    """Parse every top-level formula in ``text``."""
    out = []
    for item in _read_sexprs(text):
        conv = _Converter(text, strict)
        out.append(_finish(run(conv.formula(item)), conv))
    return out


def free_variables(ast: FormulaAst) -> tuple:
    return ast.free


# ---------------------------------------------------------------------------
# TPTP FOF subset

_TPTP_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>%[^\n]*|/\*.*?\*/)
  | (?P<op><=>|<~>|=>|<=|~\||~&|!=|[()\[\],:.!?~&|=])
  | (?P<upper>[A-Z][A-Za-z0-9_]*)
  | (?P<lower>[a-z][A-Za-z0-9_]*)
  | (?P<num>[+-]?[0-9]+(?:\.[0-9]+)?)
  | (?P<quoted>'(?:[^'\\]|\\.)*')
  | (?P<dollar>\$\$?[A-Za-z0-9_]*)
  | (?P<distinct>"(?:[^"\\]|\\.)*")
    """,
    re.VERBOSE | re.DOTALL,
)


def _tptp_tokens(text):
    toks = []
    i, n = 0, len(text)
    while i < n:
        m = _TPTP_TOKEN.match(text, i)
        if not m:
            raise FormulaSyntaxError(f"unexpected character {text[i]!r}", i, text)
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            value = m.group()
            if kind == "quoted":
                value = re.sub(r"\\(.)", r"\1", value[1:-1])
                kind = "lower"
            toks.append((kind, value, i))
        i = m.end()
    toks.append(("eof", "", n))
    return toks


class _TptpParser:
    _NONASSOC = {"<=>": "iff", "=>": "implies"}
    _UNSUPPORTED_BIN = ("<=", "<~>", "~|", "~&")

    def __init__(self, text):
        self.text = text
        self.toks = _tptp_tokens(text)
        self.i = 0
        self.bound: dict[str, int] = {}
        self.free: list[str] = []
        self.depth = 0

    @property
    def tok(self):
        return self.toks[self.i]

    def err(self, cls, msg, pos=None):
        return cls(msg, self.tok[2] if pos is None else pos, self.text)

    def expect(self, value):
        kind, v, pos = self.tok
        if v != value or kind != "op":
            found = "end of input" if kind == "eof" else repr(v)
            raise self.err(FormulaSyntaxError, f"expected {value!r}, found {found}")
        self.i += 1
        return pos

    def _check_unsupported(self):
        kind, v, pos = self.tok
        if kind == "dollar":
            raise self.err(UnsupportedConstructError, f"TPTP construct {v!r} is outside the supported subset")
        if kind == "distinct":
            raise self.err(UnsupportedConstructError, "distinct objects are outside the supported subset")

    def statements(self):
        out = []
        while self.tok[0] != "eof":
            kind, v, pos = self.tok
            if kind != "lower":
                raise self.err(FormulaSyntaxError, f"expected 'fof', found {v!r}")
            if v != "fof":
                raise self.err(UnsupportedConstructError, f"'{v}' statements are outside the supported subset")
            self.i += 1
            self.expect("(")
            name = self._name()
            self.expect(",")
            role = self._name()
            self.expect(",")
            self.bound, self.free = {}, []
            start = self.tok[2]
            f = run(self.formula())
            f = FormulaAst(f.kind, f.symbol, f.children, None, start, tuple(self.free))
            while self.tok[1] == ",":
                self.i += 1
                self._skip_annotation()
            self.expect(")")
            self.expect(".")
            out.append((name, role, f))
        return out

    def _name(self):
        kind, v, pos = self.tok
        if kind not in ("lower", "upper", "num"):
            raise self.err(FormulaSyntaxError, f"expected a name, found {v!r}")
        self.i += 1
        return v

    def _skip_annotation(self):
        depth = 0
        while True:
            kind, v, pos = self.tok
            if kind == "eof":
                raise self.err(FormulaSyntaxError, "unterminated annotation")
            if v in ("(", "[") and kind == "op":
                depth += 1
            elif v in (")", "]") and kind == "op":
                if depth == 0:
                    return
                depth -= 1
            elif v == "," and depth == 0:
                return
            self.i += 1

    def formula(self):
        first = yield self.unitary()
        op = self.tok[1] if self.tok[0] == "op" else None
        if op in self._UNSUPPORTED_BIN:
            raise self.err(UnsupportedConstructError, f"connective {op!r} is outside the supported subset")
        if op in self._NONASSOC:
            pos = self.tok[2]
            self.i += 1
            second = yield self.unitary()
            if self.tok[0] == "op" and self.tok[1] in ("<=>", "=>", "&", "|"):
                raise self.err(FormulaSyntaxError, "ambiguous binary connectives; add parentheses")
            return _make(Kind.CONNECTIVE, self._NONASSOC[op], [first, second], pos)
        if op in ("&", "|"):
            pos = self.tok[2]
            kids = [first]
            while self.tok[0] == "op" and self.tok[1] == op:
                self.i += 1
                kids.append((yield self.unitary()))
            if self.tok[0] == "op" and self.tok[1] in ("<=>", "=>", "&", "|"):
                raise self.err(FormulaSyntaxError, "mixed binary connectives; add parentheses")
            return _make(Kind.CONNECTIVE, "and" if op == "&" else "or", kids, pos)
        return first

    def unitary(self):
        kind, v, pos = self.tok
        self._check_unsupported()
        self.depth += 1
        if self.depth > MAX_DEPTH:
            raise self.err(FormulaSyntaxError, f"nesting deeper than {MAX_DEPTH}")
        try:
            if kind == "op" and v == "(":
                self.i += 1
                f = yield self.formula()
                self.expect(")")
                return f
            if kind == "op" and v == "~":
                self.i += 1
                body = yield self.unitary()
                return _make(Kind.CONNECTIVE, "not", [body], pos)
            if kind == "op" and v in "!?":
                self.i += 1
                self.expect("[")
                names = []
                while True:
                    k, name, p = self.tok
                    if k != "upper":
                        raise self.err(FormulaSyntaxError, f"expected variable, found {name!r}")
                    if name in (n for n, _ in names):
                        raise self.err(FormulaSyntaxError, f"duplicate bound variable {name!r}")
                    names.append((name, p))
                    self.i += 1
                    if self.tok[1] == ",":
                        self.i += 1
                        continue
                    break
                self.expect("]")
                self.expect(":")
                for name, _ in names:
                    self.bound[name] = self.bound.get(name, 0) + 1
                body = yield self.unitary()
                for name, _ in names:
                    self.bound[name] -= 1
                bvars = [_make(Kind.VARIABLE, n, (), p) for n, p in names]
                return _make(Kind.QUANTIFIER, "forall" if v == "!" else "exists", bvars + [body], pos)
            return (yield self.atomic())
        finally:
            self.depth -= 1

    def atomic(self):
        kind, v, pos = self.tok
        if kind == "upper":
            lhs = yield self.term()
        elif kind in ("lower", "num"):
            self.i += 1
            args = yield self.args()
            if self.tok[0] == "op" and self.tok[1] in ("=", "!="):
                lhs = self._application(v, args, pos, Kind.FUNCTION)
            else:
                return self._application(v, args, pos, Kind.PREDICATE)
        else:
            self._check_unsupported()
            found = "end of input" if kind == "eof" else repr(v)
            raise self.err(FormulaSyntaxError, f"expected formula, found {found}")
        k2, op, p2 = self.tok
        if k2 != "op" or op not in ("=", "!="):
            raise self.err(FormulaSyntaxError, f"expected '=' or '!=', found {op!r}")
        self.i += 1
        rhs = yield self.term()
        eq = _make(Kind.PREDICATE, "=", [lhs, rhs], p2)
        return eq if op == "=" else _make(Kind.CONNECTIVE, "not", [eq], p2)

    def _application(self, sym, args, pos, kind):
        if kind is Kind.FUNCTION and not args:
            return _make(Kind.CONSTANT, sym, (), pos)
        return _make(kind, sym, args, pos)

    def args(self):
        if not (self.tok[0] == "op" and self.tok[1] == "("):
            return []
        self.i += 1
        out = []
        while True:
            out.append((yield self.term()))
            if self.tok[1] == "," and self.tok[0] == "op":
                self.i += 1
                continue
            break
        self.expect(")")
        return out

    def term(self):
        kind, v, pos = self.tok
        self._check_unsupported()
        if kind == "upper":
            self.i += 1
            if v not in self.free and not self.bound.get(v):
                self.free.append(v)
            return _make(Kind.VARIABLE, v, (), pos)
        if kind in ("lower", "num"):
            self.i += 1
            self.depth += 1
            if self.depth > MAX_DEPTH:
                raise self.err(FormulaSyntaxError, f"nesting deeper than {MAX_DEPTH}")
            args = yield self.args()
            self.depth -= 1
            return self._application(v, args, pos, Kind.FUNCTION)
        found = "end of input" if kind == "eof" else repr(v)
        raise self.err(FormulaSyntaxError, f"expected term, found {found}")


def parse_tptp_fof(text: str) -> list[tuple[str, str, FormulaAst]]:
    """Parse ``fof(name, role, formula).`` statements."""
    return _TptpParser(text).statements()


# ---------------------------------------------------------------------------
# alpha-normalization


def _digest(*parts) -> bytes:
    h = hashlib.blake2b(digest_size=16)
    for p in parts:
        h.update(p if isinstance(p, bytes) else repr(p).encode())
        h.update(b"\x00")
    return h.digest()


class _Normalizer:
    def __init__(self):
        self.binders: dict[str, list] = {}
        self.level = 0
        self.hashes: dict[int, bytes] = {}

    def canon(self, node):
        """Binder-relative structural digest; bound names do not enter it."""
        if node.kind is Kind.VARIABLE:
            stack = self.binders.get(node.symbol)
            key = ("b",) + stack[-1] if stack else ("f", node.symbol)
            d = _digest("V", key)
        elif node.kind is Kind.QUANTIFIER:
            bvars = node.children[:-1]
            for idx, v in enumerate(bvars):
                self.binders.setdefault(v.symbol, []).append((self.level, idx))
            self.level += 1
            body = yield self.canon(node.children[-1])
            self.level -= 1
            for v in bvars:
                self.binders[v.symbol].pop()
            d = _digest("Q", node.symbol, len(bvars), body)
        else:
            kids = []
            for c in node.children:
                kids.append((yield self.canon(c)))
            if node.arity_class is ArityClass.UNORDERED:
                kids.sort()
            d = _digest(node.kind.value, node.symbol, *kids)
        self.hashes[id(node)] = d
        return d

    def rebuild(self, node, scopes, counter):
        if node.kind is Kind.VARIABLE:
            stack = scopes.get(node.symbol)
            if stack:
                sid = stack[-1]
            else:
                sid = counter[0]
                counter[0] += 1
                scopes[node.symbol] = [sid]
                self.free_scopes.add(node.symbol)
            return FormulaAst(Kind.VARIABLE, node.symbol, (), sid, node.pos)
        if node.kind is Kind.QUANTIFIER:
            bvars = []
            for v in node.children[:-1]:
                sid = counter[0]
                counter[0] += 1
                scopes.setdefault(v.symbol, []).append(sid)
                bvars.append(FormulaAst(Kind.VARIABLE, v.symbol, (), sid, v.pos))
            body = yield self.rebuild(node.children[-1], scopes, counter)
            for v in node.children[:-1]:
                scopes[v.symbol].pop()
            return FormulaAst(node.kind, node.symbol, tuple(bvars) + (body,), None, node.pos)
        kids = node.children
        if node.arity_class is ArityClass.UNORDERED:
            kids = sorted(kids, key=lambda c: self.hashes[id(c)])
        out = []
        for c in kids:
            out.append((yield self.rebuild(c, scopes, counter)))
        return FormulaAst(node.kind, node.symbol, tuple(out), None, node.pos)


def alpha_normalize(ast: FormulaAst) -> FormulaAst:
    """Canonical form: scope ids on variables, sorted unordered arguments.

    Scope ids come from one pre-order counter shared by binders and free
    variables.  Arguments of unordered symbols are sorted by a digest that
    ignores bound-variable names, so alpha-equivalent formulae and argument
    permutations of unordered symbols normalize to identical trees.
    """
    norm = _Normalizer()
    run(norm.canon(ast))
    norm.free_scopes = set()
    root = run(norm.rebuild(ast, {}, [0]))
    return FormulaAst(root.kind, root.symbol, root.children, root.scope, root.pos, ast.free)


def is_normalized(ast: FormulaAst) -> bool:
    stack = [ast]
    while stack:
        n = stack.pop()
        if n.kind is Kind.VARIABLE and n.scope is None:
            return False
        stack.extend(n.children)
    return True


# ---------------------------------------------------------------------------
# printers


class _Printer:
    def __init__(self, ast, var_prefix, tptp):
        self.tptp = tptp
        self.var_prefix = var_prefix
        self.free_names = set(ast.free)
        self.bound_scopes: dict[int, str] = {}

    def var_name(self, node):
        if node.scope is not None and node.scope in self.bound_scopes:
            return self.bound_scopes[node.scope]
        return node.symbol

    def bind(self, v):
        if v.scope is None:
            name = v.symbol
        else:
            name = f"{self.var_prefix}{v.scope}"
            while name in self.free_names:
                name += "_" if self.tptp else "'"
        self.bound_scopes[v.scope] = name
        return name

    def sexpr(self, node):
        k = node.kind
        if k is Kind.VARIABLE:
            return self.var_name(node)
        if k is Kind.QUANTIFIER:
            names = [self.bind(v) for v in node.children[:-1]]
            body = yield self.sexpr(node.children[-1])
            return f"({node.symbol} ({' '.join(names)}) {body})"
        if k is Kind.CONSTANT or (k is Kind.PREDICATE and not node.children):
            return node.symbol
        head = "apply" if k is Kind.APPLY else node.symbol
        parts = [head]
        for c in node.children:
            parts.append((yield self.sexpr(c)))
        return "(" + " ".join(parts) + ")"

    @staticmethod
    def functor(sym):
        if re.fullmatch(r"[a-z][A-Za-z0-9_]*", sym):
            return sym
        return "'" + sym.replace("\\", "\\\\").replace("'", "\\'") + "'"

    def tptp_formula(self, node):
        k = node.kind
        if k is Kind.QUANTIFIER:
            names = [self.bind(v) for v in node.children[:-1]]
            body = yield self.tptp_formula(node.children[-1])
            return f"{'!' if node.symbol == 'forall' else '?'} [{','.join(names)}] : {body}"
        if k is Kind.CONNECTIVE:
            kids = []
            for c in node.children:
                kids.append((yield self.tptp_formula(c)))
            if node.symbol == "not":
                return f"~ {kids[0]}"
            if node.symbol == "iff" and len(kids) != 2:
                raise UnsupportedConstructError("n-ary 'iff' has no TPTP rendering")
            op = {"and": " & ", "or": " | ", "implies": " => ", "iff": " <=> "}[node.symbol]
            return "(" + op.join(kids) + ")"
        if k is Kind.PREDICATE:
            if node.symbol == "=":
                a = yield self.tptp_term(node.children[0])
                b = yield self.tptp_term(node.children[1])
                return f"({a} = {b})"
            return (yield self.tptp_term(node))
        raise UnsupportedConstructError(f"{k.value} in formula position has no TPTP rendering")

    def tptp_term(self, node):
        k = node.kind
        if k is Kind.VARIABLE:
            name = self.var_name(node)
            if not re.fullmatch(r"[A-Z][A-Za-z0-9_]*", name):
                raise UnsupportedConstructError(f"variable {name!r} is not a TPTP variable name")
            return name
        if k is Kind.APPLY:
            raise UnsupportedConstructError("'apply' has no TPTP FOF rendering")
        args = []
        for c in node.children:
            args.append((yield self.tptp_term(c)))
        f = self.functor(node.symbol)
        return f"{f}({','.join(args)})" if args else f


def to_sexpr(ast: FormulaAst) -> str:
    """Print canonical s-expression text; bound variables become ``X<scope>``."""
    return run(_Printer(ast, "X", False).sexpr(ast))


def to_tptp(ast: FormulaAst, name: str = "f", role: str = "axiom") -> str:
    """Print one ``fof`` statement (TPTP-expressible formulae only)."""
    body = run(_Printer(ast, "X", True).tptp_formula(ast))
    return f"fof({name}, {role}, {body})."


def depth(ast: FormulaAst) -> int:
    """Height of the tree; a leaf has depth 1."""
    best = 0
    stack = [(ast, 1)]
    while stack:
        n, d = stack.pop()
        best = max(best, d)
        stack.extend((c, d + 1) for c in n.children)
    return best


def iter_nodes(ast: FormulaAst):
    stack = [ast]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(reversed(n.children))
