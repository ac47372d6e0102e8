"""Symbolic terms, substitutions, and unification.

Terms are immutable and hash-consed per TermStore: two structurally equal
terms built in the same store are the same Python object, so equality is
identity and costs O(1). Every term carries an integer handle assigned in
construction order; handles are the stable identity used by the memory
model and by deterministic orderings elsewhere (never builtin hash(), which
is salted for strings).

Grammar accepted by parse(): atoms `[a-z][A-Za-z0-9_]*` (plus the bare
control atom `!`), variables `[A-Z_][A-Za-z0-9_]*`, optionally signed
integers, compounds `functor(t1, ..., tn)`, `%` line comments, arbitrary
whitespace between tokens.
"""

from __future__ import annotations

import re
from typing import Iterator, Optional


class TermError(Exception):
    pass


class TermSyntaxError(TermError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} (line {line}, column {col})")
        self.line = line
        self.col = col


class UnifyBudgetExceeded(TermError):
    """Raised when unification exceeds its term-size work budget."""


class Term:
    __slots__ = ("store", "handle", "cells")


class Variable(Term):
    __slots__ = ("name_id",)

    @property
    def name(self) -> str:
        return self.store.symbol_name(self.name_id)

    def __repr__(self):
        return self.name


class Atom(Term):
    __slots__ = ("name_id",)

    @property
    def name(self) -> str:
        return self.store.symbol_name(self.name_id)

    def __repr__(self):
        return self.name


class Number(Term):
    __slots__ = ("value",)

    def __repr__(self):
        return str(self.value)


class Compound(Term):
    __slots__ = ("functor_id", "args")

    @property
    def functor(self) -> str:
        return self.store.symbol_name(self.functor_id)

    def __repr__(self):
        return term_text(self)


def term_text(t: Term) -> str:
    """Canonical text form; re-parsing it in the same store yields `t`."""
    if isinstance(t, Compound):
        return "%s(%s)" % (t.functor, ", ".join(term_text(a) for a in t.args))
    if isinstance(t, Number):
        return str(t.value)
    return t.name  # Atom | Variable


def term_cells(t: Term) -> int:
    """Node count of the term viewed as a tree (sharing ignored)."""
    return t.cells


def functor_key(t: Term) -> tuple:
    """(symbol-id, arity) index key; Numbers get a negative pseudo-symbol."""
    if isinstance(t, Compound):
        return (t.functor_id, len(t.args))
    if isinstance(t, Atom):
        return (t.name_id, 0)
    if isinstance(t, Variable):
        return (t.name_id, -1)
    return (-1 - (t.value % 65521), 0)


def iter_nodes(t: Term):
    """All distinct subterm nodes in deterministic DFS order."""
    seen = {}
    stack = [t]
    while stack:
        n = stack.pop()
        if n.handle in seen:
            continue
        seen[n.handle] = None
        yield n
        if isinstance(n, Compound):
            stack.extend(reversed(n.args))


def term_vars(t: Term) -> list:
    """Distinct variables in first-occurrence order."""
    out = []
    seen = set()
    stack = [t]
    while stack:
        n = stack.pop()
        if isinstance(n, Variable):
            if n.handle not in seen:
                seen.add(n.handle)
                out.append(n)
        elif isinstance(n, Compound):
            stack.extend(reversed(n.args))
    return out


def is_ground(t: Term) -> bool:
    stack = [t]
    while stack:
        n = stack.pop()
        if isinstance(n, Variable):
            return False
        if isinstance(n, Compound):
            stack.extend(n.args)
    return True


_TOKEN_RE = re.compile(
    r"""(?P<ws>\s+)
      | (?P<comment>%[^\n]*)
      | (?P<int>-?\d+)
      | (?P<atom>[a-z][A-Za-z0-9_]*)
      | (?P<var>[A-Z_][A-Za-z0-9_]*)
      | (?P<neck>:-)
      | (?P<punct>[(),.!])
    """,
    re.VERBOSE,
)


def tokenize(text: str):
    """Yields (kind, value, line, col); kind in int/atom/var/neck/punct."""
    line, linestart = 1, 0
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise TermSyntaxError(
                f"unexpected character {text[pos]!r}", line, pos - linestart + 1
            )
        kind = m.lastgroup
        value = m.group()
        if kind in ("ws", "comment"):
            nl = value.count("\n")
            if nl:
                line += nl
                linestart = m.start() + value.rindex("\n") + 1
        else:
            col = m.start() - linestart + 1
            if kind == "punct" and value == "!":
                yield ("atom", "!", line, col)
            else:
                yield (kind, value, line, col)
        pos = m.end()
    yield ("eof", "", line, len(text) - linestart + 1)


class _TokenStream:
    def __init__(self, text: str):
        self.tokens = list(tokenize(text))
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        t = self.tokens[self.i]
        if t[0] != "eof":
            self.i += 1
        return t

    def expect(self, kind, value=None):
        k, v, line, col = self.peek()
        if k != kind or (value is not None and v != value):
            want = value if value is not None else kind
            raise TermSyntaxError(f"expected {want!r}, found {v or k!r}", line, col)
        return self.next()

    def at_eof(self):
        return self.peek()[0] == "eof"


class TermStore:
    """Interning store: symbols, hash-consed terms, and fresh-variable supply.

    Single-writer: a store and its terms may be handed off wholesale but must
    never be mutated from two execution contexts at once.
    """

    def __init__(self):
        self._symbols: dict[str, int] = {}
        self._names: list[str] = []
        self._interned: dict[tuple, Term] = {}
        self._arena: list[Term] = []
        self._fresh = 0

    def intern_symbol(self, name: str) -> int:
        sid = self._symbols.get(name)
        if sid is None:
            sid = len(self._names)
            self._symbols[name] = sid
            self._names.append(name)
        return sid

    def symbol_name(self, sid: int) -> str:
        return self._names[sid]

    @property
    def cell_count(self) -> int:
        """Number of interned term nodes; monotone within a run."""
        return len(self._arena)

    def _register(self, key: tuple, term: Term, cells: int) -> Term:
        term.store = self
        term.cells = cells
        term.handle = len(self._arena)
        self._arena.append(term)
        self._interned[key] = term
        return term

    def atom(self, name: str) -> Atom:
        sid = self.intern_symbol(name)
        key = ("a", sid)
        t = self._interned.get(key)
        if t is None:
            t = Atom()
            t.name_id = sid
            t = self._register(key, t, 1)
        return t

    def var(self, name: str) -> Variable:
        sid = self.intern_symbol(name)
        key = ("v", sid)
        t = self._interned.get(key)
        if t is None:
            t = Variable()
            t.name_id = sid
            t = self._register(key, t, 1)
        return t

    def num(self, value: int) -> Number:
        key = ("n", value)
        t = self._interned.get(key)
        if t is None:
            t = Number()
            t.value = value
            t = self._register(key, t, 1)
        return t

    def compound(self, functor: str, args) -> Term:
        args = tuple(args)
        if not args:
            # zero-arity compounds are represented as atoms
            return self.atom(functor)
        sid = self.intern_symbol(functor)
        key = ("c", sid, tuple(a.handle for a in args))
        t = self._interned.get(key)
        if t is None:
            t = Compound()
            t.functor_id = sid
            t.args = args
            t = self._register(key, t, 1 + sum(a.cells for a in args))
        return t

    def fresh_var(self, prefix: str = "_R") -> Variable:
        while True:
            self._fresh += 1
            name = f"{prefix}{self._fresh}"
            if name not in self._symbols:
                return self.var(name)

    def parse(self, text: str) -> Term:
        ts = _TokenStream(text)
        t = self._parse_term(ts)
        if not ts.at_eof():
            k, v, line, col = ts.peek()
            raise TermSyntaxError(f"trailing input {v!r}", line, col)
        return t

    def _parse_term(self, ts: _TokenStream) -> Term:
        kind, value, line, col = ts.next()
        if kind == "int":
            return self.num(int(value))
        if kind == "var":
            return self.var(value)
        if kind == "atom":
            k2, v2, _, _ = ts.peek()
            if k2 == "punct" and v2 == "(":
                ts.next()
                k3, v3, l3, c3 = ts.peek()
                if k3 == "punct" and v3 == ")":
                    raise TermSyntaxError("empty argument list", l3, c3)
                args = [self._parse_term(ts)]
                while True:
                    k4, v4, _, _ = ts.peek()
                    if k4 == "punct" and v4 == ",":
                        ts.next()
                        args.append(self._parse_term(ts))
                    else:
                        break
                ts.expect("punct", ")")
                return self.compound(value, args)
            return self.atom(value)
        raise TermSyntaxError(f"expected a term, found {value or kind!r}", line, col)


def parse_term(text: str, store: TermStore) -> Term:
    return store.parse(text)


class Bindings:
    """Variable-to-term map with a trail for cheap undo.

    Binding chains are acyclic (occurs-check) and dereferencing is
    idempotent: resolve() twice yields the same term.
    """

    __slots__ = ("map", "trail")

    def __init__(self):
        self.map: dict[Variable, Term] = {}
        self.trail: list[Variable] = []

    def mark(self) -> int:
        return len(self.trail)

    def undo_to(self, mark: int):
        while len(self.trail) > mark:
            del self.map[self.trail.pop()]

    def bind(self, var: Variable, term: Term):
        self.map[var] = term
        self.trail.append(var)

    def walk(self, t: Term) -> Term:
        """Shallow dereference: follow variable bindings to the end."""
        while isinstance(t, Variable):
            nxt = self.map.get(t)
            if nxt is None:
                return t
            t = nxt
        return t

    def resolve(self, t: Term) -> Term:
        """Deep dereference, rebuilding through the owning store."""
        t = self.walk(t)
        if isinstance(t, Compound):
            args = tuple(self.resolve(a) for a in t.args)
            if all(a is b for a, b in zip(args, t.args)):
                return t
            return t.store.compound(t.functor, args)
        return t

    def snapshot(self, variables) -> "Bindings":
        """Frozen copy binding each variable to its fully resolved value."""
        out = Bindings()
        for v in variables:
            r = self.resolve(v)
            if r is not v:
                out.bind(v, r)
        return out

    def items(self):
        return [(v, self.map[v]) for v in self.trail]

    def __len__(self):
        return len(self.map)

    def __repr__(self):
        inner = ", ".join(f"{v!r}->{self.resolve(v)!r}" for v in self.trail)
        return "{%s}" % inner


def _occurs(var: Variable, t: Term, b: Bindings) -> tuple[bool, int]:
    work = 0
    stack = [t]
    while stack:
        n = b.walk(stack.pop())
        work += 1
        if n is var:
            return True, work
        if isinstance(n, Compound):
            stack.extend(n.args)
    return False, work


def unify_counted(
    t1: Term, t2: Term, b: Bindings, budget: Optional[int] = None
) -> tuple[bool, int]:
    """Unify t1 with t2 extending b in place.

    Returns (ok, comparisons). On failure b is restored via the trail, so no
    partial bindings leak. `comparisons` counts symbol comparisons plus
    occurs-check work and feeds the timing model. Exceeding `budget` raises
    UnifyBudgetExceeded (also after restoring b).
    """
    mark = b.mark()
    comparisons = 0
    stack = [(t1, t2)]
    while stack:
        a, c = stack.pop()
        a = b.walk(a)
        c = b.walk(c)
        comparisons += 1
        if budget is not None and comparisons > budget:
            b.undo_to(mark)
            raise UnifyBudgetExceeded(f"unification budget {budget} exceeded")
        if a is c:
            continue
        if isinstance(a, Variable):
            hit, work = _occurs(a, c, b)
            comparisons += work
            if hit:
                b.undo_to(mark)
                return False, comparisons
            b.bind(a, c)
        elif isinstance(c, Variable):
            hit, work = _occurs(c, a, b)
            comparisons += work
            if hit:
                b.undo_to(mark)
                return False, comparisons
            b.bind(c, a)
        elif isinstance(a, Compound) and isinstance(c, Compound):
            if a.functor_id != c.functor_id or len(a.args) != len(c.args):
                b.undo_to(mark)
                return False, comparisons
            stack.extend(zip(a.args, c.args))
        else:
            # distinct interned atoms/numbers, or kind mismatch
            b.undo_to(mark)
            return False, comparisons
    return True, comparisons


def unify(
    t1: Term, t2: Term, b: Bindings, budget: Optional[int] = None
) -> Optional[Bindings]:
    """Returns b extended so t1 and t2 dereference identically, or None."""
    ok, _ = unify_counted(t1, t2, b, budget)
    return b if ok else None


def apply_bindings(t: Term, b: Bindings) -> Term:
    """Replace every bound variable by its fully dereferenced value."""
    return b.resolve(t)


def rename_apart(t: Term, mapping: dict, store: TermStore) -> Term:
    """Rebuild t with variables replaced per `mapping`, extending it with
    fresh variables for names not seen yet."""
    if isinstance(t, Variable):
        r = mapping.get(t)
        if r is None:
            r = store.fresh_var()
            mapping[t] = r
        return r
    if isinstance(t, Compound):
        args = tuple(rename_apart(a, mapping, store) for a in t.args)
        if all(a is b2 for a, b2 in zip(args, t.args)):
            return t
        return store.compound(t.functor, args)
    return t
