"""Horn-clause knowledge bases, backward/forward inference, and graph queries.

Backward chaining is SLD resolution: depth-first, leftmost goal first,
clauses tried in assertion order, with chronological backtracking driven by
the bindings trail. The control atom `!` (cut) discards choice points back
to the entry of the clause whose body contains it. Forward chaining is
restricted to Datalog and evaluated semi-naively to fixpoint.

Resolution steps (clause-head unification attempts) and inferences
(successful resolutions) are counted on every stream; the machine's timing
model charges cycles from them.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from typing import Optional

from .terms import (
    Atom,
    Bindings,
    Compound,
    Number,
    Term,
    TermStore,
    Variable,
    apply_bindings,
    functor_key,
    is_ground,
    rename_apart,
    term_text,
    term_vars,
    tokenize,
    unify_counted,
)


class KnowledgeError(Exception):
    pass


class NonDatalogError(KnowledgeError):
    pass


class LimitExceeded(KnowledgeError):
    """Search hit a resource ceiling; distinct from 'no (more) solutions'."""


class StepLimitExceeded(LimitExceeded):
    pass


class DepthLimitExceeded(LimitExceeded):
    pass


@dataclass(frozen=True)
class Clause:
    head: Term
    body: tuple
    clause_id: int

    def __repr__(self):
        if not self.body:
            return f"{term_text(self.head)}."
        return "%s :- %s." % (
            term_text(self.head),
            ", ".join(term_text(g) for g in self.body),
        )


def _check_head(head: Term):
    if isinstance(head, (Variable, Number)):
        raise KnowledgeError(f"clause head must be an atom or compound: {head!r}")


class KnowledgeBase:
    """Clauses indexed by (functor, arity), preserving assertion order."""

    def __init__(self, store: TermStore):
        self.store = store
        self._index: dict[tuple, list[Clause]] = {}
        self._by_id: dict[int, Clause] = {}
        self._next_id = 0

    def assert_clause(self, head: Term, body=()) -> int:
        _check_head(head)
        clause = Clause(head, tuple(body), self._next_id)
        self._next_id += 1
        self._index.setdefault(functor_key(head), []).append(clause)
        self._by_id[clause.clause_id] = clause
        return clause.clause_id

    def retract_clause(self, clause_id: int) -> bool:
        clause = self._by_id.pop(clause_id, None)
        if clause is None:
            return False
        self._index[functor_key(clause.head)].remove(clause)
        return True

    def clauses_for(self, goal: Term) -> list[Clause]:
        return self._index.get(functor_key(goal), [])

    def clauses(self) -> list[Clause]:
        return [self._by_id[cid] for cid in sorted(self._by_id)]

    def predicates(self) -> list[tuple]:
        return [key for key, cls in self._index.items() if cls]

    def snapshot(self) -> "KnowledgeBase":
        """Isolated copy sharing the term store (clauses are immutable)."""
        kb = KnowledgeBase(self.store)
        for clause in self.clauses():
            kb.assert_clause(clause.head, clause.body)
        return kb

    def load(self, text: str) -> list[int]:
        """Parse `.rkb` text: `fact.` or `head :- g1, ..., gn.` per clause."""
        ids = []
        for head, body in parse_clauses(text, self.store):
            ids.append(self.assert_clause(head, body))
        return ids

    def __len__(self):
        return len(self._by_id)


def parse_clauses(text: str, store: TermStore):
    """Yields (head, body) pairs from `.rkb`-format text."""
    tokens = list(tokenize(text))
    i = 0

    def parse_term_at():
        nonlocal i
        from .terms import TermSyntaxError

        kind, value, line, col = tokens[i]
        i += 1
        if kind == "int":
            return store.num(int(value))
        if kind == "var":
            return store.var(value)
        if kind == "atom":
            k2, v2, _, _ = tokens[i]
            if k2 == "punct" and v2 == "(":
                i += 1
                args = [parse_term_at()]
                while tokens[i][0] == "punct" and tokens[i][1] == ",":
                    i += 1
                    args.append(parse_term_at())
                k3, v3, l3, c3 = tokens[i]
                if not (k3 == "punct" and v3 == ")"):
                    raise TermSyntaxError("expected ')'", l3, c3)
                i += 1
                return store.compound(value, args)
            return store.atom(value)
        raise TermSyntaxError(f"expected a term, found {value or kind!r}", line, col)

    from .terms import TermSyntaxError

    while tokens[i][0] != "eof":
        head = parse_term_at()
        body = []
        kind, value, line, col = tokens[i]
        if kind == "neck":
            i += 1
            body.append(parse_term_at())
            while tokens[i][0] == "punct" and tokens[i][1] == ",":
                i += 1
                body.append(parse_term_at())
        kind, value, line, col = tokens[i]
        if not (kind == "punct" and value == "."):
            raise TermSyntaxError("expected '.' after clause", line, col)
        i += 1
        yield head, tuple(body)


class _CutSignal(Exception):
    def __init__(self, barrier: int):
        self.barrier = barrier


class SolutionStream:
    """Resumable SLD solution stream over one goal.

    next() yields the goal instantiated under the answer bindings, resuming
    from the most recent choice point; None means exhausted. Step/depth
    limits raise StepLimitExceeded/DepthLimitExceeded (the bindings are
    restored first). After exhaustion or close(), the bindings equal their
    pre-query state.
    """

    def __init__(
        self,
        kb: KnowledgeBase,
        goal: Term,
        max_steps: int = 1_000_000,
        max_depth: int = 2000,
        bindings: Optional[Bindings] = None,
    ):
        if isinstance(goal, (Variable, Number)):
            raise KnowledgeError(f"goal must be an atom or compound: {goal!r}")
        self.kb = kb
        self.goal = goal
        self.max_steps = max_steps
        self.max_depth = max_depth
        self.bindings = bindings if bindings is not None else Bindings()
        self.steps = 0
        self.inferences = 0
        self.last_root_clause: Optional[int] = None
        self.last_bindings: Optional[Bindings] = None
        self.exhausted = False
        self._base_mark = self.bindings.mark()
        self._barriers = 0
        self._cut = kb.store.atom("!")
        self._goal_vars = term_vars(goal)
        limit = 4 * max_depth + 1000
        if sys.getrecursionlimit() < limit:
            sys.setrecursionlimit(limit)
        self._gen = self._solve(((goal, -1),), 0, root=True)

    def next(self) -> Optional[Term]:
        if self.exhausted:
            return None
        try:
            next(self._gen)
        except StopIteration:
            self._finish()
            return None
        except LimitExceeded:
            self._finish()
            raise
        solution = apply_bindings(self.goal, self.bindings)
        self.last_bindings = self.bindings.snapshot(self._goal_vars)
        return solution

    def close(self):
        if not self.exhausted:
            self._gen.close()
            self._finish()

    def _finish(self):
        self.exhausted = True
        self.bindings.undo_to(self._base_mark)

    def _solve(self, goals, depth: int, root: bool = False):
        if not goals:
            yield
            return
        (goal, barrier), rest = goals[0], goals[1:]
        goal = self.bindings.walk(goal)
        if goal is self._cut:
            yield from self._solve(rest, depth)
            raise _CutSignal(barrier)
        if isinstance(goal, (Variable, Number)):
            raise KnowledgeError(f"cannot call non-callable goal: {goal!r}")
        if depth >= self.max_depth:
            raise DepthLimitExceeded(f"resolution depth limit {self.max_depth}")
        self._barriers += 1
        my_barrier = self._barriers
        b = self.bindings
        for idx, clause in enumerate(self.kb.clauses_for(goal)):
            self.steps += 1
            if self.steps > self.max_steps:
                raise StepLimitExceeded(f"resolution step limit {self.max_steps}")
            mapping: dict = {}
            head = rename_apart(clause.head, mapping, self.kb.store)
            mark = b.mark()
            ok, _ = unify_counted(goal, head, b)
            if ok:
                self.inferences += 1
                if root:
                    self.last_root_clause = idx
                body = tuple(
                    (rename_apart(g, mapping, self.kb.store), my_barrier)
                    for g in clause.body
                )
                try:
                    yield from self._solve(body + rest, depth + 1)
                except _CutSignal as cut:
                    b.undo_to(mark)
                    if cut.barrier == my_barrier:
                        return
                    raise
            b.undo_to(mark)


def solve_backward(
    kb: KnowledgeBase,
    goal: Term,
    max_steps: int = 1_000_000,
    max_depth: int = 2000,
) -> SolutionStream:
    return SolutionStream(kb, goal, max_steps=max_steps, max_depth=max_depth)


@dataclass
class ForwardResult:
    derived: set
    firings: int


def _datalog_literal_ok(lit: Term) -> bool:
    if isinstance(lit, Atom):
        return True
    if isinstance(lit, Compound):
        return all(not isinstance(a, Compound) for a in lit.args)
    return False


def check_datalog(kb: KnowledgeBase):
    """Raises NonDatalogError for compound arguments, non-ground facts, or
    rules whose head variables do not all occur in the body."""
    for clause in kb.clauses():
        for lit in (clause.head, *clause.body):
            if not _datalog_literal_ok(lit):
                raise NonDatalogError(
                    f"non-Datalog literal (compound argument): {term_text(lit)}"
                )
        if not clause.body:
            if not is_ground(clause.head):
                raise NonDatalogError(f"non-ground fact: {clause!r}")
        else:
            head_vars = {v.handle for v in term_vars(clause.head)}
            body_vars = set()
            for g in clause.body:
                body_vars.update(v.handle for v in term_vars(g))
            if not head_vars <= body_vars:
                raise NonDatalogError(f"unsafe rule (unbound head variable): {clause!r}")


def _match_atomic(pattern_args, fact_args, env: dict) -> Optional[dict]:
    new = env
    for p, f in zip(pattern_args, fact_args):
        if isinstance(p, Variable):
            bound = new.get(p)
            if bound is None:
                if new is env:
                    new = dict(env)
                new[p] = f
            elif bound is not f:
                return None
        elif p is not f:
            return None
    return new


def _literal_parts(lit: Term):
    if isinstance(lit, Compound):
        return functor_key(lit), lit.args
    return functor_key(lit), ()


def _instantiate(lit: Term, env: dict, store: TermStore) -> Term:
    if isinstance(lit, Compound):
        return store.compound(lit.functor, [env.get(a, a) for a in lit.args])
    return lit


def solve_forward(kb: KnowledgeBase, max_steps: int = 1_000_000) -> ForwardResult:
    """Semi-naive bottom-up evaluation to fixpoint over a Datalog KB.

    Returns the facts derived by rules (base facts are not re-derived);
    firings counts head instantiations produced, duplicates included.
    """
    check_datalog(kb)
    store = kb.store
    facts = [c.head for c in kb.clauses() if not c.body]
    rules = [c for c in kb.clauses() if c.body]

    total: dict[tuple, dict] = {}
    for f in facts:
        total.setdefault(functor_key(f), {})[f] = None
    base = {f for f in facts}
    derived: dict = {}
    delta: dict[tuple, dict] = {k: dict(v) for k, v in total.items()}
    firings = 0

    def match_into(lit, source, env):
        key, pargs = _literal_parts(lit)
        bucket = source.get(key)
        if not bucket:
            return
        for fact in bucket:
            _, fargs = _literal_parts(fact)
            out = _match_atomic(pargs, fargs, env)
            if out is not None:
                yield out

    while delta:
        old = {
            k: {f: None for f in v if f not in delta.get(k, ())}
            for k, v in total.items()
        }
        new_round: dict[tuple, dict] = {}
        for rule in rules:
            n = len(rule.body)
            for pos in range(n):
                # literal at `pos` from delta, earlier ones from old facts,
                # later ones from the full set: each new join seen once
                envs = [{}]
                for j, lit in enumerate(rule.body):
                    if j < pos:
                        source = old
                    elif j == pos:
                        source = delta
                    else:
                        source = total
                    next_envs = []
                    for env in envs:
                        next_envs.extend(match_into(lit, source, env))
                    envs = next_envs
                    if not envs:
                        break
                for env in envs:
                    firings += 1
                    if firings > max_steps:
                        raise StepLimitExceeded(
                            f"forward-chaining step limit {max_steps}"
                        )
                    head = _instantiate(rule.head, env, store)
                    key = functor_key(head)
                    if head not in total.get(key, ()) and head not in new_round.get(
                        key, ()
                    ):
                        new_round.setdefault(key, {})[head] = None
        for key, bucket in new_round.items():
            tb = total.setdefault(key, {})
            for f in bucket:
                tb[f] = None
                derived[f] = None
        delta = new_round

    return ForwardResult(derived={f for f in derived if f not in base}, firings=firings)


class SemanticGraph:
    """Directed labeled graph over atoms with (source, label) adjacency."""

    def __init__(self, store: TermStore):
        self.store = store
        self.nodes: dict[Atom, None] = {}
        self.edges: dict[tuple, None] = {}
        self._adj: dict[tuple, list] = {}
        self._radj: dict[tuple, list] = {}
        self._by_label: dict[Atom, list] = {}

    def add_node(self, node: Atom):
        self.nodes.setdefault(node, None)

    def add_edge(self, source: Atom, label: Atom, target: Atom) -> bool:
        key = (source, label, target)
        if key in self.edges:
            return False
        self.edges[key] = None
        self.nodes.setdefault(source, None)
        self.nodes.setdefault(target, None)
        self._adj.setdefault((source, label), []).append(target)
        self._radj.setdefault((target, label), []).append(source)
        self._by_label.setdefault(label, []).append((source, target))
        return True

    def out(self, source: Atom, label: Atom) -> list:
        return sorted(self._adj.get((source, label), ()), key=lambda a: a.name_id)

    def into(self, target: Atom, label: Atom) -> list:
        return sorted(self._radj.get((target, label), ()), key=lambda a: a.name_id)

    def edges_with_label(self, label: Atom) -> list:
        return sorted(
            self._by_label.get(label, ()),
            key=lambda st: (st[0].name_id, st[1].name_id),
        )

    def load(self, text: str) -> int:
        """Parse `.rsg` text: `edge(source, label, target).` lines."""
        count = 0
        for head, body in parse_clauses(text, self.store):
            if body or not isinstance(head, Compound) or head.functor != "edge" \
                    or len(head.args) != 3:
                raise KnowledgeError(f"expected edge(source, label, target): {head!r}")
            s, l, t = head.args
            if not all(isinstance(x, Atom) for x in (s, l, t)):
                raise KnowledgeError(f"edge endpoints and label must be atoms: {head!r}")
            if self.add_edge(s, l, t):
                count += 1
        return count

    def __len__(self):
        return len(self.edges)


def transitive_closure(
    g: SemanticGraph, label: Atom, start: Atom
) -> tuple[set, int]:
    """Nodes reachable from start via one or more `label` edges, breadth
    first, plus the number of nodes expanded."""
    if start not in g.nodes:
        raise KnowledgeError(f"unknown start node: {start!r}")
    reached: dict[Atom, None] = {}
    frontier = [start]
    expanded = 0
    while frontier:
        nxt = []
        for node in frontier:
            expanded += 1
            for succ in g.out(node, label):
                if succ not in reached:
                    reached[succ] = None
                    nxt.append(succ)
        frontier = nxt
    return set(reached), expanded


def subgraph_match(pattern, g: SemanticGraph) -> list[Bindings]:
    """All bindings of pattern variables to nodes such that every pattern
    edge (source, label, target) exists in g.

    Pattern edges are matched in the given order; candidate nodes are tried
    in symbol-id order, so results are deterministic. Labels must be ground.
    """
    pattern = list(pattern)
    if not pattern:
        raise KnowledgeError("empty pattern")
    for s, l, t in pattern:
        if not isinstance(l, Atom):
            raise KnowledgeError(f"pattern labels must be ground atoms: {l!r}")
    results: list[Bindings] = []
    env: dict = {}

    def node_of(x):
        if isinstance(x, Variable):
            return env.get(x)
        if isinstance(x, Atom):
            return x
        raise KnowledgeError(f"pattern endpoints must be atoms or variables: {x!r}")

    def descend(i: int):
        if i == len(pattern):
            out = Bindings()
            for var, node in env.items():
                out.bind(var, node)
            results.append(out)
            return
        s, label, t = pattern[i]
        sn, tn = node_of(s), node_of(t)
        if sn is not None and tn is not None:
            if (sn, label, tn) in g.edges:
                descend(i + 1)
            return
        if sn is not None:
            for cand in g.out(sn, label):
                if tn is None:
                    env[t] = cand
                    descend(i + 1)
                    del env[t]
            return
        if tn is not None:
            for cand in g.into(tn, label):
                env[s] = cand
                descend(i + 1)
                del env[s]
            return
        for src, dst in g.edges_with_label(label):
            if s is t:
                if src is not dst:
                    continue
                env[s] = src
                descend(i + 1)
                del env[s]
            else:
                env[s] = src
                env[t] = dst
                descend(i + 1)
                del env[t]
                del env[s]

    descend(0)
    return results
