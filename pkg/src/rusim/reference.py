"""Slow, independent reference implementations used to cross-check engines.

Each function here deliberately avoids the data structures and algorithms of
the module it checks: the unifier is the textbook substitution-composition
procedure, forward chaining is naive (not semi-naive) iteration, planning is
plain breadth-first search over the full state graph, and reachability is
boolean adjacency-matrix powering. `ru verify` and the test suite compare
engine output against these.
"""

from __future__ import annotations

from collections import deque
from typing import Optional

from .knowledge import KnowledgeBase, SemanticGraph, check_datalog
from .planner import GroundTask, PlanningDomain, PlanningProblem
from .terms import Atom, Compound, Number, Term, TermStore, Variable


def _subst(t: Term, s: dict) -> Term:
    if isinstance(t, Variable):
        return s.get(t, t)
    if isinstance(t, Compound):
        return t.store.compound(t.functor, [_subst(a, s) for a in t.args])
    return t


def _occurs(v: Variable, t: Term) -> bool:
    if t is v:
        return True
    if isinstance(t, Compound):
        return any(_occurs(v, a) for a in t.args)
    return False


def naive_unify(t1: Term, t2: Term) -> Optional[dict]:
    """Textbook unification by substitution composition; returns a mapping
    Variable -> Term or None."""
    unifier: dict = {}
    eqns = [(t1, t2)]
    while eqns:
        a, b = eqns.pop()
        a = _subst(a, unifier)
        b = _subst(b, unifier)
        if a is b:
            continue
        if isinstance(a, Compound) and isinstance(b, Compound):
            if a.functor_id != b.functor_id or len(a.args) != len(b.args):
                return None
            eqns.extend(zip(a.args, b.args))
            continue
        if not isinstance(a, Variable):
            a, b = b, a
        if not isinstance(a, Variable):
            return None
        if _occurs(a, b):
            return None
        step = {a: b}
        eqns = [(_subst(l, step), _subst(r, step)) for l, r in eqns]
        for v in list(unifier):
            unifier[v] = _subst(unifier[v], step)
        unifier[a] = b
    return unifier


def one_way_match(general: Term, specific: Term, env: Optional[dict] = None) -> Optional[dict]:
    """Match `general` onto `specific` binding only general's variables."""
    env = {} if env is None else env
    stack = [(general, specific)]
    while stack:
        g, s = stack.pop()
        if isinstance(g, Variable):
            bound = env.get(g)
            if bound is None:
                env[g] = s
            elif bound is not s:
                return None
            continue
        if isinstance(g, Compound) and isinstance(s, Compound):
            if g.functor_id != s.functor_id or len(g.args) != len(s.args):
                return None
            stack.extend(zip(g.args, s.args))
            continue
        if g is not s:
            return None
    return env


def substitutions_equivalent(t1: Term, t2: Term, sub_a: dict, sub_b: dict) -> bool:
    """True when both substitutions instantiate (t1, t2) to terms that match
    each other both ways, i.e. they are equally general unifiers."""
    pair_a = (_subst(t1, sub_a), _subst(t2, sub_a))
    pair_b = (_subst(t1, sub_b), _subst(t2, sub_b))
    env: dict = {}
    for a, b in zip(pair_a, pair_b):
        env = one_way_match(a, b, env)
        if env is None:
            return False
    env = {}
    for a, b in zip(pair_a, pair_b):
        env = one_way_match(b, a, env)
        if env is None:
            return False
    return True


def naive_forward_closure(kb: KnowledgeBase) -> set:
    """Naive (full re-join each round) forward chaining to fixpoint; returns
    all ground facts, base facts included."""
    check_datalog(kb)
    store = kb.store
    facts = {c.head for c in kb.clauses() if not c.body}
    rules = [c for c in kb.clauses() if c.body]

    def matches(lit, fact, env):
        if isinstance(lit, Compound) != isinstance(fact, Compound):
            return None
        if isinstance(lit, Compound):
            if lit.functor_id != fact.functor_id or len(lit.args) != len(fact.args):
                return None
            pairs = zip(lit.args, fact.args)
        else:
            if lit is not fact:
                return None
            pairs = ()
        out = dict(env)
        for p, f in pairs:
            if isinstance(p, Variable):
                if p in out:
                    if out[p] is not f:
                        return None
                else:
                    out[p] = f
            elif p is not f:
                return None
        return out

    changed = True
    while changed:
        changed = False
        for rule in rules:
            envs = [{}]
            for lit in rule.body:
                nxt = []
                for env in envs:
                    for fact in sorted(facts, key=lambda t: t.handle):
                        m = matches(lit, fact, env)
                        if m is not None:
                            nxt.append(m)
                envs = nxt
                if not envs:
                    break
            for env in envs:
                head = _subst(rule.head, env)
                if head not in facts:
                    facts.add(head)
                    changed = True
    return facts


def enumerate_backward(kb: KnowledgeBase, max_steps: int = 2_000_000) -> set:
    """All ground atoms provable by the backward engine, enumerated to
    exhaustion, one fresh query per predicate."""
    from .knowledge import solve_backward

    store = kb.store
    provable = set()
    for fid, arity in sorted(kb.predicates()):
        name = store.symbol_name(fid)
        if arity == 0:
            goal = store.atom(name)
        else:
            goal = store.compound(name, [store.fresh_var() for _ in range(arity)])
        stream = solve_backward(kb, goal, max_steps=max_steps)
        while True:
            sol = stream.next()
            if sol is None:
                break
            provable.add(sol)
    return provable


def closure_by_matrix_powers(g: SemanticGraph, label: Atom, start: Atom) -> set:
    """Start row of the label-specific reachability matrix via boolean
    matrix powering."""
    nodes = sorted(g.nodes, key=lambda a: a.name_id)
    pos = {n: i for i, n in enumerate(nodes)}
    n = len(nodes)
    adj = [[False] * n for _ in range(n)]
    for (s, l, t) in g.edges:
        if l is label:
            adj[pos[s]][pos[t]] = True
    reach = [row[:] for row in adj]
    for _ in range(max(0, n - 1)):
        nxt = [row[:] for row in reach]
        grew = False
        for i in range(n):
            for k in range(n):
                if reach[i][k]:
                    for j in range(n):
                        if adj[k][j] and not nxt[i][j]:
                            nxt[i][j] = True
                            grew = True
        reach = nxt
        if not grew:
            break
    row = reach[pos[start]]
    return {nodes[j] for j in range(n) if row[j]}


def bfs_optimal_plan(
    problem: PlanningProblem,
    domain: PlanningDomain,
    max_depth: int = 10,
    max_states: int = 2_000_000,
) -> Optional[tuple]:
    """Shortest plan by breadth-first search over the full state graph, or
    None when no plan of length <= max_depth exists."""
    task = GroundTask(problem, domain)
    if task.goal <= task.init:
        return ()
    visited = {task.init}
    frontier = deque([(task.init, ())])
    while frontier:
        state, path = frontier.popleft()
        if len(path) >= max_depth:
            continue
        for action in task.applicable(state):
            succ = task.apply(state, action)
            if succ in visited:
                continue
            new_path = path + (action.term,)
            if task.goal <= succ:
                return new_path
            visited.add(succ)
            if len(visited) > max_states:
                raise MemoryError("BFS oracle state budget exceeded")
            frontier.append((succ, new_path))
    return None


def bfs_optimal_length(
    problem: PlanningProblem, domain: PlanningDomain, max_depth: int = 10
) -> Optional[int]:
    plan = bfs_optimal_plan(problem, domain, max_depth=max_depth)
    return None if plan is None else len(plan)
