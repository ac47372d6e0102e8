"""STRIPS planning: domains, grounded A* search, hmax, and plan validation.

States are frozensets of ground literals under the closed-world assumption.
Search is forward A* over fully grounded operator instances with unit costs;
with the hmax heuristic (admissible and consistent) returned plans are
optimal in length. Tie-breaking is (f, h, FIFO insertion order), so results
are deterministic. validate_plan() simulates plans with code independent of
the search and serves as the internal oracle.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Optional

from .terms import (
    Atom,
    Compound,
    Term,
    TermStore,
    Variable,
    is_ground,
    term_text,
    term_vars,
    tokenize,
)

INF = float("inf")


class PlanningError(Exception):
    pass


class Unsolvable(PlanningError):
    def __init__(self, expansions: int):
        super().__init__(f"search space exhausted after {expansions} expansions")
        self.expansions = expansions


class ExpansionBudgetExceeded(PlanningError):
    def __init__(self, expansions: int):
        super().__init__(f"expansion budget exceeded at {expansions}")
        self.expansions = expansions


@dataclass(frozen=True)
class Operator:
    name: str
    params: tuple  # Variables
    pre: tuple  # literals over params
    add: tuple
    delete: tuple

    def validate(self):
        if set(self.add) & set(self.delete):
            raise PlanningError(f"operator {self.name}: add and delete sets overlap")
        allowed = {v.handle for v in self.params}
        for group, lits in (("pre", self.pre), ("add", self.add), ("del", self.delete)):
            for lit in lits:
                for v in term_vars(lit):
                    if v.handle not in allowed:
                        raise PlanningError(
                            f"operator {self.name}: variable {v!r} in {group} "
                            "does not appear in the parameter list"
                        )


class PlanningDomain:
    def __init__(self, store: TermStore, operators=()):
        self.store = store
        self.operators: list[Operator] = []
        self._by_name: dict[str, Operator] = {}
        for op in operators:
            self.add_operator(op)

    def add_operator(self, op: Operator):
        op.validate()
        if op.name in self._by_name:
            raise PlanningError(f"duplicate operator name: {op.name}")
        self.operators.append(op)
        self._by_name[op.name] = op

    def operator(self, name: str) -> Optional[Operator]:
        return self._by_name.get(name)

    def constants(self) -> list[Atom]:
        """Atoms mentioned inside operator literals, in first-seen order."""
        seen: dict[Atom, None] = {}
        for op in self.operators:
            for lit in (*op.pre, *op.add, *op.delete):
                for node in _atoms_of(lit):
                    seen.setdefault(node, None)
        return list(seen)


def _atoms_of(t: Term):
    stack = [t]
    while stack:
        n = stack.pop()
        if isinstance(n, Atom):
            yield n
        elif isinstance(n, Compound):
            stack.extend(reversed(n.args))


@dataclass(frozen=True)
class PlanningProblem:
    objects: tuple  # Atoms
    init: frozenset  # ground literals
    goal: frozenset  # ground literals

    def validate(self):
        for lit in itertools.chain(self.init, self.goal):
            if not is_ground(lit):
                raise PlanningError(f"init/goal literal not ground: {term_text(lit)}")


@dataclass
class Plan:
    steps: tuple  # ground operator-instance terms, in order
    expansions: int = 0

    @property
    def cost(self) -> int:
        return len(self.steps)

    def __repr__(self):
        return "[%s]" % ", ".join(term_text(s) for s in self.steps)


@dataclass
class PlanConfig:
    heuristic: str = "hmax"  # hmax (admissible) | goal_count (faster)
    max_expansions: int = 200_000


@dataclass(frozen=True)
class GroundAction:
    term: Term
    pre: tuple
    add: tuple
    delete: tuple


def _substitute(lit: Term, env: dict, store: TermStore) -> Term:
    if isinstance(lit, Variable):
        return env[lit]
    if isinstance(lit, Compound):
        return store.compound(lit.functor, [_substitute(a, env, store) for a in lit.args])
    return lit


def ground_actions(domain: PlanningDomain, objects) -> list[GroundAction]:
    """All operator instances over the objects, in a deterministic order:
    operator declaration order, then object-tuple lexicographic order."""
    store = domain.store
    objects = list(objects)
    out = []
    for op in domain.operators:
        for combo in itertools.product(objects, repeat=len(op.params)):
            env = dict(zip(op.params, combo))
            term = (
                store.compound(op.name, combo) if combo else store.atom(op.name)
            )
            out.append(
                GroundAction(
                    term,
                    tuple(_substitute(p, env, store) for p in op.pre),
                    tuple(_substitute(a, env, store) for a in op.add),
                    tuple(_substitute(d, env, store) for d in op.delete),
                )
            )
    return out


class GroundTask:
    def __init__(self, problem: PlanningProblem, domain: PlanningDomain):
        problem.validate()
        self.problem = problem
        self.domain = domain
        self.init = frozenset(problem.init)
        self.goal = frozenset(problem.goal)
        self.actions = ground_actions(domain, problem.objects)
        self._by_term = {a.term: a for a in self.actions}

    def applicable(self, state: frozenset):
        for a in self.actions:
            if all(p in state for p in a.pre):
                yield a

    @staticmethod
    def apply(state: frozenset, action: GroundAction) -> frozenset:
        return (state - frozenset(action.delete)) | frozenset(action.add)

    def action_for(self, term: Term) -> Optional[GroundAction]:
        return self._by_term.get(term)

    def hmax(self, state: frozenset) -> float:
        """Delete-relaxation hmax of the task goal from `state`."""
        return hmax_value(state, self.goal, self.actions)


def hmax_value(state, goal, actions) -> float:
    cost: dict[Term, float] = {f: 0 for f in state}
    goal = list(goal)
    if all(g in cost for g in goal):
        return 0
    changed = True
    while changed:
        changed = False
        for a in actions:
            c = 0
            ok = True
            for p in a.pre:
                pc = cost.get(p)
                if pc is None:
                    ok = False
                    break
                if pc > c:
                    c = pc
            if not ok:
                continue
            c += 1
            for f in a.add:
                if cost.get(f, INF) > c:
                    cost[f] = c
                    changed = True
    return max((cost.get(g, INF) for g in goal), default=0)


def hmax(state, goal, domain: PlanningDomain, objects=None) -> float:
    """Standalone hmax; grounds the domain over `objects` (or over the atoms
    appearing in state/goal plus domain constants)."""
    if objects is None:
        seen: dict[Atom, None] = {}
        for lit in itertools.chain(state, goal):
            for a in _atoms_of(lit):
                seen.setdefault(a, None)
        for a in domain.constants():
            seen.setdefault(a, None)
        objects = list(seen)
    return hmax_value(frozenset(state), frozenset(goal), ground_actions(domain, objects))


def goal_count(state, goal) -> int:
    return sum(1 for g in goal if g not in state)


def plan(
    problem: PlanningProblem,
    domain: PlanningDomain,
    config: Optional[PlanConfig] = None,
) -> Plan:
    """A* forward search; raises Unsolvable or ExpansionBudgetExceeded."""
    config = config or PlanConfig()
    task = GroundTask(problem, domain)
    return plan_task(task, config)


def plan_task(task: GroundTask, config: Optional[PlanConfig] = None) -> Plan:
    config = config or PlanConfig()
    if config.heuristic == "hmax":
        h_fn = task.hmax
    elif config.heuristic == "goal_count":
        h_fn = lambda s: goal_count(s, task.goal)
    else:
        raise PlanningError(f"unknown heuristic: {config.heuristic}")

    init = task.init
    h0 = h_fn(init)
    counter = itertools.count()
    open_heap = [(h0, h0, next(counter), init, ())]
    best_g: dict[frozenset, int] = {init: 0}
    expansions = 0
    while open_heap:
        f, h, _, state, path = heapq.heappop(open_heap)
        g = f - h
        if g > best_g.get(state, INF):
            continue  # stale entry
        if task.goal <= state:
            return Plan(steps=path, expansions=expansions)
        if expansions >= config.max_expansions:
            raise ExpansionBudgetExceeded(expansions)
        expansions += 1
        for action in task.applicable(state):
            succ = task.apply(state, action)
            g2 = g + 1
            if g2 < best_g.get(succ, INF):
                h2 = h_fn(succ)
                if h2 == INF:
                    continue
                best_g[succ] = g2
                heapq.heappush(
                    open_heap, (g2 + h2, h2, next(counter), succ, path + (action.term,))
                )
    raise Unsolvable(expansions)


@dataclass
class PlanCheck:
    valid: bool
    failed_step: Optional[int] = None
    missing: tuple = ()
    reason: str = ""

    def __bool__(self):
        return self.valid


def validate_plan(
    steps, problem: PlanningProblem, domain: PlanningDomain
) -> PlanCheck:
    """Simulate sequential application; report the first failing step and its
    unmet preconditions. Independent of the search code paths."""
    task = GroundTask(problem, domain)
    state = set(task.init)
    for k, step in enumerate(steps):
        action = task.action_for(step)
        if action is None:
            return PlanCheck(False, k, (), f"unknown ground action {term_text(step)}")
        missing = [p for p in action.pre if p not in state]
        if missing:
            missing.sort(key=lambda t: t.handle)
            return PlanCheck(False, k, tuple(missing), "missing preconditions")
        state -= set(action.delete)
        state |= set(action.add)
    unmet = [g for g in task.goal if g not in state]
    if unmet:
        unmet.sort(key=lambda t: t.handle)
        return PlanCheck(False, len(tuple(steps)), tuple(unmet), "goal not satisfied")
    return PlanCheck(True)


def _parse_literal_list(text: str, store: TermStore) -> list[Term]:
    text = text.strip()
    if not text:
        return []
    tokens = list(tokenize(text))
    lits = []
    i = 0

    def parse_at():
        nonlocal i
        from .terms import TermSyntaxError

        kind, value, line, col = tokens[i]
        i += 1
        if kind == "int":
            return store.num(int(value))
        if kind == "var":
            return store.var(value)
        if kind == "atom":
            if tokens[i][0] == "punct" and tokens[i][1] == "(":
                i += 1
                args = [parse_at()]
                while tokens[i][0] == "punct" and tokens[i][1] == ",":
                    i += 1
                    args.append(parse_at())
                k, v, l, c = tokens[i]
                if not (k == "punct" and v == ")"):
                    raise TermSyntaxError("expected ')'", l, c)
                i += 1
                return store.compound(value, args)
            return store.atom(value)
        raise TermSyntaxError(f"expected a literal, found {value or kind!r}", line, col)

    from .terms import TermSyntaxError

    while tokens[i][0] != "eof":
        lits.append(parse_at())
        if tokens[i][0] == "punct" and tokens[i][1] == ",":
            i += 1
        elif tokens[i][0] != "eof":
            k, v, l, c = tokens[i]
            raise TermSyntaxError(f"expected ',' between literals, found {v!r}", l, c)
    return lits


def parse_domain(text: str, store: TermStore) -> PlanningDomain:
    """Parse `.rpd` text, one operator per line:

        operator pickup(X) pre: clear(X), hand_empty add: holding(X) del: clear(X)
    """
    domain = PlanningDomain(store)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("%", 1)[0].strip()
        if not line:
            continue
        if not line.startswith("operator "):
            raise PlanningError(f"line {lineno}: expected 'operator ...'")
        rest = line[len("operator "):]
        try:
            head_txt, rest = rest.split("pre:", 1)
            pre_txt, rest = rest.split("add:", 1)
            add_txt, del_txt = rest.split("del:", 1)
        except ValueError:
            raise PlanningError(
                f"line {lineno}: operator needs 'pre:', 'add:' and 'del:' sections"
            ) from None
        head = store.parse(head_txt.strip())
        if isinstance(head, Compound):
            name, params = head.functor, head.args
            if not all(isinstance(p, Variable) for p in params):
                raise PlanningError(f"line {lineno}: parameters must be variables")
        elif isinstance(head, Atom):
            name, params = head.name, ()
        else:
            raise PlanningError(f"line {lineno}: bad operator head")
        domain.add_operator(
            Operator(
                name,
                tuple(params),
                tuple(_parse_literal_list(pre_txt, store)),
                tuple(_parse_literal_list(add_txt, store)),
                tuple(_parse_literal_list(del_txt, store)),
            )
        )
    return domain


def parse_problem(text: str, store: TermStore) -> PlanningProblem:
    """Parse `.rpp` text: `object a`, `init on(a,b)`, `goal clear(a)` lines
    (each may carry a comma-separated list)."""
    objects: list[Atom] = []
    init: list[Term] = []
    goal: list[Term] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("%", 1)[0].strip()
        if not line:
            continue
        try:
            keyword, rest = line.split(None, 1)
        except ValueError:
            raise PlanningError(f"line {lineno}: expected 'object|init|goal ...'")
        lits = _parse_literal_list(rest, store)
        if keyword == "object":
            for lit in lits:
                if not isinstance(lit, Atom):
                    raise PlanningError(f"line {lineno}: objects must be atoms")
                objects.append(lit)
        elif keyword == "init":
            init.extend(lits)
        elif keyword == "goal":
            goal.extend(lits)
        else:
            raise PlanningError(f"line {lineno}: unknown keyword {keyword!r}")
    problem = PlanningProblem(tuple(objects), frozenset(init), frozenset(goal))
    problem.validate()
    return problem
