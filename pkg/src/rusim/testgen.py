"""Seeded generators for verification inputs: random term pairs for the
unification oracle suite and random Datalog KBs whose backward enumeration
terminates (relation data forms a DAG, so SLD recursion bottoms out).
"""

from __future__ import annotations

import random

from .knowledge import KnowledgeBase
from .terms import Term, TermStore

_ATOMS = ("a", "b", "c", "d", "e")
_FUNCTORS = ("f", "g", "h")
_VARS = ("X", "Y", "Z", "W")


def random_term(rng: random.Random, store: TermStore, budget: int = 12) -> Term:
    """Random term of at most `budget` cells sharing a small variable pool."""

    def build(cells_left: int) -> tuple[Term, int]:
        roll = rng.random()
        if cells_left <= 1 or roll < 0.45:
            kind = rng.randrange(3)
            if kind == 0:
                return store.atom(rng.choice(_ATOMS)), 1
            if kind == 1:
                return store.var(rng.choice(_VARS)), 1
            return store.num(rng.randrange(0, 5)), 1
        arity = rng.randrange(1, min(3, cells_left - 1) + 1)
        used = 1
        args = []
        for i in range(arity):
            child, c = build(max(1, (cells_left - used) // (arity - i)))
            args.append(child)
            used += c
        return store.compound(rng.choice(_FUNCTORS), args), used

    term, _ = build(budget)
    return term


def random_term_pair(rng: random.Random, store: TermStore, budget: int = 12):
    """A pair biased toward near-unifiable shapes (shared variable pool)."""
    t1 = random_term(rng, store, budget)
    if rng.random() < 0.3:
        # structurally related second term: rebuild with mutations
        t2 = _mutate(t1, rng, store)
    else:
        t2 = random_term(rng, store, budget)
    return t1, t2


def _mutate(t: Term, rng: random.Random, store: TermStore) -> Term:
    from .terms import Atom, Compound, Number, Variable

    if rng.random() < 0.25:
        return random_term(rng, store, 4)
    if isinstance(t, Compound):
        args = [
            _mutate(a, rng, store) if rng.random() < 0.5 else a for a in t.args
        ]
        return store.compound(t.functor, args)
    if isinstance(t, (Atom, Number)) and rng.random() < 0.3:
        return store.var(rng.choice(_VARS))
    return t


def random_datalog_kb(
    rng: random.Random,
    store: TermStore,
    constants: int = 10,
    facts: int = 60,
    max_facts: int = 200,
) -> KnowledgeBase:
    """Seeded Datalog KB: DAG-shaped binary relations (edges only go from a
    lower-numbered constant to a higher one) plus rules drawn from safe,
    terminating templates: transitive closure and relation joins."""
    kb = KnowledgeBase(store)
    consts = [store.atom(f"k{i}") for i in range(constants)]
    n_rel = rng.randrange(1, 4)
    rels = [f"e{r}" for r in range(n_rel)]
    seen = set()
    count = 0
    target = min(facts, max_facts)
    attempts = 0
    while count < target and attempts < target * 10:
        attempts += 1
        i = rng.randrange(0, constants - 1)
        j = rng.randrange(i + 1, constants)
        rel = rng.choice(rels)
        if (rel, i, j) in seen:
            continue
        seen.add((rel, i, j))
        kb.assert_clause(store.compound(rel, [consts[i], consts[j]]))
        count += 1

    X, Y, Z = store.var("X"), store.var("Y"), store.var("Z")
    # transitive closure over the first relation
    e0 = rels[0]
    kb.assert_clause(
        store.compound("path", [X, Y]), [store.compound(e0, [X, Y])]
    )
    kb.assert_clause(
        store.compound("path", [X, Y]),
        [store.compound(e0, [X, Z]), store.compound("path", [Z, Y])],
    )
    # a join rule over two (possibly equal) relations
    ra = rng.choice(rels)
    rb = rng.choice(rels)
    kb.assert_clause(
        store.compound("joined", [X, Y]),
        [store.compound(ra, [X, Z]), store.compound(rb, [Z, Y])],
    )
    # a projection-style rule
    kb.assert_clause(
        store.compound("origin", [X]), [store.compound("path", [X, consts[-1]])]
    )
    return kb
