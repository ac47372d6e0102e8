"""Confidence-weighted belief bases with contradiction detection and revision.

Negation is the syntactic wrapper not/1 and only ground complements count as
contradictions. Revision is max-confidence-wins with a newer-timestamp tie
break; the rule is deliberately simple, deterministic, and kept behind
believe() so a different policy can be swapped in.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

from .terms import (
    Bindings,
    Compound,
    Term,
    TermStore,
    functor_key,
    is_ground,
    term_text,
    unify_counted,
)

ACCEPTED = "accepted"
REVISED = "revised"
REJECTED = "rejected"

PERCEIVED = "perceived"
INFERRED = "inferred"
NEURAL = "neural"


def told(agent_id: int) -> str:
    return f"told({agent_id})"


class BeliefError(Exception):
    pass


@dataclass
class Belief:
    content: Term
    confidence: float
    provenance: str
    cycle: int
    seq: int = 0
    ground: bool = True

    def __repr__(self):
        return f"{term_text(self.content)}@{self.confidence:g}"


@dataclass
class BelieveOutcome:
    outcome: str  # accepted | revised | rejected
    scanned: int  # beliefs examined for contradiction (timing model)
    conflict: Optional[Belief] = None
    contradiction: bool = False


def normalize(content: Term, store: TermStore) -> Term:
    """Strip double negations: not(not(x)) = x."""
    while (
        isinstance(content, Compound)
        and content.functor == "not"
        and len(content.args) == 1
    ):
        inner = content.args[0]
        if (
            isinstance(inner, Compound)
            and inner.functor == "not"
            and len(inner.args) == 1
        ):
            content = inner.args[0]
        else:
            return content
    return content


def complement_of(content: Term, store: TermStore) -> Term:
    n = normalize(content, store)
    if isinstance(n, Compound) and n.functor == "not" and len(n.args) == 1:
        return n.args[0]
    return store.compound("not", [n])


class BeliefBase:
    """Beliefs indexed by (functor, arity) with a contradiction log.

    The base never simultaneously holds a ground belief and its ground
    complement: believe() resolves the conflict on insert and logs it.
    """

    def __init__(self, store: TermStore):
        self.store = store
        self._index: dict[tuple, dict[Term, Belief]] = {}
        self.conflict_log: list[tuple[Belief, Belief, int]] = []
        self.version = 0
        self._seq = 0

    def __len__(self):
        return sum(len(b) for b in self._index.values())

    def beliefs(self) -> list[Belief]:
        out = []
        for bucket in self._index.values():
            out.extend(bucket.values())
        out.sort(key=lambda b: b.seq)
        return out

    def contents(self) -> list[Term]:
        return [b.content for b in self.beliefs()]

    def positive_ground_contents(self) -> list[Term]:
        """Ground, non-negated contents in insertion order (planner state)."""
        return [
            b.content
            for b in self.beliefs()
            if b.ground
            and not (
                isinstance(b.content, Compound)
                and b.content.functor == "not"
                and len(b.content.args) == 1
            )
        ]

    def detect_contradiction(self, candidate: Term) -> Optional[Belief]:
        """First indexed belief whose negation-normal form is the ground
        complement of the candidate; no state change."""
        n = normalize(candidate, self.store)
        if not is_ground(n):
            return None
        comp = complement_of(n, self.store)
        bucket = self._index.get(functor_key(comp))
        if not bucket:
            return None
        for belief in bucket.values():  # linear scan: models datapath probe
            if belief.content is comp:
                return belief
        return None

    def _scan_count(self, content: Term) -> int:
        comp = complement_of(content, self.store)
        return len(self._index.get(functor_key(comp), ()))

    def believe(
        self, content: Term, confidence: float, provenance: str, now: int
    ) -> BelieveOutcome:
        """Insert a belief, resolving contradictions by confidence.

        Higher confidence wins; ties go to the newer timestamp. Re-asserting
        identical content raises the confidence to the max of old and new.
        """
        if not (0.0 <= confidence <= 1.0):
            raise BeliefError(f"confidence out of range: {confidence}")
        content = normalize(content, self.store)
        ground = is_ground(content)
        key = functor_key(content)
        bucket = self._index.setdefault(key, {})
        scanned = self._scan_count(content) if ground else 0
        self.version += 1

        existing = bucket.get(content)
        if existing is not None:
            existing.confidence = max(existing.confidence, confidence)
            existing.cycle = now
            self._seq += 1
            existing.seq = self._seq
            return BelieveOutcome(ACCEPTED, scanned)

        self._seq += 1
        candidate = Belief(content, confidence, provenance, now, self._seq, ground)

        rival = self.detect_contradiction(content) if ground else None
        if rival is None:
            bucket[content] = candidate
            return BelieveOutcome(ACCEPTED, scanned)

        new_wins = confidence > rival.confidence or (
            confidence == rival.confidence and now >= rival.cycle
        )
        if new_wins:
            del self._index[functor_key(rival.content)][rival.content]
            bucket[content] = candidate
            self.conflict_log.append((candidate, rival, now))
            return BelieveOutcome(REVISED, scanned, rival, contradiction=True)
        self.conflict_log.append((rival, candidate, now))
        return BelieveOutcome(REJECTED, scanned, rival, contradiction=True)

    def query(self, pattern: Term) -> list[tuple[Belief, Bindings]]:
        """Beliefs unifying with the pattern, by descending confidence then
        recency."""
        from .terms import Variable

        if isinstance(pattern, Variable):
            candidates = self.beliefs()
        else:
            candidates = list(self._index.get(functor_key(pattern), {}).values())
        matches = []
        for belief in candidates:
            b = Bindings()
            ok, _ = unify_counted(pattern, belief.content, b)
            if ok:
                matches.append((belief, b))
        matches.sort(key=lambda mb: (-mb[0].confidence, -mb[0].cycle, -mb[0].seq))
        return matches

    def remove(self, content: Term) -> bool:
        content = normalize(content, self.store)
        bucket = self._index.get(functor_key(content))
        if bucket and content in bucket:
            del bucket[content]
            self.version += 1
            return True
        return False

    def holds(self, content: Term) -> bool:
        bucket = self._index.get(functor_key(content))
        return bool(bucket) and content in bucket

    def snapshot(self) -> dict:
        return {
            "beliefs": [
                (b.content, b.confidence, b.provenance, b.cycle, b.seq, b.ground)
                for b in self.beliefs()
            ],
            "log": list(self.conflict_log),
            "version": self.version,
            "seq": self._seq,
        }

    def restore_snapshot(self, snap: dict):
        self._index.clear()
        for content, conf, prov, cycle, seq, ground in snap["beliefs"]:
            self._index.setdefault(functor_key(content), {})[content] = Belief(
                content, conf, prov, cycle, seq, ground
            )
        self.conflict_log = list(snap["log"])
        self.version = snap["version"]
        self._seq = snap["seq"]

    def dump_jsonl(self) -> str:
        lines = [
            json.dumps(
                {
                    "content": term_text(b.content),
                    "confidence": b.confidence,
                    "provenance": b.provenance,
                    "cycle": b.cycle,
                },
                sort_keys=True,
            )
            for b in self.beliefs()
        ]
        return "\n".join(lines) + ("\n" if lines else "")
