"""Modeled memory hierarchy: L1 belief cache, L2 knowledge cache, working
memory, and the unbounded heap.

Terms are cached by handle, one term cell per line. The L1 set index is the
semantic index (functor symbol * 31 + arity) mod sets, so lookups of the
same predicate family contend for the same sets; L2 indexes by handle.
Working memory tracks term cells against a fixed budget with LRU eviction.
Probes go L1 -> L2 -> WM -> heap, first hit wins, and misses insert into all
upper levels (insertion-inclusive; evictions do not back-invalidate).
"""

from __future__ import annotations

from .config import MachineConfig
from .terms import Compound, Term, functor_key


class SetAssociativeCache:
    def __init__(self, lines: int, assoc: int):
        if lines % assoc:
            raise ValueError("line count must be a multiple of associativity")
        self.lines = lines
        self.assoc = assoc
        self.sets = lines // assoc
        self._ways: list[dict] = [dict() for _ in range(self.sets)]  # key -> stamp
        self._stamp = 0
        self.hits = 0
        self.misses = 0

    def access(self, key, set_index: int) -> bool:
        ways = self._ways[set_index % self.sets]
        self._stamp += 1
        if key in ways:
            ways[key] = self._stamp
            self.hits += 1
            return True
        self.misses += 1
        if len(ways) >= self.assoc:
            victim = min(ways, key=ways.__getitem__)
            del ways[victim]
        ways[key] = self._stamp
        return False

    @property
    def accesses(self) -> int:
        return self.hits + self.misses

    def snapshot(self):
        return ([dict(w) for w in self._ways], self._stamp, self.hits, self.misses)

    def restore(self, snap):
        ways, stamp, hits, misses = snap
        self._ways = [dict(w) for w in ways]
        self._stamp = stamp
        self.hits = hits
        self.misses = misses


class MemoryModel:
    LEVELS = ("l1", "l2", "wm", "heap")

    def __init__(self, config: MachineConfig):
        self.config = config
        self.l1 = SetAssociativeCache(config.l1_lines, config.l1_assoc)
        self.l2 = SetAssociativeCache(config.l2_lines, config.l2_assoc)
        self._wm: dict[int, int] = {}  # handle -> cells, LRU by insertion order
        self._wm_cells = 0
        self.wm_hits = 0
        self.heap_accesses = 0

    def _sem_index(self, t: Term) -> int:
        fid, arity = functor_key(t)
        return (fid * 31 + arity) % self.l1.sets

    def charge(self, t: Term) -> tuple[int, str]:
        """Charge one access for the term's cell; returns (latency, level)."""
        cfg = self.config
        key = t.handle
        if self.l1.access(key, self._sem_index(t)):
            return cfg.l1_latency, "l1"
        if self.l2.access(key, key % self.l2.sets):
            return cfg.l2_latency, "l2"
        if key in self._wm:
            # refresh LRU position
            cells = self._wm.pop(key)
            self._wm[key] = cells
            self.wm_hits += 1
            return cfg.wm_latency, "wm"
        self.heap_accesses += 1
        self._wm_insert(key, 1)  # one cell per node; children charge separately
        return cfg.heap_latency, "heap"

    def _wm_insert(self, key: int, cells: int):
        self._wm[key] = cells
        self._wm_cells += cells
        while self._wm_cells > self.config.wm_cells and self._wm:
            victim, vcells = next(iter(self._wm.items()))
            del self._wm[victim]
            self._wm_cells -= vcells

    def charge_term(self, t: Term) -> tuple[int, str]:
        """Charge one access per distinct cell of the term; returns the total
        latency and the slowest level touched."""
        from .terms import iter_nodes

        total = 0
        worst = 0
        for node in iter_nodes(t):
            latency, level = self.charge(node)
            total += latency
            worst = max(worst, self.LEVELS.index(level))
        return total, self.LEVELS[worst]

    def stats(self) -> dict:
        return {
            "l1_hits": self.l1.hits,
            "l1_misses": self.l1.misses,
            "l2_hits": self.l2.hits,
            "l2_misses": self.l2.misses,
            "wm_hits": self.wm_hits,
            "heap_accesses": self.heap_accesses,
        }

    def snapshot(self):
        return (
            self.l1.snapshot(),
            self.l2.snapshot(),
            dict(self._wm),
            self._wm_cells,
            self.wm_hits,
            self.heap_accesses,
        )

    def restore(self, snap):
        l1, l2, wm, wm_cells, wm_hits, heap = snap
        self.l1.restore(l1)
        self.l2.restore(l2)
        self._wm = dict(wm)
        self._wm_cells = wm_cells
        self.wm_hits = wm_hits
        self.heap_accesses = heap
