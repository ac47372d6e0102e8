"""The core simulator: six-stage in-order pipeline execution of assembled
programs with cycle, cache, and energy accounting, plus checkpoint/rollback
and clause-prediction statistics.

Stage mapping. Perceive: fetch, decode, and operand read (RAW hazards on any
register or the flags stall here; there is no forwarding, so a reader waits
for the producer's writeback). Reason: engine execution, multi-cycle,
stalling everything upstream; all per-opcode work is charged here. Act and
State: one cycle each (action arbitration, belief/goal-stack mutation).
Memory: cache access charging, one access per term cell touched, occupancy
equal to the charged latency. Writeback: register retire and flag update,
in program order.

Reason-stage costs: UNIFY max(10, symbol comparisons); INFER 10 x resolution
steps, divided by the lane count when the clause predictor was right, plus a
5-cycle rollback penalty when it was wrong; NEXT like INFER but never
predicted; PLAN max(100, 10 x expansions / lanes); BELIEVE 5 + beliefs
scanned; PERCEIVE 5 + items scanned; COMMIT 5 + preconditions checked;
NEURAL trap overhead + backend latency; everything else 1 cycle.

Architectural effects execute once at Reason entry (engine state mutates
there; the in-order Reason stage serializes them) while register and flag
writes are buffered and applied at retire, which is what makes the RAW
stall rule sufficient.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import random
from dataclasses import dataclass, replace
from typing import Optional

from .belief import BeliefBase
from .cache import MemoryModel
from .config import MachineConfig
from .isa import Illegal, Imm, Instruction, Lit, MESSAGE_KINDS, Opcode, Program, Reg, Target
from .knowledge import KnowledgeBase, LimitExceeded, SolutionStream, solve_backward
from .metrics import CacheStats, MetricsReport, make_report
from .planner import (
    ExpansionBudgetExceeded,
    PlanConfig,
    PlanningDomain,
    PlanningProblem,
    Unsolvable,
    ground_actions,
    plan as plan_search,
)
from .terms import (
    Atom,
    Bindings,
    Compound,
    Term,
    TermStore,
    UnifyBudgetExceeded,
    is_ground,
    iter_nodes,
    unify_counted,
)

STAGES = ("perceive", "reason", "act", "state", "memory", "writeback")
_P, _R, _A, _S, _M, _W = range(6)

ENGINE_OPS = frozenset(
    {
        Opcode.UNIFY,
        Opcode.INFER,
        Opcode.NEXT,
        Opcode.PLAN,
        Opcode.BELIEVE,
        Opcode.PERCEIVE,
        Opcode.COMMIT,
        Opcode.NEURAL,
    }
)


class MachineError(Exception):
    pass


class CheckpointError(MachineError):
    pass


@dataclass(frozen=True)
class ARegSlot:
    """Action-register contents: a plan handle plus its execution status."""

    status: str = "empty"  # empty | planned | committed | failed
    steps: tuple = ()
    cursor: int = 0

    @property
    def current_action(self) -> Optional[Term]:
        if self.status == "planned" and self.cursor < len(self.steps):
            return self.steps[self.cursor]
        return None


@dataclass
class NeuralResult:
    response: Term
    confidence: float
    latency: int


class MockNeuralBackend:
    """Deterministic stand-in for a neural co-processor.

    The result is a pure function of (prompt, schema, seed): a keyed digest
    drives both the conformance draw and the latency draw. A conformant
    response instantiates the schema's variables; a non-conformant one is a
    fresh atom that cannot unify with a compound schema.
    """

    def __init__(self, seed: int = 0, latency: int = 5000,
                 latency_jitter: int = 0, conformance_prob: float = 1.0):
        self.seed = seed
        self.latency = latency
        self.latency_jitter = latency_jitter
        self.conformance_prob = conformance_prob

    def invoke(self, prompt: Term, schema: Term) -> NeuralResult:
        from .terms import term_text, term_vars

        key = hashlib.sha256(
            f"{self.seed}|{term_text(prompt)}|{term_text(schema)}".encode()
        ).digest()
        draw = int.from_bytes(key[:8], "little") / 2**64
        jitter = int.from_bytes(key[8:12], "little") % (self.latency_jitter + 1)
        latency = self.latency + jitter
        confidence = 0.5 + (int.from_bytes(key[12:16], "little") % 500) / 1000.0
        store = prompt.store
        if draw < self.conformance_prob:
            mapping = {}
            tag = int.from_bytes(key[16:20], "little") % 1000
            for i, v in enumerate(term_vars(schema)):
                mapping[v] = store.atom(f"r{tag}_{i}")
            response = _instantiate_vars(schema, mapping, store)
        else:
            tag = int.from_bytes(key[16:20], "little") % 1000
            response = store.atom(f"noise_{tag}")
        return NeuralResult(response, confidence, latency)


def _instantiate_vars(t: Term, mapping: dict, store: TermStore) -> Term:
    from .terms import Variable

    if isinstance(t, Variable):
        return mapping.get(t, t)
    if isinstance(t, Compound):
        return store.compound(t.functor, [_instantiate_vars(a, mapping, store) for a in t.args])
    return t


class _InFlight:
    __slots__ = (
        "pc", "instr", "remaining", "stall", "read_done", "vals",
        "writes", "reads", "out", "flags_out", "reason_cost",
        "mem_terms", "mem_level", "msg",
    )

    def __init__(self, pc: int, instr: Instruction, reads, writes):
        self.pc = pc
        self.instr = instr
        self.remaining = 1
        self.stall = None
        self.read_done = False
        self.vals = ()
        self.reads = reads
        self.writes = writes
        self.out = []  # buffered register writes, applied at retire
        self.flags_out = (None, None)
        self.reason_cost = 1
        self.mem_terms = []
        self.mem_level = None
        self.msg = None

    def copy(self) -> "_InFlight":
        c = _InFlight(self.pc, self.instr, self.reads, self.writes)
        c.remaining = self.remaining
        c.stall = self.stall
        c.read_done = self.read_done
        c.vals = self.vals
        c.out = list(self.out)
        c.flags_out = self.flags_out
        c.reason_cost = self.reason_cost
        c.mem_terms = list(self.mem_terms)
        c.mem_level = self.mem_level
        c.msg = self.msg
        return c


def _resources(instr: Instruction):
    """(reads, writes) register/flag resource sets for hazard detection."""
    op = instr.opcode
    o = instr.operands
    reads: set = set()
    writes: set = set()

    def r(i):
        return (o[i].bank, o[i].index)

    if op is Opcode.LOADT:
        writes.add(r(0))
    elif op is Opcode.MOV:
        reads.add(r(1)); writes.add(r(0))
    elif op is Opcode.UNIFY:
        writes.add(r(0)); reads.add(r(1)); reads.add(r(2)); writes.add("F")
    elif op is Opcode.INFER:
        writes.add(r(0)); reads.add(r(1)); writes.add(("C", 0)); writes.add("F")
    elif op is Opcode.NEXT:
        writes.add(r(0)); writes.add(("C", 0)); writes.add("F")
    elif op is Opcode.PLAN:
        writes.add(r(0)); reads.add(r(1)); writes.add("F")
    elif op is Opcode.BELIEVE:
        reads.add(r(0)); writes.add("F")
    elif op is Opcode.PERCEIVE:
        writes.add(r(0)); writes.add("F")
    elif op is Opcode.COMMIT:
        reads.add(r(0)); writes.add(r(0)); writes.add("F")
    elif op is Opcode.GPUSH:
        reads.add(r(0))
    elif op is Opcode.GPOP:
        writes.add(r(0)); writes.add("F")
    elif op in (Opcode.BRS, Opcode.BRK):
        reads.add("F")
    elif op is Opcode.SEND:
        reads.add((o[1].bank, o[1].index))
    elif op is Opcode.RECV:
        writes.add(r(0)); writes.add("F")
    elif op is Opcode.NEURAL:
        writes.add(r(0)); reads.add(r(1)); reads.add(r(2)); writes.add("F")
    return frozenset(reads), frozenset(writes)


@dataclass
class Checkpoint:
    """Serialized machine state; restore() replays it trace-equivalently."""

    program_fingerprint: str
    payload: dict


class Machine:
    """One agent core: registers, pipeline, engines, memory model, metrics."""

    def __init__(
        self,
        program: Program,
        store: TermStore,
        config: Optional[MachineConfig] = None,
        kb: Optional[KnowledgeBase] = None,
        domain: Optional[PlanningDomain] = None,
        beliefs: Optional[BeliefBase] = None,
        percepts: Optional[dict] = None,
        seed: int = 0,
        backend=None,
        trace_sink=None,
    ):
        program.validate()
        self.program = program
        self.store = store
        self.config = config or MachineConfig()
        self.kb = kb
        self.domain = domain
        self.beliefs = beliefs if beliefs is not None else BeliefBase(store)
        self.percepts = {k: list(v) for k, v in (percepts or {}).items()}
        self.seed = seed
        self.rng = random.Random(seed)
        self.backend = backend or MockNeuralBackend(seed=seed)
        self.trace_sink = trace_sink
        self.mem = MemoryModel(self.config)

        self.rb: list = [None] * 16
        self.rg: list = [None] * 8
        self.rg_prio: list = [0] * 8
        self.rc: list = [None] * 4
        self.ra: list = [ARegSlot() for _ in range(8)]
        self.flag_s = 0
        self.flag_k = 0
        self.pc = program.entry
        self.cycle = 0
        self.retired = 0
        self.retired_by_opcode: dict = {}
        self.halted = False
        self.halt_reason: Optional[str] = None
        self.fetch_enabled = True
        self.yielded = False
        self.pipeline: list = [None] * 6

        self.goal_stack: list = []  # heap of (-priority, seq, term)
        self._goal_seq = 0
        self.mailbox: list = []
        self.outbox: list = []  # (local_cycle, seq, dst, kind, payload)
        self._out_seq = 0
        self._cursors: dict = {}

        self._stream: Optional[SolutionStream] = None
        self._stream_goal: Optional[Term] = None
        self._stream_consumed = 0
        self._stream_steps_seen = 0
        self._stream_infs_seen = 0

        self._predictor: dict = {}
        self.predictions = 0
        self.mispredictions = 0
        self.rollbacks = 0

        self.inferences = 0
        self.unifications = 0
        self.resolution_steps = 0
        self.limit_exhaustions = 0
        self.plan_failures = 0
        self.plan_expansions: list = []
        self.neural_traps = 0
        self.neural_conformant = 0
        self.neural_latency_total = 0
        self.reason_floor_seen: dict = {}  # opcode name -> min Reason occupancy

        self._hasher = hashlib.sha256()
        self.trace_events = 0
        self._cycle_events: list = []

    # ------------------------------------------------------------------
    # tracing

    def _emit(self, stage: str, rec: Optional[_InFlight], stall=None, mem_level=None):
        ev = {
            "cycle": self.cycle,
            "stage": stage,
            "pc": rec.pc if rec else None,
            "opcode": rec.instr.opcode.name if rec else None,
            "flags": ("S" if self.flag_s else "") + ("K" if self.flag_k else ""),
            "mem_level": mem_level,
            "stall": stall,
        }
        line = json.dumps(ev, sort_keys=True)
        self._hasher.update(line.encode())
        self._hasher.update(b"\n")
        self.trace_events += 1
        if self.trace_sink is not None:
            self.trace_sink.write(line + "\n")
        self._cycle_events.append(ev)

    def trace_hash(self) -> str:
        return self._hasher.hexdigest()

    @property
    def energy_joules(self) -> float:
        return self.cycle * self.config.energy_per_cycle

    # ------------------------------------------------------------------
    # execution loop

    def step(self) -> list[dict]:
        """Advance one cycle; returns the trace events it produced."""
        if self.halted:
            raise MachineError("machine is halted")
        self._cycle_events: list = []
        self._advance_one()
        return self._cycle_events

    def _advance_one(self):
        self.cycle += 1
        pipe = self.pipeline

        # fetch
        if pipe[_P] is None and self.fetch_enabled and not self.halted:
            if not (0 <= self.pc < len(self.program.instructions)):
                self._fault("pc-range")
                return
            instr = self.program.instructions[self.pc]
            if isinstance(instr, Illegal):
                self._fault("illegal-instruction")
                return
            reads, writes = _resources(instr)
            rec = _InFlight(self.pc, instr, reads, writes)
            pipe[_P] = rec
            self._emit("perceive", rec)

        # perceive work: hazard check, operand read, next-pc resolution
        rec = pipe[_P]
        if rec is not None and not rec.read_done:
            if self._raw_hazard(rec):
                if rec.stall != "raw-hazard":
                    rec.stall = "raw-hazard"
                    self._emit("perceive", rec, stall="raw-hazard")
            else:
                rec.stall = None
                self._operand_read(rec)
                rec.read_done = True
                rec.remaining = 0
                self._resolve_pc(rec)

        # downstream stages: decrement, then move/retire (W back to R)
        for s in (_W, _M, _S, _A, _R):
            rec = pipe[s]
            if rec is None:
                continue
            if rec.remaining > 0:
                rec.remaining -= 1
            if rec.remaining > 0:
                continue
            if s == _W:
                pipe[_W] = None
                self._retire(rec)
            elif pipe[s + 1] is None:
                pipe[s + 1] = rec
                pipe[s] = None
                self._enter_stage(rec, s + 1)
            elif rec.stall != "structural":
                rec.stall = "structural"
                self._emit(STAGES[s], rec, stall="structural")

        # perceive -> reason movement
        rec = pipe[_P]
        if rec is not None and rec.read_done and not self.halted:
            if pipe[_R] is None:
                if rec.instr.opcode is Opcode.RECV and not self.mailbox:
                    if rec.stall != "blocked-recv":
                        rec.stall = "blocked-recv"
                        self._emit("perceive", rec, stall="blocked-recv")
                else:
                    rec.stall = None
                    pipe[_P] = None
                    pipe[_R] = rec
                    self._enter_stage(rec, _R)
            elif rec.stall != "structural":
                rec.stall = "structural"
                self._emit("perceive", rec, stall="structural")

    def _advance(self, cap: int) -> int:
        """Advance between 1 and cap cycles; bulk-skips pure-stall spans.

        Exactly equivalent to calling _advance_one cap times when nothing
        can move: skipped cycles are ones where every occupied latch only
        decrements and no fetch, movement, or retire is possible.
        """
        skip = self._skippable()
        if skip > 1:
            skip = min(skip - 1, cap - 1)
            if skip > 0:
                self.cycle += skip
                for s in (_R, _A, _S, _M, _W):
                    rec = self.pipeline[s]
                    if rec is not None:
                        rec.remaining -= skip
                self._advance_one()
                return skip + 1
        self._advance_one()
        return 1

    def _skippable(self) -> int:
        """Cycles during which the pipeline can only decrement, or 0."""
        pipe = self.pipeline
        if pipe[_P] is None:
            if self.fetch_enabled and not self.halted:
                return 0
        else:
            rec = pipe[_P]
            if rec.read_done and pipe[_R] is None:
                return 0  # could move (or block) this cycle
            if not rec.read_done and not self._raw_hazard(rec):
                return 0
        lo = None
        for s in (_R, _A, _S, _M, _W):
            rec = pipe[s]
            if rec is None:
                continue
            if rec.remaining <= 1:
                return 0
            lo = rec.remaining if lo is None else min(lo, rec.remaining)
        return lo or 0

    def _raw_hazard(self, rec: _InFlight) -> bool:
        if not rec.reads:
            return False
        for s in (_R, _A, _S, _M, _W):
            other = self.pipeline[s]
            if other is not None and rec.reads & other.writes:
                return True
        return False

    def stage_safe(self) -> bool:
        """True when no multi-cycle stage is mid-execution (preemption point)."""
        for s in (_R, _M):
            rec = self.pipeline[s]
            if rec is not None and rec.remaining > 0:
                return False
        return True

    def blocked_on_recv(self) -> bool:
        rec = self.pipeline[_P]
        return (
            rec is not None
            and rec.instr.opcode is Opcode.RECV
            and rec.read_done
            and not self.mailbox
            and all(self.pipeline[s] is None for s in (_R, _A, _S, _M, _W))
        )

    @property
    def status(self) -> str:
        if self.halted:
            return "halted"
        if self.blocked_on_recv():
            return "blocked-on-recv"
        rec = self.pipeline[_R]
        if rec is not None and rec.instr.opcode is Opcode.NEURAL and rec.remaining > 0:
            return "blocked-on-neural"
        return "ready"

    def run(self, max_cycles: Optional[int] = None) -> str:
        """Run until HALT, fault, block, or cycle budget; returns the reason."""
        self._cycle_events = []
        start = self.cycle
        while not self.halted:
            if self.blocked_on_recv():
                self.halt_reason = "blocked-recv"
                self.halted = True
                break
            if max_cycles is not None:
                used = self.cycle - start
                if used >= max_cycles:
                    self.halt_reason = "budget"
                    return "budget"
                self._advance(max_cycles - used)
            else:
                self._advance(1 << 30)
        return self.halt_reason

    def run_slice(self, budget: int) -> tuple[int, str]:
        """Run up to `budget` local cycles, extending to a stage-safe point;
        returns (cycles consumed, reason in quantum|yield|halt|blocked)."""
        self._cycle_events = []
        start = self.cycle
        while True:
            if self.halted:
                return self.cycle - start, "halt"
            if self.blocked_on_recv():
                return self.cycle - start, "blocked"
            if self.yielded:
                self.yielded = False
                return self.cycle - start, "yield"
            used = self.cycle - start
            if used >= budget and self.stage_safe():
                return used, "quantum"
            self._advance(max(1, budget - used))

    def _fault(self, reason: str):
        self.halted = True
        self.halt_reason = f"fault:{reason}"
        self.fetch_enabled = False
        rec = next((r for r in self.pipeline if r is not None), None)
        self._emit("writeback", rec, stall=f"fault:{reason}")
        self.pipeline = [None] * 6

    # ------------------------------------------------------------------
    # stage actions

    def _operand_read(self, rec: _InFlight):
        vals = []
        for op in rec.instr.operands:
            if isinstance(op, Reg):
                if op.bank == "B":
                    vals.append(self.rb[op.index])
                elif op.bank == "G":
                    vals.append((self.rg[op.index], self.rg_prio[op.index]))
                elif op.bank == "C":
                    vals.append(self.rc[op.index])
                else:
                    vals.append(self.ra[op.index])
            elif isinstance(op, Imm):
                vals.append(op.value)
            elif isinstance(op, Lit):
                vals.append(self.program.literals[op.index])
            else:
                vals.append(op.index)
        rec.vals = tuple(vals)

    def _resolve_pc(self, rec: _InFlight):
        op = rec.instr.opcode
        if op is Opcode.JMP:
            self.pc = rec.vals[0]
        elif op is Opcode.BRS:
            self.pc = rec.vals[0] if self.flag_s else rec.pc + 1
        elif op is Opcode.BRK:
            self.pc = rec.vals[0] if self.flag_k else rec.pc + 1
        elif op is Opcode.HALT:
            self.fetch_enabled = False
            self.pc = rec.pc + 1
        else:
            self.pc = rec.pc + 1

    def _enter_stage(self, rec: _InFlight, s: int):
        if s == _R:
            self._execute(rec)
            if self.halted:
                return
            rec.remaining = rec.reason_cost
            name = rec.instr.opcode.name
            seen = self.reason_floor_seen.get(name)
            if seen is None or rec.reason_cost < seen:
                self.reason_floor_seen[name] = rec.reason_cost
            self._emit("reason", rec)
        elif s == _M:
            latency = 0
            worst = None
            seen = set()
            for term in rec.mem_terms:
                for node in iter_nodes(term):
                    if node.handle in seen:
                        continue
                    seen.add(node.handle)
                    lat, level = self.mem.charge(node)
                    latency += lat
                    if worst is None or MemoryModel.LEVELS.index(level) > \
                            MemoryModel.LEVELS.index(worst):
                        worst = level
            rec.mem_level = worst
            rec.remaining = max(1, latency)
            self._emit("memory", rec, mem_level=worst)
        else:
            rec.remaining = 1
            self._emit(STAGES[s], rec)

    def _retire(self, rec: _InFlight):
        for kind, idx, value in rec.out:
            if kind == "B":
                self.rb[idx] = value
            elif kind == "G":
                self.rg[idx] = value
            elif kind == "GP":
                self.rg_prio[idx] = value
            elif kind == "C":
                self.rc[idx] = value
            elif kind == "A":
                self.ra[idx] = value
        s_out, k_out = rec.flags_out
        if s_out is not None:
            self.flag_s = s_out
        if k_out is not None:
            self.flag_k = k_out
        op = rec.instr.opcode
        if op is Opcode.SEND and rec.msg is not None:
            dst, kind, payload = rec.msg
            self._out_seq += 1
            self.outbox.append((self.cycle, self._out_seq, dst, kind, payload))
        self.retired += 1
        self.retired_by_opcode[op.name] = self.retired_by_opcode.get(op.name, 0) + 1
        if op is Opcode.HALT:
            self.halted = True
            self.halt_reason = "halt"
            self.fetch_enabled = False
        elif op is Opcode.YIELD:
            self.yielded = True
        self._emit("writeback", rec)

    # ------------------------------------------------------------------
    # semantics (executed once, at Reason entry)

    def _need_term(self, val, what: str) -> Term:
        if isinstance(val, tuple):  # G register value: (term, prio)
            val = val[0]
        if not isinstance(val, Term):
            self._fault(f"empty-register:{what}")
            raise _Faulted()
        return val

    def _execute(self, rec: _InFlight):
        try:
            self._execute_inner(rec)
        except _Faulted:
            pass

    def _execute_inner(self, rec: _InFlight):
        cfg = self.config
        op = rec.instr.opcode
        o = rec.instr.operands
        v = rec.vals
        cost = cfg.plumbing_cost

        if op is Opcode.LOADT:
            term = v[1]
            if o[0].bank == "B":
                rec.out.append(("B", o[0].index, term))
            else:
                rec.out.append(("G", o[0].index, term))

        elif op is Opcode.MOV:
            dst, src = o
            val = v[1]
            if dst.bank == "B":
                rec.out.append(("B", dst.index, val[0] if isinstance(val, tuple) else val))
            elif dst.bank == "G":
                rec.out.append(("G", dst.index, val[0] if isinstance(val, tuple) else val))
            elif dst.bank == "C":
                rec.out.append(("C", dst.index, val))
            else:
                rec.out.append(("A", dst.index, val))

        elif op is Opcode.UNIFY:
            ta = self._need_term(v[1], "UNIFY left")
            tb = self._need_term(v[2], "UNIFY right")
            b = Bindings()
            try:
                ok, comps = unify_counted(ta, tb, b, budget=cfg.unify_budget)
            except UnifyBudgetExceeded:
                self._fault("unify-budget")
                raise _Faulted()
            self.unifications += 1
            if ok:
                rec.out.append(("C", o[0].index, b))
            rec.flags_out = (1 if ok else 0, None)
            cost = max(cfg.unify_floor, comps)
            rec.mem_terms = [ta, tb]

        elif op is Opcode.INFER:
            goal = self._need_term(v[1], "INFER goal")
            if self.kb is None:
                self._fault("no-kb")
                raise _Faulted()
            stream = solve_backward(
                self.kb, goal, max_steps=cfg.infer_max_steps,
                max_depth=cfg.infer_max_depth,
            )
            pred_key, predicted, nclauses = self._predict(goal)
            sol = self._stream_next(stream)
            steps = stream.steps
            self.resolution_steps += steps
            self.unifications += steps
            self.inferences += stream.inferences
            self._stream = stream
            self._stream_goal = goal
            self._stream_consumed = 1
            self._stream_steps_seen = stream.steps
            self._stream_infs_seen = stream.inferences
            actual = stream.last_root_clause if sol is not None else None
            correct = self._predict_update(pred_key, predicted, actual, nclauses)
            base = cfg.infer_step_cost * steps
            if correct:
                cost = max(1, -(-base // cfg.lanes))
            else:
                cost = max(1, base) + cfg.rollback_penalty
                self.mispredictions += 1
                self.rollbacks += 1
            rec.mem_terms = [goal] + ([sol] if sol is not None else [])
            if sol is not None:
                rec.out.append(("B", o[0].index, sol))
                rec.out.append(("C", 0, stream.last_bindings))
            rec.flags_out = (1 if sol is not None else 0, None)

        elif op is Opcode.NEXT:
            stream = self._stream
            if stream is None:
                rec.flags_out = (0, None)
            else:
                sol = self._stream_next(stream)
                self._stream_consumed += 1
                dsteps = stream.steps - self._stream_steps_seen
                self._stream_steps_seen = stream.steps
                dinfs = stream.inferences - self._stream_infs_seen
                self._stream_infs_seen = stream.inferences
                self.resolution_steps += dsteps
                self.unifications += dsteps
                self.inferences += dinfs
                cost = max(1, -(-(cfg.infer_step_cost * dsteps) // cfg.lanes))
                if sol is not None:
                    rec.out.append(("B", o[0].index, sol))
                    rec.out.append(("C", 0, stream.last_bindings))
                    rec.mem_terms = [sol]
                rec.flags_out = (1 if sol is not None else 0, None)

        elif op is Opcode.PLAN:
            goal_term = self._need_term(v[1], "PLAN goal")
            if self.domain is None:
                self._fault("no-domain")
                raise _Faulted()
            goal_lits = _unpack_goals(goal_term)
            state = self.beliefs.positive_ground_contents()
            objects = _collect_objects(state, goal_lits, self.domain)
            problem = PlanningProblem(tuple(objects), frozenset(state), frozenset(goal_lits))
            expansions = 0
            try:
                result = plan_search(
                    problem, self.domain,
                    PlanConfig(max_expansions=cfg.plan_max_expansions),
                )
                expansions = result.expansions
                rec.out.append(("A", o[0].index, ARegSlot("planned", result.steps, 0)))
                rec.flags_out = (1, None)
                rec.mem_terms = [goal_term] + list(result.steps)
            except (Unsolvable, ExpansionBudgetExceeded) as e:
                expansions = e.expansions
                self.plan_failures += 1
                rec.flags_out = (0, None)
                rec.mem_terms = [goal_term]
            self.plan_expansions.append(expansions)
            cost = max(cfg.plan_floor, -(-(10 * expansions) // cfg.lanes))

        elif op is Opcode.BELIEVE:
            term = self._need_term(v[0], "BELIEVE content")
            conf_imm = v[1]
            if conf_imm > 255:
                self._fault("believe-confidence-range")
                raise _Faulted()
            outcome = self.beliefs.believe(term, conf_imm / 255.0, "inferred", self.cycle)
            rec.flags_out = (None, 1 if outcome.contradiction else 0)
            cost = cfg.believe_base + outcome.scanned
            rec.mem_terms = [term]

        elif op is Opcode.PERCEIVE:
            stream_id = v[1]
            filt = v[2]
            items = self.percepts.get(stream_id, [])
            cursor = self._cursors.get(stream_id, 0)
            scanned = 0
            hit = None
            while cursor < len(items):
                item = items[cursor]
                cursor += 1
                scanned += 1
                b = Bindings()
                ok, _ = unify_counted(filt, item, b)
                self.unifications += 1
                if ok:
                    hit = item
                    break
            self._cursors[stream_id] = cursor
            if hit is not None:
                rec.out.append(("B", o[0].index, hit))
                self.beliefs.believe(hit, 1.0, "perceived", self.cycle)
                rec.mem_terms = [hit]
            rec.flags_out = (1 if hit is not None else 0, None)
            cost = cfg.perceive_base + scanned

        elif op is Opcode.COMMIT:
            slot = v[0]
            if not isinstance(slot, ARegSlot):
                self._fault("empty-register:COMMIT")
                raise _Faulted()
            action = slot.current_action
            if action is None:
                rec.flags_out = (0, None)
                cost = cfg.commit_base
            else:
                ground = self._ground_action(action)
                if ground is None:
                    self._fault("unknown-action")
                    raise _Faulted()
                missing = [p for p in ground.pre if not self.beliefs.holds(p)]
                contradiction = 0
                if missing:
                    rec.out.append(("A", o[0].index, replace(slot, status="failed")))
                    rec.flags_out = (0, None)
                elif cfg.commit_failure_prob > 0 and \
                        self.rng.random() < cfg.commit_failure_prob:
                    rec.out.append(("A", o[0].index, replace(slot, status="failed")))
                    rec.flags_out = (0, None)
                else:
                    for d in ground.delete:
                        self.beliefs.remove(d)
                    for a in ground.add:
                        out = self.beliefs.believe(a, 1.0, "inferred", self.cycle)
                        if out.contradiction:
                            contradiction = 1
                    cursor = slot.cursor + 1
                    status = "committed" if cursor >= len(slot.steps) else "planned"
                    rec.out.append(("A", o[0].index, replace(slot, cursor=cursor, status=status)))
                    rec.flags_out = (1, contradiction or None)
                cost = cfg.commit_base + len(ground.pre)
                rec.mem_terms = [action, *ground.pre, *ground.add]

        elif op is Opcode.GPUSH:
            term = self._need_term(v[0], "GPUSH goal")
            prio = v[1]
            self._goal_seq += 1
            heapq.heappush(self.goal_stack, (-prio, self._goal_seq, term))
            rec.out.append(("GP", o[0].index, prio))

        elif op is Opcode.GPOP:
            if not self.goal_stack:
                rec.flags_out = (0, None)
            else:
                negp, _, term = heapq.heappop(self.goal_stack)
                rec.out.append(("G", o[0].index, term))
                rec.out.append(("GP", o[0].index, -negp))
                rec.flags_out = (1, None)

        elif op in (Opcode.BRS, Opcode.BRK, Opcode.JMP):
            pass  # control handled at Perceive when the pc was resolved

        elif op is Opcode.SEND:
            dst = v[0]
            payload = v[1]
            if isinstance(payload, tuple):
                payload = payload[0]
            if isinstance(payload, ARegSlot):
                payload = payload.current_action
            if not isinstance(payload, Term):
                self._fault("empty-register:SEND")
                raise _Faulted()
            kind_idx = v[2]
            if kind_idx >= len(MESSAGE_KINDS):
                self._fault("send-kind")
                raise _Faulted()
            kind = MESSAGE_KINDS[kind_idx]
            if kind == "action" and not is_ground(payload):
                self._fault("send-kind")
                raise _Faulted()
            rec.msg = (dst, kind, payload)

        elif op is Opcode.RECV:
            payload = self.mailbox.pop(0)
            rec.out.append(("B", o[0].index, payload))
            rec.flags_out = (1, None)

        elif op is Opcode.NEURAL:
            prompt = self._need_term(v[1], "NEURAL prompt")
            schema = self._need_term(v[2], "NEURAL schema")
            try:
                result = self.backend.invoke(prompt, schema)
                b = Bindings()
                ok, _ = unify_counted(result.response, schema, b)
                self.unifications += 1
                rec.out.append(("B", o[0].index, result.response))
                rec.flags_out = (1 if ok else 0, None)
                self.beliefs.believe(
                    result.response, max(0.0, min(1.0, result.confidence)),
                    "neural", self.cycle,
                )
                cost = cfg.trap_overhead + result.latency
                self.neural_traps += 1
                self.neural_conformant += 1 if ok else 0
                self.neural_latency_total += cost
                rec.mem_terms = [prompt, schema, result.response]
            except MachineError:
                raise
            except Exception:
                rec.out.append(("B", o[0].index, self.store.atom("neural_error")))
                rec.flags_out = (0, None)
                cost = cfg.trap_overhead
                self.neural_traps += 1
                self.neural_latency_total += cost

        elif op in (Opcode.YIELD, Opcode.HALT):
            pass

        rec.reason_cost = max(1, int(cost))
        if op not in ENGINE_OPS:
            rec.mem_terms = []

    def _stream_next(self, stream: SolutionStream):
        try:
            return stream.next()
        except LimitExceeded:
            self.limit_exhaustions += 1
            return None

    def _ground_action(self, action: Term):
        from .planner import GroundAction, _substitute

        if isinstance(action, Compound):
            name, args = action.functor, action.args
        elif isinstance(action, Atom):
            name, args = action.name, ()
        else:
            return None
        op = self.domain.operator(name)
        if op is None or len(op.params) != len(args):
            return None
        env = dict(zip(op.params, args))
        store = self.store
        return GroundAction(
            action,
            tuple(_substitute(p, env, store) for p in op.pre),
            tuple(_substitute(a, env, store) for a in op.add),
            tuple(_substitute(d, env, store) for d in op.delete),
        )

    # ------------------------------------------------------------------
    # clause prediction (2-bit saturating counters per clause)

    def _predict(self, goal: Term):
        from .terms import functor_key

        key = functor_key(goal)
        nclauses = len(self.kb.clauses_for(goal))
        counters = self._predictor.get(key)
        if counters is None or len(counters) < nclauses:
            counters = (counters or []) + [2] * (nclauses - len(counters or []))
            self._predictor[key] = counters
        predicted = 0
        for i, c in enumerate(counters):
            if c >= 2:
                predicted = i
                break
        self.predictions += 1
        return key, predicted, nclauses

    def _predict_update(self, key, predicted, actual, nclauses) -> bool:
        counters = self._predictor.get(key, [])
        if actual is None:
            for i in range(len(counters)):
                counters[i] = max(0, counters[i] - 1)
            return False
        if actual < len(counters):
            counters[actual] = min(3, counters[actual] + 1)
        for i in range(min(actual, len(counters))):
            counters[i] = max(0, counters[i] - 1)
        return predicted == actual

    def speculation_stats(self) -> dict:
        return {
            "predictions": self.predictions,
            "mispredictions": self.mispredictions,
            "rollbacks": self.rollbacks,
        }

    # ------------------------------------------------------------------
    # checkpoint / restore

    def checkpoint(self) -> Checkpoint:
        payload = {
            "cycle": self.cycle,
            "pc": self.pc,
            "retired": self.retired,
            "retired_by_opcode": dict(self.retired_by_opcode),
            "halted": self.halted,
            "halt_reason": self.halt_reason,
            "fetch_enabled": self.fetch_enabled,
            "yielded": self.yielded,
            "rb": list(self.rb),
            "rg": list(self.rg),
            "rg_prio": list(self.rg_prio),
            "rc": list(self.rc),
            "ra": list(self.ra),
            "flag_s": self.flag_s,
            "flag_k": self.flag_k,
            "pipeline": [r.copy() if r is not None else None for r in self.pipeline],
            "goal_stack": list(self.goal_stack),
            "goal_seq": self._goal_seq,
            "mailbox": list(self.mailbox),
            "outbox": list(self.outbox),
            "out_seq": self._out_seq,
            "cursors": dict(self._cursors),
            "beliefs": self.beliefs.snapshot(),
            "predictor": {k: list(v) for k, v in self._predictor.items()},
            "predictions": self.predictions,
            "mispredictions": self.mispredictions,
            "rollbacks": self.rollbacks,
            "inferences": self.inferences,
            "unifications": self.unifications,
            "resolution_steps": self.resolution_steps,
            "limit_exhaustions": self.limit_exhaustions,
            "plan_failures": self.plan_failures,
            "plan_expansions": list(self.plan_expansions),
            "neural": (self.neural_traps, self.neural_conformant, self.neural_latency_total),
            "reason_floor_seen": dict(self.reason_floor_seen),
            "mem": self.mem.snapshot(),
            "rng": self.rng.getstate(),
            "stream": (
                None
                if self._stream is None
                else (self._stream_goal, self._stream_consumed)
            ),
            "stream_counts": (self._stream_steps_seen, self._stream_infs_seen),
            "hasher": self._hasher.copy(),
            "trace_events": self.trace_events,
        }
        return Checkpoint(self.program.fingerprint(), payload)

    def restore(self, cp: Checkpoint):
        if cp.program_fingerprint != self.program.fingerprint():
            raise CheckpointError("checkpoint does not match this program (version mismatch)")
        p = cp.payload
        self.cycle = p["cycle"]
        self.pc = p["pc"]
        self.retired = p["retired"]
        self.retired_by_opcode = dict(p["retired_by_opcode"])
        self.halted = p["halted"]
        self.halt_reason = p["halt_reason"]
        self.fetch_enabled = p["fetch_enabled"]
        self.yielded = p["yielded"]
        self.rb = list(p["rb"])
        self.rg = list(p["rg"])
        self.rg_prio = list(p["rg_prio"])
        self.rc = list(p["rc"])
        self.ra = list(p["ra"])
        self.flag_s = p["flag_s"]
        self.flag_k = p["flag_k"]
        self.pipeline = [r.copy() if r is not None else None for r in p["pipeline"]]
        self.goal_stack = list(p["goal_stack"])
        self._goal_seq = p["goal_seq"]
        self.mailbox = list(p["mailbox"])
        self.outbox = list(p["outbox"])
        self._out_seq = p["out_seq"]
        self._cursors = dict(p["cursors"])
        self.beliefs.restore_snapshot(p["beliefs"])
        self._predictor = {k: list(v) for k, v in p["predictor"].items()}
        self.predictions = p["predictions"]
        self.mispredictions = p["mispredictions"]
        self.rollbacks = p["rollbacks"]
        self.inferences = p["inferences"]
        self.unifications = p["unifications"]
        self.resolution_steps = p["resolution_steps"]
        self.limit_exhaustions = p["limit_exhaustions"]
        self.plan_failures = p["plan_failures"]
        self.plan_expansions = list(p["plan_expansions"])
        self.neural_traps, self.neural_conformant, self.neural_latency_total = p["neural"]
        self.reason_floor_seen = dict(p["reason_floor_seen"])
        self.mem.restore(p["mem"])
        self.rng.setstate(p["rng"])
        self._stream_steps_seen, self._stream_infs_seen = p["stream_counts"]
        if p["stream"] is None:
            self._stream = None
            self._stream_goal = None
            self._stream_consumed = 0
        else:
            goal, consumed = p["stream"]
            stream = solve_backward(
                self.kb, goal, max_steps=self.config.infer_max_steps,
                max_depth=self.config.infer_max_depth,
            )
            for _ in range(consumed):
                try:
                    stream.next()
                except LimitExceeded:
                    pass
            self._stream = stream
            self._stream_goal = goal
            self._stream_consumed = consumed
        self._hasher = p["hasher"].copy()
        self.trace_events = p["trace_events"]
        return self

    # ------------------------------------------------------------------
    # reporting

    def metrics_report(self, scenario: str = "run", wall_clock_seconds: float = 0.0,
                       extra: Optional[dict] = None) -> MetricsReport:
        scenario_metrics = {
            "halt_reason": self.halt_reason,
            "retired_by_opcode": dict(sorted(self.retired_by_opcode.items())),
            "speculation": self.speculation_stats(),
            "limit_exhaustions": self.limit_exhaustions,
            "resolution_steps": self.resolution_steps,
        }
        if extra:
            scenario_metrics.update(extra)
        return make_report(
            scenario,
            cycles=self.cycle,
            retired=self.retired,
            inferences=self.inferences,
            unifications=self.unifications,
            cache=CacheStats(**self.mem.stats()),
            scenario_metrics=scenario_metrics,
            wall_clock_seconds=wall_clock_seconds,
            energy_per_cycle=self.config.energy_per_cycle,
        )


class _Faulted(Exception):
    """Internal: unwinds _execute after _fault() already recorded the state."""


def _unpack_goals(goal_term: Term) -> list:
    if isinstance(goal_term, Compound) and goal_term.functor == "goals":
        return list(goal_term.args)
    return [goal_term]


def _collect_objects(state, goal_lits, domain: PlanningDomain) -> list:
    from .planner import _atoms_of

    seen: dict = {}
    for lit in list(state) + list(goal_lits):
        for a in _atoms_of(lit):
            seen.setdefault(a, None)
    for a in domain.constants():
        seen.setdefault(a, None)
    return list(seen)


def charge_memory(machine: Machine, term: Term, intent: str = "read") -> int:
    """Probe the memory hierarchy for one term cell; returns the latency."""
    if intent not in ("read", "write"):
        raise MachineError(f"intent must be read or write, got {intent!r}")
    latency, _ = machine.mem.charge(term)
    return latency


def run_program(
    program: Program,
    store: TermStore,
    kb: Optional[KnowledgeBase] = None,
    domain: Optional[PlanningDomain] = None,
    beliefs: Optional[BeliefBase] = None,
    percepts: Optional[dict] = None,
    seed: int = 0,
    config: Optional[MachineConfig] = None,
    backend=None,
    max_cycles: Optional[int] = None,
    trace_sink=None,
    scenario: str = "run",
) -> tuple[Machine, MetricsReport]:
    """Host-side delegation entry point: run to completion and report."""
    m = Machine(
        program, store, config=config, kb=kb, domain=domain, beliefs=beliefs,
        percepts=percepts, seed=seed, backend=backend, trace_sink=trace_sink,
    )
    m.run(max_cycles=max_cycles)
    return m, m.metrics_report(scenario=scenario)
