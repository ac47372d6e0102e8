"""Multi-agent runtime: sandboxed agent contexts, the priority-aware
scheduler, and the typed message bus with a modeled wire cost.

One agent runs at a time on the logical timeline. The scheduler picks the
ready agent maximizing

    score = w_urgency * urgency + w_utility * utility + deadline_boost,

where deadline_boost is w_deadline * quantum / (deadline - now), infinite
once past due. Score ties go to the least recently dispatched agent, then
the lowest agent id: with equal priorities this degenerates to round robin,
which is what keeps every agent running exactly once per window (plain
lowest-id would starve the rest).

Messages are collected when an agent's slice ends and delivered at the next
quantum boundary in (send cycle, sender id) order; the wire cost
ceil(cells / bandwidth_factor) is charged against the receiver's next slot.
Agents never share mutable structures: KBs and belief bases are snapshotted
at spawn, so absent messages an agent's trace equals its solo run exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .config import MachineConfig, SystemConfig
from .isa import Opcode, Program
from .machine import Machine, MockNeuralBackend
from .terms import Term, TermStore, term_cells, term_text

MESSAGE_KINDS = ("belief", "goal", "action", "contract")


class SystemError_(Exception):
    pass


class AgentCapacityError(SystemError_):
    pass


@dataclass
class Message:
    kind: str
    payload: Term
    sender: int
    receiver: int
    send_cycle: int
    seq: int = 0


@dataclass
class AgentContext:
    agent_id: int
    machine: Machine
    urgency: float = 0.0
    utility: float = 0.0
    deadline: Optional[int] = None
    status: str = "ready"  # ready | running | blocked-on-recv | blocked-on-neural | halted
    last_dispatched: int = -1
    pending_wire: int = 0
    dispatches: int = 0
    local_cycles: int = 0
    plans_adopted: int = 0
    _last_plan: Optional[tuple] = None


@dataclass
class SystemMetrics:
    global_cycles: int
    switches: int
    switch_overhead_cycles: int
    total_decision_latency: int
    plan_convergence_depth: int
    messages_delivered: int
    messages_dropped: int
    reason: str
    per_agent: dict = field(default_factory=dict)


def schedule_score(
    cfg: SystemConfig, urgency: float, utility: float,
    deadline: Optional[int], now: int,
) -> float:
    score = cfg.w_urgency * urgency + cfg.w_utility * utility
    if deadline is not None:
        remaining = deadline - now
        if remaining <= 0:
            return float("inf")
        score += cfg.w_deadline * cfg.quantum / remaining
    return score


class System:
    """Owns the agents, the global clock, and the message bus."""

    def __init__(
        self,
        store: TermStore,
        config: Optional[SystemConfig] = None,
        machine_config: Optional[MachineConfig] = None,
    ):
        self.store = store
        self.config = config or SystemConfig()
        self.machine_config = machine_config or MachineConfig()
        self.agents: list[AgentContext] = []
        self.clock = 0
        self.switches = 0
        self._running: Optional[int] = None
        self._pending: list[Message] = []
        self._msg_seq = 0
        self.delivered = 0
        self.dropped: list[str] = []
        self.message_log: list[Message] = []

    # ------------------------------------------------------------------

    def spawn_agent(
        self,
        program: Program,
        kb=None,
        domain=None,
        beliefs=None,
        percepts=None,
        urgency: float = 0.0,
        utility: float = 0.0,
        deadline: Optional[int] = None,
        seed: Optional[int] = None,
        backend=None,
    ) -> int:
        live = sum(1 for a in self.agents if a.status != "halted")
        if live >= self.config.agent_ceiling:
            raise AgentCapacityError(
                f"agent ceiling {self.config.agent_ceiling} reached"
            )
        agent_id = len(self.agents)
        if seed is None:
            seed = self.config.seed * 1_000_003 + agent_id
        machine = Machine(
            program,
            self.store,
            config=self.machine_config,
            kb=kb.snapshot() if kb is not None else None,
            domain=domain,
            beliefs=beliefs,
            percepts=percepts,
            seed=seed,
            backend=backend or MockNeuralBackend(seed=seed),
        )
        self.agents.append(
            AgentContext(agent_id, machine, urgency, utility, deadline)
        )
        return agent_id

    # ------------------------------------------------------------------
    # messaging

    def send(self, sender: int, receiver: int, kind: str, payload: Term,
             send_cycle: Optional[int] = None):
        if kind not in MESSAGE_KINDS:
            raise SystemError_(f"unknown message kind {kind!r}")
        from .terms import is_ground

        if kind == "action" and not is_ground(payload):
            raise SystemError_("action payloads must be ground")
        self._msg_seq += 1
        self._pending.append(
            Message(kind, payload, sender, receiver,
                    self.clock if send_cycle is None else send_cycle, self._msg_seq)
        )

    def deliver_pending(self) -> int:
        """Deliver all due messages in (send-cycle, sender-id) order."""
        due = [m for m in self._pending if m.send_cycle <= self.clock]
        if not due:
            return 0
        self._pending = [m for m in self._pending if m.send_cycle > self.clock]
        due.sort(key=lambda m: (m.send_cycle, m.sender, m.seq))
        count = 0
        for msg in due:
            if not (0 <= msg.receiver < len(self.agents)):
                self.dropped.append(
                    f"cycle {self.clock}: message to unknown agent {msg.receiver} dropped"
                )
                continue
            target = self.agents[msg.receiver]
            if target.status == "halted":
                self.dropped.append(
                    f"cycle {self.clock}: message {term_text(msg.payload)} to halted "
                    f"agent {msg.receiver} dropped"
                )
                continue
            target.machine.mailbox.append(msg.payload)
            target.pending_wire += -(-term_cells(msg.payload) // self.config.bandwidth_factor)
            if target.status == "blocked-on-recv":
                target.status = "ready"
            self.message_log.append(msg)
            count += 1
        self.delivered += count
        return count

    # ------------------------------------------------------------------
    # scheduling

    def schedule_next(self) -> Optional[int]:
        """Max-score ready agent; ties to least recently run, then lowest id."""
        best = None
        best_key = None
        for a in self.agents:
            if a.status != "ready":
                continue
            score = schedule_score(
                self.config, a.urgency, a.utility, a.deadline, self.clock
            )
            key = (-score, a.last_dispatched, a.agent_id)
            if best_key is None or key < best_key:
                best_key = key
                best = a
        return best.agent_id if best is not None else None

    def run(self, max_global_cycles: Optional[int] = None) -> SystemMetrics:
        reason = "complete"
        while True:
            if max_global_cycles is not None and self.clock >= max_global_cycles:
                reason = "budget"
                break
            self.deliver_pending()
            pick = self.schedule_next()
            if pick is None:
                if all(a.status == "halted" for a in self.agents):
                    reason = "complete"
                elif self._pending:
                    # undelivered future messages: jump to the next boundary
                    self.clock = min(m.send_cycle for m in self._pending)
                    continue
                else:
                    reason = "deadlock"
                break
            agent = self.agents[pick]
            if self._running != pick:
                self.clock += self.config.switch_penalty
                self.switches += 1
                self._running = pick
            wire = agent.pending_wire
            agent.pending_wire = 0
            self.clock += wire
            budget = max(1, self.config.quantum - wire)
            agent.last_dispatched = self.clock
            agent.dispatches += 1
            agent.status = "running"
            slice_start_local = agent.machine.cycle
            slice_start_global = self.clock
            out_mark = len(agent.machine.outbox)
            cycles_run, stop = agent.machine.run_slice(budget)
            self.clock += cycles_run
            agent.local_cycles += cycles_run
            self._collect_outbox(agent, out_mark, slice_start_local, slice_start_global)
            self._track_plans(agent)
            if stop == "halt":
                agent.status = "halted"
            elif stop == "blocked":
                agent.status = "blocked-on-recv"
            else:
                agent.status = "ready"
        return self._metrics(reason)

    def _collect_outbox(self, agent: AgentContext, mark: int,
                        local_start: int, global_start: int):
        for local_cycle, _, dst, kind, payload in agent.machine.outbox[mark:]:
            self.send(
                agent.agent_id, dst, kind, payload,
                send_cycle=global_start + (local_cycle - local_start),
            )

    def _track_plans(self, agent: AgentContext):
        for slot in agent.machine.ra:
            if slot.status in ("planned", "committed") and slot.steps:
                if slot.steps != agent._last_plan:
                    agent._last_plan = slot.steps
                    agent.plans_adopted += 1
                break

    def _metrics(self, reason: str) -> SystemMetrics:
        per_agent = {}
        for a in self.agents:
            per_agent[a.agent_id] = {
                "cycles": a.machine.cycle,
                "retired": a.machine.retired,
                "dispatches": a.dispatches,
                "status": a.status,
                "halt_reason": a.machine.halt_reason,
                "trace_hash": a.machine.trace_hash(),
                "inferences": a.machine.inferences,
                "unifications": a.machine.unifications,
            }
        return SystemMetrics(
            global_cycles=self.clock,
            switches=self.switches,
            switch_overhead_cycles=self.switches * self.config.switch_penalty,
            total_decision_latency=self.clock,
            plan_convergence_depth=max(
                (a.plans_adopted for a in self.agents), default=0
            ),
            messages_delivered=self.delivered,
            messages_dropped=len(self.dropped),
            reason=reason,
            per_agent=per_agent,
        )
