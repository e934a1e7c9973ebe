"""Event-driven execution of compiled behavior trees.

The engine is stateless between calls: everything mutable lives on the
Blackboard, so tick() can be driven by the simulator, by run_episode, or by
the wall-clock service thread with identical semantics. One tick applies the
inbox events, then re-evaluates the tree top-down; sequences and selectors
keep memory (completed children are skipped, failed strategies never
re-entered). Given the same tree, persona and event timestamps, the produced
trace is byte-identical, which is what makes recorded wall-clock sessions
replayable on the simulated clock.

Timeout/retry split: explicit human or robot failure events consume one of
the action's retry attempts; an action or strategy budget timeout bypasses
retries and fails the strategy directly, so the selector escalates to the
next eligible assistance level (fall-through). Succeeded action goals are
flagged on the blackboard and their gates skip re-execution after a
fall-through.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol

from .compiler import BehaviorTree, NodeKind, Role, TreeNode

FAIL_REASON_TIMEOUT = "timeout"
FAIL_REASON_BUDGET = "budget_timeout"
FAIL_REASON_HUMAN = "human_fail"
FAIL_REASON_ROBOT = "robot_fail"
FAIL_REASON_RETRIES = "retries_exhausted"
FAIL_REASON_PERSONA = "persona_not_admitted"
FAIL_REASON_ABORTED = "strategy_timeout"


class NodeStatus(enum.Enum):
    SUCCESS = "success"
    FAILURE = "failure"
    RUNNING = "running"


class EventKind(str, enum.Enum):
    HUMAN_ACK = "human_ack"
    HUMAN_FAIL = "human_fail"
    ROBOT_DONE = "robot_done"
    ROBOT_FAIL = "robot_fail"
    SET_PERSONA = "set_persona"
    RESET = "reset"


@dataclass(frozen=True)
class EngineEvent:
    kind: EventKind
    target: str | None
    timestamp: int
    persona_id: int | None = None


class CommandKind(str, enum.Enum):
    ROBOT_START = "robot_start"
    INSTRUCTION = "instruction"


@dataclass(frozen=True)
class EngineCommand:
    """Effect the engine asks the outside world to perform."""

    kind: CommandKind
    time: int
    node_id: str
    action_id: str
    role: Role
    label: str
    duration_ms: int = 0
    timeout_ms: int | None = None


CommandSink = Callable[[EngineCommand], None]


class EventSource(Protocol):
    """Where events come from and where engine commands go (sim or service)."""

    def on_command(self, command: EngineCommand) -> None: ...

    def next_time(self) -> int | None: ...

    def pop_until(self, t: int) -> list[EngineEvent]: ...


@dataclass
class NodeState:
    status: NodeStatus | None = None
    child_index: int = 0
    entered_at: int | None = None
    wait_started: int | None = None
    command_issued: bool = False
    result: str | None = None
    failure_reason: str | None = None
    attempts_done: int = 0
    gate_evaluated: bool = False


@dataclass
class Blackboard:
    active_persona: int
    goal_flags: set[tuple[str, str]] = field(default_factory=set)
    world_flags: set[str] = field(default_factory=set)
    node_state: dict[str, NodeState] = field(default_factory=dict)
    failed_part_id: str | None = None

    def state(self, node_id: str) -> NodeState:
        st = self.node_state.get(node_id)
        if st is None:
            st = NodeState()
            self.node_state[node_id] = st
        return st


def reset(bb: Blackboard) -> Blackboard:
    """Clear all episode state but keep the active persona. Idempotent."""
    bb.goal_flags.clear()
    bb.world_flags.clear()
    bb.node_state.clear()
    bb.failed_part_id = None
    return bb


@dataclass(frozen=True)
class TraceEvent:
    time: int
    node: str | None
    kind: str
    detail: dict

    def to_json_line(self) -> str:
        return json.dumps(
            {"time": self.time, "node": self.node, "kind": self.kind, "detail": self.detail},
            ensure_ascii=False,
            separators=(",", ": "),
        )


class TraceRecorder:
    def __init__(self) -> None:
        self.events: list[TraceEvent] = []

    def record(self, time: int, node: str | None, kind: str, detail: dict) -> None:
        self.events.append(TraceEvent(time, node, kind, detail))


@dataclass(frozen=True)
class EpisodeTrace:
    persona_id: int
    spec_id: str
    digest: str
    events: tuple[TraceEvent, ...]
    outcome: str  # "completed" | "failed"
    failed_part: str | None = None
    annotation: str | None = None
    strategies_used: dict[str, tuple[str, int]] = field(default_factory=dict)

    def to_jsonl(self) -> str:
        return "\n".join(e.to_json_line() for e in self.events) + "\n"

    def external_events(self) -> list[EngineEvent]:
        out = []
        for e in self.events:
            if e.kind in ("event", "stale_event"):
                out.append(EngineEvent(
                    kind=EventKind(e.detail["event"]),
                    target=e.node,
                    timestamp=e.time,
                    persona_id=e.detail.get("persona"),
                ))
        return out

    @classmethod
    def from_jsonl(cls, text: str) -> "EpisodeTrace":
        events = []
        persona_id, spec_id, digest = 0, "", ""
        outcome, failed_part, annotation = "failed", None, None
        for line in text.splitlines():
            if not line.strip():
                continue
            raw = json.loads(line)
            ev = TraceEvent(raw["time"], raw["node"], raw["kind"], raw["detail"])
            events.append(ev)
            if ev.kind == "episode_start":
                persona_id = ev.detail["persona"]
                spec_id = ev.detail["spec"]
                digest = ev.detail["digest"]
            elif ev.kind == "outcome":
                outcome = ev.detail["outcome"]
                failed_part = ev.detail.get("part")
                annotation = ev.detail.get("annotation")
        trace = cls(persona_id, spec_id, digest, tuple(events), outcome, failed_part, annotation)
        return trace


def _noop_sink(command: EngineCommand) -> None:
    return None


class _Ticker:
    """One tick() evaluation pass. Holds the per-call context only."""

    def __init__(self, tree: BehaviorTree, bb: Blackboard, now: int,
                 trace: TraceRecorder, sink: CommandSink):
        self.tree = tree
        self.bb = bb
        self.now = now
        self.trace = trace
        self.sink = sink

    # -- trace helpers ------------------------------------------------------

    def _transition(self, node: TreeNode, status: NodeStatus, reason: str | None = None,
                    record: bool = True, extra: dict | None = None) -> NodeStatus:
        st = self.bb.state(node.id)
        changed = st.status is not status
        st.status = status
        if record and changed:
            detail: dict = {"status": status.value}
            if reason is not None:
                detail["reason"] = reason
            if extra:
                detail.update(extra)
            self.trace.record(self.now, node.id, "status", detail)
        return status

    # -- event application --------------------------------------------------

    def apply_events(self, inbox: Iterable[EngineEvent]) -> None:
        for ev in sorted(inbox, key=lambda e: e.timestamp):
            self._apply_event(ev)

    def _apply_event(self, ev: EngineEvent) -> None:
        detail: dict = {"event": ev.kind.value}
        if ev.persona_id is not None:
            detail["persona"] = ev.persona_id
        if ev.kind in (EventKind.SET_PERSONA, EventKind.RESET):
            # Persona switches and resets are honored between episodes only.
            self.trace.record(ev.timestamp, ev.target, "stale_event", detail)
            return
        node = self.tree.nodes.get(ev.target or "")
        st = self.bb.state(node.id) if node is not None else None
        expected = {
            EventKind.HUMAN_ACK: (NodeKind.WAIT_FOR_HUMAN, "ack"),
            EventKind.HUMAN_FAIL: (NodeKind.WAIT_FOR_HUMAN, "fail"),
            EventKind.ROBOT_DONE: (NodeKind.ROBOT_ACTION, "done"),
            EventKind.ROBOT_FAIL: (NodeKind.ROBOT_ACTION, "fail"),
        }
        kind, result = expected[ev.kind]
        if (node is None or node.kind is not kind
                or st is None or st.status is not NodeStatus.RUNNING or st.result is not None):
            self.trace.record(ev.timestamp, ev.target, "stale_event", detail)
            return
        st.result = result
        self.trace.record(ev.timestamp, ev.target, "event", detail)

    # -- node evaluation ----------------------------------------------------

    def tick_node(self, node: TreeNode) -> NodeStatus:
        handler = {
            NodeKind.ROOT_SEQUENCE: self._tick_sequence,
            NodeKind.STRATEGY_SEQUENCE: self._tick_sequence,
            NodeKind.STRATEGY_SELECTOR: self._tick_selector,
            NodeKind.PERSONA_CONDITION: self._tick_condition,
            NodeKind.TIMEOUT_DECORATOR: self._tick_timeout,
            NodeKind.RETRY_DECORATOR: self._tick_retry,
            NodeKind.GOAL_GATE: self._tick_gate,
            NodeKind.ROBOT_ACTION: self._tick_robot,
            NodeKind.WAIT_FOR_HUMAN: self._tick_wait,
        }[node.kind]
        return handler(node)

    def _tick_sequence(self, node: TreeNode) -> NodeStatus:
        st = self.bb.state(node.id)
        if st.status in (NodeStatus.SUCCESS, NodeStatus.FAILURE):
            return st.status
        self._transition(node, NodeStatus.RUNNING)
        while st.child_index < len(node.children):
            child = node.children[st.child_index]
            result = self.tick_node(child)
            if result is NodeStatus.RUNNING:
                return NodeStatus.RUNNING
            if result is NodeStatus.FAILURE:
                st.failure_reason = self.bb.state(child.id).failure_reason
                if node.kind is NodeKind.ROOT_SEQUENCE and child.part_id:
                    self.bb.failed_part_id = child.part_id
                return self._transition(node, NodeStatus.FAILURE, st.failure_reason)
            st.child_index += 1
        return self._transition(node, NodeStatus.SUCCESS)

    def _tick_selector(self, node: TreeNode) -> NodeStatus:
        st = self.bb.state(node.id)
        if st.status in (NodeStatus.SUCCESS, NodeStatus.FAILURE):
            return st.status
        self._transition(node, NodeStatus.RUNNING)
        while st.child_index < len(node.children):
            child = node.children[st.child_index]
            result = self.tick_node(child)
            if result is NodeStatus.SUCCESS:
                return self._transition(node, NodeStatus.SUCCESS)
            if result is NodeStatus.RUNNING:
                return NodeStatus.RUNNING
            st.child_index += 1  # memory: a failed strategy is never re-entered
        st.failure_reason = "no_strategy_left"
        return self._transition(node, NodeStatus.FAILURE, "no_strategy_left")

    def _tick_condition(self, node: TreeNode) -> NodeStatus:
        st = self.bb.state(node.id)
        if st.status in (NodeStatus.SUCCESS, NodeStatus.FAILURE):
            return st.status
        admitted = node.universal or self.bb.active_persona in (node.persona_ids or frozenset())
        if not admitted:
            st.failure_reason = FAIL_REASON_PERSONA
            return self._transition(node, NodeStatus.FAILURE, FAIL_REASON_PERSONA,
                                    extra={"persona": self.bb.active_persona})
        result = self.tick_node(node.children[0])
        if result is not NodeStatus.RUNNING:
            st.failure_reason = self.bb.state(node.children[0].id).failure_reason
        return self._transition(node, result, record=False)

    def _tick_timeout(self, node: TreeNode) -> NodeStatus:
        st = self.bb.state(node.id)
        if st.status in (NodeStatus.SUCCESS, NodeStatus.FAILURE):
            return st.status
        if st.entered_at is None:
            st.entered_at = self.now
        child = node.children[0]
        result = self.tick_node(child)
        assert node.budget_ms is not None
        if result is NodeStatus.RUNNING and self.now - st.entered_at >= node.budget_ms:
            self._abort_running(child)
            st.failure_reason = FAIL_REASON_TIMEOUT
            return self._transition(node, NodeStatus.FAILURE, FAIL_REASON_BUDGET,
                                    extra={"budget_ms": node.budget_ms})
        if result is NodeStatus.FAILURE:
            st.failure_reason = self.bb.state(child.id).failure_reason
        return self._transition(node, result, record=False)

    def _abort_running(self, node: TreeNode) -> None:
        # Budget exhausted: close out whatever was still running underneath so
        # late replies for those nodes register as stale.
        st = self.bb.node_state.get(node.id)
        if st is not None and st.status is NodeStatus.RUNNING:
            self._transition(node, NodeStatus.FAILURE, FAIL_REASON_ABORTED,
                             record=node.kind in (NodeKind.ROBOT_ACTION, NodeKind.WAIT_FOR_HUMAN,
                                                  NodeKind.STRATEGY_SEQUENCE, NodeKind.GOAL_GATE))
            st.failure_reason = FAIL_REASON_TIMEOUT
        for child in node.children:
            self._abort_running(child)

    def _tick_retry(self, node: TreeNode) -> NodeStatus:
        st = self.bb.state(node.id)
        if st.status in (NodeStatus.SUCCESS, NodeStatus.FAILURE):
            return st.status
        st.status = NodeStatus.RUNNING
        child = node.children[0]
        assert node.max_attempts is not None
        while True:
            result = self.tick_node(child)
            if result is not NodeStatus.FAILURE:
                st.status = result
                return result
            reason = self.bb.state(child.id).failure_reason or "failed"
            if reason not in (FAIL_REASON_HUMAN, FAIL_REASON_ROBOT):
                # Timeouts do not consume retries: fail the strategy directly.
                st.failure_reason = reason
                st.status = NodeStatus.FAILURE
                return NodeStatus.FAILURE
            st.attempts_done += 1
            if st.attempts_done >= node.max_attempts:
                st.failure_reason = FAIL_REASON_RETRIES
                return self._transition(node, NodeStatus.FAILURE, FAIL_REASON_RETRIES,
                                        extra={"attempts": st.attempts_done})
            self.trace.record(self.now, node.id, "retry",
                              {"attempt": st.attempts_done + 1, "max": node.max_attempts})
            self._clear_subtree(child)

    def _clear_subtree(self, node: TreeNode) -> None:
        self.bb.node_state.pop(node.id, None)
        for child in node.children:
            self._clear_subtree(child)

    def _tick_gate(self, node: TreeNode) -> NodeStatus:
        st = self.bb.state(node.id)
        if st.status in (NodeStatus.SUCCESS, NodeStatus.FAILURE):
            return st.status
        action = node.action
        assert action is not None and node.part_id is not None
        goal_key = (node.part_id, action.goal_id)
        if not st.gate_evaluated:
            st.gate_evaluated = True
            if goal_key in self.bb.goal_flags:
                return self._transition(node, NodeStatus.SUCCESS, "goal_already_reached")
            if action.skip_if and action.skip_if <= self.bb.world_flags:
                return self._transition(node, NodeStatus.SUCCESS, "skipped_by_flags",
                                        extra={"flags": sorted(action.skip_if)})
        result = self.tick_node(node.children[0])
        if result is NodeStatus.SUCCESS:
            self.bb.goal_flags.add(goal_key)
            self.bb.world_flags |= action.sets_flags
            self.trace.record(self.now, node.id, "goal_reached",
                              {"part": node.part_id, "goal": action.goal_id,
                               "sets": sorted(action.sets_flags)})
            return self._transition(node, NodeStatus.SUCCESS)
        if result is NodeStatus.FAILURE:
            st.failure_reason = self.bb.state(node.children[0].id).failure_reason
            return self._transition(node, NodeStatus.FAILURE, st.failure_reason)
        return self._transition(node, NodeStatus.RUNNING)

    def _tick_robot(self, node: TreeNode) -> NodeStatus:
        st = self.bb.state(node.id)
        if st.status in (NodeStatus.SUCCESS, NodeStatus.FAILURE):
            return st.status
        if st.result == "done":
            return self._transition(node, NodeStatus.SUCCESS)
        if st.result == "fail":
            st.failure_reason = FAIL_REASON_ROBOT
            return self._transition(node, NodeStatus.FAILURE, FAIL_REASON_ROBOT)
        if not st.command_issued:
            st.command_issued = True
            assert node.action is not None and node.role is not None
            self.trace.record(self.now, node.id, "command",
                              {"action": node.action.id, "role": node.role.value,
                               "label": node.label, "duration_ms": node.duration_ms or 0})
            self._transition(node, NodeStatus.RUNNING)
            self.sink(EngineCommand(CommandKind.ROBOT_START, self.now, node.id,
                                    node.action.id, node.role, node.label,
                                    duration_ms=node.duration_ms or 0))
        return NodeStatus.RUNNING

    def _tick_wait(self, node: TreeNode) -> NodeStatus:
        st = self.bb.state(node.id)
        if st.status in (NodeStatus.SUCCESS, NodeStatus.FAILURE):
            return st.status
        if st.result == "ack":
            return self._transition(node, NodeStatus.SUCCESS)
        if st.result == "fail":
            st.failure_reason = FAIL_REASON_HUMAN
            return self._transition(node, NodeStatus.FAILURE, FAIL_REASON_HUMAN)
        assert node.timeout_ms is not None
        if st.wait_started is None:
            st.wait_started = self.now
            assert node.action is not None and node.role is not None
            self.trace.record(self.now, node.id, "instruction",
                              {"action": node.action.id, "role": node.role.value,
                               "label": node.label, "timeout_ms": node.timeout_ms})
            self._transition(node, NodeStatus.RUNNING)
            self.sink(EngineCommand(CommandKind.INSTRUCTION, self.now, node.id,
                                    node.action.id, node.role, node.label,
                                    timeout_ms=node.timeout_ms))
            return NodeStatus.RUNNING
        if self.now - st.wait_started >= node.timeout_ms:
            st.failure_reason = FAIL_REASON_TIMEOUT
            return self._transition(node, NodeStatus.FAILURE, FAIL_REASON_TIMEOUT,
                                    extra={"timeout_ms": node.timeout_ms})
        return NodeStatus.RUNNING


def tick(tree: BehaviorTree, bb: Blackboard, now: int, inbox: Iterable[EngineEvent],
         trace: TraceRecorder | None = None, sink: CommandSink | None = None) -> NodeStatus:
    """Apply the inbox, then evaluate the tree once. Returns the root status."""
    t = _Ticker(tree, bb, now, trace if trace is not None else TraceRecorder(),
                sink if sink is not None else _noop_sink)
    t.apply_events(inbox)
    return t.tick_node(tree.root)


def next_deadline(tree: BehaviorTree, bb: Blackboard) -> int | None:
    """Earliest time at which a timer can change the tree state."""
    deadlines = []
    for node_id, st in bb.node_state.items():
        if st.status is not NodeStatus.RUNNING:
            continue
        node = tree.nodes.get(node_id)
        if node is None:
            continue
        if node.kind is NodeKind.TIMEOUT_DECORATOR and st.entered_at is not None:
            assert node.budget_ms is not None
            deadlines.append(st.entered_at + node.budget_ms)
        elif node.kind is NodeKind.WAIT_FOR_HUMAN and st.wait_started is not None:
            assert node.timeout_ms is not None
            deadlines.append(st.wait_started + node.timeout_ms)
    return min(deadlines) if deadlines else None


class ScriptedSource:
    """Event source replaying a fixed list of events; commands are ignored."""

    def __init__(self, events: Iterable[EngineEvent]):
        self._events = sorted(events, key=lambda e: e.timestamp)

    def on_command(self, command: EngineCommand) -> None:
        return None

    def next_time(self) -> int | None:
        return self._events[0].timestamp if self._events else None

    def pop_until(self, t: int) -> list[EngineEvent]:
        out = []
        while self._events and self._events[0].timestamp <= t:
            out.append(self._events.pop(0))
        return out


def strategies_used(tree: BehaviorTree, events: Iterable[TraceEvent]) -> dict[str, tuple[str, int]]:
    used: dict[str, tuple[str, int]] = {}
    for ev in events:
        if ev.kind != "status" or ev.detail.get("status") != "success" or ev.node is None:
            continue
        node = tree.nodes.get(ev.node)
        if (node is not None and node.kind is NodeKind.STRATEGY_SEQUENCE
                and node.assistance_level is not None):
            assert node.part_id is not None and node.strategy_id is not None
            used[node.part_id] = (node.strategy_id, node.assistance_level)
    return used


def run_episode(tree: BehaviorTree, persona_id: int, source: EventSource, clock,
                trace: TraceRecorder | None = None) -> EpisodeTrace:
    """Drive the tree until the root settles; returns the full trace.

    Termination: every running strategy sits under a budget timeout, so the
    next deadline always exists while the root is running, and total
    simulated time is bounded by the sum of all strategy budgets.
    """
    bb = Blackboard(active_persona=persona_id)
    rec = trace if trace is not None else TraceRecorder()
    rec.record(clock.now(), None, "episode_start",
               {"persona": persona_id, "spec": tree.spec.id, "digest": tree.digest})
    status = tick(tree, bb, clock.now(), [], rec, source.on_command)
    annotation = None
    while status is NodeStatus.RUNNING:
        deadline = next_deadline(tree, bb)
        event_time = source.next_time()
        candidates = [t for t in (deadline, event_time) if t is not None]
        if not candidates:
            # Nothing can ever change the state again: real-time source gone.
            annotation = "operator disconnected"
            status = NodeStatus.FAILURE
            break
        t = max(min(candidates), clock.now())
        clock.advance_to(t)
        status = tick(tree, bb, t, source.pop_until(t), rec, source.on_command)

    if status is NodeStatus.SUCCESS:
        outcome, failed_part = "completed", None
        rec.record(clock.now(), None, "outcome", {"outcome": "completed"})
    else:
        outcome, failed_part = "failed", bb.failed_part_id
        detail: dict = {"outcome": "failed"}
        if failed_part is not None:
            detail["part"] = failed_part
        if annotation is not None:
            detail["annotation"] = annotation
        rec.record(clock.now(), None, "outcome", detail)

    return EpisodeTrace(
        persona_id=persona_id,
        spec_id=tree.spec.id,
        digest=tree.digest,
        events=tuple(rec.events),
        outcome=outcome,
        failed_part=failed_part,
        annotation=annotation,
        strategies_used=strategies_used(tree, rec.events),
    )


def replay_trace(tree: BehaviorTree, trace: EpisodeTrace) -> EpisodeTrace:
    """Re-run a recorded episode on the simulated clock from its own events."""
    from .clock import SimulatedClock

    start = trace.events[0].time if trace.events else 0
    return run_episode(tree, trace.persona_id, ScriptedSource(trace.external_events()),
                       SimulatedClock(start))
