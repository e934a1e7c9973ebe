"""Simulated operators: human response policies and a robot timing model.

The simulator answers engine commands with scheduled events: robot commands
complete (or fail) after the leg duration scaled by the robot model, human
instructions are acknowledged after the action's nominal duration plus the
policy latency. A policy that respects capabilities stays silent on actions
the persona cannot perform, so those strategies run into their timeout and
the engine escalates. All randomness comes from a counter-based generator
keyed by the sweep seed, so every (spec, persona, policy, seed) combination
is reproducible bit for bit.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .access import UnknownPersonaError, can_perform
from .clock import SimulatedClock
from .compiler import BehaviorTree, NodeKind, compile_tree
from .engine import (
    CommandKind,
    EngineCommand,
    EngineEvent,
    EpisodeTrace,
    EventKind,
    run_episode,
)
from .model import Persona, ProcessSpec, personas_by_id

RESPONSIVE = "responsive"
SILENT = "silent"
FAULTY = "faulty"
SCRIPTED = "scripted"


@dataclass(frozen=True)
class HumanPolicy:
    mode: str = RESPONSIVE
    ack_latency_ms: int = 0
    latency_range_ms: tuple[int, int] | None = None  # uniform draw when set
    fail_probability: float = 0.0
    script: tuple[tuple[str, str], ...] = ()  # (action_id, "ack"|"fail"|"none")
    respects_capabilities: bool = True
    name: str = ""

    @property
    def label(self) -> str:
        return self.name or self.mode

    @staticmethod
    def responsive(latency_ms: int = 0, latency_range_ms: tuple[int, int] | None = None,
                   respects_capabilities: bool = True) -> "HumanPolicy":
        return HumanPolicy(RESPONSIVE, ack_latency_ms=latency_ms,
                           latency_range_ms=latency_range_ms,
                           respects_capabilities=respects_capabilities)

    @staticmethod
    def silent() -> "HumanPolicy":
        return HumanPolicy(SILENT)

    @staticmethod
    def faulty(fail_probability: float, latency_ms: int = 0) -> "HumanPolicy":
        return HumanPolicy(FAULTY, ack_latency_ms=latency_ms,
                           fail_probability=fail_probability)

    @staticmethod
    def scripted(script: Sequence[tuple[str, str]]) -> "HumanPolicy":
        return HumanPolicy(SCRIPTED, script=tuple(script))


@dataclass(frozen=True)
class RobotModel:
    duration_scale: float = 1.0
    fail_probability: float = 0.0

    def __post_init__(self) -> None:
        if self.duration_scale <= 0:
            raise ValueError("duration_scale must be positive")


class SimulatedAgents:
    """EventSource answering engine commands per the given policy/model."""

    def __init__(self, tree: BehaviorTree, personas: Sequence[Persona], persona_id: int,
                 policy: HumanPolicy, robot: RobotModel, seed: int):
        by_id = personas_by_id(personas)
        if persona_id not in by_id:
            raise UnknownPersonaError(f"unknown persona id: {persona_id}")
        self._tree = tree
        self._profile = by_id[persona_id].profile
        self._policy = policy
        self._robot = robot
        self._rng = np.random.Generator(np.random.Philox(key=seed))
        self._heap: list[tuple[int, int, EngineEvent]] = []
        self._seq = 0
        self._script = list(policy.script)

    def _schedule(self, t: int, kind: EventKind, target: str) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (t, self._seq, EngineEvent(kind, target, t)))

    def _latency(self) -> int:
        if self._policy.latency_range_ms is not None:
            lo, hi = self._policy.latency_range_ms
            return int(self._rng.integers(lo, hi, endpoint=True))
        return self._policy.ack_latency_ms

    def on_command(self, command: EngineCommand) -> None:
        if command.kind is CommandKind.ROBOT_START:
            duration = int(round(command.duration_ms * self._robot.duration_scale))
            failed = (self._robot.fail_probability > 0
                      and self._rng.random() < self._robot.fail_probability)
            kind = EventKind.ROBOT_FAIL if failed else EventKind.ROBOT_DONE
            self._schedule(command.time + duration, kind, command.node_id)
            return

        policy = self._policy
        if policy.mode == SILENT:
            return
        node = self._tree.nodes[command.node_id]
        assert node.action is not None
        if policy.mode == SCRIPTED:
            for i, (action_id, response) in enumerate(self._script):
                if action_id == node.action.id:
                    del self._script[i]
                    if response == "ack":
                        self._schedule(command.time + node.action.nominal_duration_ms,
                                       EventKind.HUMAN_ACK, command.node_id)
                    elif response == "fail":
                        self._schedule(command.time + node.action.nominal_duration_ms,
                                       EventKind.HUMAN_FAIL, command.node_id)
                    return
            return
        if policy.respects_capabilities and not can_perform(self._profile, node.action):
            return  # cannot perform: stay silent and let the timeout escalate
        delay = node.action.nominal_duration_ms + self._latency()
        failed = (policy.mode == FAULTY and policy.fail_probability > 0
                  and self._rng.random() < policy.fail_probability)
        kind = EventKind.HUMAN_FAIL if failed else EventKind.HUMAN_ACK
        self._schedule(command.time + delay, kind, command.node_id)

    def next_time(self) -> int | None:
        return self._heap[0][0] if self._heap else None

    def pop_until(self, t: int) -> list[EngineEvent]:
        out = []
        while self._heap and self._heap[0][0] <= t:
            out.append(heapq.heappop(self._heap)[2])
        return out


def simulate_tree(tree: BehaviorTree, personas: Sequence[Persona], persona_id: int,
                  policy: HumanPolicy, robot: RobotModel = RobotModel(),
                  seed: int = 0) -> EpisodeTrace:
    agents = SimulatedAgents(tree, personas, persona_id, policy, robot, seed)
    return run_episode(tree, persona_id, agents, SimulatedClock())


def simulate(spec: ProcessSpec, personas: Sequence[Persona], persona_id: int,
             policy: HumanPolicy, robot: RobotModel = RobotModel(),
             seed: int = 0) -> EpisodeTrace:
    """Run one episode on the simulated clock. Deterministic given the seed."""
    tree = compile_tree(spec, personas)
    return simulate_tree(tree, personas, persona_id, policy, robot, seed)


@dataclass(frozen=True)
class EpisodeStats:
    persona_id: int
    outcome: str
    failed_part: str | None
    makespan_ms: int
    levels_used: dict[str, int]
    max_level: int
    timeouts: int
    retries: int
    fallthroughs: int


def summarize(trace: EpisodeTrace, tree: BehaviorTree) -> EpisodeStats:
    """Derive the episode statistics purely from one trace."""
    if not any(e.kind == "outcome" for e in trace.events):
        raise ValueError("incomplete trace: no outcome event")
    timeouts = retries = 0
    entered: dict[str, list[int]] = {}
    for ev in trace.events:
        if ev.kind == "retry":
            retries += 1
            continue
        if ev.kind != "status" or ev.node is None:
            continue
        node = tree.nodes.get(ev.node)
        reason = ev.detail.get("reason")
        # Count each expiry once, at the node that fired; the same reason
        # propagates up through the strategy ancestors.
        if node is not None and ev.detail.get("status") == "failure" and (
                (node.kind is NodeKind.WAIT_FOR_HUMAN and reason == "timeout")
                or (node.kind is NodeKind.TIMEOUT_DECORATOR and reason == "budget_timeout")):
            timeouts += 1
        if (node is not None and node.kind is NodeKind.STRATEGY_SEQUENCE
                and node.assistance_level is not None
                and ev.detail.get("status") == "running"):
            assert node.part_id is not None
            entered.setdefault(node.part_id, []).append(node.assistance_level)
    fallthroughs = sum(max(0, len(levels) - 1) for levels in entered.values())
    max_level = max((lv for levels in entered.values() for lv in levels), default=0)
    makespan = trace.events[-1].time - trace.events[0].time if len(trace.events) > 1 else 0
    return EpisodeStats(
        persona_id=trace.persona_id,
        outcome=trace.outcome,
        failed_part=trace.failed_part,
        makespan_ms=makespan,
        levels_used={part: level for part, (_sid, level) in trace.strategies_used.items()},
        max_level=max_level,
        timeouts=timeouts,
        retries=retries,
        fallthroughs=fallthroughs,
    )


@dataclass(frozen=True)
class SweepRow:
    persona_id: int
    policy: str
    seed: int
    stats: EpisodeStats


CSV_HEADER = "persona_id,policy,seed,outcome,makespan_ms,max_level,timeouts,retries,fallthroughs"


def sweep(spec: ProcessSpec, personas: Sequence[Persona], policies: Sequence[HumanPolicy],
          seeds: Sequence[int], robot: RobotModel = RobotModel()) -> list[SweepRow]:
    """One row per persona x policy x seed, in that nesting order.

    Episodes are independent (own generator, own blackboard), so callers may
    distribute them; this implementation keeps the stable input order.
    """
    tree = compile_tree(spec, personas)
    rows = []
    for persona in personas:
        for policy in policies:
            for seed in seeds:
                trace = simulate_tree(tree, personas, persona.id, policy, robot, seed)
                rows.append(SweepRow(persona.id, policy.label, seed, summarize(trace, tree)))
    return rows


def _outcome_cell(stats: EpisodeStats) -> str:
    if stats.outcome == "completed":
        return "completed"
    return f"failed:{stats.failed_part}" if stats.failed_part else "failed"


def stats_row(row: SweepRow) -> str:
    s = row.stats
    return (f"{row.persona_id},{row.policy},{row.seed},{_outcome_cell(s)},"
            f"{s.makespan_ms},{s.max_level},{s.timeouts},{s.retries},{s.fallthroughs}")


def stats_csv(rows: Sequence[SweepRow]) -> str:
    return "\n".join([CSV_HEADER, *(stats_row(r) for r in rows)]) + "\n"
