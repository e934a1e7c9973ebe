"""Compile a validated process spec into an executable behavior tree.

Tree shape: a root sequence of one selector per part process. Each selector
child is a persona condition (allowlists resolved here, at compile time)
guarding a timeout decorator (strategy time budget) over the strategy's
action sequence. Every action becomes goal gate -> retry decorator -> leaf;
shared actions expand to a robot/wait pair, or to position/ack/release when
companion sub-actions are given. Selectors keep memory at runtime: a failed
strategy is never re-entered, the next one is tried instead (fall-through).
"""
from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

from .access import effective_allowlist
from .diagnostics import Diagnostic, Severity
from .model import ActionSpec, Actor, PartProcess, Persona, ProcessSpec, Strategy
from .specio import serialize_process
from .validate import validate_process

DEFAULT_MAX_ATTEMPTS = 3


class NodeKind(str, enum.Enum):
    ROOT_SEQUENCE = "root_sequence"
    STRATEGY_SELECTOR = "strategy_selector"
    STRATEGY_SEQUENCE = "strategy_sequence"
    PERSONA_CONDITION = "persona_condition"
    TIMEOUT_DECORATOR = "timeout_decorator"
    RETRY_DECORATOR = "retry_decorator"
    GOAL_GATE = "goal_gate"
    ROBOT_ACTION = "robot_action"
    WAIT_FOR_HUMAN = "wait_for_human"


class Role(str, enum.Enum):
    """Which leg of an action a leaf implements (shared actions have three)."""

    MAIN = "main"
    POSITION = "position"
    ACK = "ack"
    RELEASE = "release"


@dataclass(frozen=True)
class TreeNode:
    id: str
    kind: NodeKind
    label: str
    children: tuple["TreeNode", ...] = ()
    part_id: str | None = None
    strategy_id: str | None = None
    assistance_level: int | None = None
    universal: bool = False
    persona_ids: frozenset[int] | None = None
    budget_ms: int | None = None
    max_attempts: int | None = None
    action: ActionSpec | None = None
    role: Role | None = None
    duration_ms: int | None = None
    timeout_ms: int | None = None
    skippable: bool = False

    def walk(self) -> Iterator["TreeNode"]:
        yield self
        for child in self.children:
            yield from child.walk()


@dataclass(frozen=True)
class BehaviorTree:
    root: TreeNode
    spec: ProcessSpec
    digest: str
    nodes: Mapping[str, TreeNode] = field(repr=False)

    def node(self, node_id: str) -> TreeNode:
        return self.nodes[node_id]

    def selectors(self) -> tuple[TreeNode, ...]:
        return self.root.children


class CompileError(Exception):
    def __init__(self, diagnostics: list[Diagnostic]):
        errors = [d for d in diagnostics if d.severity is Severity.ERROR]
        super().__init__(f"{len(errors)} validation error(s): " + "; ".join(d.format() for d in errors[:5]))
        self.diagnostics = diagnostics


def _action_timeout(action: ActionSpec, spec: ProcessSpec) -> int:
    return action.timeout_ms if action.timeout_ms is not None else spec.default_timeout_ms


def _leaf_nodes(base: str, part: PartProcess, strategy: Strategy, action: ActionSpec,
                spec: ProcessSpec) -> list[TreeNode]:
    common = dict(part_id=part.id, strategy_id=strategy.id, action=action)
    wait_timeout = _action_timeout(action, spec)
    if action.actor is Actor.ROBOT:
        return [TreeNode(f"{base}/do", NodeKind.ROBOT_ACTION, action.label, role=Role.MAIN,
                         duration_ms=action.nominal_duration_ms, **common)]
    if action.actor is Actor.HUMAN:
        return [TreeNode(f"{base}/do", NodeKind.WAIT_FOR_HUMAN, action.label, role=Role.MAIN,
                         duration_ms=action.nominal_duration_ms, timeout_ms=wait_timeout, **common)]
    # Shared: robot positions/holds, human acknowledges, optional robot release.
    comp = action.companions
    position = comp.position if comp else None
    release = comp.release if comp else None
    legs = [TreeNode(f"{base}/pos", NodeKind.ROBOT_ACTION,
                     position.label if position else action.label,
                     role=Role.POSITION,
                     duration_ms=position.nominal_duration_ms if position else action.nominal_duration_ms,
                     **common)]
    legs.append(TreeNode(f"{base}/ack", NodeKind.WAIT_FOR_HUMAN, action.label, role=Role.ACK,
                         duration_ms=action.nominal_duration_ms, timeout_ms=wait_timeout, **common))
    if release is not None:
        legs.append(TreeNode(f"{base}/rel", NodeKind.ROBOT_ACTION, release.label, role=Role.RELEASE,
                             duration_ms=release.nominal_duration_ms, **common))
    return legs


def _action_unit(part: PartProcess, strategy: Strategy, action: ActionSpec,
                 spec: ProcessSpec, max_attempts: int) -> TreeNode:
    base = f"pp:{part.id}/s:{strategy.id}/a:{action.id}"
    legs = _leaf_nodes(base, part, strategy, action, spec)
    if len(legs) == 1:
        inner = legs[0]
    else:
        inner = TreeNode(f"{base}/grp", NodeKind.STRATEGY_SEQUENCE, action.label,
                         children=tuple(legs), part_id=part.id, strategy_id=strategy.id,
                         action=action)
    retry = TreeNode(f"{base}/retry", NodeKind.RETRY_DECORATOR, action.label,
                     children=(inner,), part_id=part.id, strategy_id=strategy.id,
                     action=action, max_attempts=max_attempts)
    return TreeNode(f"{base}/gate", NodeKind.GOAL_GATE, action.label,
                    children=(retry,), part_id=part.id, strategy_id=strategy.id,
                    action=action, skippable=bool(action.skip_if))


def compile_tree(
    spec: ProcessSpec,
    personas: Sequence[Persona],
    *,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    strategy_budgets: Mapping[tuple[str, str], int] | None = None,
) -> BehaviorTree:
    """Build the behavior tree, or raise CompileError with the diagnostics.

    strategy_budgets overrides a strategy's time budget (keys are
    (part_id, strategy_id) pairs); the default budget is the sum of the
    strategy's per-action timeouts.
    """
    diags = validate_process(spec, personas)
    if any(d.severity is Severity.ERROR for d in diags):
        raise CompileError(diags)

    selectors = []
    for part in spec.part_processes:
        conds = []
        for strategy in part.strategies:
            units = tuple(
                _action_unit(part, strategy, action, spec, max_attempts)
                for action in strategy.actions
            )
            base = f"pp:{part.id}/s:{strategy.id}"
            seq = TreeNode(f"{base}/seq", NodeKind.STRATEGY_SEQUENCE, strategy.id,
                           children=units, part_id=part.id, strategy_id=strategy.id,
                           assistance_level=strategy.assistance_level)
            budget = None
            if strategy_budgets is not None:
                budget = strategy_budgets.get((part.id, strategy.id))
            if budget is None:
                budget = sum(_action_timeout(a, spec) for a in strategy.actions)
            timeout = TreeNode(f"{base}/budget", NodeKind.TIMEOUT_DECORATOR, strategy.id,
                               children=(seq,), part_id=part.id, strategy_id=strategy.id,
                               assistance_level=strategy.assistance_level, budget_ms=budget)
            allow = effective_allowlist(strategy, personas)
            conds.append(TreeNode(f"{base}/cond", NodeKind.PERSONA_CONDITION, strategy.id,
                                  children=(timeout,), part_id=part.id, strategy_id=strategy.id,
                                  assistance_level=strategy.assistance_level,
                                  universal=allow is None,
                                  persona_ids=allow))
        selectors.append(TreeNode(f"pp:{part.id}", NodeKind.STRATEGY_SELECTOR, part.name,
                                  children=tuple(conds), part_id=part.id))

    root = TreeNode("root", NodeKind.ROOT_SEQUENCE, spec.name, children=tuple(selectors))
    digest = hashlib.sha256(serialize_process(spec).encode("utf-8")).hexdigest()
    nodes = {n.id: n for n in root.walk()}
    return BehaviorTree(root=root, spec=spec, digest=digest, nodes=nodes)


def _node_doc(node: TreeNode) -> dict:
    doc: dict[str, object] = {"id": node.id, "kind": node.kind.value, "label": node.label}
    if node.part_id is not None:
        doc["part_id"] = node.part_id
    if node.strategy_id is not None:
        doc["strategy_id"] = node.strategy_id
    if node.assistance_level is not None:
        doc["assistance_level"] = node.assistance_level
    if node.kind is NodeKind.PERSONA_CONDITION:
        doc["personas"] = "all" if node.universal else sorted(node.persona_ids or ())
    if node.budget_ms is not None:
        doc["budget_ms"] = node.budget_ms
    if node.max_attempts is not None:
        doc["max_attempts"] = node.max_attempts
    if node.action is not None:
        doc["action_id"] = node.action.id
        doc["goal_id"] = node.action.goal_id
        doc["actor"] = node.action.actor.value
    if node.role is not None:
        doc["role"] = node.role.value
    if node.duration_ms is not None:
        doc["duration_ms"] = node.duration_ms
    if node.timeout_ms is not None:
        doc["timeout_ms"] = node.timeout_ms
    if node.skippable:
        doc["skippable"] = True
        doc["skip_if"] = sorted(node.action.skip_if) if node.action else []
    if node.children:
        doc["children"] = [_node_doc(c) for c in node.children]
    return doc


def tree_to_doc(tree: BehaviorTree) -> dict:
    return {"spec_id": tree.spec.id, "digest": tree.digest, "root": _node_doc(tree.root)}


def tree_to_json(tree: BehaviorTree) -> str:
    return json.dumps(tree_to_doc(tree), indent=2, ensure_ascii=False) + "\n"


def _dot_quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(tree: BehaviorTree) -> str:
    """Compact deterministic DOT digraph: one cluster per part process,
    one node per strategy, chained action nodes (dashed when skippable)."""
    lines = [
        "digraph process {",
        "  rankdir=LR;",
        "  node [shape=box, fontsize=10];",
        f"  root [label={_dot_quote(tree.spec.name)}, shape=doubleoctagon];",
    ]
    for pi, selector in enumerate(tree.selectors()):
        part = tree.spec.part_processes[pi]
        lines.append(f"  subgraph cluster_{pi} {{")
        lines.append(f"    label={_dot_quote(part.id)};")
        sel_id = _dot_quote(selector.id)
        lines.append(f"    {sel_id} [label={_dot_quote('select strategy')}, shape=diamond];")
        for cond in selector.children:
            who = "all personas" if cond.universal else "personas " + ",".join(map(str, sorted(cond.persona_ids or ())))
            label = f"{cond.strategy_id}\\nlevel {cond.assistance_level}\\n{who}"
            lines.append(f"    {_dot_quote(cond.id)} [label={_dot_quote(label)}, shape=folder];")
            lines.append(f"    {sel_id} -> {_dot_quote(cond.id)};")
            prev = cond.id
            seq = cond.children[0].children[0]
            for gate in seq.children:
                assert gate.action is not None
                style = ", style=dashed" if gate.skippable else ""
                label = f"{gate.action.label}\\n({gate.action.actor.value})"
                lines.append(f"    {_dot_quote(gate.id)} [label={_dot_quote(label)}{style}];")
                lines.append(f"    {_dot_quote(prev)} -> {_dot_quote(gate.id)};")
                prev = gate.id
        lines.append("  }")
        lines.append(f"  root -> {sel_id};")
    lines.append("}")
    return "\n".join(lines) + "\n"
