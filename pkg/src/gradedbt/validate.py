"""Structural validation of process specs against the domain invariants.

validate_process is pure and order-stable: diagnostics come out in document
order, so calling it twice yields the same list. Persona-dependent checks
(eligibility coverage) run only when a persona set is supplied.
"""
from __future__ import annotations

from typing import Sequence

from .access import effective_allowlist
from .diagnostics import Diagnostic, Severity
from .model import Actor, AllowlistMode, Persona, ProcessSpec

_MAX_ATTEMPTS_DEFAULT = 3


def _err(path: str, message: str, code: str) -> Diagnostic:
    return Diagnostic(Severity.ERROR, path, message, code)


def _warn(path: str, message: str, code: str) -> Diagnostic:
    return Diagnostic(Severity.WARNING, path, message, code)


def validate_process(
    spec: ProcessSpec, personas: Sequence[Persona] | None = None
) -> list[Diagnostic]:
    out: list[Diagnostic] = []
    vocab: set[str] = set()

    if spec.default_timeout_ms <= 0:
        out.append(_err("default_timeout", "must be a positive duration", "bad-timeout"))

    for i, cat in enumerate(spec.vocabulary):
        path = f"vocabulary/{i}"
        if not cat.id:
            out.append(_err(f"{path}/id", "capability id must be non-empty", "empty-id"))
        elif cat.id in vocab:
            out.append(_err(f"{path}/id", f"duplicate capability id '{cat.id}'", "duplicate-id"))
        vocab.add(cat.id)

    known_personas = {p.id for p in personas} if personas is not None else None

    part_ids: set[str] = set()
    for pi, part in enumerate(spec.part_processes):
        ppath = f"part_processes/{pi}"
        if not part.id:
            out.append(_err(f"{ppath}/id", "part process id must be non-empty", "empty-id"))
        elif part.id in part_ids:
            out.append(_err(f"{ppath}/id", f"duplicate part process id '{part.id}'", "duplicate-id"))
        part_ids.add(part.id)

        if not part.strategies:
            out.append(_err(f"{ppath}/strategies", "part process needs at least one strategy", "no-strategies"))

        strategy_ids: set[str] = set()
        action_ids: set[str] = set()
        prev_level: int | None = None
        top_human_level: int | None = None  # highest level among strategies with human involvement
        robot_only: list[tuple[int, int]] = []  # (index, level) of all-robot strategies

        for si, strategy in enumerate(part.strategies):
            spath = f"{ppath}/strategies/{si}"
            if not strategy.id:
                out.append(_err(f"{spath}/id", "strategy id must be non-empty", "empty-id"))
            elif strategy.id in strategy_ids:
                out.append(_err(f"{spath}/id", f"duplicate strategy id '{strategy.id}'", "duplicate-id"))
            strategy_ids.add(strategy.id)

            if strategy.assistance_level < 0:
                out.append(_err(f"{spath}/assistance_level", "assistance level must be >= 0", "bad-level"))
            if prev_level is not None and strategy.assistance_level < prev_level:
                out.append(_err(
                    f"{spath}/assistance_level",
                    f"assistance levels must be non-decreasing ({strategy.assistance_level} after {prev_level})",
                    "level-order",
                ))
            prev_level = strategy.assistance_level

            if strategy.allowlist_mode is not AllowlistMode.MANUAL and strategy.persona_ids:
                out.append(_err(
                    f"{spath}/allowlist/persona_ids",
                    f"persona_ids only allowed with manual mode, not {strategy.allowlist_mode.value}",
                    "allowlist-ids",
                ))
            if strategy.allowlist_mode is AllowlistMode.MANUAL and known_personas is not None:
                unknown = sorted(strategy.persona_ids - known_personas)
                if unknown:
                    out.append(_err(
                        f"{spath}/allowlist/persona_ids",
                        f"unknown persona ids: {', '.join(map(str, unknown))}",
                        "unknown-persona",
                    ))

            if not strategy.actions:
                out.append(_err(f"{spath}/actions", "strategy needs at least one action", "no-actions"))

            goals_here: set[str] = set()
            any_human = False
            for ai, action in enumerate(strategy.actions):
                apath = f"{spath}/actions/{ai}"
                if not action.id:
                    out.append(_err(f"{apath}/id", "action id must be non-empty", "empty-id"))
                elif action.id in action_ids:
                    out.append(_err(f"{apath}/id", f"duplicate action id '{action.id}' within part process", "duplicate-id"))
                action_ids.add(action.id)

                if not action.goal_id:
                    out.append(_err(f"{apath}/goal_id", "action goal_id must be non-empty", "empty-goal"))
                elif action.goal_id in goals_here:
                    out.append(_err(
                        f"{apath}/goal_id",
                        f"goal '{action.goal_id}' reached by more than one action of this strategy",
                        "duplicate-goal",
                    ))
                goals_here.add(action.goal_id)

                unknown_caps = sorted(action.required_capabilities - vocab)
                if unknown_caps:
                    out.append(_err(
                        f"{apath}/required_capabilities",
                        f"unknown capability ids: {', '.join(unknown_caps)}",
                        "unknown-capability",
                    ))
                if action.actor is Actor.ROBOT and action.required_capabilities:
                    out.append(_err(
                        f"{apath}/required_capabilities",
                        "robot actions must not require human capabilities",
                        "robot-capabilities",
                    ))
                if action.companions is not None and action.actor is not Actor.SHARED:
                    out.append(_err(f"{apath}/companions", "companions only apply to shared actions", "bad-companions"))
                if action.nominal_duration_ms < 0:
                    out.append(_err(f"{apath}/nominal_duration", "must not be negative", "bad-duration"))
                if action.timeout_ms is not None and action.timeout_ms <= 0:
                    out.append(_err(f"{apath}/timeout", "must be a positive duration", "bad-timeout"))
                if action.actor is not Actor.ROBOT:
                    any_human = True

            missing = sorted(part.goal_ids - goals_here)
            if missing:
                out.append(_err(
                    spath,
                    f"strategy '{strategy.id}' does not reach part goals: {', '.join(missing)}",
                    "goal-coverage",
                ))

            if any_human:
                if top_human_level is None or strategy.assistance_level > top_human_level:
                    top_human_level = strategy.assistance_level
            else:
                robot_only.append((si, strategy.assistance_level))

        for si, level in robot_only:
            if top_human_level is not None and level <= top_human_level:
                out.append(_err(
                    f"{ppath}/strategies/{si}/assistance_level",
                    "fully automated strategy must sit above every strategy with human actions",
                    "automation-level",
                ))

        if personas is not None:
            uncovered = []
            for persona in personas:
                admitted_any = False
                for strategy in part.strategies:
                    allow = effective_allowlist(strategy, personas)
                    if allow is None or persona.id in allow:
                        admitted_any = True
                        break
                if not admitted_any:
                    uncovered.append(persona.id)
            if uncovered and not part.may_fail:
                out.append(_err(
                    ppath,
                    "personas without any eligible strategy: "
                    + ", ".join(map(str, uncovered))
                    + " (mark the part may_fail or add a strategy)",
                    "uncovered-personas",
                ))
            elif uncovered:
                out.append(_warn(
                    ppath,
                    f"may fail for personas {', '.join(map(str, uncovered))}: no eligible strategy",
                    "may-fail",
                ))
            elif part.may_fail:
                out.append(_warn(
                    ppath,
                    "marked may_fail but every persona has an eligible strategy",
                    "may-fail-unused",
                ))

    return out
