"""Accessibility checks: which personas can perform which actions/strategies.

A persona can perform an action iff none of the action's required capability
categories is impaired for them. Robot-only actions are performable by
everyone. Allowlists gate whole strategies: manual lists are taken verbatim,
derived lists are computed from capabilities, universal admits everyone.
"""
from __future__ import annotations

from typing import Iterable, Sequence

from .model import (
    ActionSpec,
    Actor,
    AllowlistMode,
    CapabilityProfile,
    PartProcess,
    Persona,
    Strategy,
)


class UnknownCapabilityError(ValueError):
    """A capability id is not part of the active vocabulary."""


class UnknownPersonaError(ValueError):
    """A persona id is not present in the loaded persona set."""


def _check_vocabulary(ids: Iterable[str], vocabulary: frozenset[str]) -> None:
    unknown = sorted(set(ids) - vocabulary)
    if unknown:
        raise UnknownCapabilityError(f"unknown capability ids: {', '.join(unknown)}")


def can_perform(
    profile: CapabilityProfile,
    action: ActionSpec,
    vocabulary: frozenset[str] | None = None,
) -> bool:
    """True iff the profile supports the action's human side.

    With a vocabulary given, unknown capability ids raise instead of silently
    reading as "not impaired".
    """
    if vocabulary is not None:
        _check_vocabulary(action.required_capabilities, vocabulary)
        _check_vocabulary(profile.impaired, vocabulary)
    if action.actor is Actor.ROBOT:
        return True
    return not (action.required_capabilities & profile.impaired)


def strategy_accessible(
    profile: CapabilityProfile,
    strategy: Strategy,
    vocabulary: frozenset[str] | None = None,
) -> bool:
    """True iff the profile supports every action of the strategy."""
    return all(can_perform(profile, a, vocabulary) for a in strategy.actions)


def derive_allowlist(
    strategy: Strategy,
    personas: Sequence[Persona],
    vocabulary: frozenset[str] | None = None,
) -> frozenset[int]:
    """Persona ids whose capability profile supports the whole strategy."""
    return frozenset(
        p.id for p in personas if strategy_accessible(p.profile, strategy, vocabulary)
    )


def effective_allowlist(
    strategy: Strategy,
    personas: Sequence[Persona],
    vocabulary: frozenset[str] | None = None,
) -> frozenset[int] | None:
    """Resolved admission set; None means universal (admit everyone)."""
    if strategy.allowlist_mode is AllowlistMode.UNIVERSAL:
        return None
    if strategy.allowlist_mode is AllowlistMode.MANUAL:
        return frozenset(strategy.persona_ids)
    return derive_allowlist(strategy, personas, vocabulary)


def eligible_strategies(
    part: PartProcess,
    persona_id: int,
    personas: Sequence[Persona],
    vocabulary: frozenset[str] | None = None,
) -> list[Strategy]:
    """Order-preserving filter of the part's strategies for one persona."""
    known = {p.id for p in personas}
    if persona_id not in known:
        raise UnknownPersonaError(f"unknown persona id: {persona_id}")
    out = []
    for strategy in part.strategies:
        admitted = effective_allowlist(strategy, personas, vocabulary)
        if admitted is None or persona_id in admitted:
            out.append(strategy)
    return out
