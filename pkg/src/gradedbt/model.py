"""Core domain types for graded-assistance process definitions.

A process is a fixed sequence of part processes. Each part process carries
alternative strategies ordered by assistance level (0 = fully manual, higher =
more robot involvement). Strategies list the concrete actions that reach the
part's goals. All durations are integer milliseconds.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Sequence


class Actor(str, enum.Enum):
    HUMAN = "human"
    ROBOT = "robot"
    SHARED = "shared"


class AllowlistMode(str, enum.Enum):
    MANUAL = "manual"
    DERIVED = "derived"
    UNIVERSAL = "universal"


@dataclass(frozen=True)
class CapabilityCategory:
    """One entry of the capability vocabulary (e.g. fist/pinch grip)."""

    id: str
    label: str


@dataclass(frozen=True)
class CapabilityProfile:
    """Which vocabulary categories a persona is impaired in (binary model)."""

    impaired: frozenset[str] = frozenset()


@dataclass(frozen=True)
class Persona:
    id: int
    name: str
    profile: CapabilityProfile = CapabilityProfile()
    notes: str = ""


@dataclass(frozen=True)
class CompanionAction:
    """Robot sub-action accompanying a shared action (hold/release legs)."""

    id: str
    label: str
    nominal_duration_ms: int = 0


@dataclass(frozen=True)
class SharedCompanions:
    position: CompanionAction | None = None
    release: CompanionAction | None = None


@dataclass(frozen=True)
class ActionSpec:
    """One atomic step of a strategy.

    required_capabilities constrain the human side only; robot actions must
    declare none. timeout_ms None means "inherit" the process default.
    """

    id: str
    label: str
    actor: Actor
    goal_id: str
    required_capabilities: frozenset[str] = frozenset()
    skip_if: frozenset[str] = frozenset()
    sets_flags: frozenset[str] = frozenset()
    nominal_duration_ms: int = 0
    timeout_ms: int | None = None
    companions: SharedCompanions | None = None


@dataclass(frozen=True)
class Strategy:
    """One alternative way to complete a part process."""

    id: str
    assistance_level: int
    allowlist_mode: AllowlistMode
    actions: tuple[ActionSpec, ...]
    persona_ids: frozenset[int] = frozenset()


@dataclass(frozen=True)
class PartProcess:
    """A sequential stage of the overall process with alternative strategies.

    goal_ids is the contract every strategy must reach; strategies may define
    extra private goals for intermediate robot steps. may_fail acknowledges
    that some persona may have no eligible strategy here.
    """

    id: str
    name: str
    goal_ids: frozenset[str]
    strategies: tuple[Strategy, ...]
    may_fail: bool = False


@dataclass(frozen=True)
class ProcessSpec:
    id: str
    name: str
    vocabulary: tuple[CapabilityCategory, ...]
    part_processes: tuple[PartProcess, ...]
    default_timeout_ms: int
    meta: Mapping[str, object] = field(default_factory=dict)

    def vocabulary_ids(self) -> frozenset[str]:
        return frozenset(c.id for c in self.vocabulary)

    def part(self, part_id: str) -> PartProcess:
        for p in self.part_processes:
            if p.id == part_id:
                return p
        raise KeyError(part_id)


def personas_by_id(personas: Sequence[Persona]) -> dict[int, Persona]:
    return {p.id: p for p in personas}
