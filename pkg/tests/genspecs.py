"""Random process generators and independent oracles for the test suite.

Everything here recomputes expectations from the plain data model with naive
loops, on purpose: these functions must not share logic with the library so
that an agreement between the two is evidence, not tautology.
"""
from __future__ import annotations

import random
from typing import Sequence

from gradedbt.model import (
    ActionSpec,
    Actor,
    AllowlistMode,
    CapabilityCategory,
    CapabilityProfile,
    PartProcess,
    Persona,
    ProcessSpec,
    Strategy,
)

# -- independent oracles ------------------------------------------------------


def oracle_human_side(action: ActionSpec) -> bool:
    return action.actor is not Actor.ROBOT


def oracle_can_do(persona: Persona, action: ActionSpec) -> bool:
    if not oracle_human_side(action):
        return True
    return not (set(action.required_capabilities) & set(persona.profile.impaired))


def oracle_eligible_ids(part: PartProcess, persona: Persona) -> list[str]:
    """Strategy ids this persona may enter, in declared order."""
    out = []
    for strategy in part.strategies:
        if strategy.allowlist_mode is AllowlistMode.UNIVERSAL:
            ok = True
        elif strategy.allowlist_mode is AllowlistMode.MANUAL:
            ok = persona.id in strategy.persona_ids
        else:
            ok = all(oracle_can_do(persona, a) for a in strategy.actions)
        if ok:
            out.append(strategy.id)
    return out


def oracle_strategy_budget(spec: ProcessSpec, strategy: Strategy) -> int:
    total = 0
    for action in strategy.actions:
        total += action.timeout_ms if action.timeout_ms is not None else spec.default_timeout_ms
    return total


def oracle_episode_bound(spec: ProcessSpec) -> int:
    """Upper bound on episode logical duration: every strategy is hard-capped
    by its budget and no strategy is ever entered twice."""
    return sum(oracle_strategy_budget(spec, s)
               for part in spec.part_processes for s in part.strategies)


def oracle_resume_plan(strategy: Strategy, reached_goals: set[str]) -> list[str]:
    """Action ids the strategy must still execute given already-reached goals,
    in declared order."""
    return [a.id for a in strategy.actions if a.goal_id not in reached_goals]


def oracle_covered(part: PartProcess, persona: Persona) -> bool:
    return bool(oracle_eligible_ids(part, persona))


# -- random spec generation ---------------------------------------------------

_CAP_POOL = ["reach", "rotate", "grip", "press", "dexterity", "bend", "lift", "twist"]


def make_personas(rng: random.Random, vocabulary: Sequence[str],
                  n: int | None = None) -> list[Persona]:
    n = n if n is not None else rng.randint(2, 5)
    personas = []
    for pid in range(1, n + 1):
        impaired = frozenset(c for c in vocabulary if rng.random() < 0.3)
        personas.append(Persona(pid, f"P{pid}", CapabilityProfile(impaired)))
    return personas


def _action(rng: random.Random, part_id: str, strat_id: str, idx: int, goal: str,
            actor: Actor, vocabulary: Sequence[str], *,
            with_skip_if: bool, flags_so_far: list[str]) -> ActionSpec:
    required = frozenset()
    if actor is not Actor.ROBOT and rng.random() < 0.8:
        required = frozenset(rng.sample(vocabulary, rng.randint(1, min(2, len(vocabulary)))))
    sets_flags = frozenset()
    if rng.random() < 0.25:
        flag = f"flag_{part_id}_{strat_id}_{idx}"
        sets_flags = frozenset({flag})
        flags_so_far.append(flag)
    skip_if = frozenset()
    if with_skip_if and flags_so_far and rng.random() < 0.2:
        skip_if = frozenset({rng.choice(flags_so_far)})
    timeout = None if rng.random() < 0.5 else rng.randint(5, 100)
    return ActionSpec(
        id=f"{part_id}_{strat_id}_a{idx}",
        label=f"step {idx} of {strat_id}",
        actor=actor,
        goal_id=goal,
        required_capabilities=required,
        skip_if=skip_if,
        sets_flags=sets_flags,
        nominal_duration_ms=rng.randint(1, 40),
        timeout_ms=timeout,
    )


def make_spec(rng: random.Random, *,
              n_parts: tuple[int, int] = (1, 3),
              n_strategies: tuple[int, int] = (1, 4),
              n_actions: tuple[int, int] = (1, 4),
              with_skip_if: bool = True,
              with_shared: bool = True,
              universal_last: bool | None = None,
              personas: list[Persona] | None = None) -> tuple[ProcessSpec, list[Persona]]:
    """A random valid process plus matching personas.

    Parts whose strategies leave some persona without an option are marked
    may_fail, so the result always passes validation and compiles.
    """
    vocabulary = rng.sample(_CAP_POOL, rng.randint(2, 5))
    if personas is None:
        personas = make_personas(rng, vocabulary)
    parts = []
    for p in range(rng.randint(*n_parts)):
        part_id = f"part{p}"
        goal_count = rng.randint(*n_actions)
        goals = [f"goal_{p}_{g}" for g in range(goal_count)]
        count = rng.randint(*n_strategies)
        strategies = []
        flags_so_far: list[str] = []
        for s in range(count):
            strat_id = f"{part_id}_s{s}"
            last = s == count - 1
            all_robot = last and (universal_last if universal_last is not None
                                  else rng.random() < 0.4)
            order = goals[:]
            rng.shuffle(order)
            actions = []
            human_slot = rng.randrange(len(order)) if not all_robot else -1
            for idx, goal in enumerate(order):
                if all_robot:
                    actor = Actor.ROBOT
                elif idx == human_slot:
                    # force one human-side action so only the top strategy
                    # can be fully automated
                    actor = Actor.HUMAN if not with_shared or rng.random() < 0.7 else Actor.SHARED
                else:
                    actor = rng.choice(
                        [Actor.HUMAN, Actor.ROBOT]
                        + ([Actor.SHARED] if with_shared else []))
                actions.append(_action(rng, part_id, strat_id, idx, goal, actor,
                                       vocabulary, with_skip_if=with_skip_if,
                                       flags_so_far=flags_so_far))
            if rng.random() < 0.2:
                actions.append(_action(rng, part_id, strat_id, len(actions),
                                       f"extra_{part_id}_{strat_id}", Actor.ROBOT,
                                       vocabulary, with_skip_if=with_skip_if,
                                       flags_so_far=flags_so_far))
            if all_robot:
                mode, ids = AllowlistMode.UNIVERSAL, frozenset()
            else:
                roll = rng.random()
                if roll < 0.55:
                    mode, ids = AllowlistMode.DERIVED, frozenset()
                elif roll < 0.8:
                    pool = [q.id for q in personas]
                    size = rng.randint(0 if rng.random() < 0.1 else 1, len(pool))
                    mode, ids = AllowlistMode.MANUAL, frozenset(rng.sample(pool, size))
                else:
                    mode, ids = AllowlistMode.UNIVERSAL, frozenset()
            strategies.append(Strategy(strat_id, s, mode, tuple(actions), ids))
        part = PartProcess(part_id, f"Part {p}", frozenset(goals), tuple(strategies))
        if not all(oracle_covered(part, q) for q in personas):
            part = PartProcess(part_id, part.name, part.goal_ids, part.strategies,
                               may_fail=True)
        parts.append(part)
    spec = ProcessSpec(
        id=f"proc_{rng.randrange(10**6)}",
        name="generated process",
        vocabulary=tuple(CapabilityCategory(c, c.title()) for c in vocabulary),
        part_processes=tuple(parts),
        default_timeout_ms=rng.randint(20, 80),
        meta={"origin": "generator"},
    )
    return spec, personas


# -- adversarial event streams -------------------------------------------------


def make_junk_events(rng: random.Random, tree_node_ids: Sequence[str],
                     horizon_ms: int, count: int):
    """Arbitrary well-typed events at random times; some target real nodes,
    some do not. The engine must survive any of this."""
    from gradedbt.engine import EngineEvent, EventKind

    kinds = list(EventKind)
    events = []
    for _ in range(count):
        kind = rng.choice(kinds)
        if rng.random() < 0.7 and tree_node_ids:
            target = rng.choice(list(tree_node_ids))
        else:
            target = f"bogus/{rng.randrange(100)}"
        ts = rng.randrange(0, max(1, horizon_ms))
        persona = rng.randint(1, 5) if kind is EventKind.SET_PERSONA else None
        events.append(EngineEvent(kind, target, ts, persona))
    return events


class ChaosSource:
    """Wraps a live source and slips extra pre-baked events into the stream."""

    def __init__(self, inner, junk):
        self.inner = inner
        self.junk = sorted(junk, key=lambda e: e.timestamp)

    def on_command(self, command) -> None:
        self.inner.on_command(command)

    def next_time(self):
        mine = self.junk[0].timestamp if self.junk else None
        theirs = self.inner.next_time()
        if mine is None:
            return theirs
        if theirs is None:
            return mine
        return min(mine, theirs)

    def pop_until(self, t: int):
        out = self.inner.pop_until(t)
        while self.junk and self.junk[0].timestamp <= t:
            out.append(self.junk.pop(0))
        return out
