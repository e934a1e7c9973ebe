"""Graded behavior trees: configurable assistance processes for shared human/robot work.

The package turns a declarative process description (part processes with
alternative strategies at graded assistance levels) plus a set of worker
personas into an executable behavior tree: ineligible strategies are gated
out per persona, unanswered steps time out and escalate to the next
assistance level, and already-reached action goals are skipped after a
fall-through.
"""
from .access import (
    UnknownCapabilityError,
    UnknownPersonaError,
    can_perform,
    derive_allowlist,
    effective_allowlist,
    eligible_strategies,
    strategy_accessible,
)
from .compiler import BehaviorTree, CompileError, compile_tree, export_dot, tree_to_doc
from .engine import EpisodeTrace, replay_trace, run_episode
from .diagnostics import Diagnostic, Severity, has_errors
from .model import (
    ActionSpec,
    Actor,
    AllowlistMode,
    CapabilityCategory,
    CapabilityProfile,
    CompanionAction,
    PartProcess,
    Persona,
    ProcessSpec,
    SharedCompanions,
    Strategy,
)
from .sim import (
    EpisodeStats,
    HumanPolicy,
    RobotModel,
    SweepRow,
    simulate,
    stats_csv,
    summarize,
    sweep,
)
from .specio import (
    ParseResult,
    SpecError,
    format_duration,
    load_bundled,
    load_personas_file,
    load_process_file,
    parse_duration,
    parse_personas,
    parse_process,
    serialize_personas,
    serialize_process,
)
from .validate import validate_process

__version__ = "0.1.0"

__all__ = [
    "ActionSpec",
    "Actor",
    "AllowlistMode",
    "BehaviorTree",
    "CapabilityCategory",
    "CapabilityProfile",
    "CompanionAction",
    "CompileError",
    "Diagnostic",
    "EpisodeStats",
    "EpisodeTrace",
    "HumanPolicy",
    "ParseResult",
    "PartProcess",
    "Persona",
    "ProcessSpec",
    "RobotModel",
    "Severity",
    "SharedCompanions",
    "SpecError",
    "Strategy",
    "SweepRow",
    "UnknownCapabilityError",
    "UnknownPersonaError",
    "can_perform",
    "compile_tree",
    "derive_allowlist",
    "effective_allowlist",
    "eligible_strategies",
    "export_dot",
    "format_duration",
    "has_errors",
    "load_bundled",
    "load_personas_file",
    "load_process_file",
    "parse_duration",
    "parse_personas",
    "parse_process",
    "replay_trace",
    "run_episode",
    "serialize_personas",
    "serialize_process",
    "simulate",
    "stats_csv",
    "strategy_accessible",
    "summarize",
    "sweep",
    "tree_to_doc",
    "validate_process",
    "__version__",
]
