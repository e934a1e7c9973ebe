"""Reading and writing the JSON process/persona file format (version "1").

Parsing is total: any byte input yields either a value or diagnostics, never
an exception. Diagnostics address the offending spot with a slash-delimited
path ("part_processes/2/strategies/0/actions/1/timeout"). Serialization is
canonical (fixed key order, sorted sets, 2-space indent) so equal specs always
produce identical bytes, and parse(serialize(spec)) == spec.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Generic, TypeVar

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
from .validate import validate_process

FORMAT_VERSION = "1"

T = TypeVar("T")


class SpecError(Exception):
    """Raised by the load_* convenience helpers when parsing fails."""

    def __init__(self, diagnostics: list[Diagnostic]):
        super().__init__("; ".join(d.format() for d in diagnostics if d.severity is Severity.ERROR))
        self.diagnostics = diagnostics


@dataclass
class ParseResult(Generic[T]):
    value: T | None
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.value is not None and not has_errors(self.diagnostics)

    def unwrap(self) -> T:
        if not self.ok:
            raise SpecError(self.diagnostics)
        assert self.value is not None
        return self.value


_DURATION_RE = re.compile(r"^(\d+(?:\.\d+)?)(ms|s)$")


def parse_duration(text: str) -> int:
    """'30s' -> 30000, '250ms' -> 250. Whole milliseconds only."""
    m = _DURATION_RE.match(text) if isinstance(text, str) else None
    if not m:
        raise ValueError(f"expected a duration like '30s' or '250ms', got {text!r}")
    value = float(m.group(1)) * (1000.0 if m.group(2) == "s" else 1.0)
    if value != int(value):
        raise ValueError(f"duration {text!r} is not a whole number of milliseconds")
    return int(value)


def format_duration(ms: int) -> str:
    if ms % 1000 == 0:
        return f"{ms // 1000}s"
    return f"{ms}ms"


def _join(path: str, key: str) -> str:
    return f"{path}/{key}" if path else key


class _Walker:
    """Collects diagnostics while pulling typed fields out of parsed JSON."""

    def __init__(self) -> None:
        self.diags: list[Diagnostic] = []

    def error(self, path: str, message: str, code: str = "schema") -> None:
        self.diags.append(Diagnostic(Severity.ERROR, path, message, code))

    def warning(self, path: str, message: str, code: str = "schema") -> None:
        self.diags.append(Diagnostic(Severity.WARNING, path, message, code))

    def obj(self, value: Any, path: str, required: list[str], optional: list[str]) -> dict | None:
        if not isinstance(value, dict):
            self.error(path, f"expected an object, got {type(value).__name__}")
            return None
        for key in required:
            if key not in value:
                self.error(path, f"missing required key '{key}'", "missing-key")
        for key in sorted(value):
            if key not in required and key not in optional:
                self.error(_join(path, key), "unknown key", "unknown-key")
        return value

    def string(self, obj: dict, key: str, path: str, default: str | None = None) -> str | None:
        if key not in obj:
            return default
        v = obj[key]
        if not isinstance(v, str):
            self.error(_join(path, key), f"expected a string, got {type(v).__name__}")
            return default
        return v

    def integer(self, obj: dict, key: str, path: str, default: int | None = None) -> int | None:
        if key not in obj:
            return default
        v = obj[key]
        if isinstance(v, bool) or not isinstance(v, int):
            self.error(_join(path, key), f"expected an integer, got {type(v).__name__}")
            return default
        return v

    def boolean(self, obj: dict, key: str, path: str, default: bool = False) -> bool:
        if key not in obj:
            return default
        v = obj[key]
        if not isinstance(v, bool):
            self.error(_join(path, key), f"expected a boolean, got {type(v).__name__}")
            return default
        return v

    def string_list(self, obj: dict, key: str, path: str) -> list[str]:
        if key not in obj:
            return []
        v = obj[key]
        if not isinstance(v, list):
            self.error(_join(path, key), f"expected a list, got {type(v).__name__}")
            return []
        out = []
        for i, item in enumerate(v):
            if not isinstance(item, str):
                self.error(f"{_join(path, key)}/{i}", f"expected a string, got {type(item).__name__}")
                continue
            out.append(item)
        return out

    def duration(self, obj: dict, key: str, path: str, default: int | None = None) -> int | None:
        if key not in obj:
            return default
        v = obj[key]
        try:
            return parse_duration(v)
        except ValueError as exc:
            self.error(_join(path, key), str(exc), "bad-duration")
            return default


def _decode(data: str | bytes, w: _Walker) -> Any:
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            w.error("", f"not valid UTF-8: {exc.reason} at byte {exc.start}", "encoding")
            return None
    try:
        return json.loads(data)
    except (json.JSONDecodeError, RecursionError) as exc:
        w.error("", f"invalid JSON: {exc}", "json")
        return None


def _check_format_version(doc: dict, w: _Walker) -> None:
    version = w.string(doc, "format_version", "")
    if version is not None and version != FORMAT_VERSION:
        w.error("format_version", f"unsupported format_version {version!r}, expected '{FORMAT_VERSION}'", "version")


def _parse_companion(raw: Any, path: str, w: _Walker) -> CompanionAction | None:
    obj = w.obj(raw, path, ["id", "label"], ["nominal_duration"])
    if obj is None:
        return None
    return CompanionAction(
        id=w.string(obj, "id", path, "") or "",
        label=w.string(obj, "label", path, "") or "",
        nominal_duration_ms=w.duration(obj, "nominal_duration", path, 0) or 0,
    )


def _parse_action(raw: Any, path: str, w: _Walker) -> ActionSpec | None:
    obj = w.obj(
        raw,
        path,
        ["id", "label", "actor", "goal_id"],
        ["required_capabilities", "skip_if", "sets_flags", "nominal_duration", "timeout", "companions"],
    )
    if obj is None:
        return None
    actor_raw = w.string(obj, "actor", path, "")
    try:
        actor = Actor(actor_raw)
    except ValueError:
        w.error(f"{path}/actor", f"expected one of human, robot, shared; got {actor_raw!r}")
        actor = Actor.HUMAN

    timeout_ms: int | None = None
    if "timeout" in obj and obj["timeout"] != "inherit":
        timeout_ms = w.duration(obj, "timeout", path)

    companions = None
    if "companions" in obj:
        cobj = w.obj(obj["companions"], f"{path}/companions", [], ["position", "release"])
        if cobj is not None:
            companions = SharedCompanions(
                position=_parse_companion(cobj["position"], f"{path}/companions/position", w)
                if "position" in cobj else None,
                release=_parse_companion(cobj["release"], f"{path}/companions/release", w)
                if "release" in cobj else None,
            )

    return ActionSpec(
        id=w.string(obj, "id", path, "") or "",
        label=w.string(obj, "label", path, "") or "",
        actor=actor,
        goal_id=w.string(obj, "goal_id", path, "") or "",
        required_capabilities=frozenset(w.string_list(obj, "required_capabilities", path)),
        skip_if=frozenset(w.string_list(obj, "skip_if", path)),
        sets_flags=frozenset(w.string_list(obj, "sets_flags", path)),
        nominal_duration_ms=w.duration(obj, "nominal_duration", path, 0) or 0,
        timeout_ms=timeout_ms,
        companions=companions,
    )


def _parse_strategy(raw: Any, path: str, w: _Walker) -> Strategy | None:
    obj = w.obj(raw, path, ["id", "assistance_level", "allowlist", "actions"], [])
    if obj is None:
        return None
    mode = AllowlistMode.DERIVED
    persona_ids: frozenset[int] = frozenset()
    allow = None
    if "allowlist" in obj:  # absence already reported as a missing key
        allow = w.obj(obj["allowlist"], f"{path}/allowlist", ["mode"], ["persona_ids"])
    if allow is not None:
        mode_raw = w.string(allow, "mode", f"{path}/allowlist", "")
        try:
            mode = AllowlistMode(mode_raw)
        except ValueError:
            w.error(f"{path}/allowlist/mode", f"expected one of manual, derived, universal; got {mode_raw!r}")
        ids_raw = allow.get("persona_ids", [])
        if not isinstance(ids_raw, list):
            w.error(f"{path}/allowlist/persona_ids", "expected a list of persona ids")
        else:
            good = []
            for i, v in enumerate(ids_raw):
                if isinstance(v, bool) or not isinstance(v, int) or v <= 0:
                    w.error(f"{path}/allowlist/persona_ids/{i}", "persona ids are positive integers")
                else:
                    good.append(v)
            persona_ids = frozenset(good)

    actions_raw = obj.get("actions", [])
    actions: list[ActionSpec] = []
    if not isinstance(actions_raw, list):
        w.error(f"{path}/actions", "expected a list of actions")
    else:
        for i, a in enumerate(actions_raw):
            parsed = _parse_action(a, f"{path}/actions/{i}", w)
            if parsed is not None:
                actions.append(parsed)

    return Strategy(
        id=w.string(obj, "id", path, "") or "",
        assistance_level=w.integer(obj, "assistance_level", path, 0) or 0,
        allowlist_mode=mode,
        persona_ids=persona_ids,
        actions=tuple(actions),
    )


def parse_process(data: str | bytes) -> ParseResult[ProcessSpec]:
    """Parse a process document. Never raises on malformed input."""
    w = _Walker()
    doc = _decode(data, w)
    if w.diags:
        return ParseResult(None, w.diags)
    obj = w.obj(doc, "", ["format_version", "id", "name", "default_timeout", "vocabulary", "part_processes"], ["meta"])
    if obj is None:
        return ParseResult(None, w.diags)
    _check_format_version(obj, w)

    vocabulary: list[CapabilityCategory] = []
    vocab_raw = obj.get("vocabulary", [])
    if not isinstance(vocab_raw, list):
        w.error("vocabulary", "expected a list")
    else:
        for i, entry in enumerate(vocab_raw):
            e = w.obj(entry, f"vocabulary/{i}", ["id", "label"], [])
            if e is not None:
                vocabulary.append(CapabilityCategory(
                    id=w.string(e, "id", f"vocabulary/{i}", "") or "",
                    label=w.string(e, "label", f"vocabulary/{i}", "") or "",
                ))

    parts: list[PartProcess] = []
    parts_raw = obj.get("part_processes", [])
    if not isinstance(parts_raw, list):
        w.error("part_processes", "expected a list")
    else:
        for i, entry in enumerate(parts_raw):
            path = f"part_processes/{i}"
            e = w.obj(entry, path, ["id", "name", "goal_ids", "strategies"], ["may_fail"])
            if e is None:
                continue
            strategies: list[Strategy] = []
            strat_raw = e.get("strategies", [])
            if not isinstance(strat_raw, list):
                w.error(f"{path}/strategies", "expected a list")
            else:
                for si, s in enumerate(strat_raw):
                    parsed = _parse_strategy(s, f"{path}/strategies/{si}", w)
                    if parsed is not None:
                        strategies.append(parsed)
            parts.append(PartProcess(
                id=w.string(e, "id", path, "") or "",
                name=w.string(e, "name", path, "") or "",
                may_fail=w.boolean(e, "may_fail", path),
                goal_ids=frozenset(w.string_list(e, "goal_ids", path)),
                strategies=tuple(strategies),
            ))

    meta = obj.get("meta", {})
    if not isinstance(meta, dict):
        w.error("meta", "expected an object")
        meta = {}

    default_timeout = 0
    if "default_timeout" in obj:  # absence already reported as a missing key
        try:
            default_timeout = parse_duration(obj["default_timeout"])
        except ValueError as exc:
            w.error("default_timeout", str(exc), "bad-duration")

    if has_errors(w.diags):
        return ParseResult(None, w.diags)

    spec = ProcessSpec(
        id=w.string(obj, "id", "", "") or "",
        name=w.string(obj, "name", "", "") or "",
        vocabulary=tuple(vocabulary),
        part_processes=tuple(parts),
        default_timeout_ms=default_timeout,
        meta=meta,
    )
    w.diags.extend(validate_process(spec, None))
    if has_errors(w.diags):
        return ParseResult(None, w.diags)
    return ParseResult(spec, w.diags)


def parse_personas(data: str | bytes, vocabulary: frozenset[str]) -> ParseResult[tuple[Persona, ...]]:
    """Parse a personas document against the given capability vocabulary."""
    w = _Walker()
    doc = _decode(data, w)
    if w.diags:
        return ParseResult(None, w.diags)
    obj = w.obj(doc, "", ["format_version", "personas"], [])
    if obj is None:
        return ParseResult(None, w.diags)
    _check_format_version(obj, w)

    personas: list[Persona] = []
    seen: set[int] = set()
    raw = obj.get("personas", [])
    if not isinstance(raw, list):
        w.error("personas", "expected a list")
    else:
        for i, entry in enumerate(raw):
            path = f"personas/{i}"
            e = w.obj(entry, path, ["id", "name"], ["impaired", "notes"])
            if e is None:
                continue
            pid = w.integer(e, "id", path, 0) or 0
            if pid <= 0:
                w.error(f"{path}/id", "persona ids are positive integers")
            elif pid in seen:
                w.error(f"{path}/id", f"duplicate persona id {pid}", "duplicate-id")
            seen.add(pid)
            impaired = w.string_list(e, "impaired", path)
            unknown = sorted(set(impaired) - vocabulary)
            if unknown:
                w.error(f"{path}/impaired", f"unknown capability ids: {', '.join(unknown)}", "unknown-capability")
            personas.append(Persona(
                id=pid,
                name=w.string(e, "name", path, "") or "",
                profile=CapabilityProfile(frozenset(impaired)),
                notes=w.string(e, "notes", path, "") or "",
            ))

    if has_errors(w.diags):
        return ParseResult(None, w.diags)
    if personas and all(p.profile.impaired for p in personas):
        w.warning("personas", "no unimpaired reference persona in the set", "no-reference-persona")
    return ParseResult(tuple(personas), w.diags)


def _action_doc(action: ActionSpec) -> dict:
    doc: dict[str, Any] = {
        "id": action.id,
        "label": action.label,
        "actor": action.actor.value,
    }
    if action.required_capabilities:
        doc["required_capabilities"] = sorted(action.required_capabilities)
    doc["goal_id"] = action.goal_id
    if action.skip_if:
        doc["skip_if"] = sorted(action.skip_if)
    if action.sets_flags:
        doc["sets_flags"] = sorted(action.sets_flags)
    if action.nominal_duration_ms:
        doc["nominal_duration"] = format_duration(action.nominal_duration_ms)
    if action.timeout_ms is not None:
        doc["timeout"] = format_duration(action.timeout_ms)
    if action.companions is not None:
        comp: dict[str, Any] = {}
        for key, leg in (("position", action.companions.position), ("release", action.companions.release)):
            if leg is not None:
                entry: dict[str, Any] = {"id": leg.id, "label": leg.label}
                if leg.nominal_duration_ms:
                    entry["nominal_duration"] = format_duration(leg.nominal_duration_ms)
                comp[key] = entry
        doc["companions"] = comp
    return doc


def _strategy_doc(strategy: Strategy) -> dict:
    allow: dict[str, Any] = {"mode": strategy.allowlist_mode.value}
    if strategy.allowlist_mode is AllowlistMode.MANUAL:
        allow["persona_ids"] = sorted(strategy.persona_ids)
    return {
        "id": strategy.id,
        "assistance_level": strategy.assistance_level,
        "allowlist": allow,
        "actions": [_action_doc(a) for a in strategy.actions],
    }


def serialize_process(spec: ProcessSpec) -> str:
    doc: dict[str, Any] = {
        "format_version": FORMAT_VERSION,
        "id": spec.id,
        "name": spec.name,
        "default_timeout": format_duration(spec.default_timeout_ms),
        "vocabulary": [{"id": c.id, "label": c.label} for c in spec.vocabulary],
        "part_processes": [
            {
                "id": p.id,
                "name": p.name,
                **({"may_fail": True} if p.may_fail else {}),
                "goal_ids": sorted(p.goal_ids),
                "strategies": [_strategy_doc(s) for s in p.strategies],
            }
            for p in spec.part_processes
        ],
    }
    if spec.meta:
        doc["meta"] = dict(spec.meta)
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def serialize_personas(personas: tuple[Persona, ...] | list[Persona]) -> str:
    doc = {
        "format_version": FORMAT_VERSION,
        "personas": [
            {
                "id": p.id,
                "name": p.name,
                **({"impaired": sorted(p.profile.impaired)} if p.profile.impaired else {}),
                **({"notes": p.notes} if p.notes else {}),
            }
            for p in personas
        ],
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def load_process_file(path: str) -> ParseResult[ProcessSpec]:
    with open(path, "rb") as fh:
        return parse_process(fh.read())


def load_personas_file(path: str, vocabulary: frozenset[str]) -> ParseResult[tuple[Persona, ...]]:
    with open(path, "rb") as fh:
        return parse_personas(fh.read(), vocabulary)


def bundled_text(name: str) -> str:
    """Raw text of a bundled data file, e.g. 'box_folding/process.json'."""
    return resources.files("gradedbt.data").joinpath(name).read_text(encoding="utf-8")


def load_bundled(example: str = "box_folding") -> tuple[ProcessSpec, tuple[Persona, ...]]:
    spec = parse_process(bundled_text(f"{example}/process.json")).unwrap()
    personas = parse_personas(bundled_text(f"{example}/personas.json"), spec.vocabulary_ids()).unwrap()
    return spec, personas
