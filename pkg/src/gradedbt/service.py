"""HTTP operator service: one live session driven on the wall clock.

The engine thread always ticks at logical times: a timer that expires at
t=8000 is processed as t=8000 even if the thread wakes a few ms late, and
operator events are stamped on arrival, clamped to never precede the last
tick. Recorded session traces therefore replay byte-identically on the
simulated clock (sessions that were force-closed mid-run carry a closing
annotation instead and are exempt from that guarantee).

State changes are pushed to subscribers as server-sent events, one full
snapshot per frame. Subscriber queues are bounded; a slow consumer loses
the oldest frames and is told how many were dropped.
"""
import json
import logging
import queue
import threading
import uuid
from collections.abc import Callable, Sequence

from .clock import WallClock
from .compiler import BehaviorTree, NodeKind, compile_tree, tree_to_doc
from .engine import (
    EngineCommand,
    EngineEvent,
    EpisodeTrace,
    EventKind,
    Blackboard,
    CommandKind,
    NodeStatus,
    TraceRecorder,
    strategies_used,
    next_deadline,
    tick,
)
from .model import Persona, ProcessSpec, personas_by_id
from .specio import serialize_personas, serialize_process

log = logging.getLogger("gradedbt.service")

SSE_QUEUE_SIZE = 256
EVENT_RING_SIZE = 100


class SessionExistsError(RuntimeError):
    pass


class NoSessionError(LookupError):
    pass


class TimerRobot:
    """Default robot executor: every command completes after its duration."""

    def __init__(self) -> None:
        self._timers: list[threading.Timer] = []

    def start(self, command: EngineCommand, post: Callable[[EventKind, str], None]) -> None:
        timer = threading.Timer(command.duration_ms / 1000.0,
                                post, args=(EventKind.ROBOT_DONE, command.node_id))
        timer.daemon = True
        self._timers.append(timer)
        timer.start()

    def cancel_all(self) -> None:
        for timer in self._timers:
            timer.cancel()
        self._timers.clear()


class _Subscriber:
    def __init__(self) -> None:
        self.frames: queue.Queue = queue.Queue(maxsize=SSE_QUEUE_SIZE)
        self.dropped = 0


class SessionManager:
    """Owns the single live session and its engine thread."""

    def __init__(self, spec: ProcessSpec, personas: Sequence[Persona], *,
                 max_attempts: int = 3,
                 robot_factory: Callable[[], TimerRobot] = TimerRobot,
                 clock_factory: Callable[[], WallClock] = WallClock):
        self.spec = spec
        self.personas = list(personas)
        self.tree: BehaviorTree = compile_tree(spec, personas, max_attempts=max_attempts)
        self._robot_factory = robot_factory
        self._clock_factory = clock_factory
        self._cond = threading.Condition()
        self._subs: list[_Subscriber] = []
        self._wait_by_action = {
            node.action.id: node.id
            for node in self.tree.nodes.values()
            if node.kind is NodeKind.WAIT_FOR_HUMAN and node.action is not None
        }
        self._session_id: str | None = None
        self._thread: threading.Thread | None = None
        self._clear_runtime()

    # -- lifecycle -----------------------------------------------------------

    def _clear_runtime(self) -> None:
        self._bb: Blackboard | None = None
        self._rec = TraceRecorder()
        self._clock = None
        self._robot: TimerRobot | None = None
        self._queue: list[EngineEvent] = []
        self._t_log = 0
        self._status = NodeStatus.RUNNING
        self._closed = False
        self._annotation: str | None = None
        self._seq = 0

    def create(self, persona_id: int) -> dict:
        with self._cond:
            if self._session_id is not None:
                raise SessionExistsError("a session is already active")
            if persona_id not in personas_by_id(self.personas):
                raise KeyError(f"unknown persona id: {persona_id}")
            self._clear_runtime()
            self._session_id = uuid.uuid4().hex[:12]
            self._clock = self._clock_factory()
            self._robot = self._robot_factory()
            self._bb = Blackboard(active_persona=persona_id)
            self._t_log = self._clock.now()
            self._rec.record(self._t_log, None, "episode_start",
                             {"persona": persona_id, "spec": self.spec.id,
                              "digest": self.tree.digest})
            self._status = tick(self.tree, self._bb, self._t_log, [], self._rec, self._sink)
            if self._status is not NodeStatus.RUNNING:
                self._finish()
            else:
                self._thread = threading.Thread(target=self._run, daemon=True,
                                                name="gbt-engine")
                self._thread.start()
            log.info("session %s created for persona %d", self._session_id, persona_id)
            self._push_state()
            return self._snapshot()

    def delete(self) -> None:
        with self._cond:
            if self._session_id is None:
                raise NoSessionError("no active session")
            sid = self._session_id
            if self._status is NodeStatus.RUNNING and not self._closed:
                self._closed = True
                self._cond.notify_all()
            thread = self._thread
        if thread is not None:
            thread.join(timeout=5.0)
        with self._cond:
            if self._robot is not None:
                self._robot.cancel_all()
            self._session_id = None
            self._thread = None
            for sub in self._subs:
                try:
                    sub.frames.put_nowait(None)  # stream end sentinel
                except queue.Full:
                    pass
            log.info("session %s deleted", sid)

    # -- engine loop ----------------------------------------------------------

    def _sink(self, command: EngineCommand) -> None:
        if command.kind is CommandKind.ROBOT_START and self._robot is not None:
            self._robot.start(command, self._post_raw)

    def _post_raw(self, kind: EventKind, target: str) -> None:
        with self._cond:
            if self._session_id is None or self._clock is None:
                return
            ts = max(self._clock.now(), self._t_log)
            self._queue.append(EngineEvent(kind, target, ts))
            self._cond.notify_all()

    def _run(self) -> None:
        with self._cond:
            while self._status is NodeStatus.RUNNING and not self._closed:
                deadline = next_deadline(self.tree, self._bb)
                event_time = self._queue[0].timestamp if self._queue else None
                candidates = [t for t in (deadline, event_time) if t is not None]
                if not candidates:
                    # Robot leg pending: its completion event will arrive.
                    self._cond.wait()
                    continue
                t = min(candidates)
                now = self._clock.now()
                if t > now:
                    self._cond.wait(timeout=(t - now) / 1000.0)
                    continue
                inbox, rest = [], []
                for ev in self._queue:
                    (inbox if ev.timestamp <= t else rest).append(ev)
                self._queue = rest
                self._t_log = t
                self._status = tick(self.tree, self._bb, t, inbox, self._rec, self._sink)
                if self._status is NodeStatus.RUNNING:
                    self._push_state()
            if self._closed and self._status is NodeStatus.RUNNING:
                self._status = NodeStatus.FAILURE
                self._annotation = "session closed"
            self._finish()
            self._push_state()

    def _finish(self) -> None:
        if self._status is NodeStatus.SUCCESS:
            self._rec.record(self._t_log, None, "outcome", {"outcome": "completed"})
        else:
            detail: dict = {"outcome": "failed"}
            assert self._bb is not None
            if self._bb.failed_part_id is not None:
                detail["part"] = self._bb.failed_part_id
            if self._annotation is not None:
                detail["annotation"] = self._annotation
            self._rec.record(self._t_log, None, "outcome", detail)
        log.info("session %s finished: %s", self._session_id,
                 "completed" if self._status is NodeStatus.SUCCESS else "failed")

    # -- operator input -------------------------------------------------------

    def post_event(self, kind: str, action_id: str) -> None:
        try:
            ev_kind = EventKind(kind)
        except ValueError:
            raise ValueError(f"unknown event kind: {kind}")
        if ev_kind not in (EventKind.HUMAN_ACK, EventKind.HUMAN_FAIL):
            raise ValueError(f"event kind not accepted from operators: {kind}")
        node_id = self._wait_by_action.get(action_id)
        if node_id is None:
            raise KeyError(f"no human-acknowledged action with id: {action_id}")
        with self._cond:
            if self._session_id is None:
                raise NoSessionError("no active session")
        self._post_raw(ev_kind, node_id)

    # -- views ----------------------------------------------------------------

    def _snapshot(self) -> dict:
        assert self._bb is not None and self._session_id is not None
        bb = self._bb
        part_id = strategy_id = None
        level = None
        instruction = None
        robot_action = None
        for node_id, st in bb.node_state.items():
            node = self.tree.nodes.get(node_id)
            if node is None or st.status is not NodeStatus.RUNNING:
                continue
            if node.kind is NodeKind.STRATEGY_SEQUENCE and node.strategy_id is not None:
                part_id, strategy_id, level = node.part_id, node.strategy_id, node.assistance_level
            elif (node.kind is NodeKind.WAIT_FOR_HUMAN and st.result is None
                    and st.wait_started is not None and node.action is not None):
                instruction = {
                    "action_id": node.action.id,
                    "label": node.label,
                    "role": node.role.value if node.role is not None else "main",
                    "timeout_ms": node.timeout_ms,
                    "issued_at_ms": st.wait_started,
                }
            elif (node.kind is NodeKind.ROBOT_ACTION and st.result is None
                    and st.command_issued and node.action is not None):
                robot_action = {
                    "action_id": node.action.id,
                    "label": node.label,
                    "duration_ms": node.duration_ms,
                }
        if self._status is NodeStatus.RUNNING:
            phase = "running"
        elif self._status is NodeStatus.SUCCESS:
            phase = "completed"
        else:
            phase = "failed"
        recent = [
            {"time": e.time, "node": e.node, "kind": e.kind, "detail": dict(e.detail)}
            for e in self._rec.events[-EVENT_RING_SIZE:]
        ]
        return {
            "session_id": self._session_id,
            "persona_id": bb.active_persona,
            "spec_id": self.spec.id,
            "digest": self.tree.digest,
            "phase": phase,
            "time_ms": self._t_log,
            "part_id": part_id,
            "strategy_id": strategy_id,
            "assistance_level": level,
            "instruction": instruction,
            "robot_action": robot_action,
            "goals_reached": sorted([p, g] for p, g in bb.goal_flags),
            "failed_part": bb.failed_part_id,
            "annotation": self._annotation,
            "seq": self._seq,
            "events": recent,
        }

    def state(self) -> dict:
        with self._cond:
            if self._session_id is None:
                raise NoSessionError("no active session")
            return self._snapshot()

    def trace_jsonl(self) -> str:
        with self._cond:
            if self._session_id is None:
                raise NoSessionError("no active session")
            return "".join(e.to_json_line() + "\n" for e in self._rec.events)

    def episode_trace(self) -> EpisodeTrace:
        """Trace of the finished episode, same shape run_episode returns."""
        with self._cond:
            if self._session_id is None:
                raise NoSessionError("no active session")
            if self._status is NodeStatus.RUNNING:
                raise RuntimeError("session still running")
            assert self._bb is not None
            outcome = "completed" if self._status is NodeStatus.SUCCESS else "failed"
            return EpisodeTrace(
                persona_id=self._bb.active_persona,
                spec_id=self.spec.id,
                digest=self.tree.digest,
                events=tuple(self._rec.events),
                outcome=outcome,
                failed_part=self._bb.failed_part_id,
                annotation=self._annotation,
                strategies_used=strategies_used(self.tree, self._rec.events),
            )

    # -- streaming -------------------------------------------------------------

    def _push_state(self) -> None:
        self._seq += 1
        frame = {"type": "state", "state": self._snapshot()}
        for sub in self._subs:
            while True:
                try:
                    sub.frames.put_nowait(frame)
                    break
                except queue.Full:
                    try:
                        sub.frames.get_nowait()
                        sub.dropped += 1
                    except queue.Empty:
                        pass

    def subscribe(self) -> _Subscriber:
        with self._cond:
            if self._session_id is None:
                raise NoSessionError("no active session")
            sub = _Subscriber()
            self._subs.append(sub)
            try:
                sub.frames.put_nowait({"type": "state", "state": self._snapshot()})
            except queue.Full:
                pass
            return sub

    def unsubscribe(self, sub: _Subscriber) -> None:
        with self._cond:
            if sub in self._subs:
                self._subs.remove(sub)


def sse_frames(manager: SessionManager, sub: _Subscriber, keepalive_s: float = 15.0):
    """Yield SSE wire chunks for one subscriber until the session ends."""
    try:
        while True:
            if sub.dropped:
                with manager._cond:
                    count, sub.dropped = sub.dropped, 0
                notice = json.dumps({"type": "dropped", "count": count}, separators=(",", ":"))
                yield f"data: {notice}\n\n"
            try:
                frame = sub.frames.get(timeout=keepalive_s)
            except queue.Empty:
                yield ": keepalive\n\n"
                continue
            if frame is None:
                return
            yield f"data: {json.dumps(frame, separators=(',', ':'))}\n\n"
            if frame.get("type") == "state" and frame["state"]["phase"] != "running":
                return
    finally:
        manager.unsubscribe(sub)


def create_app(spec: ProcessSpec, personas: Sequence[Persona], *, max_attempts: int = 3):
    """FastAPI application exposing the session, its tree, and the event stream."""
    from fastapi import FastAPI, HTTPException
    from fastapi.responses import PlainTextResponse, Response, StreamingResponse
    from pydantic import BaseModel

    manager = SessionManager(spec, personas, max_attempts=max_attempts)
    app = FastAPI(title="graded assistance session service")
    app.state.manager = manager

    class CreateSessionBody(BaseModel):
        persona_id: int

    class PostEventBody(BaseModel):
        kind: str
        action_id: str

    @app.post("/session", status_code=201)
    def create_session(body: CreateSessionBody) -> dict:
        try:
            return manager.create(body.persona_id)
        except SessionExistsError as exc:
            raise HTTPException(409, str(exc))
        except KeyError as exc:
            raise HTTPException(422, str(exc.args[0]))

    @app.delete("/session", status_code=204)
    def delete_session():
        try:
            manager.delete()
        except NoSessionError as exc:
            raise HTTPException(404, str(exc))
        return Response(status_code=204)

    @app.get("/state")
    def get_state() -> dict:
        try:
            return manager.state()
        except NoSessionError as exc:
            raise HTTPException(404, str(exc))

    @app.get("/tree")
    def get_tree() -> dict:
        return tree_to_doc(manager.tree)

    @app.get("/process")
    def get_process() -> Response:
        return Response(serialize_process(spec), media_type="application/json")

    @app.get("/personas")
    def get_personas() -> Response:
        return Response(serialize_personas(list(personas)), media_type="application/json")

    @app.post("/event", status_code=202)
    def post_event(body: PostEventBody) -> dict:
        try:
            manager.post_event(body.kind, body.action_id)
        except NoSessionError as exc:
            raise HTTPException(404, str(exc))
        except (ValueError, KeyError) as exc:
            raise HTTPException(422, str(exc.args[0]))
        return {"accepted": True}

    @app.get("/trace")
    def get_trace() -> PlainTextResponse:
        try:
            return PlainTextResponse(manager.trace_jsonl(),
                                     media_type="application/x-ndjson")
        except NoSessionError as exc:
            raise HTTPException(404, str(exc))

    @app.get("/events")
    def get_events() -> StreamingResponse:
        try:
            sub = manager.subscribe()
        except NoSessionError as exc:
            raise HTTPException(404, str(exc))
        return StreamingResponse(sse_frames(manager, sub),
                                 media_type="text/event-stream")

    return app
