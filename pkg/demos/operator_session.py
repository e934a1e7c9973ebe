"""Drive a live wall-clock session the way the HTTP service does.

Uses a small millisecond-scale process so the run finishes quickly: the
operator acknowledges the first instruction, fails the second one three
times (exhausting its retries), and then stays quiet while the robot
fallback finishes the stage. Afterwards the recorded trace is replayed on
the simulated clock and must come out byte-identical.
"""
import threading
import time

from gradedbt.engine import replay_trace
from gradedbt.model import (
    ActionSpec,
    Actor,
    AllowlistMode,
    CapabilityCategory,
    PartProcess,
    Persona,
    ProcessSpec,
    Strategy,
)
from gradedbt.service import SessionManager, sse_frames


def demo_spec():
    by_hand = Strategy("by_hand", 0, AllowlistMode.DERIVED, (
        ActionSpec("pick", "Pick the part", Actor.HUMAN, "part_picked",
                   nominal_duration_ms=10, timeout_ms=80),
        ActionSpec("seat", "Seat the part in the jig", Actor.HUMAN, "part_seated",
                   nominal_duration_ms=10, timeout_ms=80),
    ))
    by_robot = Strategy("by_robot", 1, AllowlistMode.UNIVERSAL, (
        ActionSpec("bot_pick", "Robot picks the part", Actor.ROBOT, "part_picked",
                   nominal_duration_ms=20),
        ActionSpec("bot_seat", "Robot seats the part", Actor.ROBOT, "part_seated",
                   nominal_duration_ms=20),
    ))
    spec = ProcessSpec(
        id="jig_loading", name="Jig loading",
        vocabulary=(CapabilityCategory("grip", "Grip"),),
        part_processes=(PartProcess("load", "Load the jig",
                                    frozenset({"part_picked", "part_seated"}),
                                    (by_hand, by_robot)),),
        default_timeout_ms=150,
    )
    return spec, [Persona(1, "Operator")]


def main():
    spec, personas = demo_spec()
    manager = SessionManager(spec, personas)
    manager.create(1)
    sub = manager.subscribe()

    frames = []
    pump = threading.Thread(
        target=lambda: frames.extend(sse_frames(manager, sub, keepalive_s=5.0)),
        daemon=True)
    pump.start()

    manager.post_event("human_ack", "pick")
    time.sleep(0.02)
    for _ in range(3):
        manager.post_event("human_fail", "seat")
        time.sleep(0.01)
    # retries exhausted; the robot strategy takes over on its own
    pump.join(timeout=5.0)

    print(f"streamed {len(frames)} SSE chunks")
    state = manager.state()
    print(f"phase={state['phase']} goals={state['goals_reached']}")

    trace = manager.episode_trace()
    print(f"outcome={trace.outcome} strategies={trace.strategies_used}")
    twin = replay_trace(manager.tree, trace)
    print("replay on the simulated clock is byte-identical:",
          twin.to_jsonl() == trace.to_jsonl())
    manager.delete()


if __name__ == "__main__":
    main()
