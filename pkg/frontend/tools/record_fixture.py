"""Record a real service session into the console test fixture.

Runs one wall-clock session of the panel-mount scenario against the Python
session service and writes every stream frame, interleaved with the operator
POSTs that produced it, to test/fixtures/scenario.json. The console component
tests replay this script through a fake transport, so they exercise the exact
bytes the live service emits without ever starting it.

Usage (from the repository root, with the package installed):
    python3 frontend/tools/record_fixture.py
"""

import json
import pathlib
import queue
import threading
import time

from gradedbt.compiler import tree_to_doc
from gradedbt.service import SessionManager
from gradedbt.specio import parse_personas, parse_process, serialize_personas

PROCESS_DOC = {
    "format_version": "1",
    "id": "panel_mount",
    "name": "Panel mounting",
    "default_timeout": "60s",
    "vocabulary": [
        {"id": "grip", "label": "Fist and pinch grip"},
        {"id": "reach", "label": "Reaching"},
    ],
    "part_processes": [
        {
            "id": "stage",
            "name": "Stage the panel",
            "goal_ids": ["panel_staged", "frame_placed", "fit_checked"],
            "strategies": [
                {
                    "id": "by_hand",
                    "assistance_level": 0,
                    "allowlist": {"mode": "universal"},
                    "actions": [
                        {
                            "id": "fetch_panel",
                            "label": "Fetch the panel from the rack",
                            "actor": "human",
                            "goal_id": "panel_staged",
                            "nominal_duration": "4s",
                        },
                        {
                            "id": "place_frame",
                            "label": "Place the frame on the jig",
                            "actor": "human",
                            "goal_id": "frame_placed",
                            "nominal_duration": "3s",
                        },
                        {
                            "id": "check_fit",
                            "label": "Check the panel sits flush",
                            "actor": "human",
                            "goal_id": "fit_checked",
                            "nominal_duration": "2s",
                        },
                    ],
                }
            ],
        },
        {
            "id": "mount",
            "name": "Mount the panel",
            "goal_ids": ["panel_seated"],
            "strategies": [
                {
                    "id": "by_hand",
                    "assistance_level": 0,
                    "allowlist": {"mode": "universal"},
                    "actions": [
                        {
                            "id": "seat_panel",
                            "label": "Seat the panel and press home",
                            "actor": "human",
                            "goal_id": "panel_seated",
                            "nominal_duration": "5s",
                        }
                    ],
                },
                {
                    "id": "by_robot",
                    "assistance_level": 2,
                    "allowlist": {"mode": "universal"},
                    "actions": [
                        {
                            "id": "drive_seat",
                            "label": "Drive the panel to the seated stop",
                            "actor": "robot",
                            "goal_id": "panel_seated",
                            "nominal_duration": "50ms",
                        }
                    ],
                },
            ],
        },
    ],
}

PERSONAS_DOC = {
    "format_version": "1",
    "personas": [
        {"id": 1, "name": "Nadia", "notes": "line lead, reference worker"},
        {"id": 2, "name": "Ravi", "impaired": ["grip"], "notes": "uses a gripping aid"},
    ],
}


def wait_for(predicate, timeout_s=5.0, poll_s=0.01):
    deadline = time.monotonic() + timeout_s
    while time.monotonic() < deadline:
        if predicate():
            return
        time.sleep(poll_s)
    raise TimeoutError("condition not reached while recording")


def main() -> None:
    spec = parse_process(json.dumps(PROCESS_DOC)).unwrap()
    personas = list(parse_personas(json.dumps(PERSONAS_DOC), spec.vocabulary_ids()).unwrap())
    manager = SessionManager(spec, personas)

    steps: list[dict] = []
    lock = threading.Lock()

    created = manager.create(1)
    with lock:
        steps.append({"t": "create", "status": 201, "body": created})

    sub = manager.subscribe()
    done = threading.Event()

    def pump() -> None:
        while True:
            try:
                frame = sub.frames.get(timeout=10.0)
            except queue.Empty:
                break
            if frame is None:
                break
            with lock:
                steps.append({"t": "frame", "frame": frame})
            if frame.get("type") == "state" and frame["state"]["phase"] != "running":
                break
        done.set()

    pumper = threading.Thread(target=pump, daemon=True)
    pumper.start()

    def instruction_is(action_id, after_index=0):
        def check():
            with lock:
                recent = steps[after_index:]
            for step in reversed(recent):
                if step["t"] != "frame" or step["frame"].get("type") != "state":
                    continue
                ins = step["frame"]["state"]["instruction"]
                return ins is not None and ins["action_id"] == action_id
            return False

        return check

    def post(kind, action_id):
        wait_for(lambda: sub.frames.qsize() == 0)
        time.sleep(0.15)
        with lock:
            steps.append({"t": "post", "kind": kind, "action_id": action_id, "status": 202})
        manager.post_event(kind, action_id)

    wait_for(instruction_is("fetch_panel"))
    post("human_ack", "fetch_panel")
    wait_for(instruction_is("place_frame"))
    post("human_ack", "place_frame")
    wait_for(instruction_is("check_fit"))
    post("human_ack", "check_fit")

    wait_for(instruction_is("seat_panel"))
    for round_idx in range(3):
        with lock:
            marker = len(steps)
        post("human_fail", "seat_panel")
        if round_idx < 2:
            # The retry re-issues the same instruction; wait for that frame.
            wait_for(instruction_is("seat_panel", after_index=marker))

    wait_for(done.is_set, timeout_s=10.0)
    manager.unsubscribe(sub)
    manager.delete()

    fixture = {
        "personas": json.loads(serialize_personas(personas)),
        "process_id": spec.id,
        "tree": tree_to_doc(manager.tree),
        "steps": steps,
    }
    out = pathlib.Path(__file__).resolve().parent.parent / "test" / "fixtures" / "scenario.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(fixture, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    frames = sum(1 for s in steps if s["t"] == "frame")
    posts = sum(1 for s in steps if s["t"] == "post")
    print(f"wrote {out} ({frames} frames, {posts} posts)")


if __name__ == "__main__":
    main()
