import { describe, expect, it, vi } from "vitest";

import type { StateSnapshot, TraceEvent, TreeDoc } from "../src/types";
import {
  ackEnabled,
  applyFrame,
  initialViewModel,
  markPending,
  stitchRing,
  withToast,
  withTree,
  type ConsoleViewModel,
} from "../src/viewmodel";

// Small two-strategy tree following the service id scheme: part p1 with
// by_hand (level 0, one human action a1) and by_robot (level 1, one robot
// action a2 behind a shared-style leg group).
function miniTree(): TreeDoc {
  return {
    spec_id: "mini",
    digest: "d".repeat(64),
    root: {
      id: "root",
      kind: "root_sequence",
      label: "Mini process",
      children: [
        {
          id: "pp:p1",
          kind: "strategy_selector",
          label: "Part one",
          part_id: "p1",
          children: [
            {
              id: "pp:p1/s:by_hand/cond",
              kind: "persona_condition",
              label: "by_hand",
              part_id: "p1",
              strategy_id: "by_hand",
              assistance_level: 0,
              personas: "all",
              children: [
                {
                  id: "pp:p1/s:by_hand/budget",
                  kind: "timeout_decorator",
                  label: "by_hand",
                  budget_ms: 60000,
                  children: [
                    {
                      id: "pp:p1/s:by_hand/seq",
                      kind: "strategy_sequence",
                      label: "by_hand",
                      part_id: "p1",
                      strategy_id: "by_hand",
                      assistance_level: 0,
                      children: [
                        {
                          id: "pp:p1/s:by_hand/a:a1/gate",
                          kind: "goal_gate",
                          label: "Do the step",
                          part_id: "p1",
                          strategy_id: "by_hand",
                          action_id: "a1",
                          goal_id: "g1",
                          actor: "human",
                          children: [
                            {
                              id: "pp:p1/s:by_hand/a:a1/retry",
                              kind: "retry_decorator",
                              label: "Do the step",
                              max_attempts: 3,
                              action_id: "a1",
                              goal_id: "g1",
                              actor: "human",
                              children: [
                                {
                                  id: "pp:p1/s:by_hand/a:a1/do",
                                  kind: "wait_for_human",
                                  label: "Do the step",
                                  action_id: "a1",
                                  goal_id: "g1",
                                  actor: "human",
                                  role: "main",
                                  timeout_ms: 60000,
                                },
                              ],
                            },
                          ],
                        },
                      ],
                    },
                  ],
                },
              ],
            },
            {
              id: "pp:p1/s:by_robot/cond",
              kind: "persona_condition",
              label: "by_robot",
              part_id: "p1",
              strategy_id: "by_robot",
              assistance_level: 1,
              personas: "all",
              children: [
                {
                  id: "pp:p1/s:by_robot/budget",
                  kind: "timeout_decorator",
                  label: "by_robot",
                  budget_ms: 60000,
                  children: [
                    {
                      id: "pp:p1/s:by_robot/seq",
                      kind: "strategy_sequence",
                      label: "by_robot",
                      part_id: "p1",
                      strategy_id: "by_robot",
                      assistance_level: 1,
                      children: [
                        {
                          id: "pp:p1/s:by_robot/a:a2/gate",
                          kind: "goal_gate",
                          label: "Let the robot do it",
                          part_id: "p1",
                          strategy_id: "by_robot",
                          action_id: "a2",
                          goal_id: "g1",
                          actor: "shared",
                          children: [
                            {
                              id: "pp:p1/s:by_robot/a:a2/retry",
                              kind: "retry_decorator",
                              label: "Let the robot do it",
                              max_attempts: 3,
                              action_id: "a2",
                              goal_id: "g1",
                              actor: "shared",
                              children: [
                                {
                                  // Leg group: sequence kind with an action id.
                                  id: "pp:p1/s:by_robot/a:a2/grp",
                                  kind: "strategy_sequence",
                                  label: "Let the robot do it",
                                  part_id: "p1",
                                  strategy_id: "by_robot",
                                  action_id: "a2",
                                  children: [
                                    {
                                      id: "pp:p1/s:by_robot/a:a2/pos",
                                      kind: "robot_action",
                                      label: "position",
                                      action_id: "a2",
                                      role: "position",
                                      duration_ms: 100,
                                    },
                                    {
                                      id: "pp:p1/s:by_robot/a:a2/ack",
                                      kind: "wait_for_human",
                                      label: "confirm",
                                      action_id: "a2",
                                      role: "ack",
                                      timeout_ms: 60000,
                                    },
                                    {
                                      id: "pp:p1/s:by_robot/a:a2/rel",
                                      kind: "robot_action",
                                      label: "release",
                                      action_id: "a2",
                                      role: "release",
                                      duration_ms: 100,
                                    },
                                  ],
                                },
                              ],
                            },
                          ],
                        },
                      ],
                    },
                  ],
                },
              ],
            },
          ],
        },
      ],
    },
  };
}

function snap(overrides: Partial<StateSnapshot> = {}): StateSnapshot {
  return {
    session_id: "abc123",
    persona_id: 1,
    spec_id: "mini",
    digest: "d".repeat(64),
    phase: "running",
    time_ms: 0,
    part_id: "p1",
    strategy_id: "by_hand",
    assistance_level: 0,
    instruction: {
      action_id: "a1",
      label: "Do the step",
      role: "main",
      timeout_ms: 60000,
      issued_at_ms: 0,
    },
    robot_action: null,
    goals_reached: [],
    failed_part: null,
    annotation: null,
    seq: 1,
    events: [],
    ...overrides,
  };
}

function ev(time: number, node: string | null, kind: string, detail: Record<string, unknown> = {}): TraceEvent {
  return { time, node, kind, detail };
}

function vmWithTree(): ConsoleViewModel {
  return withTree(initialViewModel(), miniTree());
}

function fold(events: TraceEvent[], base?: ConsoleViewModel): ConsoleViewModel {
  const start = base ?? vmWithTree();
  const prior = start.eventLog;
  return applyFrame(start, {
    type: "state",
    state: snap({ events: [...prior, ...events], seq: prior.length + 1 }),
  });
}

describe("stitchRing", () => {
  const entry = (n: number) => ev(n, `node${n}`, "status", { status: "running" });

  it("treats a ring below capacity as the whole trace", () => {
    const log = [entry(1), entry(2)];
    const ring = [entry(1), entry(2), entry(3)];
    expect(stitchRing(log, ring, 5)).toEqual([entry(3)]);
  });

  it("matches the overlap once the ring is full", () => {
    const log = [entry(1), entry(2), entry(3), entry(4)];
    const ring = [entry(3), entry(4), entry(5), entry(6)];
    expect(stitchRing(log, ring, 4)).toEqual([entry(5), entry(6)]);
  });

  it("returns the full ring when nothing overlaps", () => {
    const log = [entry(1), entry(2)];
    const ring = [entry(7), entry(8), entry(9), entry(10)];
    expect(stitchRing(log, ring, 4)).toEqual(ring);
  });

  it("returns nothing when the ring holds no news", () => {
    const log = [entry(1), entry(2), entry(3)];
    expect(stitchRing(log, [entry(1), entry(2), entry(3)], 5)).toEqual([]);
    expect(stitchRing(log, [entry(2), entry(3)], 2)).toEqual([]);
  });
});

describe("node visuals", () => {
  const gate = "pp:p1/s:by_hand/a:a1/gate";

  it("maps status transitions to visuals", () => {
    let vm = fold([ev(0, gate, "status", { status: "running" })]);
    expect(vm.nodeVisual.get(gate)).toBe("running");
    vm = fold([ev(1, gate, "status", { status: "success" })], vm);
    expect(vm.nodeVisual.get(gate)).toBe("success");
    vm = fold([ev(2, gate, "status", { status: "failure", reason: "human_fail" })], vm);
    expect(vm.nodeVisual.get(gate)).toBe("failed");
  });

  it("marks goal and flag skips with their notes", () => {
    const vm = fold([
      ev(0, gate, "status", { status: "success", reason: "goal_already_reached" }),
      ev(0, "pp:p1/s:by_robot/a:a2/gate", "status", {
        status: "success",
        reason: "skipped_by_flags",
        flags: ["prepared"],
      }),
    ]);
    expect(vm.nodeVisual.get(gate)).toBe("skipped");
    expect(vm.skipNote.get(gate)).toBe("already reached");
    expect(vm.nodeVisual.get("pp:p1/s:by_robot/a:a2/gate")).toBe("skipped");
    expect(vm.skipNote.get("pp:p1/s:by_robot/a:a2/gate")).toBe("skipped by flags");
  });

  it("resets the subtree below a retrying decorator", () => {
    const retry = "pp:p1/s:by_hand/a:a1/retry";
    const leaf = "pp:p1/s:by_hand/a:a1/do";
    let vm = fold([ev(0, leaf, "status", { status: "failure", reason: "human_fail" })]);
    expect(vm.nodeVisual.get(leaf)).toBe("failed");
    vm = fold([ev(1, retry, "retry", { attempt: 2, max: 3 })], vm);
    expect(vm.nodeVisual.get(leaf)).toBeUndefined();
    expect(vm.feed.at(-1)?.text).toBe("retry: attempt 2 of 3");
  });

  it("ignores unknown node ids with a console warning", () => {
    const warn = vi.spyOn(console, "warn").mockImplementation(() => {});
    try {
      const vm = fold([ev(0, "pp:p1/s:ghost/seq", "status", { status: "running" })]);
      expect(vm.nodeVisual.size).toBe(0);
      expect(warn).toHaveBeenCalledOnce();
    } finally {
      warn.mockRestore();
    }
  });
});

describe("badges and fall-through", () => {
  const handSeq = "pp:p1/s:by_hand/seq";
  const robotSeq = "pp:p1/s:by_robot/seq";

  it("tracks the entered strategy and level per part", () => {
    const vm = fold([ev(0, handSeq, "status", { status: "running" })]);
    expect(vm.badges).toHaveLength(1);
    expect(vm.badges[0]).toMatchObject({
      partId: "p1",
      level: 0,
      strategyId: "by_hand",
      state: "active",
    });
    expect(vm.feed.at(-1)?.text).toBe("p1: strategy by_hand (level 0)");
    expect(vm.feed.at(-1)?.flavor).toBe("info");
  });

  it("reports a fall-through when a later strategy takes over", () => {
    const vm = fold([
      ev(0, handSeq, "status", { status: "running" }),
      ev(5, handSeq, "status", { status: "failure", reason: "retries_exhausted" }),
      ev(5, robotSeq, "status", { status: "running" }),
    ]);
    expect(vm.badges[0]).toMatchObject({ level: 1, strategyId: "by_robot", state: "active" });
    expect(vm.badges[0].entered).toEqual(["by_hand", "by_robot"]);
    const last = vm.feed.at(-1);
    expect(last?.text).toBe("p1: fall through to by_robot (level 1)");
    expect(last?.flavor).toBe("fallthrough");
  });

  it("keeps badges still when a shared leg group runs", () => {
    const base = fold([ev(0, robotSeq, "status", { status: "running" })]);
    const feedLen = base.feed.length;
    const vm = fold([ev(1, "pp:p1/s:by_robot/a:a2/grp", "status", { status: "running" })], base);
    expect(vm.badges[0].entered).toEqual(["by_robot"]);
    expect(vm.feed.length).toBe(feedLen);
  });

  it("closes the badge on selector success or failure", () => {
    let vm = fold([
      ev(0, handSeq, "status", { status: "running" }),
      ev(9, "pp:p1", "status", { status: "success" }),
    ]);
    expect(vm.badges[0].state).toBe("done");
    vm = fold([
      ev(0, handSeq, "status", { status: "running" }),
      ev(9, "pp:p1", "status", { status: "failure", reason: "no_strategy_left" }),
    ]);
    expect(vm.badges[0].state).toBe("failed");
  });
});

describe("inputs, staleness, and pending echo", () => {
  const leaf = "pp:p1/s:by_hand/a:a1/do";

  it("clears a pending post when its echo arrives", () => {
    let vm = markPending(fold([]), "a1");
    expect(ackEnabled(vm)).toBe(false);
    vm = fold([ev(3, leaf, "event", { event: "human_ack" })], vm);
    expect(vm.pendingPost).toBeNull();
    expect(ackEnabled(vm)).toBe(true);
    expect(vm.feed.at(-1)?.text).toBe("acknowledged");
  });

  it("renders and then clears a stale input notice", () => {
    let vm = fold([ev(4, leaf, "stale_event", { event: "human_ack" })]);
    expect(vm.staleNotice).toContain("ignored");
    expect(vm.feed.at(-1)?.flavor).toBe("stale");
    vm = fold([ev(5, leaf, "instruction", { action: "a1", label: "Do the step", role: "main", timeout_ms: 60000 })], vm);
    expect(vm.staleNotice).toBeNull();
  });

  it("counts dropped frames and surfaces a warning", () => {
    let vm = fold([]);
    vm = applyFrame(vm, { type: "dropped", count: 4 });
    vm = applyFrame(vm, { type: "dropped", count: 2 });
    expect(vm.droppedTotal).toBe(6);
    expect(vm.feed.at(-1)?.text).toBe("stream overloaded: 2 frames dropped");
  });

  it("clears pending when a post is rejected with a toast", () => {
    const vm = withToast(markPending(fold([]), "a1"), "no such action");
    expect(vm.pendingPost).toBeNull();
    expect(vm.toast).toBe("no such action");
  });
});

describe("ackEnabled", () => {
  it("requires a pending instruction on a running session", () => {
    const vm = fold([]);
    expect(ackEnabled(vm)).toBe(true);
    expect(ackEnabled({ ...vm, instruction: null })).toBe(false);
    expect(ackEnabled(markPending(vm, "a1"))).toBe(false);
    const done = applyFrame(vm, {
      type: "state",
      state: snap({ phase: "completed", instruction: null, events: vm.eventLog }),
    });
    expect(ackEnabled(done)).toBe(false);
  });
});

describe("frame application", () => {
  it("is idempotent for a repeated state frame", () => {
    const frame = {
      type: "state" as const,
      state: snap({
        events: [
          ev(0, null, "episode_start", { persona: 1, spec: "mini", digest: "d".repeat(64) }),
          ev(0, "pp:p1/s:by_hand/seq", "status", { status: "running" }),
        ],
        seq: 1,
      }),
    };
    const once = applyFrame(vmWithTree(), frame);
    const twice = applyFrame(once, frame);
    expect(twice.feed).toEqual(once.feed);
    expect(twice.eventLog).toEqual(once.eventLog);
    expect([...twice.nodeVisual.entries()]).toEqual([...once.nodeVisual.entries()]);
    expect(twice.badges).toEqual(once.badges);
  });

  it("starts fresh when a new session id appears", () => {
    const first = fold([ev(0, "pp:p1/s:by_hand/seq", "status", { status: "running" })]);
    expect(first.badges[0].state).toBe("active");
    const next = applyFrame(first, {
      type: "state",
      state: snap({
        session_id: "other99",
        events: [ev(0, null, "episode_start", { persona: 2, spec: "mini", digest: "d".repeat(64) })],
        seq: 1,
      }),
    });
    expect(next.session?.id).toBe("other99");
    expect(next.badges[0].state).toBe("idle");
    expect(next.eventLog).toHaveLength(1);
    expect(next.nodeVisual.size).toBe(0);
  });
});
