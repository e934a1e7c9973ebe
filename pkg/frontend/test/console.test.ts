// Component tests: the real controller and renderer driven end to end
// against the scripted fake service. The fixture replays a session recorded
// from the Python service byte for byte, so what the console sees here is
// exactly what the live wire carries.

import { beforeEach, describe, expect, it } from "vitest";

import { ConsoleController } from "../src/client";
import { render, type Handlers } from "../src/render";
import { clearToast } from "../src/viewmodel";
import type { PersonasFile, StateSnapshot, StreamFrame, TreeDoc } from "../src/types";
import { FakeService } from "./fake_service";
import fixtureJson from "./fixtures/scenario.json";

interface CreateStep {
  t: "create";
  status: number;
  body: StateSnapshot;
}

interface FrameStep {
  t: "frame";
  frame: StreamFrame;
}

interface PostStep {
  t: "post";
  kind: "human_ack" | "human_fail";
  action_id: string;
  status: number;
}

interface Fixture {
  personas: PersonasFile;
  process_id: string;
  tree: TreeDoc;
  steps: (CreateStep | FrameStep | PostStep)[];
}

const fixture = fixtureJson as unknown as Fixture;

function flush(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}

async function until(check: () => boolean, what: string): Promise<void> {
  for (let i = 0; i < 200; i++) {
    if (check()) return;
    await flush();
  }
  throw new Error(`never happened: ${what}`);
}

function q<T extends Element>(selector: string): T | null {
  return document.querySelector<T>(selector);
}

function text(selector: string): string | null {
  return q(selector)?.textContent ?? null;
}

function feedTexts(): string[] {
  return [...document.querySelectorAll("#feed li")].map((li) => li.textContent ?? "");
}

/** Everything state-bearing on screen, for before/after comparisons.
    Button enablement is deliberately excluded (optimistic disable is the
    one console-local change allowed while a POST waits for its echo). */
function captureView(): string {
  return JSON.stringify({
    instruction: text("#instruction-label"),
    robot: text("#robot-label"),
    outcome: text("#outcome-banner"),
    stale: text("#stale-notice"),
    badges: [...document.querySelectorAll("#badges .badge")].map((b) => [
      b.getAttribute("data-part"),
      b.querySelector(".level")?.textContent ?? null,
      b.className,
    ]),
    strategies: [...document.querySelectorAll("#tree .strategy")].map((s) => [
      s.getAttribute("data-node-id"),
      s.className,
    ]),
    leaves: [...document.querySelectorAll("#tree .leaf")].map((l) => [
      l.getAttribute("data-node-id"),
      l.className,
      l.querySelector(".skip-note")?.textContent ?? null,
    ]),
    feed: feedTexts(),
  });
}

interface Harness {
  fake: FakeService;
  controller: ConsoleController;
  handlers: Handlers;
}

function makeHarness(): Harness {
  document.body.innerHTML = '<div id="app"></div>';
  const root = document.getElementById("app") as HTMLElement;
  const fake = new FakeService();
  const handlers: Handlers = {
    onSelectPersona: (id) => void controller.selectPersona(id),
    onAcknowledge: (actionId) => void controller.acknowledge(actionId),
    onFail: (actionId) => void controller.fail(actionId),
    onDismissToast: () => {
      controller.vm = clearToast(controller.vm);
      render(root, controller.vm, handlers);
    },
  };
  const controller = new ConsoleController(fake, (vm) => render(root, vm, handlers), {
    retryDelayMs: 0,
  });
  return { fake, controller, handlers };
}

function routeFixture(fake: FakeService): CreateStep {
  const create = fixture.steps.find((s): s is CreateStep => s.t === "create");
  if (create === undefined) throw new Error("fixture has no create step");
  fake.getRoutes.set("/personas", () => structuredClone(fixture.personas));
  fake.getRoutes.set("/tree", () => structuredClone(fixture.tree));
  fake.postRoutes.set("/session", () => ({ status: create.status, body: structuredClone(create.body) }));
  fake.postRoutes.set("/event", () => ({ status: 202, body: { accepted: true } }));
  return create;
}

function buttonFor(kind: PostStep["kind"]): HTMLButtonElement {
  const button = q<HTMLButtonElement>(kind === "human_ack" ? "#ack-button" : "#fail-button");
  if (button === null) throw new Error(`no button on screen for ${kind}`);
  return button;
}

/** Assertions that must hold after every state frame: the card and button
    enablement mirror the snapshot; nothing is console-invented. */
function assertMirrorsState(state: StateSnapshot): void {
  expect(text("#instruction-label")).toBe(state.instruction?.label ?? null);
  expect(text("#robot-label")).toBe(state.robot_action?.label ?? null);
  const ack = q<HTMLButtonElement>("#ack-button");
  if (state.instruction !== null && state.phase === "running") {
    expect(ack).not.toBeNull();
    expect(ack?.disabled).toBe(false);
  } else {
    expect(ack).toBeNull();
  }
}

describe("console loop against the scripted fake service", () => {
  let harness: Harness;

  beforeEach(() => {
    harness = makeHarness();
  });

  it("follows persona selection, three acks, three fails, and the fall-through", async () => {
    const { fake, controller } = harness;
    routeFixture(fake);

    await controller.connect();

    // Fresh service, no session: persona selection screen.
    expect(q("#persona-roster")).not.toBeNull();
    expect(q("#instruction-card")).toBeNull();
    const rosterButtons = document.querySelectorAll(".persona-button");
    expect(rosterButtons).toHaveLength(2);
    expect(rosterButtons[1].textContent).toContain("Ravi");
    expect(rosterButtons[1].querySelector(".chip")?.textContent).toBe("grip");
    expect(q("#connection")?.getAttribute("data-state")).toBe("live");

    // Selecting a persona creates the session and opens the stream.
    (q<HTMLButtonElement>('[data-persona-id="1"]') as HTMLButtonElement).click();
    await until(() => fake.streamOpens === 1, "stream subscription");
    expect(fake.posts[0]).toEqual({ path: "/session", body: { persona_id: 1 } });
    expect(q("#persona-roster")).toBeNull();
    expect(text("#instruction-label")).toBe("Fetch the panel from the rack");

    let acks = 0;
    let fails = 0;
    let fallThroughSeen = false;

    for (const step of fixture.steps) {
      if (step.t === "create") continue;

      if (step.t === "post") {
        const button = buttonFor(step.kind);
        expect(button.disabled).toBe(false);
        expect(button.getAttribute("data-action-id")).toBe(step.action_id);

        const before = captureView();
        const postsBefore = fake.posts.length;
        const logBefore = controller.vm.eventLog.length;
        button.click();
        await flush();

        // Exactly one POST, carrying what the button said.
        expect(fake.posts).toHaveLength(postsBefore + 1);
        expect(fake.posts.at(-1)).toEqual({
          path: "/event",
          body: { kind: step.kind, action_id: step.action_id },
        });
        // Zero console-originated transitions: the view is unchanged until
        // the stream echoes, except that both buttons lock.
        expect(captureView()).toBe(before);
        expect(controller.vm.eventLog).toHaveLength(logBefore);
        expect(buttonFor("human_ack").disabled).toBe(true);
        expect(buttonFor("human_fail").disabled).toBe(true);

        if (step.kind === "human_ack") acks += 1;
        else fails += 1;
        continue;
      }

      fake.pushFrame(structuredClone(step.frame));
      await flush();
      if (step.frame.type !== "state") continue;
      const state = step.frame.state;
      assertMirrorsState(state);

      switch (state.seq) {
        case 2:
          // First ack echoed: card advanced, first leaf done.
          expect(text("#instruction-label")).toBe("Place the frame on the jig");
          expect(
            q('[data-node-id="pp:stage/s:by_hand/a:fetch_panel/gate"]')?.className,
          ).toContain("vis-success");
          break;
        case 4:
          // Stage part finished, mount begins at level 0.
          expect(q('#badges [data-part="stage"]')?.className).toContain("state-done");
          expect(q('#badges [data-part="mount"]')?.className).toContain("state-active");
          expect(q('#badges [data-part="mount"] .level')?.textContent).toBe("L0");
          expect(text("#instruction-label")).toBe("Seat the panel and press home");
          break;
        case 5:
          expect(feedTexts().some((t) => t.includes("retry: attempt 2 of 3"))).toBe(true);
          break;
        case 6:
          expect(feedTexts().some((t) => t.includes("retry: attempt 3 of 3"))).toBe(true);
          break;
        case 7: {
          // The fall-through frame: level badge jumps, highlight moves right,
          // the card flips to the robot phase.
          fallThroughSeen = true;
          expect(q('#badges [data-part="mount"] .level')?.textContent).toBe("L2");
          expect(feedTexts().some((t) => t.includes("mount: fall through to by_robot (level 2)"))).toBe(true);
          const hand = q('#tree [data-part="mount"] .strategy[data-strategy="by_hand"]');
          const robot = q('#tree [data-part="mount"] .strategy[data-strategy="by_robot"]');
          expect(hand?.className).toContain("vis-failed");
          expect(robot?.className).toContain("vis-running");
          expect(q("#ack-button")).toBeNull();
          expect(text("#robot-label")).toBe("Drive the panel to the seated stop");
          break;
        }
        case 8:
          // Completed: final badges and a fully resolved tree.
          expect(text("#outcome-banner")).toBe("process complete");
          expect(q('#badges [data-part="stage"]')?.className).toContain("state-done");
          expect(q('#badges [data-part="stage"] .level')?.textContent).toBe("L0");
          expect(q('#badges [data-part="mount"]')?.className).toContain("state-done");
          expect(q('#badges [data-part="mount"] .level')?.textContent).toBe("L2");
          expect(
            q('#tree [data-part="mount"] .strategy[data-strategy="by_robot"]')?.className,
          ).toContain("vis-success");
          expect(
            q('[data-node-id="pp:mount/s:by_robot/a:drive_seat/gate"]')?.className,
          ).toContain("vis-success");
          expect(
            q('[data-node-id="pp:mount/s:by_hand/a:seat_panel/gate"]')?.className,
          ).toContain("vis-failed");
          break;
      }
    }

    expect(acks).toBe(3);
    expect(fails).toBe(3);
    expect(fallThroughSeen).toBe(true);
    // One session POST plus the six operator inputs; nothing else.
    expect(fake.posts).toHaveLength(7);
    expect(fake.streamOpens).toBe(1);
  });

  it("reflects an already running session straight from /state", async () => {
    const { fake, controller } = harness;
    const create = routeFixture(fake);
    fake.getRoutes.set("/state", () => structuredClone(create.body));

    await controller.connect();

    expect(q("#persona-roster")).toBeNull();
    expect(text("#instruction-label")).toBe("Fetch the panel from the rack");
    expect(fake.streamOpens).toBe(1);
    expect(fake.posts).toHaveLength(0);
  });

  it("shows a stale input notice when the service reports one", async () => {
    const { fake, controller } = harness;
    const create = routeFixture(fake);

    await controller.connect();
    (q<HTMLButtonElement>('[data-persona-id="1"]') as HTMLButtonElement).click();
    await until(() => fake.streamOpens === 1, "stream subscription");

    const base = structuredClone(create.body);
    const lastTime = base.events.at(-1)?.time ?? 0;
    base.events.push({
      time: lastTime + 10,
      node: "pp:stage/s:by_hand/a:fetch_panel/do",
      kind: "stale_event",
      detail: { event: "human_ack" },
    });
    base.seq += 1;
    fake.pushFrame({ type: "state", state: base });
    await flush();

    expect(text("#stale-notice")).toContain("ignored");
    expect(feedTexts().some((t) => t.includes("stale input ignored"))).toBe(true);
  });

  it("banners a dropped stream and resubscribes with fresh state", async () => {
    const { fake, controller } = harness;
    const create = routeFixture(fake);

    await controller.connect();
    (q<HTMLButtonElement>('[data-persona-id="1"]') as HTMLButtonElement).click();
    await until(() => fake.streamOpens === 1, "stream subscription");

    fake.getRoutes.set("/state", () => structuredClone(create.body));
    fake.closeStream(new Error("network reset"));
    expect(q("#reconnect-banner")).not.toBeNull();
    expect(q("#connection")?.getAttribute("data-state")).toBe("reconnecting");

    await until(() => fake.streamOpens === 2, "resubscription");
    await flush();
    expect(q("#reconnect-banner")).toBeNull();
    expect(q("#connection")?.getAttribute("data-state")).toBe("live");
    expect(fake.gets.filter((p) => p === "/state").length).toBeGreaterThan(0);
    expect(text("#instruction-label")).toBe("Fetch the panel from the rack");
  });

  it("toasts a rejected input and re-enables the buttons", async () => {
    const { fake, controller } = harness;
    routeFixture(fake);
    fake.postRoutes.set("/event", () => ({
      status: 422,
      body: { detail: "no human-acknowledged action with id: fetch_panel" },
    }));

    await controller.connect();
    (q<HTMLButtonElement>('[data-persona-id="1"]') as HTMLButtonElement).click();
    await until(() => fake.streamOpens === 1, "stream subscription");

    buttonFor("human_ack").click();
    await flush();

    expect(text("#toast")).toContain("no human-acknowledged action");
    // The rejection means no echo will come; the card must not advance and
    // the buttons must unlock for another try.
    expect(text("#instruction-label")).toBe("Fetch the panel from the rack");
    expect(buttonFor("human_ack").disabled).toBe(false);
  });

  it("keeps the roster up when session creation is refused", async () => {
    const { fake, controller } = harness;
    routeFixture(fake);
    fake.postRoutes.set("/session", () => ({
      status: 409,
      body: { detail: "a session is already active" },
    }));

    await controller.connect();
    (q<HTMLButtonElement>('[data-persona-id="2"]') as HTMLButtonElement).click();
    await flush();

    expect(q("#persona-roster")).not.toBeNull();
    expect(text("#toast")).toContain("already active");
    expect(fake.streamOpens).toBe(0);
  });
});
