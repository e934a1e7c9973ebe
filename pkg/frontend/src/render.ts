// DOM rendering. The whole view is rebuilt from the view model on each
// update; at console scale that is cheaper than correct partial patching.

import type { TreeNodeDoc } from "./types";
import {
  ackEnabled,
  treeIndex,
  type ConsoleViewModel,
  type FeedItem,
  type NodeVisual,
  type PartBadge,
} from "./viewmodel";

export interface Handlers {
  onSelectPersona(personaId: number): void;
  onAcknowledge(actionId: string): void;
  onFail(actionId: string): void;
  onDismissToast(): void;
}

type Child = Node | string | null;

function el(tag: string, attrs: Record<string, string | (() => void)> = {}, ...children: Child[]): HTMLElement {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (typeof value === "function") {
      node.addEventListener(key, value);
    } else {
      node.setAttribute(key, value);
    }
  }
  for (const child of children) {
    if (child === null) continue;
    node.append(typeof child === "string" ? document.createTextNode(child) : child);
  }
  return node;
}

function seconds(ms: number): string {
  return `${(ms / 1000).toFixed(ms % 1000 === 0 ? 0 : 1)} s`;
}

// ---------------------------------------------------------------------------
// Sections
// ---------------------------------------------------------------------------

function renderHeader(vm: ConsoleViewModel): HTMLElement {
  const specId = vm.session?.specId ?? vm.tree?.spec_id ?? "";
  return el(
    "header",
    {},
    el("h1", {}, "Operator console"),
    specId !== "" ? el("span", { class: "spec-id" }, specId) : null,
    el("span", { id: "connection", "data-state": vm.connection }, vm.connection),
  );
}

function renderRoster(vm: ConsoleViewModel, handlers: Handlers): HTMLElement {
  const buttons = vm.personas.map((p) =>
    el(
      "button",
      {
        class: "persona-button",
        "data-persona-id": String(p.id),
        click: () => handlers.onSelectPersona(p.id),
      },
      el("span", { class: "persona-name" }, p.name),
      el(
        "span",
        { class: "persona-chips" },
        ...(p.impaired ?? []).map((c) => el("span", { class: "chip" }, c) as Child),
      ),
      p.notes !== undefined ? el("span", { class: "persona-notes" }, p.notes) : null,
    ),
  );
  return el(
    "section",
    { id: "persona-roster" },
    el("h2", {}, "Who is working today?"),
    el("div", { class: "roster-grid" }, ...buttons),
  );
}

function renderInstructionCard(vm: ConsoleViewModel, handlers: Handlers): HTMLElement {
  const session = vm.session;
  if (session === null) return el("section", { id: "instruction-card" });
  const card = el("section", { id: "instruction-card", class: `card phase-${session.phase}` });
  if (vm.instruction !== null) {
    const ins = vm.instruction;
    const enabled = ackEnabled(vm);
    card.append(
      el("p", { class: "card-kicker" }, "your step"),
      el("p", { id: "instruction-label" }, ins.label),
      el(
        "p",
        { class: "card-meta" },
        `time allowed: ${seconds(ins.timeout_ms)}`,
        ins.role !== "main" ? el("span", { class: "chip role-chip" }, ins.role) : null,
      ),
      el(
        "button",
        {
          id: "ack-button",
          class: "big-button",
          "data-action-id": ins.action_id,
          click: () => handlers.onAcknowledge(ins.action_id),
          ...(enabled ? {} : { disabled: "" }),
        },
        "Done",
      ),
      el(
        "button",
        {
          id: "fail-button",
          "data-action-id": ins.action_id,
          click: () => handlers.onFail(ins.action_id),
          ...(enabled ? {} : { disabled: "" }),
        },
        "Can't complete this step",
      ),
    );
  } else if (vm.robotAction !== null) {
    card.append(
      el("p", { class: "card-kicker" }, "robot working"),
      el("p", { id: "robot-label" }, vm.robotAction.label),
      el("p", { class: "card-meta" }, `expected: ${seconds(vm.robotAction.duration_ms)}`),
    );
  } else if (session.phase === "completed") {
    card.append(el("p", { id: "outcome-banner", class: "completed" }, "process complete"));
  } else if (session.phase === "failed") {
    const where = session.failedPart !== null ? ` at ${session.failedPart}` : "";
    card.append(el("p", { id: "outcome-banner", class: "failed" }, `process failed${where}`));
  } else {
    card.append(el("p", { class: "card-kicker" }, "waiting"));
  }
  return card;
}

function renderBadges(badges: PartBadge[]): HTMLElement {
  return el(
    "section",
    { id: "badges" },
    ...badges.map(
      (b) =>
        el(
          "span",
          { class: `badge state-${b.state}`, "data-part": b.partId },
          b.name,
          el("b", { class: "level" }, b.level === null ? "-" : `L${b.level}`),
        ) as Child,
    ),
  );
}

function visualOf(vm: ConsoleViewModel, nodeId: string): NodeVisual {
  return vm.nodeVisual.get(nodeId) ?? "idle";
}

function strategySequence(cond: TreeNodeDoc): TreeNodeDoc | null {
  // cond -> budget decorator -> strategy sequence
  const budget = cond.children?.[0];
  return budget?.children?.[0] ?? null;
}

function renderLeaf(vm: ConsoleViewModel, gate: TreeNodeDoc): HTMLElement {
  const visual = visualOf(vm, gate.id);
  const note = vm.skipNote.get(gate.id);
  const retry = gate.children?.[0];
  const inner = retry?.children?.[0];
  const legs =
    inner !== undefined && (inner.children?.length ?? 0) > 1
      ? el(
          "span",
          { class: "legs" },
          ...(inner.children ?? []).map(
            (leg) =>
              el("i", {
                class: `leg vis-${visualOf(vm, leg.id)}`,
                title: leg.role ?? "",
              }) as Child,
          ),
        )
      : null;
  return el(
    "div",
    { class: `leaf vis-${visual}`, "data-node-id": gate.id },
    el("span", { class: "leaf-label" }, gate.label),
    gate.actor !== undefined ? el("span", { class: "actor" }, gate.actor) : null,
    legs,
    note !== undefined ? el("span", { class: "skip-note" }, note) : null,
  );
}

function renderStrategy(vm: ConsoleViewModel, cond: TreeNodeDoc): HTMLElement {
  const seq = strategySequence(cond);
  const condVisual = visualOf(vm, cond.id);
  const visual = condVisual === "failed" ? "failed" : seq !== null ? visualOf(vm, seq.id) : condVisual;
  const who =
    cond.personas === "all" || cond.personas === undefined
      ? "all personas"
      : `personas ${cond.personas.join(", ")}`;
  const level = cond.assistance_level ?? 0;
  return el(
    "div",
    {
      class: `strategy vis-${visual}`,
      "data-node-id": seq?.id ?? cond.id,
      "data-strategy": cond.strategy_id ?? "",
    },
    el(
      "div",
      { class: "strategy-head" },
      el("span", { class: "strategy-name" }, cond.strategy_id ?? cond.label),
      el("b", { class: "level" }, `L${level}`),
      el("span", { class: "who" }, who),
    ),
    ...(seq?.children ?? []).map((gate) => renderLeaf(vm, gate) as Child),
  );
}

function renderTree(vm: ConsoleViewModel): HTMLElement {
  const section = el("section", { id: "tree" });
  if (vm.tree === null) return section;
  const index = treeIndex(vm.tree);
  for (const selector of vm.tree.root.children ?? []) {
    const partId = selector.part_id ?? selector.id;
    const name = index.parts.find((p) => p.id === partId)?.name ?? partId;
    const conds = [...(selector.children ?? [])].sort(
      (a, b) => (a.assistance_level ?? 0) - (b.assistance_level ?? 0),
    );
    section.append(
      el(
        "div",
        { class: `part vis-${visualOf(vm, selector.id)}`, "data-part": partId },
        el("h3", {}, name),
        el("div", { class: "strategies" }, ...conds.map((c) => renderStrategy(vm, c) as Child)),
      ),
    );
  }
  return section;
}

function renderFeed(feed: FeedItem[]): HTMLElement {
  const items = [...feed].reverse().map(
    (item) =>
      el(
        "li",
        { class: `feed-${item.flavor}` },
        el("span", { class: "feed-time" }, seconds(item.time)),
        item.text,
      ) as Child,
  );
  return el("section", { id: "feed" }, el("h3", {}, "Activity"), el("ol", {}, ...items));
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

export function render(root: HTMLElement, vm: ConsoleViewModel, handlers: Handlers): void {
  const page = el("div", { class: "console" }, renderHeader(vm));

  if (vm.connection === "reconnecting") {
    page.append(el("div", { id: "reconnect-banner" }, "connection lost, retrying"));
  }
  if (vm.droppedTotal > 0) {
    page.append(
      el("div", { id: "dropped-notice" }, `stream overloaded: ${vm.droppedTotal} updates dropped`),
    );
  }
  if (vm.toast !== null) {
    page.append(
      el(
        "div",
        { id: "toast" },
        vm.toast,
        el("button", { class: "toast-dismiss", click: () => handlers.onDismissToast() }, "dismiss"),
      ),
    );
  }

  if (vm.session === null) {
    page.append(renderRoster(vm, handlers));
  } else {
    const main = el(
      "main",
      {},
      renderInstructionCard(vm, handlers),
      renderBadges(vm.badges),
      vm.staleNotice !== null ? el("div", { id: "stale-notice" }, vm.staleNotice) : null,
      renderTree(vm),
      renderFeed(vm.feed),
    );
    page.append(main);
  }

  root.replaceChildren(page);
}
