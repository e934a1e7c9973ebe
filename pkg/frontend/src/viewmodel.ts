// Immutable view model folded from /state snapshots, /tree, and stream
// frames. Every field is traceable to service output; the console adds no
// process logic of its own.

import type {
  Instruction,
  PersonaDoc,
  Phase,
  RobotAction,
  StateSnapshot,
  StreamFrame,
  TraceEvent,
  TreeDoc,
  TreeNodeDoc,
} from "./types";

export type NodeVisual = "idle" | "running" | "success" | "failed" | "skipped";

export type Connection = "idle" | "connecting" | "live" | "reconnecting" | "closed";

export interface PartBadge {
  partId: string;
  name: string;
  /** Assistance level of the strategy currently or last entered. */
  level: number | null;
  strategyId: string | null;
  state: "idle" | "active" | "done" | "failed";
  /** Strategy ids entered so far, in order; length > 1 means fall-through. */
  entered: string[];
}

export interface FeedItem {
  time: number;
  text: string;
  flavor: "info" | "input" | "stale" | "fallthrough" | "outcome" | "warning";
}

export interface SessionInfo {
  id: string;
  personaId: number;
  specId: string;
  phase: Phase;
  timeMs: number;
  failedPart: string | null;
  annotation: string | null;
}

export interface ConsoleViewModel {
  connection: Connection;
  personas: PersonaDoc[];
  tree: TreeDoc | null;
  session: SessionInfo | null;
  instruction: Instruction | null;
  robotAction: RobotAction | null;
  /** Action id of a POSTed input still waiting for its stream echo. */
  pendingPost: string | null;
  nodeVisual: ReadonlyMap<string, NodeVisual>;
  /** Skip annotations per node id ("already reached", "skipped by flags"). */
  skipNote: ReadonlyMap<string, string>;
  badges: PartBadge[];
  feed: FeedItem[];
  goalsReached: [string, string][];
  staleNotice: string | null;
  droppedTotal: number;
  toast: string | null;
  /** All trace events folded so far, for stitching ring snapshots. */
  eventLog: TraceEvent[];
}

const FEED_CAP = 200;
export const EVENT_RING_CAP = 100;

export function initialViewModel(): ConsoleViewModel {
  return {
    connection: "idle",
    personas: [],
    tree: null,
    session: null,
    instruction: null,
    robotAction: null,
    pendingPost: null,
    nodeVisual: new Map(),
    skipNote: new Map(),
    badges: [],
    feed: [],
    goalsReached: [],
    staleNotice: null,
    droppedTotal: 0,
    toast: null,
    eventLog: [],
  };
}

// ---------------------------------------------------------------------------
// Tree index
// ---------------------------------------------------------------------------

export interface TreeIndex {
  byId: Map<string, TreeNodeDoc>;
  /** Part processes in execution order (selector children of the root). */
  parts: { id: string; name: string }[];
  /** Node id -> ids of all descendants, for retry resets. */
  descendants: Map<string, string[]>;
  /** Action id -> leaf node ids carrying it. */
  actionNodes: Map<string, string[]>;
}

const indexCache = new WeakMap<TreeDoc, TreeIndex>();

export function treeIndex(tree: TreeDoc): TreeIndex {
  const cached = indexCache.get(tree);
  if (cached) return cached;
  const byId = new Map<string, TreeNodeDoc>();
  const descendants = new Map<string, string[]>();
  const actionNodes = new Map<string, string[]>();
  const walk = (node: TreeNodeDoc): string[] => {
    byId.set(node.id, node);
    if (node.action_id !== undefined) {
      const ids = actionNodes.get(node.action_id) ?? [];
      ids.push(node.id);
      actionNodes.set(node.action_id, ids);
    }
    const below: string[] = [];
    for (const child of node.children ?? []) {
      below.push(child.id, ...walk(child));
    }
    descendants.set(node.id, below);
    return below;
  };
  walk(tree.root);
  const parts = (tree.root.children ?? []).map((sel) => ({
    id: sel.part_id ?? sel.id,
    name: sel.label,
  }));
  const index = { byId, parts, descendants, actionNodes };
  indexCache.set(tree, index);
  return index;
}

function freshBadges(tree: TreeDoc | null): PartBadge[] {
  if (tree === null) return [];
  return treeIndex(tree).parts.map((p) => ({
    partId: p.id,
    name: p.name,
    level: null,
    strategyId: null,
    state: "idle" as const,
    entered: [],
  }));
}

// ---------------------------------------------------------------------------
// Plain setters
// ---------------------------------------------------------------------------

export function withConnection(vm: ConsoleViewModel, connection: Connection): ConsoleViewModel {
  return { ...vm, connection };
}

export function withPersonas(vm: ConsoleViewModel, personas: PersonaDoc[]): ConsoleViewModel {
  return { ...vm, personas };
}

export function withTree(vm: ConsoleViewModel, tree: TreeDoc): ConsoleViewModel {
  return { ...vm, tree, badges: vm.session === null ? freshBadges(tree) : vm.badges };
}

export function markPending(vm: ConsoleViewModel, actionId: string): ConsoleViewModel {
  return { ...vm, pendingPost: actionId };
}

/** Drop all session-scoped state (the service no longer has the session). */
export function withoutSession(vm: ConsoleViewModel): ConsoleViewModel {
  return {
    ...vm,
    session: null,
    instruction: null,
    robotAction: null,
    pendingPost: null,
    nodeVisual: new Map(),
    skipNote: new Map(),
    badges: freshBadges(vm.tree),
    feed: [],
    goalsReached: [],
    staleNotice: null,
    eventLog: [],
  };
}

/** A rejected POST gets a toast; no echo will come, so pending clears too. */
export function withToast(vm: ConsoleViewModel, toast: string): ConsoleViewModel {
  return { ...vm, toast, pendingPost: null };
}

export function clearToast(vm: ConsoleViewModel): ConsoleViewModel {
  return vm.toast === null ? vm : { ...vm, toast: null };
}

export function ackEnabled(vm: ConsoleViewModel): boolean {
  return (
    vm.instruction !== null &&
    vm.pendingPost === null &&
    vm.session !== null &&
    vm.session.phase === "running"
  );
}

// ---------------------------------------------------------------------------
// Ring stitching
// ---------------------------------------------------------------------------

function eventKey(e: TraceEvent): string {
  return `${e.time}|${e.node ?? ""}|${e.kind}|${JSON.stringify(e.detail)}`;
}

/**
 * Return the entries of `ring` not yet present in `log`. The ring holds the
 * trace tail (capacity EVENT_RING_CAP); while it is not full it equals the
 * whole trace, afterwards the overlap with our log is matched positionally.
 */
export function stitchRing(log: TraceEvent[], ring: TraceEvent[], cap = EVENT_RING_CAP): TraceEvent[] {
  if (ring.length < cap) {
    return ring.slice(Math.min(log.length, ring.length));
  }
  for (let overlap = Math.min(log.length, cap); overlap >= 0; overlap--) {
    let match = true;
    for (let i = 0; i < overlap; i++) {
      if (eventKey(log[log.length - overlap + i]) !== eventKey(ring[i])) {
        match = false;
        break;
      }
    }
    if (match) return ring.slice(overlap);
  }
  return ring.slice();
}

// ---------------------------------------------------------------------------
// Event folding
// ---------------------------------------------------------------------------

interface FoldState {
  visual: Map<string, NodeVisual>;
  notes: Map<string, string>;
  badges: PartBadge[];
  feed: FeedItem[];
  pendingPost: string | null;
  staleNotice: string | null;
}

function pushFeed(st: FoldState, time: number, text: string, flavor: FeedItem["flavor"]): void {
  st.feed.push({ time, text, flavor });
  if (st.feed.length > FEED_CAP) st.feed.splice(0, st.feed.length - FEED_CAP);
}

function badgeFor(st: FoldState, partId: string | undefined): PartBadge | undefined {
  return st.badges.find((b) => b.partId === partId);
}

function describeInput(event: unknown): string {
  switch (event) {
    case "human_ack":
      return "acknowledged";
    case "human_fail":
      return "marked failed";
    case "robot_done":
      return "robot done";
    case "robot_fail":
      return "robot failed";
    default:
      return String(event);
  }
}

function foldStatus(st: FoldState, ev: TraceEvent, index: TreeIndex | null): void {
  if (ev.node === null) return;
  const doc = index?.byId.get(ev.node);
  if (index !== null && doc === undefined) {
    console.warn(`event for unknown tree node: ${ev.node}`);
    return;
  }
  const status = ev.detail["status"];
  const reason = ev.detail["reason"];
  let visual: NodeVisual;
  if (status === "running") {
    visual = "running";
  } else if (status === "failure") {
    visual = "failed";
  } else if (reason === "goal_already_reached") {
    visual = "skipped";
    st.notes.set(ev.node, "already reached");
  } else if (reason === "skipped_by_flags") {
    visual = "skipped";
    st.notes.set(ev.node, "skipped by flags");
  } else {
    visual = "success";
  }
  st.visual.set(ev.node, visual);
  if (doc === undefined) return;

  // Shared-action leg groups reuse the sequence kind but carry an action id;
  // only the per-strategy sequence itself drives the badges.
  if (doc.kind === "strategy_sequence" && doc.strategy_id !== undefined && doc.action_id === undefined) {
    const badge = badgeFor(st, doc.part_id);
    if (badge === undefined) return;
    if (visual === "running" && badge.strategyId !== doc.strategy_id) {
      const level = doc.assistance_level ?? null;
      const firstEntry = badge.entered.length === 0;
      badge.strategyId = doc.strategy_id;
      badge.level = level;
      badge.state = "active";
      badge.entered.push(doc.strategy_id);
      pushFeed(
        st,
        ev.time,
        firstEntry
          ? `${badge.partId}: strategy ${doc.strategy_id} (level ${level})`
          : `${badge.partId}: fall through to ${doc.strategy_id} (level ${level})`,
        firstEntry ? "info" : "fallthrough",
      );
    }
  } else if (doc.kind === "strategy_selector") {
    const badge = badgeFor(st, doc.part_id);
    if (badge === undefined) return;
    if (visual === "success") badge.state = "done";
    else if (visual === "failed") badge.state = "failed";
  }
}

function foldEvent(st: FoldState, ev: TraceEvent, index: TreeIndex | null): void {
  switch (ev.kind) {
    case "status":
      foldStatus(st, ev, index);
      break;
    case "instruction":
      st.staleNotice = null;
      pushFeed(st, ev.time, `instruction: ${String(ev.detail["label"])}`, "info");
      break;
    case "command":
      pushFeed(st, ev.time, `robot: ${String(ev.detail["label"])}`, "info");
      break;
    case "event": {
      st.staleNotice = null;
      pushFeed(st, ev.time, describeInput(ev.detail["event"]), "input");
      const doc = ev.node !== null ? index?.byId.get(ev.node) : undefined;
      if (st.pendingPost !== null && doc?.action_id === st.pendingPost) {
        st.pendingPost = null;
      }
      break;
    }
    case "stale_event": {
      const what = describeInput(ev.detail["event"]);
      st.staleNotice = `${what}: arrived after the step was resolved and was ignored`;
      pushFeed(st, ev.time, `stale input ignored (${String(ev.detail["event"])})`, "stale");
      const doc = ev.node !== null ? index?.byId.get(ev.node) : undefined;
      if (st.pendingPost !== null && doc?.action_id === st.pendingPost) {
        st.pendingPost = null;
      }
      break;
    }
    case "retry": {
      pushFeed(st, ev.time, `retry: attempt ${ev.detail["attempt"]} of ${ev.detail["max"]}`, "info");
      if (ev.node !== null && index !== null) {
        for (const below of index.descendants.get(ev.node) ?? []) {
          st.visual.delete(below);
        }
      }
      break;
    }
    case "goal_reached":
      pushFeed(st, ev.time, `goal reached: ${String(ev.detail["goal"])}`, "info");
      break;
    case "episode_start":
      pushFeed(st, ev.time, `episode started (persona ${ev.detail["persona"]})`, "info");
      break;
    case "outcome": {
      const outcome = ev.detail["outcome"];
      const text =
        outcome === "completed"
          ? "process completed"
          : `process failed at ${ev.detail["part"] ?? "start"}`;
      pushFeed(st, ev.time, text, "outcome");
      break;
    }
    default:
      pushFeed(st, ev.time, `${ev.kind}`, "info");
      break;
  }
}

// ---------------------------------------------------------------------------
// Frame application
// ---------------------------------------------------------------------------

function applyState(vm: ConsoleViewModel, snap: StateSnapshot): ConsoleViewModel {
  const sameSession = vm.session !== null && vm.session.id === snap.session_id;
  const base: ConsoleViewModel = sameSession
    ? vm
    : {
        ...vm,
        session: null,
        instruction: null,
        robotAction: null,
        pendingPost: null,
        nodeVisual: new Map(),
        skipNote: new Map(),
        badges: freshBadges(vm.tree),
        feed: [],
        goalsReached: [],
        staleNotice: null,
        eventLog: [],
      };

  const st: FoldState = {
    visual: new Map(base.nodeVisual),
    notes: new Map(base.skipNote),
    badges: base.badges.map((b) => ({ ...b, entered: [...b.entered] })),
    feed: [...base.feed],
    pendingPost: base.pendingPost,
    staleNotice: base.staleNotice,
  };
  const index = base.tree !== null ? treeIndex(base.tree) : null;
  const fresh = stitchRing(base.eventLog, snap.events);
  for (const ev of fresh) foldEvent(st, ev, index);

  return {
    ...base,
    session: {
      id: snap.session_id,
      personaId: snap.persona_id,
      specId: snap.spec_id,
      phase: snap.phase,
      timeMs: snap.time_ms,
      failedPart: snap.failed_part,
      annotation: snap.annotation,
    },
    instruction: snap.instruction,
    robotAction: snap.robot_action,
    pendingPost: st.pendingPost,
    nodeVisual: st.visual,
    skipNote: st.notes,
    badges: st.badges,
    feed: st.feed,
    goalsReached: snap.goals_reached,
    staleNotice: st.staleNotice,
    eventLog: [...base.eventLog, ...fresh],
  };
}

export function applyFrame(vm: ConsoleViewModel, frame: StreamFrame): ConsoleViewModel {
  if (frame.type === "state") return applyState(vm, frame.state);
  if (frame.type === "dropped") {
    const next = { ...vm, droppedTotal: vm.droppedTotal + frame.count };
    next.feed = [
      ...vm.feed,
      { time: vm.session?.timeMs ?? 0, text: `stream overloaded: ${frame.count} frames dropped`, flavor: "warning" },
    ];
    return next;
  }
  return vm;
}
