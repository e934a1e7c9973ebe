// Wire types for the session service. Field names and shapes mirror the
// service JSON exactly; nothing here is console-invented state.

export type Phase = "running" | "completed" | "failed";

/** One line of the engine trace, as embedded in state snapshots. */
export interface TraceEvent {
  time: number;
  node: string | null;
  kind: string;
  detail: Record<string, unknown>;
}

/** The WaitForHuman instruction currently shown to the worker, if any. */
export interface Instruction {
  action_id: string;
  label: string;
  role: string;
  timeout_ms: number;
  issued_at_ms: number;
}

/** The robot command currently executing, if any. */
export interface RobotAction {
  action_id: string;
  label: string;
  duration_ms: number;
}

export interface StateSnapshot {
  session_id: string;
  persona_id: number;
  spec_id: string;
  digest: string;
  phase: Phase;
  time_ms: number;
  part_id: string | null;
  strategy_id: string | null;
  assistance_level: number | null;
  instruction: Instruction | null;
  robot_action: RobotAction | null;
  goals_reached: [string, string][];
  failed_part: string | null;
  annotation: string | null;
  seq: number;
  /** Ring of the most recent trace events (capacity 100). */
  events: TraceEvent[];
}

export type StreamFrame =
  | { type: "state"; state: StateSnapshot }
  | { type: "dropped"; count: number };

export interface TreeNodeDoc {
  id: string;
  kind: string;
  label: string;
  part_id?: string;
  strategy_id?: string;
  assistance_level?: number;
  personas?: "all" | number[];
  budget_ms?: number;
  max_attempts?: number;
  action_id?: string;
  goal_id?: string;
  actor?: string;
  role?: string;
  duration_ms?: number;
  timeout_ms?: number;
  skippable?: boolean;
  skip_if?: string[];
  children?: TreeNodeDoc[];
}

export interface TreeDoc {
  spec_id: string;
  digest: string;
  root: TreeNodeDoc;
}

export interface PersonaDoc {
  id: number;
  name: string;
  impaired?: string[];
  notes?: string;
}

export interface PersonasFile {
  format_version: string;
  personas: PersonaDoc[];
}
