export type EventKind =
  | "thought"
  | "tool_call"
  | "observation"
  | "hint"
  | "clarification_request"
  | "clarification_response"
  | "final_answer"
  | "error";

/** One event from GET /sessions/{id}/events; fields vary by kind. */
export interface SessionEvent {
  seq: number;
  kind: EventKind;
  ts?: number;
  text?: string;
  tool?: string;
  args?: string[];
  malformed?: boolean;
  raw?: string;
  ambiguity?: string;
  score?: number;
  threshold?: number;
  sparql?: string;
  columns?: string[];
  rows?: string[][];
  reason?: string;
}

export const TERMINAL_KINDS: ReadonlySet<EventKind> = new Set([
  "final_answer",
  "error",
]);

/** CSS class per kind; hints get their own highlighted style. */
export const EVENT_STYLES: Record<EventKind, string> = {
  thought: "event thought",
  tool_call: "event tool-call",
  observation: "event observation",
  hint: "event hint",
  clarification_request: "event clarification-request",
  clarification_response: "event clarification-response",
  final_answer: "event final-answer",
  error: "event error",
};
