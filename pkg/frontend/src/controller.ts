import { Api, ApiError, ConflictError } from "./api.js";
import { SessionEvent, TERMINAL_KINDS } from "./types.js";

export type Phase = "idle" | "starting" | "following" | "done" | "unreachable";

export interface ControllerOptions {
  /** Long-poll wait passed to the events endpoint. */
  pollWaitMs?: number;
  /** Pause between polls. */
  pollDelayMs?: number;
  sleep?: (ms: number) => Promise<void>;
  onChange?: () => void;
}

const defaultSleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

/**
 * Session state machine behind the chat view.
 *
 * Invariants the tests pin down: events render in seq order and none are
 * dropped; the clarification input is enabled iff the latest event is a
 * clarification_request that has not been answered; a second submit for the
 * same request is rejected locally, and a server-side conflict surfaces as
 * a stale-state notice rather than a crash.
 */
export class SessionController {
  readonly events: SessionEvent[] = [];
  phase: Phase = "idle";
  question = "";
  errorBanner: string | null = null;
  staleNotice: string | null = null;

  private sessionId: string | null = null;
  private lastSeq = 0;
  private answeredSeq = 0;
  private readonly pollWaitMs: number;
  private readonly pollDelayMs: number;
  private readonly sleep: (ms: number) => Promise<void>;
  private readonly onChange: () => void;

  constructor(private readonly api: Api, options: ControllerOptions = {}) {
    this.pollWaitMs = options.pollWaitMs ?? 10_000;
    this.pollDelayMs = options.pollDelayMs ?? 500;
    this.sleep = options.sleep ?? defaultSleep;
    this.onChange = options.onChange ?? (() => {});
  }

  latestEvent(): SessionEvent | null {
    return this.events.length ? this.events[this.events.length - 1] : null;
  }

  /** Enabled exactly when the latest event is an unanswered request. */
  get inputEnabled(): boolean {
    const latest = this.latestEvent();
    return (
      this.phase === "following" &&
      latest !== null &&
      latest.kind === "clarification_request" &&
      latest.seq !== this.answeredSeq
    );
  }

  get finished(): boolean {
    const latest = this.latestEvent();
    return latest !== null && TERMINAL_KINDS.has(latest.kind);
  }

  /** create_session then follow the event feed until a terminal event. */
  async start(question: string): Promise<void> {
    this.question = question;
    this.phase = "starting";
    this.errorBanner = null;
    this.onChange();
    try {
      this.sessionId = await this.api.createSession(question);
    } catch (err) {
      this.phase = "unreachable";
      this.errorBanner = err instanceof Error ? err.message : String(err);
      this.onChange();
      return;
    }
    this.phase = "following";
    this.onChange();
    await this.follow();
  }

  /** After a connectivity banner, resume (or restart) without losing events. */
  async retry(): Promise<void> {
    this.errorBanner = null;
    if (this.sessionId === null) {
      await this.start(this.question);
      return;
    }
    this.phase = "following";
    this.onChange();
    await this.follow();
  }

  private async follow(): Promise<void> {
    while (this.phase === "following" && !this.finished) {
      let batch: SessionEvent[];
      try {
        batch = await this.api.getEvents(this.sessionId!, this.lastSeq, this.pollWaitMs);
      } catch (err) {
        this.phase = "unreachable";
        this.errorBanner = err instanceof Error ? err.message : String(err);
        this.onChange();
        return;
      }
      if (batch.length > 0) {
        this.ingest(batch);
      }
      if (this.finished) {
        break;
      }
      await this.sleep(this.pollDelayMs);
    }
    if (this.finished) {
      this.phase = "done";
      this.onChange();
    }
  }

  private ingest(batch: SessionEvent[]): void {
    for (const event of batch) {
      if (event.seq <= this.lastSeq) {
        continue; // already rendered
      }
      this.events.push(event);
      this.lastSeq = event.seq;
      if (event.kind === "error") {
        this.errorBanner = `session failed: ${event.reason ?? "unknown error"}`;
      }
    }
    this.onChange();
  }

  /**
   * Post the user's answer to the pending clarification request.
   * Returns false (and does not call the service) when the input is not
   * currently enabled, which is what rejects a double submit.
   */
  async sendClarification(text: string): Promise<boolean> {
    if (!text.trim() || !this.inputEnabled) {
      return false;
    }
    const pending = this.latestEvent()!;
    this.answeredSeq = pending.seq; // disable immediately
    this.staleNotice = null;
    this.onChange();
    try {
      await this.api.postClarification(this.sessionId!, text);
      return true;
    } catch (err) {
      if (err instanceof ConflictError) {
        this.staleNotice = "The session moved on; refreshing the view.";
        this.onChange();
        return false;
      }
      this.answeredSeq = 0;
      this.phase = "unreachable";
      this.errorBanner =
        err instanceof ApiError ? err.message : `clarification failed: ${String(err)}`;
      this.onChange();
      return false;
    }
  }

  /** Raw event JSON for the transcript download button. */
  transcriptJson(): string {
    return JSON.stringify(
      { question: this.question, events: this.events },
      null,
      2,
    );
  }
}
