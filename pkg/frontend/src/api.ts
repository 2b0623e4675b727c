import type { SessionEvent } from "./types.js";

export interface Api {
  createSession(question: string): Promise<string>;
  getEvents(sessionId: string, after: number, waitMs: number): Promise<SessionEvent[]>;
  postClarification(sessionId: string, text: string): Promise<void>;
}

/** Posting a clarification when the session is not awaiting one. */
export class ConflictError extends Error {}

/** Any other transport or server failure. */
export class ApiError extends Error {
  constructor(message: string, readonly status?: number) {
    super(message);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class HttpApi implements Api {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    } catch (err) {
      throw new ApiError(`service unreachable: ${String(err)}`);
    }
    if (response.status === 409) {
      throw new ConflictError("session is not awaiting clarification");
    }
    if (!response.ok) {
      throw new ApiError(`request failed with ${response.status}`, response.status);
    }
    return response;
  }

  async createSession(question: string): Promise<string> {
    const response = await this.request("/sessions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ question }),
    });
    const body = (await response.json()) as { id: string };
    return body.id;
  }

  async getEvents(sessionId: string, after: number, waitMs: number): Promise<SessionEvent[]> {
    const response = await this.request(
      `/sessions/${sessionId}/events?after=${after}&wait_ms=${waitMs}`,
    );
    const body = (await response.json()) as { events: SessionEvent[] };
    return body.events;
  }

  async postClarification(sessionId: string, text: string): Promise<void> {
    await this.request(`/sessions/${sessionId}/clarification`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ text }),
    });
  }
}
