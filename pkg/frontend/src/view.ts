import { SessionController } from "./controller.js";
import { EVENT_STYLES, SessionEvent } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** One chat bubble per event; hints carry the score and threshold verbatim. */
export function renderEventHtml(event: SessionEvent): string {
  const cls = EVENT_STYLES[event.kind];
  switch (event.kind) {
    case "thought":
      return `<div class="${cls}">💭 ${escapeHtml(event.text ?? "")}</div>`;
    case "tool_call": {
      if (event.malformed) {
        return `<div class="${cls} malformed">⚠ malformed action: <code>${escapeHtml(event.raw ?? "")}</code></div>`;
      }
      const args = (event.args ?? []).map((a) => `"${escapeHtml(a)}"`).join(", ");
      return `<div class="${cls}">🔧 ${escapeHtml(event.tool ?? "")}(${args})</div>`;
    }
    case "observation":
      return `<div class="${cls}"><pre>${escapeHtml(event.text ?? "")}</pre></div>`;
    case "hint": {
      const score = (event.score ?? 0).toFixed(3);
      return (
        `<div class="${cls}">` +
        `<span class="hint-badge">${escapeHtml(event.ambiguity ?? "")} ` +
        `score ${score} ≥ ${event.threshold}</span>` +
        `<div class="hint-text">${escapeHtml(event.text ?? "")}</div></div>`
      );
    }
    case "clarification_request":
      return `<div class="${cls}">❓ ${escapeHtml(event.text ?? "")}</div>`;
    case "clarification_response":
      return `<div class="${cls}">🙋 ${escapeHtml(event.text ?? "")}</div>`;
    case "final_answer": {
      const rows = (event.rows ?? [])
        .map((row) => `<li>${escapeHtml(row.join(", "))}</li>`)
        .join("");
      return (
        `<div class="${cls}">✅ <code>${escapeHtml(event.sparql ?? "")}</code>` +
        `<ul>${rows || "<li><em>no rows</em></li>"}</ul></div>`
      );
    }
    case "error":
      return `<div class="${cls}">✖ session failed: ${escapeHtml(event.reason ?? "")}</div>`;
  }
}

export function renderTranscriptHtml(events: SessionEvent[]): string {
  return events.map(renderEventHtml).join("\n");
}

/** Binds a controller to the page; update() is the controller's onChange. */
export class ChatView {
  private readonly transcript: HTMLElement;
  private readonly input: HTMLInputElement;
  private readonly send: HTMLButtonElement;
  private readonly banner: HTMLElement;
  private readonly notice: HTMLElement;

  constructor(root: Document, private readonly controller: SessionController) {
    this.transcript = root.getElementById("transcript")!;
    this.input = root.getElementById("clarification-input") as HTMLInputElement;
    this.send = root.getElementById("send-clarification") as HTMLButtonElement;
    this.banner = root.getElementById("error-banner")!;
    this.notice = root.getElementById("stale-notice")!;
  }

  update(): void {
    this.transcript.innerHTML = renderTranscriptHtml(this.controller.events);
    this.transcript.scrollTop = this.transcript.scrollHeight;
    const enabled = this.controller.inputEnabled;
    this.input.disabled = !enabled;
    this.send.disabled = !enabled || !this.input.value.trim();
    this.banner.hidden = this.controller.errorBanner === null;
    this.banner.querySelector(".message")!.textContent =
      this.controller.errorBanner ?? "";
    this.notice.hidden = this.controller.staleNotice === null;
    this.notice.textContent = this.controller.staleNotice ?? "";
  }
}
