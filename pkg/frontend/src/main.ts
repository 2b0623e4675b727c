import { HttpApi } from "./api.js";
import { SessionController } from "./controller.js";
import { ChatView } from "./view.js";

const api = new HttpApi("");
const controller = new SessionController(api, {
  pollWaitMs: 10_000,
  pollDelayMs: 500,
  onChange: () => view.update(),
});
const view = new ChatView(document, controller);

const questionInput = document.getElementById("question-input") as HTMLInputElement;
const startButton = document.getElementById("start-session") as HTMLButtonElement;
const clarInput = document.getElementById("clarification-input") as HTMLInputElement;
const sendButton = document.getElementById("send-clarification") as HTMLButtonElement;
const downloadButton = document.getElementById("download-transcript") as HTMLButtonElement;
const retryButton = document.querySelector("#error-banner .retry") as HTMLButtonElement;

startButton.addEventListener("click", () => {
  const question = questionInput.value.trim();
  if (!question) {
    return;
  }
  startButton.disabled = true;
  void controller.start(question).finally(() => {
    startButton.disabled = false;
  });
});

async function submitClarification(): Promise<void> {
  const text = clarInput.value.trim();
  const sent = await controller.sendClarification(text);
  if (sent) {
    clarInput.value = "";
  }
}

sendButton.addEventListener("click", () => void submitClarification());
clarInput.addEventListener("keydown", (ev) => {
  if (ev.key === "Enter") {
    void submitClarification();
  }
});
clarInput.addEventListener("input", () => view.update());

retryButton.addEventListener("click", () => void controller.retry());

downloadButton.addEventListener("click", () => {
  const blob = new Blob([controller.transcriptJson()], { type: "application/json" });
  const url = URL.createObjectURL(blob);
  const link = document.createElement("a");
  link.href = url;
  link.download = "transcript.json";
  link.click();
  URL.revokeObjectURL(url);
});

view.update();
