/** Wire the console controls to the session and the inference service. */

import { Client } from "./api.js";
import { canSubmit, createSession, submitQuery } from "./state.js";
import { renderInto } from "./render.js";

export function initConsole(doc: Document, baseUrl: string): void {
  const client = new Client(baseUrl);
  const session = createSession();

  const description = doc.getElementById("description") as HTMLTextAreaElement;
  const posInput = doc.getElementById("filter-pos") as HTMLInputElement;
  const letterInput = doc.getElementById("filter-initial") as HTMLInputElement;
  const lengthInput = doc.getElementById("filter-length") as HTMLInputElement;
  const submit = doc.getElementById("submit") as HTMLButtonElement;
  const results = doc.getElementById("results") as HTMLElement;
  const status = doc.getElementById("status") as HTMLElement;
  const historyList = doc.getElementById("history") as HTMLElement;

  function syncControls(): void {
    session.description = description.value;
    session.filters = {
      pos: posInput.value.trim() || undefined,
      initialLetter: letterInput.value.trim() || undefined,
      wordLength: lengthInput.value ? Number(lengthInput.value) : undefined,
    };
    submit.disabled = !canSubmit(session) || session.inFlight;
  }

  function renderHistory(): void {
    historyList.replaceChildren();
    for (const entry of session.history) {
      const item = doc.createElement("li");
      item.textContent = `${entry.description} (${entry.resultCount} results)`;
      historyList.appendChild(item);
    }
  }

  async function onSubmit(): Promise<void> {
    syncControls();
    if (!canSubmit(session)) return;
    submit.disabled = true;
    await submitQuery(session, client);
    renderInto(results, session.lastResponse, session.error, doc);
    renderHistory();
    submit.disabled = !canSubmit(session) || session.inFlight;
  }

  description.addEventListener("input", syncControls);
  posInput.addEventListener("input", syncControls);
  letterInput.addEventListener("input", syncControls);
  lengthInput.addEventListener("input", syncControls);
  submit.addEventListener("click", () => {
    void onSubmit();
  });
  description.addEventListener("keydown", (event) => {
    if (event.key === "Enter" && (event.ctrlKey || event.metaKey)) {
      void onSubmit();
    }
  });

  syncControls();
  client
    .health()
    .then((health) => {
      status.textContent = `connected: ${health.vocab} words`;
    })
    .catch((err) => {
      status.textContent = `service unreachable: ${String(err)}`;
    });
}

declare global {
  interface Window {
    REVDICT_BASE_URL?: string;
  }
}

if (typeof window !== "undefined" && typeof document !== "undefined") {
  const base = window.REVDICT_BASE_URL ?? "";
  document.addEventListener("DOMContentLoaded", () => initConsole(document, base));
}
