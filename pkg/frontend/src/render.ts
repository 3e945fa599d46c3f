/** DOM rendering: ranked results with stacked channel-contribution bars. */

import { CHANNELS, QueryResponse, ResultEntry } from "./api.js";

const CHANNEL_COLORS: Record<string, string> = {
  word: "#4c78a8",
  pos: "#f58518",
  morpheme: "#54a24b",
  category: "#b279a2",
  sememe: "#e45756",
};

function formatScore(value: number): string {
  return value.toFixed(4);
}

/**
 * Stacked contribution bar for one result.
 *
 * Segment widths are proportional to each channel's weighted contribution;
 * negatives render on an opposing axis left of the zero line. Hovering a
 * segment shows the numeric value, and the displayed total is the sum of the
 * parts, which equals the fused score.
 */
export function renderExplanation(entry: ResultEntry, doc: Document): HTMLElement {
  const container = doc.createElement("div");
  container.className = "explanation";

  const negatives = doc.createElement("div");
  negatives.className = "bar bar-negative";
  const positives = doc.createElement("div");
  positives.className = "bar bar-positive";

  const magnitudes = CHANNELS.map((c) => Math.abs(entry.contributions[c] ?? 0));
  const span = Math.max(magnitudes.reduce((a, b) => a + b, 0), 1e-12);

  let total = 0;
  for (const channel of CHANNELS) {
    const value = entry.contributions[channel] ?? 0;
    total += value;
    const segment = doc.createElement("span");
    segment.className = `segment segment-${channel}`;
    segment.style.display = "inline-block";
    segment.style.height = "100%";
    segment.style.width = `${(Math.abs(value) / span) * 100}%`;
    segment.style.backgroundColor = CHANNEL_COLORS[channel];
    segment.title = `${channel}: ${formatScore(value)}`;
    segment.dataset.channel = channel;
    segment.dataset.value = String(value);
    (value < 0 ? negatives : positives).appendChild(segment);
  }

  const label = doc.createElement("span");
  label.className = "explanation-total";
  label.textContent = formatScore(total);
  label.title = "sum of channel contributions (= fused score)";

  container.appendChild(negatives);
  container.appendChild(positives);
  container.appendChild(label);
  return container;
}

/** Result rows in exactly the response order; no client-side re-sorting. */
export function renderResults(response: QueryResponse, doc: Document): HTMLElement {
  const list = doc.createElement("ol");
  list.className = "results";
  list.start = 0;
  for (const entry of response.results) {
    const item = doc.createElement("li");
    item.className = "result";
    item.dataset.word = entry.word;
    item.dataset.rank = String(entry.rank);

    const word = doc.createElement("span");
    word.className = "result-word";
    word.textContent = entry.word;

    const score = doc.createElement("span");
    score.className = "result-score";
    score.textContent = formatScore(entry.score);

    item.appendChild(word);
    item.appendChild(score);
    item.appendChild(renderExplanation(entry, doc));
    list.appendChild(item);
  }
  return list;
}

export function renderEmpty(doc: Document): HTMLElement {
  const note = doc.createElement("p");
  note.className = "no-results";
  note.textContent = "no matches under current filters; try removing a filter";
  return note;
}

export function renderError(message: string, doc: Document): HTMLElement {
  const banner = doc.createElement("div");
  banner.className = "error-banner";
  banner.setAttribute("role", "alert");
  banner.textContent = message;
  return banner;
}

/** Swap the result area to reflect the session after a submit settles. */
export function renderInto(
  target: HTMLElement,
  response: QueryResponse | null,
  error: string | null,
  doc: Document,
): void {
  target.replaceChildren();
  if (error !== null) {
    target.appendChild(renderError(error, doc));
    return;
  }
  if (response === null) return;
  if (response.results.length === 0) {
    target.appendChild(renderEmpty(doc));
    return;
  }
  target.appendChild(renderResults(response, doc));
}
