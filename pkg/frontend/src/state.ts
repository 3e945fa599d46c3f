/** Session state: one in-flight query, append-only history, stale discard. */

import {
  ApiError,
  Client,
  QueryFilters,
  QueryResponse,
  buildRequestBody,
} from "./api.js";

export interface HistoryEntry {
  description: string;
  filters: QueryFilters;
  resultCount: number;
  at: number;
}

export interface SessionState {
  description: string;
  filters: QueryFilters;
  topK: number;
  lastResponse: QueryResponse | null;
  history: HistoryEntry[];
  error: string | null;
  inFlight: boolean;
  /** sequence number of the newest submit; older responses are discarded */
  requestSeq: number;
}

export function createSession(): SessionState {
  return {
    description: "",
    filters: {},
    topK: 10,
    lastResponse: null,
    history: [],
    error: null,
    inFlight: false,
    requestSeq: 0,
  };
}

export function canSubmit(state: SessionState): boolean {
  return state.description.trim().length > 0;
}

/**
 * Issue the query and fold the response into the session.
 *
 * The response only lands if no newer submit has started meanwhile; a
 * superseded response (or its error) is dropped without touching results or
 * history. Failures set the error banner and leave everything else as it was.
 */
export async function submitQuery(state: SessionState, client: Client): Promise<SessionState> {
  if (!canSubmit(state)) {
    throw new Error("submit requires a non-empty description");
  }
  state.requestSeq += 1;
  const seq = state.requestSeq;
  state.inFlight = true;
  const body = buildRequestBody(state.description.trim(), state.filters, state.topK);
  try {
    const response = await client.query(body);
    if (seq !== state.requestSeq) return state; // superseded; discard
    state.lastResponse = response;
    state.error = null;
    state.history.push({
      description: state.description.trim(),
      filters: { ...state.filters },
      resultCount: response.results.length,
      at: Date.now(),
    });
  } catch (err) {
    if (seq !== state.requestSeq) return state;
    state.error = err instanceof ApiError ? err.message : String(err);
  } finally {
    if (seq === state.requestSeq) state.inFlight = false;
  }
  return state;
}
