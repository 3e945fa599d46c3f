/** Typed client for the revdict inference service. */

export const CHANNELS = ["word", "pos", "morpheme", "category", "sememe"] as const;
export type Channel = (typeof CHANNELS)[number];

export interface QueryFilters {
  pos?: string;
  initialLetter?: string;
  wordLength?: number;
}

export interface QueryRequestBody {
  description: string;
  top_k?: number;
  pos?: string;
  initial_letter?: string;
  word_length?: number;
}

export interface ResultEntry {
  word: string;
  score: number;
  rank: number;
  contributions: Record<Channel, number>;
}

export interface QueryResponse {
  results: ResultEntry[];
  model: {
    checkpoint: string;
    vocab: number;
    channels: Record<Channel, number>;
  };
}

export interface HealthResponse {
  status: string;
  vocab: number;
}

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number | null,
  ) {
    super(message);
  }
}

export function buildRequestBody(
  description: string,
  filters: QueryFilters,
  topK: number,
): QueryRequestBody {
  const body: QueryRequestBody = { description, top_k: topK };
  if (filters.pos) body.pos = filters.pos;
  if (filters.initialLetter) body.initial_letter = filters.initialLetter;
  if (filters.wordLength !== undefined) body.word_length = filters.wordLength;
  return body;
}

async function parseError(response: Response): Promise<ApiError> {
  let detail = `${response.status} ${response.statusText}`;
  try {
    const payload = (await response.json()) as { error?: string };
    if (payload.error) detail = payload.error;
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(detail, response.status);
}

export class Client {
  constructor(readonly baseUrl: string) {}

  async health(): Promise<HealthResponse> {
    const response = await fetch(`${this.baseUrl}/health`);
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as HealthResponse;
  }

  async query(body: QueryRequestBody): Promise<QueryResponse> {
    let response: Response;
    try {
      response = await fetch(`${this.baseUrl}/query`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError(`network error: ${String(err)}`, null);
    }
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as QueryResponse;
  }
}
