// Session behavior: submit flow, history, error handling, stale discard.

import { describe, expect, it } from "vitest";

import { ApiError, Client, QueryResponse } from "../src/api.js";
import { canSubmit, createSession, submitQuery } from "../src/state.js";

function response(words: string[]): QueryResponse {
  return {
    results: words.map((word, rank) => ({
      word,
      score: 1 - rank * 0.1,
      rank,
      contributions: { word: 0.5, pos: 0, morpheme: 0.3, category: 0.1, sememe: 0.1 - rank * 0.1 },
    })),
    model: { checkpoint: "abc", vocab: 42, channels: { word: 1, pos: 1, morpheme: 1, category: 1, sememe: 1 } },
  };
}

function stubClient(handler: (body: unknown) => Promise<QueryResponse>): Client {
  const client = new Client("http://stub");
  client.query = (body) => handler(body);
  return client;
}

describe("createSession", () => {
  it("starts empty and not submittable", () => {
    const session = createSession();
    expect(session.history).toEqual([]);
    expect(session.lastResponse).toBeNull();
    expect(canSubmit(session)).toBe(false);
  });

  it("whitespace-only description stays unsubmittable", () => {
    const session = createSession();
    session.description = "   ";
    expect(canSubmit(session)).toBe(false);
  });
});

describe("submitQuery", () => {
  it("stores the response and appends history", async () => {
    const session = createSession();
    session.description = "a wide road";
    const client = stubClient(async () => response(["expressway", "freeway"]));
    await submitQuery(session, client);
    expect(session.error).toBeNull();
    expect(session.lastResponse?.results.map((r) => r.word)).toEqual([
      "expressway",
      "freeway",
    ]);
    expect(session.history).toHaveLength(1);
    expect(session.history[0].resultCount).toBe(2);
    expect(session.inFlight).toBe(false);
  });

  it("history is append-only across submissions", async () => {
    const session = createSession();
    const client = stubClient(async () => response(["x"]));
    session.description = "first";
    await submitQuery(session, client);
    const first = session.history[0];
    session.description = "second";
    await submitQuery(session, client);
    expect(session.history).toHaveLength(2);
    expect(session.history[0]).toBe(first);
  });

  it("sends the filter fields the server expects", async () => {
    const session = createSession();
    session.description = "a wide road";
    session.filters = { pos: "noun", initialLetter: "e", wordLength: 10 };
    let seen: Record<string, unknown> = {};
    const client = stubClient(async (body) => {
      seen = body as Record<string, unknown>;
      return response([]);
    });
    await submitQuery(session, client);
    expect(seen).toMatchObject({
      description: "a wide road",
      pos: "noun",
      initial_letter: "e",
      word_length: 10,
    });
  });

  it("a failed request sets the banner and leaves results and history alone", async () => {
    const session = createSession();
    session.description = "ok query";
    const good = stubClient(async () => response(["kept"]));
    await submitQuery(session, good);
    const bad = stubClient(async () => {
      throw new ApiError("unknown POS tag 'gerund'", 400);
    });
    await submitQuery(session, bad);
    expect(session.error).toContain("gerund");
    expect(session.lastResponse?.results[0].word).toBe("kept");
    expect(session.history).toHaveLength(1);
  });

  it("a stale response is discarded in favor of the newer one", async () => {
    const session = createSession();
    session.description = "slow then fast";
    let release: (value: QueryResponse) => void = () => {};
    const slow = new Promise<QueryResponse>((resolve) => {
      release = resolve;
    });
    const client = stubClient(() => slow);
    const older = submitQuery(session, client);

    const fast = stubClient(async () => response(["fresh"]));
    await submitQuery(session, fast);
    expect(session.lastResponse?.results[0].word).toBe("fresh");

    release(response(["stale"]));
    await older;
    expect(session.lastResponse?.results[0].word).toBe("fresh");
    expect(session.history).toHaveLength(1);
  });

  it("a stale error cannot clobber the newer success", async () => {
    const session = createSession();
    session.description = "racy";
    let reject: (err: unknown) => void = () => {};
    const failing = new Promise<QueryResponse>((_, rej) => {
      reject = rej;
    });
    const slowFail = stubClient(() => failing);
    const older = submitQuery(session, slowFail);

    await submitQuery(session, stubClient(async () => response(["winner"])));
    reject(new ApiError("boom", 500));
    await older;
    expect(session.error).toBeNull();
    expect(session.lastResponse?.results[0].word).toBe("winner");
  });

  it("rejects an empty description outright", async () => {
    const session = createSession();
    await expect(submitQuery(session, stubClient(async () => response([])))).rejects.toThrow(
      /non-empty/,
    );
  });
});
