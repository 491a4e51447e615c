import type { NextItemResponse, QueueStats, Verdict } from "./types";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Error for HTTP-level rejections; `conflict` marks 409 (already resolved). */
export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
  ) {
    super(message);
  }
  get conflict(): boolean {
    return this.status === 409;
  }
}

/**
 * Thin typed client over the verification service. All state changes go
 * through these three endpoints; the UI never mutates anything else.
 */
export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  async fetchNext(reviewer: string): Promise<NextItemResponse> {
    const res = await this.fetchImpl(
      `${this.baseUrl}/items/next?reviewer=${encodeURIComponent(reviewer)}`,
    );
    if (!res.ok) throw new ApiError(`next-item failed: ${res.status}`, res.status);
    return (await res.json()) as NextItemResponse;
  }

  async submitVerdict(itemId: string, verdict: Verdict, reviewer: string): Promise<void> {
    const res = await this.fetchImpl(
      `${this.baseUrl}/items/${encodeURIComponent(itemId)}/verdict`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ verdict, reviewer }),
      },
    );
    if (!res.ok) throw new ApiError(`verdict failed: ${res.status}`, res.status);
  }

  async fetchStats(): Promise<QueueStats> {
    const res = await this.fetchImpl(`${this.baseUrl}/stats`);
    if (!res.ok) throw new ApiError(`stats failed: ${res.status}`, res.status);
    return (await res.json()) as QueueStats;
  }
}
