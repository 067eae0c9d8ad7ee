/** Typed client for the matcher's HTTP API. The UI never mutates server
 * state except through these endpoints. */

export interface Candidate {
  id: string;
  similarity: number;
  probability: number;
  rank: number;
}

export interface Decision {
  query: string;
  best_id: string;
  confidence: number;
  outcome: string;
  candidates: Candidate[];
}

export interface ReviewItem {
  item_id: string;
  decision: Decision;
  status: string;
  created_at: number;
  resolution: string | null;
  resolver: string | null;
}

export interface QueuePage {
  items: ReviewItem[];
  pending_count: number;
}

export interface HistogramBin {
  start: number;
  end: number;
  count: number;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (u, i) => fetch(u, i),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const resp = await this.fetchFn(this.baseUrl + path, init);
    return resp;
  }

  async getQueue(status = "pending", limit = 50): Promise<QueuePage> {
    const resp = await this.request(
      `/review/queue?status=${encodeURIComponent(status)}&limit=${limit}`,
    );
    if (!resp.ok) throw new ApiError(resp.status, await resp.text());
    return (await resp.json()) as QueuePage;
  }

  /** Resolve an item. Throws ApiError with status 404/409/400 on conflicts
   * so the caller can refresh stale items. */
  async resolve(
    itemId: string,
    body: { chosen_id?: string; undeliverable?: boolean; resolver?: string },
  ): Promise<ReviewItem> {
    const resp = await this.request(
      `/review/${encodeURIComponent(itemId)}/resolve`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      },
    );
    if (!resp.ok) throw new ApiError(resp.status, await resp.text());
    return (await resp.json()) as ReviewItem;
  }

  async getConfidenceHistogram(): Promise<HistogramBin[]> {
    const resp = await this.request("/metrics/confidence.csv");
    if (!resp.ok) throw new ApiError(resp.status, await resp.text());
    return parseHistogramCsv(await resp.text());
  }
}

/** Parse the service's confidence CSV: header then 100 rows of
 * bin_start,bin_end,count. Blank lines are ignored. */
export function parseHistogramCsv(text: string): HistogramBin[] {
  const lines = text.split("\n").filter((l) => l.trim().length > 0);
  if (lines.length === 0 || lines[0] !== "bin_start,bin_end,count") {
    throw new Error("unexpected histogram CSV header");
  }
  return lines.slice(1).map((line) => {
    const [start, end, count] = line.split(",");
    return {
      start: Number(start),
      end: Number(end),
      count: Number(count),
    };
  });
}
