import type {
  CellDetail,
  ComparisonReport,
  DiagramView,
  FlagsResponse,
  ReviewRequest,
  ReviewResponse,
} from "./types";

export type FetchLike = (
  input: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{ status: number; json(): Promise<unknown> }>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

/** Thrown when a review is rejected because the cell changed under us (409). */
export class StaleEditError extends ApiError {
  constructor(detail: string) {
    super(409, detail);
  }
}

/**
 * Thin typed client for the review service. The UI never recomputes any
 * statistic: every number displayed comes straight out of these responses.
 */
export class ReviewApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly workspace: string,
    private readonly fetchImpl: FetchLike = fetch as unknown as FetchLike,
  ) {}

  private url(path: string): string {
    return `${this.baseUrl}/workspaces/${this.workspace}${path}`;
  }

  private async request<T>(path: string, init?: Parameters<FetchLike>[1]): Promise<T> {
    const response = await this.fetchImpl(this.url(path), init);
    const body = (await response.json()) as { detail?: unknown };
    if (response.status === 409) {
      throw new StaleEditError(String(body.detail ?? "conflict"));
    }
    if (response.status >= 400) {
      throw new ApiError(response.status, String(body.detail ?? "request failed"));
    }
    return body as T;
  }

  getReport(runId: string, threshold = 0.75): Promise<ComparisonReport> {
    return this.request(`/reports/${runId}?threshold=${threshold}`);
  }

  async getFlags(runId: string, k = 10, threshold = 0.75): Promise<FlagsResponse> {
    return this.request(`/flags/${runId}?k=${k}&threshold=${threshold}`);
  }

  getCell(
    runId: string,
    diagramId: string,
    criterionId: number,
  ): Promise<CellDetail> {
    return this.request(`/cells/${runId}/${diagramId}/${criterionId}`);
  }

  getDiagram(diagramId: string): Promise<DiagramView> {
    return this.request(`/diagrams/${diagramId}`);
  }

  postReview(review: ReviewRequest): Promise<ReviewResponse> {
    return this.request(`/reviews`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(review),
    });
  }
}
