/** Typed client for the somonitor HTTP JSON API.
 *
 * All analytics come from the service; the dashboard never recomputes
 * metrics or clusters. API errors carry the service's detail string
 * verbatim so views can render it unchanged.
 */

export interface BrandShare {
  count: number;
  share: number;
}

export interface DatasetStats {
  total: number;
  ads: number;
  organic: number;
  per_brand: Record<string, BrandShare>;
}

export interface ClusterCard {
  cluster_id: string;
  name: string;
  description: string;
  member_count: number;
  per_brand: Record<string, BrandShare>;
  exemplar_ids: string[];
}

export interface OpportunityCell {
  persona_id: string;
  challenge_id: string;
  own_share: number;
  competitor_share: number;
  gap: number;
  volume: number;
}

export interface OpportunityResponse {
  dataset_id: string;
  own: string;
  competitor: string;
  cells: OpportunityCell[];
  selected: OpportunityCell;
  policy: string;
  not_underexploited: boolean;
  run_id: string;
}

export interface RankedList {
  dataset_id: string;
  candidate_ids: string[];
  ranker: string;
  grounded: boolean;
  scores: number[] | null;
  run_ids: string[];
  run_orderings: string[][];
  degraded: boolean;
  label?: string;
}

export interface StoryCharacter {
  name: string;
  role: string;
  background: string;
  traits: string[];
  persona_id: string;
}

export interface StoryResponse {
  character: StoryCharacter;
  challenge_id: string;
  brand: string;
  narrative: string;
  concluding_insight: string;
  run_id: string;
  brief?: string;
  brief_path?: string;
}

export interface RunDescriptor {
  run_id: string;
  stage: string;
  dataset_id: string;
  status: "pending" | "running" | "done" | "failed";
  progress: number;
  error: string | null;
}

export interface RankRequest {
  dataset_id: string;
  ranker: "score" | "llm";
  grounded?: boolean;
  brand?: string;
}

export interface StoryRequest {
  dataset_id: string;
  persona_id: string;
  challenge_id: string;
  brand: string;
}

/** Non-2xx response; `detail` is the service's error text, verbatim. */
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

/** The service could not be reached at all (network down, bad URL). */
export class ConnectionError extends Error {
  constructor(cause: string) {
    super(`connection to the somonitor service failed: ${cause}`);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    public readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { "content-type": "application/json" } };
    if (body !== undefined) {
      init.body = JSON.stringify(body);
    }
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    } catch (err) {
      throw new ConnectionError(err instanceof Error ? err.message : String(err));
    }
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const payload = (await response.json()) as { detail?: unknown };
        if (payload.detail !== undefined) {
          detail = typeof payload.detail === "string" ? payload.detail : JSON.stringify(payload.detail);
        }
      } catch {
        // non-JSON error body: keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  getStats(datasetId: string): Promise<DatasetStats> {
    return this.request("GET", `/datasets/${encodeURIComponent(datasetId)}/stats`);
  }

  getPersonas(datasetId: string): Promise<{ cards: ClusterCard[] }> {
    return this.request("GET", `/personas?dataset_id=${encodeURIComponent(datasetId)}`);
  }

  getChallenges(datasetId: string): Promise<{ cards: ClusterCard[] }> {
    return this.request("GET", `/challenges?dataset_id=${encodeURIComponent(datasetId)}`);
  }

  getOpportunities(datasetId: string, own: string, competitor: string): Promise<OpportunityResponse> {
    const query = new URLSearchParams({ dataset_id: datasetId, own, competitor });
    return this.request("GET", `/opportunities?${query.toString()}`);
  }

  postRank(body: RankRequest): Promise<RankedList> {
    return this.request("POST", "/rank", body);
  }

  postStory(body: StoryRequest): Promise<StoryResponse> {
    return this.request("POST", "/stories", body);
  }

  getRun(runId: string): Promise<RunDescriptor> {
    return this.request("GET", `/runs/${encodeURIComponent(runId)}`);
  }

  postPillarsRun(datasetId: string): Promise<RunDescriptor> {
    return this.request("POST", "/runs/pillars", { dataset_id: datasetId });
  }

  postClustersRun(datasetId: string, pillar: "audience" | "insight"): Promise<RunDescriptor> {
    return this.request("POST", "/runs/clusters", { dataset_id: datasetId, pillar });
  }
}
