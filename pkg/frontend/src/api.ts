/** Typed client for the landsift HTTP service. */

export interface BatchItem {
  sentence_id: string;
  probabilities: number[];
  score: number;
  text: string;
}

export interface BatchResponse {
  label_space: string;
  labels: string[];
  iteration: number;
  batch: BatchItem[];
}

export interface SubmitResponse {
  iteration: number;
  job_id: string;
  labeled: number;
}

export interface StatusResponse {
  label_space: string;
  iteration: number;
  labeled: number;
  unlabeled: number;
  model_version: number;
  training: boolean;
  job_id: string;
  pending_batch: boolean;
}

export interface AreaSummary {
  area_id: string;
  category: string;
  properties: Record<string, unknown>;
  n_documents: number;
}

export interface RestrictionEntry {
  doc_id: string;
  title: string;
  sentence_id: string;
  sentence: string;
  topic: string;
  confidence: number;
}

export interface AreaReport {
  area_id: string;
  category: string;
  properties: Record<string, unknown>;
  documents: string[];
  restrictions: Record<string, RestrictionEntry[]>;
  similar_areas: Record<string, string[]>;
  weather_bands?: number[];
}

export interface DocumentView {
  doc_id: string;
  title: string;
  region: string;
  area_ids: string[];
  text: string;
}

export interface GeoFeature {
  type: 'Feature';
  properties: Record<string, unknown>;
  geometry: { type: string; coordinates: unknown };
}

export interface FeatureCollection {
  type: 'FeatureCollection';
  features: GeoFeature[];
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
    readonly retryAfterSeconds?: number,
  ) {
    super(message);
  }
}

/** Model and graph versions reported by the last response. */
export interface Versions {
  model: string;
  graph: string;
}

export class Api {
  versions: Versions = { model: '', graph: '' };

  constructor(private readonly base: string = '') {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let res: Response;
    try {
      res = await fetch(this.base + path, init);
    } catch (err) {
      throw new ApiError(0, `network failure: ${String(err)}`);
    }
    const model = res.headers.get('x-model-version');
    const graph = res.headers.get('x-graph-version');
    if (model !== null) this.versions.model = model;
    if (graph !== null) this.versions.graph = graph;
    if (!res.ok) {
      let detail = res.statusText;
      try {
        const body = await res.json();
        if (typeof body.detail === 'string') detail = body.detail;
      } catch {
        // non-JSON error body, keep the status text
      }
      const retry = res.headers.get('retry-after');
      throw new ApiError(res.status, detail, retry ? Number(retry) : undefined);
    }
    return res.json() as Promise<T>;
  }

  fetchBatch(space: string): Promise<BatchResponse> {
    return this.request(`/api/al/${space}/batch`);
  }

  submitLabels(space: string, assignments: Record<string, string[]>): Promise<SubmitResponse> {
    return this.request(`/api/al/${space}/labels`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ assignments }),
    });
  }

  status(space: string): Promise<StatusResponse> {
    return this.request(`/api/al/${space}/status`);
  }

  areas(): Promise<{ areas: AreaSummary[] }> {
    return this.request('/api/areas');
  }

  areaReport(areaId: string, weather = false): Promise<AreaReport> {
    const query = weather ? '?weather=1' : '';
    return this.request(`/api/areas/${encodeURIComponent(areaId)}/report${query}`);
  }

  topicAreas(topic: string): Promise<{ topic: string; areas: string[] }> {
    return this.request(`/api/topics/${encodeURIComponent(topic)}/areas`);
  }

  document(docId: string): Promise<DocumentView> {
    return this.request(`/api/docs/${encodeURIComponent(docId)}`);
  }

  features(): Promise<FeatureCollection> {
    return this.request('/api/geo/features.geojson');
  }

  weather(): Promise<FeatureCollection> {
    return this.request('/api/geo/weather.geojson');
  }
}
