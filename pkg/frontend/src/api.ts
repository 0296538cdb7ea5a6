/**
 * Typed client for the query service. The fetch implementation is
 * injectable so tests can swap in a mocked service.
 */

import type {
  LocationReport,
  ProximityReport,
  SnapshotMeta,
  TraceQueryBody,
  ZonesMeta,
} from "./types.js";

export interface HttpResponse {
  status: number;
  json(): Promise<unknown>;
}

export type FetchLike = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<HttpResponse>;

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly payload: unknown,
  ) {
    super(`service returned ${status}`);
  }

  get isUnknownTarget(): boolean {
    const p = this.payload as { status?: string; target?: string } | null;
    return this.status === 404 && p?.status === "not_found" && p.target !== undefined;
  }
}

export class ServiceClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike,
    private readonly token?: string,
  ) {}

  private headers(): Record<string, string> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    return headers;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const resp = await this.fetchImpl(this.baseUrl + path, {
      method: "POST",
      headers: this.headers(),
      body: JSON.stringify(body),
    });
    const payload = await resp.json();
    if (resp.status !== 200) throw new ServiceError(resp.status, payload);
    return payload as T;
  }

  private async get<T>(path: string): Promise<T> {
    const resp = await this.fetchImpl(this.baseUrl + path, { headers: this.headers() });
    const payload = await resp.json();
    if (resp.status !== 200) throw new ServiceError(resp.status, payload);
    return payload as T;
  }

  location(body: TraceQueryBody): Promise<LocationReport> {
    return this.post("/v1/query/location", body);
  }

  proximity(body: TraceQueryBody): Promise<ProximityReport> {
    return this.post("/v1/query/proximity", body);
  }

  zones(): Promise<ZonesMeta> {
    return this.get("/v1/meta/zones");
  }

  snapshot(): Promise<SnapshotMeta> {
    return this.get("/v1/meta/snapshot");
  }
}
