/**
 * Wire types for the query service (schema version 1).
 *
 * These mirror the canonical report JSON exactly; the console never
 * invents fields of its own.
 */

export type Granularity = "ap" | "zone";

export interface TraceQueryBody {
  target: string;
  t_start: number;
  t_end: number;
  tau: number;
  omega: number;
  granularity: Granularity;
  exclusions: string[];
  dedupe_by_user?: boolean;
  post_departure_window?: number | null;
}

export interface QueryEcho {
  target: string;
  t_start: number;
  t_end: number;
  tau: number;
  omega: number;
  granularity: Granularity;
  exclusions: string[];
  post_departure_window: number | null;
}

export interface VisitRow {
  location: string;
  name: string;
  building: string;
  t_start: number;
  t_end: number;
  duration: number;
  truncated: boolean;
}

export interface LocationReport {
  schema: number;
  kind: "location";
  target: string;
  user: string;
  device: string;
  query: QueryEcho;
  visits: VisitRow[];
}

export interface OverlapSpan {
  location: string;
  start: number;
  end: number;
}

export interface ColocatorRow {
  user: string;
  device: string;
  total_overlap: number;
  spans: OverlapSpan[];
}

export interface ProximityReport {
  schema: number;
  kind: "proximity";
  target: string;
  user: string;
  device: string;
  query: QueryEcho;
  omega: number;
  dedupe_by_user: boolean;
  co_locators: ColocatorRow[];
}

export interface ZoneInfo {
  zone_id: string;
  label: string;
  aps: string[];
}

export interface ZonesMeta {
  schema: number;
  zones: ZoneInfo[];
}

export interface SnapshotMeta {
  schema: number;
  snapshot_id: string;
  built_at: number;
  coverage: [number, number];
  stats: Record<string, number | string | boolean>;
}

export interface NotFoundPayload {
  schema: number;
  status: "not_found";
  target?: string;
}

export interface BadRequestPayload {
  schema: number;
  status: "bad_request";
  field: string;
  message: string;
}
