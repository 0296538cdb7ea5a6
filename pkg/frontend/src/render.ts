/**
 * Row models for the two result panes.
 *
 * The console is a thin client: rows carry report values verbatim plus
 * formatted labels derived from those same values. Nothing is counted,
 * summed or thresholded here; the service already did that.
 */

import type { LocationReport, ProximityReport } from "./types.js";

export function fmtUtc(epoch: number): string {
  return new Date(epoch * 1000).toISOString().replace("T", " ").slice(0, 19);
}

export function fmtDuration(seconds: number): string {
  const h = Math.floor(seconds / 3600);
  const m = Math.floor((seconds % 3600) / 60);
  const s = seconds % 60;
  if (h > 0) return `${h}h${String(m).padStart(2, "0")}m`;
  if (m > 0) return `${m}m${String(s).padStart(2, "0")}s`;
  return `${s}s`;
}

export interface TimelineRow {
  location: string;
  name: string;
  building: string;
  start: number;
  end: number;
  durationSeconds: number;
  startLabel: string;
  endLabel: string;
  durationLabel: string;
  truncated: boolean;
}

export function locationTimeline(report: LocationReport): TimelineRow[] {
  return report.visits.map((v) => ({
    location: v.location,
    name: v.name,
    building: v.building,
    start: v.t_start,
    end: v.t_end,
    durationSeconds: v.duration,
    startLabel: fmtUtc(v.t_start),
    endLabel: fmtUtc(v.t_end),
    durationLabel: fmtDuration(v.duration),
    truncated: v.truncated,
  }));
}

export interface SpanCell {
  location: string;
  start: number;
  end: number;
  startLabel: string;
  endLabel: string;
}

export interface ProximityRow {
  user: string;
  device: string;
  totalOverlapSeconds: number;
  totalLabel: string;
  spans: SpanCell[];
}

/** Co-locator table rows in the order the service ranked them. */
export function proximityTable(report: ProximityReport): ProximityRow[] {
  return report.co_locators.map((c) => ({
    user: c.user,
    device: c.device,
    totalOverlapSeconds: c.total_overlap,
    totalLabel: fmtDuration(c.total_overlap),
    spans: c.spans.map((s) => ({
      location: s.location,
      start: s.start,
      end: s.end,
      startLabel: fmtUtc(s.start),
      endLabel: fmtUtc(s.end),
    })),
  }));
}
