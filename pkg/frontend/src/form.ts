/**
 * Query form state and its exact conversion to a service request body.
 * Thresholds are edited in minutes (investigators think in minutes) and
 * converted to seconds exactly; the window is edited as epoch seconds.
 */

import type { Granularity, TraceQueryBody, ZonesMeta } from "./types.js";

export interface QueryFormState {
  target: string;
  fromEpoch: number;
  toEpoch: number;
  tauMinutes: number;
  omegaMinutes: number;
  granularity: Granularity;
  exclusions: string[];
  dedupeByUser: boolean;
}

export function defaultForm(): QueryFormState {
  return {
    target: "",
    fromEpoch: 0,
    toEpoch: 0,
    tauMinutes: 10,
    omegaMinutes: 15,
    granularity: "ap",
    exclusions: [],
    dedupeByUser: true,
  };
}

export function toQueryBody(form: QueryFormState): TraceQueryBody {
  return {
    target: form.target,
    t_start: form.fromEpoch,
    t_end: form.toEpoch,
    tau: form.tauMinutes * 60,
    omega: form.omegaMinutes * 60,
    granularity: form.granularity,
    exclusions: [...form.exclusions].sort(),
    dedupe_by_user: form.dedupeByUser,
  };
}

export interface ZoneToggle {
  zoneId: string;
  label: string;
  apCount: number;
  checked: boolean;
}

/** Exclusion checkboxes, one per zone, populated from /v1/meta/zones. */
export function zoneToggles(meta: ZonesMeta, excluded: Set<string>): ZoneToggle[] {
  return meta.zones.map((z) => ({
    zoneId: z.zone_id,
    label: z.label,
    apCount: z.aps.length,
    checked: excluded.has(z.zone_id),
  }));
}

export function toggleExclusion(form: QueryFormState, zoneId: string): QueryFormState {
  const has = form.exclusions.includes(zoneId);
  return {
    ...form,
    exclusions: has
      ? form.exclusions.filter((z) => z !== zoneId)
      : [...form.exclusions, zoneId],
  };
}
