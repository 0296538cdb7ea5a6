/**
 * Orchestration between the form, the service client and the trace tree.
 *
 * Queries may be in flight concurrently; each node tracks its latest
 * request id and a response only lands if it is still the newest for
 * that node, so a stale answer can never overwrite a fresh one.
 */

import { ServiceClient, ServiceError } from "./api.js";
import type { QueryFormState } from "./form.js";
import { toQueryBody } from "./form.js";
import { locationTimeline, proximityTable, type ProximityRow, type TimelineRow } from "./render.js";
import {
  InvestigationState,
  TraceNode,
  addRoot,
  drillInto,
  recordError,
  recordResult,
  type DrillOutcome,
} from "./state.js";

export interface PaneModel {
  node: TraceNode;
  timeline: TimelineRow[];
  colocators: ProximityRow[];
  error: string | null;
}

const latestRequest = new WeakMap<TraceNode, number>();
let requestCounter = 0;

async function runNode(client: ServiceClient, node: TraceNode): Promise<PaneModel> {
  const requestId = ++requestCounter;
  latestRequest.set(node, requestId);
  try {
    const [location, proximity] = await Promise.all([
      client.location(node.query),
      client.proximity(node.query),
    ]);
    if (latestRequest.get(node) !== requestId) {
      return paneModel(node); // superseded by a newer query for this node
    }
    recordResult(node, location, proximity);
  } catch (err) {
    if (latestRequest.get(node) !== requestId) return paneModel(node);
    if (err instanceof ServiceError && err.isUnknownTarget) {
      recordError(node, `unknown target: ${node.target}`);
    } else if (err instanceof ServiceError) {
      recordError(node, `service error ${err.status}: ${JSON.stringify(err.payload)}`);
    } else {
      recordError(node, String(err));
    }
  }
  return paneModel(node);
}

export function paneModel(node: TraceNode): PaneModel {
  return {
    node,
    timeline: node.location ? locationTimeline(node.location) : [],
    colocators: node.proximity ? proximityTable(node.proximity) : [],
    error: node.status === "error" ? node.error : null,
  };
}

/** Submit the form as a new root investigation. */
export function submitQuery(
  client: ServiceClient,
  state: InvestigationState,
  form: QueryFormState,
): { node: TraceNode; result: Promise<PaneModel> } {
  const node = addRoot(state, toQueryBody(form));
  return { node, result: runNode(client, node) };
}

/** Re-run an existing node, e.g. after the user nudged a threshold. */
export function resubmitNode(
  client: ServiceClient,
  node: TraceNode,
  form: QueryFormState,
): Promise<PaneModel> {
  node.query = { ...toQueryBody(form), target: node.target };
  node.status = "pending";
  return runNode(client, node);
}

/** Drill into a co-locator row; issues exactly the child's recorded query. */
export function drillAndRun(
  client: ServiceClient,
  state: InvestigationState,
  parentId: number,
  colocatorTarget: string,
): { outcome: DrillOutcome; result: Promise<PaneModel> | null } {
  const outcome = drillInto(state, parentId, colocatorTarget);
  if (outcome.kind === "already_traced") {
    return { outcome, result: null };
  }
  return { outcome, result: runNode(client, outcome.node) };
}
