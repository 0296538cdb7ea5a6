/**
 * Investigation state: a tree of traced targets where every node records
 * the exact query that produced its reports and the snapshot id it was
 * answered from, so a whole investigation can be replayed verbatim.
 */

import type { LocationReport, ProximityReport, TraceQueryBody } from "./types.js";

export type NodeStatus = "pending" | "done" | "error";

export interface TraceNode {
  id: number;
  parentId: number | null;
  round: number;
  target: string;
  query: TraceQueryBody;
  snapshotId: string | null;
  status: NodeStatus;
  location: LocationReport | null;
  proximity: ProximityReport | null;
  error: string | null;
  children: number[];
}

export interface InvestigationState {
  snapshotId: string | null;
  nodes: Map<number, TraceNode>;
  roots: number[];
  nextId: number;
}

export function newInvestigation(snapshotId: string | null = null): InvestigationState {
  return { snapshotId, nodes: new Map(), roots: [], nextId: 1 };
}

export function addRoot(state: InvestigationState, query: TraceQueryBody): TraceNode {
  const node: TraceNode = {
    id: state.nextId++,
    parentId: null,
    round: 1,
    target: query.target,
    query: { ...query, exclusions: [...query.exclusions] },
    snapshotId: state.snapshotId,
    status: "pending",
    location: null,
    proximity: null,
    error: null,
    children: [],
  };
  state.nodes.set(node.id, node);
  state.roots.push(node.id);
  return node;
}

export function findByTarget(state: InvestigationState, target: string): TraceNode | undefined {
  for (const node of state.nodes.values()) {
    if (node.target === target) return node;
  }
  return undefined;
}

export type DrillOutcome =
  | { kind: "created"; node: TraceNode }
  | { kind: "already_traced"; existing: TraceNode };

/**
 * Open a child investigation for a co-locator. The child inherits the
 * parent's window, thresholds, granularity and exclusions; only the
 * target changes. Targets already in the tree are flagged, never
 * re-traced, which keeps the recursion cycle-free.
 */
export function drillInto(
  state: InvestigationState,
  parentId: number,
  colocatorTarget: string,
): DrillOutcome {
  const parent = state.nodes.get(parentId);
  if (!parent) throw new Error(`no such node: ${parentId}`);
  const existing = findByTarget(state, colocatorTarget);
  if (existing) return { kind: "already_traced", existing };
  const node: TraceNode = {
    id: state.nextId++,
    parentId: parent.id,
    round: parent.round + 1,
    target: colocatorTarget,
    query: { ...parent.query, exclusions: [...parent.query.exclusions], target: colocatorTarget },
    snapshotId: state.snapshotId,
    status: "pending",
    location: null,
    proximity: null,
    error: null,
    children: [],
  };
  state.nodes.set(node.id, node);
  parent.children.push(node.id);
  return { kind: "created", node };
}

export function recordResult(
  node: TraceNode,
  location: LocationReport,
  proximity: ProximityReport,
): void {
  node.location = location;
  node.proximity = proximity;
  node.status = "done";
  node.error = null;
}

export function recordError(node: TraceNode, message: string): void {
  node.status = "error";
  node.error = message;
}

export interface ExportedNode {
  id: number;
  parentId: number | null;
  round: number;
  target: string;
  snapshotId: string | null;
  query: TraceQueryBody;
  status: NodeStatus;
}

/** Reproducibility dump: every query and snapshot id in the tree. */
export function exportInvestigation(state: InvestigationState): {
  snapshotId: string | null;
  nodes: ExportedNode[];
} {
  const nodes = [...state.nodes.values()]
    .sort((a, b) => a.id - b.id)
    .map((n) => ({
      id: n.id,
      parentId: n.parentId,
      round: n.round,
      target: n.target,
      snapshotId: n.snapshotId,
      query: n.query,
      status: n.status,
    }));
  return { snapshotId: state.snapshotId, nodes };
}
