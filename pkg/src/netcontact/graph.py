"""Time-evolving bipartite device/location graph.

Every device and every location is represented by one node per time
bucket in which it has activity; bucket durations are independently
configurable for the two sides (defaults: one day for devices, one hour
for locations, since locations are the hot side of proximity queries).
An edge carries the full session interval and is replicated into every
(device bucket x location bucket) cell the session intersects, deduped
by (device, location, t1, t2), so buckets are purely an index: query
results are identical for any bucket size.

The graph is built single-writer, then frozen. A frozen graph is
immutable and safe for unlimited concurrent readers; incremental loads
produce a new frozen snapshot rather than mutating a published one.
"""

import bisect
import json
from typing import Iterable, NamedTuple

from .sessions import Session

KIND_DEVICE = "device"
KIND_LOCATION = "location"

DEFAULT_DEVICE_BUCKET = 24 * 3600
DEFAULT_LOCATION_BUCKET = 3600


class NodeKey(NamedTuple):
    entity_id: str
    bucket_start: int
    bucket_end: int  # inclusive
    kind: str


class NodeLookup(NamedTuple):
    nodes: list[NodeKey]
    known: bool


class FrozenGraphError(RuntimeError):
    """Write attempted on a frozen snapshot."""


class BipartiteViolationError(ValueError):
    """Edge endpoints must be one device node and one location node."""


class TraceGraph:
    def __init__(
        self,
        device_bucket: int = DEFAULT_DEVICE_BUCKET,
        location_bucket: int = DEFAULT_LOCATION_BUCKET,
    ):
        if device_bucket <= 0 or location_bucket <= 0:
            raise ValueError("bucket durations must be positive")
        self.device_bucket = device_bucket
        self.location_bucket = location_bucket
        # entity -> bucket index -> {(neighbor, t1, t2): truncated}
        self._dev: dict[str, dict[int, dict[tuple[str, int, int], bool]]] = {}
        self._loc: dict[str, dict[int, dict[tuple[str, int, int], bool]]] = {}
        self._dev_buckets: dict[str, list[int]] = {}
        self._loc_buckets: dict[str, list[int]] = {}
        self._edge_cells = 0
        self.frozen = False

    # --- construction ---------------------------------------------------

    def _check_writable(self) -> None:
        if self.frozen:
            raise FrozenGraphError("graph snapshot is frozen")

    def add_user_node(self, entity_id: str, bucket_start: int) -> NodeKey:
        self._check_writable()
        idx = bucket_start // self.device_bucket
        self._dev.setdefault(entity_id, {}).setdefault(idx, {})
        return self._device_key(entity_id, idx)

    def add_loc_node(self, entity_id: str, bucket_start: int) -> NodeKey:
        self._check_writable()
        idx = bucket_start // self.location_bucket
        self._loc.setdefault(entity_id, {}).setdefault(idx, {})
        return self._location_key(entity_id, idx)

    def add_edge(
        self,
        device_node: NodeKey,
        location_node: NodeKey,
        t1: int,
        t2: int,
        truncated: bool = False,
    ) -> None:
        """Registry primitive. The interval must intersect both buckets."""
        self._check_writable()
        if device_node.kind != KIND_DEVICE or location_node.kind != KIND_LOCATION:
            raise BipartiteViolationError(f"{device_node.kind} -> {location_node.kind}")
        if t2 < t1:
            raise ValueError("edge interval ends before it starts")
        for node in (device_node, location_node):
            if t1 > node.bucket_end or t2 < node.bucket_start:
                raise ValueError(f"interval ({t1},{t2}) misses bucket {node}")
        di = device_node.bucket_start // self.device_bucket
        li = location_node.bucket_start // self.location_bucket
        self._add_cell(device_node.entity_id, di, location_node.entity_id, li, t1, t2, truncated)

    def _add_cell(self, dev: str, di: int, loc: str, li: int, t1: int, t2: int, trunc: bool) -> None:
        dkey = (loc, t1, t2)
        lkey = (dev, t1, t2)
        dadj = self._dev.setdefault(dev, {}).setdefault(di, {})
        ladj = self._loc.setdefault(loc, {}).setdefault(li, {})
        fresh = dkey not in dadj or lkey not in ladj
        if dkey not in dadj:
            dadj[dkey] = trunc
        if lkey not in ladj:
            ladj[lkey] = trunc
        if fresh:
            self._edge_cells += 1

    def insert_session(self, session: Session) -> None:
        """Replicate one session into every bucket cell it intersects.

        The edge keeps the full (t_start, t_end) interval in every cell;
        re-inserting the same session is a no-op.
        """
        self._check_writable()
        db, lb = self.device_bucket, self.location_bucket
        t1, t2 = session.t_start, session.t_end
        for di in range(t1 // db, t2 // db + 1):
            seg_lo = max(t1, di * db)
            seg_hi = min(t2, di * db + db - 1)
            for li in range(seg_lo // lb, seg_hi // lb + 1):
                self._add_cell(
                    session.device_mac, di, session.ap_id, li, t1, t2, session.truncated
                )

    def insert_all(self, sessions: Iterable[Session]) -> None:
        for s in sessions:
            self.insert_session(s)

    def freeze(self) -> "TraceGraph":
        """Publish the snapshot: no further writes, readers may share it."""
        self._dev_buckets = {e: sorted(b) for e, b in self._dev.items()}
        self._loc_buckets = {e: sorted(b) for e, b in self._loc.items()}
        self.frozen = True
        return self

    # --- node level API ---------------------------------------------------

    def _device_key(self, entity_id: str, idx: int) -> NodeKey:
        start = idx * self.device_bucket
        return NodeKey(entity_id, start, start + self.device_bucket - 1, KIND_DEVICE)

    def _location_key(self, entity_id: str, idx: int) -> NodeKey:
        start = idx * self.location_bucket
        return NodeKey(entity_id, start, start + self.location_bucket - 1, KIND_LOCATION)

    def _buckets_in(self, entity_id: str, lo: int, hi: int, side: str) -> list[int]:
        table = self._dev_buckets if side == KIND_DEVICE else self._loc_buckets
        store = self._dev if side == KIND_DEVICE else self._loc
        dur = self.device_bucket if side == KIND_DEVICE else self.location_bucket
        if entity_id not in store:
            return []
        buckets = table.get(entity_id)
        if buckets is None:  # not frozen yet
            buckets = sorted(store[entity_id])
        first, last = lo // dur, hi // dur
        i = bisect.bisect_left(buckets, first)
        j = bisect.bisect_right(buckets, last)
        return buckets[i:j]

    def get_user_node(self, entity_id: str, interval: tuple[int, int]) -> NodeLookup:
        """All device nodes for an entity whose buckets intersect the interval,
        time-ordered. Unknown entities yield an empty list with known=False."""
        lo, hi = interval
        if hi < lo:
            raise ValueError("interval end precedes start")
        known = entity_id in self._dev
        idxs = self._buckets_in(entity_id, lo, hi, KIND_DEVICE)
        return NodeLookup([self._device_key(entity_id, i) for i in idxs], known)

    def get_loc_node(self, entity_id: str, interval: tuple[int, int]) -> NodeLookup:
        lo, hi = interval
        if hi < lo:
            raise ValueError("interval end precedes start")
        known = entity_id in self._loc
        idxs = self._buckets_in(entity_id, lo, hi, KIND_LOCATION)
        return NodeLookup([self._location_key(entity_id, i) for i in idxs], known)

    def _adjacency(self, node: NodeKey) -> dict[tuple[str, int, int], bool]:
        if node.kind == KIND_DEVICE:
            return self._dev.get(node.entity_id, {}).get(node.bucket_start // self.device_bucket, {})
        return self._loc.get(node.entity_id, {}).get(node.bucket_start // self.location_bucket, {})

    def get_connections(self, node: NodeKey) -> list[tuple[str, tuple[int, int]]]:
        """Neighbors with edge intervals, deduped, ordered by (t1, neighbor id)."""
        seen = sorted(self._adjacency(node), key=lambda k: (k[1], k[0], k[2]))
        return [(nbr, (t1, t2)) for nbr, t1, t2 in seen]

    def get_sessions(self, location_node: NodeKey, device_id: str) -> list[tuple[int, int]]:
        """Session intervals between this location node and one device."""
        adj = self._adjacency(location_node)
        out = sorted((t1, t2) for dev, t1, t2 in adj if dev == device_id)
        return out

    def get_weight(self, node: NodeKey, neighbor_id: str) -> int:
        """Total seconds of edges toward a neighbor, clipped to this node's bucket."""
        adj = self._adjacency(node)
        end_exclusive = node.bucket_end + 1
        total = 0
        for (nbr, t1, t2) in adj:
            if nbr != neighbor_id:
                continue
            total += max(0, min(t2, end_exclusive) - max(t1, node.bucket_start))
        return total

    @staticmethod
    def get_name(node: NodeKey) -> str:
        return node.entity_id

    @staticmethod
    def get_id(node: NodeKey) -> NodeKey:
        return node

    def get_users(self) -> list[str]:
        return sorted(self._dev)

    def get_location(self) -> list[str]:
        return sorted(self._loc)

    # --- query-path composites --------------------------------------------

    def device_sessions(self, entity_id: str, lo: int, hi: int) -> list[tuple[str, int, int, bool]]:
        """Deduped (location, t1, t2, truncated) sessions of a device that
        intersect [lo, hi], sorted by time. Bucket-size independent."""
        out: dict[tuple[str, int, int], bool] = {}
        buckets = self._dev.get(entity_id)
        if not buckets:
            return []
        for idx in self._buckets_in(entity_id, lo, hi, KIND_DEVICE):
            for (loc, t1, t2), trunc in buckets[idx].items():
                if t1 <= hi and t2 >= lo:
                    out[(loc, t1, t2)] = trunc
        return sorted(
            ((loc, t1, t2, trunc) for (loc, t1, t2), trunc in out.items()),
            key=lambda r: (r[1], r[2], r[0]),
        )

    def location_sessions(self, location_id: str, lo: int, hi: int) -> list[tuple[str, int, int, bool]]:
        """Deduped (device, t1, t2, truncated) sessions seen at a location
        that intersect [lo, hi], sorted by time."""
        out: dict[tuple[str, int, int], bool] = {}
        buckets = self._loc.get(location_id)
        if not buckets:
            return []
        for idx in self._buckets_in(location_id, lo, hi, KIND_LOCATION):
            for (dev, t1, t2), trunc in buckets[idx].items():
                if t1 <= hi and t2 >= lo:
                    out[(dev, t1, t2)] = trunc
        return sorted(
            ((dev, t1, t2, trunc) for (dev, t1, t2), trunc in out.items()),
            key=lambda r: (r[1], r[2], r[0]),
        )

    # --- stats --------------------------------------------------------------

    def stats(self) -> dict:
        return {
            "devices": len(self._dev),
            "locations": len(self._loc),
            "device_nodes": sum(len(b) for b in self._dev.values()),
            "location_nodes": sum(len(b) for b in self._loc.values()),
            "edges": self._edge_cells,
            "device_bucket": self.device_bucket,
            "location_bucket": self.location_bucket,
            "frozen": self.frozen,
        }

    def stats_json(self) -> str:
        return json.dumps(self.stats(), sort_keys=True, separators=(",", ":"))


def build_graph(
    sessions_by_device: dict[str, list[Session]],
    device_bucket: int = DEFAULT_DEVICE_BUCKET,
    location_bucket: int = DEFAULT_LOCATION_BUCKET,
) -> TraceGraph:
    """Build and freeze a snapshot from a session corpus."""
    g = TraceGraph(device_bucket, location_bucket)
    for lst in sessions_by_device.values():
        g.insert_all(lst)
    return g.freeze()
