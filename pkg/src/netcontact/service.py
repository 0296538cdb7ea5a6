"""Read-only query service over a frozen graph snapshot.

A snapshot is built from the canonical session TSV, the device/user map
and the AP map named in a manifest file; its id is a digest of those
inputs, so the same corpus always yields the same snapshot id. Request
handlers grab the current snapshot reference once at entry: a reload
publishes a new snapshot atomically while in-flight requests finish on
the one they started with. Responses are the canonical report JSON,
byte-identical to the CLI's --format json output for the same query.
"""

import argparse
import hashlib
import json
import sys
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .graph import TraceGraph, build_graph
from .sessions import DeviceUserMap, read_device_user_tsv, read_sessions_tsv
from .topology import Topology, load_ap_map
from .trace import (
    TraceQuery,
    TraceStrategy,
    UnknownTargetError,
    iterative_trace,
    location_report,
    post_departure_report,
    proximity_report,
    render_json,
)

MANIFEST_SCHEMA = 1


@dataclass(frozen=True)
class SnapshotHandle:
    snapshot_id: str
    built_at: int
    coverage: tuple[int, int]
    graph: TraceGraph
    dumap: DeviceUserMap
    topo: Topology
    stats: dict


def _digest_file(h: "hashlib._Hash", path: Path) -> None:
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)


def compute_snapshot_id(
    sessions: Path, device_users: Path, ap_map: Path, device_bucket: int, location_bucket: int
) -> str:
    h = hashlib.sha256()
    h.update(f"buckets:{device_bucket}:{location_bucket}".encode())
    for path in (sessions, device_users, ap_map):
        _digest_file(h, path)
    return h.hexdigest()[:16]


def build_manifest(
    sessions: str | Path,
    device_users: str | Path,
    ap_map: str | Path,
    out_path: str | Path,
    device_bucket: int = 24 * 3600,
    location_bucket: int = 3600,
) -> dict:
    """Write a snapshot manifest. The graph itself is rebuilt from the
    session TSV on load; the manifest pins inputs and bucket durations."""
    sessions, device_users, ap_map = Path(sessions), Path(device_users), Path(ap_map)
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "snapshot_id": compute_snapshot_id(sessions, device_users, ap_map, device_bucket, location_bucket),
        "built_at": int(time.time()),
        "sessions": str(sessions),
        "device_users": str(device_users),
        "ap_map": str(ap_map),
        "device_bucket": device_bucket,
        "location_bucket": location_bucket,
    }
    Path(out_path).write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return manifest


def load_snapshot(manifest_path: str | Path) -> SnapshotHandle:
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("schema") != MANIFEST_SCHEMA:
        raise ValueError(f"unsupported manifest schema: {manifest.get('schema')!r}")
    base = manifest_path.parent

    def resolve(key: str) -> Path:
        p = Path(manifest[key])
        return p if p.is_absolute() else base / p

    sessions = read_sessions_tsv(resolve("sessions"))
    dumap = read_device_user_tsv(resolve("device_users"))
    topo = load_ap_map(resolve("ap_map"))
    graph = build_graph(sessions, manifest["device_bucket"], manifest["location_bucket"])
    lo = min((s.t_start for lst in sessions.values() for s in lst), default=0)
    hi = max((s.t_end for lst in sessions.values() for s in lst), default=0)
    stats = dict(graph.stats())
    stats["users"] = len(dumap.user_to_devices)
    return SnapshotHandle(
        snapshot_id=manifest["snapshot_id"],
        built_at=manifest["built_at"],
        coverage=(lo, hi),
        graph=graph,
        dumap=dumap,
        topo=topo,
        stats=stats,
    )


# --- request handling -----------------------------------------------------------

class FieldError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


def _require(body: dict, field: str, types, caster=None):
    if field not in body or body[field] is None:
        raise FieldError(field, "required")
    value = body[field]
    if not isinstance(value, types):
        raise FieldError(field, f"expected {types}")
    return caster(value) if caster else value


def _optional(body: dict, field: str, types, default, caster=None):
    if field not in body or body[field] is None:
        return default
    value = body[field]
    if not isinstance(value, types):
        raise FieldError(field, f"expected {types}")
    return caster(value) if caster else value


def parse_query_body(body: dict) -> tuple[TraceQuery, bool]:
    """TraceQuery plus the dedupe_by_user flag, with field-level errors."""
    if not isinstance(body, dict):
        raise FieldError("body", "expected a JSON object")
    target = _require(body, "target", str)
    t_start = _require(body, "t_start", int)
    t_end = _require(body, "t_end", int)
    tau = _optional(body, "tau", int, 600)
    omega = _optional(body, "omega", int, 900)
    granularity = _optional(body, "granularity", str, "ap")
    exclusions = _optional(body, "exclusions", list, [])
    if not all(isinstance(x, str) for x in exclusions):
        raise FieldError("exclusions", "expected a list of strings")
    window = _optional(body, "post_departure_window", int, None)
    dedupe = _optional(body, "dedupe_by_user", bool, True)
    try:
        q = TraceQuery(
            target=target, t_start=t_start, t_end=t_end, tau=tau, omega=omega,
            granularity=granularity, exclusions=frozenset(exclusions),
            post_departure_window=window,
        )
    except ValueError as exc:
        raise FieldError("query", str(exc)) from None
    return q, dedupe


def _canonical(obj: dict) -> bytes:
    return (json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n").encode()


class ServiceState:
    """Mutable box holding the published snapshot; swap is atomic."""

    def __init__(self, snapshot: SnapshotHandle | None = None, token: str | None = None):
        self.snapshot = snapshot
        self.token = token
        self._reload_lock = threading.Lock()

    def reload(self, manifest_path: str | Path) -> SnapshotHandle:
        with self._reload_lock:
            snapshot = load_snapshot(manifest_path)
            self.snapshot = snapshot  # atomic publish
            return snapshot


class QueryHandler(BaseHTTPRequestHandler):
    state: ServiceState  # bound by make_server
    protocol_version = "HTTP/1.1"

    def log_message(self, format, *args):  # noqa: A002 - stdlib signature
        pass

    def _send(self, code: int, body: bytes) -> None:
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_error_obj(self, code: int, payload: dict) -> None:
        payload = {"schema": MANIFEST_SCHEMA, **payload}
        self._send(code, _canonical(payload))

    def _authorized(self) -> bool:
        token = self.state.token
        if not token:
            return True
        return self.headers.get("Authorization", "") == f"Bearer {token}"

    def _snapshot(self) -> SnapshotHandle | None:
        return self.state.snapshot

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        if not raw:
            raise FieldError("body", "empty request body")
        try:
            body = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise FieldError("body", f"invalid JSON: {exc}") from None
        if not isinstance(body, dict):
            raise FieldError("body", "expected a JSON object")
        return body

    def do_GET(self):
        if not self._authorized():
            self._send_error_obj(401, {"status": "unauthorized"})
            return
        snap = self._snapshot()
        if self.path == "/v1/meta/snapshot":
            if snap is None:
                self._send_error_obj(503, {"status": "unavailable"})
                return
            self._send(200, _canonical({
                "schema": MANIFEST_SCHEMA,
                "snapshot_id": snap.snapshot_id,
                "built_at": snap.built_at,
                "coverage": list(snap.coverage),
                "stats": snap.stats,
            }))
        elif self.path == "/v1/meta/zones":
            if snap is None:
                self._send_error_obj(503, {"status": "unavailable"})
                return
            self._send(200, _canonical({"schema": MANIFEST_SCHEMA, "zones": snap.topo.zones_json()}))
        else:
            self._send_error_obj(404, {"status": "not_found", "path": self.path})

    def do_POST(self):
        if not self._authorized():
            self._send_error_obj(401, {"status": "unauthorized"})
            return
        try:
            if self.path == "/v1/admin/reload":
                body = self._read_body()
                manifest = _require(body, "snapshot", str)
                snap = self.state.reload(manifest)
                self._send(200, _canonical({"schema": MANIFEST_SCHEMA, "snapshot_id": snap.snapshot_id}))
                return
            if self.path not in (
                "/v1/query/location",
                "/v1/query/proximity",
                "/v1/query/post-departure",
                "/v1/query/iterative",
            ):
                self._send_error_obj(404, {"status": "not_found", "path": self.path})
                return
            snap = self._snapshot()
            if snap is None:
                self._send_error_obj(503, {"status": "unavailable"})
                return
            body = self._read_body()
            self._dispatch_query(snap, body)
        except FieldError as exc:
            self._send_error_obj(400, {"status": "bad_request", "field": exc.field, "message": exc.message})
        except UnknownTargetError as exc:
            self._send_error_obj(404, {"status": "not_found", "target": exc.target})

    def _dispatch_query(self, snap: SnapshotHandle, body: dict) -> None:
        if self.path == "/v1/query/iterative":
            self._iterative(snap, body)
            return
        q, dedupe = parse_query_body(body)
        lr = location_report(snap.graph, q, snap.topo, snap.dumap)
        if self.path == "/v1/query/location":
            report = lr
        elif self.path == "/v1/query/proximity":
            report = proximity_report(
                snap.graph, lr, topo=snap.topo, dumap=snap.dumap, dedupe_by_user=dedupe
            )
        else:  # post-departure
            if q.post_departure_window is None:
                raise FieldError("post_departure_window", "required")
            report = post_departure_report(
                snap.graph, lr, q.post_departure_window, topo=snap.topo, dumap=snap.dumap
            )
        self._send(200, render_json(report).encode())

    def _iterative(self, snap: SnapshotHandle, body: dict) -> None:
        seeds = _require(body, "seeds", list)
        if not seeds or not all(isinstance(s, str) for s in seeds):
            raise FieldError("seeds", "expected a non-empty list of strings")
        rounds = _require(body, "rounds", int)
        if rounds < 1:
            raise FieldError("rounds", "must be >= 1")
        strategy_raw = _optional(body, "strategy", (str, dict), "all")
        try:
            if isinstance(strategy_raw, str):
                strategy = TraceStrategy.parse(strategy_raw)
            else:
                infected = strategy_raw.get("infected")
                if not isinstance(infected, list):
                    raise ValueError("infected strategy needs a list of rounds")
                strategy = TraceStrategy(
                    "infected",
                    infected_rounds=tuple(frozenset(r) for r in infected),
                )
        except ValueError as exc:
            raise FieldError("strategy", str(exc)) from None
        query_body = _require(body, "query", dict)
        query_body = {**query_body, "target": query_body.get("target") or seeds[0]}
        q, dedupe = parse_query_body(query_body)
        report = iterative_trace(
            snap.graph, list(seeds), rounds, strategy, q,
            topo=snap.topo, dumap=snap.dumap, dedupe_by_user=dedupe,
        )
        self._send(200, render_json(report).encode())


def make_server(host: str, port: int, state: ServiceState) -> ThreadingHTTPServer:
    handler = type("BoundQueryHandler", (QueryHandler,), {"state": state})
    return ThreadingHTTPServer((host, port), handler)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="netcontact-serve", description=__doc__)
    parser.add_argument("--snapshot", required=True, help="snapshot manifest JSON")
    parser.add_argument("--listen", default="127.0.0.1:8040", help="host:port to bind")
    parser.add_argument("--token", default=None, help="static bearer token (optional)")
    args = parser.parse_args(argv)
    host, _, port = args.listen.rpartition(":")
    state = ServiceState(load_snapshot(args.snapshot), token=args.token)
    server = make_server(host or "127.0.0.1", int(port), state)
    print(f"serving snapshot {state.snapshot.snapshot_id} on {args.listen}", file=sys.stderr)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
