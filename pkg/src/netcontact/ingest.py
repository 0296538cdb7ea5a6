"""Vendor log parsing and event normalization.

Raw controller logs arrive in one of two wire formats: a pipe-delimited
syslog-style line (``epoch|ap|mac|EVENT|username``) or a JSON object per
line with keys ``ts, ap, mac, ev, user``. Parsing yields NormalizedEvent
records that still carry raw identifiers; anonymization is a separate,
mandatory pass that replaces device MACs and usernames with keyed-hash
tokens before anything leaves this module. The canonical intermediate
format (tab-separated, one event per line) is the contract every
downstream stage reads.
"""

import enum
import hashlib
import hmac
import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import IO, Iterable, Sequence

FORMAT_ARUBA = "aruba"
FORMAT_CMX = "cmx"

TOKEN_HEX_LEN = 32  # 128-bit tokens


class EventType(enum.Enum):
    """Event variants, valued by their wire code."""

    ASSOCIATION = "ASSOC"
    REASSOCIATION = "REASSOC"
    DISASSOCIATION = "DISASSOC"
    DRIFT = "DRIFT"
    AUTHORIZATION = "AUTH"
    DEAUTHORIZATION = "DEAUTH"
    PROBE = "PROBE"

    @property
    def code(self) -> str:
        return self.value


#: Events that open (or roam) a session.
OPENING_EVENTS = frozenset(
    {EventType.ASSOCIATION, EventType.REASSOCIATION, EventType.DRIFT}
)


class SkipReason(enum.Enum):
    BLANK = "blank"
    TRUNCATED_RECORD = "truncated_record"
    MALFORMED_TIMESTAMP = "malformed_timestamp"
    UNKNOWN_EVENT_CODE = "unknown_event_code"
    MISSING_AP = "missing_ap"
    MISSING_MAC = "missing_mac"
    MALFORMED_JSON = "malformed_json"


@dataclass(frozen=True)
class Skip:
    """A rejected input line. Never aborts a batch, only counts."""

    reason: SkipReason
    detail: str = ""


@dataclass(frozen=True, slots=True)
class NormalizedEvent:
    """One timestamped device/AP event in the standard record format.

    ``timestamp`` is whole seconds since the Unix epoch, UTC. ``ap_id``
    is empty only for authorization events. Past the anonymization pass,
    ``device_mac`` and ``username`` are hash tokens, never raw values.
    """

    timestamp: int
    ap_id: str
    device_mac: str
    event_type: EventType
    username: str | None = None


class MissingKeyError(ValueError):
    """Anonymization requested without a secret key."""


class TokenCollisionError(RuntimeError):
    """Two distinct raw identifiers hashed to one token."""


def anonymize_token(key: bytes, raw: str) -> str:
    """Keyed hash of a raw identifier, truncated to a 128-bit hex token."""
    return hmac.new(key, raw.encode("utf-8"), hashlib.sha256).hexdigest()[:TOKEN_HEX_LEN]


class AnonymizationContext:
    """Holds the hashing key and the raw-to-token mapping sink.

    The mapping sink is the only reverse path from tokens to raw
    identifiers and must be stored apart from event output (restricted
    permissions). ``identity=True`` passes identifiers through untouched;
    it exists for readable test fixtures only and must be requested
    explicitly.
    """

    def __init__(
        self,
        secret_key: bytes | None = None,
        mapping_sink: IO[str] | None = None,
        identity: bool = False,
    ):
        if not identity and not secret_key:
            raise MissingKeyError("anonymization requires a secret key (or explicit identity mode)")
        self.identity = identity
        self._key = secret_key
        self._sink = mapping_sink
        self._tokens: dict[str, str] = {}
        self._owner: dict[str, str] = {}
        self._lock = threading.Lock()

    def token_for(self, raw: str) -> str:
        if self.identity:
            return raw
        with self._lock:
            tok = self._tokens.get(raw)
            if tok is not None:
                return tok
            tok = anonymize_token(self._key, raw)  # type: ignore[arg-type]
            prior = self._owner.get(tok)
            if prior is not None and prior != raw:
                raise TokenCollisionError(f"token collision between {prior!r} and {raw!r}")
            self._tokens[raw] = tok
            self._owner[tok] = raw
            if self._sink is not None:
                self._sink.write(f"{raw}\t{tok}\n")
            return tok


def anonymize(event: NormalizedEvent, ctx: AnonymizationContext) -> NormalizedEvent:
    """Replace device MAC and username with keyed-hash tokens."""
    user = ctx.token_for(event.username) if event.username else None
    return replace(event, device_mac=ctx.token_for(event.device_mac), username=user)


def _build_event(
    ts_raw: object, ap: str, mac: str, code: str, user: str | None
) -> NormalizedEvent | Skip:
    if isinstance(ts_raw, bool) or not isinstance(ts_raw, (int, str)):
        return Skip(SkipReason.MALFORMED_TIMESTAMP, repr(ts_raw))
    if isinstance(ts_raw, str):
        if not ts_raw.isdigit():
            return Skip(SkipReason.MALFORMED_TIMESTAMP, ts_raw)
        ts = int(ts_raw)
    else:
        ts = ts_raw
    if ts <= 0:
        return Skip(SkipReason.MALFORMED_TIMESTAMP, str(ts))
    try:
        etype = EventType(code)
    except ValueError:
        return Skip(SkipReason.UNKNOWN_EVENT_CODE, code)
    if not mac:
        return Skip(SkipReason.MISSING_MAC)
    if not ap and etype is not EventType.AUTHORIZATION:
        return Skip(SkipReason.MISSING_AP, etype.code)
    return NormalizedEvent(ts, ap, mac, etype, user or None)


def _parse_aruba(line: str) -> NormalizedEvent | Skip:
    if not line.strip():
        return Skip(SkipReason.BLANK)
    parts = line.rstrip("\n").split("|")
    if len(parts) != 5:
        return Skip(SkipReason.TRUNCATED_RECORD, f"{len(parts)} fields")
    ts, ap, mac, code, user = parts
    return _build_event(ts, ap, mac, code, user)


def _parse_cmx(line: str) -> NormalizedEvent | Skip:
    if not line.strip():
        return Skip(SkipReason.BLANK)
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        return Skip(SkipReason.MALFORMED_JSON, str(exc))
    if not isinstance(obj, dict):
        return Skip(SkipReason.MALFORMED_JSON, "not an object")
    missing = [k for k in ("ts", "ap", "mac", "ev") if k not in obj]
    if missing:
        return Skip(SkipReason.TRUNCATED_RECORD, ",".join(missing))
    user = obj.get("user")
    if user is not None and not isinstance(user, str):
        return Skip(SkipReason.TRUNCATED_RECORD, "user")
    ap, mac, ev = obj["ap"], obj["mac"], obj["ev"]
    if not isinstance(ap, str) or not isinstance(mac, str) or not isinstance(ev, str):
        return Skip(SkipReason.TRUNCATED_RECORD, "field types")
    return _build_event(obj["ts"], ap, mac, ev, user)


_PARSERS = {FORMAT_ARUBA: _parse_aruba, FORMAT_CMX: _parse_cmx}


def parse_line(raw_line: str, format: str) -> NormalizedEvent | Skip:
    """Parse one record in the declared wire format.

    Raw identifiers stay in place; anonymization is a separate pass.
    Malformed or irrelevant lines yield a Skip with a reason code.
    """
    try:
        parser = _PARSERS[format]
    except KeyError:
        raise ValueError(f"unknown log format: {format!r}") from None
    return parser(raw_line)


def detect_format(first_line: str) -> str:
    return FORMAT_CMX if first_line.lstrip()[:1] == "{" else FORMAT_ARUBA


# --- canonical intermediate format -----------------------------------------

def to_canonical(event: NormalizedEvent) -> str:
    """Tab-separated canonical line; bit-exact and round-trippable."""
    return (
        f"{event.timestamp}\t{event.ap_id}\t{event.device_mac}"
        f"\t{event.event_type.code}\t{event.username or ''}"
    )


def parse_canonical_line(line: str) -> NormalizedEvent | Skip:
    if not line.strip():
        return Skip(SkipReason.BLANK)
    parts = line.rstrip("\n").split("\t")
    if len(parts) != 5:
        return Skip(SkipReason.TRUNCATED_RECORD, f"{len(parts)} fields")
    ts, ap, mac, code, user = parts
    return _build_event(ts, ap, mac, code, user)


def write_events_tsv(events: Iterable[NormalizedEvent], path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(to_canonical(ev) + "\n")
            n += 1
    return n


class CanonicalFormatError(ValueError):
    """Corrupt canonical event file."""


def read_events_tsv(path: str | Path) -> list[NormalizedEvent]:
    """Read a canonical event file. Corruption here is a hard error."""
    events = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parsed = parse_canonical_line(line)
            if isinstance(parsed, Skip):
                raise CanonicalFormatError(f"{path}:{lineno}: {parsed.reason.value}")
            events.append(parsed)
    return events


# --- vendor-format serializers (used by the synthetic generator) -----------

def to_aruba(event: NormalizedEvent) -> str:
    return (
        f"{event.timestamp}|{event.ap_id}|{event.device_mac}"
        f"|{event.event_type.code}|{event.username or ''}"
    )


def to_cmx(event: NormalizedEvent) -> str:
    obj: dict[str, object] = {
        "ts": event.timestamp,
        "ap": event.ap_id,
        "mac": event.device_mac,
        "ev": event.event_type.code,
    }
    if event.username:
        obj["user"] = event.username
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


# --- batch normalization ----------------------------------------------------

@dataclass
class FileStats:
    path: str
    events: int = 0
    skips: dict[SkipReason, int] = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.skips is None:
            self.skips = {}

    @property
    def skipped(self) -> int:
        return sum(self.skips.values())


@dataclass
class NormalizeResult:
    events: list[NormalizedEvent]
    files: list[FileStats]
    io_errors: dict[str, str]

    @property
    def total_skipped(self) -> int:
        return sum(f.skipped for f in self.files)


def _parse_file(path: str | Path, fmt: str) -> tuple[list[NormalizedEvent], FileStats]:
    stats = FileStats(path=str(path))
    events: list[NormalizedEvent] = []
    with open(path, "r", encoding="utf-8") as fh:
        first = True
        use_fmt = fmt
        for line in fh:
            if first and fmt == "auto":
                use_fmt = detect_format(line)
            first = False
            parsed = parse_line(line, use_fmt)
            if isinstance(parsed, Skip):
                stats.skips[parsed.reason] = stats.skips.get(parsed.reason, 0) + 1
            else:
                events.append(parsed)
                stats.events += 1
    return events, stats


def normalize_batch(
    files: Sequence[tuple[str | Path, str]],
    ctx: AnonymizationContext,
    parallel: bool = True,
) -> NormalizeResult:
    """Parse, anonymize and merge a batch of log files.

    Files may be parsed in parallel; the merge is a serial barrier. The
    output stream is stably sorted by (timestamp, device token) with the
    original (file, line) order as the final tiebreak. A file that cannot
    be read is reported and the rest of the batch continues.
    """
    per_file: list[tuple[list[NormalizedEvent], FileStats] | None] = [None] * len(files)
    io_errors: dict[str, str] = {}

    def run(idx: int) -> None:
        path, fmt = files[idx]
        try:
            per_file[idx] = _parse_file(path, fmt)
        except OSError as exc:
            io_errors[str(path)] = str(exc)

    if parallel and len(files) > 1:
        with ThreadPoolExecutor(max_workers=min(4, len(files))) as pool:
            list(pool.map(run, range(len(files))))
    else:
        for i in range(len(files)):
            run(i)

    merged: list[NormalizedEvent] = []
    stats: list[FileStats] = []
    for item in per_file:
        if item is None:
            continue
        events, fstats = item
        merged.extend(anonymize(ev, ctx) for ev in events)
        stats.append(fstats)
    merged.sort(key=lambda ev: (ev.timestamp, ev.device_mac))
    return NormalizeResult(events=merged, files=stats, io_errors=io_errors)
