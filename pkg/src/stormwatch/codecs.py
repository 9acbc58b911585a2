"""Line grammars for the five grid-storage service log files.

Each log kind has a fixed grammar, a parser producing a typed event, and a
renderer that is its exact inverse: `parse_line(kind, render_line(e))` equals
`e` for every valid event. Field ranges are validated on both paths, so
events that violate their invariants (e.g. ok > count) never round-trip
silently.

Heartbeat and backend-metrics lines carry only a time of day; their parser
takes a :class:`~stormwatch.timeutil.DayContext` that supplies the calendar
date and handles midnight rollover.
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass
from enum import Enum

from .timeutil import (
    DayContext,
    format_iso8601_ms,
    format_time_of_day_ms,
    parse_iso8601_ms,
    parse_time_of_day_ms,
)


class LogKind(Enum):
    FRONTEND = "frontend"
    MONITORING = "monitoring"
    BACKEND = "backend"
    HEARTBEAT = "heartbeat"
    BACKEND_METRICS = "backend-metrics"


FRONTEND_LEVELS = ("ERROR", "WARNING", "INFO", "DEBUG")
BACKEND_LEVELS = ("FATAL", "ERROR", "INFO", "WARN", "DEBUG")

CANONICAL_FILENAMES = {
    "storm-frontend-server.log": LogKind.FRONTEND,
    "monitoring.log": LogKind.MONITORING,
    "storm-backend.log": LogKind.BACKEND,
    "heartbeat.log": LogKind.HEARTBEAT,
    "storm-backend-metrics.log": LogKind.BACKEND_METRICS,
}

FILENAME_FOR_KIND = {kind: name for name, kind in CANONICAL_FILENAMES.items()}


class CodecError(ValueError):
    pass


class UnknownLogKind(CodecError):
    pass


class ParseError(CodecError):
    def __init__(self, reason: str, line: str | None = None) -> None:
        super().__init__(reason if line is None else f"{reason}: {line!r}")
        self.reason = reason
        self.line = line


class GrammarMismatch(ParseError):
    pass


class FieldRange(ParseError):
    pass


@dataclass(slots=True)
class RoundStats:
    performed: int
    success: int
    failed: int
    errored: int
    avg_ms: float
    min_ms: float
    max_ms: float


@dataclass(slots=True)
class BunchStats:
    count: int
    ok: int
    mean_duration_ms: float


@dataclass(slots=True)
class FrontendEvent:
    timestamp: int
    level: str
    request_id: str
    user_dn: str
    fqans: list[str]
    operation: str
    surl: str | None
    message: str


@dataclass(slots=True)
class MonitoringEvent:
    timestamp: int
    round_seconds: int
    sync: RoundStats
    async_: RoundStats
    aggregate_sync: RoundStats
    aggregate_async: RoundStats


@dataclass(slots=True)
class BackendEvent:
    timestamp: int
    level: str
    request_id: str
    user_dn: str | None
    operation: str
    surls: list[str]
    result: str


@dataclass(slots=True)
class HeartbeatEvent:
    timestamp: int
    seq: int
    lifetime_seconds: int
    heap_free_bytes: int
    synch_last_beat: int
    ptg_total: int
    ptp_total: int
    ptg_last: BunchStats
    ptp_last: BunchStats


@dataclass(slots=True)
class BackendMetricsEvent:
    timestamp: int
    operation: str
    m1_count: int
    total_count: int
    max_ms: float
    min_ms: float
    mean_ms: float
    p95_ms: float
    p99_ms: float


Event = (
    FrontendEvent
    | MonitoringEvent
    | BackendEvent
    | HeartbeatEvent
    | BackendMetricsEvent
)

KIND_FOR_EVENT = {
    FrontendEvent: LogKind.FRONTEND,
    MonitoringEvent: LogKind.MONITORING,
    BackendEvent: LogKind.BACKEND,
    HeartbeatEvent: LogKind.HEARTBEAT,
    BackendMetricsEvent: LogKind.BACKEND_METRICS,
}

_ROTATION_RE = re.compile(r"^(?P<stem>.+?\.log)(?:\.\d+|[.-]\d{4}-\d{2}-\d{2})*$")

_ISO = r"(\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}\.\d{3}(?:Z|[+-]\d{2}:\d{2}))"
_TOD = r"(\d{2}:\d{2}:\d{2}\.\d{3})"
_INT = r"(\d+)"
_FLOAT = r"([+-]?(?:\d+(?:\.\d+)?|\.\d+)(?:[eE][+-]?\d+)?)"
_TOKEN = r"([^\s']+)"

_FRONTEND_RE = re.compile(
    rf"^{_ISO} \[([^\]\s]+)\] (ERROR|WARNING|INFO|DEBUG): {_TOKEN}"
    rf" user='([^']*)' fqans='([^']*)'(?: surl='([^']*)')? msg='([^']*)'$"
)
_BACKEND_RE = re.compile(
    rf"^{_ISO} - (FATAL|ERROR|INFO|WARN|DEBUG) \[([^\]\s]+)\]: {_TOKEN}"
    rf" user='([^']*)' surls='([^']*)' result=(\S+)$"
)
_STATS = (
    rf"\(performed={_INT} ok={_INT} fail={_INT} error={_INT}"
    rf" avg={_FLOAT} min={_FLOAT} max={_FLOAT}\)"
)
_MONITORING_RE = re.compile(
    rf"^{_ISO} - Round\({_INT}s\): Synch {_STATS} ASynch {_STATS}"
    rf" AggSynch {_STATS} AggASynch {_STATS}$"
)
_HEARTBEAT_RE = re.compile(
    rf"^{_TOD} - \[#{_INT} lifetime={_INT}:(\d{{2}})\.(\d{{2}})\]"
    rf" Heap Free:{_INT} SYNCH \[{_INT}\] ASynch \[PTG:{_INT} PTP:{_INT}\]"
    rf" Last:\( \[#PTG={_INT} OK={_INT} M\.Dur\.={_FLOAT}\]"
    rf" \[#PTP={_INT} OK={_INT} M\.Dur\.={_FLOAT}\] \)$"
)
_BACKEND_METRICS_RE = re.compile(
    rf"^{_TOD} - {_TOKEN} \[\(m1_count={_INT}, count={_INT}\)"
    rf" \(max={_FLOAT}, min={_FLOAT}, mean={_FLOAT}, p95={_FLOAT}, p99={_FLOAT}\)"
    rf" duration_units=milliseconds\]$"
)


def classify_file(path: str) -> LogKind:
    """Map a log file path to its kind, tolerating rotation suffixes."""
    base = os.path.basename(path)
    kind = CANONICAL_FILENAMES.get(base)
    if kind is not None:
        return kind
    m = _ROTATION_RE.match(base)
    if m is not None:
        kind = CANONICAL_FILENAMES.get(m.group("stem"))
        if kind is not None:
            return kind
    raise UnknownLogKind(f"not a recognized log file name: {base!r}")


def _check(condition: bool, reason: str, line: str | None = None) -> None:
    if not condition:
        raise FieldRange(reason, line)


def _finite(*values: float) -> bool:
    return all(math.isfinite(v) for v in values)


def _no_control(text: str) -> bool:
    return all(ord(c) >= 0x20 for c in text)


def _validate_quoted(text: str, what: str) -> None:
    _check(
        "'" not in text and _no_control(text),
        f"{what} may not contain quotes or control characters",
    )


def _validate_token(text: str, what: str) -> None:
    _check(bool(text), f"{what} must be non-empty")
    _check(
        "'" not in text and _no_control(text) and not any(c.isspace() for c in text),
        f"{what} may not contain spaces, quotes or control characters",
    )


def _validate_round_stats(s: RoundStats, what: str, line: str | None) -> None:
    _check(
        s.performed >= 0 and s.success >= 0 and s.failed >= 0 and s.errored >= 0,
        f"{what}: negative count",
        line,
    )
    _check(
        s.success + s.failed + s.errored <= s.performed,
        f"{what}: outcome counts exceed performed",
        line,
    )
    _check(_finite(s.avg_ms, s.min_ms, s.max_ms), f"{what}: non-finite duration", line)
    if s.performed > 0:
        _check(
            s.min_ms <= s.avg_ms <= s.max_ms,
            f"{what}: expected min <= avg <= max",
            line,
        )


def _validate_bunch(b: BunchStats, what: str, line: str | None) -> None:
    _check(b.count >= 0 and b.ok >= 0, f"{what}: negative count", line)
    _check(b.ok <= b.count, f"{what}: ok exceeds count", line)
    _check(
        _finite(b.mean_duration_ms) and b.mean_duration_ms >= 0,
        f"{what}: bad mean duration",
        line,
    )


# Render uses calendar formatting, which caps out at year 9999.
_MAX_TIMESTAMP_MS = 253_402_300_800_000


def validate_event(event: Event, line: str | None = None) -> None:
    """Raise FieldRange if the event violates its declared invariants."""
    _check(0 <= event.timestamp < _MAX_TIMESTAMP_MS, "timestamp out of range", line)
    if isinstance(event, FrontendEvent):
        _check(event.level in FRONTEND_LEVELS, f"bad frontend level {event.level}", line)
        _validate_token(event.operation, "operation")
        _validate_token(event.request_id, "request_id")
        _validate_quoted(event.user_dn, "user_dn")
        for fqan in event.fqans:
            _check(bool(fqan), "empty fqan", line)
            _check(
                "," not in fqan and "'" not in fqan and _no_control(fqan),
                "bad fqan",
                line,
            )
        if event.surl is not None:
            _validate_quoted(event.surl, "surl")
        _validate_quoted(event.message, "message")
    elif isinstance(event, MonitoringEvent):
        _check(event.round_seconds > 0, "round_seconds must be positive", line)
        for name, stats in (
            ("Synch", event.sync),
            ("ASynch", event.async_),
            ("AggSynch", event.aggregate_sync),
            ("AggASynch", event.aggregate_async),
        ):
            _validate_round_stats(stats, name, line)
    elif isinstance(event, BackendEvent):
        _check(event.level in BACKEND_LEVELS, f"bad backend level {event.level}", line)
        _validate_token(event.operation, "operation")
        _validate_token(event.request_id, "request_id")
        if event.user_dn is not None:
            _check(bool(event.user_dn), "user_dn must be absent, not empty", line)
            _validate_quoted(event.user_dn, "user_dn")
        for surl in event.surls:
            _check(bool(surl), "empty surl", line)
            _check(
                ";" not in surl and "'" not in surl and _no_control(surl),
                "bad surl",
                line,
            )
        _validate_token(event.result, "result")
    elif isinstance(event, HeartbeatEvent):
        _check(event.seq >= 0, "negative seq", line)
        _check(event.lifetime_seconds >= 0, "negative lifetime", line)
        _check(event.heap_free_bytes >= 0, "negative heap size", line)
        _check(event.synch_last_beat >= 0, "negative synch count", line)
        _check(event.ptg_total >= 0 and event.ptp_total >= 0, "negative totals", line)
        _validate_bunch(event.ptg_last, "PTG", line)
        _validate_bunch(event.ptp_last, "PTP", line)
    elif isinstance(event, BackendMetricsEvent):
        _validate_token(event.operation, "operation")
        _check(event.m1_count >= 0, "negative m1_count", line)
        _check(event.m1_count <= event.total_count, "m1_count exceeds total", line)
        _check(
            _finite(event.max_ms, event.min_ms, event.mean_ms, event.p95_ms, event.p99_ms),
            "non-finite duration",
            line,
        )
        _check(
            event.min_ms <= event.mean_ms <= event.max_ms,
            "expected min <= mean <= max",
            line,
        )
        _check(
            event.min_ms <= event.p95_ms <= event.p99_ms <= event.max_ms,
            "expected min <= p95 <= p99 <= max",
            line,
        )
    else:
        raise CodecError(f"unknown event type: {type(event).__name__}")


def _fmt(value: float) -> str:
    return repr(float(value))


def _fmt_stats(s: RoundStats) -> str:
    return (
        f"(performed={s.performed} ok={s.success} fail={s.failed}"
        f" error={s.errored} avg={_fmt(s.avg_ms)} min={_fmt(s.min_ms)}"
        f" max={_fmt(s.max_ms)})"
    )


def render_line(event: Event) -> str:
    """Render a valid event as one log line (the inverse of parse_line)."""
    validate_event(event)
    if isinstance(event, FrontendEvent):
        surl = f" surl='{event.surl}'" if event.surl is not None else ""
        return (
            f"{format_iso8601_ms(event.timestamp)} [{event.request_id}]"
            f" {event.level}: {event.operation} user='{event.user_dn}'"
            f" fqans='{','.join(event.fqans)}'{surl} msg='{event.message}'"
        )
    if isinstance(event, MonitoringEvent):
        return (
            f"{format_iso8601_ms(event.timestamp)} - Round({event.round_seconds}s):"
            f" Synch {_fmt_stats(event.sync)} ASynch {_fmt_stats(event.async_)}"
            f" AggSynch {_fmt_stats(event.aggregate_sync)}"
            f" AggASynch {_fmt_stats(event.aggregate_async)}"
        )
    if isinstance(event, BackendEvent):
        return (
            f"{format_iso8601_ms(event.timestamp)} - {event.level}"
            f" [{event.request_id}]: {event.operation}"
            f" user='{event.user_dn or ''}' surls='{';'.join(event.surls)}'"
            f" result={event.result}"
        )
    if isinstance(event, HeartbeatEvent):
        hours, rest = divmod(event.lifetime_seconds, 3600)
        minutes, seconds = divmod(rest, 60)
        g, p = event.ptg_last, event.ptp_last
        return (
            f"{format_time_of_day_ms(event.timestamp)} - [#{event.seq}"
            f" lifetime={hours}:{minutes:02d}.{seconds:02d}]"
            f" Heap Free:{event.heap_free_bytes} SYNCH [{event.synch_last_beat}]"
            f" ASynch [PTG:{event.ptg_total} PTP:{event.ptp_total}]"
            f" Last:( [#PTG={g.count} OK={g.ok} M.Dur.={_fmt(g.mean_duration_ms)}]"
            f" [#PTP={p.count} OK={p.ok} M.Dur.={_fmt(p.mean_duration_ms)}] )"
        )
    if isinstance(event, BackendMetricsEvent):
        return (
            f"{format_time_of_day_ms(event.timestamp)} - {event.operation}"
            f" [(m1_count={event.m1_count}, count={event.total_count})"
            f" (max={_fmt(event.max_ms)}, min={_fmt(event.min_ms)},"
            f" mean={_fmt(event.mean_ms)}, p95={_fmt(event.p95_ms)},"
            f" p99={_fmt(event.p99_ms)}) duration_units=milliseconds]"
        )
    raise CodecError(f"unknown event type: {type(event).__name__}")


def _split_list(text: str, sep: str) -> list[str]:
    return text.split(sep) if text else []


def parse_line(kind: LogKind, line: str, day_context: DayContext | None = None) -> Event:
    """Parse one log line of the given kind into its typed event.

    `day_context` supplies the calendar date for kinds whose lines carry
    only a time of day (heartbeat, backend-metrics); when omitted, a fresh
    context anchored at the epoch is used.
    """
    if kind is LogKind.FRONTEND:
        m = _FRONTEND_RE.match(line)
        if m is None:
            raise GrammarMismatch("frontend grammar mismatch", line)
        ts, rid, level, op, dn, fqans, surl, msg = m.groups()
        event: Event = FrontendEvent(
            timestamp=parse_iso8601_ms(ts),
            level=level,
            request_id=rid,
            user_dn=dn,
            fqans=_split_list(fqans, ","),
            operation=op,
            surl=surl,
            message=msg,
        )
    elif kind is LogKind.MONITORING:
        m = _MONITORING_RE.match(line)
        if m is None:
            raise GrammarMismatch("monitoring grammar mismatch", line)
        g = m.groups()
        stats = [
            RoundStats(
                performed=int(g[i]),
                success=int(g[i + 1]),
                failed=int(g[i + 2]),
                errored=int(g[i + 3]),
                avg_ms=float(g[i + 4]),
                min_ms=float(g[i + 5]),
                max_ms=float(g[i + 6]),
            )
            for i in (2, 9, 16, 23)
        ]
        event = MonitoringEvent(
            timestamp=parse_iso8601_ms(g[0]),
            round_seconds=int(g[1]),
            sync=stats[0],
            async_=stats[1],
            aggregate_sync=stats[2],
            aggregate_async=stats[3],
        )
    elif kind is LogKind.BACKEND:
        m = _BACKEND_RE.match(line)
        if m is None:
            raise GrammarMismatch("backend grammar mismatch", line)
        ts, level, rid, op, dn, surls, result = m.groups()
        event = BackendEvent(
            timestamp=parse_iso8601_ms(ts),
            level=level,
            request_id=rid,
            user_dn=dn or None,
            operation=op,
            surls=_split_list(surls, ";"),
            result=result,
        )
    elif kind is LogKind.HEARTBEAT:
        m = _HEARTBEAT_RE.match(line)
        if m is None:
            raise GrammarMismatch("heartbeat grammar mismatch", line)
        g = m.groups()
        ctx = day_context if day_context is not None else DayContext(0)
        event = HeartbeatEvent(
            timestamp=ctx.resolve(parse_time_of_day_ms(g[0])),
            seq=int(g[1]),
            lifetime_seconds=int(g[2]) * 3600 + int(g[3]) * 60 + int(g[4]),
            heap_free_bytes=int(g[5]),
            synch_last_beat=int(g[6]),
            ptg_total=int(g[7]),
            ptp_total=int(g[8]),
            ptg_last=BunchStats(int(g[9]), int(g[10]), float(g[11])),
            ptp_last=BunchStats(int(g[12]), int(g[13]), float(g[14])),
        )
    elif kind is LogKind.BACKEND_METRICS:
        m = _BACKEND_METRICS_RE.match(line)
        if m is None:
            raise GrammarMismatch("backend-metrics grammar mismatch", line)
        g = m.groups()
        ctx = day_context if day_context is not None else DayContext(0)
        event = BackendMetricsEvent(
            timestamp=ctx.resolve(parse_time_of_day_ms(g[0])),
            operation=g[1],
            m1_count=int(g[2]),
            total_count=int(g[3]),
            max_ms=float(g[4]),
            min_ms=float(g[5]),
            mean_ms=float(g[6]),
            p95_ms=float(g[7]),
            p99_ms=float(g[8]),
        )
    else:
        raise UnknownLogKind(f"unknown log kind: {kind}")
    validate_event(event, line)
    return event


# Flat document field names per kind; `event_to_document` emits exactly these.
DOCUMENT_SCHEMAS: dict[LogKind, tuple[str, ...]] = {
    LogKind.FRONTEND: (
        "kind", "@timestamp", "status", "action", "request_id",
        "user_dn", "fqans", "surl", "msg", "message",
    ),
    LogKind.MONITORING: (
        "kind", "@timestamp", "round_seconds",
        "sync_performed", "sync_success", "sync_failed", "sync_errored",
        "sync_avg_ms", "sync_min_ms", "sync_max_ms",
        "async_performed", "async_success", "async_failed", "async_errored",
        "async_avg_ms", "async_min_ms", "async_max_ms",
        "agg_sync_performed", "agg_sync_success", "agg_sync_failed",
        "agg_sync_errored", "agg_sync_avg_ms", "agg_sync_min_ms",
        "agg_sync_max_ms",
        "agg_async_performed", "agg_async_success", "agg_async_failed",
        "agg_async_errored", "agg_async_avg_ms", "agg_async_min_ms",
        "agg_async_max_ms",
        "message",
    ),
    LogKind.BACKEND: (
        "kind", "@timestamp", "status", "action", "request_id",
        "user_dn", "surls", "result", "message",
    ),
    LogKind.HEARTBEAT: (
        "kind", "@timestamp", "seq", "lifetime_seconds", "heap_free_bytes",
        "synch_last_beat", "ptg_total", "ptp_total",
        "ptg_count", "ptg_ok", "ptg_mean_duration_ms",
        "ptp_count", "ptp_ok", "ptp_mean_duration_ms",
        "message",
    ),
    LogKind.BACKEND_METRICS: (
        "kind", "@timestamp", "action", "m1_count", "total_count",
        "max_ms", "min_ms", "mean_ms", "p95_ms", "p99_ms", "message",
    ),
}


def _stats_fields(prefix: str, s: RoundStats) -> dict[str, object]:
    return {
        f"{prefix}_performed": s.performed,
        f"{prefix}_success": s.success,
        f"{prefix}_failed": s.failed,
        f"{prefix}_errored": s.errored,
        f"{prefix}_avg_ms": s.avg_ms,
        f"{prefix}_min_ms": s.min_ms,
        f"{prefix}_max_ms": s.max_ms,
    }


def event_to_document(event: Event, raw: str | None = None) -> dict[str, object]:
    """Flatten an event into its documented field map.

    The `message` field holds the raw line (re-rendered when not supplied).
    Every schema field is present; optional values are None.
    """
    kind = KIND_FOR_EVENT[type(event)]
    message = raw if raw is not None else render_line(event)
    doc: dict[str, object] = {"kind": kind.value, "@timestamp": event.timestamp}
    if isinstance(event, FrontendEvent):
        doc.update(
            status=event.level,
            action=event.operation,
            request_id=event.request_id,
            user_dn=event.user_dn,
            fqans=",".join(event.fqans),
            surl=event.surl,
            msg=event.message,
        )
    elif isinstance(event, MonitoringEvent):
        doc["round_seconds"] = event.round_seconds
        doc.update(_stats_fields("sync", event.sync))
        doc.update(_stats_fields("async", event.async_))
        doc.update(_stats_fields("agg_sync", event.aggregate_sync))
        doc.update(_stats_fields("agg_async", event.aggregate_async))
    elif isinstance(event, BackendEvent):
        doc.update(
            status=event.level,
            action=event.operation,
            request_id=event.request_id,
            user_dn=event.user_dn,
            surls=";".join(event.surls),
            result=event.result,
        )
    elif isinstance(event, HeartbeatEvent):
        doc.update(
            seq=event.seq,
            lifetime_seconds=event.lifetime_seconds,
            heap_free_bytes=event.heap_free_bytes,
            synch_last_beat=event.synch_last_beat,
            ptg_total=event.ptg_total,
            ptp_total=event.ptp_total,
            ptg_count=event.ptg_last.count,
            ptg_ok=event.ptg_last.ok,
            ptg_mean_duration_ms=event.ptg_last.mean_duration_ms,
            ptp_count=event.ptp_last.count,
            ptp_ok=event.ptp_last.ok,
            ptp_mean_duration_ms=event.ptp_last.mean_duration_ms,
        )
    elif isinstance(event, BackendMetricsEvent):
        doc.update(
            action=event.operation,
            m1_count=event.m1_count,
            total_count=event.total_count,
            max_ms=event.max_ms,
            min_ms=event.min_ms,
            mean_ms=event.mean_ms,
            p95_ms=event.p95_ms,
            p99_ms=event.p99_ms,
        )
    doc["message"] = message
    return doc
