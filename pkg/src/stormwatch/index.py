"""Day-partitioned, sharded inverted indices over pipeline documents.

Indices are named `storm-<kind>-YYYY.MM.DD` and hold an in-memory inverted
index per shard (text fields tokenized on non-alphanumeric boundaries and
lowercased, keyword fields indexed verbatim, numeric fields in columns for
range queries). Queries are an AST of term/boolean/range nodes; results are
exact and sorted by (@timestamp, id). Aggregations recompute from the
matching documents, so they are exact at this scale. Snapshots persist one
directory per index: a manifest plus newline-delimited documents.
"""

from __future__ import annotations

import json
import math
import os
import re
import shutil
import zlib
from dataclasses import dataclass

from .pipeline import Document

# Identifier-like fields are indexed verbatim (exact-match terms); free text
# is tokenized. DNs and client addresses are identifiers here.
KEYWORD_FIELDS = frozenset(
    {
        "id",
        "kind",
        "type",
        "status",
        "action",
        "result",
        "beat.name",
        "source",
        "request_id",
        "geo_label",
        "surl",
        "level",
        "client_ip",
        "user_dn",
    }
)

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_DATED_INDEX_RE = re.compile(r"-(\d{4})\.(\d{2})\.(\d{2})$")


class StoreError(Exception):
    pass


class MissingTimestamp(StoreError):
    pass


class UnknownIndex(StoreError):
    pass


class MalformedPattern(StoreError):
    pass


class AggregationError(StoreError):
    pass


# ---------------------------------------------------------------------------
# Query and aggregation ASTs


@dataclass(frozen=True)
class Term:
    field: str
    value: object


@dataclass(frozen=True)
class And:
    clauses: tuple


@dataclass(frozen=True)
class Or:
    clauses: tuple


@dataclass(frozen=True)
class Not:
    clause: object


@dataclass(frozen=True)
class Range:
    field: str
    min: float | None = None
    max: float | None = None
    include_min: bool = True
    include_max: bool = True


@dataclass(frozen=True)
class MatchAll:
    pass


Query = Term | And | Or | Not | Range | MatchAll


@dataclass(frozen=True)
class TermsAgg:
    field: str
    top_n: int


@dataclass(frozen=True)
class DateHistogramAgg:
    interval_seconds: int


@dataclass(frozen=True)
class StatsAgg:
    field: str


@dataclass(frozen=True)
class GeoGridAgg:
    cell_degrees: float


Aggregation = TermsAgg | DateHistogramAgg | StatsAgg | GeoGridAgg


def query_from_json(obj: dict) -> Query:
    """Build a query from its documented JSON form."""
    if not isinstance(obj, dict) or len(obj) != 1:
        raise ValueError(f"query node must be a single-key object: {obj!r}")
    kind, body = next(iter(obj.items()))
    if kind == "match_all":
        return MatchAll()
    if kind == "term":
        return Term(field=body["field"], value=body["value"])
    if kind == "and":
        return And(tuple(query_from_json(c) for c in body))
    if kind == "or":
        return Or(tuple(query_from_json(c) for c in body))
    if kind == "not":
        return Not(query_from_json(body))
    if kind == "range":
        return Range(
            field=body["field"],
            min=body.get("min"),
            max=body.get("max"),
            include_min=body.get("include_min", True),
            include_max=body.get("include_max", True),
        )
    raise ValueError(f"unknown query node kind: {kind!r}")


def query_to_json(q: Query) -> dict:
    if isinstance(q, MatchAll):
        return {"match_all": {}}
    if isinstance(q, Term):
        return {"term": {"field": q.field, "value": q.value}}
    if isinstance(q, And):
        return {"and": [query_to_json(c) for c in q.clauses]}
    if isinstance(q, Or):
        return {"or": [query_to_json(c) for c in q.clauses]}
    if isinstance(q, Not):
        return {"not": query_to_json(q.clause)}
    if isinstance(q, Range):
        return {
            "range": {
                "field": q.field,
                "min": q.min,
                "max": q.max,
                "include_min": q.include_min,
                "include_max": q.include_max,
            }
        }
    raise ValueError(f"unknown query node: {q!r}")


def aggregation_from_json(obj: dict) -> Aggregation:
    if not isinstance(obj, dict) or len(obj) != 1:
        raise ValueError(f"aggregation must be a single-key object: {obj!r}")
    kind, body = next(iter(obj.items()))
    if kind == "terms":
        return TermsAgg(field=body["field"], top_n=int(body.get("top_n", 10)))
    if kind == "date_histogram":
        return DateHistogramAgg(interval_seconds=int(body["interval_seconds"]))
    if kind == "stats":
        return StatsAgg(field=body["field"])
    if kind == "geo_grid":
        return GeoGridAgg(cell_degrees=float(body["cell_degrees"]))
    raise ValueError(f"unknown aggregation kind: {kind!r}")


# ---------------------------------------------------------------------------
# Shards and indices


# Maps ASCII non-alphanumerics to spaces; lowercased ASCII text then splits
# into exactly the [a-z0-9]+ runs the regex would find.
_ASCII_SEPARATORS = str.maketrans(
    {c: " " for c in map(chr, range(128)) if not c.isalnum()}
)


def tokenize(text: str) -> list[str]:
    lowered = text.lower()
    if lowered.isascii():
        return lowered.translate(_ASCII_SEPARATORS).split()
    return _TOKEN_RE.findall(lowered)


class Shard:
    __slots__ = ("stored", "by_id", "postings", "numeric", "next_ord")

    def __init__(self) -> None:
        self.stored: dict[int, Document] = {}
        self.by_id: dict[str, int] = {}
        self.postings: dict[str, dict[str, list[int]]] = {}
        self.numeric: dict[str, dict[int, float]] = {}
        self.next_ord = 0

    def upsert(self, doc: Document) -> bool:
        """Index a document; returns True when it replaced an existing id."""
        replaced = False
        old = self.by_id.get(doc.id)
        if old is not None:
            del self.stored[old]
            replaced = True
        ord_ = self.next_ord
        self.next_ord = ord_ + 1
        self.stored[ord_] = doc
        self.by_id[doc.id] = ord_
        postings = self.postings
        numeric = self.numeric
        keyword_fields = KEYWORD_FIELDS
        for key, value in doc.fields.items():
            if value is None:
                continue
            tv = type(value)
            if tv is str:
                try:
                    terms = postings[key]
                except KeyError:
                    terms = postings[key] = {}
                if key in keyword_fields:
                    try:
                        terms[value].append(ord_)
                    except KeyError:
                        terms[value] = [ord_]
                else:
                    for token in set(tokenize(value)):
                        try:
                            terms[token].append(ord_)
                        except KeyError:
                            terms[token] = [ord_]
            elif tv is int or tv is float:
                try:
                    numeric[key][ord_] = float(value)
                except KeyError:
                    numeric[key] = {ord_: float(value)}
            elif key in keyword_fields:
                terms = postings.setdefault(key, {})
                terms.setdefault(value, []).append(ord_)  # type: ignore[arg-type]
        try:
            self.postings["id"][doc.id] = [ord_]
        except KeyError:
            self.postings["id"] = {doc.id: [ord_]}
        return replaced

    def _live(self, ords: list[int]) -> set[int]:
        stored = self.stored
        return {o for o in ords if o in stored}

    def evaluate(self, q: Query) -> set[int]:
        if isinstance(q, MatchAll):
            return set(self.stored)
        if isinstance(q, Term):
            return self._eval_term(q)
        if isinstance(q, And):
            result: set[int] | None = None
            for clause in q.clauses:
                hit = self.evaluate(clause)
                result = hit if result is None else result & hit
                if not result:
                    return set()
            return result if result is not None else set(self.stored)
        if isinstance(q, Or):
            result = set()
            for clause in q.clauses:
                result |= self.evaluate(clause)
            return result
        if isinstance(q, Not):
            return set(self.stored) - self.evaluate(q.clause)
        if isinstance(q, Range):
            col = self.numeric.get(q.field)
            if col is None:
                return set()
            lo, hi = q.min, q.max
            inc_lo, inc_hi = q.include_min, q.include_max
            out = set()
            for ord_, value in col.items():
                if lo is not None and (value < lo or (not inc_lo and value == lo)):
                    continue
                if hi is not None and (value > hi or (not inc_hi and value == hi)):
                    continue
                if ord_ in self.stored:
                    out.add(ord_)
            return out
        raise StoreError(f"unknown query node: {q!r}")

    def _eval_term(self, q: Term) -> set[int]:
        value = q.value
        if type(value) is bool:
            return set()
        if type(value) is int or type(value) is float:
            col = self.numeric.get(q.field)
            if col is None:
                return set()
            target = float(value)
            stored = self.stored
            return {o for o, v in col.items() if v == target and o in stored}
        if not isinstance(value, str):
            return set()
        terms = self.postings.get(q.field)
        if terms is None:
            return set()
        if q.field in KEYWORD_FIELDS or q.field == "id":
            return self._live(terms.get(value, []))
        tokens = tokenize(value)
        if not tokens:
            return set()
        result: set[int] | None = None
        for token in tokens:
            hit = self._live(terms.get(token, []))
            result = hit if result is None else result & hit
            if not result:
                return set()
        return result or set()


class TimeIndex:
    def __init__(self, name: str, shard_count: int = 2) -> None:
        if shard_count < 1:
            raise StoreError("shard_count must be >= 1")
        self.name = name
        self.shards = [Shard() for _ in range(shard_count)]
        self.dirty = False

    @property
    def doc_count(self) -> int:
        return sum(len(s.by_id) for s in self.shards)

    def route(self, doc_id: str) -> Shard:
        # crc32 is stable across processes, which keeps routing consistent
        # between snapshot reloads (same id, same shard, upsert still works).
        return self.shards[zlib.crc32(doc_id.encode("utf-8")) % len(self.shards)]

    def upsert(self, doc: Document) -> None:
        self.route(doc.id).upsert(doc)
        self.dirty = True


class Store:
    """A collection of day-partitioned indices, optionally disk-backed."""

    def __init__(self, shard_count: int = 2) -> None:
        self.shard_count = shard_count
        self.indices: dict[str, TimeIndex] = {}

    def get_or_create(self, name: str) -> TimeIndex:
        idx = self.indices.get(name)
        if idx is None:
            idx = TimeIndex(name, self.shard_count)
            self.indices[name] = idx
        return idx


_DAY_BOUNDS_CACHE: dict[str, tuple[int, int] | None] = {}


def _check_day(index_name: str, timestamp: int) -> bool:
    bounds = _DAY_BOUNDS_CACHE.get(index_name, -1)
    if bounds == -1:
        m = _DATED_INDEX_RE.search(index_name)
        if m is None:
            bounds = None
        else:
            from datetime import datetime, timezone

            day = datetime(
                int(m.group(1)), int(m.group(2)), int(m.group(3)), tzinfo=timezone.utc
            )
            start = int(day.timestamp()) * 1000
            bounds = (start, start + 86_400_000)
        _DAY_BOUNDS_CACHE[index_name] = bounds
    if bounds is None:
        return True
    return bounds[0] <= timestamp < bounds[1]


def index_document(store: Store, doc: Document) -> None:
    """Upsert one document into its index (routing by id hash)."""
    timestamp = doc.fields.get("@timestamp")
    if type(timestamp) is not int:
        raise MissingTimestamp(f"document {doc.id} has no @timestamp")
    if not _check_day(doc.index_name, timestamp):
        raise StoreError(
            f"document timestamp outside index day: {doc.index_name}"
        )
    index = store.indices.get(doc.index_name)
    if index is None:
        index = store.get_or_create(doc.index_name)
    index.shards[zlib.crc32(doc.id.encode("utf-8")) % len(index.shards)].upsert(doc)
    index.dirty = True


def match_index_pattern(pattern: str, names: list[str]) -> list[str]:
    """Expand an index name pattern; `*` is allowed only as a final suffix."""
    star = pattern.find("*")
    if star == -1:
        return sorted(n for n in names if n == pattern)
    if star != len(pattern) - 1:
        raise MalformedPattern(f"'*' only supported as a suffix: {pattern!r}")
    prefix = pattern[:-1]
    return sorted(n for n in names if n.startswith(prefix))


def _collect(
    store: Store,
    indices: str,
    q: Query,
    time_range: tuple[int | None, int | None] | None,
) -> list[Document]:
    if time_range is not None:
        lo, hi = time_range
        clauses: list[Query] = [q]
        clauses.append(Range("@timestamp", min=lo, max=hi, include_max=False))
        q = And(tuple(clauses))
    docs: list[Document] = []
    for name in match_index_pattern(indices, list(store.indices)):
        index = store.indices[name]
        for shard in index.shards:
            for ord_ in shard.evaluate(q):
                docs.append(shard.stored[ord_])
    return docs


def search(
    store: Store,
    indices: str,
    q: Query,
    time_range: tuple[int | None, int | None] | None = None,
) -> list[Document]:
    """All matching documents, sorted by (@timestamp, id).

    `time_range` is (from_ms inclusive, to_ms exclusive); either bound may
    be None. Unknown fields match nothing rather than failing.
    """
    docs = _collect(store, indices, q, time_range)
    docs.sort(key=lambda d: (d.fields["@timestamp"], d.id))
    return docs


def aggregate(
    store: Store,
    indices: str,
    q: Query,
    agg: Aggregation,
    time_range: tuple[int | None, int | None] | None = None,
):
    """Exact aggregation over the query's result set."""
    docs = _collect(store, indices, q, time_range)
    if isinstance(agg, TermsAgg):
        counts: dict[object, int] = {}
        for doc in docs:
            value = doc.fields.get(agg.field)
            if value is None:
                continue
            counts[value] = counts.get(value, 0) + 1
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], str(kv[0])))
        return ranked[: agg.top_n]
    if isinstance(agg, DateHistogramAgg):
        span = agg.interval_seconds * 1000
        buckets: dict[int, int] = {}
        for doc in docs:
            ts = doc.fields["@timestamp"]
            start = ts - ts % span
            buckets[start] = buckets.get(start, 0) + 1
        return sorted(buckets.items())
    if isinstance(agg, StatsAgg):
        values = []
        for doc in docs:
            value = doc.fields.get(agg.field)
            if value is None:
                continue
            if type(value) is not int and type(value) is not float:
                raise AggregationError(f"stats on non-numeric field {agg.field!r}")
            values.append(float(value))
        if not values:
            return {"count": 0, "min": None, "max": None, "mean": None, "sum": 0.0}
        total = math.fsum(values)
        return {
            "count": len(values),
            "min": min(values),
            "max": max(values),
            "mean": total / len(values),
            "sum": total,
        }
    if isinstance(agg, GeoGridAgg):
        cell = agg.cell_degrees
        if cell <= 0:
            raise AggregationError("cell_degrees must be positive")
        counts2: dict[tuple[int, int], int] = {}
        for doc in docs:
            lat = doc.fields.get("geo_lat")
            lon = doc.fields.get("geo_lon")
            if lat is None or lon is None:
                continue
            key = (math.floor(lat / cell), math.floor(lon / cell))
            counts2[key] = counts2.get(key, 0) + 1
        ranked2 = sorted(counts2.items(), key=lambda kv: (-kv[1], kv[0]))
        return [(la * cell, lo * cell, n) for (la, lo), n in ranked2]
    raise StoreError(f"unknown aggregation: {agg!r}")


def delete_index(store: Store, name: str) -> None:
    if name not in store.indices:
        raise UnknownIndex(f"no such index: {name}")
    del store.indices[name]


def retention_sweep(store: Store, keep_days: int) -> list[str]:
    """Drop the oldest dated indices, keeping the newest `keep_days` UTC days.

    Returns the deleted index names. The day order is the lexicographic
    order of the YYYY.MM.DD name suffix.
    """
    if keep_days < 0:
        raise StoreError("keep_days must be >= 0")
    days = sorted(
        {
            m.group(0)[1:]
            for name in store.indices
            if (m := _DATED_INDEX_RE.search(name)) is not None
        }
    )
    cutoff = days[:-keep_days] if keep_days else days
    doomed = sorted(
        name
        for name in store.indices
        if (m := _DATED_INDEX_RE.search(name)) is not None and m.group(0)[1:] in cutoff
    )
    for name in doomed:
        del store.indices[name]
    return doomed


# ---------------------------------------------------------------------------
# Snapshots


def save_store(store: Store, root: str) -> None:
    """Write every index as <root>/<name>/{manifest.json,docs.jsonl}.

    Indices untouched since load are skipped; directories for indices no
    longer in the store are removed.
    """
    os.makedirs(root, exist_ok=True)
    wanted = set(store.indices)
    for entry in os.listdir(root):
        path = os.path.join(root, entry)
        if os.path.isdir(path) and entry not in wanted:
            shutil.rmtree(path)
    for name, index in store.indices.items():
        path = os.path.join(root, name)
        if not index.dirty and os.path.isdir(path):
            continue
        os.makedirs(path, exist_ok=True)
        with open(os.path.join(path, "docs.jsonl"), "w", encoding="utf-8") as handle:
            for shard in index.shards:
                for ord_ in sorted(shard.stored):
                    doc = shard.stored[ord_]
                    handle.write(
                        json.dumps(
                            {"id": doc.id, "fields": doc.fields},
                            sort_keys=True,
                            ensure_ascii=False,
                        )
                    )
                    handle.write("\n")
        manifest = {
            "name": name,
            "shard_count": len(index.shards),
            "doc_count": index.doc_count,
        }
        with open(os.path.join(path, "manifest.json"), "w", encoding="utf-8") as handle:
            json.dump(manifest, handle, indent=2, sort_keys=True)
        index.dirty = False


def load_store(root: str, pattern: str | None = None) -> Store:
    """Load a snapshot; `pattern` restricts which indices are materialized."""
    store = Store()
    if not os.path.isdir(root):
        return store
    names = [
        entry
        for entry in sorted(os.listdir(root))
        if os.path.isfile(os.path.join(root, entry, "manifest.json"))
    ]
    if pattern is not None:
        names = match_index_pattern(pattern, names)
    for name in names:
        path = os.path.join(root, name)
        with open(os.path.join(path, "manifest.json"), encoding="utf-8") as handle:
            manifest = json.load(handle)
        index = TimeIndex(name, int(manifest["shard_count"]))
        store.indices[name] = index
        with open(os.path.join(path, "docs.jsonl"), encoding="utf-8") as handle:
            for line in handle:
                obj = json.loads(line)
                index.upsert(Document(id=obj["id"], fields=obj["fields"], index_name=name))
        index.dirty = False
        if index.doc_count != int(manifest["doc_count"]):
            raise StoreError(f"snapshot corrupt for {name}: doc_count mismatch")
    return store
