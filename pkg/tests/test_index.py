import math
import random

import pytest

from helpers import oracle_search, oracle_tokens, random_query
from stormwatch import index as IX
from stormwatch.pipeline import Document

DAY = "2024.03.01"
BASE_TS = 1709251200000


def make_doc(i, ts=None, **fields):
    ts = BASE_TS + i * 1000 if ts is None else ts
    payload = {"@timestamp": ts, "kind": "backend", **fields}
    return Document(id=f"doc{i:06d}", fields=payload, index_name=f"storm-backend-{DAY}")


def make_corpus(n=400, seed=5):
    rng = random.Random(seed)
    statuses = ["INFO", "INFO", "INFO", "WARN", "ERROR"]
    actions = ["srmLs", "srmRm", "srmPrepareToGet", "srmReleaseFiles"]
    docs = []
    for i in range(n):
        docs.append(
            make_doc(
                i,
                status=rng.choice(statuses),
                action=rng.choice(actions),
                message=f"request {i} for {rng.choice(actions)} done in {rng.randrange(100)}ms",
                mean_ms=rng.uniform(0.5, 80.0),
                offset=i,
            )
        )
    return docs


@pytest.fixture()
def store_and_docs():
    docs = make_corpus()
    store = IX.Store()
    for doc in docs:
        IX.index_document(store, doc)
    return store, docs


class TestIndexDocument:
    def test_upsert_same_id_counts_once(self):
        store = IX.Store()
        IX.index_document(store, make_doc(1, status="INFO"))
        IX.index_document(store, make_doc(1, status="ERROR"))
        index = store.indices[f"storm-backend-{DAY}"]
        assert index.doc_count == 1
        hits = IX.search(store, "storm-*", IX.Term("status", "ERROR"))
        assert [d.id for d in hits] == ["doc000001"]
        assert not IX.search(store, "storm-*", IX.Term("status", "INFO"))

    def test_upsert_k_times_equals_once(self):
        store = IX.Store()
        for _ in range(7):
            IX.index_document(store, make_doc(2, status="WARN"))
        assert store.indices[f"storm-backend-{DAY}"].doc_count == 1

    def test_missing_timestamp_rejected(self):
        store = IX.Store()
        doc = Document(id="x", fields={"status": "INFO"}, index_name=f"storm-backend-{DAY}")
        with pytest.raises(IX.MissingTimestamp):
            IX.index_document(store, doc)

    def test_timestamp_outside_index_day_rejected(self):
        store = IX.Store()
        doc = make_doc(1, ts=BASE_TS - 1)
        with pytest.raises(IX.StoreError):
            IX.index_document(store, doc)

    def test_keyword_term_findable_verbatim(self, store_and_docs):
        store, docs = store_and_docs
        hits = IX.search(store, "storm-backend-*", IX.Term("action", "srmReleaseFiles"))
        assert hits
        assert all(d.fields["action"] == "srmReleaseFiles" for d in hits)

    def test_every_doc_retrievable_by_id(self, store_and_docs):
        store, docs = store_and_docs
        for doc in docs:
            hits = IX.search(store, "storm-backend-*", IX.Term("id", doc.id))
            assert [d.id for d in hits] == [doc.id]


class TestSearch:
    def test_match_all_on_empty_store(self):
        assert IX.search(IX.Store(), "storm-*", IX.MatchAll()) == []

    def test_results_sorted_by_timestamp_then_id(self, store_and_docs):
        store, _ = store_and_docs
        hits = IX.search(store, "storm-*", IX.MatchAll())
        keys = [(d.fields["@timestamp"], d.id) for d in hits]
        assert keys == sorted(keys)

    def test_prefix_pattern(self, store_and_docs):
        store, docs = store_and_docs
        assert len(IX.search(store, "storm-backend-*", IX.MatchAll())) == len(docs)
        assert IX.search(store, "storm-frontend-*", IX.MatchAll()) == []

    def test_malformed_pattern(self, store_and_docs):
        store, _ = store_and_docs
        with pytest.raises(IX.MalformedPattern):
            IX.search(store, "storm-*-backend", IX.MatchAll())

    def test_unknown_field_returns_empty(self, store_and_docs):
        store, _ = store_and_docs
        assert IX.search(store, "storm-*", IX.Term("nope", "x")) == []
        assert IX.search(store, "storm-*", IX.Range("nope", min=0)) == []

    def test_text_term_matches_tokens(self, store_and_docs):
        store, docs = store_and_docs
        hits = IX.search(store, "storm-*", IX.Term("message", "request"))
        assert len(hits) == len(docs)
        hits = IX.search(store, "storm-*", IX.Term("message", "srmRm done"))
        expected = {
            d.id for d in docs if {"srmrm", "done"} <= oracle_tokens(d.fields["message"])
        }
        assert {d.id for d in hits} == expected

    def test_time_range_is_half_open(self, store_and_docs):
        store, _ = store_and_docs
        lo, hi = BASE_TS + 10_000, BASE_TS + 20_000
        hits = IX.search(store, "storm-*", IX.MatchAll(), (lo, hi))
        stamps = [d.fields["@timestamp"] for d in hits]
        assert min(stamps) == lo and max(stamps) == hi - 1000

    def test_random_queries_match_linear_scan(self, store_and_docs):
        store, docs = store_and_docs
        rng = random.Random(31)
        for _ in range(150):
            q = random_query(rng, docs)
            time_range = None
            if rng.random() < 0.3:
                lo = BASE_TS + rng.randrange(0, 300_000)
                time_range = (lo, lo + rng.randrange(1000, 200_000))
            got = IX.search(store, "storm-backend-*", q, time_range)
            want = oracle_search(docs, q, time_range)
            assert [d.id for d in got] == [d.id for d in want]

    def test_shard_union_equals_whole_scan(self):
        docs = make_corpus(n=150, seed=9)
        single = IX.Store(shard_count=1)
        sharded = IX.Store(shard_count=4)
        for doc in docs:
            IX.index_document(single, doc)
            IX.index_document(sharded, doc)
        q = IX.Or((IX.Term("status", "ERROR"), IX.Range("mean_ms", min=40)))
        assert [d.id for d in IX.search(single, "storm-*", q)] == [
            d.id for d in IX.search(sharded, "storm-*", q)
        ]

    def test_shard_routing_stable(self):
        index = IX.TimeIndex("storm-backend-2024.03.01", shard_count=4)
        for i in range(50):
            doc_id = f"doc{i}"
            assert index.route(doc_id) is index.route(doc_id)


class TestAggregations:
    def test_terms_counts_and_tie_break(self):
        store = IX.Store()
        for i, status in enumerate(["INFO", "INFO", "INFO", "ERROR"]):
            IX.index_document(store, make_doc(i, status=status))
        result = IX.aggregate(store, "storm-*", IX.MatchAll(), IX.TermsAgg("status", 5))
        assert result == [("INFO", 3), ("ERROR", 1)]

    def test_terms_tie_break_is_value_ascending(self):
        store = IX.Store()
        for i, status in enumerate(["B", "A", "C", "A", "B", "C"]):
            IX.index_document(store, make_doc(i, status=status))
        result = IX.aggregate(store, "storm-*", IX.MatchAll(), IX.TermsAgg("status", 2))
        assert result == [("A", 2), ("B", 2)]

    def test_date_histogram_single_bucket(self):
        store = IX.Store()
        for i in range(3):
            IX.index_document(store, make_doc(i, ts=BASE_TS + i * 900))
        result = IX.aggregate(
            store, "storm-*", IX.MatchAll(), IX.DateHistogramAgg(60)
        )
        assert result == [(BASE_TS, 3)]

    def test_date_histogram_utc_alignment(self):
        store = IX.Store()
        IX.index_document(store, make_doc(0, ts=BASE_TS + 59_999))
        IX.index_document(store, make_doc(1, ts=BASE_TS + 60_000))
        result = IX.aggregate(store, "storm-*", IX.MatchAll(), IX.DateHistogramAgg(60))
        assert result == [(BASE_TS, 1), (BASE_TS + 60_000, 1)]

    def test_stats_exact(self, store_and_docs):
        store, docs = store_and_docs
        result = IX.aggregate(store, "storm-*", IX.MatchAll(), IX.StatsAgg("mean_ms"))
        values = [d.fields["mean_ms"] for d in docs]
        assert result["count"] == len(values)
        assert result["min"] == min(values)
        assert result["max"] == max(values)
        assert result["sum"] == math.fsum(values)
        assert result["mean"] == math.fsum(values) / len(values)

    def test_stats_on_non_numeric_field_errors(self, store_and_docs):
        store, _ = store_and_docs
        with pytest.raises(IX.AggregationError):
            IX.aggregate(store, "storm-*", IX.MatchAll(), IX.StatsAgg("status"))

    def test_stats_empty(self):
        result = IX.aggregate(IX.Store(), "storm-*", IX.MatchAll(), IX.StatsAgg("x"))
        assert result == {"count": 0, "min": None, "max": None, "mean": None, "sum": 0.0}

    def test_geo_grid_binning(self):
        store = IX.Store()
        points = [(44.4, 11.3), (44.6, 11.4), (46.2, 6.1), (-1.5, -0.5)]
        for i, (lat, lon) in enumerate(points):
            IX.index_document(store, make_doc(i, geo_lat=lat, geo_lon=lon))
        IX.index_document(store, make_doc(99))  # no geo point
        result = IX.aggregate(store, "storm-*", IX.MatchAll(), IX.GeoGridAgg(1.0))
        assert result == [(44.0, 11.0, 2), (-2.0, -1.0, 1), (46.0, 6.0, 1)]
        assert sum(c for _, _, c in result) == 4

    def test_aggregate_respects_query(self, store_and_docs):
        store, docs = store_and_docs
        result = IX.aggregate(
            store, "storm-*", IX.Term("status", "ERROR"), IX.TermsAgg("action", 10)
        )
        errors = [d for d in docs if d.fields["status"] == "ERROR"]
        assert sum(c for _, c in result) == len(errors)


class TestDeleteAndRetention:
    def _dated_store(self, days):
        store = IX.Store()
        for offset, day in enumerate(days):
            doc = Document(
                id=f"d{offset}",
                fields={"@timestamp": BASE_TS + offset * 86_400_000, "kind": "backend"},
                index_name=f"storm-backend-{day}",
            )
            IX.index_document(store, doc)
        return store

    def test_delete_excludes_from_pattern(self):
        store = self._dated_store(["2024.03.01", "2024.03.02"])
        IX.delete_index(store, "storm-backend-2024.03.01")
        hits = IX.search(store, "storm-backend-*", IX.MatchAll())
        assert [d.index_name for d in hits] == ["storm-backend-2024.03.02"]

    def test_delete_unknown_errors(self):
        with pytest.raises(IX.UnknownIndex):
            IX.delete_index(IX.Store(), "storm-backend-2024.03.01")

    def test_retention_sweep_matches_name_sort_oracle(self):
        days = ["2024.03.0" + str(d) for d in range(1, 8)]
        store = self._dated_store(days)
        names_before = sorted(store.indices)
        deleted = IX.retention_sweep(store, keep_days=3)
        expected_deleted = names_before[: len(days) - 3]
        assert deleted == expected_deleted
        assert sorted(store.indices) == names_before[len(days) - 3 :]


class TestSnapshot:
    def test_round_trip_preserves_search(self, store_and_docs, tmp_path):
        store, docs = store_and_docs
        IX.save_store(store, str(tmp_path))
        reloaded = IX.load_store(str(tmp_path))
        q = IX.And((IX.Term("status", "INFO"), IX.Range("mean_ms", min=10, max=50)))
        assert [d.id for d in IX.search(store, "storm-*", q)] == [
            d.id for d in IX.search(reloaded, "storm-*", q)
        ]
        assert reloaded.indices[f"storm-backend-{DAY}"].doc_count == len(docs)

    def test_load_with_pattern_filter(self, store_and_docs, tmp_path):
        store, _ = store_and_docs
        IX.save_store(store, str(tmp_path))
        assert IX.load_store(str(tmp_path), "storm-frontend-*").indices == {}

    def test_deleted_index_removed_from_disk(self, store_and_docs, tmp_path):
        store, _ = store_and_docs
        IX.save_store(store, str(tmp_path))
        IX.delete_index(store, f"storm-backend-{DAY}")
        IX.save_store(store, str(tmp_path))
        assert IX.load_store(str(tmp_path)).indices == {}
