import json

import pytest

from stormwatch import index as index_store
from stormwatch import loggen, pipeline, shipper


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus_small")
    workload = loggen.WorkloadSpec(seed=11, duration_seconds=600)
    truth = loggen.generate(workload, [], str(out))
    return {"dir": str(out), "truth": truth, "workload": workload}


@pytest.fixture(scope="session")
def anomalous_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus_anomalous")
    workload = loggen.WorkloadSpec(seed=7, duration_seconds=1800)
    anomalies = [loggen.AnomalySpec("latency_scale", 1200, 1500, 10.0)]
    truth = loggen.generate(workload, anomalies, str(out))
    return {"dir": str(out), "truth": truth, "workload": workload}


def corpus_paths(corpus_dir: str) -> list[str]:
    from stormwatch.codecs import FILENAME_FOR_KIND, LogKind

    return [f"{corpus_dir}/{FILENAME_FOR_KIND[kind]}" for kind in LogKind]


def ingest_corpus(corpus_dir: str, base_date: str = "2024-03-01"):
    """Library-level ingest: returns (store, counts dict)."""
    config = json.dumps(pipeline.default_pipeline_config(base_date))
    pipe = pipeline.load_pipeline(config)
    store = index_store.Store()
    registry = shipper.TailRegistry()
    counts = {"shipped": 0, "indexed": 0, "dead": 0, "dropped": 0}
    letters = []
    for path in corpus_paths(corpus_dir):
        while True:
            batch, registry = shipper.tail_once(registry, path, 5000)
            if not batch.records:
                break
            for record in batch.records:
                counts["shipped"] += 1
                outcome = pipeline.process(pipe, record)
                if outcome is None:
                    counts["dropped"] += 1
                elif isinstance(outcome, pipeline.DeadLetter):
                    counts["dead"] += 1
                    letters.append(outcome)
                else:
                    index_store.index_document(store, outcome)
                    counts["indexed"] += 1
    counts["dead_letters"] = letters
    return store, counts
