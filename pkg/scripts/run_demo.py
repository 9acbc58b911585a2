#!/usr/bin/env python3
"""End-to-end walkthrough: generate a corpus with an injected latency jump,
ingest it, emit the three reports, run detection and a forecast.

Usage: python scripts/run_demo.py [workdir]
"""

import json
import pathlib
import sys

from stormwatch.cli import main
from stormwatch.codecs import FILENAME_FOR_KIND, LogKind
from stormwatch.loggen import load_truth


def run(*argv):
    print(f"\n$ stormwatch {' '.join(argv)}")
    code = main(list(argv))
    if code != 0:
        sys.exit(f"command failed with exit {code}")


def demo(workdir: pathlib.Path) -> None:
    corpus = workdir / "corpus"
    store = workdir / "store"
    run("loggen", "--out", str(corpus), "--seed", "7", "--duration", "1800",
        "--anomaly", "latency_scale:1200:1500:10")

    paths = [str(corpus / FILENAME_FOR_KIND[kind]) for kind in LogKind]
    run("ingest", "--paths", *paths, "--store", str(store),
        "--base-date", "2024-03-01")

    run("report", "--store", str(store), "--out", str(workdir / "reports"))

    truth = load_truth(str(corpus))
    job = {
        "metric": truth["anomalies"][0]["affected_metric"],
        "from": truth["start_ms"],
        "to": truth["start_ms"] + truth["duration_seconds"] * 1000,
    }
    job_path = workdir / "job.json"
    job_path.write_text(json.dumps(job, indent=2), encoding="utf-8")
    run("ml", "detect", "--store", str(store), "--job", str(job_path),
        "--out", str(workdir / "ml"))
    run("ml", "forecast", "--store", str(store), "--job", str(job_path),
        "--out", str(workdir / "ml"), "--horizon", "30")

    records = (workdir / "ml" / "records.csv").read_text().strip().splitlines()
    print(f"\nanomaly records ({len(records) - 1}):")
    for line in records[:6]:
        print(f"  {line}")
    print(f"\nartifacts under {workdir}/: corpus/ store/ reports/ ml/")


if __name__ == "__main__":
    target = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
    target.mkdir(parents=True, exist_ok=True)
    demo(target)
