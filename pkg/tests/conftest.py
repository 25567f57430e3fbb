"""Shared fixtures: one full offline audit per profile, reused across tests.

The paper-tables pipeline runs once per session (gen-plan -> serve ->
ingest -> run-all --cached twice) and exposes its artifacts; the revisit
pipeline likewise. Individual tests and the acceptance suite read from
these instead of re-running the network stages.
"""

from __future__ import annotations

import io
import json
import time
from dataclasses import dataclass
from pathlib import Path

import pytest

from pluginaudit import cli, corpus as corpus_mod, fixture


@dataclass
class PipelineRun:
    label: str
    out_dir: Path
    corpus_path: Path
    report: dict
    report_bytes_first: bytes
    report_bytes_second: bytes
    outcomes: dict
    findings: dict
    scopes: dict
    verdicts: list
    elapsed_seconds: float
    retries: int


def _run_pipeline(tmp_root: Path, profile: str, seed: int, label: str) -> PipelineRun:
    out_dir = tmp_root / f"out-{profile}"
    plan = fixture.generate_plan(profile, seed)
    server = fixture.serve_fixtures(plan, 0)
    try:
        corpus = corpus_mod.ingest_index(io.StringIO(fixture.index_ndjson(plan)), label)
        corpus_path = tmp_root / f"corpus-{profile}.json"
        corpus_mod.save_corpus(corpus, corpus_path)

        retries = 0
        argv = [
            "run-all",
            "--corpus", str(corpus_path),
            "--out-dir", str(out_dir),
            "--cached",
            "--base-url", server.base_url,
            "--max-concurrency", "16",
            "--per-host-delay-ms", "0",
            "--timeout-ms", "5000",
            "--retries", str(retries),
        ]
        start = time.monotonic()
        assert cli.main(argv) == 0
        elapsed = time.monotonic() - start
        first = (out_dir / "report.json").read_bytes()
        assert cli.main(argv) == 0
        second = (out_dir / "report.json").read_bytes()
    finally:
        server.stop()

    return PipelineRun(
        label=label,
        out_dir=out_dir,
        corpus_path=corpus_path,
        report=json.loads(first),
        report_bytes_first=first,
        report_bytes_second=second,
        outcomes=json.loads((out_dir / "outcomes.json").read_text()),
        findings=json.loads((out_dir / "findings.json").read_text()),
        scopes=json.loads((out_dir / "scopes.json").read_text()),
        verdicts=json.loads((out_dir / "verdicts.json").read_text()),
        elapsed_seconds=elapsed,
        retries=retries,
    )


@pytest.fixture(scope="session")
def paper_run(tmp_path_factory) -> PipelineRun:
    root = tmp_path_factory.mktemp("paper")
    return _run_pipeline(root, fixture.PROFILE_PAPER_TABLES, seed=42, label="first-assessment")


@pytest.fixture(scope="session")
def revisit_run(tmp_path_factory) -> PipelineRun:
    root = tmp_path_factory.mktemp("revisit")
    return _run_pipeline(root, fixture.PROFILE_REVISIT, seed=42, label="revisit")
