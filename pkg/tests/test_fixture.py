from __future__ import annotations

import json
from collections import Counter

import requests

from pluginaudit.fixture import (
    FixtureEndpoint,
    FixturePlan,
    FixtureSite,
    PROFILE_PAPER_TABLES,
    PROFILE_REVISIT,
    WK_MANIFEST,
    generate_paper_plan,
    generate_plan,
    generate_revisit_plan,
    index_ndjson,
    load_plan,
    save_plan,
    serve_fixtures,
)
from pluginaudit.manifest import parse_manifest, manifest_fingerprint


def _tiny_plan() -> FixturePlan:
    site = FixtureSite(host="tiny.example", well_known=WK_MANIFEST)
    site.manifest = {
        "name_for_human": "Tiny",
        "name_for_model": "tiny",
        "description_for_model": "d",
        "api": {"type": "openapi", "url": "https://tiny.example/openapi.json"},
    }
    site.endpoints = [
        FixtureEndpoint(path="/api/limited", method="GET", body_ok={"ok": True}, rate_limit_after=3),
        FixtureEndpoint(path="/api/guarded", method="GET", body_ok={"ok": True}, requires_token=True, required_token="tok"),
    ]
    plan = FixturePlan(profile="tiny", seed=0, index=[{"title": "Tiny", "legal_info_url": "https://tiny.example/legal"}])
    plan.sites["tiny.example"] = site
    return plan


def test_serve_manifest_at_well_known_path():
    server = serve_fixtures(_tiny_plan(), 0)
    try:
        response = requests.get(f"{server.base_url}/tiny.example/.well-known/ai-plugin.json", timeout=5)
        assert response.status_code == 200
        assert response.json()["name_for_human"] == "Tiny"
    finally:
        server.stop()


def test_rate_limit_counter_semantics():
    server = serve_fixtures(_tiny_plan(), 0)
    try:
        url = f"{server.base_url}/tiny.example/api/limited"
        statuses = [requests.get(url, timeout=5).status_code for _ in range(4)]
        assert statuses == [200, 200, 200, 429]
    finally:
        server.stop()


def test_token_enforcement():
    server = serve_fixtures(_tiny_plan(), 0)
    try:
        url = f"{server.base_url}/tiny.example/api/guarded"
        assert requests.get(url, timeout=5).status_code == 401
        assert requests.get(url, headers={"Authorization": "Bearer wrong"}, timeout=5).status_code == 401
        assert requests.get(url, headers={"Authorization": "Bearer tok"}, timeout=5).status_code == 200
    finally:
        server.stop()


def test_index_ndjson_served():
    server = serve_fixtures(_tiny_plan(), 0)
    try:
        response = requests.get(f"{server.base_url}/index.ndjson", timeout=5)
        assert response.status_code == 200
        assert json.loads(response.text.splitlines()[0])["title"] == "Tiny"
    finally:
        server.stop()


def test_builtin_hosted_platform_behavior():
    server = serve_fixtures(_tiny_plan(), 0)
    try:
        assert requests.get(f"{server.base_url}/chat.openai.com/x", timeout=5).status_code == 403
        assert requests.get(f"{server.base_url}/github.com/dev/x", timeout=5).status_code == 404
        assert requests.get(f"{server.base_url}/drive.google.com/file/x", timeout=5).status_code == 403
        assert requests.get(f"{server.base_url}/unknown-host.example/x", timeout=5).status_code == 404
    finally:
        server.stop()


def test_plan_generation_deterministic_in_seed(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_plan(generate_paper_plan(42), a)
    save_plan(generate_paper_plan(42), b)
    assert a.read_bytes() == b.read_bytes()
    save_plan(generate_paper_plan(43), b)
    assert a.read_bytes() != b.read_bytes()


def test_plan_round_trip(tmp_path):
    plan = generate_revisit_plan(7)
    path = tmp_path / "plan.json"
    save_plan(plan, path)
    assert load_plan(path).to_doc() == plan.to_doc()


def test_paper_plan_population_shape():
    plan = generate_paper_plan(42)
    assert len(plan.index) == 1032
    # 17 listings resolve to the single shared-manifest host.
    shared = [e for e in plan.index if e["legal_info_url"] == "https://mixerbox.example/legal"]
    assert len(shared) == 17
    assert len({e["title"] for e in shared}) == 17
    # Every index entry dedups to a distinct plugin.
    keys = Counter((e["title"], e["legal_info_url"]) for e in plan.index)
    assert max(keys.values()) == 1
    manifest = parse_manifest(json.dumps(plan.sites["mixerbox.example"].manifest).encode())
    assert manifest_fingerprint(manifest) == manifest_fingerprint(manifest)


def test_paper_plan_index_is_shuffled_but_deterministic():
    a = generate_paper_plan(42)
    b = generate_paper_plan(42)
    assert a.index == b.index
    titles = [e["title"] for e in a.index]
    assert titles != sorted(titles)


def test_generate_plan_profiles():
    assert generate_plan(PROFILE_PAPER_TABLES, 1).profile == PROFILE_PAPER_TABLES
    assert generate_plan(PROFILE_REVISIT, 1).profile == PROFILE_REVISIT
    try:
        generate_plan("bogus", 1)
    except ValueError as exc:
        assert "unknown fixture profile" in str(exc)
    else:
        raise AssertionError("expected ValueError")


def test_index_ndjson_round_trips_through_json():
    plan = generate_revisit_plan(3)
    lines = index_ndjson(plan).strip().splitlines()
    assert len(lines) == len(plan.index)
    for line in lines:
        json.loads(line)


def test_pipeline_report_matches_checked_in_golden(paper_run):
    from pathlib import Path

    golden = Path(__file__).parent / "golden" / "report-paper-tables.json"
    assert paper_run.report_bytes_first == golden.read_bytes()
