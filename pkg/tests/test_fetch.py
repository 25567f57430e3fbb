from __future__ import annotations

import time

from pluginaudit.fetch import Fetcher, rewrite_to_base
from pluginaudit.fixture import FixtureEndpoint, FixturePlan, FixtureSite, WK_REDIRECT, serve_fixtures


def _plan() -> FixturePlan:
    site = FixtureSite(host="f.example")
    site.endpoints = [
        FixtureEndpoint(path="/ok", method="GET", body_ok={"ok": True}),
        FixtureEndpoint(path="/boom", method="GET", status_ok=500, body_ok={"err": 1}),
    ]
    plan = FixturePlan(profile="t", seed=0)
    plan.sites["f.example"] = site
    plan.sites["r.example"] = FixtureSite(
        host="r.example", well_known=WK_REDIRECT, redirect_to="https://landing.adsite.example/welcome"
    )
    return plan


def test_rewrite_to_base():
    assert (
        rewrite_to_base("https://a.io/x/y?q=1", "http://127.0.0.1:9")
        == "http://127.0.0.1:9/a.io/x/y?q=1"
    )
    assert rewrite_to_base("https://a.io", "http://127.0.0.1:9/") == "http://127.0.0.1:9/a.io/"


def test_fetch_through_base_override_keeps_original_urls():
    server = serve_fixtures(_plan(), 0)
    try:
        fetcher = Fetcher(per_host_delay_ms=0, retries=0, base_url=server.base_url)
        result = fetcher.fetch("https://f.example/ok")
        assert result.status == 200
        assert result.url == "https://f.example/ok"
        assert result.final_url == "https://f.example/ok"
        assert result.body.strip().startswith(b"{")
    finally:
        server.stop()


def test_redirect_chain_recorded_in_original_space():
    server = serve_fixtures(_plan(), 0)
    try:
        fetcher = Fetcher(per_host_delay_ms=0, retries=0, base_url=server.base_url)
        result = fetcher.fetch("https://r.example/.well-known/ai-plugin.json")
        assert result.status == 200
        assert result.final_url == "https://landing.adsite.example/welcome"
        assert result.redirect_chain == ("https://r.example/.well-known/ai-plugin.json",)
        assert b"<html" in result.body.lower()
    finally:
        server.stop()


def test_server_errors_retried_with_attempt_count():
    server = serve_fixtures(_plan(), 0)
    try:
        fetcher = Fetcher(per_host_delay_ms=0, retries=2, base_url=server.base_url)
        result = fetcher.fetch("https://f.example/boom")
        assert result.status == 500
        assert result.attempts == 3
    finally:
        server.stop()


def test_transport_failure_reported_not_raised():
    fetcher = Fetcher(per_host_delay_ms=0, retries=0, timeout_ms=300, base_url="http://127.0.0.1:1")
    result = fetcher.fetch("https://nowhere.example/x")
    assert result.status == 0
    assert result.error


def test_per_host_delay_spaces_requests():
    server = serve_fixtures(_plan(), 0)
    try:
        fetcher = Fetcher(per_host_delay_ms=120, retries=0, base_url=server.base_url)
        start = time.monotonic()
        fetcher.fetch("https://f.example/ok")
        fetcher.fetch("https://f.example/ok")
        same_host = time.monotonic() - start
        assert same_host >= 0.12
    finally:
        server.stop()


def test_log_fn_called_per_fetch():
    server = serve_fixtures(_plan(), 0)
    seen = []
    try:
        fetcher = Fetcher(
            per_host_delay_ms=0, retries=0, base_url=server.base_url, log_fn=lambda m, r: seen.append((m, r.status))
        )
        fetcher.fetch("https://f.example/ok")
        assert seen == [("GET", 200)]
    finally:
        server.stop()
