from __future__ import annotations

import json
import random

import pytest

from pluginaudit.corpus import PluginRecord
from pluginaudit.discovery import (
    CandidateUrl,
    InvalidSeed,
    VERDICT_ACCESSIBLE,
    VERDICT_HIDDEN_REDIRECT,
    VERDICT_HOSTED_GITHUB,
    VERDICT_HOSTED_GOOGLE_DOC,
    VERDICT_NATIVE_UNREACHABLE,
    VERDICT_OPENAI_PROTECTED,
    classify_accessibility,
    generate_candidates,
    partition_corpus,
    verdicts_from_doc,
    verdicts_to_doc,
    AccessibilityVerdict,
)
from pluginaudit.fetch import FetchResult
from pluginaudit.urlnorm import host_of, registrable_domain

MANIFEST_BODY = json.dumps(
    {
        "name_for_human": "X",
        "name_for_model": "x",
        "description_for_model": "d",
        "api": {"type": "openapi", "url": "https://x.example/openapi.json"},
    }
).encode()

# Hand enumeration of the rule set for this seed, frozen before the
# generator existed: origin pair; full path; 1-segment truncation; .php
# stripped; /en dropped from both the raw and stripped paths.
TERMS_PHP_ORACLE = [
    "https://a.io/.well-known/ai-plugin.json",
    "https://a.io/.well-known/",
    "https://a.io/en/terms.php/.well-known/ai-plugin.json",
    "https://a.io/en/terms.php/.well-known/",
    "https://a.io/en/.well-known/ai-plugin.json",
    "https://a.io/en/.well-known/",
    "https://a.io/en/terms/.well-known/ai-plugin.json",
    "https://a.io/en/terms/.well-known/",
    "https://a.io/terms.php/.well-known/ai-plugin.json",
    "https://a.io/terms.php/.well-known/",
    "https://a.io/terms/.well-known/ai-plugin.json",
    "https://a.io/terms/.well-known/",
]


def test_first_candidate_is_well_known_manifest():
    candidates = generate_candidates("https://a.io/legal")
    assert candidates[0].url == "https://a.io/.well-known/ai-plugin.json"
    assert candidates[1].url == "https://a.io/.well-known/"


def test_terms_php_matches_hand_enumeration():
    urls = [c.url for c in generate_candidates("https://a.io/en/terms.php")]
    assert urls == TERMS_PHP_ORACLE


def test_query_and_fragment_stripped():
    urls = [c.url for c in generate_candidates("https://a.io/legal?tab=1#top")]
    assert urls == [c.url for c in generate_candidates("https://a.io/legal")]


def test_generation_is_deterministic():
    seed = "https://a.io/"
    assert generate_candidates(seed) == generate_candidates(seed)
    assert [c.url for c in generate_candidates(seed)] == [
        "https://a.io/.well-known/ai-plugin.json",
        "https://a.io/.well-known/",
    ]


def test_relative_seed_rejected():
    for bad in ("/legal", "a.io/legal", "ftp://a.io/legal", ""):
        with pytest.raises(InvalidSeed):
            generate_candidates(bad)


def _random_seed_url(rng: random.Random) -> str:
    scheme = rng.choice(["http", "https"])
    host = ".".join(
        rng.choice(["shop", "api", "plugin", "www", "app"]) for _ in range(rng.randint(1, 2))
    ) + f"-{rng.randint(0, 999)}." + rng.choice(["example", "io", "dev", "co.uk"])
    depth = rng.randint(0, 5)
    segments = [rng.choice(["en", "us", "pages", "static", "legal", "terms", "about", "docs"]) for _ in range(depth)]
    path = "/" + "/".join(segments) if segments else "/"
    if segments and rng.random() < 0.5:
        path += rng.choice([".php", ".txt", ".htm", ".html", ".pdf"])
    if rng.random() < 0.3:
        path += "?utm=1&x=2"
    if rng.random() < 0.2:
        path += "#frag"
    return f"{scheme}://{host}{path}"


def test_candidate_properties_over_200_random_seeds():
    rng = random.Random(20260810)
    for _ in range(200):
        seed = _random_seed_url(rng)
        candidates = generate_candidates(seed)
        urls = [c.url for c in candidates]
        assert len(urls) == len(set(urls)), f"duplicates for {seed}"
        assert urls == [c.url for c in generate_candidates(seed)], f"nondeterministic for {seed}"
        seed_domain = registrable_domain(host_of(seed))
        assert all(registrable_domain(host_of(u)) == seed_domain for u in urls), f"left domain for {seed}"
        assert urls[0].endswith("/.well-known/ai-plugin.json")
        assert urls[1].endswith("/.well-known/")
        assert candidates[0].generation_rank == 0 and candidates[1].generation_rank == 1


def _record(plugin_id: str, legal: str) -> PluginRecord:
    return PluginRecord(
        plugin_id=plugin_id,
        store_title="T",
        name_for_human_store="T",
        legal_info_url=legal,
        developer_domain=registrable_domain(host_of(legal)),
    )


def _candidate(url: str) -> CandidateUrl:
    return CandidateUrl(url=url, derivation="well_known_direct", generation_rank=0)


def _result(url: str, status: int, body: bytes = b"", final: str | None = None, ctype: str = "application/json") -> FetchResult:
    return FetchResult(url=url, final_url=final or url, status=status, body=body, content_type=ctype)


def test_classify_manifest_wins():
    record = _record("p1", "https://a.io/legal")
    url = "https://a.io/.well-known/ai-plugin.json"
    verdict = classify_accessibility(record, [(_candidate(url), _result(url, 200, MANIFEST_BODY))])
    assert verdict.verdict == VERDICT_ACCESSIBLE
    assert verdict.winning_url == url
    assert verdict.http_status == 200


def test_classify_github_seed():
    record = _record("p2", "https://github.com/dev/plugin")
    url = "https://github.com/.well-known/ai-plugin.json"
    verdict = classify_accessibility(record, [(_candidate(url), _result(url, 404))])
    assert verdict.verdict == VERDICT_HOSTED_GITHUB


def test_classify_google_doc_seed():
    record = _record("p3", "https://drive.google.com/file/d/abc")
    url = "https://drive.google.com/.well-known/ai-plugin.json"
    verdict = classify_accessibility(record, [(_candidate(url), _result(url, 403))])
    assert verdict.verdict == VERDICT_HOSTED_GOOGLE_DOC


def test_classify_openai_protected():
    record = _record("p4", "https://chat.openai.com/dominick.codes")
    url = "https://chat.openai.com/.well-known/ai-plugin.json"
    results = [(_candidate(url), _result(url, 403)), (_candidate(url + "2"), _result(url + "2", 404))]
    assert classify_accessibility(record, results).verdict == VERDICT_OPENAI_PROTECTED


def test_classify_hidden_redirect_cross_domain_html():
    record = _record("p5", "https://a.io/legal")
    url = "https://a.io/.well-known/ai-plugin.json"
    result = _result(url, 200, b"<html><body>welcome</body></html>", final="https://ads.example/landing", ctype="text/html")
    assert classify_accessibility(record, [(_candidate(url), result)]).verdict == VERDICT_HIDDEN_REDIRECT


def test_classify_2xx_non_manifest_json_is_hidden_redirect():
    record = _record("p6", "https://a.io/legal")
    url = "https://a.io/.well-known/ai-plugin.json"
    result = _result(url, 200, b'{"hello": "world"}')
    assert classify_accessibility(record, [(_candidate(url), result)]).verdict == VERDICT_HIDDEN_REDIRECT


def test_classify_native_unreachable():
    record = _record("p7", "https://a.io/legal")
    results = [
        (_candidate("https://a.io/.well-known/ai-plugin.json"), _result("https://a.io/.well-known/ai-plugin.json", 404)),
        (_candidate("https://a.io/.well-known/"), _result("https://a.io/.well-known/", 406)),
    ]
    assert classify_accessibility(record, results).verdict == VERDICT_NATIVE_UNREACHABLE


def test_classification_is_replayable():
    record = _record("p8", "https://a.io/legal")
    url = "https://a.io/.well-known/ai-plugin.json"
    results = [(_candidate(url), _result(url, 200, MANIFEST_BODY))]
    assert classify_accessibility(record, results) == classify_accessibility(record, results)


def _verdict(plugin_id: str, kind: str) -> AccessibilityVerdict:
    return AccessibilityVerdict(plugin_id=plugin_id, verdict=kind)


def test_partition_reference_population():
    counts = {
        VERDICT_ACCESSIBLE: 373,
        VERDICT_HIDDEN_REDIRECT: 104,
        VERDICT_OPENAI_PROTECTED: 12,
        VERDICT_HOSTED_GOOGLE_DOC: 6,
        VERDICT_HOSTED_GITHUB: 19,
        VERDICT_NATIVE_UNREACHABLE: 518,
    }
    verdicts = {}
    for kind, n in counts.items():
        for i in range(n):
            pid = f"{kind}-{i}"
            verdicts[pid] = _verdict(pid, kind)
    partition = partition_corpus(verdicts)
    assert len(partition.all_ids) == 1032
    assert len(partition.exposed) == 373
    assert len(partition.protected) == 1032 - 373
    assert partition.exposed | partition.protected == partition.all_ids
    assert partition.exposed & partition.protected == frozenset()


def test_partition_boundaries():
    all_accessible = {f"p{i}": _verdict(f"p{i}", VERDICT_ACCESSIBLE) for i in range(4)}
    partition = partition_corpus(all_accessible)
    assert partition.protected == frozenset()
    empty = partition_corpus({})
    assert empty.all_ids == empty.exposed == empty.protected == frozenset()


def test_verdict_doc_round_trip():
    verdicts = {
        "a": AccessibilityVerdict(plugin_id="a", verdict=VERDICT_ACCESSIBLE, winning_url="u", http_status=200, evidence="e", candidates_tried=1),
        "b": AccessibilityVerdict(plugin_id="b", verdict=VERDICT_NATIVE_UNREACHABLE, candidates_tried=4),
    }
    assert verdicts_from_doc(verdicts_to_doc(verdicts)) == verdicts
