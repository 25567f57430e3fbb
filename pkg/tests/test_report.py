from __future__ import annotations

import json

import pytest

from pluginaudit.consistency import ConsistencyFinding, KIND_INCONSISTENT_NAME
from pluginaudit.corpus import Corpus, PluginRecord
from pluginaudit.discovery import (
    AccessibilityVerdict,
    VERDICT_ACCESSIBLE,
    VERDICT_NATIVE_UNREACHABLE,
)
from pluginaudit.probe import CASE2, CASE4, PluginProbeResult, ProbeRunResult
from pluginaudit.report import (
    AuditReport,
    ReportError,
    build_report,
    canonical_json_bytes,
    diff_reports,
    load_report,
    render_diff,
    render_report,
)


def _record(pid: str) -> PluginRecord:
    return PluginRecord(
        plugin_id=pid,
        store_title=pid,
        name_for_human_store=pid,
        legal_info_url=f"https://{pid}.example/legal",
        developer_domain=f"{pid}.example",
    )


def _small_inputs():
    corpus = Corpus(snapshot_label="t", created_at="now", records=[_record("p1"), _record("p2"), _record("p3")])
    verdicts = {
        "p1": AccessibilityVerdict(plugin_id="p1", verdict=VERDICT_ACCESSIBLE, winning_url="u", http_status=200),
        "p2": AccessibilityVerdict(plugin_id="p2", verdict=VERDICT_ACCESSIBLE, winning_url="u", http_status=200),
        "p3": AccessibilityVerdict(plugin_id="p3", verdict=VERDICT_NATIVE_UNREACHABLE),
    }
    run = ProbeRunResult()
    run.results["p1"] = PluginProbeResult(
        plugin_id="p1", auth_family="no_token", plugin_case=CASE4, succeeded=True
    )
    run.results["p2"] = PluginProbeResult(
        plugin_id="p2",
        auth_family="oauth",
        plugin_case=CASE2,
        succeeded=False,
        failure_causes=["lack_authorization"],
    )
    findings = [ConsistencyFinding(plugin_id="p2", kind=KIND_INCONSISTENT_NAME, evidence={})]
    scopes = [("p2", "global_access")]
    distribution = {"global_access": {"count": 1, "share": "100.000"}}
    return corpus, verdicts, run, findings, scopes, distribution


def test_build_report_tables_sum():
    corpus, verdicts, run, findings, scopes, distribution = _small_inputs()
    report = build_report(corpus, verdicts, run, findings, scopes, distribution)
    doc = report.doc
    assert sum(doc["accessibility_table"].values()) == len(corpus) == doc["corpus_size"]
    assert sum(doc["case_table"].values()) == doc["probed_count"] == 2
    assert doc["case_table"][CASE4] == 1 and doc["case_table"][CASE2] == 1
    assert doc["failure_table"]["lack_authorization"] == 1
    assert doc["consistency_table"][KIND_INCONSISTENT_NAME] == 1
    assert doc["metrics"] == {
        "file_leakage": 2,
        "inconsistent_plugins": 1,
        "no_token_valid": 1,
        "oauth_valid": 0,
        "bearer_valid": 0,
    }


def test_single_plugin_report_counts():
    corpus = Corpus(snapshot_label="t", created_at="now", records=[_record("only")])
    verdicts = {"only": AccessibilityVerdict(plugin_id="only", verdict=VERDICT_ACCESSIBLE, winning_url="u", http_status=200)}
    run = ProbeRunResult()
    run.results["only"] = PluginProbeResult(plugin_id="only", auth_family="no_token", plugin_case=CASE4, succeeded=True)
    doc = build_report(corpus, verdicts, run, [], [], {}).doc
    assert len(doc["per_plugin"]) == 1
    assert sum(doc["accessibility_table"].values()) == 1
    assert sum(doc["case_table"].values()) == 1
    assert sum(doc["failure_table"].values()) == 0
    assert sum(doc["consistency_table"].values()) == 0


def test_build_report_label_mismatch_is_error():
    corpus, verdicts, run, findings, scopes, distribution = _small_inputs()
    with pytest.raises(ReportError, match="label mismatch"):
        build_report(corpus, verdicts, run, findings, scopes, distribution, input_labels={"outcomes": "other"})


def test_irregular_manifests_reduce_file_leakage():
    corpus, verdicts, run, findings, scopes, distribution = _small_inputs()
    run.skipped["p2"] = "irregular_manifest: missing_description"
    del run.results["p2"]
    report = build_report(corpus, verdicts, run, findings, scopes, distribution)
    assert report.doc["accessibility_table"][VERDICT_ACCESSIBLE] == 2
    assert report.metrics["file_leakage"] == 1
    assert report.doc["unprobeable"] == {"irregular_manifest": 1}


def _recount_from_dossiers(doc: dict) -> dict:
    tables = {"accessibility": {}, "case": {}, "failure": {}, "consistency": {}}
    for dossier in doc["per_plugin"].values():
        if dossier["verdict"]:
            tables["accessibility"][dossier["verdict"]] = tables["accessibility"].get(dossier["verdict"], 0) + 1
        if dossier["case"]:
            tables["case"][dossier["case"]] = tables["case"].get(dossier["case"], 0) + 1
        if dossier["case"] in ("case2", "case5"):
            for cause in dossier["failure_causes"]:
                tables["failure"][cause] = tables["failure"].get(cause, 0) + 1
        for kind in dossier["finding_kinds"]:
            tables["consistency"][kind] = tables["consistency"].get(kind, 0) + 1
    return tables


def test_every_table_cell_recountable_from_dossiers():
    corpus, verdicts, run, findings, scopes, distribution = _small_inputs()
    doc = build_report(corpus, verdicts, run, findings, scopes, distribution).doc
    recounted = _recount_from_dossiers(doc)
    for verdict, count in recounted["accessibility"].items():
        assert doc["accessibility_table"][verdict] == count
    for case, count in recounted["case"].items():
        assert doc["case_table"][case] == count
    for cause, count in recounted["failure"].items():
        assert doc["failure_table"][cause] == count
    for kind, count in recounted["consistency"].items():
        assert doc["consistency_table"][kind] == count


def test_render_json_is_byte_stable():
    corpus, verdicts, run, findings, scopes, distribution = _small_inputs()
    report = build_report(corpus, verdicts, run, findings, scopes, distribution)
    assert render_report(report, "json") == render_report(report, "json")
    rebuilt = build_report(corpus, verdicts, run, findings, scopes, distribution)
    assert render_report(report, "json") == render_report(rebuilt, "json")


def test_render_unknown_format_rejected():
    report = AuditReport(doc={"snapshot_label": "x"})
    with pytest.raises(ReportError, match="unknown report format"):
        render_report(report, "pdf")


def test_render_markdown_empty_report_has_headers():
    corpus = Corpus(snapshot_label="empty", created_at="now", records=[])
    report = build_report(corpus, {}, ProbeRunResult(), [], [], {})
    text = render_report(report, "markdown").decode()
    assert "## Accessibility of URLs" in text
    assert "## API request cases" in text
    assert "| Case 1 | 0 |" in text


def _report_with_metrics(label: str, metrics: dict) -> AuditReport:
    return AuditReport(doc={"schema_version": 1, "snapshot_label": label, "metrics": metrics})


REFERENCE_BEFORE = {
    "file_leakage": 368,
    "inconsistent_plugins": 69,
    "no_token_valid": 141,
    "oauth_valid": 27,
    "bearer_valid": 5,
}
REFERENCE_AFTER = {
    "file_leakage": 282,
    "inconsistent_plugins": 61,
    "no_token_valid": 89,
    "oauth_valid": 17,
    "bearer_valid": 3,
}


def test_diff_reference_metrics():
    diff = diff_reports(_report_with_metrics("b", REFERENCE_BEFORE), _report_with_metrics("a", REFERENCE_AFTER))
    changes = {m["name"]: m["change_pct"] for m in diff.metrics}
    assert changes == {
        "file_leakage": "-23.4",
        "inconsistent_plugins": "-11.6",
        "no_token_valid": "-36.9",
        "oauth_valid": "-37.0",
        "bearer_valid": "-40.0",
    }
    # Published rounded values, at the stated tolerance.
    published = {"file_leakage": -23.4, "inconsistent_plugins": -11.6, "no_token_valid": -36.9,
                 "oauth_valid": -37.03, "bearer_valid": -40.00}
    for name, printed in published.items():
        assert abs(float(changes[name]) - printed) <= 0.1


def test_diff_identity_is_all_zero():
    report = _report_with_metrics("same", REFERENCE_BEFORE)
    diff = diff_reports(report, report)
    assert all(m["change_pct"] == "0.0" for m in diff.metrics)


def test_diff_zero_before_renders_na():
    diff = diff_reports(
        _report_with_metrics("b", {"file_leakage": 0}), _report_with_metrics("a", {"file_leakage": 3})
    )
    assert diff.metrics[0]["change_pct"] == "n/a"


def test_diff_includes_extra_shared_metrics():
    before = _report_with_metrics("b", dict(REFERENCE_BEFORE, custom_metric=10))
    after = _report_with_metrics("a", dict(REFERENCE_AFTER, custom_metric=5))
    names = [m["name"] for m in diff_reports(before, after).metrics]
    assert names[:5] == ["file_leakage", "inconsistent_plugins", "no_token_valid", "oauth_valid", "bearer_valid"]
    assert "custom_metric" in names


def test_render_diff_markdown():
    diff = diff_reports(_report_with_metrics("b", REFERENCE_BEFORE), _report_with_metrics("a", REFERENCE_AFTER))
    text = render_diff(diff, "markdown").decode()
    assert "| file_leakage | 368 | 282 | -23.4 |" in text
    with pytest.raises(ReportError):
        render_diff(diff, "html")


def test_load_report_round_trip(tmp_path):
    corpus, verdicts, run, findings, scopes, distribution = _small_inputs()
    report = build_report(corpus, verdicts, run, findings, scopes, distribution)
    path = tmp_path / "report.json"
    path.write_bytes(render_report(report, "json"))
    assert load_report(path).doc == report.doc
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema_version": 99}))
    with pytest.raises(ReportError):
        load_report(bad)


def test_canonical_json_sorted_and_compact():
    payload = canonical_json_bytes({"b": 1, "a": [2, 1]})
    assert payload == b'{"a":[2,1],"b":1}\n'


def test_markdown_of_fixture_run_shows_reference_case_rows(paper_run):
    text = (paper_run.out_dir / "report.md").read_text()
    for row in (
        "| Case 1 | 8 | High risk of data leakage |",
        "| Case 2 | 74 | Effective access protection |",
        "| Case 3 | 24 | Significant authorization flaw |",
        "| Case 4 | 141 | Risk in open access |",
        "| Case 5 | 98 | Strong data protection |",
    ):
        assert row in text
    assert "| Success | 373 |" in text
    assert "| Native URLs | 518 |" in text
