import csv

import pytest

from crushpool.report import ReportError, extract_outcome_rows, render_figures, write_report, write_summary_csv


def test_extract_rows_from_stitched_run(completed_smallcrush_run):
    _, dest, _, _ = completed_smallcrush_run
    rows = extract_outcome_rows(dest)
    assert len(rows) == 11  # every smallcrush job bears a test
    assert [r["proc"] for r in rows] == list(range(11))
    for row in rows:
        assert 0.0 <= row["p_value"] <= 1.0
        assert row["verdict"] in ("PASS", "SUSPECT", "FAIL")
        assert row["family"] and row["name"].startswith(row["family"])


def test_summary_csv_round_trips(completed_smallcrush_run):
    _, dest, _, _ = completed_smallcrush_run
    path = write_summary_csv(dest)
    with open(path, newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert len(rows) == 11
    assert rows[0]["proc"] == "0"
    assert set(rows[0]) == {"proc", "name", "family", "samples", "statistic", "p_value", "verdict"}


def test_figures_written(completed_smallcrush_run):
    _, dest, _, _ = completed_smallcrush_run
    written = render_figures(dest)
    names = {p.name for p in written}
    assert names == {"occupancy.png", "pvalues.png"}
    for path in written:
        assert path.stat().st_size > 1000


def test_write_report_bundle(completed_smallcrush_run):
    _, dest, _, _ = completed_smallcrush_run
    paths = write_report(dest)
    assert {p.name for p in paths} == {"summary.csv", "occupancy.png", "pvalues.png"}


def test_report_needs_documents(tmp_path):
    with pytest.raises(ReportError):
        extract_outcome_rows(tmp_path)
