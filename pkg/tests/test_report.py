import os

import numpy as np
import pytest

from errors import MissingArtifacts
from formatter import HEADER_PREFIX, format_value, read_csv, render_csv, strip_stamp, write_csv
from merge import (
    AGREE,
    DISAGREE,
    FAILED,
    NOT_APPLICABLE,
    OK,
    ORACLE_UNDETERMINED,
    REPORT_FILE,
    SUMMARY_COLUMNS,
    SUMMARY_FILE,
    ExperimentResult,
    agreement,
    emit_report,
    merge_results,
)
from theory import Outcome, Verdict


@pytest.mark.parametrize("value, text", [
    (None, ""),
    (True, "true"),
    (0.1, "0.1"),
    (float("inf"), "inf"),
    (float("nan"), "nan"),
    (np.float64(2.5), "2.5"),
    (np.int64(3), "3"),
    (Outcome.HOLDS, "Holds"),
])
def test_format_value(value, text):
    assert format_value(value) == text


def test_csv_has_a_single_stamp_line(tmp_path):
    rows = [{"a": 1, "b": 0.5}, {"a": 2, "c": "x"}]
    text = render_csv(rows, stamp="2026-01-01T00:00:00+00:00")
    lines = text.splitlines()
    assert lines[0] == HEADER_PREFIX + "2026-01-01T00:00:00+00:00"
    assert lines[1] == "a,b,c"
    assert lines[3] == "2,,x"
    assert strip_stamp(text) == "a,b,c\n1,0.5,\n2,,x\n"

    path = write_csv(str(tmp_path / "t.csv"), rows)
    assert read_csv(path) == [{"a": "1", "b": "0.5", "c": ""}, {"a": "2", "b": "", "c": "x"}]
    assert not [name for name in os.listdir(tmp_path) if name.startswith(".tmp-")]


def test_reading_a_missing_csv(tmp_path):
    with pytest.raises(MissingArtifacts):
        read_csv(str(tmp_path / "nope.csv"))


def verdict(outcome):
    return Verdict(outcome, "test")


@pytest.mark.parametrize("numeric, oracle, flag", [
    (verdict(Outcome.HOLDS), verdict(Outcome.HOLDS), AGREE),
    (verdict(Outcome.FAILS), verdict(Outcome.HOLDS), DISAGREE),
    (verdict(Outcome.FAILS), verdict(Outcome.UNDETERMINED), ORACLE_UNDETERMINED),
    (verdict(Outcome.UNDETERMINED), verdict(Outcome.HOLDS), NOT_APPLICABLE),
    (None, verdict(Outcome.HOLDS), NOT_APPLICABLE),
    (verdict(Outcome.HOLDS), None, NOT_APPLICABLE),
])
def test_agreement_flags(numeric, oracle, flag):
    assert agreement(numeric, oracle) == flag


def test_summary_rows_keep_plan_order():
    results = [
        ExperimentResult("b", "oracle", "h1", numeric=verdict(Outcome.HOLDS), oracle=verdict(Outcome.HOLDS)),
        ExperimentResult("a", "simulate", "h2", error="boom"),
    ]
    rows = merge_results(results)
    assert [row["name"] for row in rows] == ["b", "a"]
    assert rows[0]["agreement"] == AGREE and rows[0]["status"] == OK
    assert rows[1]["status"] == FAILED and rows[1]["agreement"] == NOT_APPLICABLE


def test_partial_results_are_flagged():
    row = merge_results([ExperimentResult("a", "simulate", error="cap", partial=True)])[0]
    assert row["error"].startswith("partial")


def test_report_needs_the_summary(tmp_path):
    with pytest.raises(MissingArtifacts):
        emit_report(str(tmp_path))


def test_report_needs_every_experiment_csv(tmp_path):
    rows = merge_results([ExperimentResult("a", "oracle", "h", oracle=verdict(Outcome.HOLDS))])
    write_csv(str(tmp_path / SUMMARY_FILE), rows, SUMMARY_COLUMNS)
    with pytest.raises(MissingArtifacts):
        emit_report(str(tmp_path))


def test_report_counts_agreement(tmp_path):
    results = [
        ExperimentResult("a", "classify-pde", "h", numeric=verdict(Outcome.HOLDS), oracle=verdict(Outcome.HOLDS)),
        ExperimentResult("b", "simulate", "h", numeric=verdict(Outcome.FAILS), oracle=verdict(Outcome.HOLDS)),
        ExperimentResult("c", "feller", "h", error="broken"),
    ]
    write_csv(str(tmp_path / SUMMARY_FILE), merge_results(results), SUMMARY_COLUMNS)
    for name in ("a", "b"):
        write_csv(str(tmp_path / f"{name}.csv"), [{"name": name}])

    with open(emit_report(str(tmp_path))) as f:
        text = f.read()
    assert "agreement rate: 50.0%" in text
    assert "FAILED: broken" in text
    report = read_csv(str(tmp_path / REPORT_FILE))
    assert report[0]["pde"] == "Holds" and report[0]["mc"] == ""
    assert report[1]["mc"] == "Fails"
