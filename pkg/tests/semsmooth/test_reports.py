import csv
import json
from datetime import datetime, timezone

import pytest

from semsmooth import reports
from semsmooth.errors import FormatError
from semsmooth.metrics import MetricReport
from semsmooth.runspec import RunSpec


def make_report(spec, bleu=10.0, rouge=0.2, meteor=0.3, runtime_seconds=1.5):
    return reports.EvalReport(
        metrics=MetricReport(bleu=bleu, rouge1=rouge, rouge2=rouge, rougeL=rouge, meteor=meteor),
        runspec=spec,
        runtime_seconds=runtime_seconds,
    )


@pytest.mark.parametrize(
    "value, expected",
    ((0.123456, "0.1235"), (1.0, "1.0000"), (100.0, "100.0000"), (0, "0.0000")),
)
def test_format_number(value, expected):
    assert reports.format_number(value) == expected


@pytest.mark.parametrize(
    "value, expected",
    ((None, "none"), (True, "1"), (False, "0"), (0.1, "0.1"), (0.0, "0.0"), (0.5, "0.5")),
    ids=("none", "true", "false", "s", "zero", "t"),
)
def test_format_setting(value, expected):
    assert reports.format_setting(value) == expected


def test_timestamp():
    when = datetime(2024, 1, 2, 3, 4, 5, tzinfo=timezone.utc)
    assert reports.timestamp(when).startswith("2024-01-02T03:04:05")


class TestEvalReport:
    def test_json_round_trip(self):
        report = make_report(RunSpec(loss_kind="kl", s=0.1, t=0.5, w=True))

        data = report.to_json()

        assert set(data) == {"runspec", "metrics", "metadata"}
        assert data["metadata"]["runtime_seconds"] == 1.5
        assert "timestamp" in data["metadata"]
        assert reports.EvalReport.from_json(data) == report

    def test_without_runspec(self):
        report = make_report(None)
        assert reports.EvalReport.from_json(report.to_json()) == report
        assert report.row()["loss"] == ""

    def test_row(self):
        row = make_report(RunSpec(s=0.2, t=0.8, w=False), bleu=12.345678).row()

        assert set(row) == set(reports.RESULT_COLUMNS)
        assert row["loss"] == "ce"
        assert (row["s"], row["t"], row["w"]) == ("0.2", "0.8", "0")
        assert row["sacreBLEU"] == "12.3457"
        assert row["METEOR"] == "0.3000"
        assert row["runtime_seconds"] == "1.5000"

    def test_failed_row(self):
        row = reports.failed_row(RunSpec(loss_kind="kl", s=0.1))
        assert (row["loss"], row["s"], row["t"], row["w"]) == ("kl", "0.1", "none", "none")
        assert row["sacreBLEU"] == ""


class TestFiles:
    def test_write_report(self, tmp_path):
        report = make_report(RunSpec(s=0.1))

        json_path, csv_path = reports.write_report(report, tmp_path / "out")

        assert json_path.name == reports.REPORT_JSON
        assert reports.read_report(json_path) == report
        with csv_path.open(newline="") as fp:
            rows = list(csv.DictReader(fp))
        assert rows == [report.row()]

    def test_json_is_stable(self, tmp_path):
        reports.write_json({"b": 1, "a": [1.0, 2.5]}, tmp_path / "x.json")
        text = (tmp_path / "x.json").read_text()
        assert text.index('"a"') < text.index('"b"')
        assert text.endswith("\n")

    @pytest.mark.parametrize(
        "content",
        ("{not json", json.dumps({"runspec": None}), json.dumps({"metrics": {"bleu": 1.0}})),
        ids=("invalid-json", "no-metrics", "incomplete-metrics"),
    )
    def test_read_malformed_report(self, tmp_path, content):
        path = tmp_path / "report.json"
        path.write_text(content)

        with pytest.raises(FormatError, match="Malformed report"):
            reports.read_report(path)

    def test_loss_curve(self, tmp_path):
        curve = [2.5, 1.0 / 3, 0.125]
        path = tmp_path / "loss_curve.csv"

        reports.write_loss_curve(curve, path)

        assert path.read_text().splitlines()[0] == "epoch,loss"
        assert reports.read_loss_curve(path) == curve

    @pytest.mark.parametrize(
        "content",
        (b"epoch,loss\n1,nan-ish\n", b"epoch,loss\n1,0.5\xff\n", b"epoch\n1\n"),
        ids=("non-numeric", "invalid-utf8", "no-loss-column"),
    )
    def test_read_malformed_loss_curve(self, tmp_path, content):
        path = tmp_path / "loss_curve.csv"
        path.write_bytes(content)

        with pytest.raises(FormatError, match="Malformed loss curve"):
            reports.read_loss_curve(path)

    def test_read_undecodable_report(self, tmp_path):
        path = tmp_path / "report.json"
        path.write_bytes(b'{"metrics": "caf\xe9"}\n')

        with pytest.raises(FormatError, match="Malformed report"):
            reports.read_report(path)


class TestSummarizeGrid:
    def test_best_cells(self):
        grid = [
            make_report(RunSpec(), bleu=10.0),
            make_report(RunSpec(s=0.1), bleu=12.0),
            make_report(RunSpec(s=0.1, t=0.5, w=True), bleu=15.0),
            make_report(RunSpec(s=0.2, t=0.0, w=False), bleu=9.0),
            make_report(RunSpec(loss_kind="kl"), bleu=8.0),
        ]

        summary = reports.summarize_grid(grid)

        bleu = summary["ce"]["bleu"]
        assert bleu["best_baseline"] == {"cell": "ce-s0.1", "score": 12.0}
        assert bleu["best_semantic"] == {"cell": "ce-s0.1-t0.5-w1", "score": 15.0}
        assert bleu["improvement_percent"] == pytest.approx(25.0)
        # no semantic kl cell to compare with
        assert summary["kl"] == {}

    def test_zero_baseline(self):
        grid = [
            make_report(RunSpec(), bleu=0.0),
            make_report(RunSpec(s=0.1, t=0.5), bleu=1.0),
        ]
        assert reports.summarize_grid(grid)["ce"]["bleu"]["improvement_percent"] is None
