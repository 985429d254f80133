"""Result files: evaluation reports, grid tables and loss curves.

JSON files carry full precision, CSV tables four decimal places. Anything that differs between
otherwise identical runs (wall-clock time, timestamps) is kept under the ``metadata`` key.
"""

import csv
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence, Union

from babel.dates import format_datetime
from babel.numbers import format_decimal

from .errors import FormatError
from .metrics import MetricReport
from .runspec import RunSpec
from .version import __version__


RESULT_COLUMNS = (
    "loss",
    "s",
    "t",
    "w",
    "sacreBLEU",
    "ROUGE-1",
    "ROUGE-2",
    "ROUGE-L",
    "METEOR",
    "runtime_seconds",
)

METRIC_COLUMNS = {
    "sacreBLEU": "bleu",
    "ROUGE-1": "rouge1",
    "ROUGE-2": "rouge2",
    "ROUGE-L": "rougeL",
    "METEOR": "meteor",
}

REPORT_JSON = "report.json"
REPORT_CSV = "report.csv"


def format_number(value: float) -> str:
    return format_decimal(value, format="0.0000", locale="en")


def format_setting(value: Union[None, bool, float]) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return str(int(value))
    return format_decimal(value, format="0.0##", locale="en")


def timestamp(when: Optional[datetime] = None) -> str:
    when = when or datetime.now(timezone.utc)
    return format_datetime(when, format="yyyy-MM-dd'T'HH:mm:ssZZZZZ", locale="en")


def metadata(runtime_seconds: Optional[float] = None) -> dict[str, Any]:
    data = {"semsmooth_version": __version__, "timestamp": timestamp()}
    if runtime_seconds is not None:
        data["runtime_seconds"] = runtime_seconds
    return data


@dataclass(frozen=True)
class EvalReport:
    """Scores of one run, traceable to the run configuration that produced them."""

    metrics: MetricReport
    runspec: Optional[RunSpec] = None
    runtime_seconds: float = 0.0

    def to_json(self) -> dict[str, Any]:
        return {
            "runspec": self.runspec.as_dict() if self.runspec else None,
            "metrics": self.metrics.as_dict(),
            "metadata": metadata(self.runtime_seconds),
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "EvalReport":
        runspec = data.get("runspec")
        return cls(
            metrics=MetricReport(**data["metrics"]),
            runspec=RunSpec.from_dict(runspec) if runspec else None,
            runtime_seconds=data.get("metadata", {}).get("runtime_seconds", 0.0),
        )

    def row(self) -> dict[str, str]:
        spec = self.runspec
        row = {
            "loss": str(spec.loss_kind) if spec else "",
            "s": format_setting(spec.s) if spec else "",
            "t": format_setting(spec.t) if spec else "",
            "w": format_setting(spec.w) if spec else "",
            "runtime_seconds": format_number(self.runtime_seconds),
        }
        for column, field_name in METRIC_COLUMNS.items():
            row[column] = format_number(getattr(self.metrics, field_name))
        return row


def failed_row(spec: RunSpec) -> dict[str, str]:
    """Table row of a cell which didn't produce scores."""
    row = dict.fromkeys(RESULT_COLUMNS, "")
    row.update(
        loss=str(spec.loss_kind),
        s=format_setting(spec.s),
        t=format_setting(spec.t),
        w=format_setting(spec.w),
    )
    return row


def write_json(data: Any, path: Union[str, Path]):
    with Path(path).open("w", encoding="utf-8") as fp:
        json.dump(data, fp, indent=2, sort_keys=True)
        fp.write("\n")


def read_report(path: Union[str, Path]) -> EvalReport:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as fp:
            return EvalReport.from_json(json.load(fp))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"Malformed report: {exc}", path=path) from None


def write_table(rows: Iterable[dict[str, str]], path: Union[str, Path]):
    with Path(path).open("w", encoding="utf-8", newline="") as fp:
        writer = csv.DictWriter(fp, fieldnames=RESULT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def write_report(report: EvalReport, out_dir: Union[str, Path]) -> tuple[Path, Path]:
    """Write `report` as ``report.json`` and as a single-row ``report.csv`` into `out_dir`."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / REPORT_JSON
    csv_path = out_dir / REPORT_CSV
    write_json(report.to_json(), json_path)
    write_table([report.row()], csv_path)
    return json_path, csv_path


def write_loss_curve(loss_curve: Sequence[float], path: Union[str, Path]):
    with Path(path).open("w", encoding="utf-8", newline="") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(("epoch", "loss"))
        for epoch, loss in enumerate(loss_curve, start=1):
            writer.writerow((epoch, repr(float(loss))))


def read_loss_curve(path: Union[str, Path]) -> list[float]:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8", newline="") as fp:
            return [float(row["loss"]) for row in csv.DictReader(fp)]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"Malformed loss curve: {exc}", path=path) from None


def summarize_grid(reports: Sequence[EvalReport]) -> dict[str, Any]:
    """Compare the best semantic cell against the best baseline cell, per loss and metric.

    Baselines are the cells without similarity weighting (hard targets and plain label
    smoothing). The improvement is relative to the baseline score, in percent.
    """
    summary: dict[str, Any] = {}
    for loss in sorted({str(report.runspec.loss_kind) for report in reports}):
        per_metric = {}
        for field_name in METRIC_COLUMNS.values():
            candidates = [report for report in reports if str(report.runspec.loss_kind) == loss]
            baselines = [report for report in candidates if report.runspec.is_baseline]
            semantic = [report for report in candidates if not report.runspec.is_baseline]
            if not baselines or not semantic:
                continue

            def score(report):
                return getattr(report.metrics, field_name)

            best_baseline = max(baselines, key=score)
            best_semantic = max(semantic, key=score)
            if score(best_baseline) > 0:
                improvement = 100 * (score(best_semantic) - score(best_baseline)) / score(
                    best_baseline
                )
            else:
                improvement = None

            per_metric[field_name] = {
                "best_baseline": {
                    "cell": best_baseline.runspec.cell_id,
                    "score": score(best_baseline),
                },
                "best_semantic": {
                    "cell": best_semantic.runspec.cell_id,
                    "score": score(best_semantic),
                },
                "improvement_percent": improvement,
            }
        summary[loss] = per_metric
    return summary
