"""Results tables, per-trial traces and the patient-record CSV format."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from fsadapt.endpoint import Arm, Cohort, PatientRecord
from fsadapt.harness import OperatingCharacteristics, TrialResult

SCHEMA_VERSION = 1

RESULT_COLUMNS = ("schema_version", "scenario", "design", "power_pct", "average_n",
                  "futility_stop_pct", "max_ssr_pct", "replicates", "seed", "power_se",
                  "average_n_se", "futility_stop_se", "max_ssr_se", "resimulated")
# decimals per float column; everything else is written as-is
DECIMALS = {"power_pct": 1, "average_n": 1, "futility_stop_pct": 1, "max_ssr_pct": 1,
            "power_se": 2, "average_n_se": 2, "futility_stop_se": 2, "max_ssr_se": 2}

TRACE_COLUMNS = ("schema_version", "scenario", "design", "replicate", "replicate_seed", "zone",
                 "pp", "stage1_z", "stage2_z", "combined_z", "stage2_total", "total_enrolled",
                 "stopped_futility", "rejected", "resimulated")

PATIENT_COLUMNS = ("id", "arm", "follow_up_months", "death_time_months", "cvh_event_times",
                   "functional_response")


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def result_row(oc: OperatingCharacteristics) -> dict:
    row = {"schema_version": SCHEMA_VERSION}
    for col in RESULT_COLUMNS[1:]:
        value = getattr(oc, col)
        row[col] = round(float(value), DECIMALS[col]) if col in DECIMALS else value
    return row


def _format(col: str, value) -> str:
    if col in DECIMALS:
        return f"{float(value):.{DECIMALS[col]}f}"
    return str(value)


def results_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for row in rows:
        writer.writerow([_format(c, row[c]) for c in RESULT_COLUMNS])
    return buf.getvalue()


def read_results_csv(text: str) -> list[dict]:
    rows = []
    for raw in csv.DictReader(io.StringIO(text)):
        row = {}
        for col in RESULT_COLUMNS:
            v = raw[col]
            if col in DECIMALS:
                row[col] = float(v)
            elif col in ("scenario", "design"):
                row[col] = v
            else:
                row[col] = int(v)
        rows.append(row)
    return rows


def results_json(rows: Sequence[dict]) -> str:
    return json.dumps({"schema_version": SCHEMA_VERSION, "results": list(rows)}, indent=2) + "\n"


def _opt(x) -> str:
    return "" if x is None else repr(float(x))


def trace_csv(groups: Iterable[tuple[str, str, Sequence[TrialResult]]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for scenario, design, trials in groups:
        for i, t in enumerate(trials):
            writer.writerow([SCHEMA_VERSION, scenario, design, i, t.replicate_seed, t.zone.value,
                             repr(t.interim.pp), _opt(t.stage1_z), _opt(t.stage2_z),
                             _opt(t.combined_z), t.stage2_enrolled, t.total_enrolled,
                             int(t.stopped_futility), int(t.rejected), t.resimulated])
    return buf.getvalue()


def emit_results(results: Sequence[tuple[OperatingCharacteristics, Sequence[TrialResult]]],
                 out_dir, formats=("csv", "json"), trace: bool = False) -> list[Path]:
    """Write ``results.csv`` / ``results.json`` (and ``trace.csv``) into ``out_dir``.

    Nothing is written unless every entry has at least one completed replicate.
    """
    if not results or any(oc.replicates == 0 or not trials for oc, trials in results):
        raise ValueError("no completed replicates; refusing to write results")
    out = Path(out_dir)
    rows = [result_row(oc) for oc, _ in results]
    texts = {}
    if "csv" in formats:
        texts[out / "results.csv"] = results_csv(rows)
    if "json" in formats:
        texts[out / "results.json"] = results_json(rows)
    if trace:
        texts[out / "trace.csv"] = trace_csv((oc.scenario, oc.design, trials)
                                             for oc, trials in results)
    for path, text in texts.items():
        _atomic_write(path, text)
    return list(texts)


def aggregate_trace(text: str, max_stage2_total: int = 400) -> list[dict]:
    """Recompute the results table from a trace file alone."""
    groups: dict[tuple[str, str], list[dict]] = {}
    for raw in csv.DictReader(io.StringIO(text)):
        groups.setdefault((raw["scenario"], raw["design"]), []).append(raw)
    out = []
    for (scenario, design), rows in groups.items():
        n = len(rows)
        rej = np.array([int(r["rejected"]) for r in rows], dtype=float)
        fut = np.array([int(r["stopped_futility"]) for r in rows], dtype=float)
        enrolled = np.array([int(r["total_enrolled"]) for r in rows], dtype=float)
        maxed = np.array([not int(r["stopped_futility"])
                          and int(r["stage2_total"]) == max_stage2_total for r in rows], dtype=float)
        out.append({"scenario": scenario, "design": design, "replicates": n,
                    "power_pct": 100 * rej.mean(), "average_n": enrolled.mean(),
                    "futility_stop_pct": 100 * fut.mean(), "max_ssr_pct": 100 * maxed.mean()})
    return out


def write_patient_csv(cohort, path=None) -> str:
    records = cohort.to_records() if isinstance(cohort, Cohort) else list(cohort)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PATIENT_COLUMNS)
    for r in records:
        writer.writerow([
            r.id, r.arm.value, repr(r.follow_up_months),
            "" if r.death_time_months is None else repr(r.death_time_months),
            ";".join(repr(t) for t in r.cvh_event_times_months),
            "" if r.functional_response is None else r.functional_response,
        ])
    text = buf.getvalue()
    if path is not None:
        _atomic_write(Path(path), text)
    return text


def read_patient_csv(text: str) -> list[PatientRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != PATIENT_COLUMNS:
        raise ValueError(f"expected columns {PATIENT_COLUMNS}, got {reader.fieldnames}")
    records = []
    for raw in reader:
        records.append(PatientRecord(
            id=int(raw["id"]),
            arm=Arm(raw["arm"]),
            follow_up_months=float(raw["follow_up_months"]),
            death_time_months=float(raw["death_time_months"]) if raw["death_time_months"] else None,
            cvh_event_times_months=tuple(float(t) for t in raw["cvh_event_times"].split(";") if t),
            functional_response=int(raw["functional_response"]) if raw["functional_response"] else None,
        ))
    return records
