"""CSV and JSON-lines writers.

Every file opens with a header that carries the config hash.  Run times are
left out unless asked for, so re-running a spec reproduces the file byte for
byte.
"""

from __future__ import annotations

import csv
import io
import json
import math
from typing import Iterable, TextIO

import numpy as np

from .harness import ExperimentReport

BASE_COLUMNS = ["cell", "n", "t", "est_mean", "est_var", "ks_stat", "tv_stat", "threshold", "seed", "config_hash"]


def _plain(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        v = float(v)
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return [_plain(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    return v


def _cell(v) -> str:
    v = _plain(v)
    if v is None:
        return ""
    if isinstance(v, (list, dict)):
        return json.dumps(v, separators=(",", ":"))
    return repr(v) if isinstance(v, float) else str(v)


def report_header(rep: ExperimentReport) -> dict:
    return {"kind": rep.spec.kind.value, "config_hash": rep.spec.config_hash(), "seed": rep.spec.seed,
            "spec": _plain(rep.spec.to_dict())}


def report_rows(rep: ExperimentReport, timings: bool = False) -> list[dict]:
    out = []
    for r in rep.rows:
        d = {c: getattr(r, c) for c in BASE_COLUMNS}
        if timings:
            d["runtime"] = r.runtime
        d.update(r.extra)
        out.append(_plain(d))
    return out


def write_report_csv(rep: ExperimentReport, fh: TextIO, timings: bool = False) -> None:
    rows = report_rows(rep, timings)
    extra = sorted({k for r in rows for k in r} - set(BASE_COLUMNS) - {"runtime"})
    cols = BASE_COLUMNS + (["runtime"] if timings else []) + extra
    fh.write(f"# kind={rep.spec.kind.value} config_hash={rep.spec.config_hash()} seed={rep.spec.seed}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in cols])
    for name, ok in rep.verdicts.items():
        fh.write(f"# verdict {name}={'PASS' if ok else 'FAIL'}\n")
    for note in rep.notes:
        fh.write(f"# note {note}\n")


def write_report_jsonl(rep: ExperimentReport, fh: TextIO, timings: bool = False) -> None:
    fh.write(json.dumps({"header": report_header(rep)}, sort_keys=True) + "\n")
    for r in report_rows(rep, timings):
        fh.write(json.dumps(r, sort_keys=True) + "\n")
    fh.write(json.dumps({"verdicts": rep.verdicts, "notes": rep.notes}, sort_keys=True) + "\n")


def write_report(rep: ExperimentReport, fh: TextIO, fmt: str = "csv", timings: bool = False) -> None:
    if fmt == "csv":
        write_report_csv(rep, fh, timings)
    elif fmt == "jsonl":
        write_report_jsonl(rep, fh, timings)
    else:
        raise ValueError(f"unknown format {fmt!r}")


def report_text(rep: ExperimentReport, fmt: str = "csv", timings: bool = False) -> str:
    buf = io.StringIO()
    write_report(rep, buf, fmt, timings)
    return buf.getvalue()


def write_records(records: Iterable[dict], fh: TextIO, header: dict, fmt: str = "jsonl") -> None:
    """Flat records (one per replica or per cell) behind a hash-bearing header."""
    records = [_plain(r) for r in records]
    if fmt == "jsonl":
        fh.write(json.dumps({"header": _plain(header)}, sort_keys=True) + "\n")
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
        return
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    fh.write("# " + " ".join(f"{k}={_cell(v)}" for k, v in header.items()) + "\n")
    cols = list(records[0]) if records else []
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(cols)
    for r in records:
        w.writerow([_cell(r.get(c)) for c in cols])
