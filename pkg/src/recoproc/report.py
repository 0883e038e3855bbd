"""Report rendering: CSV tables, JSON-lines records, markdown summary, PNG grids.

Layout under ``<out>/<experiment>/``::

    table.csv  records.jsonl  summary.md  grids/*.png  [extra tables/figures]
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import plotting
from .errors import ConfigError
from .harness import EvalRecord
from .metrics import format_psnr, mean_psnr, parse_psnr, psnr, ssim

BASE_COLUMNS = ["processor", "transformer", "recognizer", "task", "psnr", "ssim", "acc", "n_samples"]


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return format_psnr(value) if math.isinf(value) else repr(value)
    return str(value)


def _tag_columns(records):
    return sorted({k for r in records for k in r.tags})


def record_row(rec: EvalRecord, tag_cols) -> Dict[str, str]:
    row = {
        "processor": rec.processor,
        "transformer": rec.transformer or "",
        "recognizer": rec.recognizer,
        "task": rec.task,
        "psnr": format_psnr(rec.psnr),
        "ssim": repr(float(rec.ssim)),
        "acc": repr(float(rec.accuracy)),
        "n_samples": str(rec.n_samples),
    }
    for k in tag_cols:
        row[f"tag:{k}"] = _fmt(rec.tags.get(k))
    return row


def write_records_csv(records: Sequence[EvalRecord], path) -> Path:
    tag_cols = _tag_columns(records)
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=BASE_COLUMNS + [f"tag:{k}" for k in tag_cols],
                                lineterminator="\n")
        writer.writeheader()
        for rec in records:
            writer.writerow(record_row(rec, tag_cols))
    return path


def _parse_tag(text):
    if text == "":
        return None
    if text in ("true", "false"):
        return text == "true"
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def read_records_csv(path) -> List[EvalRecord]:
    out = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            tags = {k[4:]: _parse_tag(v) for k, v in row.items() if k.startswith("tag:") and v != ""}
            out.append(EvalRecord(
                processor=row["processor"],
                transformer=row["transformer"] or None,
                recognizer=row["recognizer"],
                task=row["task"],
                psnr=parse_psnr(row["psnr"]),
                ssim=float(row["ssim"]),
                accuracy=float(row["acc"]),
                n_samples=int(row["n_samples"]),
                tags=tags,
            ))
    return out


def write_records_jsonl(records, path) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        for rec in records:
            d = rec.to_dict()
            d["psnr"] = format_psnr(rec.psnr) if math.isinf(rec.psnr) else rec.psnr
            fh.write(json.dumps(d, sort_keys=True) + "\n")
    return path


def read_records_jsonl(path) -> List[EvalRecord]:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            d = json.loads(line)
            d["psnr"] = parse_psnr(d["psnr"]) if isinstance(d["psnr"], str) else d["psnr"]
            out.append(EvalRecord(**d))
    return out


def write_table_csv(rows: Sequence[dict], path) -> Path:
    """Generic table (e.g. a transfer matrix) with columns from the first row."""
    path = Path(path)
    cols = list(rows[0])
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: _fmt(v) for k, v in r.items()})
    return path


def markdown_table(rows: Sequence[dict]) -> str:
    cols = list(rows[0])
    lines = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
    for r in rows:
        cells = []
        for c in cols:
            v = r.get(c)
            cells.append(f"{v:.4f}" if isinstance(v, float) and not math.isinf(v) else _fmt(v))
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines)


def _summary_rows(records):
    return [{
        "processor": r.processor,
        "transformer": r.transformer or "-",
        "recognizer": r.recognizer,
        "task": r.task,
        "PSNR/SSIM/Acc": f"{format_psnr(r.psnr) if math.isinf(r.psnr) else f'{r.psnr:.2f}'}"
                         f"/{r.ssim:.3f}/{100 * r.accuracy:.1f}",
        "n": r.n_samples,
    } for r in records]


def render_report(records: Sequence[EvalRecord], out_dir, experiment: str = "eval",
                  tables: Optional[Dict[str, Sequence[dict]]] = None,
                  grids: Optional[Dict[str, object]] = None,
                  figures: Optional[Dict[str, object]] = None) -> Path:
    """Write every artefact for one experiment and return its directory.

    ``grids`` and ``figures`` map file stems to matplotlib figures;
    ``tables`` map file stems to lists of row dicts.
    """
    if not records:
        raise ConfigError("render_report needs at least one record")
    root = Path(out_dir) / experiment
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {root}: {exc}") from exc
    write_records_csv(records, root / "table.csv")
    write_records_jsonl(records, root / "records.jsonl")
    parts = [f"# {experiment}", "", "## Records", "", markdown_table(_summary_rows(records)), ""]
    for name, rows in (tables or {}).items():
        if rows:
            write_table_csv(rows, root / f"{name}.csv")
            parts += [f"## {name}", "", markdown_table(rows), ""]
    if grids:
        (root / "grids").mkdir(exist_ok=True)
        for name, fig in grids.items():
            plotting.save(fig, root / "grids" / f"{name}.png")
            parts += [f"![{name}](grids/{name}.png)", ""]
    for name, fig in (figures or {}).items():
        plotting.save(fig, root / f"{name}.png")
        parts += [f"![{name}]({name}.png)", ""]
    (root / "summary.md").write_text("\n".join(parts))
    return root


def pick_examples(labels, plain_preds, ra_preds, n=3):
    """Indices where plain processing is misclassified and RA is right, padded in order."""
    labels = np.asarray(labels)
    wins = np.flatnonzero((np.asarray(plain_preds) != labels) & (np.asarray(ra_preds) == labels))
    rest = [i for i in range(len(labels)) if i not in set(wins.tolist())]
    return (list(wins[:n]) + rest)[:n]


def sweep_grid(targets, inputs, outputs_by_lambda, preds_by_lambda, labels, class_names=None,
               input_title="Input"):
    """Target | input | one column per lambda (lambda 0 is shown as plain processing).

    ``outputs_by_lambda`` is an ordered list of ``(lambda, images)``.
    """

    def name(c):
        return class_names[c] if class_names else str(int(c))

    columns = [targets, inputs]
    titles = ["Target", input_title]
    captions = [[f"label: {name(l)}" for l in labels], None]
    for (lam, images), (_, preds) in zip(outputs_by_lambda, preds_by_lambda):
        columns.append(images)
        titles.append("Plain" if lam == 0 else f"RA {lam:g}")
        captions.append([
            f"{psnr(o, t):.2f}/{ssim(o, t):.3f}/{name(p)}" for o, t, p in zip(images, targets, preds)
        ])
    return plotting.comparison_grid(columns, titles, captions)
