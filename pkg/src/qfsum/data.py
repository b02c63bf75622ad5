"""Corpus and prediction file handling (JSON lines, UTF-8).

A corpus record holds an id, a query (possibly empty), one or more
documents, a reference summary, and optionally ISO-8601 dates (one per
document, or a single date applied to all). Prediction records pair an
id with a generated summary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable


@dataclass
class CorpusRecord:
    id: str
    query: str
    documents: list[str]
    summary: str
    dates: list[str | None] = field(default_factory=list)

    def doc_dates(self) -> list[date | None]:
        out: list[date | None] = []
        for d in self.dates:
            try:
                out.append(date.fromisoformat(d) if d else None)
            except ValueError:
                out.append(None)
        return out


def _parse_record(rec: dict, where: str) -> CorpusRecord:
    if not isinstance(rec, dict):
        raise ValueError(f"{where}: record must be a JSON object")
    try:
        rid = str(rec["id"])
        documents = rec["documents"]
        summary = str(rec["summary"])
    except KeyError as exc:
        raise ValueError(f"{where}: missing field {exc}") from exc
    if not isinstance(documents, list) or not documents or \
            not all(isinstance(d, str) for d in documents):
        raise ValueError(f"{where}: 'documents' must be a non-empty array of strings")
    query = str(rec.get("query", "") or "")
    raw_date = rec.get("date")
    if raw_date is None:
        dates: list[str | None] = [None] * len(documents)
    elif isinstance(raw_date, str):
        dates = [raw_date] * len(documents)
    elif isinstance(raw_date, list):
        if len(raw_date) != len(documents):
            raise ValueError(f"{where}: 'date' array must align with 'documents'")
        dates = [str(d) if d else None for d in raw_date]
    else:
        raise ValueError(f"{where}: 'date' must be a string or array of strings")
    return CorpusRecord(id=rid, query=query, documents=list(documents),
                        summary=summary, dates=dates)


def read_corpus(path: str | Path) -> list[CorpusRecord]:
    records: list[CorpusRecord] = []
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"corpus file not found: {path}")
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
        records.append(_parse_record(rec, f"{path}:{lineno}"))
    return records


def write_corpus(path: str | Path, records: Iterable[CorpusRecord]) -> None:
    lines = []
    for r in records:
        obj = {"id": r.id, "query": r.query, "documents": r.documents, "summary": r.summary}
        if any(d is not None for d in r.dates):
            obj["date"] = [d or "" for d in r.dates]
        lines.append(json.dumps(obj, ensure_ascii=False))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_predictions(path: str | Path) -> dict[str, str]:
    """id -> summary; a duplicated id keeps the last record."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
        if not isinstance(rec, dict) or "id" not in rec or "summary" not in rec:
            raise ValueError(f"{path}:{lineno}: prediction records need 'id' and 'summary'")
        out[str(rec["id"])] = str(rec["summary"])
    return out


def write_predictions(path: str | Path, preds: dict[str, str] | Iterable[tuple[str, str]]) -> None:
    items = preds.items() if isinstance(preds, dict) else preds
    lines = [json.dumps({"id": rid, "summary": summary}, ensure_ascii=False)
             for rid, summary in items]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_references(path: str | Path) -> dict[str, str]:
    """References: either prediction-format lines or full corpus records."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
        if not isinstance(rec, dict) or "id" not in rec or "summary" not in rec:
            raise ValueError(f"{path}:{lineno}: reference records need 'id' and 'summary'")
        out[str(rec["id"])] = str(rec["summary"])
    return out
