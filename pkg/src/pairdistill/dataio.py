"""JSONL dataset I/O.

One UTF-8 JSON object per '\n'-terminated line. Unknown fields ride along on
the record and come back out on write, so files round-trip even across
versions that add fields.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator

from .errors import InputError
from .quantize import DatasetRecord


def read_dataset(path: str | Path) -> Iterator[DatasetRecord]:
    """Stream records from a JSONL file; malformed lines fail loudly."""
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as handle:
        for lineno, raw in enumerate(handle, start=1):
            if not raw.endswith("\n"):
                raise InputError(
                    f"{path}: line {lineno} is not newline-terminated "
                    "(truncated write?)"
                )
            line = raw.strip()
            if not line:
                raise InputError(f"{path}: line {lineno} is empty")
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}: line {lineno} is not valid JSON: {exc}") from exc
            try:
                yield DatasetRecord.from_dict(payload)
            except (InputError, ValueError, TypeError) as exc:
                raise InputError(f"{path}: line {lineno}: {exc}") from exc


def record_line(record: DatasetRecord) -> str:
    return json.dumps(record.as_dict(), ensure_ascii=False) + "\n"


def write_dataset(records: Iterable[DatasetRecord], path: str | Path) -> int:
    """Write records as JSONL; returns the record count."""
    path = Path(path)
    count = 0
    with path.open("w", encoding="utf-8", newline="") as handle:
        for record in records:
            handle.write(record_line(record))
            count += 1
    return count
