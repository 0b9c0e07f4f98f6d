"""UTF-8 JSON Lines I/O with atomic writes.

Every data file in this package is line-delimited JSON: one object per line,
LF endings, keys sorted on write so repeated runs produce identical bytes.
Writers go through a temp file plus os.replace; readers attach 1-based line
numbers to parse failures.
"""

from __future__ import annotations

import json
import os
import tempfile
from collections.abc import Iterable, Iterator
from pathlib import Path
from typing import Any

from .errors import ParseError


def dumps_record(obj: Any) -> str:
    """Serialize one record in the package's canonical form (no newline)."""
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def read_records(path: str | Path) -> Iterator[tuple[int, dict[str, Any]]]:
    """Yield (line_number, record) pairs; blank lines are skipped.

    Raises ParseError with the offending line number for invalid JSON or for
    a line whose value is not an object.
    """
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from exc
            if not isinstance(record, dict):
                raise ParseError(
                    f"expected an object, got {type(record).__name__}", line=lineno
                )
            yield lineno, record


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write text via a sibling temp file and os.replace; never partial."""
    path = Path(path)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise


def write_records(path: str | Path, records: Iterable[Any]) -> int:
    """Atomically write records as JSON Lines; returns the number written."""
    lines = [dumps_record(r) for r in records]
    body = "".join(line + "\n" for line in lines)
    atomic_write_text(path, body)
    return len(lines)
