"""Record streams over CSV and JSON logical sources."""

from __future__ import annotations

import csv
import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

from .mapping import LogicalSource, ReferenceFormulation


class SourceError(Exception):
    """A logical source could not be opened or read."""


@dataclass(slots=True)
class Record:
    bindings: dict
    ordinal: int = 0

    def get(self, attr, default=None):
        return self.bindings.get(attr, default)


@dataclass
class SourceStats:
    """Per-stream telemetry; ``max_record_chars`` bounds what the reader holds at once."""
    records: int = 0
    max_record_chars: int = 0
    skipped_blank: int = 0
    path: Optional[str] = None
    extra: dict = field(default_factory=dict)


def resolve_path(ls: LogicalSource, base_dir: Optional[str] = None) -> Path:
    p = Path(ls.source_path)
    if not p.is_absolute() and base_dir:
        p = Path(base_dir) / p
    return p


def open_source(ls: LogicalSource, base_dir: Optional[str] = None,
                stats: Optional[SourceStats] = None) -> Iterator[Record]:
    """Yield the records of ``ls`` in file order."""
    path = resolve_path(ls, base_dir)
    if not path.is_file():
        raise SourceError(f"source file not found: {path}")
    if stats is not None:
        stats.path = str(path)
    if ls.reference_formulation is ReferenceFormulation.CSV:
        return _csv_records(path, stats)
    return _json_records(path, ls.iterator, stats)


def _csv_records(path: Path, stats: Optional[SourceStats]) -> Iterator[Record]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, strict=True)
        try:
            header = next(reader)
        except StopIteration:
            return
        except (csv.Error, UnicodeDecodeError) as exc:
            raise SourceError(f"{path}: {exc}") from None
        if len(set(header)) != len(header):
            raise SourceError(f"{path}: duplicate column names in header {header}")
        width = len(header)
        ordinal = 0
        try:
            for row in reader:
                if len(row) != width:
                    if not row:
                        if stats is not None:
                            stats.skipped_blank += 1
                        continue
                    raise SourceError(f"{path}, line {reader.line_num}: expected {width} fields, "
                                      f"found {len(row)}")
                if stats is not None:
                    stats.records += 1
                    n = sum(map(len, row))
                    if n > stats.max_record_chars:
                        stats.max_record_chars = n
                yield Record(dict(zip(header, row)), ordinal)
                ordinal += 1
        except (csv.Error, UnicodeDecodeError) as exc:
            raise SourceError(f"{path}, line {reader.line_num}: {exc}") from None


_ITER_STEP = re.compile(r"\.([^.\[\]]+)|\[\*\]|\['([^']+)'\]|\[(\d+)\]")


def parse_iterator(expr: str) -> list:
    """Parse the ``$.a.b[*]`` JSONPath subset into steps: names, ints, or ``'*'``."""
    if not expr.startswith("$"):
        raise SourceError(f"iterator must start with '$': {expr!r}")
    steps: list = []
    pos = 1
    while pos < len(expr):
        m = _ITER_STEP.match(expr, pos)
        if m is None:
            raise SourceError(f"unsupported iterator syntax at {expr[pos:]!r} in {expr!r}")
        if m.group(1) is not None:
            steps.append(m.group(1))
        elif m.group(2) is not None:
            steps.append(m.group(2))
        elif m.group(3) is not None:
            steps.append(int(m.group(3)))
        else:
            steps.append("*")
        pos = m.end()
    return steps


def _select(doc, steps: Sequence, expr: str) -> list:
    nodes = [doc]
    for step in steps:
        nxt = []
        for node in nodes:
            if step == "*":
                if not isinstance(node, list):
                    raise SourceError(f"iterator {expr!r}: [*] applied to a non-array")
                nxt.extend(node)
            elif isinstance(step, int):
                if isinstance(node, list) and step < len(node):
                    nxt.append(node[step])
            elif isinstance(node, dict) and step in node:
                nxt.append(node[step])
        nodes = nxt
    if not steps or steps[-1] != "*":
        if not all(isinstance(n, list) for n in nodes):
            raise SourceError(f"iterator {expr!r} does not select an array")
        nodes = [item for n in nodes for item in n]
    return nodes


def _scalar(value) -> Optional[str]:
    if value is None:
        return None
    if value is True:
        return "true"
    if value is False:
        return "false"
    return str(value)


def flatten(obj: dict, prefix: str = "", out: Optional[dict] = None) -> dict:
    """Scalar fields of a JSON object; nested objects become dotted keys."""
    out = {} if out is None else out
    for key, value in obj.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flatten(value, name + ".", out)
        elif isinstance(value, list):
            continue
        else:
            s = _scalar(value)
            if s is not None:
                out[name] = s
    return out


def _json_records(path: Path, iterator: str, stats: Optional[SourceStats]) -> Iterator[Record]:
    steps = parse_iterator(iterator)
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise SourceError(f"{path}: invalid JSON: {exc}") from None
    items = _select(doc, steps, iterator)
    for ordinal, item in enumerate(items):
        if not isinstance(item, dict):
            raise SourceError(f"{path}: iterator {iterator!r} selected a non-object item")
        rec = Record(flatten(item), ordinal)
        if stats is not None:
            stats.records += 1
        yield rec


def project_attributes(r, attrs: Sequence[str]) -> Optional[list]:
    """Values of ``attrs`` in order, or ``None`` if any is absent or empty."""
    bindings = getattr(r, "bindings", r)
    out = []
    for a in attrs:
        v = bindings.get(a)
        if not v:
            return None
        out.append(v)
    return out


def count_csv_records(path: os.PathLike) -> int:
    with open(path, newline="", encoding="utf-8") as fh:
        return max(sum(1 for row in csv.reader(fh) if row) - 1, 0)
