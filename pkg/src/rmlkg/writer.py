"""Incremental N-Triples output.

The writer keeps, per Predicate Tuple Table, the timestamp of the last triple
it wrote. Each call writes only newer log entries, so no triple reaches the
file twice.
"""

from __future__ import annotations

from typing import Optional

from .structures import PredicateTupleTable
from .terms import Literal, nt_iri, nt_term

__all__ = ["EmissionCursor", "KnowledgeGraphCreator", "Literal", "emit_incremental",
           "ntriples_line", "serialize_ntriples"]


def ntriples_line(subject: str, predicate: str, obj: str) -> str:
    """Join three already-serialized terms into one N-Triples line."""
    return f"{subject} {predicate} {obj} .\n"


def serialize_ntriples(subject: str, predicate: str, obj) -> str:
    """N-Triples line for an IRI subject, IRI predicate and IRI-or-:class:`Literal` object.

    Raises :class:`~rmlkg.terms.TermError` for IRIs that cannot be written.
    """
    return ntriples_line(nt_iri(subject), nt_iri(predicate), nt_term(obj))


class EmissionCursor:
    """Last-written timestamp per PTT."""

    def __init__(self):
        self._positions: dict = {}

    def get(self, ptt: PredicateTupleTable) -> int:
        return self._positions.get(ptt, 0)

    def advance(self, ptt: PredicateTupleTable, timestamp: int) -> None:
        current = self._positions.get(ptt, 0)
        if timestamp < current:
            raise ValueError("emission cursor cannot move backwards")
        if timestamp > ptt.last_timestamp:
            raise ValueError("emission cursor ahead of the table log")
        self._positions[ptt] = timestamp


def emit_incremental(ptt: PredicateTupleTable, cursor: EmissionCursor, sink,
                     predicate_term: Optional[str] = None) -> int:
    """Append entries newer than the cursor to ``sink``; return the number of lines.

    The cursor only moves after ``sink.write`` returns, so a failed write can be
    retried without duplicating or losing lines.
    """
    start = cursor.get(ptt)
    end = ptt.last_timestamp
    if end == start:
        return 0
    p = predicate_term or nt_iri(ptt.predicate)
    lines = "".join(f"{s} {p} {o} .\n" for _, s, o in ptt.entries_since(start))
    sink.write(lines)
    cursor.advance(ptt, end)
    return end - start


class KnowledgeGraphCreator:
    """Streams newly accepted triples from PTTs into an output sink."""

    def __init__(self, sink=None):
        self.sink = sink
        self.cursor = EmissionCursor()
        self._predicates: dict = {}
        self.lines_written = 0

    def emit(self, ptt: PredicateTupleTable) -> int:
        """Write whatever ``ptt`` accepted since the last call; return the line count."""
        p = self._predicates.get(ptt)
        if p is None:
            p = self._predicates[ptt] = nt_iri(ptt.predicate)
        if self.sink is None:
            n = self._skip(ptt)
        else:
            n = emit_incremental(ptt, self.cursor, self.sink, p)
        self.lines_written += n
        return n

    def _skip(self, ptt: PredicateTupleTable) -> int:
        start = self.cursor.get(ptt)
        self.cursor.advance(ptt, ptt.last_timestamp)
        return ptt.last_timestamp - start

    def flush(self) -> None:
        flush = getattr(self.sink, "flush", None)
        if flush is not None:
            flush()
