"""Predicate Tuple Tables, Predicate Join Tuple Tables and operation counters."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Iterator, Optional, Sequence

from .mapping import TriplesMap
from .sources import project_attributes
from .terms import compile_term


def encode_key(values: Sequence[str]) -> str:
    """Injective string encoding of a value tuple (each value length-prefixed)."""
    return "".join(f"{len(v)}:{v}" for v in values)


def encode_pair(subject: str, obj: str) -> str:
    # the object is last, so only the subject needs a length prefix
    return f"{len(subject)}:{subject}{obj}"


@dataclass
class CostCounters:
    ptt_lookups: int = 0
    ptt_insertions: int = 0
    kg_emissions: int = 0
    pjtt_insertions: int = 0
    pjtt_reads: int = 0
    pjtt_probes: int = 0
    pairwise_comparisons: int = 0
    sort_comparisons: int = 0
    triples_generated: int = 0
    skipped: int = 0

    def optimized_ops(self) -> int:
        return (self.pjtt_reads + self.pjtt_insertions + self.pjtt_probes
                + self.ptt_lookups + self.ptt_insertions + self.kg_emissions)

    def naive_ops(self) -> int:
        return (self.triples_generated + self.kg_emissions
                + self.sort_comparisons + self.pairwise_comparisons)

    def total_ops(self, mode: str = "optimized") -> int:
        return self.optimized_ops() if mode == "optimized" else self.naive_ops()

    def copy(self) -> "CostCounters":
        return CostCounters(**asdict(self))

    def __sub__(self, other: "CostCounters") -> "CostCounters":
        return CostCounters(**{f.name: getattr(self, f.name) - getattr(other, f.name)
                               for f in fields(self)})

    def __add__(self, other: "CostCounters") -> "CostCounters":
        return CostCounters(**{f.name: getattr(self, f.name) + getattr(other, f.name)
                               for f in fields(self)})

    def as_dict(self) -> dict:
        return asdict(self)


class Insert(str, enum.Enum):
    NEW = "NEW"
    DUPLICATE = "DUPLICATE"


class PredicateTupleTable:
    """Triples already produced for one predicate, plus an append-only emission log.

    Timestamps are 1-based log positions, so they increase strictly and the
    log replays to exactly the entry set.
    """

    __slots__ = ("predicate", "entries", "log")

    def __init__(self, predicate: str):
        self.predicate = predicate
        self.entries: set = set()
        self.log: list = []

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, pair) -> bool:
        return encode_pair(*pair) in self.entries

    @property
    def last_timestamp(self) -> int:
        return len(self.log)

    def add(self, subject: str, obj: str) -> bool:
        key = encode_pair(subject, obj)
        if key in self.entries:
            return False
        self.entries.add(key)
        self.log.append((subject, obj))
        return True

    def entries_since(self, timestamp: int) -> Iterator[tuple]:
        """``(timestamp, subject, object)`` for log entries newer than ``timestamp``."""
        for i in range(timestamp, len(self.log)):
            s, o = self.log[i]
            yield i + 1, s, o


def ptt_check_insert(t: PredicateTupleTable, subject: str, obj: str,
                     counters: Optional[CostCounters] = None) -> Insert:
    new = t.add(subject, obj)
    if counters is not None:
        counters.ptt_lookups += 1
        if new:
            counters.ptt_insertions += 1
    return Insert.NEW if new else Insert.DUPLICATE


_EMPTY: frozenset = frozenset()


class PredicateJoinTupleTable:
    """Join-key values of a parent triples map -> the parent subjects carrying them."""

    __slots__ = ("parent_map_id", "join_attrs", "index", "records_indexed", "records_skipped")

    def __init__(self, parent_map_id: str, join_attrs: Sequence[str]):
        self.parent_map_id = parent_map_id
        self.join_attrs = tuple(join_attrs)
        self.index: dict = {}
        self.records_indexed = 0
        self.records_skipped = 0

    @property
    def identifier(self) -> str:
        return f"{self.parent_map_id}_{'_'.join(self.join_attrs)}"

    def __len__(self) -> int:
        return len(self.index)

    def insert(self, key_values: Sequence[str], subject: str) -> None:
        key = encode_key(key_values)
        bucket = self.index.get(key)
        if bucket is None:
            self.index[key] = {subject}
        else:
            bucket.add(subject)

    def get(self, key_values: Sequence[str]):
        return self.index.get(encode_key(key_values), _EMPTY)


def pjtt_build(parent: TriplesMap, stream: Iterable, join_attrs: Sequence[str],
               counters: Optional[CostCounters] = None) -> PredicateJoinTupleTable:
    """Index a parent stream on ``join_attrs``.

    Each indexed record costs one read and one insertion. Records whose key
    values or subject are missing are skipped and only tallied.
    """
    table = PredicateJoinTupleTable(parent.id, join_attrs)
    subject_of = compile_term(parent.subject_map)
    attrs = table.join_attrs
    index = table.index
    indexed = skipped = 0
    for record in stream:
        bindings = record.bindings
        values = project_attributes(bindings, attrs)
        subject = subject_of(bindings) if values is not None else None
        if subject is None:
            skipped += 1
            continue
        key = encode_key(values)
        bucket = index.get(key)
        if bucket is None:
            index[key] = {subject}
        else:
            bucket.add(subject)
        indexed += 1
    table.records_indexed = indexed
    table.records_skipped = skipped
    if counters is not None:
        counters.pjtt_reads += indexed
        counters.pjtt_insertions += indexed
        counters.skipped += skipped
    return table


def pjtt_probe(p: PredicateJoinTupleTable, key_values: Sequence[str],
               counters: Optional[CostCounters] = None):
    """Parent subjects whose join values equal ``key_values`` (shared set; do not mutate)."""
    if len(key_values) != len(p.join_attrs):
        raise ValueError(f"expected {len(p.join_attrs)} key values, got {len(key_values)}")
    if counters is not None:
        counters.pjtt_probes += 1
    return p.get(key_values)
