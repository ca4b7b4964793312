"""Execution of SOM / ORM / OJM operators in optimized and naive mode.

Optimized mode deduplicates through Predicate Tuple Tables and joins through
Predicate Join Tuple Tables. Naive mode materializes every generated triple,
sorts with a counted merge sort, and joins with a nested loop.

Counting: one operation is one structure read, one structure insertion or one
emission to the graph. Under that rule an optimized SOM/ORM costs
``N_p + 2*S_p`` and an optimized OJM ``2*N_parent + N_child + N_p + 2*S_p``.
"""

from __future__ import annotations

import math
import time
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Optional, Sequence

from .mapping import (RDF_TYPE, ClassificationError, DataIntegrationSystem, MappingError,
                      OperatorKind, PredicateObjectMap, TriplesMap, classify_pom)
from .sources import SourceError, open_source, project_attributes
from .structures import (CostCounters, PredicateJoinTupleTable, PredicateTupleTable,
                         pjtt_build)
from .terms import TermError, compile_term, nt_iri
from .writer import KnowledgeGraphCreator

OPTIMIZED = "optimized"
NAIVE = "naive"
MODES = (OPTIMIZED, NAIVE)


class ResourceError(RuntimeError):
    pass


@dataclass(frozen=True)
class OperatorPlan:
    kind: OperatorKind
    child: TriplesMap
    pom: PredicateObjectMap
    parent: Optional[TriplesMap] = None
    mode: str = OPTIMIZED

    def __post_init__(self):
        if (self.parent is not None) != (self.kind in (OperatorKind.ORM, OperatorKind.OJM)):
            raise ValueError(f"{self.kind.value} plan: parent must be given iff the operator references one")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def predicate(self) -> str:
        return self.pom.predicate


def make_plan(child: TriplesMap, pom: PredicateObjectMap, parent: Optional[TriplesMap] = None,
              mode: str = OPTIMIZED) -> OperatorPlan:
    kind = classify_pom(pom, child, parent)
    return OperatorPlan(kind, child, pom, parent if kind is not OperatorKind.SOM else None, mode)


def plans_for(dis: DataIntegrationSystem, tm: TriplesMap, mode: str = OPTIMIZED) -> list:
    plans = []
    for pom in tm.predicate_object_maps:
        parent_id = getattr(pom.object, "parent", None)
        parent = dis.get(parent_id) if parent_id is not None else None
        plans.append(make_plan(tm, pom, parent, mode))
    return plans


# --------------------------------------------------------------------------
# Per-record steps shared by the single-operator entry points and run_system


class _Step:
    """Compiled form of one plan: turns a child record into object terms."""

    __slots__ = ("plan", "kind", "predicate", "object_fn", "child_attrs", "pjtt",
                 "generated", "emitted", "probes", "skipped")

    def __init__(self, plan: OperatorPlan, pjtt: Optional[PredicateJoinTupleTable] = None):
        self.plan = plan
        self.kind = plan.kind
        self.predicate = plan.predicate
        obj = plan.pom.object
        self.object_fn = None
        self.child_attrs = ()
        if self.kind is OperatorKind.SOM:
            self.object_fn = compile_term(obj.term_map)
        elif self.kind is OperatorKind.ORM:
            # the parent subject over the same record
            self.object_fn = compile_term(plan.parent.subject_map)
        else:
            self.child_attrs = obj.child_attrs
        self.pjtt = pjtt
        self.generated = self.emitted = self.probes = self.skipped = 0

    def stats(self) -> dict:
        return {"map": self.plan.child.id, "predicate": self.predicate, "kind": self.kind.value,
                "generated": self.generated, "emitted": self.emitted,
                "n_child": self.probes if self.kind is OperatorKind.OJM else None,
                "pjtt": self.pjtt.identifier if self.pjtt is not None else None,
                "skipped": self.skipped}


def _optimized_record(step: _Step, subject: str, bindings: dict, ptt: PredicateTupleTable,
                      kg: KnowledgeGraphCreator, counters: CostCounters) -> None:
    if step.kind is OperatorKind.OJM:
        values = project_attributes(bindings, step.child_attrs)
        if values is None:
            step.skipped += 1
            counters.skipped += 1
            return
        counters.pjtt_probes += 1
        step.probes += 1
        matches = step.pjtt.get(values)
        for obj in matches:
            counters.ptt_lookups += 1
            if ptt.add(subject, obj):
                counters.ptt_insertions += 1
                n = kg.emit(ptt)
                counters.kg_emissions += n
                step.emitted += n
        n = len(matches)
        counters.triples_generated += n
        step.generated += n
        return
    obj = step.object_fn(bindings)
    if obj is None:
        step.skipped += 1
        counters.skipped += 1
        return
    counters.triples_generated += 1
    counters.ptt_lookups += 1
    step.generated += 1
    if ptt.add(subject, obj):
        counters.ptt_insertions += 1
        n = kg.emit(ptt)
        counters.kg_emissions += n
        step.emitted += n


def _as_creator(writer) -> KnowledgeGraphCreator:
    if writer is None:
        return KnowledgeGraphCreator(None)
    if isinstance(writer, KnowledgeGraphCreator):
        return writer
    raise TypeError("writer must be a KnowledgeGraphCreator or None")


def _exec_single(plan: OperatorPlan, stream: Iterable, ptt: PredicateTupleTable, writer,
                 counters: CostCounters, pjtt=None) -> int:
    if plan.mode != OPTIMIZED:
        raise ValueError("operator entry points run in optimized mode; use naive_execute")
    if ptt.predicate != plan.predicate:
        raise ValueError(f"PTT for {ptt.predicate} given to a plan for {plan.predicate}")
    kg = _as_creator(writer)
    step = _Step(plan, pjtt)
    subject_fn = compile_term(plan.child.subject_map)
    for record in stream:
        bindings = record.bindings
        subject = subject_fn(bindings)
        if subject is None:
            step.skipped += 1
            counters.skipped += 1
            continue
        _optimized_record(step, subject, bindings, ptt, kg, counters)
    return step.emitted


def exec_som(plan: OperatorPlan, stream: Iterable, ptt: PredicateTupleTable, writer=None,
             counters: Optional[CostCounters] = None) -> int:
    """Run a simple object map; returns the number of triples emitted."""
    if plan.kind is not OperatorKind.SOM:
        raise ValueError(f"exec_som given a {plan.kind.value} plan")
    return _exec_single(plan, stream, ptt, writer, counters if counters is not None else CostCounters())


def exec_orm(plan: OperatorPlan, stream: Iterable, ptt: PredicateTupleTable, writer=None,
             counters: Optional[CostCounters] = None) -> int:
    if plan.kind is not OperatorKind.ORM:
        raise ValueError(f"exec_orm given a {plan.kind.value} plan")
    if plan.child.logical_source != plan.parent.logical_source:
        raise ClassificationError("ORM requires child and parent over the same logical source")
    return _exec_single(plan, stream, ptt, writer, counters if counters is not None else CostCounters())


def exec_ojm(plan: OperatorPlan, child_stream: Iterable, pjtt: PredicateJoinTupleTable,
             ptt: PredicateTupleTable, writer=None, counters: Optional[CostCounters] = None) -> int:
    """Index join of the child stream against a prebuilt PJTT of the parent."""
    if plan.kind is not OperatorKind.OJM:
        raise ValueError(f"exec_ojm given a {plan.kind.value} plan")
    obj = plan.pom.object
    if pjtt.parent_map_id != obj.parent or pjtt.join_attrs != obj.parent_attrs:
        raise ValueError(f"PJTT {pjtt.identifier} does not match the plan's join condition")
    return _exec_single(plan, child_stream, ptt, writer,
                        counters if counters is not None else CostCounters(), pjtt)


# --------------------------------------------------------------------------
# Naive mode


def merge_sort_count(items: Sequence) -> tuple:
    """Stable top-down merge sort; returns ``(sorted_list, comparisons)``."""
    comparisons = 0

    def sort(a):
        nonlocal comparisons
        n = len(a)
        if n <= 1:
            return list(a)
        mid = n // 2
        left = sort(a[:mid])
        right = sort(a[mid:])
        out = []
        append = out.append
        i = j = 0
        nl, nr = len(left), len(right)
        c = 0
        while i < nl and j < nr:
            c += 1
            if right[j] < left[i]:
                append(right[j])
                j += 1
            else:
                append(left[i])
                i += 1
        comparisons += c
        if i < nl:
            out.extend(left[i:])
        if j < nr:
            out.extend(right[j:])
        return out

    return sort(items), comparisons


def sort_dedup(items: Sequence, counters: Optional[CostCounters] = None) -> list:
    """Merge sort then drop adjacent repeats; both phases' comparisons are counted."""
    ordered, comparisons = merge_sort_count(items)
    unique = []
    prev = None
    for k, item in enumerate(ordered):
        if k:
            comparisons += 1
            if item == prev:
                continue
        unique.append(item)
        prev = item
    if counters is not None:
        counters.sort_comparisons += comparisons
    return unique


def _materialize(plan: OperatorPlan, streams: Sequence, counters: CostCounters,
                 out: Optional[list] = None) -> list:
    """All triples (with repeats) a plan generates, as N-Triples lines."""
    generated = [] if out is None else out
    start = len(generated)
    append = generated.append
    p = nt_iri(plan.predicate)
    subject_fn = compile_term(plan.child.subject_map)
    child_stream = streams[0]
    try:
        if plan.kind is OperatorKind.OJM:
            obj = plan.pom.object
            parent_subject = compile_term(plan.parent.subject_map)
            parent_rows = []
            for record in streams[1]:
                values = project_attributes(record.bindings, obj.parent_attrs)
                ps = parent_subject(record.bindings) if values is not None else None
                if ps is None:
                    counters.skipped += 1
                    continue
                parent_rows.append((tuple(values), ps))
            n_parent = len(parent_rows)
            for record in child_stream:
                b = record.bindings
                s = subject_fn(b)
                values = project_attributes(b, obj.child_attrs) if s is not None else None
                if values is None:
                    counters.skipped += 1
                    continue
                key = tuple(values)
                counters.pairwise_comparisons += n_parent
                prefix = f"{s} {p} "
                for pk, ps in parent_rows:
                    if pk == key:
                        append(prefix + ps + " .\n")
        else:
            object_fn = compile_term(plan.pom.object.term_map if plan.kind is OperatorKind.SOM
                                     else plan.parent.subject_map)
            for record in child_stream:
                b = record.bindings
                s = subject_fn(b)
                o = object_fn(b) if s is not None else None
                if o is None:
                    counters.skipped += 1
                    continue
                append(f"{s} {p} {o} .\n")
    except MemoryError:
        n = len(generated) - start
        generated.clear()
        raise ResourceError(f"out of memory after materializing {n} triples for "
                            f"{plan.child.id} / {plan.predicate}") from None
    counters.triples_generated += len(generated) - start
    return generated


def naive_execute(plan: OperatorPlan, streams: Sequence, counters: Optional[CostCounters] = None) -> list:
    """Generate everything, then sort and deduplicate.

    ``streams`` is ``[child]`` for SOM/ORM and ``[child, parent]`` for OJM. The
    result is the sorted duplicate-free list of N-Triples lines.
    """
    counters = counters if counters is not None else CostCounters()
    if plan.kind is OperatorKind.OJM and len(streams) < 2:
        raise ValueError("naive OJM needs child and parent streams")
    generated = _materialize(plan, streams, counters)
    unique = sort_dedup(generated, counters)
    counters.kg_emissions += len(unique)
    return unique


# --------------------------------------------------------------------------
# Cost predictions


class OpsPrediction(NamedTuple):
    low: float
    high: float

    @property
    def exact(self) -> int:
        if self.low != self.high:
            raise ValueError("prediction is a band, not an exact count")
        return int(self.low)

    def contains(self, value: float) -> bool:
        return self.low <= value <= self.high

    def __add__(self, other):
        return OpsPrediction(self.low + other[0], self.high + other[1])


def sort_band(n: int) -> OpsPrediction:
    """Accepted range for counted merge-sort deduplication of ``n`` items."""
    if n <= 1:
        return OpsPrediction(0, n)
    nlog = n * math.log2(n)
    return OpsPrediction(0.5 * nlog, nlog + n)


def predicted_ops(kind, mode: str, n_p: int, s_p: int, n_parent: Optional[int] = None,
                  n_child: Optional[int] = None) -> OpsPrediction:
    kind = OperatorKind(kind)
    if min(n_p, s_p) < 0 or any(v is not None and v < 0 for v in (n_parent, n_child)):
        raise ValueError("counts must be non-negative")
    if s_p > n_p:
        raise ValueError("S_p cannot exceed N_p")
    is_join = kind is OperatorKind.OJM
    if is_join and (n_parent is None or n_child is None):
        raise ValueError("OJM predictions need N_parent and N_child")
    if not is_join and (n_parent is not None or n_child is not None):
        raise ValueError(f"{kind.value} takes no join cardinalities")
    if mode == OPTIMIZED:
        ops = n_p + 2 * s_p + (2 * n_parent + n_child if is_join else 0)
        return OpsPrediction(ops, ops)
    if mode != NAIVE:
        raise ValueError(f"unknown mode {mode!r}")
    base = n_p + s_p + (n_parent * n_child if is_join else 0)
    band = sort_band(n_p)
    return OpsPrediction(base + band.low, base + band.high)


# --------------------------------------------------------------------------
# Whole-system runs


@dataclass
class RunReport:
    mode: str
    per_predicate: dict = field(default_factory=dict)
    counters: CostCounters = field(default_factory=CostCounters)
    operators: list = field(default_factory=list)
    pjtt_builds: list = field(default_factory=list)
    predicted_ops: OpsPrediction = OpsPrediction(0, 0)
    total_ops: int = 0
    wall_time: float = 0.0
    errors: list = field(default_factory=list)
    output_path: Optional[str] = None
    triples_emitted: int = 0

    @property
    def partial(self) -> bool:
        return bool(self.errors)

    @property
    def counter_law_holds(self) -> bool:
        return self.predicted_ops.contains(self.total_ops)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["counters"] = self.counters.as_dict()
        d["predicted_ops"] = {"low": self.predicted_ops.low, "high": self.predicted_ops.high}
        d["partial"] = self.partial
        d["counter_law_holds"] = self.counter_law_holds
        return d


def _open_output(output, dis: DataIntegrationSystem):
    target = output if output is not None else dis.output_path
    if target is None:
        return None, None, False
    if hasattr(target, "write"):
        return target, None, False
    path = Path(target)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", encoding="utf-8", buffering=1 << 20), str(path), True


def _classify_all(dis: DataIntegrationSystem, mode: str, report: RunReport) -> list:
    work = []
    for tm in dis.mappings:
        try:
            plans = plans_for(dis, tm, mode)
        except (MappingError, KeyError) as exc:
            report.errors.append({"map": tm.id, "error": f"{type(exc).__name__}: {exc}"})
            continue
        if plans or tm.subject_classes:
            work.append((tm, plans))
    return work


def run_system(dis: DataIntegrationSystem, output=None, mode: Optional[str] = None) -> RunReport:
    """Execute every triples map of ``dis``; write N-Triples to ``output`` (path or file)."""
    mode = mode or dis.mode or OPTIMIZED
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    report = RunReport(mode)
    t0 = time.perf_counter()
    sink, path, owned = _open_output(output, dis)
    report.output_path = path
    try:
        work = _classify_all(dis, mode, report)
        if mode == OPTIMIZED:
            _run_optimized(dis, work, sink, report)
        else:
            _run_naive(dis, work, sink, report)
    finally:
        if sink is not None:
            sink.flush()
            if owned:
                sink.close()
    report.wall_time = time.perf_counter() - t0
    report.total_ops = report.counters.total_ops(mode)
    return report


def _run_optimized(dis, work, sink, report: RunReport) -> None:
    counters = report.counters
    kg = KnowledgeGraphCreator(sink)
    ptts: dict = {}
    pjtts: dict = {}
    all_steps: list = []
    base = dis.base_dir

    def ptt_for(predicate):
        t = ptts.get(predicate)
        if t is None:
            t = ptts[predicate] = PredicateTupleTable(predicate)
        return t

    for tm, plans in work:
        steps: list = []
        class_steps: list = []
        try:
            for plan in plans:
                pjtt = None
                if plan.kind is OperatorKind.OJM:
                    attrs = plan.pom.object.parent_attrs
                    key = (plan.parent.id, attrs)
                    pjtt = pjtts.get(key)
                    if pjtt is None:
                        pjtt = pjtt_build(plan.parent, open_source(plan.parent.logical_source, base),
                                          attrs, counters)
                        pjtts[key] = pjtt
                        report.pjtt_builds.append({"pjtt": pjtt.identifier,
                                                   "n_parent": pjtt.records_indexed,
                                                   "skipped": pjtt.records_skipped})
                steps.append((_Step(plan, pjtt), ptt_for(plan.predicate)))
            class_steps.extend((_ClassStep(tm, c), ptt_for(RDF_TYPE)) for c in tm.subject_classes)
            subject_fn = compile_term(tm.subject_map)
            for record in open_source(tm.logical_source, base):
                bindings = record.bindings
                subject = subject_fn(bindings)
                if subject is None:
                    counters.skipped += 1
                    continue
                for cstep, t in class_steps:
                    cstep.apply(subject, t, kg, counters)
                for step, t in steps:
                    _optimized_record(step, subject, bindings, t, kg, counters)
        except (SourceError, TermError, ResourceError, OSError) as exc:
            report.errors.append({"map": tm.id, "error": f"{type(exc).__name__}: {exc}"})
        all_steps.extend(s for s, _ in class_steps)
        all_steps.extend(s for s, _ in steps)

    report.operators = [s.stats() for s in all_steps]
    for s in all_steps:
        entry = report.per_predicate.setdefault(s.predicate, {"generated": 0, "emitted": 0})
        entry["generated"] += s.generated
        entry["emitted"] += s.emitted
    report.triples_emitted = kg.lines_written
    predicted = OpsPrediction(0, 0)
    for s in all_steps:
        predicted += predicted_ops(OperatorKind.SOM, OPTIMIZED, s.generated, s.emitted)
        if s.kind is OperatorKind.OJM:
            predicted += (s.probes, s.probes)
    for build in report.pjtt_builds:
        predicted += (2 * build["n_parent"], 2 * build["n_parent"])
    report.predicted_ops = predicted


class _ClassStep:
    """rdf:type triples from ``rr:class``; costed like a simple object map."""

    __slots__ = ("plan_map", "predicate", "obj", "kind", "generated", "emitted", "probes", "pjtt")

    def __init__(self, tm: TriplesMap, cls: str):
        self.plan_map = tm.id
        self.predicate = RDF_TYPE
        self.obj = nt_iri(cls)
        self.kind = OperatorKind.SOM
        self.generated = self.emitted = self.probes = 0
        self.pjtt = None

    def apply(self, subject, ptt, kg, counters) -> None:
        counters.triples_generated += 1
        counters.ptt_lookups += 1
        self.generated += 1
        if ptt.add(subject, self.obj):
            counters.ptt_insertions += 1
            n = kg.emit(ptt)
            counters.kg_emissions += n
            self.emitted += n

    def stats(self) -> dict:
        return {"map": self.plan_map, "predicate": self.predicate, "kind": "class",
                "generated": self.generated, "emitted": self.emitted, "n_child": None,
                "pjtt": None, "skipped": 0}


def _run_naive(dis, work, sink, report: RunReport) -> None:
    counters = report.counters
    base = dis.base_dir
    by_predicate: dict = defaultdict(list)
    joins: list = []
    for tm, plans in work:
        try:
            for cls in tm.subject_classes:
                subject_fn = compile_term(tm.subject_map)
                o = nt_iri(cls)
                p = nt_iri(RDF_TYPE)
                lines = by_predicate[RDF_TYPE]
                n0 = len(lines)
                for record in open_source(tm.logical_source, base):
                    s = subject_fn(record.bindings)
                    if s is not None:
                        lines.append(f"{s} {p} {o} .\n")
                counters.triples_generated += len(lines) - n0
            for plan in plans:
                streams = [open_source(plan.child.logical_source, base)]
                if plan.kind is OperatorKind.OJM:
                    streams.append(open_source(plan.parent.logical_source, base))
                before = counters.pairwise_comparisons
                _materialize(plan, streams, counters, by_predicate[plan.predicate])
                if plan.kind is OperatorKind.OJM:
                    joins.append(counters.pairwise_comparisons - before)
        except (SourceError, TermError, ResourceError, OSError) as exc:
            report.errors.append({"map": tm.id, "error": f"{type(exc).__name__}: {exc}"})

    predicted = OpsPrediction(sum(joins), sum(joins))
    for predicate, lines in by_predicate.items():
        n_p = len(lines)
        before = counters.sort_comparisons
        unique = sort_dedup(lines, counters)
        by_predicate[predicate] = None
        counters.kg_emissions += len(unique)
        report.per_predicate[predicate] = {"generated": n_p, "emitted": len(unique),
                                           "sort_comparisons": counters.sort_comparisons - before}
        predicted += predicted_ops(OperatorKind.SOM, NAIVE, n_p, len(unique))
        if sink is not None:
            sink.write("".join(unique))
        report.triples_emitted += len(unique)
    report.predicted_ops = predicted
