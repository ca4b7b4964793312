"""Synthetic testbeds and the benchmark runner.

A testbed has ``rows`` rows of which ``duplicate_rate * rows`` are copies: they
come from ``duplicate_rate * rows / repeat_factor`` distinct tuples, each
repeated ``repeat_factor`` times. The remaining rows are unique. Columns are a
record id, a join key and three value columns.
"""

from __future__ import annotations

import csv
import json
import os
import random
import subprocess
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from statistics import mean
from typing import Iterable, Optional, Sequence

from .mapping import OperatorKind

EX = "http://example.org/"
VALUE_COLUMNS = ("value1", "value2", "value3")


@dataclass(frozen=True)
class TestbedSpec:
    __test__ = False  # not a pytest class

    rows: int = 10_000
    duplicate_rate: float = 0.25
    repeat_factor: int = 20
    pom_kind: str = "SOM"
    pom_count: int = 1
    seed: int = 0
    match_rate: float = 1.0
    parent_rows: Optional[int] = None

    def __post_init__(self):
        if self.rows < 0:
            raise ValueError("rows must be non-negative")
        if not 0.0 <= self.duplicate_rate <= 1.0:
            raise ValueError(f"duplicate_rate must lie in [0, 1], got {self.duplicate_rate}")
        if not 0.0 <= self.match_rate <= 1.0:
            raise ValueError(f"match_rate must lie in [0, 1], got {self.match_rate}")
        if self.repeat_factor < 2:
            raise ValueError("repeat_factor must be at least 2")
        OperatorKind(self.pom_kind)
        if not 1 <= self.pom_count <= 5:
            raise ValueError("pom_count must be between 1 and 5")

    @property
    def name(self) -> str:
        return (f"{self.pom_kind}{self.pom_count}_{self.rows}r_"
                f"{round(self.duplicate_rate * 100)}dup_s{self.seed}")

    def duplicate_rows(self, rows: Optional[int] = None) -> int:
        rows = self.rows if rows is None else rows
        wanted = round(self.duplicate_rate * rows)
        dup = wanted - wanted % self.repeat_factor
        if dup != wanted:
            warnings.warn(f"{wanted} duplicate rows is not a multiple of {self.repeat_factor}; "
                          f"using {dup}", stacklevel=2)
        return dup

    def distinct_tuples(self, rows: Optional[int] = None) -> int:
        rows = self.rows if rows is None else rows
        dup = self.duplicate_rows(rows)
        return rows - dup + dup // self.repeat_factor


def _tuple_multiplicities(spec: TestbedSpec, rows: int) -> list:
    dup = spec.duplicate_rows(rows)
    unique = rows - dup
    return [1] * unique + [spec.repeat_factor] * (dup // spec.repeat_factor)


def _write_rows(path: Path, header: Sequence[str], tuples: list, multiplicities: list,
                rng: random.Random) -> None:
    order = [i for i, m in enumerate(multiplicities) for _ in range(m)]
    rng.shuffle(order)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(tuples[i] for i in order)


def generate_dataset(spec: TestbedSpec, out_dir) -> dict:
    """Write ``data.csv`` (and ``parent.csv`` for OJM specs); return their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    parent_keys = 0
    if spec.pom_kind == "OJM":
        prng = random.Random(f"{spec.seed}:parent")
        p_rows = spec.parent_rows if spec.parent_rows is not None else spec.rows
        mult = _tuple_multiplicities(spec, p_rows)
        parent_keys = max(1, len(mult) // 2)
        # every key appears among the parent tuples, so a child "K" key always matches
        tuples = [(f"P{t:07d}", f"K{t % parent_keys}", f"{prng.random():.3f}")
                  for t in range(len(mult))]
        paths["parent"] = out / "parent.csv"
        _write_rows(paths["parent"], ("pid", "key", "label"), tuples, mult, prng)

    rng = random.Random(f"{spec.seed}:child")
    mult = _tuple_multiplicities(spec, spec.rows)
    key_space = parent_keys or max(1, len(mult) // 2)
    tuples = []
    for t in range(len(mult)):
        if spec.pom_kind != "OJM" or rng.random() < spec.match_rate:
            key = f"K{rng.randrange(key_space)}"
        else:
            key = f"X{t}"
        tuples.append((f"R{t:07d}", key) + tuple(f"{rng.random():.3f}" for _ in VALUE_COLUMNS))
    paths["child"] = out / "data.csv"
    _write_rows(paths["child"], ("id", "key") + VALUE_COLUMNS, tuples, mult, rng)
    return paths


_PREAMBLE = f"""@prefix rr: <http://www.w3.org/ns/r2rml#> .
@prefix rml: <http://semweb.mmlab.be/ns/rml#> .
@prefix ql: <http://semweb.mmlab.be/ns/ql#> .
@prefix ex: <{EX}vocab/> .
@prefix map: <{EX}mapping/> .
"""


def _source(path: str) -> str:
    return f'rml:logicalSource [ rml:source "{path}" ; rml:referenceFormulation ql:CSV ]'


def generate_mappings(kind, pom_count: int, child_source: str = "data.csv",
                      parent_source: str = "parent.csv") -> str:
    """Mapping document with ``pom_count`` predicate-object maps of one operator kind."""
    kind = OperatorKind(kind)
    if not 1 <= pom_count <= 5:
        raise ValueError("pom_count must be between 1 and 5")
    poms, extra = [], []
    for i in range(1, pom_count + 1):
        column = VALUE_COLUMNS[(i - 1) % len(VALUE_COLUMNS)]
        if kind is OperatorKind.SOM:
            poms.append(f'rr:predicateObjectMap [ rr:predicate ex:p{i} ;\n'
                        f'        rr:objectMap [ rml:reference "{column}" ] ]')
        elif kind is OperatorKind.ORM:
            poms.append(f'rr:predicateObjectMap [ rr:predicate ex:ref{i} ;\n'
                        f'        rr:objectMap [ rr:parentTriplesMap map:RefMap{i} ] ]')
            extra.append(f'map:RefMap{i} a rr:TriplesMap ;\n'
                         f'    {_source(child_source)} ;\n'
                         f'    rr:subjectMap [ rr:template "{EX}entity{i}/{{{column}}}" ] .')
        else:
            poms.append(f'rr:predicateObjectMap [ rr:predicate ex:join{i} ;\n'
                        f'        rr:objectMap [ rr:parentTriplesMap map:ParentMap{i} ;\n'
                        f'            rr:joinCondition [ rr:child "key" ; rr:parent "key" ] ] ]')
            extra.append(f'map:ParentMap{i} a rr:TriplesMap ;\n'
                         f'    {_source(parent_source)} ;\n'
                         f'    rr:subjectMap [ rr:template "{EX}parent{i}/{{pid}}" ] .')
    child = (f'map:TriplesMap1 a rr:TriplesMap ;\n'
             f'    {_source(child_source)} ;\n'
             f'    rr:subjectMap [ rr:template "{EX}record/{{id}}" ; rr:class ex:Record ] ;\n    '
             + " ;\n    ".join(poms) + " .")
    return "\n".join([_PREAMBLE, child] + extra) + "\n"


def write_testbed(spec: TestbedSpec, out_dir) -> Path:
    """Data plus a matching ``mapping.ttl``; returns the mapping path."""
    out = Path(out_dir)
    generate_dataset(spec, out)
    mapping = out / "mapping.ttl"
    mapping.write_text(generate_mappings(spec.pom_kind, spec.pom_count), encoding="utf-8")
    return mapping


# --------------------------------------------------------------------------
# Running


@dataclass
class BenchReport:
    cells: list = field(default_factory=list)
    repetitions: int = 1
    timeout: Optional[float] = None

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, prefix) -> tuple:
        prefix = Path(prefix)
        prefix.parent.mkdir(parents=True, exist_ok=True)
        json_path = prefix.with_suffix(".json")
        csv_path = prefix.with_suffix(".csv")
        json_path.write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")
        columns = ["kind", "pom_count", "rows", "duplicate_rate", "seed", "mode", "status",
                   "wall_time", "engine_time", "triples_generated", "triples_emitted", "total_ops",
                   "predicted_low", "predicted_high", "counter_law_holds", "outputs_equal",
                   "peak_rss_mb"]
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, columns, extrasaction="ignore", lineterminator="\n")
            w.writeheader()
            w.writerows(self.cells)
        return json_path, csv_path


def _child_env() -> dict:
    env = dict(os.environ)
    src = str(Path(__file__).resolve().parent.parent)
    env["PYTHONPATH"] = src + (os.pathsep + env["PYTHONPATH"] if env.get("PYTHONPATH") else "")
    return env


def run_engine_process(mapping, output, mode: str, report_path, timeout: Optional[float] = None,
                       python: str = sys.executable) -> dict:
    """Run ``rmlkg run`` in a child process; returns its JSON report plus ``process_time``.

    Raises ``subprocess.TimeoutExpired`` when the timeout elapses.
    """
    cmd = [python, "-m", "rmlkg", "run", "--mapping", str(mapping), "--output", str(output),
           "--mode", mode, "--report", str(report_path)]
    t0 = time.perf_counter()
    proc = subprocess.run(cmd, capture_output=True, text=True, timeout=timeout, env=_child_env())
    elapsed = time.perf_counter() - t0
    if proc.returncode != 0:
        raise RuntimeError(f"engine exited with {proc.returncode}: {proc.stderr.strip()}")
    report = json.loads(Path(report_path).read_text(encoding="utf-8"))
    report["process_time"] = elapsed
    return report


def _output_lines(path) -> set:
    with open(path, encoding="utf-8") as fh:
        return set(fh)


def run_benchmark(grid: Iterable[TestbedSpec], modes: Sequence[str] = ("optimized",),
                  repetitions: int = 1, timeout: Optional[float] = None, workdir="bench-work",
                  python: str = sys.executable) -> BenchReport:
    """Run every grid cell under every mode; timeouts become ``TIMEOUT`` rows."""
    report = BenchReport(repetitions=repetitions, timeout=timeout)
    workdir = Path(workdir)
    for spec in grid:
        cell_dir = workdir / spec.name
        mapping = write_testbed(spec, cell_dir)
        outputs = {}
        for mode in modes:
            row = {"kind": spec.pom_kind, "pom_count": spec.pom_count, "rows": spec.rows,
                   "duplicate_rate": spec.duplicate_rate, "seed": spec.seed, "mode": mode,
                   "spec": asdict(spec), "status": "OK", "runs": []}
            out = cell_dir / f"output-{mode}.nt"
            for rep in range(repetitions):
                try:
                    run = run_engine_process(mapping, out, mode, cell_dir / f"run-{mode}-{rep}.json",
                                             timeout, python)
                except subprocess.TimeoutExpired:
                    row["status"] = "TIMEOUT"
                    break
                except RuntimeError as exc:
                    row["status"] = "ERROR"
                    row["error"] = str(exc)
                    break
                row["runs"].append(run)
            if row["runs"] and row["status"] == "OK":
                runs = row["runs"]
                last = runs[-1]
                row.update({
                    "wall_time": mean(r["process_time"] for r in runs),
                    "engine_time": mean(r["wall_time"] for r in runs),
                    "peak_rss_mb": max(r.get("peak_rss_bytes", 0) for r in runs) / 2**20,
                    "triples_generated": last["counters"]["triples_generated"],
                    "triples_emitted": last["triples_emitted"],
                    "total_ops": last["total_ops"],
                    "predicted_low": last["predicted_ops"]["low"],
                    "predicted_high": last["predicted_ops"]["high"],
                    "counters": last["counters"],
                    "counter_law_holds": all(r["counter_law_holds"] for r in runs),
                })
                outputs[mode] = out
            report.cells.append(row)
        if len(outputs) > 1:
            sets = [_output_lines(p) for p in outputs.values()]
            equal = all(s == sets[0] for s in sets[1:])
            for row in report.cells[-len(modes):]:
                row["outputs_equal"] = equal
    return report


def make_grid(rows: Sequence[int], rates: Sequence[float], kinds: Sequence[str],
              pom_counts: Sequence[int], seed: int = 0, repeat_factor: int = 20) -> list:
    return [TestbedSpec(r, d, repeat_factor, k, c, seed)
            for r in rows for d in rates for k in kinds for c in pom_counts]
