"""
Index join against nested loop
==============================

A child file references a parent file through a shared key. The optimized
engine indexes the parent once and probes it per child row; the naive engine
compares every child row with every parent row.
"""

import io
import tempfile
from pathlib import Path

from rmlkg import load_mapping, run_system
from rmlkg.bench import TestbedSpec, write_testbed

work = Path(tempfile.mkdtemp())

for rows in (1_000, 2_000, 4_000):
    spec = TestbedSpec(rows=rows, duplicate_rate=0.2, pom_kind="OJM", pom_count=1)
    dis = load_mapping(write_testbed(spec, work / spec.name))
    opt = run_system(dis, io.StringIO(), "optimized")
    nai = run_system(dis, io.StringIO(), "naive")
    c = opt.counters
    print(f"{rows:5} rows: index reads {c.pjtt_reads}, probes {c.pjtt_probes}, {opt.wall_time:.3f}s"
          f" | pairwise comparisons {nai.counters.pairwise_comparisons}, {nai.wall_time:.3f}s")

# doubling the input doubles the index work and quadruples the pairwise work
