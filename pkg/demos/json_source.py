"""
Mapping a JSON document
=======================

JSON sources need an iterator naming the array of records. Nested objects are
flattened to dotted keys, so a reference can reach into them.
"""

import io
import json
import tempfile
from pathlib import Path

from rmlkg import parse_mapping, run_system

work = Path(tempfile.mkdtemp())
(work / "genes.json").write_text(json.dumps({"genes": [
    {"symbol": "TP53", "location": {"chromosome": "17"}},
    {"symbol": "BRCA1", "location": {"chromosome": "17"}},
    {"symbol": "TP53", "location": {"chromosome": "17"}},
    {"symbol": "CFTR"},
]}))

mapping = """
@prefix rr: <http://www.w3.org/ns/r2rml#> .
@prefix rml: <http://semweb.mmlab.be/ns/rml#> .
@prefix ql: <http://semweb.mmlab.be/ns/ql#> .
@prefix ex: <http://example.org/> .

ex:Genes
    rml:logicalSource [ rml:source "genes.json" ; rml:referenceFormulation ql:JSONPath ;
                        rml:iterator "$.genes[*]" ] ;
    rr:subjectMap [ rr:template "http://example.org/gene/{symbol}" ; rr:class ex:Gene ] ;
    rr:predicateObjectMap [ rr:predicate ex:chromosome ;
                            rr:objectMap [ rml:reference "location.chromosome" ] ] .
"""

dis = parse_mapping(mapping, base_dir=work)
out = io.StringIO()
report = run_system(dis, out)
print(out.getvalue())
# CFTR has no location, so it gets a type but no chromosome triple
print(report.triples_emitted, "triples written,", report.counters.skipped, "object skipped")
