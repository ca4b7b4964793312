import re
import urllib.parse

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rmlkg.bench import generate_mappings
from rmlkg.mapping import (RDF_TYPE, ClassificationError, DataIntegrationSystem, JoinObject,
                           LogicalSource, MappingError, OperatorKind, PredicateObjectMap,
                           ReferenceFormulation, ReferenceObject, SimpleObject, TermKind, TermMap,
                           TermType, TriplesMap, classify_pom, expand_template, parse_mapping,
                           serialize_mapping)

PREFIXES = """@prefix rr: <http://www.w3.org/ns/r2rml#> .
@prefix rml: <http://semweb.mmlab.be/ns/rml#> .
@prefix ql: <http://semweb.mmlab.be/ns/ql#> .
@prefix ex: <http://example.org/> .
"""


def doc(body):
    return PREFIXES + body


def kinds(dis):
    out = []
    for tm in dis.mappings:
        for pom in tm.predicate_object_maps:
            out.append(type(pom.object).__name__)
    return sorted(out)


def test_biomedical_mapping_shape(biomedical):
    assert [tm.id for tm in biomedical.mappings] == ["TripleMap1", "TripleMap3", "TripleMap2"]
    assert kinds(biomedical) == ["JoinObject", "ReferenceObject", "SimpleObject"]
    tm1 = biomedical.get("TripleMap1")
    assert tm1.subject_map == TermMap(TermKind.TEMPLATE, "http://iasis.eu/{uniprot}_{enst}")
    assert tm1.subject_classes == ("http://project-iasis.eu/vocab/RBP_RNA_PhysicalInteraction",)
    score = tm1.predicate_object_maps[0]
    assert score.predicate == "http://project-iasis.eu/vocab/interactionScore"
    assert score.object == SimpleObject(TermMap(TermKind.REFERENCE, "omixcore", TermType.LITERAL))
    join = biomedical.get("TripleMap3").predicate_object_maps[0].object
    assert join == JoinObject("TripleMap2", (("enst", "enst"),))
    assert len(biomedical.sources) == 2


def test_biomedical_classification(biomedical):
    tm1, tm3, tm2 = biomedical.mappings
    som, orm = tm1.predicate_object_maps
    assert classify_pom(som, tm1) is OperatorKind.SOM
    assert classify_pom(orm, tm1, tm3) is OperatorKind.ORM
    assert classify_pom(tm3.predicate_object_maps[0], tm3, tm2) is OperatorKind.OJM


def test_empty_documents():
    assert parse_mapping("").mappings == []
    dis = parse_mapping(PREFIXES + "# nothing here\n")
    assert dis.mappings == [] and dis.sources == []
    assert dis.ontology_prefixes["ex"] == "http://example.org/"


def test_dangling_parent_names_missing_id():
    text = doc("""
ex:A rml:logicalSource [ rml:source "a.csv" ] ;
  rr:subjectMap [ rr:template "http://x/{id}" ] ;
  rr:predicateObjectMap [ rr:predicate ex:p ; rr:objectMap [ rr:parentTriplesMap ex:Missing ] ] .
""")
    with pytest.raises(MappingError, match="http://example.org/Missing"):
        parse_mapping(text)


def test_dangling_parent_rejected_by_model():
    ls = LogicalSource("a.csv")
    tm = TriplesMap("A", ls, TermMap(TermKind.TEMPLATE, "http://x/{id}"), (),
                    (PredicateObjectMap("http://p", ReferenceObject("Nope")),))
    with pytest.raises(MappingError, match="Nope"):
        DataIntegrationSystem(mappings=[tm])


@pytest.mark.parametrize("body, message, line", [
    ('ex:A rml:logicalSource [ rml:source "a.csv" ] \n ex:B .', "expected", 6),
    ('ex:A ex:unknownThing "x" .', "unknown vocabulary term", 5),
    ('ex:A rr:subjectMap [ rr:template "{a}" ; rr:graphMap [ rr:constant ex:g ] ] .',
     "named graphs", 5),
    ('ex:A rml:logicalSource [ rml:source "a.xml" ; rml:referenceFormulation ql:XPath ] .',
     "XML", 5),
    ('ex:A rr:class ( ex:a ex:b ) .', "collections", 5),
    ('ex:A rml:source """long""" .', "multi-line", 5),
    ('foo:A rml:source "x" .', "undeclared prefix", 5),
    ('ex:A rml:source 12 .', "numeric", 5),
    ('ex:A rml:source "x"@en .', "language-tagged", 5),
])
def test_errors_carry_position(body, message, line):
    with pytest.raises(MappingError, match=message) as info:
        parse_mapping(doc(body), path="m.ttl")
    assert info.value.line == line
    assert info.value.col is not None
    assert "m.ttl" in str(info.value)


def test_syntax_error_column():
    with pytest.raises(MappingError) as info:
        parse_mapping("@prefix ex: <http://e/> .\nex:a ex:b ex:c ;; ] .")
    assert (info.value.line, info.value.col) == (2, 19)


def test_subject_map_must_be_iri():
    text = doc('ex:A rml:logicalSource [ rml:source "a.csv" ] ; '
               'rr:subjectMap [ rml:reference "id" ; rr:termType rr:Literal ] .')
    with pytest.raises(MappingError, match="IRIs"):
        parse_mapping(text)


def test_json_source_needs_iterator():
    text = doc('ex:A rml:logicalSource [ rml:source "a.json" ; rml:referenceFormulation ql:JSONPath ] ; '
               'rr:subjectMap [ rr:template "http://x/{id}" ] .')
    with pytest.raises(MappingError, match="iterator"):
        parse_mapping(text)
    ok = parse_mapping(text.replace('ql:JSONPath', 'ql:JSONPath ; rml:iterator "$.rows[*]"'))
    assert ok.mappings[0].logical_source == LogicalSource("a.json", ReferenceFormulation.JSONPATH,
                                                          "$.rows[*]")


def test_csv_source_rejects_iterator():
    text = doc('ex:A rml:logicalSource [ rml:source "a.csv" ; rml:iterator "$" ] ; '
               'rr:subjectMap [ rr:template "http://x/{id}" ] .')
    with pytest.raises(MappingError, match="iterator"):
        parse_mapping(text)


@pytest.mark.parametrize("template", ["http://x/{}", "http://x/{a", "http://x/a}", "{a{b}}"])
def test_bad_templates(template):
    with pytest.raises(ValueError):
        TermMap(TermKind.TEMPLATE, template)
    text = doc(f'ex:A rml:logicalSource [ rml:source "a.csv" ] ; rr:subjectMap [ rr:template "{template}" ] .')
    with pytest.raises(MappingError):
        parse_mapping(text)


def test_object_map_defaults_and_datatype():
    text = doc("""
ex:A rml:logicalSource [ rml:source "a.csv" ] ;
  rr:subjectMap [ rr:template "http://x/{id}" ] ;
  rr:predicateObjectMap [ rr:predicate ex:p, ex:q ; rr:objectMap [ rml:reference "v" ; rr:datatype ex:dt ] ] ;
  rr:predicateObjectMap [ rr:predicate ex:r ; rr:objectMap [ rr:template "http://y/{v}" ], [ rr:constant "c" ] ] .
""")
    poms = parse_mapping(text).mappings[0].predicate_object_maps
    assert [p.predicate for p in poms] == ["http://example.org/" + x for x in "pqrr"]
    assert poms[0].object.term_map == TermMap(TermKind.REFERENCE, "v", TermType.LITERAL,
                                              "http://example.org/dt")
    assert poms[2].object.term_map.term_type is TermType.IRI
    assert poms[3].object.term_map == TermMap(TermKind.CONSTANT, "c", TermType.LITERAL)


def test_class_shorthand_a_and_labelled_bnodes():
    text = doc("""
ex:A a rr:TriplesMap ; rml:logicalSource _:ls ; rr:subjectMap _:sm .
_:ls rml:source "a.csv" ; rml:referenceFormulation ql:CSV .
_:sm rr:template "http://x/{id}" ; rr:class ex:C1, ex:C2 .
""")
    (tm,) = parse_mapping(text).mappings
    assert tm.subject_classes == ("http://example.org/C1", "http://example.org/C2")
    assert RDF_TYPE not in tm.subject_classes


def _two_maps(child_source, parent_source, join=False):
    cond = ' ; rr:joinCondition [ rr:child "k" ; rr:parent "k" ]' if join else ""
    return doc(f"""
ex:Child rml:logicalSource [ rml:source "{child_source}" ] ;
  rr:subjectMap [ rr:template "http://c/{{id}}" ] ;
  rr:predicateObjectMap [ rr:predicate ex:p ; rr:objectMap [ rr:parentTriplesMap ex:Parent{cond} ] ] .
ex:Parent rml:logicalSource [ rml:source "{parent_source}" ] ;
  rr:subjectMap [ rr:template "http://p/{{id}}" ] .
""")


def test_reference_with_different_source_is_classification_error():
    dis = parse_mapping(_two_maps("a.csv", "b.csv"))
    child, parent = dis.mappings
    with pytest.raises(ClassificationError, match="identical logical source"):
        classify_pom(child.predicate_object_maps[0], child, parent)
    joined = parse_mapping(_two_maps("a.csv", "b.csv", join=True))
    child, parent = joined.mappings
    assert classify_pom(child.predicate_object_maps[0], child, parent) is OperatorKind.OJM


def test_classify_requires_the_named_parent():
    dis = parse_mapping(_two_maps("a.csv", "a.csv"))
    child, parent = dis.mappings
    with pytest.raises(ClassificationError):
        classify_pom(child.predicate_object_maps[0], child, None)
    with pytest.raises(ClassificationError):
        classify_pom(child.predicate_object_maps[0], child, child)


# -- templates ---------------------------------------------------------------


def test_expand_template_two_placeholders():
    tm = TermMap(TermKind.TEMPLATE, "http://iasis.eu/{uniprot}_{enst}")
    assert (expand_template(tm, {"uniprot": "Q8WU90", "enst": "ENST00000415827"})
            == "http://iasis.eu/Q8WU90_ENST00000415827")


def test_expand_template_empty_and_missing():
    tm = TermMap(TermKind.TEMPLATE, "{a}")
    assert expand_template(tm, {"a": ""}) is None
    assert expand_template(tm, {}) is None


def test_expand_template_percent_encodes_space():
    tm = TermMap(TermKind.TEMPLATE, "ex:{a} {b}")
    assert expand_template(tm, {"a": "x y", "b": "z"}) == "ex:x%20y z"


def test_literal_template_is_not_encoded():
    tm = TermMap(TermKind.TEMPLATE, "{a}/{b}", TermType.LITERAL)
    assert expand_template(tm, {"a": "x y", "b": "é"}) == "x y/é"


def test_escaped_braces_in_template():
    tm = TermMap(TermKind.TEMPLATE, r"http://x/\{{a}\}")
    assert expand_template(tm, {"a": "1"}) == "http://x/{1}"


# Independent iunreserved encoder: a character class transcribed from the RFC 3987 ABNF.
_IUNRESERVED = re.compile(
    "[A-Za-z0-9\\-._~\u00A0-\uD7FF\uF900-\uFDCF\uFDF0-\uFFEF"
    "\U00010000-\U0001FFFD\U00020000-\U0002FFFD\U00030000-\U0003FFFD"
    "\U00040000-\U0004FFFD\U00050000-\U0005FFFD\U00060000-\U0006FFFD"
    "\U00070000-\U0007FFFD\U00080000-\U0008FFFD\U00090000-\U0009FFFD"
    "\U000A0000-\U000AFFFD\U000B0000-\U000BFFFD\U000C0000-\U000CFFFD"
    "\U000D0000-\U000DFFFD\U000E1000-\U000EFFFD]")


def reference_encode(value):
    return "".join(ch if _IUNRESERVED.fullmatch(ch) else urllib.parse.quote(ch, safe="")
                   for ch in value)


@given(st.text(min_size=1), st.text(min_size=1))
def test_template_encoding_matches_reference_encoder(a, b):
    tm = TermMap(TermKind.TEMPLATE, "http://x/{a}/{b}")
    try:
        expected_a = reference_encode(a)
        expected_b = reference_encode(b)
    except UnicodeEncodeError:  # lone surrogates cannot be UTF-8 encoded by either side
        return
    assert expand_template(tm, {"a": a, "b": b}) == f"http://x/{expected_a}/{expected_b}"


@given(st.dictionaries(st.sampled_from("abcd"), st.sampled_from(["", "v", "w x", "é"])),
       st.lists(st.sampled_from("abcd"), min_size=1, max_size=4))
def test_none_iff_some_attribute_absent_or_empty(record, attrs):
    tm = TermMap(TermKind.TEMPLATE, "http://x/" + "/".join("{%s}" % a for a in attrs))
    result = expand_template(tm, record)
    missing = any(not record.get(a) for a in attrs)
    assert (result is None) == missing
    assert expand_template(tm, record) == result


# -- round trip --------------------------------------------------------------


def test_roundtrip_biomedical(biomedical):
    again = parse_mapping(serialize_mapping(biomedical))
    assert again.structure() == biomedical.structure()


@pytest.mark.parametrize("kind", ["SOM", "ORM", "OJM"])
@pytest.mark.parametrize("count", [1, 5])
def test_roundtrip_generated(kind, count):
    dis = parse_mapping(generate_mappings(kind, count))
    assert parse_mapping(serialize_mapping(dis)).structure() == dis.structure()


names = st.text("abcdefghijk_", min_size=1, max_size=6)
literal_text = st.text(st.characters(blacklist_categories=("Cs",)), max_size=8)


@st.composite
def term_maps(draw, subject=False):
    kind = draw(st.sampled_from(list(TermKind)))
    if kind is TermKind.TEMPLATE:
        attrs = draw(st.lists(names, min_size=1, max_size=3))
        value = "http://t.example/" + "-".join("{%s}" % a for a in attrs)
    elif kind is TermKind.REFERENCE:
        value = draw(names)
    else:
        value = "http://c.example/" + draw(names)
    if subject:
        return TermMap(kind, value, TermType.IRI)
    term_type = draw(st.sampled_from(list(TermType)))
    if kind is TermKind.CONSTANT and term_type is TermType.LITERAL:
        value = draw(literal_text)
    datatype = None
    if term_type is TermType.LITERAL and draw(st.booleans()):
        datatype = "http://www.w3.org/2001/XMLSchema#" + draw(names)
    return TermMap(kind, value, term_type, datatype)


@st.composite
def systems(draw):
    n = draw(st.integers(0, 4))
    ids = [f"http://m.example/Map{i}" for i in range(n)]
    sources = [LogicalSource(f"data{i}.csv") for i in range(2)] + [
        LogicalSource("d.json", ReferenceFormulation.JSONPATH, "$.rows[*]")]
    maps = []
    for map_id in ids:
        poms = []
        for _ in range(draw(st.integers(0, 3))):
            pred = "http://p.example/" + draw(names)
            choice = draw(st.integers(0, 2))
            if choice == 0 or not ids:
                obj = SimpleObject(draw(term_maps()))
            elif choice == 1:
                obj = ReferenceObject(draw(st.sampled_from(ids)))
            else:
                obj = JoinObject(draw(st.sampled_from(ids)),
                                 tuple(draw(st.lists(st.tuples(names, names), min_size=1, max_size=2))))
            poms.append(PredicateObjectMap(pred, obj))
        classes = tuple("http://k.example/" + c for c in draw(st.lists(names, max_size=2)))
        maps.append(TriplesMap(map_id, draw(st.sampled_from(sources)), draw(term_maps(subject=True)),
                               classes, tuple(poms)))
    srcs = []
    for tm in maps:
        if tm.logical_source not in srcs:
            srcs.append(tm.logical_source)
    return DataIntegrationSystem({"ex": "http://p.example/"}, srcs, maps)


@settings(max_examples=150)
@given(systems())
def test_roundtrip_property(dis):
    text = serialize_mapping(dis)
    assert parse_mapping(text).structure() == dis.structure()


@given(systems())
def test_classify_total_and_deterministic(dis):
    for tm in dis.mappings:
        for pom in tm.predicate_object_maps:
            parent = dis.get(pom.object.parent) if hasattr(pom.object, "parent") else None
            try:
                first = classify_pom(pom, tm, parent)
            except ClassificationError:
                assert isinstance(pom.object, ReferenceObject)
                assert parent.logical_source != tm.logical_source
                continue
            assert classify_pom(pom, tm, parent) is first
