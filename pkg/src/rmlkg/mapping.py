"""RML mapping documents: a bounded Turtle reader plus the in-memory mapping model.

Only the Turtle needed to express ordinary RML rules is accepted: prefix
directives, ``a``, predicate lists, object lists, blank-node property lists and
labelled blank nodes. Anything else (collections, long strings, numeric
literals, named graphs, XML sources ...) is rejected with a positioned error.
"""

from __future__ import annotations

import enum
import functools
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Union

RR = "http://www.w3.org/ns/r2rml#"
RML = "http://semweb.mmlab.be/ns/rml#"
QL = "http://semweb.mmlab.be/ns/ql#"
RDF = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
RDF_TYPE = RDF + "type"
XSD = "http://www.w3.org/2001/XMLSchema#"


class MappingError(ValueError):
    """Raised for malformed or unsupported mapping documents."""

    def __init__(self, message: str, line: Optional[int] = None, col: Optional[int] = None,
                 path: Optional[str] = None):
        self.message = message
        self.line = line
        self.col = col
        self.path = path
        super().__init__(self._format())

    def _format(self) -> str:
        where = []
        if self.path:
            where.append(str(self.path))
        if self.line is not None:
            where.append(f"line {self.line}")
        if self.col is not None:
            where.append(f"col {self.col}")
        return f"{', '.join(where)}: {self.message}" if where else self.message


class ClassificationError(MappingError):
    pass


# --------------------------------------------------------------------------
# Model


class TermKind(str, enum.Enum):
    CONSTANT = "constant"
    REFERENCE = "reference"
    TEMPLATE = "template"


class TermType(str, enum.Enum):
    IRI = "IRI"
    LITERAL = "literal"


class OperatorKind(str, enum.Enum):
    SOM = "SOM"
    ORM = "ORM"
    OJM = "OJM"


class ReferenceFormulation(str, enum.Enum):
    CSV = "CSV"
    JSONPATH = "JSONPath"


_TEMPLATE_TOKEN = re.compile(r"\\[{}\\]|\{|\}|[^{}\\]+|\\")


@functools.lru_cache(maxsize=4096)
def parse_template(template: str) -> tuple:
    """Split a template into ``(literal, attr, literal, attr, ..., literal)``.

    Even positions are fixed text, odd positions attribute names. ``\\{`` and
    ``\\}`` escape braces.
    """
    parts: list[str] = []
    buf: list[str] = []
    attr: Optional[list[str]] = None
    for m in _TEMPLATE_TOKEN.finditer(template):
        tok = m.group()
        if tok == "{":
            if attr is not None:
                raise ValueError(f"nested '{{' in template {template!r}")
            parts.append("".join(buf))
            buf = []
            attr = []
        elif tok == "}":
            if attr is None:
                raise ValueError(f"unbalanced '}}' in template {template!r}")
            name = "".join(attr)
            if not name:
                raise ValueError(f"empty placeholder in template {template!r}")
            parts.append(name)
            attr = None
        else:
            if tok.startswith("\\") and len(tok) == 2:
                tok = tok[1]
            (attr if attr is not None else buf).append(tok)
    if attr is not None:
        raise ValueError(f"unterminated '{{' in template {template!r}")
    parts.append("".join(buf))
    return tuple(parts)


@dataclass(frozen=True)
class TermMap:
    kind: TermKind
    value: str
    term_type: TermType = TermType.IRI
    datatype: Optional[str] = None

    def __post_init__(self):
        if self.kind is TermKind.TEMPLATE:
            parse_template(self.value)
        elif self.kind is TermKind.REFERENCE and not self.value:
            raise ValueError("empty reference")
        if self.datatype is not None and self.term_type is not TermType.LITERAL:
            raise ValueError("datatype is only allowed on literal term maps")

    @property
    def template_parts(self) -> tuple:
        return parse_template(self.value)

    @property
    def attributes(self) -> tuple:
        if self.kind is TermKind.TEMPLATE:
            return self.template_parts[1::2]
        if self.kind is TermKind.REFERENCE:
            return (self.value,)
        return ()


@dataclass(frozen=True)
class LogicalSource:
    source_path: str
    reference_formulation: ReferenceFormulation = ReferenceFormulation.CSV
    iterator: Optional[str] = None

    def __post_init__(self):
        if self.reference_formulation is ReferenceFormulation.CSV and self.iterator is not None:
            raise ValueError("CSV logical sources take no iterator")
        if self.reference_formulation is ReferenceFormulation.JSONPATH and not self.iterator:
            raise ValueError("JSONPath logical sources require an iterator")


@dataclass(frozen=True)
class SimpleObject:
    term_map: TermMap


@dataclass(frozen=True)
class ReferenceObject:
    parent: str


@dataclass(frozen=True)
class JoinObject:
    parent: str
    join_condition: tuple  # of (child_attr, parent_attr)

    def __post_init__(self):
        if not self.join_condition:
            raise ValueError("join condition must not be empty")
        for child, parent in self.join_condition:
            if not child or not parent:
                raise ValueError("join attributes must be non-empty")

    @property
    def child_attrs(self) -> tuple:
        return tuple(c for c, _ in self.join_condition)

    @property
    def parent_attrs(self) -> tuple:
        return tuple(p for _, p in self.join_condition)


ObjectSpec = Union[SimpleObject, ReferenceObject, JoinObject]


@dataclass(frozen=True)
class PredicateObjectMap:
    predicate: str
    object: ObjectSpec


@dataclass(frozen=True)
class TriplesMap:
    id: str
    logical_source: LogicalSource
    subject_map: TermMap
    subject_classes: tuple = ()
    predicate_object_maps: tuple = ()

    def __post_init__(self):
        if self.subject_map.term_type is not TermType.IRI:
            raise ValueError(f"subject map of {self.id} must produce IRIs")


@dataclass
class DataIntegrationSystem:
    ontology_prefixes: dict = field(default_factory=dict)
    sources: list = field(default_factory=list)
    mappings: list = field(default_factory=list)
    output_path: Optional[str] = None
    mode: str = "optimized"
    base_dir: Optional[str] = None

    def __post_init__(self):
        ids = [tm.id for tm in self.mappings]
        seen = set()
        for i in ids:
            if i in seen:
                raise MappingError(f"duplicate triples map id {i}")
            seen.add(i)
        for tm in self.mappings:
            for pom in tm.predicate_object_maps:
                parent = getattr(pom.object, "parent", None)
                if parent is not None and parent not in seen:
                    raise MappingError(f"dangling rr:parentTriplesMap: {parent} (referenced from {tm.id})")

    def get(self, map_id: str) -> TriplesMap:
        for tm in self.mappings:
            if tm.id == map_id:
                return tm
        raise KeyError(map_id)

    def structure(self) -> tuple:
        """Comparable view of the mapping content (ignores run settings)."""
        return tuple(self.mappings), tuple(self.sources)


def classify_pom(pom: PredicateObjectMap, child: TriplesMap,
                 parent: Optional[TriplesMap] = None) -> OperatorKind:
    obj = pom.object
    if isinstance(obj, SimpleObject):
        return OperatorKind.SOM
    if parent is None or parent.id != obj.parent:
        raise ClassificationError(f"{child.id}: parent triples map {obj.parent} not supplied")
    if isinstance(obj, JoinObject):
        return OperatorKind.OJM
    if parent.logical_source != child.logical_source:
        raise ClassificationError(
            f"{child.id}: reference to {parent.id} without rr:joinCondition requires an "
            f"identical logical source ({child.logical_source.source_path} != "
            f"{parent.logical_source.source_path})")
    return OperatorKind.ORM


# --------------------------------------------------------------------------
# Template expansion

# RFC 3987 ucschar ranges; together with ALPHA / DIGIT / -._~ they form iunreserved.
_UCSCHAR = ((0xA0, 0xD7FF), (0xF900, 0xFDCF), (0xFDF0, 0xFFEF),
            (0x10000, 0x1FFFD), (0x20000, 0x2FFFD), (0x30000, 0x3FFFD),
            (0x40000, 0x4FFFD), (0x50000, 0x5FFFD), (0x60000, 0x6FFFD),
            (0x70000, 0x7FFFD), (0x80000, 0x8FFFD), (0x90000, 0x9FFFD),
            (0xA0000, 0xAFFFD), (0xB0000, 0xBFFFD), (0xC0000, 0xCFFFD),
            (0xD0000, 0xDFFFD), (0xE1000, 0xEFFFD))
_ASCII_SAFE = frozenset("ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-._~")
_SAFE_RUN = re.compile(r"[A-Za-z0-9\-._~]*")


def _iunreserved(ch: str) -> bool:
    if ch in _ASCII_SAFE:
        return True
    cp = ord(ch)
    if cp < 0xA0:
        return False
    return any(lo <= cp <= hi for lo, hi in _UCSCHAR)


def iri_safe(value: str) -> str:
    """Percent-encode every character outside RFC 3987 iunreserved."""
    if _SAFE_RUN.fullmatch(value):
        return value
    out = []
    for ch in value:
        if _iunreserved(ch):
            out.append(ch)
        else:
            out.extend(f"%{b:02X}" for b in ch.encode("utf-8"))
    return "".join(out)


def expand_template(template: TermMap, record) -> Optional[str]:
    """Fill ``{attr}`` placeholders from ``record``; ``None`` if any value is missing or empty."""
    parts = template.template_parts
    bindings = getattr(record, "bindings", record)
    encode = template.term_type is TermType.IRI
    out = [parts[0]]
    for i in range(1, len(parts), 2):
        value = bindings.get(parts[i])
        if not value:
            return None
        out.append(iri_safe(value) if encode else value)
        out.append(parts[i + 1])
    return "".join(out)


def generate_value(term_map: TermMap, record) -> Optional[str]:
    """Lexical value produced by any term map for a record (``None`` = no term)."""
    if term_map.kind is TermKind.TEMPLATE:
        return expand_template(term_map, record)
    if term_map.kind is TermKind.REFERENCE:
        bindings = getattr(record, "bindings", record)
        return bindings.get(term_map.value) or None
    return term_map.value


# --------------------------------------------------------------------------
# Turtle subset reader


@dataclass(frozen=True)
class IRI:
    value: str


@dataclass(frozen=True)
class BNode:
    id: str


@dataclass(frozen=True)
class Lit:
    value: str
    datatype: Optional[str] = None


_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<iri><[^<>"{}|^`\\\x00-\x20]*>)
  | (?P<long>\"\"\"|''')
  | (?P<string>"(?:[^"\\\n\r]|\\.)*"|'(?:[^'\\\n\r]|\\.)*')
  | (?P<dtmark>\^\^)
  | (?P<lang>@[a-zA-Z]+(?:-[a-zA-Z0-9]+)*)
  | (?P<bnode>_:[A-Za-z0-9_][A-Za-z0-9_\-.]*)
  | (?P<pname>(?:[A-Za-z][A-Za-z0-9_\-.]*)?:(?:[A-Za-z0-9_:%\-][A-Za-z0-9_:%\-.]*)?)
  | (?P<kw>PREFIX|BASE|prefix|base|a|true|false)(?![A-Za-z0-9_:\-])
  | (?P<number>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<punct>[.;,\[\]()])
""", re.VERBOSE)

_STRING_ESCAPES = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f",
                   '"': '"', "'": "'", "\\": "\\"}


def _unescape(body: str, line: int, col: int) -> str:
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch != "\\":
            out.append(ch)
            i += 1
            continue
        nxt = body[i + 1]
        if nxt in _STRING_ESCAPES:
            out.append(_STRING_ESCAPES[nxt])
            i += 2
        elif nxt in "uU":
            width = 4 if nxt == "u" else 8
            hexdigits = body[i + 2:i + 2 + width]
            if len(hexdigits) != width or not all(c in "0123456789abcdefABCDEF" for c in hexdigits):
                raise MappingError("bad unicode escape in string", line, col)
            out.append(chr(int(hexdigits, 16)))
            i += 2 + width
        else:
            raise MappingError(f"unknown string escape \\{nxt}", line, col)
    return "".join(out)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str, path: Optional[str]) -> list:
    toks = []
    pos = 0
    line = 1
    line_start = 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise MappingError(f"unexpected character {text[pos]!r}", line, col, path)
        kind = m.lastgroup
        tok = m.group()
        if kind == "long":
            raise MappingError("multi-line string literals are not supported", line, col, path)
        if kind == "number":
            raise MappingError("numeric literals are not supported; quote the value", line, col, path)
        if kind not in ("ws", "comment"):
            toks.append(_Tok(kind, tok, line, col))
        nl = tok.count("\n")
        if nl:
            line += nl
            line_start = pos + tok.rindex("\n") + 1
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _TurtleReader:
    def __init__(self, text: str, path: Optional[str] = None):
        self.path = path
        self.toks = _tokenize(text, path)
        self.i = 0
        self.prefixes: dict[str, str] = {}
        self.triples: list[tuple] = []
        self.positions: dict = {}
        self._bnodes = 0

    def error(self, msg: str, tok: Optional[_Tok] = None) -> MappingError:
        tok = tok or self.toks[self.i]
        return MappingError(msg, tok.line, tok.col, self.path)

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def next(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Tok:
        tok = self.next()
        if tok.text != text:
            raise self.error(f"expected {text!r}, found {tok.text or 'end of input'!r}", tok)
        return tok

    def parse(self):
        while self.peek().kind != "eof":
            tok = self.peek()
            if tok.text in ("@prefix", "PREFIX", "prefix"):
                self._prefix_directive()
            elif tok.kind == "lang" and tok.text == "@base" or tok.text in ("BASE", "base"):
                raise self.error("@base is not supported")
            else:
                self._triples()
                self.expect(".")
        return self

    def _prefix_directive(self):
        tok = self.next()
        sparql_style = tok.text != "@prefix"
        name = self.next()
        if name.kind != "pname" or not name.text.endswith(":") or name.text.count(":") != 1:
            raise self.error("expected prefix name ending in ':'", name)
        iri = self.next()
        if iri.kind != "iri":
            raise self.error("expected <IRI> in prefix declaration", iri)
        self.prefixes[name.text[:-1]] = iri.text[1:-1]
        if not sparql_style:
            self.expect(".")

    def _new_bnode(self) -> BNode:
        self._bnodes += 1
        return BNode(f"b{self._bnodes}")

    def _triples(self):
        tok = self.peek()
        if tok.text == "[":
            subject = self._bnode_property_list()
            if self.peek().text != ".":
                self._predicate_object_list(subject)
        else:
            subject = self._subject()
            self._predicate_object_list(subject)

    def _subject(self):
        tok = self.next()
        if tok.kind in ("iri", "pname"):
            node = IRI(self._resolve(tok))
        elif tok.kind == "bnode":
            node = BNode("_" + tok.text[2:])
        elif tok.text == "(":
            raise self.error("RDF collections are not supported", tok)
        else:
            raise self.error(f"expected subject, found {tok.text or 'end of input'!r}", tok)
        self.positions.setdefault(node, (tok.line, tok.col))
        return node

    def _predicate_object_list(self, subject):
        while True:
            pred_tok = self.next()
            if pred_tok.text == "a":
                predicate = RDF_TYPE
            elif pred_tok.kind in ("iri", "pname"):
                predicate = self._resolve(pred_tok)
            else:
                raise self.error(f"expected predicate, found {pred_tok.text or 'end of input'!r}",
                                 pred_tok)
            while True:
                obj_tok = self.peek()
                obj = self._object()
                self.triples.append((subject, predicate, obj, pred_tok, obj_tok))
                if self.peek().text != ",":
                    break
                self.next()
            if self.peek().text != ";":
                return
            while self.peek().text == ";":
                self.next()
            if self.peek().text in (".", "]"):
                return

    def _bnode_property_list(self) -> BNode:
        start = self.expect("[")
        node = self._new_bnode()
        self.positions[node] = (start.line, start.col)
        if self.peek().text != "]":
            self._predicate_object_list(node)
        self.expect("]")
        return node

    def _object(self):
        tok = self.peek()
        if tok.text == "[":
            return self._bnode_property_list()
        if tok.text == "(":
            raise self.error("RDF collections are not supported", tok)
        self.next()
        if tok.kind in ("iri", "pname"):
            return IRI(self._resolve(tok))
        if tok.kind == "bnode":
            return BNode("_" + tok.text[2:])
        if tok.kind == "string":
            value = _unescape(tok.text[1:-1], tok.line, tok.col)
            nxt = self.peek()
            if nxt.kind == "lang":
                raise self.error("language-tagged literals are not supported", nxt)
            if nxt.kind == "dtmark":
                self.next()
                dt = self.next()
                if dt.kind not in ("iri", "pname"):
                    raise self.error("expected datatype IRI after '^^'", dt)
                return Lit(value, self._resolve(dt))
            return Lit(value)
        if tok.text in ("true", "false"):
            return Lit(tok.text, XSD + "boolean")
        raise self.error(f"expected object, found {tok.text or 'end of input'!r}", tok)

    def _resolve(self, tok: _Tok) -> str:
        if tok.kind == "iri":
            return _unescape(tok.text[1:-1], tok.line, tok.col) if "\\" in tok.text else tok.text[1:-1]
        prefix, _, local = tok.text.partition(":")
        if prefix not in self.prefixes:
            raise self.error(f"undeclared prefix {prefix + ':'!r}", tok)
        return self.prefixes[prefix] + local


# --------------------------------------------------------------------------
# Interpreting the RML vocabulary

SUPPORTED = {
    RML + "logicalSource", RML + "source", RML + "referenceFormulation", RML + "iterator",
    RML + "reference", RR + "subjectMap", RR + "template", RR + "constant", RR + "class",
    RR + "predicateObjectMap", RR + "predicate", RR + "objectMap", RR + "parentTriplesMap",
    RR + "joinCondition", RR + "child", RR + "parent", RR + "datatype", RR + "termType",
    RDF_TYPE,
}
UNSUPPORTED_CONSTRUCTS = {
    RR + "graph": "named graphs", RR + "graphMap": "named graphs",
    RR + "language": "language tags", RR + "logicalTable": "R2RML logical tables",
    RR + "sqlQuery": "SQL queries", RR + "tableName": "relational sources",
    RML + "query": "source queries", RR + "subject": "constant shortcut properties",
    RR + "object": "constant shortcut properties",
}
KNOWN_TYPES = {RR + t for t in ("TriplesMap", "SubjectMap", "PredicateObjectMap", "ObjectMap",
                                "RefObjectMap", "Join", "TermMap")} | {RML + "LogicalSource"}


class _Interpreter:
    def __init__(self, reader: _TurtleReader):
        self.reader = reader
        self.path = reader.path
        self.props: dict = {}
        for s, p, o, ptok, otok in reader.triples:
            if p in UNSUPPORTED_CONSTRUCTS:
                raise MappingError(f"unsupported construct: {UNSUPPORTED_CONSTRUCTS[p]} ({p})",
                                   ptok.line, ptok.col, self.path)
            if p not in SUPPORTED:
                raise MappingError(f"unknown vocabulary term {p}", ptok.line, ptok.col, self.path)
            self.props.setdefault(s, {}).setdefault(p, []).append((o, otok))

    def err(self, msg: str, tok: Optional[_Tok] = None, node=None) -> MappingError:
        if tok is not None:
            return MappingError(msg, tok.line, tok.col, self.path)
        if node is not None and node in self.reader.positions:
            line, col = self.reader.positions[node]
            return MappingError(msg, line, col, self.path)
        return MappingError(msg, path=self.path)

    def values(self, node, p) -> list:
        return self.props.get(node, {}).get(p, [])

    def one(self, node, p, required=True):
        vals = self.values(node, p)
        if len(vals) > 1:
            raise self.err(f"expected a single {p}", vals[1][1])
        if not vals:
            if required:
                raise self.err(f"missing {p}", node=node)
            return None, None
        return vals[0]

    def run(self) -> list:
        map_nodes = []
        for node, props in self.props.items():
            types = {o.value for o, _ in props.get(RDF_TYPE, []) if isinstance(o, IRI)}
            if RML + "logicalSource" in props or RR + "subjectMap" in props or RR + "TriplesMap" in types:
                map_nodes.append(node)
        for node, props in self.props.items():
            for o, tok in props.get(RDF_TYPE, []):
                if isinstance(o, IRI) and o.value.startswith((RR, RML)) and o.value not in KNOWN_TYPES:
                    raise self.err(f"unknown vocabulary term {o.value}", tok)
        for node in map_nodes:
            if isinstance(node, BNode):
                raise self.err("triples maps must be identified by an IRI", node=node)
        self.map_ids = {n.value for n in map_nodes}
        return [self.triples_map(n) for n in map_nodes]

    def triples_map(self, node) -> TriplesMap:
        ls_node, ls_tok = self.one(node, RML + "logicalSource")
        source = self.logical_source(ls_node, ls_tok)
        sm_node, sm_tok = self.one(node, RR + "subjectMap")
        subject = self.term_map(sm_node, sm_tok, position="subject")
        classes = tuple(self.iri_value(o, tok) for o, tok in self.values(sm_node, RR + "class"))
        poms = []
        for pom_node, pom_tok in self.values(node, RR + "predicateObjectMap"):
            poms.extend(self.predicate_object_maps(pom_node, pom_tok))
        try:
            return TriplesMap(node.value, source, subject, classes, tuple(poms))
        except ValueError as exc:
            raise self.err(str(exc), node=node) from None

    def iri_value(self, o, tok) -> str:
        if not isinstance(o, IRI):
            raise self.err("expected an IRI", tok)
        return o.value

    def string_value(self, o, tok) -> str:
        if not isinstance(o, Lit):
            raise self.err("expected a string literal", tok)
        return o.value

    def logical_source(self, node, tok) -> LogicalSource:
        if isinstance(node, Lit):
            raise self.err("rml:logicalSource must be a node, not a literal", tok)
        src, src_tok = self.one(node, RML + "source")
        path = self.string_value(src, src_tok)
        rf, rf_tok = self.one(node, RML + "referenceFormulation", required=False)
        it, it_tok = self.one(node, RML + "iterator", required=False)
        if rf is None:
            suffix = Path(path).suffix.lower()
            if suffix == ".json":
                formulation = ReferenceFormulation.JSONPATH
            elif suffix in (".csv", ".tsv", ""):
                formulation = ReferenceFormulation.CSV
            else:
                raise self.err(f"cannot infer reference formulation for {path}", src_tok)
        else:
            rf_iri = self.iri_value(rf, rf_tok)
            if rf_iri == QL + "CSV":
                formulation = ReferenceFormulation.CSV
            elif rf_iri == QL + "JSONPath":
                formulation = ReferenceFormulation.JSONPATH
            elif rf_iri == QL + "XPath":
                raise self.err("unsupported construct: XML/XPath logical sources", rf_tok)
            else:
                raise self.err(f"unknown reference formulation {rf_iri}", rf_tok)
        iterator = self.string_value(it, it_tok) if it is not None else None
        try:
            return LogicalSource(path, formulation, iterator)
        except ValueError as exc:
            raise self.err(str(exc), it_tok or src_tok) from None

    def term_map(self, node, tok, position: str) -> TermMap:
        if isinstance(node, (IRI, Lit)) and node not in self.props:
            raise self.err(f"{position} map must be a blank node or described resource", tok)
        kinds = []
        for prop, kind in ((RR + "template", TermKind.TEMPLATE), (RML + "reference", TermKind.REFERENCE),
                           (RR + "constant", TermKind.CONSTANT)):
            if self.values(node, prop):
                kinds.append((prop, kind))
        if len(kinds) != 1:
            raise self.err(f"{position} map needs exactly one of rr:template, rml:reference, rr:constant",
                           tok=tok)
        prop, kind = kinds[0]
        val, val_tok = self.one(node, prop)
        datatype_node, dt_tok = self.one(node, RR + "datatype", required=False)
        tt_node, tt_tok = self.one(node, RR + "termType", required=False)
        if kind is TermKind.CONSTANT:
            value = val.value if isinstance(val, (IRI, Lit)) else None
            if value is None:
                raise self.err("rr:constant must be an IRI or literal", val_tok)
            default = TermType.IRI if isinstance(val, IRI) else TermType.LITERAL
        else:
            value = self.string_value(val, val_tok)
            default = TermType.IRI if (kind is TermKind.TEMPLATE or position == "subject") else TermType.LITERAL
        term_type = default
        if tt_node is not None:
            tt = self.iri_value(tt_node, tt_tok)
            if tt == RR + "IRI":
                term_type = TermType.IRI
            elif tt == RR + "Literal":
                term_type = TermType.LITERAL
            elif tt == RR + "BlankNode":
                raise self.err("unsupported construct: blank-node term type", tt_tok)
            else:
                raise self.err(f"unknown term type {tt}", tt_tok)
        datatype = None
        if datatype_node is not None:
            datatype = self.iri_value(datatype_node, dt_tok)
            if tt_node is not None and term_type is not TermType.LITERAL:
                raise self.err("rr:datatype requires a literal term type", dt_tok)
            term_type = TermType.LITERAL
        if position == "subject" and term_type is not TermType.IRI:
            raise self.err("subject maps must produce IRIs", tt_tok or val_tok)
        try:
            return TermMap(kind, value, term_type, datatype)
        except ValueError as exc:
            raise self.err(str(exc), val_tok) from None

    def predicate_object_maps(self, node, tok) -> list:
        preds = []
        for p, ptok in self.values(node, RR + "predicate"):
            preds.append(self.iri_value(p, ptok))
        if not preds:
            raise self.err("predicate-object map without rr:predicate", tok)
        objects = []
        om_vals = self.values(node, RR + "objectMap")
        if not om_vals:
            raise self.err("predicate-object map without rr:objectMap", tok)
        for om, om_tok in om_vals:
            objects.append(self.object_map(om, om_tok))
        return [PredicateObjectMap(p, o) for p in preds for o in objects]

    def object_map(self, node, tok) -> ObjectSpec:
        parent_vals = self.values(node, RR + "parentTriplesMap")
        if not parent_vals:
            if self.values(node, RR + "joinCondition"):
                raise self.err("rr:joinCondition without rr:parentTriplesMap", tok)
            return SimpleObject(self.term_map(node, tok, position="object"))
        parent, ptok = self.one(node, RR + "parentTriplesMap")
        parent_id = self.iri_value(parent, ptok)
        if parent_id not in self.map_ids:
            raise self.err(f"dangling rr:parentTriplesMap: {parent_id}", ptok)
        for prop in (RR + "template", RML + "reference", RR + "constant"):
            if self.values(node, prop):
                raise self.err("referencing object maps cannot also carry a term map", tok)
        conditions = []
        for jc, jc_tok in self.values(node, RR + "joinCondition"):
            c, c_tok = self.one(jc, RR + "child")
            p, p_tok = self.one(jc, RR + "parent")
            conditions.append((self.string_value(c, c_tok), self.string_value(p, p_tok)))
        if not conditions:
            return ReferenceObject(parent_id)
        try:
            return JoinObject(parent_id, tuple(conditions))
        except ValueError as exc:
            raise self.err(str(exc), tok) from None


def parse_mapping(document: str, path: Optional[str] = None,
                  base_dir: Optional[str] = None) -> DataIntegrationSystem:
    """Parse an RML mapping document into a resolved :class:`DataIntegrationSystem`."""
    reader = _TurtleReader(document, path).parse()
    mappings = _Interpreter(reader).run()
    sources = []
    for tm in mappings:
        if tm.logical_source not in sources:
            sources.append(tm.logical_source)
    return DataIntegrationSystem(dict(reader.prefixes), sources, mappings, base_dir=base_dir)


def load_mapping(path) -> DataIntegrationSystem:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise MappingError(f"mapping is not UTF-8: {exc}", path=str(path)) from None
    return parse_mapping(text, str(path), str(path.resolve().parent))


# --------------------------------------------------------------------------
# Writing the subset back out

_PNAME_LOCAL = re.compile(r"[A-Za-z0-9_][A-Za-z0-9_\-]*")


def _turtle_string(value: str) -> str:
    out = value.replace("\\", "\\\\").replace('"', '\\"')
    return '"' + out.replace("\n", "\\n").replace("\r", "\\r").replace("\t", "\\t") + '"'


class _Compactor:
    def __init__(self, prefixes: Mapping[str, str]):
        # longest namespace first so the most specific prefix wins
        self.items = sorted(prefixes.items(), key=lambda kv: -len(kv[1]))

    def __call__(self, iri: str) -> str:
        for name, ns in self.items:
            if iri.startswith(ns) and _PNAME_LOCAL.fullmatch(iri[len(ns):]):
                return f"{name}:{iri[len(ns):]}"
        return f"<{iri}>"


def _term_map_lines(tm: TermMap, c: _Compactor, position: str) -> list:
    lines = []
    if tm.kind is TermKind.TEMPLATE:
        lines.append(f"rr:template {_turtle_string(tm.value)}")
    elif tm.kind is TermKind.REFERENCE:
        lines.append(f"rml:reference {_turtle_string(tm.value)}")
    elif tm.term_type is TermType.IRI:
        lines.append(f"rr:constant {c(tm.value)}")
    else:
        lines.append(f"rr:constant {_turtle_string(tm.value)}")
    if tm.kind is not TermKind.CONSTANT:
        default = TermType.IRI if (tm.kind is TermKind.TEMPLATE or position == "subject") else TermType.LITERAL
        if tm.term_type is not default and tm.datatype is None:
            lines.append("rr:termType rr:" + ("IRI" if tm.term_type is TermType.IRI else "Literal"))
    if tm.datatype:
        lines.append(f"rr:datatype {c(tm.datatype)}")
    return lines


def serialize_mapping(dis: DataIntegrationSystem) -> str:
    """Write a mapping set back out in the accepted Turtle subset."""
    prefixes = {"rr": RR, "rml": RML, "ql": QL}
    for name, ns in dis.ontology_prefixes.items():
        if name not in prefixes and ns not in prefixes.values():
            prefixes[name] = ns
    c = _Compactor(prefixes)
    out = [f"@prefix {name}: <{ns}> ." for name, ns in prefixes.items()]
    for tm in dis.mappings:
        ls = tm.logical_source
        src = [f"rml:source {_turtle_string(ls.source_path)}",
               f"rml:referenceFormulation ql:{ls.reference_formulation.value}"]
        if ls.iterator is not None:
            src.append(f"rml:iterator {_turtle_string(ls.iterator)}")
        body = [f"    rml:logicalSource [ {' ; '.join(src)} ]"]
        sm = _term_map_lines(tm.subject_map, c, "subject")
        sm += [f"rr:class {c(cls)}" for cls in tm.subject_classes]
        body.append(f"    rr:subjectMap [ {' ; '.join(sm)} ]")
        for pom in tm.predicate_object_maps:
            obj = pom.object
            if isinstance(obj, SimpleObject):
                om = _term_map_lines(obj.term_map, c, "object")
            else:
                om = [f"rr:parentTriplesMap {c(obj.parent)}"]
                if isinstance(obj, JoinObject):
                    om += [f"rr:joinCondition [ rr:child {_turtle_string(ch)} ; rr:parent {_turtle_string(pa)} ]"
                           for ch, pa in obj.join_condition]
            body.append(f"    rr:predicateObjectMap [ rr:predicate {c(pom.predicate)} ;\n"
                        f"        rr:objectMap [ {' ; '.join(om)} ] ]")
        out.append(f"\n{c(tm.id)} a rr:TriplesMap ;\n" + " ;\n".join(body) + " .")
    return "\n".join(out) + "\n"


def iter_plans_needed(dis: DataIntegrationSystem) -> Iterable[tuple]:
    """Yield ``(child, pom, parent)`` for every predicate-object map in document order."""
    for tm in dis.mappings:
        for pom in tm.predicate_object_maps:
            parent_id = getattr(pom.object, "parent", None)
            yield tm, pom, (dis.get(parent_id) if parent_id else None)
