"""RDF terms in their N-Triples form.

The engine carries every generated term as the exact string it will have in the
output (``<iri>``, ``"lexical"`` or ``"lexical"^^<datatype>``). Duplicate
detection is therefore plain string equality over serialized triples.
"""

from __future__ import annotations

import re
from typing import Callable, NamedTuple, Optional

from .mapping import TermKind, TermMap, TermType, XSD, iri_safe, parse_template


class TermError(ValueError):
    """A value cannot be written as a well-formed N-Triples term."""


class Literal(NamedTuple):
    value: str
    datatype: Optional[str] = None


# Characters forbidden inside an N-Triples IRIREF.
_BAD_IRI = re.compile(r'[\x00-\x20<>"{}|^`\\]')
_NEEDS_ESCAPE = re.compile(r'["\\\x00-\x1f\x7f]')
_ECHAR = {'"': '\\"', "\\": "\\\\", "\n": "\\n", "\r": "\\r", "\t": "\\t",
          "\b": "\\b", "\f": "\\f"}


def check_iri(iri: str) -> str:
    m = _BAD_IRI.search(iri)
    if m:
        raise TermError(f"character {m.group()!r} not allowed in IRI {iri!r}")
    if not iri:
        raise TermError("empty IRI")
    return iri


def nt_iri(iri: str) -> str:
    return "<" + check_iri(iri) + ">"


def _escape_char(m: re.Match) -> str:
    ch = m.group()
    return _ECHAR.get(ch) or f"\\u{ord(ch):04X}"


def escape_literal(value: str) -> str:
    if _NEEDS_ESCAPE.search(value) is None:
        return value
    return _NEEDS_ESCAPE.sub(_escape_char, value)


def nt_literal(value: str, datatype: Optional[str] = None) -> str:
    body = '"' + escape_literal(value) + '"'
    if datatype and datatype != XSD + "string":
        return body + "^^" + nt_iri(datatype)
    return body


def nt_term(term) -> str:
    """N-Triples form of an :class:`Literal` or an IRI given as a plain string."""
    if isinstance(term, Literal):
        return nt_literal(term.value, term.datatype)
    return nt_iri(term)


TermFn = Callable[[dict], Optional[str]]


def compile_term(tm: TermMap) -> TermFn:
    """Build a function ``bindings -> N-Triples term or None`` for a term map."""
    is_iri = tm.term_type is TermType.IRI
    if tm.kind is TermKind.CONSTANT:
        const = nt_iri(tm.value) if is_iri else nt_literal(tm.value, tm.datatype)
        return lambda bindings: const

    if is_iri:
        close = ">"
        opening = "<"
    else:
        suffix = nt_literal("", tm.datatype)[2:]
        opening, close = '"', '"' + suffix

    if tm.kind is TermKind.REFERENCE:
        attr = tm.value
        if is_iri:
            def ref_iri(bindings):
                v = bindings.get(attr)
                if not v:
                    return None
                return "<" + check_iri(v) + ">"
            return ref_iri

        def ref_literal(bindings):
            v = bindings.get(attr)
            if not v:
                return None
            return opening + escape_literal(v) + close
        return ref_literal

    parts = parse_template(tm.value)
    fixed = parts[0::2]
    attrs = parts[1::2]
    if not attrs:
        const = nt_iri(fixed[0]) if is_iri else nt_literal(fixed[0], tm.datatype)
        return lambda bindings: const
    if is_iri:
        for text in fixed:
            if text:
                check_iri(text)
        encode = iri_safe
    else:
        fixed = tuple(escape_literal(t) for t in fixed)
        encode = escape_literal
    first = opening + fixed[0]
    tail = fixed[1:-1] + (fixed[-1] + close,)
    pairs = tuple(zip(attrs, tail))

    if len(pairs) == 1:
        (a0, t0), = pairs

        def template1(bindings):
            v = bindings.get(a0)
            if not v:
                return None
            return first + encode(v) + t0
        return template1

    def template(bindings):
        out = [first]
        for a, t in pairs:
            v = bindings.get(a)
            if not v:
                return None
            out.append(encode(v))
            out.append(t)
        return "".join(out)
    return template
