"""Recursive-descent parser for ``.palps`` model files."""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Optional

from ..habitat import Habitat, LocationError
from ..model import ModelSpec, ParamDef, ProcessDef, Span, SpeciesDef, SystemEntry
from ..terms import (
    NIL,
    Choice,
    Cond,
    Go,
    In,
    It,
    Lit,
    MyLoc,
    NbChoice,
    Offset,
    Out,
    Par,
    Prefix,
    Prob,
    Ref,
    Term,
    Tick,
    refs_of,
)
from .diagnostics import ERROR, Diagnostic, ParseError

KEYWORDS = {
    "species", "process", "param", "habitat", "ring", "graph", "node", "system",
    "restrict", "tick", "in", "out", "go", "pchoice", "over", "neighbors", "par",
    "myloc", "it",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<dec>\d+\.\d+)
  | (?P<badnum>\d+(?:\.\d*)?[eE][-+]?\d+|\.\d+)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<sym>--|[(){},;:.@*=?/+\-])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # ident, kw, int, dec, sym, eof
    text: str
    span: Span


def tokenize(text: str, path: str = "<string>") -> list[Token]:
    tokens: list[Token] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        span = Span(line, pos - line_start + 1)
        if m is None:
            raise ParseError([Diagnostic(ERROR, "syntax", f"unexpected character {text[pos]!r}", span, path)])
        kind = m.lastgroup
        value = m.group()
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "badnum":
            raise ParseError([Diagnostic(ERROR, "bad-number", f"malformed number literal {value!r}", span, path)])
        elif kind == "ident":
            tokens.append(Token("kw" if value in KEYWORDS else "ident", value, span))
        elif kind in ("int", "dec", "sym"):
            tokens.append(Token(kind, value, span))
        pos = m.end()
    tokens.append(Token("eof", "", Span(line, pos - line_start + 1)))
    return tokens


class Parser:
    def __init__(self, text: str, path: str = "<string>"):
        self.path = path
        self.tokens = tokenize(text, path)
        self.pos = 0

    # -- token helpers -----------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.pos + k, len(self.tokens) - 1)]

    def error(self, message: str, tok: Optional[Token] = None, code: str = "syntax") -> ParseError:
        tok = tok or self.tok
        return ParseError([Diagnostic(ERROR, code, message, tok.span, self.path)])

    def at(self, kind: str, text: Optional[str] = None) -> bool:
        t = self.tok
        return t.kind == kind and (text is None or t.text == text)

    def at_sym(self, text: str) -> bool:
        return self.at("sym", text)

    def at_kw(self, text: str) -> bool:
        return self.at("kw", text)

    def advance(self) -> Token:
        t = self.tok
        self.pos += 1
        return t

    def expect_sym(self, text: str) -> Token:
        if not self.at_sym(text):
            found = self.tok.text or "end of file"
            raise self.error(f"expected {text!r}, found {found!r}")
        return self.advance()

    def expect_kw(self, text: str) -> Token:
        if not self.at_kw(text):
            raise self.error(f"expected keyword {text!r}, found {self.tok.text or 'end of file'!r}")
        return self.advance()

    def expect_ident(self, what: str = "identifier") -> Token:
        if not self.at("ident"):
            t = self.tok
            if t.kind == "kw":
                raise self.error(f"expected {what}, found keyword {t.text!r}")
            raise self.error(f"expected {what}, found {t.text or 'end of file'!r}")
        return self.advance()

    def skip_semis(self) -> None:
        while self.at_sym(";"):
            self.advance()

    # -- top level -----------------------------------------------------------

    def parse_model(self) -> ModelSpec:
        params: list[ParamDef] = []
        species: list[SpeciesDef] = []
        system: list[SystemEntry] = []
        restricted: list[str] = []
        habitat: Optional[Habitat] = None
        habitat_span: Optional[Span] = None
        seen_system = seen_restrict = False
        while not self.at("eof"):
            t = self.tok
            if self.at_sym(";"):
                self.advance()
            elif self.at_kw("param"):
                params.append(self.parse_param())
            elif self.at_kw("habitat"):
                if habitat is not None:
                    raise self.error("duplicate habitat declaration", code="duplicate-habitat")
                habitat_span = t.span
                habitat = self.parse_habitat()
            elif self.at_kw("species"):
                species.append(self.parse_species())
            elif self.at_kw("system"):
                if seen_system:
                    raise self.error("duplicate system block", code="duplicate-system")
                seen_system = True
                system.extend(self.parse_system())
            elif self.at_kw("restrict"):
                if seen_restrict:
                    raise self.error("duplicate restrict block", code="duplicate-restrict")
                seen_restrict = True
                restricted.extend(self.parse_restrict())
            elif t.kind in ("ident", "kw"):
                raise self.error(f"unknown keyword {t.text!r}", code="unknown-keyword")
            else:
                raise self.error(f"unexpected {t.text!r}")
        if habitat is None:
            raise ParseError([Diagnostic(ERROR, "missing-habitat", "missing habitat declaration",
                                         Span(1, 1), self.path)])
        spec = ModelSpec(tuple(params), habitat, tuple(species), tuple(system), tuple(restricted),
                         self.path, habitat_span)
        return _infer_species(spec)

    def parse_number(self) -> Fraction:
        negative = False
        if self.at_sym("-"):
            self.advance()
            negative = True
        t = self.tok
        if t.kind == "dec":
            self.advance()
            value = Fraction(t.text)
        elif t.kind == "int":
            self.advance()
            value = Fraction(int(t.text))
            if self.at_sym("/"):
                self.advance()
                d = self.tok
                if d.kind != "int":
                    raise self.error("malformed rational literal", code="bad-number")
                self.advance()
                if int(d.text) == 0:
                    raise self.error("zero denominator", d, code="bad-number")
                value /= int(d.text)
        else:
            raise self.error(f"expected a number, found {t.text or 'end of file'!r}", code="bad-number")
        return -value if negative else value

    def parse_param(self) -> ParamDef:
        start = self.expect_kw("param")
        name = self.expect_ident("parameter name").text
        self.expect_sym("=")
        value = self.parse_number()
        self.skip_semis()
        return ParamDef(name, value, start.span)

    def parse_location_name(self) -> Token:
        if self.at("ident") or self.at("int"):
            return self.advance()
        raise self.error(f"expected a location, found {self.tok.text or 'end of file'!r}")

    def parse_habitat(self) -> Habitat:
        self.expect_kw("habitat")
        if self.at_kw("ring"):
            self.advance()
            self.expect_sym("(")
            t = self.tok
            if t.kind != "int":
                raise self.error("ring size must be an integer")
            self.advance()
            self.expect_sym(")")
            size = int(t.text)
            if size < 1:
                raise self.error("ring size must be positive", t, code="bad-habitat")
            return Habitat.ring(size)
        if self.at_kw("graph"):
            self.advance()
            self.expect_sym("{")
            nodes: list[str] = []
            edges: list[tuple[str, str]] = []

            def add(name: str) -> None:
                if name not in nodes:
                    nodes.append(name)

            while not self.at_sym("}"):
                if self.at_kw("node"):
                    self.advance()
                    add(self.parse_location_name().text)
                else:
                    a = self.parse_location_name()
                    self.expect_sym("--")
                    b = self.parse_location_name()
                    if a.text == b.text:
                        raise self.error(f"self-loop on location {a.text!r}", a, code="bad-habitat")
                    add(a.text)
                    add(b.text)
                    edges.append((a.text, b.text))
                self.skip_semis()
            self.expect_sym("}")
            if not nodes:
                raise self.error("graph habitat needs at least one node", code="bad-habitat")
            try:
                return Habitat.graph(nodes, edges)
            except LocationError as exc:
                raise self.error(str(exc), code="bad-habitat") from None
        raise self.error("expected 'ring' or 'graph'")

    def parse_species(self) -> SpeciesDef:
        start = self.expect_kw("species")
        name = self.expect_ident("species name").text
        self.expect_sym("{")
        procs: list[ProcessDef] = []
        self.skip_semis()
        while not self.at_sym("}"):
            pstart = self.expect_kw("process")
            pname = self.expect_ident("process name").text
            self.expect_sym("=")
            body = self.parse_term()
            procs.append(ProcessDef(pname, body, pstart.span))
            self.skip_semis()
        self.expect_sym("}")
        return SpeciesDef(name, tuple(procs), start.span)

    def parse_system(self) -> list[SystemEntry]:
        self.expect_kw("system")
        self.expect_sym("{")
        entries: list[SystemEntry] = []
        self.skip_semis()
        while not self.at_sym("}"):
            start = self.tok
            species = None
            if self.at("ident") and self.peek().kind == "sym" and self.peek().text == ":":
                species = self.advance().text
                self.advance()
            term = self.parse_term()
            self.expect_sym("@")
            loc = self.parse_location_name().text
            self.expect_sym("*")
            negative = False
            if self.at_sym("-"):
                self.advance()
                negative = True
            t = self.tok
            if t.kind != "int":
                raise self.error("population count must be an integer", code="bad-count")
            self.advance()
            count = -int(t.text) if negative else int(t.text)
            entries.append(SystemEntry(term, species, loc, count, start.span))
            self.skip_semis()
        self.expect_sym("}")
        return entries

    def parse_restrict(self) -> list[str]:
        self.expect_kw("restrict")
        self.expect_sym("{")
        names: list[str] = []
        while not self.at_sym("}"):
            names.append(self.expect_ident("channel name").text)
            if self.at_sym(","):
                self.advance()
            elif not self.at_sym("}"):
                raise self.error("expected ',' or '}' in restrict block")
        self.expect_sym("}")
        return names

    # -- terms ---------------------------------------------------------------

    def parse_term(self) -> Term:
        t = self.tok
        if t.kind == "int":
            if t.text != "0":
                raise self.error(f"unexpected number {t.text!r} in process term")
            self.advance()
            return NIL
        if self.at_sym("("):
            self.advance()
            inner = self.parse_term()
            self.expect_sym(")")
            return inner
        if self.at_kw("par"):
            self.advance()
            self.expect_sym("(")
            items = [self.parse_term()]
            while self.at_sym(","):
                self.advance()
                items.append(self.parse_term())
            self.expect_sym(")")
            return Par(tuple(items))
        if self.at_kw("pchoice"):
            return self.parse_pchoice()
        if self.at_kw("tick"):
            self.advance()
            self.expect_sym(".")
            return Prefix(Tick(), self.parse_term())
        if self.at_kw("go"):
            self.advance()
            target = self.parse_locexpr()
            self.expect_sym(".")
            return Prefix(Go(target), self.parse_term())
        if self.at_kw("in") or self.at_kw("out"):
            ctor = In if self.advance().text == "in" else Out
            action = ctor(self.expect_ident("channel name").text)
            return self.parse_after_channel(action)
        if t.kind == "ident":
            self.advance()
            if self.at_sym("?"):
                return self.parse_after_channel(In(t.text))
            return Ref(t.text)
        if t.kind == "kw":
            raise self.error(f"unexpected keyword {t.text!r} in process term", code="unknown-keyword")
        raise self.error(f"expected a process term, found {t.text or 'end of file'!r}")

    def parse_after_channel(self, action) -> Term:
        if self.at_sym("."):
            self.advance()
            return Prefix(action, self.parse_term())
        if self.at_sym("?"):
            self.advance()
            self.expect_sym("(")
            then = self.parse_term()
            self.expect_sym(",")
            orelse = self.parse_term()
            self.expect_sym(")")
            return Cond(action, then, orelse)
        raise self.error("expected '.' or '?' after channel")

    def parse_locexpr(self):
        if self.at_kw("myloc"):
            self.advance()
            if self.at_sym("+") or self.at_sym("-"):
                sign = 1 if self.advance().text == "+" else -1
                t = self.tok
                if t.kind != "int":
                    raise self.error("expected an integer offset after myloc")
                self.advance()
                return Offset(sign * int(t.text))
            return MyLoc()
        if self.at_kw("it"):
            self.advance()
            return It()
        return Lit(self.parse_location_name().text)

    def parse_pchoice(self) -> Term:
        self.expect_kw("pchoice")
        if self.at_kw("over"):
            self.advance()
            self.expect_kw("neighbors")
            self.expect_sym("{")
            body = self.parse_term()
            self.skip_semis()
            self.expect_sym("}")
            return NbChoice(body)
        self.expect_sym("{")
        branches: list[tuple[Prob, Term]] = []
        while True:
            p = self.parse_prob()
            self.expect_sym(":")
            branches.append((p, self.parse_term()))
            self.skip_semis()
            if self.at_sym("}"):
                break
        self.expect_sym("}")
        return Choice(tuple(branches))

    def parse_prob(self) -> Prob:
        sign = 1
        if self.at_sym("-"):
            self.advance()
            sign = -1
        total = self.parse_prob_atom(sign)
        while self.at_sym("+") or self.at_sym("-"):
            sign = 1 if self.advance().text == "+" else -1
            total = total + self.parse_prob_atom(sign)
        return total

    def parse_prob_atom(self, sign: int) -> Prob:
        t = self.tok
        if t.kind == "ident":
            self.advance()
            return Prob.param(t.text) if sign > 0 else -Prob.param(t.text)
        if t.kind in ("int", "dec"):
            value = self.parse_number()
            if self.at_sym("*"):
                self.advance()
                name = self.expect_ident("parameter name").text
                return Prob._make(Fraction(0), {name: sign * value})
            return Prob.literal(sign * value)
        raise self.error(f"malformed probability {t.text or 'end of file'!r}", code="bad-probability")


def _infer_species(spec: ModelSpec) -> ModelSpec:
    owner = spec.species_of_constant()
    entries = []
    for e in spec.system:
        species = e.species
        if species is None:
            owners = {owner[r] for r in refs_of(e.term) if r in owner}
            if len(owners) == 1:
                species = owners.pop()
            elif not owners and len(spec.species) == 1:
                species = spec.species[0].name
        entries.append(SystemEntry(e.term, species, e.location, e.count, e.span))
    return ModelSpec(spec.params, spec.habitat, spec.species, tuple(entries), spec.restricted,
                     spec.path, spec.habitat_span)


def parse(text: str, path: str = "<string>") -> ModelSpec:
    return Parser(text, path).parse_model()


def parse_file(path) -> ModelSpec:
    p = Path(path)
    return parse(p.read_text(encoding="utf-8"), str(path))
