"""Well-formedness checks for parsed models.

:func:`check` collects every diagnostic without stopping at the first one;
:func:`validate` raises :class:`ModelError` if any of them is an error.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

from ..model import ModelSpec, Span
from ..terms import (
    Choice,
    Cond,
    Go,
    In,
    It,
    Lit,
    NbChoice,
    Offset,
    Out,
    Par,
    Prefix,
    Ref,
    Term,
    refs_of,
    subterms,
)
from .diagnostics import ERROR, WARNING, Diagnostic, ModelError

_DEFAULT_SPAN = Span(1, 1)


@dataclass(frozen=True)
class ValidatedModel:
    """A model that passed :func:`validate`, plus its warnings."""

    spec: ModelSpec
    warnings: tuple[Diagnostic, ...] = ()


class _Collector:
    def __init__(self, path: str):
        self.path = path
        self.items: list[Diagnostic] = []
        self._seen: set[tuple] = set()

    def add(self, severity: str, code: str, message: str, span: Optional[Span]) -> None:
        key = (severity, code, message, span)
        if key not in self._seen:
            self._seen.add(key)
            self.items.append(Diagnostic(severity, code, message, span or _DEFAULT_SPAN, self.path))

    def error(self, code: str, message: str, span: Optional[Span]) -> None:
        self.add(ERROR, code, message, span)

    def warn(self, code: str, message: str, span: Optional[Span]) -> None:
        self.add(WARNING, code, message, span)


def _sort_key(d: Diagnostic):
    span = d.span or _DEFAULT_SPAN
    return (span.line, span.col, d.severity != ERROR, d.code, d.message)


def _unguarded_refs(term: Term) -> set[str]:
    """Constants reachable from ``term`` without passing under a guard."""
    if isinstance(term, Ref):
        return {term.name}
    if isinstance(term, Par):
        out: set[str] = set()
        for item in term.items:
            out |= _unguarded_refs(item)
        return out
    return set()


def _find_unguarded_cycles(defs: dict[str, Term]) -> list[list[str]]:
    graph = {name: sorted(_unguarded_refs(body) & defs.keys()) for name, body in defs.items()}
    cycles: list[list[str]] = []
    reported: set[frozenset] = set()
    for start in defs:
        # depth-first search for a path back to ``start``
        stack = [(start, [start])]
        visited: set[str] = set()
        while stack:
            node, path = stack.pop()
            for nxt in graph[node]:
                if nxt == start:
                    key = frozenset(path)
                    if key not in reported:
                        reported.add(key)
                        cycles.append(path + [start])
                elif nxt not in visited:
                    visited.add(nxt)
                    stack.append((nxt, path + [nxt]))
    return cycles


def _check_term(term: Term, spec: ModelSpec, out: _Collector, span: Optional[Span], where: str) -> None:
    habitat = spec.habitat
    params = spec.param_values
    defs = spec.definitions()

    def walk(t: Term, in_nb: bool) -> None:
        if isinstance(t, Ref):
            if t.name not in defs:
                out.error("undefined-constant", f"undefined process constant {t.name!r} in {where}", span)
        elif isinstance(t, Prefix):
            action = t.action
            if isinstance(action, Go):
                target = action.target
                if isinstance(target, Lit) and target.name not in habitat.names:
                    out.error("bad-location", f"location {target.name!r} is not in the habitat ({where})", span)
                elif isinstance(target, Offset) and not habitat.is_ring:
                    out.error("offset-non-ring", f"myloc offsets need a ring habitat ({where})", span)
                elif isinstance(target, It) and not in_nb:
                    out.error("unbound-it", f"'it' used outside 'pchoice over neighbors' ({where})", span)
            walk(t.cont, in_nb)
        elif isinstance(t, Choice):
            _check_choice(t, params, out, span, where)
            for _, branch in t.branches:
                walk(branch, in_nb)
        elif isinstance(t, NbChoice):
            isolated = [habitat.names[i] for i in range(habitat.m) if not habitat.neighbors(i)]
            if isolated:
                out.error(
                    "no-neighbors",
                    f"neighbour choice used but location(s) {', '.join(isolated)} have no neighbours ({where})",
                    span,
                )
            walk(t.body, True)
        elif isinstance(t, Cond):
            walk(t.then, in_nb)
            walk(t.orelse, in_nb)
        elif isinstance(t, Par):
            for item in t.items:
                walk(item, in_nb)

    walk(term, False)


def _check_choice(choice: Choice, params: dict[str, Fraction], out: _Collector, span, where: str) -> None:
    unbound = sorted({name for p, _ in choice.branches for name in p.params()} - params.keys())
    for name in unbound:
        out.error("unbound-param", f"parameter {name!r} has no value ({where})", span)
    if unbound:
        return
    total = Fraction(0)
    for p, _ in choice.branches:
        value = p.value(params)
        total += value
        if value == 0 and p.is_literal:
            out.error("bad-probability", f"probability {p.render()} is not in (0,1] ({where})", span)
        elif value == 0:
            out.warn("zero-probability", f"probability {p.render()} evaluates to 0 ({where})", span)
        elif not 0 < value <= 1:
            out.error("bad-probability", f"probability {p.render()} = {value} is not in (0,1] ({where})", span)
    if total != 1:
        out.error("probability-sum", f"probabilities sum to {total} ≠ 1 ({where})", span)


def _reachable_constants(roots: Iterable[Term], defs: dict[str, Term]) -> set[str]:
    seen: set[str] = set()
    todo = [name for t in roots for name in refs_of(t)]
    while todo:
        name = todo.pop()
        if name in seen or name not in defs:
            continue
        seen.add(name)
        todo.extend(refs_of(defs[name]))
    return seen


def check(spec: ModelSpec) -> list[Diagnostic]:
    """Return every diagnostic for ``spec``, sorted by source position."""
    out = _Collector(spec.path)
    habitat = spec.habitat
    restricted = set(spec.restricted)

    seen_params: set[str] = set()
    for p in spec.params:
        if p.name in seen_params:
            out.error("duplicate-param", f"parameter {p.name!r} declared twice", p.span)
        seen_params.add(p.name)

    seen_species: set[str] = set()
    seen_procs: set[str] = set()
    owner = spec.species_of_constant()
    for sp in spec.species:
        if sp.name in seen_species:
            out.error("duplicate-species", f"species {sp.name!r} declared twice", sp.span)
        seen_species.add(sp.name)
        for proc in sp.processes:
            if proc.name in seen_procs:
                out.error("duplicate-process", f"process {proc.name!r} defined twice", proc.span)
            seen_procs.add(proc.name)
            where = f"process {proc.name}"
            _check_term(proc.body, spec, out, proc.span, where)
            for name in sorted(refs_of(proc.body)):
                if name in owner and owner[name] != sp.name:
                    out.error(
                        "cross-species",
                        f"process {proc.name} of species {sp.name} refers to {name} of species {owner[name]}",
                        proc.span,
                    )

    defs = spec.definitions()
    spans = {proc.name: proc.span for _, proc in spec.iter_processes()}
    for cycle in _find_unguarded_cycles(defs):
        out.error("unguarded-recursion", f"unguarded recursion: {' -> '.join(cycle)}", spans.get(cycle[0]))

    for e in spec.system:
        where = "system entry"
        _check_term(e.term, spec, out, e.span, where)
        if e.location not in habitat.names:
            out.error("bad-location", f"location {e.location!r} is not in the habitat", e.span)
        if e.count < 0:
            out.error("negative-count", f"population count {e.count} is negative", e.span)
        if e.species is None:
            out.error("unknown-species", "cannot determine the species of this system entry", e.span)
        elif e.species not in seen_species:
            out.error("unknown-species", f"unknown species {e.species!r}", e.span)
        else:
            for name in sorted(refs_of(e.term)):
                if name in owner and owner[name] != e.species:
                    out.error(
                        "species-mismatch",
                        f"{name} belongs to species {owner[name]}, not {e.species}",
                        e.span,
                    )

    # channel usage of everything reachable from the initial system
    reachable = _reachable_constants((e.term for e in spec.system), defs)
    scopes: list[tuple[Term, Optional[Span]]] = [(e.term, e.span) for e in spec.system]
    scopes += [(defs[name], spans.get(name)) for name in sorted(reachable)]
    sides: dict[str, set[type]] = {}
    for term, span in scopes:
        for t in subterms(term):
            if isinstance(t, Cond):
                sides.setdefault(t.action.channel, set()).add(type(t.action))
                if t.action.channel not in restricted:
                    out.error(
                        "unrestricted-cond",
                        f"unrestricted conditional channel {t.action.channel!r}",
                        span,
                    )
            elif isinstance(t, Prefix) and isinstance(t.action, (In, Out)):
                sides.setdefault(t.action.channel, set()).add(type(t.action))
                if t.action.channel not in restricted:
                    out.warn(
                        "free-channel",
                        f"channel {t.action.channel!r} is not restricted; its actions never block",
                        span,
                    )
    for channel in sorted(restricted & sides.keys()):
        if len(sides[channel]) == 1:
            out.warn("no-partner", f"restricted channel {channel!r} has no complementary performers", spec.habitat_span)

    return sorted(out.items, key=_sort_key)


def validate(spec: ModelSpec) -> ValidatedModel:
    diagnostics = check(spec)
    errors = [d for d in diagnostics if d.severity == ERROR]
    if errors:
        raise ModelError(diagnostics)
    return ValidatedModel(spec, tuple(diagnostics))
