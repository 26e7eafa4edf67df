"""Model structure (species, system, parameters) and term canonicalization."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Mapping, Optional

from .habitat import Habitat
from .terms import (
    NIL,
    Choice,
    NbChoice,
    Nil,
    Offset,
    Par,
    Prob,
    Ref,
    Term,
    bind_it,
    normalize,
    render_term,
)


@dataclass(frozen=True)
class Span:
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


@dataclass(frozen=True)
class ParamDef:
    name: str
    value: Fraction
    span: Optional[Span] = field(default=None, compare=False)


@dataclass(frozen=True)
class ProcessDef:
    name: str
    body: Term
    span: Optional[Span] = field(default=None, compare=False)


@dataclass(frozen=True)
class SpeciesDef:
    name: str
    processes: tuple[ProcessDef, ...]
    span: Optional[Span] = field(default=None, compare=False)


@dataclass(frozen=True)
class SystemEntry:
    """``q`` individuals of ``species`` in state ``term`` at ``location``."""

    term: Term
    species: Optional[str]
    location: str
    count: int
    span: Optional[Span] = field(default=None, compare=False)


@dataclass(frozen=True)
class ModelSpec:
    params: tuple[ParamDef, ...]
    habitat: Habitat
    species: tuple[SpeciesDef, ...]
    system: tuple[SystemEntry, ...]
    restricted: tuple[str, ...]
    path: str = field(default="<string>", compare=False)
    habitat_span: Optional[Span] = field(default=None, compare=False)

    @property
    def param_values(self) -> dict[str, Fraction]:
        return {p.name: p.value for p in self.params}

    def definitions(self) -> dict[str, Term]:
        """All process constants; the first definition of a name wins."""
        defs: dict[str, Term] = {}
        for sp in self.species:
            for proc in sp.processes:
                defs.setdefault(proc.name, proc.body)
        return defs

    def species_of_constant(self) -> dict[str, str]:
        owner: dict[str, str] = {}
        for sp in self.species:
            for proc in sp.processes:
                owner.setdefault(proc.name, sp.name)
        return owner

    def iter_processes(self) -> Iterator[tuple[SpeciesDef, ProcessDef]]:
        for sp in self.species:
            for proc in sp.processes:
                yield sp, proc

    def with_params(self, overrides: Mapping[str, Fraction]) -> "ModelSpec":
        unknown = set(overrides) - {p.name for p in self.params}
        if unknown:
            raise KeyError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
        params = tuple(
            ParamDef(p.name, Fraction(overrides[p.name]), p.span) if p.name in overrides else p
            for p in self.params
        )
        return ModelSpec(params, self.habitat, self.species, self.system, self.restricted,
                         self.path, self.habitat_span)

    def with_habitat(self, habitat: Habitat) -> "ModelSpec":
        return ModelSpec(self.params, habitat, self.species, self.system, self.restricted,
                         self.path, self.habitat_span)

    def scaled(self, factor: int) -> "ModelSpec":
        system = tuple(
            SystemEntry(e.term, e.species, e.location, e.count * factor, e.span) for e in self.system
        )
        return ModelSpec(self.params, self.habitat, self.species, system, self.restricted,
                         self.path, self.habitat_span)


class CanonicalizeError(ValueError):
    pass


@dataclass(frozen=True)
class Spawn:
    """Multiset of parallel-free states, in canonical order."""

    items: tuple[tuple[Term, int], ...]

    def __iter__(self):
        return iter(self.items)

    def __len__(self) -> int:
        return len(self.items)

    @property
    def total(self) -> int:
        return sum(c for _, c in self.items)

    def as_dict(self) -> dict[Term, int]:
        return dict(self.items)


def expand_ring_choice(term: NbChoice, habitat: Habitat) -> Term:
    offsets = habitat.ring_offsets()
    if not offsets:
        raise CanonicalizeError("neighbour choice on a ring without neighbours")
    p = Prob.literal(Fraction(1, len(offsets)))
    return Choice(tuple((p, bind_it(term.body, Offset(k))) for k in offsets))


def canonicalize(term: Term, defs: Mapping[str, Term], habitat: Optional[Habitat] = None) -> Spawn:
    """Flatten ``term`` into a multiset of parallel-free individual states.

    Constants are unfolded only until a non-constant head appears. On ring
    habitats a neighbour choice at the head is expanded to an explicit
    probabilistic choice over ``myloc+1`` / ``myloc-1``.
    """
    leaves: list[Term] = []

    def visit(t: Term, chain: tuple[str, ...]) -> None:
        if isinstance(t, Ref):
            if t.name in chain:
                cycle = " -> ".join(chain + (t.name,))
                raise CanonicalizeError(f"unguarded recursion: {cycle}")
            if t.name not in defs:
                raise CanonicalizeError(f"undefined process constant {t.name!r}")
            visit(defs[t.name], chain + (t.name,))
        elif isinstance(t, Par):
            for item in t.items:
                visit(item, chain)
        else:
            t = normalize(t)
            if isinstance(t, NbChoice) and habitat is not None and habitat.is_ring:
                t = expand_ring_choice(t, habitat)
            leaves.append(t)

    visit(term, ())
    live = [t for t in leaves if not isinstance(t, Nil)]
    if not live:
        return Spawn(((NIL, 1),))
    counts = Counter(live)
    return Spawn(tuple(sorted(counts.items(), key=lambda kv: render_term(kv[0]))))
