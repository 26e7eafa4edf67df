"""Reachable individual states and the initial occupancy matrix."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .dsl.validate import ValidatedModel
from .habitat import Habitat
from .model import ModelSpec, Spawn, canonicalize
from .terms import (
    Choice,
    Cond,
    Go,
    In,
    NbChoice,
    NbIndex,
    Nil,
    Out,
    Prefix,
    Term,
    Tick,
    bind_it,
    render_action,
    render_term,
)

DEFAULT_STATE_CAP = 10_000

# head classes
PROB, TICK, GO, CHAN, FREE, COND, NIL = "prob", "tick", "go", "chan", "free", "cond", "nil"


class StateSpaceError(RuntimeError):
    pass


@dataclass(frozen=True)
class StateInfo:
    index: int
    species: str
    term: Term
    head: str
    name: Optional[str] = None

    @property
    def label(self) -> str:
        """The defining constant's name, or the rendered term for anonymous states."""
        return self.name if self.name is not None else render_term(self.term)

    @property
    def head_label(self) -> str:
        t = self.term
        if self.head in (CHAN, FREE, COND):
            return f"{self.head}({render_action(t.action)})"
        return self.head


def classify(term: Term, restricted) -> str:
    if isinstance(term, Nil):
        return NIL
    if isinstance(term, (Choice, NbChoice)):
        return PROB
    if isinstance(term, Cond):
        return COND
    if isinstance(term, Prefix):
        a = term.action
        if isinstance(a, Tick):
            return TICK
        if isinstance(a, Go):
            return GO
        if isinstance(a, (In, Out)):
            return CHAN if a.channel in restricted else FREE
    raise TypeError(f"not an individual state: {render_term(term)}")


def branch_terms(term: Term, habitat: Habitat) -> list[Term]:
    """Immediate successor terms of a state, before canonicalization."""
    if isinstance(term, Choice):
        return [b for _, b in term.branches]
    if isinstance(term, NbChoice):
        return [bind_it(term.body, NbIndex(k)) for k in range(habitat.max_degree)]
    if isinstance(term, Prefix):
        return [term.cont]
    if isinstance(term, Cond):
        return [term.then, term.orelse]
    return []


@dataclass
class StateSpace:
    habitat: Habitat
    species: tuple[str, ...]
    states: list[StateInfo]
    restricted: frozenset[str]
    defs: dict[str, Term] = field(repr=False)
    initial: tuple[int, ...] = ()
    _index: dict[tuple[str, Term], int] = field(default_factory=dict, repr=False)
    _spawn_cache: dict[tuple[str, Term], tuple[tuple[int, int], ...]] = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def m(self) -> int:
        return self.habitat.m

    def __len__(self) -> int:
        return len(self.states)

    def __iter__(self):
        return iter(self.states)

    def __getitem__(self, i: int) -> StateInfo:
        return self.states[i]

    def lookup(self, species: str, term: Term) -> int:
        return self._index[(species, term)]

    def find(self, label: str, species: Optional[str] = None) -> int:
        """Index of the state whose label (name or rendered term) is ``label``."""
        for st in self.states:
            if st.label == label and (species is None or st.species == species):
                return st.index
        raise KeyError(label)

    def spawn(self, species: str, term: Term) -> tuple[tuple[int, int], ...]:
        """State indices and multiplicities produced by entering ``term``."""
        key = (species, term)
        cached = self._spawn_cache.get(key)
        if cached is None:
            sp = canonicalize(term, self.defs, self.habitat)
            cached = tuple((self._index[(species, t)], c) for t, c in sp)
            self._spawn_cache[key] = cached
        return cached

    def labels(self) -> list[str]:
        return [s.label for s in self.states]

    def display_labels(self) -> list[str]:
        """Labels for equations and tables; anonymous terms are bracketed."""
        return [s.name if s.name is not None else f"[{render_term(s.term)}]" for s in self.states]

    def render(self) -> str:
        return "".join(f"{s.index}: {render_term(s.term)} [head={s.head_label}]\n" for s in self.states)


def _spec(model: Union[ValidatedModel, ModelSpec]) -> ModelSpec:
    return model.spec if isinstance(model, ValidatedModel) else model


def enumerate_states(model: Union[ValidatedModel, ModelSpec], cap: int = DEFAULT_STATE_CAP) -> StateSpace:
    """Fixed-point closure of the states reachable from the initial system.

    States are grouped per species (declaration order); within a species the
    initial states come first, followed by the others in breadth-first order.
    """
    spec = _spec(model)
    habitat = spec.habitat
    defs = spec.definitions()
    restricted = frozenset(spec.restricted)
    owner = spec.species_of_constant()
    species_names = tuple(sp.name for sp in spec.species)

    # constant names per canonical singleton body, first definition wins
    names: dict[tuple[str, Term], str] = {}
    for sp, proc in spec.iter_processes():
        if owner.get(proc.name) != sp.name:
            continue
        body = canonicalize(proc.body, defs, habitat)
        if len(body) == 1 and body.items[0][1] == 1:
            names.setdefault((sp.name, body.items[0][0]), proc.name)

    ordered: dict[str, list[Term]] = {s: [] for s in species_names}
    seen: set[tuple[str, Term]] = set()
    queue: deque[tuple[str, Term]] = deque()
    total = 0

    def add(species: str, term: Term) -> None:
        nonlocal total
        key = (species, term)
        if key in seen:
            return
        seen.add(key)
        total += 1
        if total > cap:
            raise StateSpaceError(
                f"state space exceeds {cap} states; still growing at {render_term(term)}"
            )
        ordered[species].append(term)
        queue.append(key)

    initial_keys: list[tuple[str, Term]] = []
    for entry in spec.system:
        for term, _ in canonicalize(entry.term, defs, habitat):
            add(entry.species, term)
            initial_keys.append((entry.species, term))
    while queue:
        species, term = queue.popleft()
        for nxt in branch_terms(term, habitat):
            for t, _ in canonicalize(nxt, defs, habitat):
                add(species, t)

    states: list[StateInfo] = []
    index: dict[tuple[str, Term], int] = {}
    for species in species_names:
        for term in ordered[species]:
            i = len(states)
            states.append(StateInfo(i, species, term, classify(term, restricted), names.get((species, term))))
            index[(species, term)] = i
    initial = tuple(sorted({index[k] for k in initial_keys}))
    return StateSpace(habitat, species_names, states, restricted, defs, initial, index)


def build_init_matrix(model: Union[ValidatedModel, ModelSpec], space: StateSpace) -> np.ndarray:
    """``n x m`` integer matrix of initial counts (states by locations)."""
    spec = _spec(model)
    init = np.zeros((space.n, space.m), dtype=np.int64)
    for entry in spec.system:
        loc = spec.habitat.index_of(entry.location)
        spawn: Spawn = canonicalize(entry.term, space.defs, spec.habitat)
        for term, mult in spawn:
            init[space.lookup(entry.species, term), loc] += mult * entry.count
    return init
