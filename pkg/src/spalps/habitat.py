"""Habitats: the finite location graph and location resolution."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

from .terms import It, Lit, LocExpr, MyLoc, NbIndex, Offset

LocationId = int


class LocationError(ValueError):
    pass


@dataclass(frozen=True)
class Habitat:
    """Ring of ``len(names)`` locations, or an undirected graph.

    ``edges`` holds index pairs ``(a, b)`` with ``a < b``; for rings it is
    left empty and adjacency is implied.
    """

    kind: str
    names: tuple[str, ...]
    edges: tuple[tuple[int, int], ...] = ()

    @classmethod
    def ring(cls, size: int) -> "Habitat":
        if size < 1:
            raise LocationError("ring size must be positive")
        return cls("ring", tuple(str(i + 1) for i in range(size)))

    @classmethod
    def graph(cls, nodes, edges) -> "Habitat":
        nodes = tuple(str(n) for n in nodes)
        if len(set(nodes)) != len(nodes):
            raise LocationError("duplicate node names")
        index = {n: i for i, n in enumerate(nodes)}
        pairs = set()
        for a, b in edges:
            ia, ib = index[str(a)], index[str(b)]
            if ia == ib:
                raise LocationError(f"self-loop on node {a!r}")
            pairs.add((min(ia, ib), max(ia, ib)))
        return cls("graph", nodes, tuple(sorted(pairs)))

    @property
    def m(self) -> int:
        return len(self.names)

    @property
    def is_ring(self) -> bool:
        return self.kind == "ring"

    @cached_property
    def _adjacency(self) -> tuple[tuple[int, ...], ...]:
        m = self.m
        if self.is_ring:
            return tuple(tuple(sorted({(i - 1) % m, (i + 1) % m} - {i})) for i in range(m))
        adj: list[set[int]] = [set() for _ in range(m)]
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        return tuple(tuple(sorted(s)) for s in adj)

    @cached_property
    def _index(self) -> dict[str, int]:
        return {n: i for i, n in enumerate(self.names)}

    def index_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise LocationError(f"unknown location {name!r}") from None

    def check(self, loc: int) -> None:
        if not 0 <= loc < self.m:
            raise LocationError(f"location index {loc} outside habitat of size {self.m}")

    def neighbors(self, loc: int) -> tuple[int, ...]:
        self.check(loc)
        return self._adjacency[loc]

    def degree(self, loc: int) -> int:
        return len(self.neighbors(loc))

    @cached_property
    def max_degree(self) -> int:
        return max((len(a) for a in self._adjacency), default=0)

    def ring_offsets(self) -> tuple[int, ...]:
        """Signed offsets that reach the neighbours of any ring location."""
        m = self.m
        if m >= 3:
            return (1, -1)
        if m == 2:
            return (1,)
        return ()

    def offset_label(self, delta: int) -> str:
        """Render a relative ring displacement as ``l``, ``l+1`` or ``l-1``."""
        m = self.m
        d = delta % m
        if d > m // 2:
            d -= m
        if d == 0:
            return "l"
        return f"l+{d}" if d > 0 else f"l-{-d}"

    def render(self) -> str:
        if self.is_ring:
            return f"habitat ring({self.m})"
        lines = [f"{self.names[a]} -- {self.names[b]}" for a, b in self.edges]
        # listing nodes first keeps isolated nodes and declaration order
        body = "; ".join([f"node {n}" for n in self.names] + lines)
        return f"habitat graph {{ {body} }}"


def neighbors(habitat: Habitat, loc: LocationId) -> frozenset[LocationId]:
    return frozenset(habitat.neighbors(loc))


def resolve_location(expr: LocExpr, myloc: LocationId, habitat: Habitat) -> LocationId:
    habitat.check(myloc)
    if isinstance(expr, MyLoc):
        return myloc
    if isinstance(expr, Lit):
        return habitat.index_of(expr.name)
    if isinstance(expr, Offset):
        if not habitat.is_ring:
            raise LocationError("myloc offsets are only defined on ring habitats")
        return (myloc + expr.k) % habitat.m
    if isinstance(expr, NbIndex):
        nbs = habitat.neighbors(myloc)
        if expr.k >= len(nbs):
            raise LocationError(f"location {habitat.names[myloc]} has no neighbour #{expr.k}")
        return nbs[expr.k]
    if isinstance(expr, It):
        raise LocationError("'it' used outside a neighbour choice")
    raise TypeError(expr)


def move_target(expr: LocExpr, myloc: LocationId, habitat: Habitat) -> LocationId:
    """Destination of a move; ``myloc`` for a neighbour index the location lacks.

    Such cells are never populated: a neighbour choice at a location of
    degree d only produces indices below d.
    """
    if isinstance(expr, NbIndex) and expr.k >= habitat.degree(myloc):
        return myloc
    return resolve_location(expr, myloc, habitat)
