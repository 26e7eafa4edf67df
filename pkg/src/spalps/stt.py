"""State-transition table: symbolic one-step flows between (state, location) cells."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Optional, Union

from .dsl.render import render as render_model
from .dsl.validate import ValidatedModel
from .expr import (
    Expr,
    Poly,
    Var,
    comm_share,
    evaluate,
    relocate,
    render as render_expr,
    total,
    var,
)
from .habitat import Habitat, move_target
from .model import ModelSpec, canonicalize
from .statespace import CHAN, COND, FREE, GO, NIL, PROB, TICK, StateSpace
from .terms import Choice, Cond, In, NbChoice, NbIndex, bind_it

# row kinds
KIND_OF_HEAD = {PROB: "prob", TICK: "tick", GO: "go", CHAN: "comm", COND: "comm", FREE: "free", NIL: "nil"}
ACTION_KINDS = frozenset({"go", "comm", "free"})


@dataclass(frozen=True)
class Flow:
    """Mass ``expr`` moving from ``(source, src_loc)`` to ``(target, tgt_loc)`` in one step."""

    source: int
    src_loc: int
    target: int
    tgt_loc: int
    expr: Expr
    kind: str


@dataclass(frozen=True)
class CommGroup:
    """Performers of a restricted channel at one location.

    ``inputs`` and ``outputs`` list the states whose head is an input
    (respectively output) on the channel.
    """

    channel: str
    loc: int
    inputs: tuple[int, ...]
    outputs: tuple[int, ...]

    @property
    def input_total(self) -> Expr:
        return total(var(k, self.loc) for k in self.inputs)

    @property
    def output_total(self) -> Expr:
        return total(var(k, self.loc) for k in self.outputs)


@dataclass
class TransitionTable:
    space: StateSpace
    flows: list[Flow]
    kinds: list[str]
    params: dict[str, Fraction]
    groups: dict[tuple[str, int], CommGroup] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    labels: Optional[list[str]] = None
    fingerprint: str = ""

    @property
    def habitat(self) -> Habitat:
        return self.space.habitat

    @property
    def n(self) -> int:
        return self.space.n

    @property
    def m(self) -> int:
        return self.space.m

    def state_labels(self) -> list[str]:
        return self.labels if self.labels is not None else self.space.display_labels()

    def entry(self, source: int, target: int, loc: int) -> Expr:
        """``STT[source][target][loc]``: everything ``source`` sends into ``target@loc``."""
        return total(f.expr for f in self.flows if f.source == source and f.target == target and f.tgt_loc == loc)

    def row(self, source: int, src_loc: int) -> list[Flow]:
        return [f for f in self.flows if f.source == source and f.src_loc == src_loc]

    def sources(self) -> list[int]:
        return sorted({f.source for f in self.flows})


def _merge(flows: Iterable[Flow]) -> list[Flow]:
    merged: dict[tuple[int, int, int, int], Flow] = {}
    for f in flows:
        key = (f.source, f.src_loc, f.target, f.tgt_loc)
        if key in merged:
            old = merged[key]
            merged[key] = Flow(*key, old.expr + f.expr, old.kind)
        else:
            merged[key] = f
    return [f for f in merged.values() if not f.expr.is_zero]


def model_fingerprint(spec: ModelSpec) -> str:
    return hashlib.sha256(render_model(spec).encode("utf-8")).hexdigest()


def _spec(model: Union[ValidatedModel, ModelSpec]) -> ModelSpec:
    return model.spec if isinstance(model, ValidatedModel) else model


def comm_groups(space: StateSpace) -> dict[tuple[str, int], CommGroup]:
    sides: dict[str, tuple[list[int], list[int]]] = {}
    for st in space:
        if st.head in (CHAN, COND):
            ins, outs = sides.setdefault(st.term.action.channel, ([], []))
            (ins if isinstance(st.term.action, In) else outs).append(st.index)
    return {
        (ch, loc): CommGroup(ch, loc, tuple(ins), tuple(outs))
        for ch, (ins, outs) in sorted(sides.items())
        for loc in range(space.m)
    }


def build_stt(model: Union[ValidatedModel, ModelSpec], space: StateSpace) -> TransitionTable:
    """Build the symbolic flows of every (state, location) cell.

    Variables are occupancies one step back (lag 1). Parameters stay symbolic.
    """
    spec = _spec(model)
    habitat = space.habitat
    groups = comm_groups(space)
    warnings: list[str] = []
    for ch in sorted({g.channel for g in groups.values()}):
        g = groups[(ch, 0)]
        if not g.inputs or not g.outputs:
            warnings.append(f"channel {ch!r} has performers but no complementary performers")

    flows: list[Flow] = []
    kinds: list[str] = []
    for st in space:
        k, term, species = st.index, st.term, st.species
        kind = KIND_OF_HEAD[st.head]
        kinds.append(kind)
        spawn = lambda t: space.spawn(species, t)  # noqa: E731
        for loc in range(habitat.m):
            v = var(k, loc)

            def emit(t, expr: Expr, tgt_loc: int = loc) -> None:
                for target, mult in spawn(t):
                    flows.append(Flow(k, loc, target, tgt_loc, expr.scale(mult), kind))

            if st.head == PROB:
                if isinstance(term, Choice):
                    for p, branch in term.branches:
                        emit(branch, v.scale(Poly.from_prob(p)))
                else:
                    assert isinstance(term, NbChoice)
                    degree = habitat.degree(loc)
                    for j in range(degree):
                        emit(bind_it(term.body, NbIndex(j)), v.scale(Fraction(1, degree)))
            elif st.head == TICK or st.head == FREE:
                emit(term.cont, v)
            elif st.head == GO:
                emit(term.cont, v, move_target(term.action.target, loc, habitat))
            elif st.head in (CHAN, COND):
                g = groups[(term.action.channel, loc)]
                same, other = (g.input_total, g.output_total)
                if not isinstance(term.action, In):
                    same, other = other, same
                matched = comm_share(v, same, other)
                if isinstance(term, Cond):
                    emit(term.then, matched)
                    emit(term.orelse, v - matched)
                else:
                    emit(term.cont, matched)
                    flows.append(Flow(k, loc, k, loc, v - matched, kind))
            else:
                flows.append(Flow(k, loc, k, loc, v, kind))

    return TransitionTable(space, _merge(flows), kinds, spec.param_values, groups, warnings,
                           fingerprint=model_fingerprint(spec))


# ---------------------------------------------------------------------------
# Mass audit.


@dataclass(frozen=True)
class MassViolation:
    source: int
    loc: int
    expected: Expr
    actual: Expr

    def message(self, labels: list[str]) -> str:
        names = lambda v: f"{labels[v.state]}@{v.loc}"  # noqa: E731
        return (
            f"row {labels[self.source]}@{self.loc}: outgoing mass {render_expr(self.actual, names)}"
            f" != expected {render_expr(self.expected, names)}"
        )


def _spawn_size(term, space: StateSpace) -> int:
    return canonicalize(term, space.defs, space.habitat).total


def expected_mass(space: StateSpace, k: int, loc: int, table: TransitionTable) -> Expr:
    """Outgoing mass of a row, derived from the term alone.

    Probabilistic rows weight each branch's offspring count by its
    probability; other rows send ``size * q`` where ``size`` counts the
    individuals the continuation spawns. Conditional rows with branches of
    unequal size split ``q`` as matched / unmatched.
    """
    st = space[k]
    term = st.term
    v = var(k, loc)
    if st.head == PROB:
        if isinstance(term, Choice):
            return total(v.scale(Poly.from_prob(p) * _spawn_size(b, space)) for p, b in term.branches)
        degree = space.habitat.degree(loc)
        return total(
            v.scale(Fraction(_spawn_size(bind_it(term.body, NbIndex(j)), space), degree)) for j in range(degree)
        )
    if st.head in (TICK, GO, FREE):
        return v.scale(_spawn_size(term.cont, space))
    if st.head == NIL:
        return v
    g = table.groups[(term.action.channel, loc)]
    same, other = g.input_total, g.output_total
    if not isinstance(term.action, In):
        same, other = other, same
    matched = comm_share(v, same, other)
    if isinstance(term, Cond):
        a, b = _spawn_size(term.then, space), _spawn_size(term.orelse, space)
    else:
        a, b = _spawn_size(term.cont, space), 1
    return v.scale(b) + matched.scale(a - b)


_PROBE_POINTS = (1, 2, 3, 5, 7, 11, 13)


def row_mass_check(table: TransitionTable, space: Optional[StateSpace] = None) -> list[MassViolation]:
    """Compare each row's outgoing mass with :func:`expected_mass`.

    Symbolic equality is tried first; otherwise both sides are evaluated
    exactly with the bound parameter values at a few rational occupancies.
    """
    space = space or table.space
    outgoing: dict[tuple[int, int], list[Expr]] = {}
    for f in table.flows:
        outgoing.setdefault((f.source, f.src_loc), []).append(f.expr)
    violations = []
    for st in space:
        for loc in range(space.m):
            actual = total(outgoing.get((st.index, loc), []))
            expected = expected_mass(space, st.index, loc, table)
            if actual == expected:
                continue
            same = all(
                evaluate(actual, (lambda v, s=s: Fraction(_PROBE_POINTS[(v.state + v.loc + s) % 7])), table.params)
                == evaluate(expected, (lambda v, s=s: Fraction(_PROBE_POINTS[(v.state + v.loc + s) % 7])), table.params)
                for s in range(7)
            )
            if not same:
                violations.append(MassViolation(st.index, loc, expected, actual))
    return violations


# ---------------------------------------------------------------------------
# Named view: hide anonymous intermediate states.


def lump_named(table: TransitionTable) -> tuple[TransitionTable, list[int]]:
    """Eliminate anonymous states whose rows are plain linear moves.

    Visible states are the named ones and the initial ones. An anonymous
    state whose every outgoing flow is ``c * q`` into some other state is
    substituted into its incoming flows, composing two steps into one. The
    result (with the indices of the states it still mentions) is a presentation of the table in terms of the named states; it
    is not used for evaluation.
    """
    space = table.space
    visible = {s.index for s in space if s.name is not None} | set(space.initial)
    flows = list(table.flows)
    for st in space:
        a = st.index
        if a in visible or table.kinds[a] not in ("prob", "tick", "go", "free"):
            continue
        out = [f for f in flows if f.source == a]
        if any(f.target == a for f in out):
            continue
        coeff: dict[int, list[tuple[Flow, Poly]]] = {}
        linear = True
        for f in out:
            atoms = f.expr.atoms()
            if len(atoms) != 1 or atoms[0] != Var(a, f.src_loc, 1):
                linear = False
                break
            coeff.setdefault(f.src_loc, []).append((f, f.expr.terms[0][1]))
        if not linear:
            continue
        rebuilt: list[Flow] = []
        for g in flows:
            if g.source == a:
                continue
            if g.target != a:
                rebuilt.append(g)
                continue
            for f, c in coeff.get(g.tgt_loc, []):
                rebuilt.append(Flow(g.source, g.src_loc, f.target, f.tgt_loc, g.expr.scale(c), g.kind))
        flows = _merge(rebuilt)
    kept = sorted({f.source for f in flows} | {f.target for f in flows} | visible)
    lumped = TransitionTable(space, flows, table.kinds, table.params, table.groups, table.warnings,
                             table.labels, table.fingerprint)
    return lumped, kept


def neighbor_sum(habitat: Habitat, loc: int, body: Callable[[int], Expr]) -> Expr:
    """``sum over l' in Nb(loc) of body(l')``."""
    return total(body(j) for j in habitat.neighbors(loc))


# ---------------------------------------------------------------------------
# Text rendering in the source-row layout.


def _row_text(table: TransitionTable, k: int, loc: int, labels: list[str], relative: bool) -> str:
    habitat = table.habitat

    def loc_text(target_loc: int) -> str:
        if relative:
            label = habitat.offset_label(target_loc - loc)
            return "" if label == "l" else f"@({label})"
        return "" if target_loc == loc else f"@{habitat.names[target_loc]}"

    def var_text(v: Var) -> str:
        if v.state == k and v.loc == loc:
            return "q"
        if relative:
            label = habitat.offset_label(v.loc - loc)
            suffix = "" if label == "l" else f"@({label})"
        else:
            suffix = "" if v.loc == loc else f"@{habitat.names[v.loc]}"
        return f"{labels[v.state]}{suffix}"

    def expr_text(e: Expr) -> str:
        if not relative:
            return render_expr(e, var_text)
        # rotate so that terms sort by relative offset
        rotated = relocate(e, lambda j: (j - loc) % habitat.m)
        return render_expr(rotated, lambda v: var_text(Var(v.state, (v.loc + loc) % habitat.m, v.lag)))

    cells = [
        f"{labels[f.target]}{loc_text(f.tgt_loc)}: {expr_text(f.expr)}"
        for f in sorted(table.row(k, loc), key=lambda f: (f.target, (f.tgt_loc - loc) % habitat.m))
    ]
    return "; ".join(cells) if cells else "-"


def render_stt(table: TransitionTable, states: Optional[Iterable[int]] = None) -> str:
    """One line per source state: ``label [kind] -> target: entry; ...``.

    ``q`` stands for the source population at location ``l``. On rings whose
    rows are translation-invariant a single generic line is printed per
    state; otherwise one line per location.
    """
    labels = table.state_labels()
    habitat = table.habitat
    states = list(range(table.n)) if states is None else list(states)
    lines = []
    for k in states:
        kind = table.kinds[k]
        generic = None
        if habitat.is_ring:
            texts = {_row_text(table, k, loc, labels, True) for loc in range(habitat.m)}
            if len(texts) == 1:
                generic = texts.pop()
        if generic is not None:
            lines.append(f"{labels[k]} [{kind}] -> {generic}")
        else:
            for loc in range(habitat.m):
                lines.append(
                    f"{labels[k]}@{habitat.names[loc]} [{kind}] -> {_row_text(table, k, loc, labels, False)}"
                )
    return "\n".join(lines) + "\n"
