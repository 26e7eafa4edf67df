"""Process terms, actions and location expressions of the calculus.

Terms are immutable and hashable; structural equality is dataclass equality.
``render_term`` produces the concrete DSL text and doubles as the canonical
sort key for parallel components.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Union

# ---------------------------------------------------------------------------
# Probabilities: constant + linear combination of named parameters.


@dataclass(frozen=True)
class Prob:
    const: Fraction = Fraction(0)
    terms: tuple[tuple[str, Fraction], ...] = ()

    @classmethod
    def literal(cls, value) -> "Prob":
        return cls(Fraction(value))

    @classmethod
    def param(cls, name: str) -> "Prob":
        return cls(Fraction(0), ((name, Fraction(1)),))

    @classmethod
    def _make(cls, const: Fraction, coeffs: dict[str, Fraction]) -> "Prob":
        terms = tuple(sorted((k, v) for k, v in coeffs.items() if v != 0))
        return cls(Fraction(const), terms)

    def __add__(self, other: "Prob") -> "Prob":
        coeffs = dict(self.terms)
        for k, v in other.terms:
            coeffs[k] = coeffs.get(k, Fraction(0)) + v
        return Prob._make(self.const + other.const, coeffs)

    def __neg__(self) -> "Prob":
        return Prob._make(-self.const, {k: -v for k, v in self.terms})

    def __sub__(self, other: "Prob") -> "Prob":
        return self + (-other)

    def params(self) -> set[str]:
        return {k for k, _ in self.terms}

    @property
    def is_literal(self) -> bool:
        return not self.terms

    def value(self, params: Mapping[str, Fraction]) -> Fraction:
        total = self.const
        for name, coeff in self.terms:
            total += coeff * Fraction(params[name])
        return total

    def render(self) -> str:
        parts: list[tuple[str, str]] = []
        if self.const != 0 or not self.terms:
            c = self.const
            parts.append(("-" if c < 0 else "+", _frac_text(abs(c))))
        for name, coeff in self.terms:
            sign = "-" if coeff < 0 else "+"
            mag = abs(coeff)
            # only unit coefficients are expressible in the surface syntax
            text = name if mag == 1 else f"{_frac_text(mag)}*{name}"
            parts.append((sign, text))
        out = ("-" if parts[0][0] == "-" else "") + parts[0][1]
        for sign, text in parts[1:]:
            out += f" {sign} {text}"
        return out


def _frac_text(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


# ---------------------------------------------------------------------------
# Location expressions.


@dataclass(frozen=True)
class Lit:
    """A location named by its habitat label."""

    name: str


@dataclass(frozen=True)
class MyLoc:
    pass


@dataclass(frozen=True)
class Offset:
    """``myloc + k`` on a ring habitat (taken modulo the ring size)."""

    k: int


@dataclass(frozen=True)
class It:
    """The neighbour bound by ``pchoice over neighbors``."""


@dataclass(frozen=True)
class NbIndex:
    """The k-th neighbour (in index order) of the current location.

    Produced when a neighbour choice is expanded on a graph habitat.
    """

    k: int


LocExpr = Union[Lit, MyLoc, Offset, It, NbIndex]


def render_loc(expr: LocExpr) -> str:
    if isinstance(expr, Lit):
        return expr.name
    if isinstance(expr, MyLoc):
        return "myloc"
    if isinstance(expr, Offset):
        return f"myloc+{expr.k}" if expr.k >= 0 else f"myloc-{-expr.k}"
    if isinstance(expr, It):
        return "it"
    if isinstance(expr, NbIndex):
        return f"nb#{expr.k}"
    raise TypeError(expr)


# ---------------------------------------------------------------------------
# Actions.


@dataclass(frozen=True)
class Tick:
    pass


@dataclass(frozen=True)
class In:
    channel: str


@dataclass(frozen=True)
class Out:
    channel: str


@dataclass(frozen=True)
class Go:
    target: LocExpr


Action = Union[Tick, In, Out, Go]


def complement(action: Union[In, Out]) -> Union[In, Out]:
    return Out(action.channel) if isinstance(action, In) else In(action.channel)


def render_action(action: Action) -> str:
    if isinstance(action, Tick):
        return "tick"
    if isinstance(action, In):
        return f"in {action.channel}"
    if isinstance(action, Out):
        return f"out {action.channel}"
    if isinstance(action, Go):
        return f"go {render_loc(action.target)}"
    raise TypeError(action)


# ---------------------------------------------------------------------------
# Process terms.


@dataclass(frozen=True)
class Nil:
    pass


@dataclass(frozen=True)
class Prefix:
    action: Action
    cont: "Term"


@dataclass(frozen=True)
class Choice:
    branches: tuple[tuple[Prob, "Term"], ...]


@dataclass(frozen=True)
class NbChoice:
    """Uniform choice over the neighbours of the current location."""

    body: "Term"


@dataclass(frozen=True)
class Cond:
    action: Union[In, Out]
    then: "Term"
    orelse: "Term"


@dataclass(frozen=True)
class Par:
    items: tuple["Term", ...]


@dataclass(frozen=True)
class Ref:
    name: str


Term = Union[Nil, Prefix, Choice, NbChoice, Cond, Par, Ref]

NIL = Nil()


def render_term(term: Term) -> str:
    if isinstance(term, Nil):
        return "0"
    if isinstance(term, Ref):
        return term.name
    if isinstance(term, Prefix):
        return f"{render_action(term.action)} . {render_term(term.cont)}"
    if isinstance(term, Choice):
        inner = "; ".join(f"{p.render()}: {render_term(t)}" for p, t in term.branches)
        return f"pchoice {{ {inner} }}"
    if isinstance(term, NbChoice):
        return f"pchoice over neighbors {{ {render_term(term.body)} }}"
    if isinstance(term, Cond):
        head = term.action.channel if isinstance(term.action, In) else f"out {term.action.channel}"
        return f"{head} ? ({render_term(term.then)}, {render_term(term.orelse)})"
    if isinstance(term, Par):
        return "par(" + ", ".join(render_term(t) for t in term.items) + ")"
    raise TypeError(term)


def subterms(term: Term):
    """Yield ``term`` and all of its subterms (pre-order)."""
    stack = [term]
    while stack:
        t = stack.pop()
        yield t
        if isinstance(t, Prefix):
            stack.append(t.cont)
        elif isinstance(t, Choice):
            stack.extend(b for _, b in reversed(t.branches))
        elif isinstance(t, NbChoice):
            stack.append(t.body)
        elif isinstance(t, Cond):
            stack.extend((t.orelse, t.then))
        elif isinstance(t, Par):
            stack.extend(reversed(t.items))


def actions_of(term: Term):
    for t in subterms(term):
        if isinstance(t, (Prefix, Cond)):
            yield t.action


def refs_of(term: Term) -> set[str]:
    return {t.name for t in subterms(term) if isinstance(t, Ref)}


def bind_it(term: Term, target: LocExpr) -> Term:
    """Replace free ``it`` occurrences in ``go`` actions by ``target``."""
    if isinstance(term, Prefix):
        action = term.action
        if isinstance(action, Go) and isinstance(action.target, It):
            action = Go(target)
        return Prefix(action, bind_it(term.cont, target))
    if isinstance(term, Choice):
        return Choice(tuple((p, bind_it(b, target)) for p, b in term.branches))
    if isinstance(term, Cond):
        return Cond(term.action, bind_it(term.then, target), bind_it(term.orelse, target))
    if isinstance(term, Par):
        return Par(tuple(bind_it(t, target) for t in term.items))
    # NbChoice rebinds ``it``; Nil and Ref have nothing to bind
    return term


def normalize(term: Term) -> Term:
    """Flatten nested parallel compositions, drop ``0`` components, sort."""
    if isinstance(term, Prefix):
        return Prefix(term.action, normalize(term.cont))
    if isinstance(term, Choice):
        return Choice(tuple((p, normalize(b)) for p, b in term.branches))
    if isinstance(term, NbChoice):
        return NbChoice(normalize(term.body))
    if isinstance(term, Cond):
        return Cond(term.action, normalize(term.then), normalize(term.orelse))
    if isinstance(term, Par):
        flat: list[Term] = []
        for item in term.items:
            item = normalize(item)
            if isinstance(item, Par):
                flat.extend(item.items)
            elif not isinstance(item, Nil):
                flat.append(item)
        if not flat:
            return NIL
        if len(flat) == 1:
            return flat[0]
        return Par(tuple(sorted(flat, key=render_term)))
    return term
