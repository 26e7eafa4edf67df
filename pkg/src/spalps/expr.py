"""Symbolic expressions for transition entries and recurrences.

An :class:`Expr` is a normalized linear combination ``sum(coeff * atom)``
where each coefficient is a :class:`Poly` over model parameters with exact
rational coefficients and each atom is one of

* ``ONE``: the constant 1,
* :class:`Var`: occupancy of a state at an absolute location, ``lag`` steps back,
* :class:`Min`, :class:`Div`, :class:`Prod`: nonlinear nodes over expressions.

Normalization is applied on construction, so two expressions denote the same
formula (up to commutativity and collection of like terms) exactly when they
compare equal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Optional, Union

from .terms import Prob, _frac_text

Number = Union[int, Fraction]

# ---------------------------------------------------------------------------
# Polynomials over named parameters.

Monomial = tuple[tuple[str, int], ...]


def _mono_mul(a: Monomial, b: Monomial) -> Monomial:
    powers = dict(a)
    for name, k in b:
        powers[name] = powers.get(name, 0) + k
    return tuple(sorted(powers.items()))


def _mono_key(m: Monomial):
    return (sum(k for _, k in m), m)


@dataclass(frozen=True)
class Poly:
    terms: tuple[tuple[Monomial, Fraction], ...] = ()

    @classmethod
    def make(cls, coeffs: Mapping[Monomial, Fraction]) -> "Poly":
        items = [(m, Fraction(c)) for m, c in coeffs.items() if c != 0]
        items.sort(key=lambda mc: _mono_key(mc[0]))
        return cls(tuple(items))

    @classmethod
    def const(cls, value: Number) -> "Poly":
        return cls.make({(): Fraction(value)})

    @classmethod
    def param(cls, name: str) -> "Poly":
        return cls.make({((name, 1),): Fraction(1)})

    @classmethod
    def from_prob(cls, p: Prob) -> "Poly":
        coeffs: dict[Monomial, Fraction] = {(): p.const}
        for name, c in p.terms:
            coeffs[((name, 1),)] = c
        return cls.make(coeffs)

    def __add__(self, other: "Poly") -> "Poly":
        coeffs = dict(self.terms)
        for m, c in other.terms:
            coeffs[m] = coeffs.get(m, Fraction(0)) + c
        return Poly.make(coeffs)

    def __neg__(self) -> "Poly":
        return Poly(tuple((m, -c) for m, c in self.terms))

    def __sub__(self, other: "Poly") -> "Poly":
        return self + (-other)

    def __mul__(self, other: Union["Poly", Number]) -> "Poly":
        if not isinstance(other, Poly):
            other = Poly.const(other)
        coeffs: dict[Monomial, Fraction] = {}
        for m1, c1 in self.terms:
            for m2, c2 in other.terms:
                m = _mono_mul(m1, m2)
                coeffs[m] = coeffs.get(m, Fraction(0)) + c1 * c2
        return Poly.make(coeffs)

    __rmul__ = __mul__

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def is_const(self) -> bool:
        return all(not m for m, _ in self.terms)

    @property
    def const_value(self) -> Fraction:
        for m, c in self.terms:
            if not m:
                return c
        return Fraction(0)

    def params(self) -> set[str]:
        return {name for m, _ in self.terms for name, _ in m}

    def value(self, params: Mapping[str, Number]) -> Fraction:
        """Exact value with all parameters bound to rationals."""
        total = Fraction(0)
        for m, c in self.terms:
            v = c
            for name, k in m:
                v *= Fraction(params[name]) ** k
            total += v
        return total

    def render(self) -> str:
        if not self.terms:
            return "0"
        out = ""
        for idx, (m, c) in enumerate(self.terms):
            mag = abs(c)
            names = "*".join(name if k == 1 else f"{name}^{k}" for name, k in m)
            if not m:
                text = _frac_text(mag)
            elif mag == 1:
                text = names
            else:
                text = f"{_frac_text(mag)}*{names}"
            if idx == 0:
                out = ("-" if c < 0 else "") + text
            else:
                out += (" - " if c < 0 else " + ") + text
        return out

    @property
    def is_single(self) -> bool:
        return len(self.terms) == 1


# ---------------------------------------------------------------------------
# Atoms.


@dataclass(frozen=True)
class One:
    key: tuple = field(default=(0,), init=False, repr=False)


@dataclass(frozen=True)
class Var:
    state: int
    loc: int
    lag: int = 1
    key: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "key", (1, self.state, self.loc, self.lag))


@dataclass(frozen=True)
class Min:
    a: "Expr"
    b: "Expr"
    key: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "key", (2, self.a.key, self.b.key))


@dataclass(frozen=True)
class Div:
    num: "Expr"
    den: "Expr"
    key: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "key", (3, self.num.key, self.den.key))


@dataclass(frozen=True)
class Prod:
    a: "Expr"
    b: "Expr"
    key: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "key", (4, self.a.key, self.b.key))


Atom = Union[One, Var, Min, Div, Prod]
ONE = One()


def _poly_key(p: Poly):
    return tuple((m, c) for m, c in p.terms)


# ---------------------------------------------------------------------------
# Expressions.


@dataclass(frozen=True)
class Expr:
    terms: tuple[tuple[Atom, Poly], ...] = ()
    key: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "key", tuple((a.key, _poly_key(p)) for a, p in self.terms))

    @classmethod
    def make(cls, coeffs: Mapping[Atom, Poly]) -> "Expr":
        items = [(a, p) for a, p in coeffs.items() if not p.is_zero]
        items.sort(key=lambda ap: ap[0].key)
        return cls(tuple(items))

    @classmethod
    def atom(cls, atom: Atom, coeff: Optional[Poly] = None) -> "Expr":
        return cls.make({atom: coeff if coeff is not None else Poly.const(1)})

    def __add__(self, other: "Expr") -> "Expr":
        coeffs = dict(self.terms)
        for a, p in other.terms:
            coeffs[a] = coeffs[a] + p if a in coeffs else p
        return Expr.make(coeffs)

    def __neg__(self) -> "Expr":
        return Expr(tuple((a, -p) for a, p in self.terms))

    def __sub__(self, other: "Expr") -> "Expr":
        return self + (-other)

    def scale(self, factor: Union[Poly, Number]) -> "Expr":
        if not isinstance(factor, Poly):
            factor = Poly.const(factor)
        if factor.is_zero:
            return ZERO
        return Expr.make({a: p * factor for a, p in self.terms})

    def __mul__(self, other):
        if isinstance(other, Expr):
            return product(self, other)
        return self.scale(other)

    __rmul__ = __mul__

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def is_const(self) -> bool:
        return all(isinstance(a, One) for a, _ in self.terms)

    @property
    def const_poly(self) -> Poly:
        for a, p in self.terms:
            if isinstance(a, One):
                return p
        return Poly()

    @property
    def is_linear(self) -> bool:
        return all(isinstance(a, (One, Var)) for a, _ in self.terms)

    def coefficient(self, atom: Atom) -> Poly:
        for a, p in self.terms:
            if a == atom:
                return p
        return Poly()

    def atoms(self) -> list[Atom]:
        return [a for a, _ in self.terms]

    def __repr__(self) -> str:
        return f"Expr({render(self, lambda v: f'x{v.state}@{v.loc}[t-{v.lag}]')})"


ZERO = Expr()


def const(value: Union[Number, Poly]) -> Expr:
    poly = value if isinstance(value, Poly) else Poly.const(value)
    return Expr.atom(ONE, poly)


def var(state: int, loc: int, lag: int = 1) -> Expr:
    return Expr.atom(Var(state, loc, lag))


def minimum(a: Expr, b: Expr) -> Expr:
    if a == b:
        return a
    if a.is_const and b.is_const and a.const_poly.is_const and b.const_poly.is_const:
        return const(min(a.const_poly.const_value, b.const_poly.const_value))
    x, y = sorted((a, b), key=lambda e: e.key)
    return Expr.atom(Min(x, y))


def divide(num: Expr, den: Expr) -> Expr:
    """``num / den`` with the convention that division by zero yields 0."""
    if num.is_zero or den.is_zero:
        return ZERO
    if den.is_const and den.const_poly.is_const:
        return num.scale(1 / den.const_poly.const_value)
    return Expr.atom(Div(num, den))


def product(a: Expr, b: Expr) -> Expr:
    if a.is_zero or b.is_zero:
        return ZERO
    if a.is_const:
        return b.scale(a.const_poly)
    if b.is_const:
        return a.scale(b.const_poly)
    x, y = sorted((a, b), key=lambda e: e.key)
    return Expr.atom(Prod(x, y))


def total(exprs: Iterable[Expr]) -> Expr:
    coeffs: dict[Atom, Poly] = {}
    for e in exprs:
        for a, p in e.terms:
            coeffs[a] = coeffs[a] + p if a in coeffs else p
    return Expr.make(coeffs)


def comm_share(performer: Expr, same_side: Expr, other_side: Expr) -> Expr:
    """Expected matched share ``min(q, q*Y/X)`` of ``performer``."""
    if same_side == performer:
        # min(q, q*Y/q) is min(q, Y), also at q = 0 since Y >= 0
        return minimum(performer, other_side)
    return minimum(performer, divide(product(performer, other_side), same_side))


def comm_yield(q, X, Y):
    """Numeric ``min(q, q*Y/X)``; ``X == 0`` gives 0."""
    if X == 0:
        return 0 * q
    return min(q, q * Y / X)


# ---------------------------------------------------------------------------
# Traversal, substitution and evaluation.


def variables(expr: Expr) -> set[Var]:
    out: set[Var] = set()
    for a, _ in expr.terms:
        if isinstance(a, Var):
            out.add(a)
        elif isinstance(a, (Min, Prod)):
            out |= variables(a.a) | variables(a.b)
        elif isinstance(a, Div):
            out |= variables(a.num) | variables(a.den)
    return out


def params_of(expr: Expr) -> set[str]:
    out: set[str] = set()
    for a, p in expr.terms:
        out |= p.params()
        if isinstance(a, (Min, Prod)):
            out |= params_of(a.a) | params_of(a.b)
        elif isinstance(a, Div):
            out |= params_of(a.num) | params_of(a.den)
    return out


def substitute(expr: Expr, fn: Callable[[Var], Optional[Expr]]) -> Expr:
    """Replace every variable ``v`` for which ``fn(v)`` is not None."""
    cache: dict[Var, Expr] = {}

    def sub_atom(a: Atom) -> Expr:
        if isinstance(a, One):
            return const(1)
        if isinstance(a, Var):
            if a not in cache:
                r = fn(a)
                cache[a] = r if r is not None else Expr.atom(a)
            return cache[a]
        if isinstance(a, Min):
            return minimum(go(a.a), go(a.b))
        if isinstance(a, Div):
            return divide(go(a.num), go(a.den))
        if isinstance(a, Prod):
            return product(go(a.a), go(a.b))
        raise TypeError(a)

    def go(e: Expr) -> Expr:
        return total(sub_atom(a).scale(p) for a, p in e.terms)

    return go(expr)


def shift(expr: Expr, by: int) -> Expr:
    if by == 0:
        return expr
    return substitute(expr, lambda v: var(v.state, v.loc, v.lag + by))


def relocate(expr: Expr, fn: Callable[[int], int]) -> Expr:
    return substitute(expr, lambda v: var(v.state, fn(v.loc), v.lag))


def evaluate(expr: Expr, value: Callable[[Var], Number], params: Mapping[str, Number]):
    """Evaluate exactly (rational inputs) or approximately (float inputs)."""
    exact = all(isinstance(v, (int, Fraction)) for v in params.values())

    def coeff(p: Poly):
        if exact:
            return p.value(params)
        return float(sum(float(c) * _mono_float(m, params) for m, c in p.terms))

    def go(e: Expr):
        acc = 0
        for a, p in e.terms:
            acc = acc + coeff(p) * atom_value(a)
        return acc

    def atom_value(a: Atom):
        if isinstance(a, One):
            return 1
        if isinstance(a, Var):
            return value(a)
        if isinstance(a, Min):
            return min(go(a.a), go(a.b))
        if isinstance(a, Div):
            d = go(a.den)
            return 0 if d == 0 else go(a.num) / d
        if isinstance(a, Prod):
            return go(a.a) * go(a.b)
        raise TypeError(a)

    return go(expr)


def _mono_float(m: Monomial, params: Mapping[str, Number]) -> float:
    v = 1.0
    for name, k in m:
        v *= float(params[name]) ** k
    return v


def compile_expr(expr: Expr, index: Callable[[Var], int], params: Mapping[str, Number]):
    """Compile to a closure ``f(x) -> float`` reading variables from the flat vector ``x``.

    Coefficients are bound to floats once, so repeated evaluation is cheap.
    """

    def coeff(p: Poly) -> float:
        return float(sum(float(c) * _mono_float(m, params) for m, c in p.terms))

    def comp_atom(a: Atom):
        if isinstance(a, One):
            return lambda x: 1.0
        if isinstance(a, Var):
            i = index(a)
            return lambda x: float(x[i])
        if isinstance(a, Min):
            fa, fb = comp(a.a), comp(a.b)
            return lambda x: min(fa(x), fb(x))
        if isinstance(a, Div):
            fn, fd = comp(a.num), comp(a.den)

            def div(x):
                d = fd(x)
                return 0.0 if d == 0 else fn(x) / d

            return div
        if isinstance(a, Prod):
            fa, fb = comp(a.a), comp(a.b)
            return lambda x: fa(x) * fb(x)
        raise TypeError(a)

    def comp(e: Expr):
        parts = [(coeff(p), comp_atom(a)) for a, p in e.terms]
        if len(parts) == 1:
            c, f = parts[0]
            return lambda x: c * f(x)

        def run(x):
            acc = 0.0
            for c, f in parts:
                acc += c * f(x)
            return acc

        return run

    return comp(expr)


# ---------------------------------------------------------------------------
# Rendering.


def render(expr: Expr, var_text: Callable[[Var], str]) -> str:
    if expr.is_zero:
        return "0"
    out = ""
    for idx, (a, p) in enumerate(expr.terms):
        negative = p.is_single and p.terms[0][1] < 0
        mag = -p if negative else p
        if isinstance(a, One):
            text = mag.render()
            if not mag.is_single:
                text = f"({text})" if idx else text
        else:
            base = _render_atom(a, var_text)
            if mag == Poly.const(1):
                text = base
            elif mag.is_single:
                text = f"{mag.render()}*{base}"
            else:
                text = f"({mag.render()})*{base}"
        if idx == 0:
            out = ("-" if negative else "") + text
        else:
            out += (" - " if negative else " + ") + text
    return out


def _wrap(expr: Expr, var_text) -> str:
    text = render(expr, var_text)
    return text if len(expr.terms) == 1 and expr.terms[0][1] == Poly.const(1) else f"({text})"


def _render_atom(a: Atom, var_text) -> str:
    if isinstance(a, Var):
        return var_text(a)
    if isinstance(a, Min):
        return f"min({render(a.a, var_text)}, {render(a.b, var_text)})"
    if isinstance(a, Div):
        return f"{_wrap(a.num, var_text)}/{_wrap(a.den, var_text)}"
    if isinstance(a, Prod):
        return f"{_wrap(a.a, var_text)}*{_wrap(a.b, var_text)}"
    raise TypeError(a)


# ---------------------------------------------------------------------------
# Structured (JSON-compatible) form.


def poly_to_data(p: Poly) -> list:
    return [[[list(f) for f in m], _frac_text(c)] for m, c in p.terms]


def poly_from_data(data) -> Poly:
    return Poly.make({tuple((n, int(k)) for n, k in m): Fraction(c) for m, c in data})


def to_data(expr: Expr) -> list:
    out = []
    for a, p in expr.terms:
        if isinstance(a, One):
            node: dict = {"one": True}
        elif isinstance(a, Var):
            node = {"var": [a.state, a.loc, a.lag]}
        elif isinstance(a, Min):
            node = {"min": [to_data(a.a), to_data(a.b)]}
        elif isinstance(a, Div):
            node = {"div": [to_data(a.num), to_data(a.den)]}
        else:
            node = {"prod": [to_data(a.a), to_data(a.b)]}
        out.append({"coeff": poly_to_data(p), "atom": node})
    return out


def from_data(data) -> Expr:
    parts = []
    for item in data:
        node = item["atom"]
        if "one" in node:
            e = const(1)
        elif "var" in node:
            e = var(*node["var"])
        elif "min" in node:
            e = minimum(from_data(node["min"][0]), from_data(node["min"][1]))
        elif "div" in node:
            e = divide(from_data(node["div"][0]), from_data(node["div"][1]))
        elif "prod" in node:
            e = product(from_data(node["prod"][0]), from_data(node["prod"][1]))
        else:
            raise ValueError(f"unknown expression node {node!r}")
        parts.append(e.scale(poly_from_data(item["coeff"])))
    return total(parts)
