"""Mean-field recurrences and their deterministic evaluation.

Each step fires one phase chosen from the populated states: probabilistic
choices first, then actions (movement and communication), then the global
tick. States whose head does not belong to the chosen phase keep their mass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .expr import Expr, Var, compile_expr, relocate, render as render_expr, shift, substitute, total
from .habitat import Habitat
from .terms import _frac_text
from .stt import ACTION_KINDS, TransitionTable

PHASE_INIT = "init"
PHASE_PROB = "prob"
PHASE_ACTION = "action"
PHASE_TICK = "tick"
PHASE_STALLED = "stalled"

FIRING = {
    PHASE_PROB: frozenset({"prob"}),
    PHASE_ACTION: ACTION_KINDS,
    PHASE_TICK: frozenset({"tick"}),
}


class DimensionError(ValueError):
    pass


@dataclass
class EquationSystem:
    """``X_i(t)@l = sum_k rhs[(i, l)][k]`` with base case ``X_i(0)@l = init[i, l]``."""

    labels: list[str]
    species: list[str]
    kinds: list[str]
    habitat: Habitat
    init: np.ndarray
    rhs: dict[tuple[int, int], list[tuple[int, Expr]]]
    params: dict[str, Fraction]
    fingerprint: str = ""

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def m(self) -> int:
        return self.habitat.m

    def equation(self, i: int, loc: int) -> Expr:
        return total(e for _, e in self.rhs.get((i, loc), []))

    def with_params(self, overrides: Mapping[str, Fraction]) -> "EquationSystem":
        params = dict(self.params)
        for k, v in overrides.items():
            if k not in params:
                raise KeyError(f"unknown parameter {k!r}")
            params[k] = Fraction(v)
        return EquationSystem(self.labels, self.species, self.kinds, self.habitat, self.init, self.rhs,
                              params, self.fingerprint)

    def with_init(self, init: np.ndarray) -> "EquationSystem":
        if init.shape != (self.n, self.m):
            raise DimensionError(f"initial matrix has shape {init.shape}, expected {(self.n, self.m)}")
        return EquationSystem(self.labels, self.species, self.kinds, self.habitat, init, self.rhs,
                              self.params, self.fingerprint)

    def step_all(self, prev: np.ndarray) -> np.ndarray:
        """Apply every equation at once (no phase gating); ``prev`` is ``n x m``."""
        flat = prev.reshape(-1)
        out = np.zeros_like(prev, dtype=float)
        for (i, loc), parts in self.rhs.items():
            out[i, loc] = compile_expr(total(e for _, e in parts), self._flat, self.params)(flat)
        return out

    def _flat(self, v: Var) -> int:
        return v.state * self.m + v.loc


def derive_equations(table: TransitionTable, init: np.ndarray) -> EquationSystem:
    init = np.asarray(init)
    if init.shape != (table.n, table.m):
        raise DimensionError(f"initial matrix has shape {init.shape}, table needs {(table.n, table.m)}")
    rhs: dict[tuple[int, int], dict[int, Expr]] = {}
    for f in table.flows:
        by_source = rhs.setdefault((f.target, f.tgt_loc), {})
        by_source[f.source] = by_source[f.source] + f.expr if f.source in by_source else f.expr
    ordered = {
        key: [(k, e) for k, e in sorted(parts.items()) if not e.is_zero]
        for key, parts in sorted(rhs.items())
    }
    return EquationSystem(
        table.state_labels(),
        [s.species for s in table.space],
        list(table.kinds),
        table.habitat,
        init,
        {k: v for k, v in ordered.items() if v},
        dict(table.params),
        table.fingerprint,
    )


# ---------------------------------------------------------------------------
# Evaluation.


@dataclass(frozen=True)
class Frame:
    step: int
    phase: str
    occupancy: np.ndarray


@dataclass
class Trajectory:
    frames: list[Frame]
    labels: list[str]
    locations: list[str]
    fingerprint: str = ""
    params: dict[str, Fraction] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def phases(self) -> list[str]:
        return [f.phase for f in self.frames]

    def values(self) -> np.ndarray:
        """Array of shape ``(frames, states, locations)``."""
        if not self.frames:
            return np.zeros((0, len(self.labels), len(self.locations)))
        return np.stack([f.occupancy for f in self.frames])

    def series(self, state: Union[int, str]) -> np.ndarray:
        i = state if isinstance(state, int) else self.labels.index(state)
        return self.values()[:, i, :]


class _Program:
    """Numeric form of an equation system, split by the kind of the source state."""

    def __init__(self, eqs: EquationSystem):
        self.n, self.m = eqs.n, eqs.m
        self.kinds = list(eqs.kinds)
        size = self.n * self.m
        self.size = size
        index = lambda v: v.state * self.m + v.loc  # noqa: E731
        linear: dict[str, tuple[list[int], list[int], list[float]]] = {}
        nonlinear: dict[str, list[tuple[int, object]]] = {}
        for (i, loc), parts in eqs.rhs.items():
            tgt = i * self.m + loc
            for k, e in parts:
                kind = self.kinds[k]
                if all(isinstance(a, Var) for a in e.atoms()):
                    src, dst, coef = linear.setdefault(kind, ([], [], []))
                    for a, p in e.terms:
                        src.append(index(a))
                        dst.append(tgt)
                        coef.append(float(p.value(eqs.params)))
                else:
                    nonlinear.setdefault(kind, []).append((tgt, compile_expr(e, index, eqs.params)))
        self.linear = {
            kind: (np.array(s, dtype=np.int64), np.array(d, dtype=np.int64), np.array(c, dtype=float))
            for kind, (s, d, c) in linear.items()
        }
        self.nonlinear = nonlinear
        self.stays = {
            phase: np.array([k not in firing for k in self.kinds], dtype=bool) for phase, firing in FIRING.items()
        }

    def phase(self, x: np.ndarray) -> str:
        populated = x.sum(axis=1) > 0
        present = {self.kinds[k] for k in np.flatnonzero(populated)}
        if "prob" in present:
            return PHASE_PROB
        if present & ACTION_KINDS:
            return PHASE_ACTION
        return PHASE_TICK

    def step(self, x: np.ndarray, phase: str) -> np.ndarray:
        firing = FIRING[phase]
        flat = x.reshape(-1)
        out = np.zeros(self.size)
        for kind in sorted(firing):
            if kind in self.linear:
                src, dst, coef = self.linear[kind]
                out += np.bincount(dst, weights=coef * flat[src], minlength=self.size)
            for tgt, fn in self.nonlinear.get(kind, ()):
                out[tgt] += fn(flat)
        stays = self.stays[phase]
        out = out.reshape(self.n, self.m)
        out[stays] += x[stays]
        return out


def evaluate(
    source: Union[TransitionTable, EquationSystem],
    init: Optional[np.ndarray] = None,
    steps: int = 0,
    params: Optional[Mapping[str, Fraction]] = None,
) -> Trajectory:
    """Deterministic mean-field trajectory of ``steps`` micro-steps.

    Frame 0 is ``init``. A step in the action phase that moves no mass is
    tagged ``stalled`` and ends the trajectory.
    """
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    if isinstance(source, TransitionTable):
        if init is None:
            raise ValueError("an initial matrix is required with a transition table")
        eqs = derive_equations(source, init)
    else:
        eqs = source if init is None else source.with_init(np.asarray(init))
    if params:
        eqs = eqs.with_params(params)
    program = _Program(eqs)
    x = np.asarray(eqs.init, dtype=float).copy()
    frames = [Frame(0, PHASE_INIT, x)]
    for t in range(1, steps + 1):
        phase = program.phase(x)
        nxt = program.step(x, phase)
        if phase == PHASE_ACTION and np.array_equal(nxt, x):
            frames.append(Frame(t, PHASE_STALLED, x))
            break
        frames.append(Frame(t, phase, nxt))
        x = nxt
    return Trajectory(frames, list(eqs.labels), list(eqs.habitat.names), eqs.fingerprint, dict(eqs.params))


def collapse_ticks(traj: Trajectory) -> Trajectory:
    """Keep frame 0 and every frame produced by a tick, renumbered by tick count."""
    kept = [f for f in traj.frames[:1]] + [f for f in traj.frames[1:] if f.phase == PHASE_TICK]
    frames = [Frame(i, f.phase, f.occupancy) for i, f in enumerate(kept)]
    return Trajectory(frames, traj.labels, traj.locations, traj.fingerprint, traj.params)


# ---------------------------------------------------------------------------
# Collapsing equations onto a subset of states.


def collapse_equations(
    eqs: EquationSystem,
    keep: Iterable[Union[int, str]],
    lag: str = "micro",
) -> dict[tuple[int, int], Expr]:
    """Rewrite the recurrences of ``keep`` in terms of kept states only.

    Variables of other states are replaced by their own right-hand sides,
    shifted by the corresponding lag. With ``lag="micro"`` every step counts;
    with ``lag="tick"`` only flows out of tick-headed states advance time,
    so the result relates tick-collapsed frames. A state met again along
    one substitution chain is left as a variable.
    """
    if lag not in ("micro", "tick"):
        raise ValueError(f"unknown lag mode {lag!r}")
    kept = {k if isinstance(k, int) else eqs.labels.index(k) for k in keep}

    base: dict[tuple[int, int], Expr] = {}
    for (i, loc), parts in eqs.rhs.items():
        if lag == "micro":
            base[(i, loc)] = total(e for _, e in parts)
        else:
            base[(i, loc)] = total(e if eqs.kinds[k] == "tick" else shift(e, -1) for k, e in parts)

    def expand(expr: Expr, path: frozenset[int]) -> Expr:
        def sub(v: Var) -> Optional[Expr]:
            if v.state in kept or v.state in path:
                return None
            inner = base.get((v.state, v.loc), Expr())
            return expand(shift(inner, v.lag), path | {v.state})

        return substitute(expr, sub)

    return {
        (i, loc): expand(base.get((i, loc), Expr()), frozenset({i}))
        for i in sorted(kept)
        for loc in range(eqs.m)
    }


# ---------------------------------------------------------------------------
# Text rendering.


def _var_text(labels: Sequence[str], habitat: Habitat, here: Optional[int]):
    def text(v: Var) -> str:
        time = "t" if v.lag == 0 else f"t-{v.lag}"
        if here is None:
            where = habitat.names[v.loc]
        else:
            label = habitat.offset_label(v.loc - here)
            where = label if label == "l" else f"({label})"
        return f"{labels[v.state]}({time})@{where}"

    return text


def render_equation_map(
    eqs: EquationSystem, equations: Mapping[tuple[int, int], Expr], states: Optional[Iterable[int]] = None
) -> list[str]:
    habitat = eqs.habitat
    states = sorted({i for i, _ in equations}) if states is None else list(states)
    lines = []
    for i in states:
        # rotate each location to 0 so that terms sort by relative offset
        per_loc = [
            render_expr(
                relocate(equations.get((i, loc), Expr()), lambda j, loc=loc: (j - loc) % habitat.m),
                _var_text(eqs.labels, habitat, 0),
            )
            for loc in range(habitat.m)
        ] if habitat.is_ring else []
        if per_loc and len(set(per_loc)) == 1:
            lines.append(f"{eqs.labels[i]}(t)@l = {per_loc[0]}")
        else:
            for loc in range(habitat.m):
                absolute = render_expr(equations.get((i, loc), Expr()), _var_text(eqs.labels, habitat, None))
                lines.append(f"{eqs.labels[i]}(t)@{habitat.names[loc]} = {absolute}")
    return lines


def render_equations(eqs: EquationSystem) -> str:
    """Recurrences for ``t > 0`` followed by the nonzero initial values."""
    equations = {key: eqs.equation(*key) for key in eqs.rhs}
    lines = ["# t counts micro-steps; each right-hand side refers to step t-1"]
    if eqs.params:
        bound = ", ".join(f"{k} = {_frac_text(Fraction(v))}" for k, v in eqs.params.items())
        lines.append(f"# parameters: {bound}")
    lines += render_equation_map(eqs, equations, range(eqs.n))
    lines.append("# initial values (all others are 0)")
    for i in range(eqs.n):
        for loc in range(eqs.m):
            value = eqs.init[i, loc]
            if value:
                lines.append(f"{eqs.labels[i]}(0)@{eqs.habitat.names[loc]} = {_num_text(value)}")
    return "\n".join(lines) + "\n"


def _num_text(value) -> str:
    f = float(value)
    return str(int(f)) if f.is_integer() else repr(f)
