"""Individual-based stochastic simulation on population counts.

Individuals in the same (state, location) cell are exchangeable, so a
step draws counts directly: multinomial splits for probabilistic choices
and hypergeometric selection of which performers find a partner. The
transition rules are read from the process terms, not from the symbolic
transition table, so the simulator is an independent check of it.

Random numbers come from numpy's PCG64. Replica ``r`` of a run with base
seed ``s`` uses ``SeedSequence(entropy=s, spawn_key=(r,))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

import numpy as np

from .dsl.validate import ValidatedModel
from .habitat import move_target
from .meanfield import (
    FIRING,
    PHASE_ACTION,
    PHASE_INIT,
    PHASE_PROB,
    PHASE_STALLED,
    PHASE_TICK,
    Frame,
    Trajectory,
)
from .model import ModelSpec
from .statespace import CHAN, COND, FREE, GO, NIL, PROB, TICK, StateSpace, build_init_matrix
from .stt import ACTION_KINDS, KIND_OF_HEAD, model_fingerprint
from .terms import Choice, Cond, In, NbIndex, bind_it

COUNT_LIMIT = 2**62


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    steps: int = 0
    replicas: int = 1
    scale: int = 1

    def __post_init__(self):
        if self.replicas < 1:
            raise ValueError("replicas must be at least 1")
        if self.steps < 0:
            raise ValueError("steps must be nonnegative")
        if self.scale < 0:
            raise ValueError("scale must be nonnegative")


def replica_rng(seed: int, replica: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=(replica,))))


Spawn = tuple[tuple[int, int], ...]


@dataclass
class _CommRule:
    channel: str
    is_input: bool
    success: Spawn
    failure: Optional[Spawn]  # None: stay in place


class Simulator:
    """Transition rules of every state, bound to parameter values."""

    def __init__(self, space: StateSpace, params: dict[str, Fraction]):
        self.space = space
        habitat = space.habitat
        self.n, self.m = space.n, habitat.m
        self.kinds = [KIND_OF_HEAD[s.head] for s in space]
        self.prob_rules: dict[int, list[tuple[np.ndarray, list[Spawn]]]] = {}
        self.move_rules: dict[int, tuple[np.ndarray, Spawn]] = {}
        self.comm_rules: dict[int, _CommRule] = {}
        for st in space:
            k, term = st.index, st.term
            spawn = lambda t, sp=st.species: space.spawn(sp, t)  # noqa: E731
            if st.head == PROB:
                if isinstance(term, Choice):
                    probs = np.array([float(p.value(params)) for p, _ in term.branches])
                    rule = (probs, [spawn(b) for _, b in term.branches])
                    self.prob_rules[k] = [rule] * self.m
                else:
                    rules = []
                    for loc in range(self.m):
                        deg = habitat.degree(loc)
                        rules.append(
                            (np.full(deg, 1.0 / deg), [spawn(bind_it(term.body, NbIndex(j))) for j in range(deg)])
                        )
                    self.prob_rules[k] = rules
            elif st.head in (TICK, FREE):
                self.move_rules[k] = (np.arange(self.m), spawn(term.cont))
            elif st.head == GO:
                targets = np.array([move_target(term.action.target, loc, habitat) for loc in range(self.m)])
                self.move_rules[k] = (targets, spawn(term.cont))
            elif st.head in (CHAN, COND):
                if isinstance(term, Cond):
                    rule = _CommRule(term.action.channel, isinstance(term.action, In),
                                     spawn(term.then), spawn(term.orelse))
                else:
                    rule = _CommRule(term.action.channel, isinstance(term.action, In), spawn(term.cont), None)
                self.comm_rules[k] = rule
            else:
                assert st.head == NIL
        self.channels = sorted({r.channel for r in self.comm_rules.values()})
        self.stays = {
            phase: np.array([k not in firing for k in self.kinds], dtype=bool) for phase, firing in FIRING.items()
        }

    def phase(self, x: np.ndarray) -> str:
        present = {self.kinds[k] for k in np.flatnonzero(x.sum(axis=1) > 0)}
        if "prob" in present:
            return PHASE_PROB
        if present & ACTION_KINDS:
            return PHASE_ACTION
        return PHASE_TICK

    @staticmethod
    def _deposit(out: np.ndarray, spawn: Spawn, locs, counts) -> None:
        for target, mult in spawn:
            np.add.at(out[target], locs, counts * mult)

    def step(self, x: np.ndarray, phase: str, rng: np.random.Generator) -> np.ndarray:
        out = np.zeros_like(x)
        stays = self.stays[phase]
        out[stays] += x[stays]
        every = np.arange(self.m)
        if phase == PHASE_PROB:
            for k, rules in self.prob_rules.items():
                row = x[k]
                if not row.any():
                    continue
                if all(r is rules[0] for r in rules):
                    probs, spawns = rules[0]
                    draws = rng.multinomial(row, probs)  # shape (m, branches)
                    for b, spawn in enumerate(spawns):
                        self._deposit(out, spawn, every, draws[:, b])
                else:
                    for loc in np.flatnonzero(row):
                        probs, spawns = rules[loc]
                        draws = rng.multinomial(row[loc], probs)
                        for b, spawn in enumerate(spawns):
                            self._deposit(out, spawn, loc, draws[b])
        elif phase == PHASE_ACTION:
            for k, (targets, spawn) in self.move_rules.items():
                if self.kinds[k] in ACTION_KINDS and x[k].any():
                    self._deposit(out, spawn, targets, x[k])
            for channel in self.channels:
                self._communicate(channel, x, out, rng)
        else:
            for k, (targets, spawn) in self.move_rules.items():
                if self.kinds[k] == "tick" and x[k].any():
                    self._deposit(out, spawn, targets, x[k])
        if out.max(initial=0) > COUNT_LIMIT:
            raise OverflowError("population count exceeds the supported range")
        return out

    def _communicate(self, channel: str, x: np.ndarray, out: np.ndarray, rng: np.random.Generator) -> None:
        ins = [k for k, r in self.comm_rules.items() if r.channel == channel and r.is_input]
        outs = [k for k, r in self.comm_rules.items() if r.channel == channel and not r.is_input]
        for loc in range(self.m):
            a = x[ins, loc] if ins else np.zeros(0, dtype=np.int64)
            b = x[outs, loc] if outs else np.zeros(0, dtype=np.int64)
            if not a.any() and not b.any():
                continue
            matches = int(min(a.sum(), b.sum()))
            for side, counts in ((ins, a), (outs, b)):
                succ = _select(rng, counts, matches)
                for k, s, c in zip(side, succ, counts):
                    rule = self.comm_rules[k]
                    if s:
                        self._deposit(out, rule.success, loc, s)
                    if c - s:
                        if rule.failure is None:
                            out[k, loc] += c - s
                        else:
                            self._deposit(out, rule.failure, loc, c - s)

    def run(self, init: np.ndarray, steps: int, rng: np.random.Generator) -> tuple[list[np.ndarray], list[str]]:
        x = init.astype(np.int64).copy()
        frames, phases = [x], [PHASE_INIT]
        stalled = False
        for _ in range(steps):
            if stalled:
                frames.append(x)
                phases.append(PHASE_STALLED)
                continue
            phase = self.phase(x)
            nxt = self.step(x, phase, rng)
            if phase == PHASE_ACTION and np.array_equal(nxt, x):
                stalled = True
                phase = PHASE_STALLED
            frames.append(nxt)
            phases.append(phase)
            x = nxt
        return frames, phases


def _select(rng: np.random.Generator, counts: np.ndarray, k: int) -> np.ndarray:
    """Uniformly choose ``k`` individuals among groups of sizes ``counts``."""
    total = int(counts.sum())
    if k <= 0:
        return np.zeros_like(counts)
    if k >= total:
        return counts.copy()
    if len(counts) == 1:
        return np.array([k], dtype=counts.dtype)
    return rng.multivariate_hypergeometric(counts, k).astype(counts.dtype)


def _spec(model: Union[ValidatedModel, ModelSpec]) -> ModelSpec:
    return model.spec if isinstance(model, ValidatedModel) else model


def simulate_once(
    model: Union[ValidatedModel, ModelSpec], space: StateSpace, config: RunConfig, replica: int = 0
) -> Trajectory:
    """One seeded replica; frame values are integer counts."""
    spec = _spec(model)
    sim = Simulator(space, spec.param_values)
    init = build_init_matrix(spec, space) * config.scale
    frames, phases = sim.run(init, config.steps, replica_rng(config.seed, replica))
    return Trajectory(
        [Frame(t, ph, f) for t, (f, ph) in enumerate(zip(frames, phases))],
        space.display_labels(),
        list(space.habitat.names),
        model_fingerprint(spec),
        spec.param_values,
    )


@dataclass
class EnsembleStats:
    mean: np.ndarray  # (frames, states, locations)
    std: np.ndarray
    replicas: int
    phases: list[str]
    labels: list[str]
    locations: list[str]
    phase_disagreements: list[int] = field(default_factory=list)
    fingerprint: str = ""

    @property
    def frames(self) -> int:
        return self.mean.shape[0]

    def as_trajectory(self) -> Trajectory:
        return Trajectory(
            [Frame(t, ph, self.mean[t]) for t, ph in enumerate(self.phases)],
            self.labels,
            self.locations,
            self.fingerprint,
        )


def ensemble(model: Union[ValidatedModel, ModelSpec], space: StateSpace, config: RunConfig) -> EnsembleStats:
    """Mean and sample standard deviation over ``config.replicas`` replicas.

    Replicas are accumulated in index order (Welford's update), so the
    result depends only on the configuration.
    """
    spec = _spec(model)
    sim = Simulator(space, spec.param_values)
    init = build_init_matrix(spec, space) * config.scale
    shape = (config.steps + 1, space.n, space.m)
    mean = np.zeros(shape)
    m2 = np.zeros(shape)
    phases: list[str] = []
    disagreements: set[int] = set()
    for r in range(config.replicas):
        frames, ph = sim.run(init, config.steps, replica_rng(config.seed, r))
        values = np.stack(frames).astype(float)
        delta = values - mean
        mean += delta / (r + 1)
        m2 += delta * (values - mean)
        if r == 0:
            phases = ph
        else:
            disagreements.update(t for t, (a, b) in enumerate(zip(phases, ph)) if a != b)
    std = np.sqrt(m2 / (config.replicas - 1)) if config.replicas > 1 else np.zeros(shape)
    return EnsembleStats(mean, std, config.replicas, phases, space.display_labels(), list(space.habitat.names),
                         sorted(disagreements), model_fingerprint(spec))


# ---------------------------------------------------------------------------
# Mean-field versus ensemble.


@dataclass
class CompareReport:
    errors: list[float]
    phase_mismatches: list[tuple[int, str, str]]
    frames_mf: int
    frames_mc: int
    ensemble_disagreements: list[int] = field(default_factory=list)

    @property
    def max_error(self) -> float:
        return max(self.errors, default=0.0)

    @property
    def aligned(self) -> bool:
        return not self.phase_mismatches and self.frames_mf == self.frames_mc

    def render(self) -> str:
        lines = ["frame,relative_l1_error"]
        lines += [f"{t},{e!r}" for t, e in enumerate(self.errors)]
        lines.append(f"max_relative_l1_error,{self.max_error!r}")
        if self.frames_mf != self.frames_mc:
            lines.append(f"# frame count differs: mean-field {self.frames_mf}, ensemble {self.frames_mc}")
        for t, a, b in self.phase_mismatches:
            lines.append(f"# phase mismatch at frame {t}: mean-field {a}, ensemble {b}")
        if self.ensemble_disagreements:
            listed = " ".join(str(t) for t in self.ensemble_disagreements)
            lines.append(f"# replicas disagree on the phase at frames: {listed}")
        if self.aligned:
            lines.append("# phases aligned")
        return "\n".join(lines) + "\n"


def compare(mf: Trajectory, ens: Union[EnsembleStats, Trajectory]) -> CompareReport:
    """Per-frame ``sum|mf - mean| / sum(mf)`` over all cells, plus phase alignment."""
    other = ens.as_trajectory() if isinstance(ens, EnsembleStats) else ens
    if list(mf.labels) != list(other.labels) or list(mf.locations) != list(other.locations):
        raise ValueError("trajectories describe different state or location sets")
    a, b = mf.values(), other.values()
    frames = min(len(a), len(b))
    errors = []
    for t in range(frames):
        ref = float(np.abs(a[t]).sum())
        diff = float(np.abs(a[t] - b[t]).sum())
        errors.append(0.0 if diff == 0 else (diff / ref if ref else float("inf")))
    mismatches = [(t, pa, pb) for t, (pa, pb) in enumerate(zip(mf.phases, other.phases)) if pa != pb]
    disagreements = ens.phase_disagreements if isinstance(ens, EnsembleStats) else []
    return CompareReport(errors, mismatches, len(a), len(b), list(disagreements))
