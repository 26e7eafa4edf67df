"""Acceptance criteria 1-9, one PASS/FAIL line each.

Run under pytest (lines are repeated in the terminal summary) or directly
with ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import random
import sys
import time
from fractions import Fraction
from itertools import combinations
from pathlib import Path

import numpy as np
import pytest

from spalps.dsl import parse_file, validate
from spalps.expr import Expr, Poly, comm_yield, evaluate as eval_expr, var, variables
from spalps.habitat import Habitat
from spalps.meanfield import collapse_equations, collapse_ticks, evaluate
from spalps.montecarlo import RunConfig, compare, ensemble
from spalps.pipeline import compile_file
from spalps.statespace import enumerate_states
from spalps.stt import build_stt, render_stt, row_mass_check
from spalps.terms import Cond

CORPUS = Path(__file__).resolve().parent.parent / "corpus"
ACCEPTANCE_LINES: list[str] = []

# Tolerances and budgets pinned from the acceptance criteria.
RUNTIME_FAST = 1.0
RUNTIME_DENGUE = 5.0
RUNTIME_KURTZ = 60.0
POINTWISE_TOL = 1e-12
NOISE_BAND = 2.0
DOUBLING_BAND = 1.5
KURTZ_LIMIT = 0.05
KURTZ_SCALES = (10, 100, 1000)  # the ring starts with 3 individuals: N = 30, 300, 3000
KURTZ_REPLICAS = 1000
STEPS_PER_TICK_CYCLE = 5  # prob, go, tick, prob, tick: two ticks per cycle
PROPERTY_EXAMPLES = 200


def _timed(fn):
    start = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - start


def _ring_index():
    c = compile_file(CORPUS / "ring.palps")
    return c, {label: c.space.find(label) for label in c.space.labels()}


# ---------------------------------------------------------------------------
# Criteria. Each returns a short detail string or raises AssertionError.


def criterion_1() -> str:
    c, elapsed = _timed(lambda: compile_file(CORPUS / "ring.palps"))
    expected = np.zeros((7, 4), dtype=np.int64)
    expected[0, 0], expected[0, 1] = 2, 1
    assert c.init.shape == (7, 4), c.init.shape
    assert np.array_equal(c.init, expected), c.init
    assert elapsed < RUNTIME_FAST, elapsed
    return f"init matrix exact, {elapsed:.3f}s"


def criterion_2() -> str:
    (c, ix), elapsed = _timed(_ring_index)
    m = 4
    half = Fraction(1, 2)
    p = Poly.param("p")
    expected = set()
    for l in range(m):
        q = lambda k: var(ix[k], l)  # noqa: E731
        expected |= {
            (ix["R1"], l, ix["R2"], l, q("R1").scale(half)),
            (ix["R1"], l, ix["R3"], l, q("R1").scale(half)),
            (ix["R2"], l, ix["R4"], (l + 1) % m, q("R2")),
            (ix["R3"], l, ix["R4"], (l - 1) % m, q("R3")),
            (ix["R4"], l, ix["R5"], l, q("R4")),
            (ix["R5"], l, ix["R6"], l, q("R5").scale(p)),
            (ix["R5"], l, ix["R7"], l, q("R5").scale(Poly.const(1) - p)),
            (ix["R6"], l, ix["R1"], l, q("R6").scale(2)),
            (ix["R7"], l, ix["R1"], l, q("R7").scale(3)),
        }
    got = {(f.source, f.src_loc, f.target, f.tgt_loc, f.expr) for f in c.table.flows}
    assert got == expected, render_stt(c.table)
    assert elapsed < RUNTIME_FAST, elapsed
    return f"7-row table matches symbolically, {elapsed:.3f}s"


def criterion_3() -> str:
    c, ix = _ring_index()
    eqs = c.equations
    m = eqs.m
    p = Poly.param("p")
    for l in range(m):
        v = lambda k, loc=l: var(ix[k], loc % m)  # noqa: E731
        want = {
            "R1": v("R6").scale(2) + v("R7").scale(3),
            "R2": v("R1").scale(Fraction(1, 2)),
            "R3": v("R1").scale(Fraction(1, 2)),
            # R2 moves to l+1, so R4 at l collects R2 from l-1 and R3 from l+1
            "R4": v("R2", l - 1) + v("R3", l + 1),
            "R5": v("R4"),
            "R6": v("R5").scale(p),
            "R7": v("R5").scale(Poly.const(1) - p),
        }
        for label, expr in want.items():
            assert eqs.equation(ix[label], l) == expr, (label, l, eqs.equation(ix[label], l))

    collapsed = collapse_equations(eqs, ["R1", "R5"])
    for l in range(m):
        assert collapsed[(ix["R1"], l)] == var(ix["R5"], l, 2).scale(Poly.const(3) - p)

    ticks = 20
    steps = ticks // 2 * STEPS_PER_TICK_CYCLE
    traj = evaluate(c.table, c.init, steps, params={"p": Fraction(1, 2)})
    assert len(collapse_ticks(traj).frames) - 1 == ticks
    values = traj.values()
    r1, r5 = values[:, ix["R1"]], values[:, ix["R5"]]
    factor = 2 * 0.5 + 3 * (1 - 0.5)
    worst = 0.0
    for t in range(2, len(values)):
        lhs, rhs = r1[t], factor * r5[t - 2]
        scale = np.maximum(1.0, np.abs(lhs))
        worst = max(worst, float(np.max(np.abs(lhs - rhs) / scale)))
    assert worst <= POINTWISE_TOL, worst
    assert r1[-1].sum() > 0
    return f"7 recurrences equal; collapsed form holds over {ticks} ticks (max rel. dev. {worst:.1e})"


def criterion_4() -> str:
    def run():
        c, ix = _ring_index()
        return evaluate(c.table, c.init, 5, params={"p": Fraction(1, 2)}), ix

    (traj, ix), elapsed = _timed(run)
    r4 = traj.frames[2].occupancy[ix["R4"]]
    total = traj.frames[5].occupancy.sum()
    assert np.allclose(r4, [0.5, 1, 0.5, 1], rtol=0, atol=POINTWISE_TOL), r4
    assert abs(total - 7.5) <= POINTWISE_TOL, total
    assert elapsed < RUNTIME_FAST, elapsed
    return f"frame 2 R4 = {r4.tolist()}, total after one cycle = {total}, {elapsed:.3f}s"


def criterion_5() -> str:
    start = time.perf_counter()
    c = compile_file(CORPUS / "dengue.palps")
    table, kept = c.named
    assert (len(kept), c.space.m) == (16, 11), (len(kept), c.space.m)

    rows = dict(line.split(" -> ", 1) for line in render_stt(table, kept).splitlines())
    mosquito = {
        "E [prob]": "L: sigma_e*q; W5: (1 - sigma_e)*q",
        "L [prob]": "W5: (1 - sigma_l)*q; P: sigma_l*q",
        "P [prob]": "W: sigma_p*q; W5: (1 - sigma_p)*q",
        "W3 [tick]": "W: q; E: 3*q",
        "W5 [nil]": "W5: q",
        "d [tick]": "d: q",
    }
    for row, text in mosquito.items():
        assert rows.get(row) == text, (row, rows.get(row))

    eqs = c.equations
    W = c.space.find("W")
    collapsed = collapse_equations(eqs, ["W", "W2", "s"], lag="tick")
    prefactor = Poly.const(3) * Poly.param("sigma_e") * Poly.param("sigma_l") * Poly.param("sigma_p")
    for l in range(eqs.m):
        lag4 = [p for a, p in collapsed[(W, l)].terms if {v.lag for v in variables(Expr.atom(a))} == {4}]
        assert lag4 and all(p == prefactor for p in lag4), collapsed[(W, l)]

    # human side: mass law and matching invariants instead of printed equations
    human = {s.index for s in c.space if s.species == "human"}
    violations = [v for v in row_mass_check(c.table) if v.source in human]
    assert not violations, violations
    rng = random.Random(5)
    for _ in range(200):
        loc = rng.randrange(eqs.m)
        occ = [Fraction(rng.randrange(0, 50)) for _ in range(c.space.n)]
        value = lambda v: occ[v.state] if v.loc == loc else Fraction(0)  # noqa: E731
        for (_, gl), group in c.table.groups.items():
            if gl != loc:
                continue
            X = sum(occ[k] for k in group.inputs)
            Y = sum(occ[k] for k in group.outputs)
            matched_in = sum(_matched(c, k, loc, value) for k in group.inputs)
            matched_out = sum(_matched(c, k, loc, value) for k in group.outputs)
            assert matched_in == matched_out == min(X, Y), (matched_in, matched_out, X, Y)
    elapsed = time.perf_counter() - start
    assert elapsed < RUNTIME_DENGUE, elapsed
    return f"16 states x 11 locations, mosquito rows exact, 3*sigma prefactor present, {elapsed:.2f}s"


def _matched(c, k, loc, value) -> Fraction:
    """Mass of communicating state k at loc that takes the success branch."""
    st = c.space.states[k]
    branch = st.term.then if isinstance(st.term, Cond) else st.term.cont
    ((target, mult),) = c.space.spawn(st.species, branch)
    flows = [f for f in c.table.row(k, loc) if f.target == target and f.tgt_loc == loc]
    return sum((eval_expr(f.expr, value, c.table.params) for f in flows), Fraction(0)) / mult


def criterion_6() -> str:
    spec = parse_file(CORPUS / "dengue.palps")

    def best(s, reps=7):
        model = validate(s)
        space = enumerate_states(model)
        times = []
        for _ in range(reps):
            start = time.perf_counter()
            build_stt(model, space)
            times.append(time.perf_counter() - start)
        return min(times)

    base = best(spec)
    scaled = best(spec.scaled(10**6))
    ratio_q = scaled / base
    assert 1 / NOISE_BAND <= ratio_q <= NOISE_BAND, ratio_q
    sizes = [best(spec.with_habitat(Habitat.ring(m))) for m in (11, 22, 44)]
    ratios = [b / a for a, b in zip(sizes, sizes[1:])]
    assert all(r <= 2 * DOUBLING_BAND for r in ratios), ratios
    return (f"population x1e6 ratio {ratio_q:.2f}; m 11->22->44 ratios "
            + ", ".join(f"{r:.2f}" for r in ratios))


def criterion_7() -> str:
    start = time.perf_counter()
    c = compile_file(CORPUS / "ring.palps")
    steps = 10 // 2 * STEPS_PER_TICK_CYCLE
    errors = []
    for scale in KURTZ_SCALES:
        cfg = RunConfig(seed=7, steps=steps, replicas=KURTZ_REPLICAS, scale=scale)
        report = compare(evaluate(c.table, c.init * scale, steps), ensemble(c.model, c.space, cfg))
        assert report.aligned, report.render()
        errors.append(report.max_error)
    elapsed = time.perf_counter() - start
    assert all(b < a for a, b in zip(errors, errors[1:])), errors
    assert errors[-1] < KURTZ_LIMIT, errors
    assert elapsed < RUNTIME_KURTZ, elapsed
    shown = ", ".join(f"N={3 * s}: {e:.4f}" for s, e in zip(KURTZ_SCALES, errors))
    return f"max relative L1 error {shown}; {elapsed:.1f}s"


def criterion_8() -> str:
    count = 0
    for X in range(7):
        for Y in range(7):
            for q in range(X + 1):
                k = min(X, Y)
                outcomes = list(combinations(range(X), k)) if X else [()]
                hits = sum(sum(1 for i in chosen if i < q) for chosen in outcomes)
                expected = Fraction(hits, len(outcomes))
                got = comm_yield(Fraction(q), Fraction(X), Fraction(Y))
                assert isinstance(got, Fraction) and got == expected, (q, X, Y, got, expected)
                count += 1
    return f"{count} instances equal in exact rationals"


def criterion_9() -> str:
    sys.path.insert(0, str(Path(__file__).resolve().parent))
    import test_properties as props

    suites = [
        props.test_probability_sum_validation,
        props.test_parametric_probability_sum,
        props.test_render_parse_round_trip,
        props.test_per_phase_mass_conservation,
        props.test_nonnegativity,
        props.test_comm_matching_equals_min,
        props.test_seeded_monte_carlo_determinism,
    ]
    for suite in suites:
        assert suite.hypothesis.inner_test is not None
        assert props.PROPERTY.max_examples >= PROPERTY_EXAMPLES
        suite()
    return f"{len(suites)} property suites, {PROPERTY_EXAMPLES} generated cases each, no failures"


CRITERIA = {
    1: ("init matrix golden", criterion_1),
    2: ("STT golden", criterion_2),
    3: ("equation golden and collapsed recurrence", criterion_3),
    4: ("numeric trajectory", criterion_4),
    5: ("dengue structure", criterion_5),
    6: ("build-time complexity", criterion_6),
    7: ("mean-field versus ensemble convergence", criterion_7),
    8: ("matching formula oracle", criterion_8),
    9: ("property suites", criterion_9),
}


def check(n: int) -> tuple[bool, str]:
    title, fn = CRITERIA[n]
    try:
        detail = fn()
        ok = True
    except AssertionError as exc:
        detail, ok = f"assertion failed: {exc}"[:300], False
    line = f"criterion {n} ({title}): {'PASS' if ok else 'FAIL'} - {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok, detail


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n):
    ok, detail = check(n)
    assert ok, detail


if __name__ == "__main__":
    results = [check(n)[0] for n in sorted(CRITERIA)]
    sys.exit(0 if all(results) else 1)
