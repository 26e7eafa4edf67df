"""Independent oracles: brute-force matching and hand-coded ring recurrences."""

from fractions import Fraction
from itertools import combinations

import numpy as np
import pytest

from spalps.expr import comm_yield
from spalps.meanfield import evaluate


def brute_force_matched(q: int, X: int, Y: int) -> Fraction:
    """Expected matches among q tagged performers out of X, Y partners.

    min(X, Y) performers are matched, chosen uniformly without replacement;
    the tagged ones are the first q.
    """
    if X == 0:
        return Fraction(0)
    k = min(X, Y)
    outcomes = list(combinations(range(X), k))
    hits = sum(sum(1 for i in chosen if i < q) for chosen in outcomes)
    return Fraction(hits, len(outcomes))


def test_comm_yield_matches_brute_force_exhaustively():
    for X in range(7):
        for Y in range(7):
            for q in range(X + 1):
                expected = brute_force_matched(q, X, Y)
                got = comm_yield(Fraction(q), Fraction(X), Fraction(Y))
                assert got == expected, (q, X, Y)


def test_comm_yield_is_exact_rational():
    assert isinstance(comm_yield(Fraction(2), Fraction(3), Fraction(1)), Fraction)
    assert comm_yield(Fraction(2), Fraction(3), Fraction(1)) == Fraction(2, 3)


def hand_ring(p: float, steps: int) -> list[np.ndarray]:
    """Ring recurrences written out by hand (states R1..R7 by row, 4 locations).

    Phases cycle prob, go, tick, prob, tick. Mass moved by R2 lands one step
    clockwise, R3 one step counter-clockwise.
    """
    x = np.zeros((7, 4))
    x[0, 0], x[0, 1] = 2, 1
    frames = [x.copy()]
    for t in range(steps):
        y = np.zeros_like(x)
        stage = t % 5
        if stage == 0:
            y[1] += x[0] / 2
            y[2] += x[0] / 2
        elif stage == 1:
            y[3] += np.roll(x[1], 1) + np.roll(x[2], -1)
        elif stage == 2:
            y[4] += x[3]
        elif stage == 3:
            y[5] += p * x[4]
            y[6] += (1 - p) * x[4]
        else:
            y[0] += 2 * x[5] + 3 * x[6]
        x = y
        frames.append(x.copy())
    return frames


def test_hand_oracle_values():
    frames = hand_ring(0.5, 5)
    assert frames[2][3].tolist() == [0.5, 1, 0.5, 1]
    assert frames[5].sum() == 7.5


@pytest.mark.parametrize("p", [Fraction(1, 2), Fraction(1, 5), Fraction(1)])
def test_mean_field_matches_hand_oracle(ring, p):
    traj = evaluate(ring.table, ring.init, 40, params={"p": p})
    expected = hand_ring(float(p), 40)
    assert len(traj.frames) == 41
    for frame, want in zip(traj.frames, expected):
        np.testing.assert_allclose(frame.occupancy, want, rtol=1e-12, atol=1e-12)
