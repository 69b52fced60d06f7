from fractions import Fraction as F

import pytest
from hypothesis import given, strategies as st

from attrition_lab.grid import build_grid, cheat_gaps, exit_probabilities, exit_probabilities_kappa, pi_mixed

from oracles import gamblers_ruin

PTS = (F(1, 10), F(1, 4), F(1, 2), F(3, 4), F(9, 10))


@pytest.fixture
def grid():
    return build_grid("1/2", "1/5", "4/5", "3/4")


def test_build_grid_examples(grid):
    assert grid.points == PTS and grid.N == 3 and grid.points[grid.start] == F(1, 2)
    small = build_grid("1/2", "2/5", "3/5", "3/4")
    assert small.points == (F(1, 4), F(1, 2), F(3, 4)) and small.N == 1
    # a reachable point equal to a bound is a boundary point
    assert build_grid("1/2", "1/10", "9/10", "3/4").points == PTS


def test_build_grid_rejects_bad_inputs():
    with pytest.raises(ValueError):
        build_grid("1/2", "3/5", "4/5", "3/4")
    with pytest.raises(ValueError):
        build_grid("1/2", "1/5", "4/5", "1/2")


def test_exit_table(grid):
    ep = exit_probabilities(grid)
    assert ep.hH == (0, F(27, 40), F(9, 10), F(39, 40), 1)
    assert ep.hL == (0, F(1, 40), F(1, 10), F(13, 40), 1)
    for k in range(5):
        assert ep.hH[k] == gamblers_ruin(F(3, 4), k, 4)
        assert ep.hL[k] == gamblers_ruin(F(1, 4), k, 4)


def test_pi_mixed_examples(grid):
    ep = exit_probabilities(grid)
    assert pi_mixed(ep, "1/2", "1/2") == F(1, 2)
    assert pi_mixed(ep, "1/4", "1/4") == F(3, 16) == (F(1, 4) - F(1, 10)) / (F(9, 10) - F(1, 10))
    assert pi_mixed(ep, "1/2", "3/4") == F(13, 20)
    assert pi_mixed(ep, "3/4", "3/4") == F(13, 16)


def test_near_perfect_signals_ascend():
    g = build_grid("1/2", "1/5", "4/5", "999/1000")
    ep = exit_probabilities(g)
    assert all(ep.hH[k] > F(99, 100) for k in g.interior)


def test_kappa(grid):
    ep1 = exit_probabilities(grid)
    assert exit_probabilities_kappa(grid, 1) == ep1
    half = exit_probabilities_kappa(grid, "1/2")
    assert half.hH[2] < ep1.hH[2]
    assert all(half.pi_rho(k) < 1 for k in grid.interior)
    assert all(ep1.pi_rho(k) == 1 for k in grid.interior)
    with pytest.raises(ValueError):
        exit_probabilities_kappa(grid, 0)


@given(st.integers(1, 10), st.integers(1, 10), st.sampled_from([F(3, 5), F(2, 3), F(3, 4), F(4, 5), F(9, 10)]))
def test_optional_stopping_and_monotonicity(up, down, pi):
    # grid with `up` interior steps above p0 and `down` below, N up to 20
    from attrition_lab.beliefs import posterior_after_counts

    p0 = F(1, 2)
    hi = (posterior_after_counts(p0, up, 0, pi) + posterior_after_counts(p0, up + 1, 0, pi)) / 2
    lo = (posterior_after_counts(p0, 0, down, pi) + posterior_after_counts(p0, 0, down + 1, pi)) / 2
    g = build_grid(p0, lo, hi, pi)
    assert g.N == up + down + 1 <= 21
    ep = exit_probabilities(g)
    q0, qn = g.points[0], g.points[-1]
    for k, q in enumerate(g.points):
        assert pi_mixed(ep, q, q) == (q - q0) / (qn - q0)
        assert ep.hH[k] == gamblers_ruin(pi, k, g.N + 1)
    for k in g.interior:
        assert ep.hH[k] > ep.hL[k]
        assert ep.hH[k] > ep.hH[k - 1] and ep.hL[k] > ep.hL[k - 1]


@given(st.integers(2, 8), st.sampled_from([F(3, 5), F(3, 4), F(9, 10)]))
def test_cheat_gaps(n_up, pi):
    from attrition_lab.beliefs import posterior_after_counts

    p0 = F(1, 2)
    hi = (posterior_after_counts(p0, n_up, 0, pi) + posterior_after_counts(p0, n_up + 1, 0, pi)) / 2
    lo = (posterior_after_counts(p0, 0, n_up, pi) + posterior_after_counts(p0, 0, n_up + 1, pi)) / 2
    g = build_grid(p0, lo, hi, pi)
    gaps = cheat_gaps(exit_probabilities(g))
    N = g.N
    for k, (up, down) in gaps.items():
        assert up >= 0 and down >= 0
        if 2 <= k <= N - 1:
            assert up > 0 and down > 0
    # L at q^1 ends at q^0 for sure, H at q^N ends at q^{N+1} for sure
    assert gaps[1][1] == 0 and gaps[N][0] == 0
