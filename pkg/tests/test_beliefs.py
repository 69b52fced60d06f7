from fractions import Fraction as F

import pytest
from hypothesis import given, strategies as st

from attrition_lab.beliefs import (OffPathMessage, RoundStrategy, SurvivalBelief, message_distribution,
                                   posterior_after_counts, update_state_belief, update_survival)
from attrition_lab.supply import SupplySpec

from oracles import brute_remaining_update, odds_posterior, tail_of

TRUTH = RoundStrategy(1, None, {"found": 1}, {"none": 1})


def test_geometric_found_keeps_shape():
    b = SurvivalBelief.from_spec(SupplySpec.geometric("4/5", "1/2"))
    post = update_survival(b, TRUTH, "found", 1)
    assert post.at(1) == F(1, 2) and post.at(2) == F(1, 4) and post.at(5) == F(1, 32)


def test_nothing_found_with_certain_discovery_empties_supply():
    b = SurvivalBelief.from_spec(SupplySpec.geometric("4/5", "1/2"))
    post = update_survival(b, TRUTH, "none", 1)
    assert all(post.at(k) == 0 for k in range(1, 6))


def test_nothing_found_with_partial_discovery():
    b = SurvivalBelief.from_spec(SupplySpec.geometric("4/5", "1/2"))
    post = update_survival(b, TRUTH, "none", "1/2")
    assert post.at(1) == F(2, 3)
    assert post.at(1) > b.at(1) * F(1, 2)


def test_off_path_message_is_flagged():
    b = SurvivalBelief.from_spec(SupplySpec.pmf({2: 1}))
    with pytest.raises(OffPathMessage):
        update_survival(b, TRUTH, "none", 1)


def test_state_belief_examples():
    assert update_state_belief("1/2", "H", "3/4") == F(3, 4)
    assert update_state_belief("3/4", "L", "3/4") == F(1, 2)
    assert update_state_belief("9/10", "H", "3/4") == F(27, 28)
    assert posterior_after_counts("1/2", 2, 0, "3/4") == F(9, 10)
    assert posterior_after_counts("1/2", 0, 2, "3/4") == F(1, 10)
    assert posterior_after_counts("1/3", 4, 4, "3/4") == F(1, 3)


quarter = st.sampled_from([F(k, 4) for k in range(5)])
message = st.sampled_from(["a", "b"])


def _dist(p):
    return {m: w for m, w in (("a", p), ("b", 1 - p)) if w}


@st.composite
def strategies(draw):
    g = draw(quarter)
    return RoundStrategy(g, _dist(draw(quarter)) if g < 1 else None,
                         _dist(draw(quarter)) if g > 0 else None, _dist(draw(quarter)) if g > 0 else None)


@st.composite
def pmf_specs(draw):
    w = draw(st.lists(st.integers(0, 4), min_size=2, max_size=5).filter(lambda w: sum(w) and w[-1]))
    return SupplySpec.pmf([F(x, sum(w)) for x in w])


@given(pmf_specs(), strategies(), st.sampled_from([F(1, 2), F(1)]), message)
def test_update_matches_enumeration(spec, strat, lam, m):
    b = SurvivalBelief.from_spec(spec)
    rem = {r: spec.prob(r) for r in range(spec.kmax + 1)}
    brute = brute_remaining_update(rem, strat.gamma, strat.shirk_report, strat.found_report, strat.empty_report,
                                   lam, m)
    if brute is None:
        with pytest.raises(OffPathMessage):
            update_survival(b, strat, m, lam)
        return
    post = update_survival(b, strat, m, lam)
    assert all(post.at(k) == tail_of(brute, k) for k in range(1, spec.kmax + 2))
    assert all(x >= y for x, y in zip(post.f, post.f[1:]))


@given(pmf_specs(), strategies(), st.sampled_from([F(1, 2), F(1)]))
def test_supermartingale_and_identity(spec, strat, lam):
    b = SurvivalBelief.from_spec(spec)
    dist = message_distribution(b, strat, lam)
    assert sum(dist.values()) == 1
    for k in range(1, spec.kmax + 2):
        avg = sum((p * update_survival(b, strat, m, lam).at(k) for m, p in dist.items() if p), F(0))
        assert avg <= b.at(k)
        if strat.gamma == 0:
            assert avg == b.at(k)
    if strat.gamma == 0:
        for m, p in dist.items():
            if p:
                assert update_survival(b, strat, m, lam) == b


@given(st.fractions(min_value=F(1, 50), max_value=F(49, 50), max_denominator=50),
       st.fractions(min_value=F(51, 100), max_value=F(99, 100), max_denominator=100),
       st.integers(0, 6), st.integers(0, 6))
def test_state_posterior_matches_likelihoods_and_is_martingale(p, pi, nh, nl):
    assert posterior_after_counts(p, nh, nl, pi) == odds_posterior(p, nh, nl, pi)
    ph = p * pi + (1 - p) * (1 - pi)
    assert ph * update_state_belief(p, "H", pi) + (1 - ph) * update_state_belief(p, "L", pi) == p
