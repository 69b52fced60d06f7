import itertools
import json
from fractions import Fraction as F

import pytest

from attrition_lab.beliefs import RoundStrategy
from attrition_lab.designer import minimal_q
from attrition_lab.grid import build_grid, exit_probabilities
from attrition_lab.oracle import (FiniteGame, TractabilityError, all_shirk, belief_family, blood_test_game,
                                  bound_checks, corner_tables, dominance_scan, enumerate_equilibria,
                                  expected_payoff, max_deviation_gain, profile_key, random_tables,
                                  translate_tables, truncated_design_game)
from attrition_lab.sim import SimConfig, monte_carlo
from attrition_lab.supply import SignalModel, SupplySpec
from attrition_lab.thresholds import GameParams

from oracles import brute_pure_equilibria_t2, certificate_as_pure

MSGS = ("H", "L")


def game(T=2, supply=None, lam=1, c=1, R=10, P=10, tables=None, messages=MSGS):
    supply = supply or SupplySpec.pmf({2: 1})
    if tables is None:
        flat = {p: F(0) for p in itertools.product(messages, repeat=T)}
        tables = tuple(flat for _ in range(T))
    return FiniteGame(T, messages, supply, lam, tables, c, R, P)


def test_blood_test_flat_tables():
    certs = enumerate_equilibria(blood_test_game())
    assert len(certs) == 125
    assert not any(c.informative for c in certs) and all(c.epsilon == 0 for c in certs)
    assert all(set(c.beliefs) <= set(belief_family(blood_test_game())) for c in certs)
    json.dumps([c.to_dict() for c in certs])


def test_corner_table_count():
    assert len(corner_tables(blood_test_game())) == 16


@pytest.mark.parametrize("c,supply,lam", [
    (0, {2: 1}, 1), (1, {2: 1}, 1), (0, {0: "1/4", 1: "1/4", 2: "1/2"}, "1/2"), ("1/2", {1: "1/2", 2: "1/2"}, "1/2"),
])
def test_pure_equilibria_match_brute_force(c, supply, lam):
    spec = SupplySpec.pmf(supply)
    g0 = game(supply=spec, lam=lam, c=c)
    prior = {r: spec.prob(r) for r in range(spec.kmax + 1)}
    for tabs in random_tables(g0, 4, (3,)) + corner_tables(g0)[5:8]:
        g = g0.with_tables(tabs)
        certs = enumerate_equilibria(g, "1", ("prior",))
        mine = {certificate_as_pure(x.profile) for x in certs}
        assert mine == brute_pure_equilibria_t2(MSGS, prior, g.lam, g.c, g.tables[0], g.tables[1])


def test_zero_cost_admits_informative_play():
    g = game(T=1, c=0, tables=({("H",): F(1), ("L",): F(0)},))
    certs = enumerate_equilibria(g)
    assert any(c.informative for c in certs)
    dom = dominance_scan(g)
    assert not dom.certified and "indifference" in dom.reason


def test_all_shirk_under_constant_tables():
    const = {p: F(3) for p in itertools.product(MSGS, repeat=2)}
    g = game(tables=(const, const))
    keys = {profile_key(c.profile) for c in enumerate_equilibria(g)}
    for m in MSGS:
        prof = all_shirk(g, m)
        assert profile_key(prof) in keys
        assert expected_payoff(g, prof, 1) == 3 and expected_payoff(g, prof, 2) == 3
        assert max_deviation_gain(g, prof)[0] == 0


def test_single_agent_payoff_by_hand():
    tab = {("H",): F(7), ("L",): F(-2)}
    g = game(T=1, supply=SupplySpec.pmf({0: "1/4", 1: "3/4"}), lam="1/2", c=1, tables=(tab,))
    prof = {(): RoundStrategy(1, None, {"H": 1}, {"L": 1})}
    assert expected_payoff(g, prof, 1) == F(3, 8) * 7 + F(5, 8) * -2 - 1
    mixed = {(): RoundStrategy("1/2", {"H": 1}, {"H": 1}, {"L": 1})}
    assert expected_payoff(g, mixed, 1) == F(1, 2) * 7 + F(1, 2) * (F(3, 8) * 7 + F(5, 8) * -2 - 1)


def test_dominance_blood_test_and_majority():
    for tabs in corner_tables(blood_test_game())[:6]:
        dom = dominance_scan(blood_test_game(tabs))
        assert dom.certified and all(m == 1 for m in dom.margins.values())
    maj = {p: F(10) if p.count("H") >= 2 else F(-10) for p in itertools.product(MSGS, repeat=3)}
    g3 = game(T=3, supply=SupplySpec.pmf(["1/4"] * 4), lam="1/2", tables=(maj, maj, maj))
    dom = dominance_scan(g3)
    assert dom.certified and dom.margins == {1: 1, 2: 1, 3: 1}
    certs = enumerate_equilibria(g3, "1/2")
    assert certs and not any(c.informative for c in certs)


def test_low_survival_blocks_on_path_work():
    spec = SupplySpec.pmf({0: "19/20", 1: "1/20"})
    g0 = game(supply=spec, c=1, R=10)
    assert spec.tail(1) < F(1, 10)
    for tabs in random_tables(g0, 5, (21,)):
        for c in enumerate_equilibria(g0.with_tables(tabs)):
            assert all(c.profile[h].gamma == 0 for h in c.on_path)


def test_translation_keeps_best_responses():
    g0 = game(supply=SupplySpec.pmf({1: "1/2", 2: "1/2"}), lam="1/2", c="1/2")
    for tabs in random_tables(g0, 3, (5,)):
        g = g0.with_tables(tabs)
        a = {profile_key(c.profile) for c in enumerate_equilibria(g, "1/2")}
        b = {profile_key(c.profile) for c in enumerate_equilibria(translate_tables(g, 7), "1/2")}
        assert a == b


def test_guards():
    with pytest.raises(TractabilityError):
        enumerate_equilibria(game(T=3), "1/4")
    with pytest.raises(TractabilityError):
        enumerate_equilibria(game(), "1/16")
    with pytest.raises(ValueError):
        game(supply=SupplySpec.pmf({5: 1}))
    with pytest.raises(ValueError):
        game(tables=({("H", "H"): F(0)}, {("H", "H"): F(0)}))


def test_bound_checks():
    spec = SupplySpec.pmf({0: "1/5", 1: "2/5", 2: "2/5"})
    g0 = game(supply=spec, lam="1/2", c=1, R=10)
    work = RoundStrategy("3/4", {"H": 1}, {"H": "1/2", "L": "1/2"}, {"L": 1})
    for tabs in random_tables(g0, 4, (9,)):
        g = g0.with_tables(tabs)
        prof = {h: work for h in g.all_histories()}
        rep = bound_checks(g, prof)
        assert rep.holds and rep.lemma_a2
        assert all(isinstance(r["slack"], F) and r["slack"] >= 0 for r in rep.lemma_a2)
        json.dumps(rep.to_dict())
    shirk = all_shirk(g0, "H")
    rep = bound_checks(g0, shirk)
    assert rep.holds and all(r["F"] == r["E_next"] for r in rep.supermartingale)
    for c in enumerate_equilibria(g0.with_tables(random_tables(g0, 1, (10,))[0])):
        assert bound_checks(g0.with_tables(random_tables(g0, 1, (10,))[0]), c.profile, equilibrium=True).holds


def test_truncated_design_game_matches_simulation():
    grid = build_grid("1/2", "1/10", "9/10", "3/4")
    scheme = minimal_q(grid, exit_probabilities(grid), 1).scheme
    model = SignalModel("1/2", "3/4")
    T = 3
    g = truncated_design_game(scheme, T, SupplySpec.pmf({4: 1}), 1, model)
    designed = RoundStrategy(1, None, {"H": {"H": 1}, "L": {"L": 1}}, {"H": 1})
    prof = {h: designed for h in g.all_histories()}
    exact = expected_payoff(g, prof, 1)
    cfg = SimConfig(GameParams(10, 10, 1), SupplySpec.unlimited(), model, scheme, horizon=T)
    st = monte_carlo(cfg, 20_000, seed=12)
    assert abs(st.first_agent_payoff - float(exact)) <= 3 * st.first_agent_payoff_se
    # truncation waives the punishment of agents whose report is never contradicted in time
    assert exact == F(9, 26)
