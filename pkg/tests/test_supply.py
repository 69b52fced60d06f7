from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, strategies as st

from attrition_lab.supply import SignalModel, SupplySpec, check_ihr, hazard, sample_count, sample_sequence, survival
from attrition_lab._streams import stream


def test_survival_examples():
    assert survival(SupplySpec.geometric("1/2", "1/2"), 3) == F(1, 8)
    assert survival(SupplySpec.pmf({1: 1}), 1) == 1
    assert survival(SupplySpec.pmf(["1/3", "1/3", "1/3"]), 2) == F(1, 3)
    assert survival(SupplySpec.unlimited(), 50) == 1


def test_pmf_must_sum_to_one():
    with pytest.raises(ValueError):
        SupplySpec.pmf(["1/3", "1/3"])
    with pytest.raises(ValueError):
        SupplySpec.pmf(["-1/2", "3/2"])
    with pytest.raises(ValueError):
        SupplySpec.geometric("1/2", 0)


def test_ihr_examples():
    assert check_ihr(SupplySpec.geometric("1/2", "1/2")).holds
    rep = check_ihr(SupplySpec.pmf(["1/3", "1/3", "1/3"]))
    assert rep.holds and rep.hazards == (F(1, 3), F(1, 2), F(1))
    bad = check_ihr(SupplySpec.pmf({0: "1/2", 5: "1/2"}))
    assert not bad.holds and bad.first_violation == 1
    # constant hazard passes weakly, fails strictly
    assert not check_ihr(SupplySpec.geometric(1, "1/2"), strict=True).holds


def test_degenerate_and_perfect_sequences():
    for s in range(20):
        seq = sample_sequence(SupplySpec.pmf({2: 1}), SignalModel("1/2", "3/4"), s)
        assert len(seq) == 2
    seq = sample_sequence(SupplySpec.pmf({5: 1}), SignalModel(1, 1), 3)
    assert seq.omega == "H" and seq.signals == ["H"] * 5


def test_unlimited_sequences_extend_lazily():
    seq = sample_sequence(SupplySpec.unlimited(), SignalModel("1/2", "3/4"), 0)
    with pytest.raises(TypeError):
        len(seq)
    first = seq.take(30)
    assert len(seq.signals) == 30 and seq.take(30) == first


def test_geometric_count_frequency():
    spec = SupplySpec.geometric("4/5", "1/2")
    rng = stream((7, 0))
    n = 100_000
    counts = np.array([sample_count(spec, rng) for _ in range(n)])
    freq = np.mean(counts >= 2)
    se = np.sqrt(0.4 * 0.6 / n)
    assert abs(freq - 0.4) < 3 * se


def test_pmf_count_frequencies_and_signal_precision():
    spec = SupplySpec.pmf(["1/4", "1/4", "1/2"])
    rng = stream((8,))
    n = 100_000
    counts = np.bincount([sample_count(spec, rng) for _ in range(n)], minlength=3) / n
    for k, p in enumerate((0.25, 0.25, 0.5)):
        assert abs(counts[k] - p) < 3 * np.sqrt(p * (1 - p) / n)
    hits = total = 0
    for s in range(4000):
        seq = sample_sequence(SupplySpec.pmf({5: 1}), SignalModel(1, "3/4"), (9, s))
        hits += seq.signals.count("H")
        total += 5
    assert abs(hits / total - 0.75) < 3 * np.sqrt(0.75 * 0.25 / total)


def test_streams_are_reproducible():
    a = sample_sequence(SupplySpec.geometric("1/2", "1/2"), SignalModel("1/2", "3/4"), (1, 2))
    b = sample_sequence(SupplySpec.geometric("1/2", "1/2"), SignalModel("1/2", "3/4"), (1, 2))
    assert (a.omega, a.count, a.signals) == (b.omega, b.count, b.signals)


probs = st.fractions(min_value=0, max_value=1, max_denominator=20)


@given(probs, st.fractions(min_value=F(1, 20), max_value=1, max_denominator=20), st.integers(1, 12))
def test_geometric_survival_ratio(f1, rho, k):
    spec = SupplySpec.geometric(f1, rho)
    assert survival(spec, k) == rho ** (k - 1) * f1
    if survival(spec, k):
        assert survival(spec, k + 1) / survival(spec, k) == rho


@given(st.lists(st.integers(0, 6), min_size=1, max_size=6).filter(lambda w: sum(w) > 0 and w[-1] > 0))
def test_pmf_survival_nonincreasing_and_vanishes(w):
    spec = SupplySpec.pmf([F(x, sum(w)) for x in w])
    tails = [spec.tail(k) for k in range(len(w) + 3)]
    assert all(a >= b for a, b in zip(tails, tails[1:]))
    assert spec.tail(len(w)) == 0 and spec.bounded
    for k in range(len(w)):
        if spec.tail(k):
            assert hazard(spec, k) == spec.prob(k) / spec.tail(k)
