"""Public beliefs about the remaining supply and about the state.

Survival beliefs follow the round-by-round Bayes rule for count-only
strategies: the message may depend on whether the agent worked and found
something, but not on the content of what was found. Every term is an
unconditional probability of (action, outcome, message):

* shirk and send m:           (1 - gamma) * shirk(m)
* work, find nothing, send m: gamma * ((1 - F1) + F1 (1 - lam)) * empty(m)
* work, find, send m:         gamma * lam * F1 * found(m)
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional

from ._rational import as_fraction, check_probability
from .supply import GEOMETRIC, PMF, SupplySpec


class OffPathMessage(ValueError):
    """The message has zero probability; Bayes' rule does not apply."""


@dataclass(frozen=True)
class SurvivalBelief:
    """(F^1, ..., F^K) plus a tail rule.

    Beyond index K the survival is 0 (``tail_ratio=None``) or keeps
    shrinking by ``tail_ratio`` per step, which represents geometric
    supplies without truncation.
    """

    f: tuple
    tail_ratio: Optional[Fraction] = None

    def __post_init__(self):
        f = tuple(as_fraction(v) for v in self.f)
        if not f:
            raise ValueError("survival vector needs at least F^1")
        prev = Fraction(1)
        for v in f:
            if not 0 <= v <= prev:
                raise ValueError(f"survival vector {f} is not nonincreasing in [0, 1]")
            prev = v
        object.__setattr__(self, "f", f)
        if self.tail_ratio is not None:
            r = as_fraction(self.tail_ratio)
            if not 0 <= r <= 1:
                raise ValueError(f"tail ratio {r} outside [0, 1]")
            object.__setattr__(self, "tail_ratio", r)

    @classmethod
    def from_spec(cls, spec: SupplySpec) -> "SurvivalBelief":
        if spec.kind == PMF:
            kmax = max(spec.kmax, 1)
            return cls(tuple(spec.tail(k) for k in range(1, kmax + 1)))
        if spec.kind == GEOMETRIC:
            return cls((spec.f1,), spec.rho)
        return cls((Fraction(1),), Fraction(1))

    def at(self, k: int) -> Fraction:
        if k <= 0:
            return Fraction(1)
        n = len(self.f)
        if k <= n:
            return self.f[k - 1]
        if self.tail_ratio is None:
            return Fraction(0)
        return self.f[-1] * self.tail_ratio ** (k - n)

    @property
    def f0(self) -> Fraction:
        """Probability that nothing is left."""
        return 1 - self.f[0]

    def remaining_pmf(self) -> dict:
        """Pr(remaining = r) for the explicitly stored range (zero tail only)."""
        if self.tail_ratio is not None:
            raise ValueError("remaining pmf is infinite for a geometric tail")
        return {r: self.at(r) - self.at(r + 1) for r in range(len(self.f) + 1)}


def _dist(d, name) -> dict:
    if d is None:
        return {}
    out = {m: as_fraction(p) for m, p in d.items()}
    if any(p < 0 for p in out.values()) or sum(out.values()) != 1:
        raise ValueError(f"{name} is not a probability distribution: {d}")
    return out


@dataclass(frozen=True)
class RoundStrategy:
    """Mixed behaviour of one agent at one public history.

    ``found_report`` maps messages to probabilities. In content mode it maps
    each signal value to such a distribution instead; use
    :meth:`found_marginal` to collapse it for count-level updating.
    Distributions for branches taken with probability zero may be None.
    """

    gamma: Fraction
    shirk_report: Optional[Mapping] = None
    found_report: Optional[Mapping] = None
    empty_report: Optional[Mapping] = None

    def __post_init__(self):
        g = check_probability("gamma", as_fraction(self.gamma))
        object.__setattr__(self, "gamma", g)
        if g < 1 and self.shirk_report is None:
            raise ValueError("shirk_report required when gamma < 1")
        if g > 0 and (self.found_report is None or self.empty_report is None):
            raise ValueError("found_report and empty_report required when gamma > 0")
        object.__setattr__(self, "shirk_report", _dist(self.shirk_report, "shirk_report"))
        object.__setattr__(self, "empty_report", _dist(self.empty_report, "empty_report"))
        fr = self.found_report or {}
        if fr and all(isinstance(v, Mapping) for v in fr.values()):
            fr = {s: _dist(d, f"found_report[{s}]") for s, d in fr.items()}
        else:
            fr = _dist(fr or None, "found_report")
        object.__setattr__(self, "found_report", fr)

    @property
    def content_mode(self) -> bool:
        return bool(self.found_report) and all(isinstance(v, dict) for v in self.found_report.values())

    def found_marginal(self, signal_probs: Optional[Mapping] = None) -> dict:
        if not self.content_mode:
            return dict(self.found_report)
        if signal_probs is None:
            raise ValueError("content-mode strategy needs signal probabilities")
        out: dict = {}
        for s, dist in self.found_report.items():
            ps = as_fraction(signal_probs[s])
            for m, p in dist.items():
                out[m] = out.get(m, Fraction(0)) + ps * p
        return out

    @property
    def messages(self) -> set:
        ms = set(self.shirk_report) | set(self.empty_report)
        if self.content_mode:
            for d in self.found_report.values():
                ms |= set(d)
        else:
            ms |= set(self.found_report)
        return ms

    @classmethod
    def shirk(cls, message) -> "RoundStrategy":
        return cls(Fraction(0), {message: Fraction(1)})


def _terms(b: SurvivalBelief, strat: RoundStrategy, m, lam: Fraction, signal_probs=None):
    """(alpha, empty-after-work, beta) unconditional masses of message m."""
    g = strat.gamma
    f1 = b.at(1)
    alpha = (1 - g) * strat.shirk_report.get(m, Fraction(0))
    delta = strat.empty_report.get(m, Fraction(0))
    found = strat.found_marginal(signal_probs).get(m, Fraction(0)) if g > 0 else Fraction(0)
    empty = g * ((1 - f1) + f1 * (1 - lam)) * delta
    beta = g * lam * f1 * found
    return alpha, delta, found, empty, beta


def message_probability(b: SurvivalBelief, strat: RoundStrategy, message, lam, signal_probs=None) -> Fraction:
    alpha, _, _, empty, beta = _terms(b, strat, message, as_fraction(lam), signal_probs)
    return alpha + empty + beta


def message_distribution(b: SurvivalBelief, strat: RoundStrategy, lam, signal_probs=None) -> dict:
    return {m: message_probability(b, strat, m, lam, signal_probs) for m in sorted(strat.messages, key=str)}


def update_survival(b: SurvivalBelief, strat: RoundStrategy, message, lam, signal_probs=None) -> SurvivalBelief:
    """Posterior survival vector after observing ``message``.

    Raises OffPathMessage when ``message`` has probability zero; the caller
    decides which off-path belief to use.
    """
    lam = as_fraction(lam)
    alpha, delta, found, empty, beta = _terms(b, strat, message, lam, signal_probs)
    denom = alpha + empty + beta
    if denom == 0:
        raise OffPathMessage(f"message {message!r} has zero probability")
    g = strat.gamma
    keep = alpha + g * (1 - lam) * delta
    fk = tuple((b.at(k) * keep + g * lam * b.at(k + 1) * found) / denom for k in range(1, len(b.f) + 1))
    return SurvivalBelief(fk, b.tail_ratio)


def update_state_belief(p, observed_signal: str, pi) -> Fraction:
    """Bayes update of Pr(state = H) after one conditionally i.i.d. signal."""
    return posterior_after_counts(p, 1 if observed_signal == "H" else 0, 1 if observed_signal == "L" else 0, pi)


def posterior_after_counts(p0, n_h: int, n_l: int, pi) -> Fraction:
    """Posterior after ``n_h`` H signals and ``n_l`` L signals.

    Only the net count matters: each H multiplies the odds by pi/(1-pi).
    """
    p0, pi = as_fraction(p0), as_fraction(pi)
    if p0 in (0, 1):
        return p0
    if pi == 1:
        if n_h == n_l:
            return p0
        return Fraction(1) if n_h > n_l else Fraction(0)
    odds = p0 / (1 - p0) * (pi / (1 - pi)) ** (n_h - n_l)
    return odds / (1 + odds)
