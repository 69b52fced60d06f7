"""Closed-form constants of the impossibility argument and attrition certificates."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from ._rational import as_fraction
from .supply import GEOMETRIC, SupplySpec

IMPOSSIBLE_BOUNDED = "IMPOSSIBLE-bounded-support"
IMPOSSIBLE_LEMMA1 = "IMPOSSIBLE-lemma1"
DIAGNOSTIC = "DIAGNOSTIC"
INCONCLUSIVE = "INCONCLUSIVE"


@dataclass(frozen=True)
class GameParams:
    """Reward bound R, punishment bound P, effort cost c, discovery probability lam.

    P is carried for the payoff box but enters none of the closed forms,
    which work with gross utility shifted into [0, R].
    """

    R: Fraction
    P: Fraction
    c: Fraction
    lam: Fraction = Fraction(1)

    def __post_init__(self):
        for name in ("R", "P", "c", "lam"):
            object.__setattr__(self, name, as_fraction(getattr(self, name)))
        if self.c <= 0:
            raise ValueError("effort cost must be positive")
        if self.R < self.c:
            raise ValueError(f"need R >= c, got R={self.R}, c={self.c}")
        if self.P < 0:
            raise ValueError("P must be nonnegative")
        if not 0 < self.lam <= 1:
            raise ValueError(f"lam={self.lam} outside (0, 1]")


def lemma1_bound(params: GameParams) -> Fraction:
    """Smallest F^1 at which anyone can be willing to work: c/R."""
    return params.c / params.R


def c_lambda(params: GameParams) -> Fraction:
    R, c, lam = params.R, params.c, params.lam
    if lam == 1:
        return 2 * R / c
    return 2 * R / (c * lam * (1 - lam))


@dataclass(frozen=True)
class ProofConstants:
    C: Fraction
    sqrtG: Fraction
    G: Fraction
    eta: Fraction
    B: Fraction
    g: Fraction
    terms: tuple = field(default=())  # right-hand terms of the final inequality
    quarter: Fraction = Fraction(0)  # c / (4R)

    @property
    def terms_strictly_below_quarter(self) -> tuple:
        return tuple(t < self.quarter for t in self.terms)

    @property
    def terms_at_most_quarter(self) -> tuple:
        return tuple(t <= self.quarter for t in self.terms)

    @property
    def final_inequality_holds(self) -> bool:
        return sum(self.terms) < 4 * self.quarter


def proof_constants(params: GameParams) -> ProofConstants:
    """Constants (C, G, eta, B, g) and the four terms that working must beat.

    Working is strictly suboptimal when
    c/R > 1/(2 eta G^2) + 3/sqrt(G) + 2 B eta + B/sqrt(G);
    ``terms`` holds those four summands, evaluated exactly.
    """
    R, c, lam = params.R, params.c, params.lam
    C = c_lambda(params)
    if lam == 1:
        sqrtG = 128 * R**3 / c**3
    else:
        sqrtG = 128 * R**3 / (c**3 * lam**2 * (1 - lam))
    G = sqrtG**2
    eta = 1 / sqrtG
    g = R / (lam * c)
    B = 8 * C * g
    terms = (1 / (2 * eta * G**2), 3 / sqrtG, 2 * B * eta, B / sqrtG)
    return ProofConstants(C, sqrtG, G, eta, B, g, terms, c / (4 * R))


def _witness_lhs(F: float) -> float:
    return 2 * F / (1 - F) ** 2


def witness_threshold(m_count: int, fbar, R, tol: float = 1e-14) -> float:
    """Largest F for which the witness contraction certifies silence.

    Solves 2F/(1-F)^2 = 1/(m_count^2 fbar R) on (0, 1) by bisection; the
    left side increases strictly from 0, so the root is unique.
    """
    if m_count < 2:
        raise ValueError("need at least two messages")
    fbar, R = float(fbar), float(R)
    if fbar <= 0 or R <= 0:
        raise ValueError("fbar and R must be positive")
    target = 1.0 / (m_count**2 * fbar * R)
    lo, hi = 0.0, 1.0
    while True:
        mid = 0.5 * (lo + hi)
        val = _witness_lhs(mid) - target
        if abs(val) < tol * max(1.0, target) or hi - lo < 1e-300 or mid in (lo, hi):
            return mid
        if val > 0:
            hi = mid
        else:
            lo = mid


@dataclass(frozen=True)
class Certificate:
    verdict: str
    reason: str
    k: Optional[int] = None
    all_k: bool = False
    values: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "reason": self.reason,
            "k": self.k,
            "all_k": self.all_k,
            "values": {k: str(v) for k, v in self.values.items()},
        }


def attrition_certificate(spec: SupplySpec, params: GameParams) -> Certificate:
    """Classify a supply against the closed-form impossibility conditions.

    The DIAGNOSTIC verdict only flags indices where F^k > C(lam) F^{k+1};
    it is not an impossibility proof, since the thresholds for k >= 2 have
    no closed form.
    """
    bound = lemma1_bound(params)
    if spec.bounded:
        K = spec.kmax + 1
        return Certificate(IMPOSSIBLE_BOUNDED, f"F^{K} = 0", k=K, values={"F^K": spec.tail(K)})
    f1 = spec.tail(1)
    if f1 < bound:
        return Certificate(IMPOSSIBLE_LEMMA1, "F^1 < c/R", k=1, values={"F^1": f1, "c/R": bound})
    C = c_lambda(params)
    if spec.kind == GEOMETRIC and spec.rho < 1 and 1 / spec.rho > C:
        # ratio F^k/F^{k+1} = 1/rho for every k
        return Certificate(DIAGNOSTIC, "F^k > C(lam) F^{k+1} for every k", all_k=True,
                           values={"C": C, "1/rho": 1 / spec.rho})
    return Certificate(INCONCLUSIVE, "no closed-form impossibility applies", values={"C": C, "F^1": f1})
