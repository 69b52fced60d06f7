"""Signal supply: the law of the signal count and the signal process."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from ._rational import as_fraction, check_probability
from ._streams import stream

PMF = "pmf"
GEOMETRIC = "geometric"
UNLIMITED = "unlimited"

SIGNALS = ("H", "L")


@dataclass(frozen=True)
class SupplySpec:
    """Distribution of the total number of signals.

    Build with :meth:`pmf`, :meth:`geometric` or :meth:`unlimited` rather
    than the raw constructor. A geometric spec with ``rho = 1`` puts mass
    ``f1`` on an infinite supply and ``1 - f1`` on an empty one.
    """

    kind: str
    weights: tuple = ()
    f1: Optional[Fraction] = None
    rho: Optional[Fraction] = None

    @classmethod
    def pmf(cls, weights) -> "SupplySpec":
        if isinstance(weights, dict):
            kmax = max(int(k) for k in weights)
            w = [Fraction(0)] * (kmax + 1)
            for k, v in weights.items():
                w[int(k)] = as_fraction(v)
        else:
            w = [as_fraction(v) for v in weights]
        if not w:
            raise ValueError("empty pmf")
        if any(v < 0 for v in w):
            raise ValueError("negative pmf weight")
        if sum(w) != 1:
            raise ValueError(f"pmf sums to {sum(w)}, not 1")
        while len(w) > 1 and w[-1] == 0:
            w.pop()
        return cls(PMF, weights=tuple(w))

    @classmethod
    def geometric(cls, f1, rho) -> "SupplySpec":
        f1, rho = as_fraction(f1), as_fraction(rho)
        check_probability("f1", f1)
        if not 0 < rho <= 1:
            raise ValueError(f"rho={rho} outside (0, 1]")
        return cls(GEOMETRIC, f1=f1, rho=rho)

    @classmethod
    def unlimited(cls) -> "SupplySpec":
        return cls(UNLIMITED)

    @property
    def kmax(self) -> Optional[int]:
        """Largest supported count, or None when the support is unbounded."""
        if self.kind == PMF:
            return len(self.weights) - 1
        if self.kind == GEOMETRIC and self.f1 == 0:
            return 0
        return None

    @property
    def bounded(self) -> bool:
        return self.kmax is not None

    def prob(self, k: int) -> Fraction:
        """Pr(K = k) for a finite ``k``."""
        if k < 0:
            return Fraction(0)
        if self.kind == PMF:
            return self.weights[k] if k < len(self.weights) else Fraction(0)
        if self.kind == GEOMETRIC:
            if k == 0:
                return 1 - self.f1
            return self.f1 * self.rho ** (k - 1) * (1 - self.rho)
        return Fraction(0)

    def tail(self, k: int) -> Fraction:
        """Pr(K >= k) for any ``k >= 0``."""
        if k <= 0:
            return Fraction(1)
        if self.kind == PMF:
            return sum(self.weights[k:], Fraction(0))
        if self.kind == GEOMETRIC:
            return self.rho ** (k - 1) * self.f1
        return Fraction(1)

    def to_dict(self) -> dict:
        if self.kind == PMF:
            return {"kind": PMF, "weights": [str(w) for w in self.weights]}
        if self.kind == GEOMETRIC:
            return {"kind": GEOMETRIC, "f1": str(self.f1), "rho": str(self.rho)}
        return {"kind": UNLIMITED}

    @classmethod
    def from_dict(cls, d: dict) -> "SupplySpec":
        kind = d.get("kind")
        if kind == PMF:
            return cls.pmf(d["weights"])
        if kind == GEOMETRIC:
            return cls.geometric(d["f1"], d["rho"])
        if kind == UNLIMITED:
            return cls.unlimited()
        raise ValueError(f"unknown supply kind {kind!r}")


def survival(spec: SupplySpec, k: int) -> Fraction:
    """Prior probability that at least ``k`` signals exist (``k >= 1``)."""
    if k < 1:
        raise ValueError("survival is defined for k >= 1")
    return spec.tail(k)


@dataclass(frozen=True)
class IHRReport:
    holds: bool
    first_violation: Optional[int]
    hazards: tuple


def hazard(spec: SupplySpec, k: int) -> Optional[Fraction]:
    t = spec.tail(k)
    if t == 0:
        return None
    return spec.prob(k) / t


def check_ihr(spec: SupplySpec, *, strict: bool = False) -> IHRReport:
    """Check that Pr(K=k)/Pr(K>=k) is nondecreasing over the support.

    ``strict=True`` demands a strictly increasing hazard, which no
    geometric law satisfies.
    """
    if spec.kind == UNLIMITED:
        return IHRReport(True, None, ())
    if spec.kind == PMF:
        ks = [k for k in range(spec.kmax + 1) if spec.tail(k) > 0]
    else:
        # hazard is 1-f1 at 0 and constant from 1 on
        ks = [0] if spec.f1 == 0 else [0, 1, 2]
    hs = [hazard(spec, k) for k in ks]
    for prev, cur, k in zip(hs, hs[1:], ks[1:]):
        if cur < prev or (strict and cur == prev):
            return IHRReport(False, k, tuple(hs))
    return IHRReport(True, None, tuple(hs))


@dataclass(frozen=True)
class SignalModel:
    """Binary state with conditionally i.i.d. binary signals.

    ``pi`` is Pr(signal = state). Values in (1/2, 1) are the informative
    regime; ``pi = 1`` is accepted for perfect-signal experiments.
    """

    p0: Fraction
    pi: Fraction

    def __post_init__(self):
        object.__setattr__(self, "p0", check_probability("p0", as_fraction(self.p0)))
        pi = as_fraction(self.pi)
        if not Fraction(1, 2) < pi <= 1:
            raise ValueError(f"pi={pi} outside (1/2, 1]")
        object.__setattr__(self, "pi", pi)

    def signal_prob(self, signal: str, p=None) -> Fraction:
        """Pr(next signal = ``signal``) under belief ``p`` (default p0)."""
        p = self.p0 if p is None else as_fraction(p)
        ph = p * self.pi + (1 - p) * (1 - self.pi)
        return ph if signal == "H" else 1 - ph


@dataclass
class SignalSequence:
    """A realized state and signal sequence; infinite ones extend lazily."""

    omega: str
    count: Optional[int]
    pi: float
    _rng: object = field(repr=False, default=None)
    _drawn: list = field(default_factory=list)

    def __len__(self):
        if self.count is None:
            raise TypeError("unbounded signal sequence has no length")
        return self.count

    def __getitem__(self, j: int) -> str:
        if j < 0 or (self.count is not None and j >= self.count):
            raise IndexError(j)
        other = "L" if self.omega == "H" else "H"
        while len(self._drawn) <= j:
            self._drawn.append(self.omega if self._rng.random() < self.pi else other)
        return self._drawn[j]

    def take(self, n: int) -> list:
        if self.count is not None:
            n = min(n, self.count)
        return [self[j] for j in range(n)]

    @property
    def signals(self) -> list:
        """Materialized signals (the drawn prefix for unbounded sequences)."""
        if self.count is not None:
            return self.take(self.count)
        return list(self._drawn)


def sample_count(spec: SupplySpec, rng) -> Optional[int]:
    """Draw K from ``spec``; None stands for an infinite supply."""
    if spec.kind == UNLIMITED:
        return None
    u = rng.random()
    if spec.kind == PMF:
        acc = 0.0
        for k, w in enumerate(spec.weights):
            acc += float(w)
            if u < acc:
                return k
        return spec.kmax
    if u >= float(spec.f1):
        return 0
    if spec.rho == 1:
        return None
    return int(rng.geometric(1 - float(spec.rho)))


def sample_sequence(spec: SupplySpec, model: SignalModel, seed) -> SignalSequence:
    """Draw state, count and signals from one deterministic stream.

    The count is drawn independently of the signal process, so truncating
    an infinite conditionally i.i.d. sequence at K gives the same law.
    """
    rng = stream(seed)
    omega = "H" if rng.random() < float(model.p0) else "L"
    count = sample_count(spec, rng)
    seq = SignalSequence(omega, count, float(model.pi), rng)
    if count is not None:
        seq.take(count)
    return seq
