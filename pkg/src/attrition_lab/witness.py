"""Witnesses: free signals, bounded preference shocks, and the bounds that silence them.

A witness receives the next signal in the sequence for free, then reports
to maximise continuation value plus a private shock per message. The
supply count K is drawn independently of the signal content, so a witness
signal only tells the public that one more signal existed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Optional, Union

import numpy as np
from scipy import stats

from ._rational import as_fraction
from ._streams import stream
from .beliefs import SurvivalBelief
from .supply import PMF, UNLIMITED, SupplySpec

Number = Union[Fraction, float]


# -- shock densities -------------------------------------------------------

class ShockDensity:
    """A density on a bounded interval with a certified upper bound ``fbar``."""

    lo: float
    hi: float
    fbar: float

    def pdf(self, x):
        raise NotImplementedError

    def sample(self, rng, size):
        """Rejection sampling under the flat envelope fbar on [lo, hi]."""
        out = np.empty(0)
        need = int(np.prod(size))
        while out.size < need:
            n = max(2 * (need - out.size), 64)
            x = rng.uniform(self.lo, self.hi, n)
            y = rng.uniform(0.0, self.fbar, n)
            out = np.concatenate([out, x[y <= self.pdf(x)]])
        return out[:need].reshape(size)


@dataclass(frozen=True)
class UniformShock(ShockDensity):
    """Uniform on [0, width]; fbar = 1/width."""

    width: float = 1.0

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("width must be positive")

    lo = 0.0

    @property
    def hi(self):
        return float(self.width)

    @property
    def fbar(self):
        return 1.0 / float(self.width)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= 0) & (x <= self.hi), self.fbar, 0.0)

    def sample(self, rng, size):
        return rng.uniform(0.0, self.hi, size)


@dataclass(frozen=True)
class PiecewiseLinearShock(ShockDensity):
    """Density interpolating ``(xs, ys)`` linearly, zero outside [xs[0], xs[-1]].

    The integral must be 1 to within 1e-12; fbar is the largest knot value,
    which bounds a piecewise-linear function exactly.
    """

    xs: tuple
    ys: tuple

    def __post_init__(self):
        xs, ys = np.asarray(self.xs, float), np.asarray(self.ys, float)
        if xs.ndim != 1 or xs.size < 2 or xs.size != ys.size or np.any(np.diff(xs) <= 0):
            raise ValueError("knots must be increasing with matching values")
        if np.any(ys < 0):
            raise ValueError("density values must be nonnegative")
        area = float(np.sum(np.diff(xs) * (ys[1:] + ys[:-1]) / 2))
        if abs(area - 1.0) > 1e-12:
            raise ValueError(f"density integrates to {area}, not 1")

    @classmethod
    def triangular(cls, width: float = 1.0) -> "PiecewiseLinearShock":
        """Symmetric triangle on [0, width] with peak 2/width."""
        return cls((0.0, width / 2, width), (0.0, 2.0 / width, 0.0))

    @property
    def lo(self):
        return float(self.xs[0])

    @property
    def hi(self):
        return float(self.xs[-1])

    @property
    def fbar(self):
        return float(max(self.ys))

    def pdf(self, x):
        return np.interp(x, self.xs, self.ys, left=0.0, right=0.0)


@dataclass(frozen=True)
class ClippedGaussianShock(ShockDensity):
    """Normal(0, sigma) truncated to [-clip*sigma, clip*sigma] and renormalised.

    The mode is at 0, so fbar = phi(0) / (sigma * (Phi(clip) - Phi(-clip))).
    """

    sigma: float = 1.0
    clip: float = 2.0

    def __post_init__(self):
        if self.sigma <= 0 or self.clip <= 0:
            raise ValueError("sigma and clip must be positive")

    @property
    def lo(self):
        return -self.clip * self.sigma

    @property
    def hi(self):
        return self.clip * self.sigma

    @property
    def _dist(self):
        return stats.truncnorm(-self.clip, self.clip, loc=0.0, scale=self.sigma)

    @property
    def fbar(self):
        mass = stats.norm.cdf(self.clip) - stats.norm.cdf(-self.clip)
        return float(stats.norm.pdf(0.0) / (self.sigma * mass))

    def pdf(self, x):
        return self._dist.pdf(x)

    def sample(self, rng, size):
        return self._dist.rvs(size=size, random_state=rng)


@dataclass(frozen=True)
class DeclaredShock(ShockDensity):
    """User density on [lo, hi] with a declared bound fbar.

    The bound is trusted input; only a coarse grid check is made.
    """

    density: Callable
    lo: float
    hi: float
    fbar: float

    def __post_init__(self):
        if not self.hi > self.lo or self.fbar <= 0:
            raise ValueError("need lo < hi and fbar > 0")
        xs = np.linspace(self.lo, self.hi, 1001)
        vals = np.asarray(self.density(xs), dtype=float)
        if np.any(vals > self.fbar * (1 + 1e-9)) or np.any(vals < 0):
            raise ValueError("density exceeds its declared bound")

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lo) & (x <= self.hi)
        return np.where(inside, np.asarray(self.density(x), dtype=float), 0.0)


def density_from_dict(d: Mapping) -> ShockDensity:
    kind = d.get("kind", "uniform")
    if kind == "uniform":
        return UniformShock(float(as_fraction(d.get("width", 1))))
    if kind == "triangular":
        return PiecewiseLinearShock.triangular(float(as_fraction(d.get("width", 1))))
    if kind == "piecewise":
        return PiecewiseLinearShock(tuple(map(float, d["xs"])), tuple(map(float, d["ys"])))
    if kind == "gaussian":
        return ClippedGaussianShock(float(as_fraction(d.get("sigma", 1))), float(as_fraction(d.get("clip", 2))))
    raise ValueError(f"unknown shock density {kind!r}")


@dataclass(frozen=True)
class WitnessSpec:
    """Witness arrival rule, per-message shock densities, and the payment bound R.

    ``phi(round, history)`` gives the arrival probability when the supply is
    nonempty; it is forced to 0 when the supply is empty.
    """

    densities: Mapping
    R: Fraction
    phi: Union[Callable, Fraction] = Fraction(1)

    def __post_init__(self):
        if len(self.densities) < 2:
            raise ValueError("need at least two messages")
        object.__setattr__(self, "R", as_fraction(self.R))
        if self.R <= 0:
            raise ValueError("R must be positive")

    @property
    def messages(self) -> tuple:
        return tuple(self.densities)

    @property
    def fbar(self) -> float:
        return max(d.fbar for d in self.densities.values())

    def arrival_probability(self, round_index: int, history, supply_nonempty: bool) -> Fraction:
        if not supply_nonempty:
            return Fraction(0)
        p = self.phi(round_index, history) if callable(self.phi) else self.phi
        p = as_fraction(p)
        if not 0 <= p <= 1:
            raise ValueError(f"phi={p} outside [0, 1]")
        return p


# -- conditional survival --------------------------------------------------

def hat_survival(spec: SupplySpec, q: int, k: int) -> Fraction:
    """Pr(K >= k + q | K >= q): survival after q signals are known to be gone."""
    if q < 0 or k < 0:
        raise ValueError("q and k must be nonnegative")
    base = spec.tail(q)
    if base == 0:
        raise ValueError(f"Pr(K >= {q}) = 0; nothing to condition on")
    return spec.tail(k + q) / base


@dataclass(frozen=True)
class HatSurvival:
    """hat_survival(q, k) for k = 1..len(values)."""

    q: int
    values: tuple

    def __getitem__(self, k: int) -> Fraction:
        return self.values[k - 1]


def hat_survival_table(spec: SupplySpec, q: int, kmax: int = 4) -> HatSurvival:
    return HatSurvival(q, tuple(hat_survival(spec, q, k) for k in range(1, kmax + 1)))


# round types used to build small public histories
WITNESS = "witness"  # surely discovers the next signal
REVEAL = "reveal"  # investigator whose message shows a discovery
POOL = "pool"  # investigator whose message pools finding and not finding
SHIRK = "shirk"  # nothing happens to the supply
ROUND_TYPES = (WITNESS, REVEAL, POOL, SHIRK)


def _lumped_pmf(spec: SupplySpec, cut: int) -> dict:
    """pmf of K on 0..cut-1 plus all mass of {K >= cut} on ``cut``."""
    out = {j: spec.prob(j) for j in range(cut)}
    out[cut] = spec.tail(cut)
    return {j: p for j, p in out.items() if p}


def _history_posterior(pmf: dict, types, lam: Fraction) -> Optional[dict]:
    """Joint posterior over (K, discovered) after a sequence of round types."""
    post = {(K, 0): p for K, p in pmf.items()}
    for t in types:
        nxt: dict = {}
        for (K, r), p in post.items():
            left = K > r
            if t == SHIRK:
                moves = [(r, 1)]
            elif t == WITNESS:
                moves = [(r + 1, 1)] if left else []
            elif t == REVEAL:
                moves = [(r + 1, lam)] if left else []
            else:
                moves = [(r + 1, lam), (r, 1 - lam)] if left else [(r, Fraction(1))]
            for r2, w in moves:
                if w:
                    nxt[(K, r2)] = nxt.get((K, r2), Fraction(0)) + p * w
        total = sum(nxt.values())
        if total == 0:
            return None
        post = {key: v / total for key, v in nxt.items()}
    return post


@dataclass
class IHRMonotonicityReport:
    part_i: bool
    part_ii: bool
    violation: Optional[dict]
    table: list  # rows {q, k, hat}
    histories_checked: int = 0

    def to_dict(self) -> dict:
        return {"part_i": self.part_i, "part_ii": self.part_ii,
                "violation": {k: str(v) for k, v in self.violation.items()} if self.violation else None,
                "histories_checked": self.histories_checked,
                "table": [{k: str(v) for k, v in row.items()} for row in self.table]}


def ihr_monotonicity_check(spec: SupplySpec, *, depth: int = 4, kmax: int = 4, lams=("1/2", "1")) -> IHRMonotonicityReport:
    """Exact check of both monotonicity properties on small histories.

    Part ii: hat_survival(q, k) is nonincreasing in q. Part i: after every
    sequence of up to ``depth`` round types, the public survival F^k is at
    most hat_survival at q = number of surely discovered signals.
    Geometric tails are lumped at a cut beyond anything a short history can
    reach, which keeps the check exact.
    """
    if spec.kind == UNLIMITED:
        return IHRMonotonicityReport(True, True, None, [], 0)
    top_q = depth if spec.kind != PMF else min(depth, spec.kmax)
    table, part_ii, violation = [], True, None
    for k in range(1, kmax + 1):
        prev = None
        for q in range(0, top_q + 1):
            if spec.tail(q) == 0:
                break
            h = hat_survival(spec, q, k)
            table.append({"q": q, "k": k, "hat": h})
            if prev is not None and h > prev and part_ii:
                part_ii = False
                violation = {"part": "ii", "q": q, "k": k, "hat": h, "previous": prev}
            prev = h
    cut = depth + kmax + 1
    pmf = _lumped_pmf(spec, cut)
    part_i, checked = True, 0
    for lam in (as_fraction(x) for x in lams):
        for n in range(0, depth + 1):
            for types in itertools.product(ROUND_TYPES, repeat=n):
                post = _history_posterior(pmf, types, lam)
                if post is None:
                    continue
                checked += 1
                q = sum(t in (WITNESS, REVEAL) for t in types)
                for k in range(1, kmax + 1):
                    F = sum((p for (K, r), p in post.items() if K - r >= k), Fraction(0))
                    h = hat_survival(spec, q, k)
                    if F > h and part_i:
                        part_i = False
                        if violation is None:
                            violation = {"part": "i", "history": ",".join(types) or "-", "lam": lam,
                                         "k": k, "F": F, "hat": h}
    return IHRMonotonicityReport(part_i, part_ii, violation, table, checked)


# -- order statistics and contraction --------------------------------------

def order_stat_bound(L: int, fbar, eps):
    """Bound L(L-1) fbar eps on Pr(some two of L variables lie within eps)."""
    if L < 2:
        raise ValueError("need L >= 2")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if isinstance(fbar, float) or isinstance(eps, float):
        return L * (L - 1) * float(fbar) * float(eps)
    return L * (L - 1) * as_fraction(fbar) * as_fraction(eps)


def uniform_pair_collision(eps) -> Fraction:
    """Exact Pr(|X - Y| <= eps) for independent uniforms on [0, 1]."""
    eps = as_fraction(eps)
    if eps >= 1:
        return Fraction(1)
    return 1 - (1 - eps) ** 2


@dataclass(frozen=True)
class CollisionEstimate:
    frequency: float
    se: float
    n: int
    bound: float

    @property
    def within_bound(self) -> bool:
        return self.frequency <= self.bound + 3 * self.se


def collision_frequency(densities, eps: float, n: int, seed=0, batch: int = 200_000) -> CollisionEstimate:
    """Monte Carlo frequency of the event that two of the variables are within eps."""
    densities = list(densities)
    L = len(densities)
    rng = stream(seed)
    hits = 0
    done = 0
    while done < n:
        m = min(batch, n - done)
        draws = np.column_stack([d.sample(rng, m) for d in densities])
        draws.sort(axis=1)
        hits += int(np.count_nonzero(np.min(np.diff(draws, axis=1), axis=1) <= eps))
        done += m
    freq = hits / n
    se = math.sqrt(freq * (1 - freq) / n)
    bound = order_stat_bound(L, max(d.fbar for d in densities), float(eps))
    return CollisionEstimate(freq, se, n, bound)


def contraction_coefficient(F, m_count: int, fbar, R):
    """2 |M|^2 fbar R F / (1 - F)^2; below 1 it forces witnesses to be silent."""
    if not 0 <= F < 1:
        raise ValueError("F must lie in [0, 1)")
    if isinstance(F, Fraction) and not isinstance(fbar, float) and not isinstance(R, float):
        return 2 * m_count**2 * as_fraction(fbar) * as_fraction(R) * F / (1 - F) ** 2
    return 2 * m_count**2 * float(fbar) * float(R) * float(F) / (1 - float(F)) ** 2


# -- one witness round -----------------------------------------------------

@dataclass(frozen=True)
class WitnessDraw:
    signal: str
    message: str
    shocks: dict
    informative: bool
    best: dict  # signal -> best message


def witness_round(spec: SupplySpec, wspec: WitnessSpec, b: SurvivalBelief, z: Mapping, seed,
                  vbar: Optional[Mapping] = None, informed_value: Optional[Callable] = None,
                  signal_prob: Number = 0.5, shocks: Optional[Mapping] = None) -> WitnessDraw:
    """Draw shocks and a signal, and play the witness's best response.

    Utility of sending m after signal s is
    z(m) * informed_value(m, s) + (1 - z(m)) * vbar(m) + shock(m),
    where informed values lie in [0, R]. By default the informed value is R
    when the message matches the signal and 0 otherwise. The round is
    informative when the best message differs across the two signals.
    """
    if b.at(1) == 0 or spec.tail(1) == 0:
        raise ValueError("no signal left: a witness cannot arrive")
    msgs = wspec.messages
    R = float(wspec.R)
    rng = stream(seed)
    if shocks is None:
        shocks = {m: float(wspec.densities[m].sample(rng, 1)[0]) for m in msgs}
    vbar = vbar or {m: 0.0 for m in msgs}
    if informed_value is None:
        def informed_value(m, s):
            return R if m == s else 0.0

    def utility(m, s):
        iv = float(informed_value(m, s))
        if not 0 <= iv <= R:
            raise ValueError("informed values must lie in [0, R]")
        zm = float(z.get(m, 0))
        return zm * iv + (1 - zm) * float(vbar.get(m, 0)) + shocks[m]

    best = {s: max(msgs, key=lambda m: (utility(m, s), -msgs.index(m))) for s in ("H", "L")}
    signal = "H" if rng.random() < float(signal_prob) else "L"
    return WitnessDraw(signal, best[signal], dict(shocks), best["H"] != best["L"], best)


@dataclass(frozen=True)
class InformativeEstimate:
    frequency: float
    se: float
    n: int
    bound: float

    @property
    def within_bound(self) -> bool:
        return self.frequency <= self.bound + 3 * self.se


def informative_bound(wspec: WitnessSpec, z: Mapping) -> float:
    """|M|^2 fbar R max_{m != m'} (z(m) + z(m'))."""
    msgs = wspec.messages
    pair = max(float(z.get(a, 0)) + float(z.get(b, 0)) for a in msgs for b in msgs if a != b)
    return len(msgs) ** 2 * wspec.fbar * float(wspec.R) * pair


def informative_frequency(spec: SupplySpec, wspec: WitnessSpec, z: Mapping, n: int, seed=0,
                          vbar: Optional[Mapping] = None) -> InformativeEstimate:
    """Monte Carlo frequency of informative witness rounds, against the bound."""
    b = SurvivalBelief.from_spec(spec)
    base = tuple(seed) if isinstance(seed, (tuple, list)) else (seed,)
    hits = sum(witness_round(spec, wspec, b, z, base + (i,), vbar=vbar).informative for i in range(n))
    freq = hits / n
    return InformativeEstimate(freq, math.sqrt(freq * (1 - freq) / n), n, informative_bound(wspec, z))


@dataclass
class SilenceCertificate:
    F: float
    threshold: float
    coefficient: float
    silent: bool
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"F": self.F, "threshold": self.threshold, "coefficient": self.coefficient,
                "silent": self.silent, "notes": self.notes}


def silence_certificate(F, m_count: int, fbar, R) -> SilenceCertificate:
    """Whether the contraction argument rules out informative witnesses at F."""
    from .thresholds import witness_threshold

    coef = float(contraction_coefficient(F, m_count, fbar, R))
    thr = witness_threshold(m_count, fbar, R)
    return SilenceCertificate(float(F), thr, coef, coef < 1)
