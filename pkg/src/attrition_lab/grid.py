"""Belief grid of the truthful-work equilibrium and its exit probabilities."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from ._rational import as_fraction
from .beliefs import posterior_after_counts


@dataclass(frozen=True)
class BeliefGrid:
    """Posteriors reachable from ``p0`` by single-signal steps.

    ``points[0]`` and ``points[-1]`` are the absorbing boundary points; the
    interior points 1..N lie strictly inside (p_lo, p_hi).
    """

    points: tuple
    pi: Fraction
    p0: Fraction
    start: int
    p_lo: Fraction
    p_hi: Fraction

    @property
    def N(self) -> int:
        return len(self.points) - 2

    @property
    def interior(self) -> range:
        return range(1, self.N + 1)

    def index(self, q) -> int:
        q = as_fraction(q)
        try:
            return self.points.index(q)
        except ValueError:
            raise ValueError(f"{q} is not a grid point") from None

    def z(self, k: int) -> Fraction:
        """Probability that the next signal is H when the belief is q^k."""
        q = self.points[k]
        return q * self.pi + (1 - q) * (1 - self.pi)


def build_grid(p0, p_lo, p_hi, pi) -> BeliefGrid:
    """Grid of posteriors reachable from p0 inside (p_lo, p_hi).

    A reachable point landing exactly on p_lo or p_hi is treated as a
    boundary point.
    """
    p0, p_lo, p_hi, pi = (as_fraction(x) for x in (p0, p_lo, p_hi, pi))
    if not 0 < p_lo < p0 < p_hi < 1:
        raise ValueError(f"need 0 < p_lo < p0 < p_hi < 1, got {p_lo}, {p0}, {p_hi}")
    if not Fraction(1, 2) < pi < 1:
        raise ValueError(f"pi={pi} outside (1/2, 1)")
    up = [p0]
    n = 0
    while up[-1] < p_hi:
        n += 1
        up.append(posterior_after_counts(p0, n, 0, pi))
    down = []
    n = 0
    q = p0
    while q > p_lo:
        n += 1
        q = posterior_after_counts(p0, 0, n, pi)
        down.append(q)
    points = tuple(reversed(down)) + tuple(up)
    return BeliefGrid(points, pi, p0, len(down), p_lo, p_hi)


def _solve_absorbing(grid: BeliefGrid, up_prob: Fraction, kappa: Fraction, top: Fraction, bottom: Fraction) -> tuple:
    """Solve h_k = kappa (u h_{k+1} + (1-u) h_{k-1}) with fixed boundary values.

    Tridiagonal elimination in exact arithmetic.
    """
    N = grid.N
    a = kappa * (1 - up_prob)  # coefficient of h_{k-1}
    b = kappa * up_prob  # coefficient of h_{k+1}
    # row k: h_k - a h_{k-1} - b h_{k+1} = 0  ->  h_k = c_k h_{k+1} + d_k
    cs, ds = [], []
    c_prev, d_prev = Fraction(0), bottom
    for k in range(1, N + 1):
        denom = 1 - a * c_prev
        c_k = b / denom
        d_k = a * d_prev / denom
        cs.append(c_k)
        ds.append(d_k)
        c_prev, d_prev = c_k, d_k
    h = [Fraction(0)] * (N + 2)
    h[0], h[N + 1] = bottom, top
    for k in range(N, 0, -1):
        h[k] = cs[k - 1] * h[k + 1] + ds[k - 1]
    return tuple(h)


@dataclass(frozen=True)
class ExitProbabilities:
    """Per-state probabilities of absorbing at the top / bottom boundary.

    With ``kappa < 1`` each step can instead end in a payoff-free stopped
    state, so top + bottom < 1 on interior points.
    """

    grid: BeliefGrid
    kappa: Fraction
    hH: tuple
    hL: tuple
    lH: tuple
    lL: tuple

    def top(self, p, k: int) -> Fraction:
        """Pr(exit at the top | private belief p, public belief q^k)."""
        p = as_fraction(p)
        return p * self.hH[k] + (1 - p) * self.hL[k]

    def bottom(self, p, k: int) -> Fraction:
        p = as_fraction(p)
        return p * self.lH[k] + (1 - p) * self.lL[k]

    def pi_rho(self, k: int) -> Fraction:
        """Probability that learning leaves the interior at all, from q^k."""
        q = self.grid.points[k]
        return self.top(q, k) + self.bottom(q, k)


def exit_probabilities(grid: BeliefGrid) -> ExitProbabilities:
    return exit_probabilities_kappa(grid, Fraction(1))


def exit_probabilities_kappa(grid: BeliefGrid, kappa) -> ExitProbabilities:
    """Exit tables when each step survives with probability ``kappa``."""
    kappa = as_fraction(kappa)
    if not 0 < kappa <= 1:
        raise ValueError(f"kappa={kappa} outside (0, 1]")
    pi = grid.pi
    hH = _solve_absorbing(grid, pi, kappa, Fraction(1), Fraction(0))
    hL = _solve_absorbing(grid, 1 - pi, kappa, Fraction(1), Fraction(0))
    if kappa == 1:
        lH = tuple(1 - h for h in hH)
        lL = tuple(1 - h for h in hL)
    else:
        lH = _solve_absorbing(grid, pi, kappa, Fraction(0), Fraction(1))
        lL = _solve_absorbing(grid, 1 - pi, kappa, Fraction(0), Fraction(1))
    return ExitProbabilities(grid, kappa, hH, hL, lH, lL)


def pi_mixed(ep: ExitProbabilities, p, q) -> Fraction:
    """Probability of exiting at the top for someone with belief ``p`` when the
    public belief sits at grid point ``q``."""
    return ep.top(p, ep.grid.index(q))


def cheat_gaps(ep: ExitProbabilities) -> dict:
    """Per interior k: (gain in top-exit probability from holding a true H
    rather than fabricating it, same for L towards the bottom)."""
    pts = ep.grid.points
    out = {}
    for k in ep.grid.interior:
        up = ep.top(pts[k + 1], k + 1) - ep.top(pts[k], k + 1)
        down = ep.top(pts[k], k - 1) - ep.top(pts[k - 1], k - 1)
        out[k] = (up, down)
    return out

