"""Independent reference computations used to freeze expected values.

Nothing here imports the package's internals beyond plain data types; each
function recomputes a quantity from first principles by enumeration or
closed form.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction


def gamblers_ruin(pi, k: int, n_plus_1: int) -> Fraction:
    """Pr(hit n_plus_1 before 0 | start k), up-probability pi: (1-r^k)/(1-r^{N+1})."""
    pi = Fraction(pi)
    r = (1 - pi) / pi
    if r == 1:
        return Fraction(k, n_plus_1)
    return (1 - r**k) / (1 - r**n_plus_1)


def odds_posterior(p0, n_h: int, n_l: int, pi) -> Fraction:
    """Posterior by multiplying likelihoods directly."""
    p0, pi = Fraction(p0), Fraction(pi)
    like_h = pi**n_h * (1 - pi) ** n_l
    like_l = (1 - pi) ** n_h * pi**n_l
    return p0 * like_h / (p0 * like_h + (1 - p0) * like_l)


def brute_remaining_update(remaining: dict, gamma, shirk: dict, found: dict, empty: dict, lam, message):
    """Posterior pmf of the remaining count after one round, by enumerating
    (remaining count, work or shirk, discovery) and the report drawn.

    Returns None when the message has probability zero.
    """
    gamma, lam = Fraction(gamma), Fraction(lam)
    post: dict = {}
    for r, p in remaining.items():
        branches = [((1 - gamma) * shirk.get(message, 0), r)]
        if r >= 1:
            branches.append((gamma * lam * found.get(message, 0), r - 1))
            branches.append((gamma * (1 - lam) * empty.get(message, 0), r))
        else:
            branches.append((gamma * empty.get(message, 0), r))
        for w, r2 in branches:
            if w:
                post[r2] = post.get(r2, Fraction(0)) + p * w
    total = sum(post.values(), Fraction(0))
    if total == 0:
        return None
    return {r: v / total for r, v in post.items()}


def tail_of(pmf: dict, k: int) -> Fraction:
    return sum((p for r, p in pmf.items() if r >= k), Fraction(0))


def witness_root(m_count: int, fbar, R) -> float:
    """Smaller root of a F^2 - (2a + 2) F + a = 0 with a = 1/(m^2 fbar R)."""
    a = 1.0 / (m_count**2 * float(fbar) * float(R))
    return ((a + 1) - math.sqrt(2 * a + 1)) / a


def uniform_grid_pmfs(kmax: int, denominator: int):
    """Every pmf on {0..kmax} with weights on a 1/denominator lattice."""
    for combo in itertools.product(range(denominator + 1), repeat=kmax + 1):
        if sum(combo) == denominator and combo[-1] > 0:
            yield {k: Fraction(c, denominator) for k, c in enumerate(combo)}


# -- pure-strategy equilibria of two-agent count-only games ----------------

def _pure_strategies(messages):
    return [("shirk", m) for m in messages] + [("work", f, e) for f in messages for e in messages]


def _outcomes(strat, belief: dict, lam: Fraction):
    """(probability, message, remaining after) for one agent's pure strategy."""
    for r, p in belief.items():
        if not p:
            continue
        if strat[0] == "shirk":
            yield p, strat[1], r
        elif r >= 1:
            yield p * lam, strat[1], r - 1
            if lam < 1:
                yield p * (1 - lam), strat[2], r
        else:
            yield p, strat[2], r


def brute_pure_equilibria_t2(messages, prior: dict, lam, c, table1: dict, table2: dict) -> set:
    """All pure (weak PBE) profiles of a two-agent game; off-path beliefs carry the prior.

    A profile is (s1, {m1: s2}) with strategies ("shirk", m) or
    ("work", message if found, message if not found).
    """
    lam, c = Fraction(lam), Fraction(c)
    strats = _pure_strategies(messages)

    def cost(s):
        return c if s[0] == "work" else 0

    out = set()
    for s1 in strats:
        joint: dict = {}
        for p, m, r in _outcomes(s1, prior, lam):
            joint.setdefault(m, {}).setdefault(r, Fraction(0))
            joint[m][r] += p
        beliefs = {}
        for m1 in messages:
            mass = sum(joint.get(m1, {}).values(), Fraction(0))
            beliefs[m1] = {r: v / mass for r, v in joint[m1].items()} if mass else dict(prior)

        def pay2(s, m1):
            return sum(p * table2[(m1, m)] for p, m, _ in _outcomes(s, beliefs[m1], lam)) - cost(s)

        brs = []
        for m1 in messages:
            vals = {s: pay2(s, m1) for s in strats}
            top = max(vals.values())
            brs.append([s for s, v in vals.items() if v == top])
        for combo in itertools.product(*brs):
            s2 = dict(zip(messages, combo))

            def pay1(d):
                total = Fraction(0)
                for p, m1, r in _outcomes(d, prior, lam):
                    total += p * sum(q * table1[(m1, m2)] for q, m2, _ in _outcomes(s2[m1], {r: Fraction(1)}, lam))
                return total - cost(d)

            best = max(pay1(d) for d in strats)
            if pay1(s1) == best:
                out.add((s1, tuple(sorted(s2.items()))))
    return out


def certificate_as_pure(profile: dict):
    """Map an oracle profile (history -> RoundStrategy) onto the brute-force form."""

    def one(s):
        if s.gamma == 0:
            (m,) = [m for m, p in s.shirk_report.items() if p == 1]
            return ("shirk", m)
        (f,) = [m for m, p in s.found_report.items() if p == 1]
        (e,) = [m for m, p in s.empty_report.items() if p == 1]
        return ("work", f, e)

    s1 = one(profile[()])
    s2 = tuple(sorted((h[0], one(s)) for h, s in profile.items() if len(h) == 1))
    return (s1, s2)
