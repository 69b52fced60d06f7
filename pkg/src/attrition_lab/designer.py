"""Compensation schemes that make truthful work an equilibrium on a belief grid.

An agent reporting at public belief q^k is paid according to his own report
and to where learning ends: reward RH(k) / RL(k) when the exit agrees with
the report, punishment -Q when it contradicts it, and nothing if learning
stops inside the grid or the report is the empty message ``N``. Rewards are
set so that a fabricated report has expected value exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from ._rational import as_fraction
from .grid import BeliefGrid, ExitProbabilities

EMPTY = "N"
CONSISTENT = "consistent"
PAPER = "paper"


class InfeasibleScheme(ValueError):
    """The incentives cannot be met inside the payoff box (or at all)."""

    def __init__(self, message, bound=None, value=None, limit=None):
        super().__init__(message)
        self.bound = bound
        self.value = value
        self.limit = limit


def continuation_kappa(lam, rho) -> Fraction:
    """Per-step probability that learning continues.

    With an unlimited supply a failed search is just bad luck and the next
    agent tries again, so learning never stops. With a geometric supply,
    learning stops at the first agent who reports no evidence.
    """
    lam, rho = as_fraction(lam), as_fraction(rho)
    return Fraction(1) if rho == 1 else lam * rho


@dataclass(frozen=True)
class CompensationScheme:
    grid: BeliefGrid
    ep: ExitProbabilities
    Q: Fraction
    RH: tuple
    RL: tuple
    lam: Fraction = Fraction(1)
    survival_now: Fraction = Fraction(1)  # F^1 faced by the agent at any grid round

    @property
    def find_prob(self) -> Fraction:
        return self.lam * self.survival_now

    @property
    def messages(self) -> tuple:
        return ("H", "L") if self.find_prob == 1 else ("H", "L", EMPTY)

    @property
    def max_reward(self) -> Fraction:
        return max(max(self.RH), max(self.RL))

    def payment(self, k: int, report: str, exit_at: Optional[str]) -> Fraction:
        """Payment to the agent who reported at q^k, given exit 'top', 'bottom' or None."""
        if report == EMPTY or exit_at is None:
            return Fraction(0)
        if report == "H":
            return self.RH[k] if exit_at == "top" else -self.Q
        return self.RL[k] if exit_at == "bottom" else -self.Q

    def rows(self, c=None) -> list:
        out = []
        for k in self.grid.interior:
            row = {"k": k, "q": self.grid.points[k], "RH": self.RH[k], "RL": self.RL[k], "Q": self.Q}
            if c is not None:
                row["margin"] = work_payoff(self, k) - shirk_payoff(self, k) - as_fraction(c)
            out.append(row)
        return out


def design_scheme(grid: BeliefGrid, ep: ExitProbabilities, Q, *, lam=1, survival_now=1) -> CompensationScheme:
    """Rewards that zero out the value of fabricating either report."""
    Q = as_fraction(Q)
    if Q < 0:
        raise ValueError("punishment scale must be nonnegative")
    pts = grid.points
    RH = [Fraction(0)] * len(pts)
    RL = [Fraction(0)] * len(pts)
    for k in grid.interior:
        q = pts[k]
        win, lose = ep.top(q, k + 1), ep.bottom(q, k + 1)
        RH[k] = Q * lose / win if win else Fraction(0)
        win, lose = ep.bottom(q, k - 1), ep.top(q, k - 1)
        RL[k] = Q * lose / win if win else Fraction(0)
    return CompensationScheme(grid, ep, Q, tuple(RH), tuple(RL), as_fraction(lam), as_fraction(survival_now))


def _exit_probs(scheme: CompensationScheme, p: Fraction, j: int, first_step: Optional[Fraction]):
    """(top, bottom) exit probabilities from public q^j for private belief p.

    ``first_step`` overrides the success probability of the first move only.
    """
    ep, grid = scheme.ep, scheme.grid
    if first_step is None or j in (0, grid.N + 1):
        return ep.top(p, j), ep.bottom(p, j)
    pi = grid.pi
    top = first_step * (p * (pi * ep.hH[j + 1] + (1 - pi) * ep.hH[j - 1])
                        + (1 - p) * ((1 - pi) * ep.hL[j + 1] + pi * ep.hL[j - 1]))
    bot = first_step * (p * (pi * ep.lH[j + 1] + (1 - pi) * ep.lH[j - 1])
                        + (1 - p) * ((1 - pi) * ep.lL[j + 1] + pi * ep.lL[j - 1]))
    return top, bot


def report_value(scheme: CompensationScheme, k: int, p, report: str, first_step=None) -> Fraction:
    """Expected payment for sending ``report`` at q^k with private belief ``p``."""
    if report == EMPTY:
        return Fraction(0)
    p = as_fraction(p)
    if report == "H":
        top, bot = _exit_probs(scheme, p, k + 1, first_step)
        return top * scheme.RH[k] - bot * scheme.Q
    top, bot = _exit_probs(scheme, p, k - 1, first_step)
    return bot * scheme.RL[k] - top * scheme.Q


def _after_empty_first_step(scheme: CompensationScheme) -> Optional[Fraction]:
    if scheme.ep.kappa == 1:
        return None
    f1, lam = scheme.survival_now, scheme.lam
    left = f1 * (1 - lam) / ((1 - f1) + f1 * (1 - lam))
    return lam * left


def work_payoff(scheme: CompensationScheme, k: int, reading: str = CONSISTENT) -> Fraction:
    """Expected payment (before the effort cost) of working and reporting truthfully.

    ``reading="paper"`` prices the punishment after a true H with the
    fabricator's exit probability instead of the worker's; it exists only to
    compare against the consistent version and needs kappa = 1.
    """
    grid = scheme.grid
    pts = grid.points
    z = grid.z(k)
    up = report_value(scheme, k, pts[k + 1], "H")
    if reading == PAPER:
        if scheme.ep.kappa != 1:
            raise ValueError("the literal reading is only defined without stopping")
        up = scheme.ep.top(pts[k + 1], k + 1) * scheme.RH[k] - (1 - scheme.ep.top(pts[k], k + 1)) * scheme.Q
    elif reading != CONSISTENT:
        raise ValueError(f"unknown reading {reading!r}")
    down = report_value(scheme, k, pts[k - 1], "L")
    return scheme.find_prob * (z * up + (1 - z) * down)


def shirk_payoff(scheme: CompensationScheme, k: int) -> Fraction:
    """Best expected payment from reporting without working."""
    q = scheme.grid.points[k]
    return max(report_value(scheme, k, q, m) for m in scheme.messages)


@dataclass(frozen=True)
class MinimalQ:
    Q: Fraction
    binding: tuple
    unit_margins: dict
    scheme: CompensationScheme


def minimal_q(grid: BeliefGrid, ep: ExitProbabilities, c, lam=1, rho=1, *, box=None, survival_now=None) -> MinimalQ:
    """Smallest Q making truthful work worth at least ``c`` at every grid point.

    The work-minus-shirk margin is linear in Q with zero intercept, so
    Q* = max_k c / margin_k(Q=1). ``box=(R, P)`` enforces the payoff range.
    """
    c, lam, rho = as_fraction(c), as_fraction(lam), as_fraction(rho)
    if c < 0:
        raise ValueError("negative effort cost")
    if ep.kappa != continuation_kappa(lam, rho):
        raise ValueError(f"exit table kappa={ep.kappa} does not match lam={lam}, rho={rho}")
    survival_now = rho if survival_now is None else as_fraction(survival_now)
    unit = design_scheme(grid, ep, 1, lam=lam, survival_now=survival_now)
    margins = {k: work_payoff(unit, k) - shirk_payoff(unit, k) for k in grid.interior}
    bad = [k for k, m in margins.items() if m <= 0]
    if bad:
        raise InfeasibleScheme(f"no Q gives a positive work margin at k={bad}", "margin", margins[bad[0]], 0)
    needs = {k: c / m for k, m in margins.items()}
    q_star = max(needs.values())
    binding = tuple(k for k, v in needs.items() if v == q_star)
    scheme = design_scheme(grid, ep, q_star, lam=lam, survival_now=survival_now)
    if box is not None:
        R, P = (as_fraction(x) for x in box)
        if q_star > P:
            raise InfeasibleScheme(f"Q*={q_star} exceeds P={P}", "P", q_star, P)
        if scheme.max_reward > R:
            raise InfeasibleScheme(f"reward {scheme.max_reward} exceeds R={R}", "R", scheme.max_reward, R)
    return MinimalQ(q_star, binding, margins, scheme)


def _work_rules(messages, empty_possible: bool) -> list:
    """All maps (H-signal, L-signal, nothing found) -> message."""
    empties = messages if empty_possible else (EMPTY,)
    return [(mh, ml, me) for mh in messages for ml in messages for me in empties]


@dataclass(frozen=True)
class ICReport:
    margins: dict  # k -> {deviation name: truthful payoff minus deviation payoff}
    feasible: bool
    min_margin: Fraction
    binding: tuple
    box_ok: bool = True
    notes: list = field(default_factory=list)


def verify_ic(scheme: CompensationScheme, params, kappa=None) -> ICReport:
    """Exact payoff gaps of every one-round deviation at every interior point.

    ``params`` supplies the cost ``c`` and the payoff box (R, P). A worker who
    finds nothing is assumed to report ``N`` on the truthful path.
    """
    if kappa is not None and as_fraction(kappa) != scheme.ep.kappa:
        raise ValueError("kappa does not match the scheme's exit table")
    c = as_fraction(params.c)
    grid = scheme.grid
    pts = grid.points
    msgs = scheme.messages
    after_empty = _after_empty_first_step(scheme)
    truthful = ("H", "L", EMPTY)
    all_margins = {}
    for k in grid.interior:
        q, z, fp = pts[k], grid.z(k), scheme.find_prob

        def work_value(rule):
            mh, ml, me = rule
            found = z * report_value(scheme, k, pts[k + 1], mh) + (1 - z) * report_value(scheme, k, pts[k - 1], ml)
            empty = report_value(scheme, k, q, me, first_step=after_empty)
            return fp * found + (1 - fp) * empty - c

        base = work_value(truthful)
        devs = {f"shirk+{m}": report_value(scheme, k, q, m) for m in msgs}
        for rule in _work_rules(msgs, fp < 1):
            if rule == truthful:
                continue
            devs["work[H->{},L->{},0->{}]".format(*rule)] = work_value(rule)
        all_margins[k] = {name: base - v for name, v in devs.items()}
    flat = [(m, k) for k, d in all_margins.items() for m in d.values()]
    lowest = min(m for m, _ in flat)
    binding = tuple(sorted({k for m, k in flat if m == lowest}))
    R, P = as_fraction(params.R), as_fraction(params.P)
    box_ok = scheme.max_reward <= R and scheme.Q <= P
    notes = []
    if not box_ok:
        notes.append(f"payments outside box: max reward {scheme.max_reward} vs R={R}, Q={scheme.Q} vs P={P}")
    return ICReport(all_margins, lowest >= 0 and box_ok, lowest, binding, box_ok, notes)
