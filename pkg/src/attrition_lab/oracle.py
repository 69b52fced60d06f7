"""Exact analysis of short finite games by enumeration.

A finite game has T agents moving in order, each seeing all earlier
messages. Compensation tables map full message profiles to payments and
never depend on the state, so the content of a found signal cannot matter
to anyone's payoff; best responses are therefore computed on the count of
remaining signals alone. Beliefs are distributions over that count.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from ._rational import as_fraction, fmt
from ._streams import stream
from .beliefs import RoundStrategy
from .supply import PMF, SignalModel, SupplySpec


class TractabilityError(ValueError):
    """The requested enumeration is larger than the guard allows."""


@dataclass(frozen=True, eq=False)
class FiniteGame:
    """T agents, message set M, explicit supply, one payment table per agent.

    ``tables[i]`` maps every message profile (a T-tuple) to agent i+1's
    payment, which must lie in [-P, R].
    """

    T: int
    messages: tuple
    supply: SupplySpec
    lam: Fraction
    tables: tuple
    c: Fraction
    R: Fraction
    P: Fraction
    signal_model: Optional[SignalModel] = None

    def __post_init__(self):
        object.__setattr__(self, "lam", as_fraction(self.lam))
        object.__setattr__(self, "c", as_fraction(self.c))
        object.__setattr__(self, "R", as_fraction(self.R))
        object.__setattr__(self, "P", as_fraction(self.P))
        object.__setattr__(self, "messages", tuple(self.messages))
        if self.T < 1:
            raise ValueError("need at least one agent")
        if not 1 <= len(self.messages) <= 4 or len(set(self.messages)) != len(self.messages):
            raise ValueError("message space must have 1 to 4 distinct messages")
        if self.supply.kind != PMF or self.supply.kmax > 4:
            raise ValueError("finite games need an explicit supply pmf with Kmax <= 4")
        if not 0 < self.lam <= 1:
            raise ValueError(f"lam={self.lam} outside (0, 1]")
        if self.c < 0:
            raise ValueError("negative effort cost")
        if len(self.tables) != self.T:
            raise ValueError("need one table per agent")
        tables = []
        for i, tab in enumerate(self.tables):
            tab = {tuple(k): as_fraction(v) for k, v in dict(tab).items()}
            for prof in self.profiles():
                if prof not in tab:
                    raise ValueError(f"table {i + 1} misses profile {prof}")
                if not -self.P <= tab[prof] <= self.R:
                    raise ValueError(f"table {i + 1} value {tab[prof]} at {prof} outside [-P, R]")
            tables.append(tab)
        object.__setattr__(self, "tables", tuple(tables))

    @property
    def kmax(self) -> int:
        return self.supply.kmax

    @property
    def prior(self) -> tuple:
        return tuple(self.supply.prob(r) for r in range(self.kmax + 1))

    def profiles(self):
        return itertools.product(self.messages, repeat=self.T)

    def histories(self, agent: int) -> list:
        """All public histories agent ``agent`` (1-based) can face."""
        return list(itertools.product(self.messages, repeat=agent - 1))

    def all_histories(self) -> list:
        return [h for i in range(1, self.T + 1) for h in self.histories(i)]

    def with_tables(self, tables) -> "FiniteGame":
        return FiniteGame(self.T, self.messages, self.supply, self.lam, tables, self.c, self.R, self.P,
                          self.signal_model)


# -- tables ----------------------------------------------------------------

def corner_tables(game_shape: "FiniteGame") -> list:
    """Every table with values in {-P, R}, shared by all agents."""
    profs = list(game_shape.profiles())
    out = []
    for bits in itertools.product((0, 1), repeat=len(profs)):
        tab = {p: (game_shape.R if b else -game_shape.P) for p, b in zip(profs, bits)}
        out.append(tuple(tab for _ in range(game_shape.T)))
    return out


def random_tables(game_shape: "FiniteGame", n: int, seed, denominator: int = 4) -> list:
    """``n`` independent table sets with values on a 1/denominator lattice in [-P, R]."""
    rng = stream(seed)
    lo = int(-game_shape.P * denominator)
    hi = int(game_shape.R * denominator)
    profs = list(game_shape.profiles())
    out = []
    for _ in range(n):
        tabs = []
        for _ in range(game_shape.T):
            vals = rng.integers(lo, hi, endpoint=True, size=len(profs))
            tabs.append({p: Fraction(int(v), denominator) for p, v in zip(profs, vals)})
        out.append(tuple(tabs))
    return out


def blood_test_game(tables=None, R=10, P=10, c=1) -> FiniteGame:
    """Two sequential testers, exactly two disposable samples, certain discovery."""
    flat = {p: Fraction(0) for p in itertools.product(("H", "L"), repeat=2)}
    tables = tables if tables is not None else (flat, flat)
    return FiniteGame(2, ("H", "L"), SupplySpec.pmf({2: 1}), Fraction(1), tables, c, R, P)


# -- beliefs over the remaining count --------------------------------------

def _split(strat: RoundStrategy, belief: tuple, lam: Fraction) -> dict:
    """message -> unnormalised joint over the remaining count after the round."""
    K = len(belief) - 1
    out: dict = {}
    g = strat.gamma
    found = strat.found_marginal() if g > 0 else {}
    for r, w in enumerate(belief):
        if w == 0:
            continue
        for m, p in strat.shirk_report.items():
            if p and g < 1:
                out.setdefault(m, [Fraction(0)] * (K + 1))[r] += w * (1 - g) * p
        if g == 0:
            continue
        miss = (1 - lam) if r > 0 else Fraction(1)
        for m, p in strat.empty_report.items():
            if p and miss:
                out.setdefault(m, [Fraction(0)] * (K + 1))[r] += w * g * miss * p
        if r > 0:
            for m, p in found.items():
                if p:
                    out.setdefault(m, [Fraction(0)] * (K + 1))[r - 1] += w * g * lam * p
    return out


def _normalise(v) -> Optional[tuple]:
    s = sum(v)
    if s == 0:
        return None
    return tuple(x / s for x in v)


def belief_family(game: FiniteGame) -> tuple:
    """Names of the off-path belief rules searched by default."""
    return ("prior",) + tuple(f"atom:{r}" for r in range(game.kmax + 1)) + ("worst",)


class _BeliefCache:
    """Interned beliefs and memoised one-round updates.

    Each distinct belief is stored once, so callers can key further caches
    on object identity instead of hashing tuples of Fractions.
    """

    def __init__(self, prior: tuple, lam: Fraction):
        self.lam = lam
        self._canon: dict = {}
        self._step: dict = {}
        self.prior = self.intern(tuple(prior))
        K = len(prior) - 1
        self.atoms = tuple(self.intern(tuple(Fraction(int(j == r)) for j in range(K + 1))) for r in range(K + 1))

    def intern(self, b: tuple) -> tuple:
        return self._canon.setdefault(b, b)

    def step(self, strat: RoundStrategy, b: tuple) -> dict:
        """message -> (posterior or None, probability of the message)."""
        key = (id(strat), id(b))
        hit = self._step.get(key)
        if hit is None:
            out = {}
            for m, joint in _split(strat, b, self.lam).items():
                post = _normalise(joint)
                out[m] = (None if post is None else self.intern(post), sum(joint))
            # keep strat and b alive so their ids stay unique
            hit = self._step[key] = (strat, b, out)
        return hit[2]

    def off_path(self, rule: str, parent: tuple) -> tuple:
        if rule == "prior":
            return (parent,)
        if rule.startswith("atom:"):
            return (self.atoms[int(rule[5:])],)
        if rule == "worst":
            # per-history union of the other rules: whatever belief hurts the deviator most
            return _unique((parent,) + self.atoms)
        raise ValueError(f"unknown off-path rule {rule!r}")


@functools.lru_cache(maxsize=16)
def _shared_belief_cache(prior: tuple, lam: Fraction) -> _BeliefCache:
    """Belief updates depend on the supply and lam only, not on the tables."""
    return _BeliefCache(prior, lam)


def _unique(beliefs) -> tuple:
    return tuple({id(b): b for b in beliefs}.values())


@dataclass
class _HistoryInfo:
    reach: Fraction
    beliefs: tuple  # candidate beliefs (one unless off path under the "worst" rule)


def history_beliefs(game: FiniteGame, profile: dict, rule: str = "prior", upto: Optional[int] = None,
                    _cache: Optional[_BeliefCache] = None) -> dict:
    """Reach probability and belief(s) at each history, top down.

    Bayes' rule wherever the history has positive probability given the
    parent belief; the off-path ``rule`` elsewhere.
    """
    cache = _BeliefCache(game.prior, game.lam) if _cache is None else _cache
    upto = game.T if upto is None else upto
    info = {(): _HistoryInfo(Fraction(1), (cache.prior,))}
    frontier = [()]
    for _ in range(1, upto):
        nxt = []
        for h in frontier:
            hi = info[h]
            strat = profile[h]
            steps = [cache.step(strat, b) for b in hi.beliefs]
            for m in game.messages:
                child = h + (m,)
                cands = []
                for b, st in zip(hi.beliefs, steps):
                    post = st[m][0] if m in st else None
                    if post is None:
                        cands.extend(cache.off_path(rule, b))
                    else:
                        cands.append(post)
                reach = Fraction(0)
                if hi.reach > 0 and m in steps[0]:
                    reach = hi.reach * steps[0][m][1]
                info[child] = _HistoryInfo(reach, _unique(cands))
                nxt.append(child)
        frontier = nxt
    return info


# -- continuation values ---------------------------------------------------

def continuation_values(game: FiniteGame, profile: dict, agent: int, h: tuple, messages=None) -> dict:
    """W(m, r): agent's expected payment after history h+(m,) with r signals left.

    ``messages`` restricts the first message (and so the part of ``profile`` needed).
    """
    table = game.tables[agent - 1]
    memo: dict = {}

    def W(hist, r):
        key = (hist, r)
        if key in memo:
            return memo[key]
        if len(hist) == game.T:
            val = table[hist]
        else:
            strat = profile[hist]
            belief = tuple(Fraction(int(j == r)) for j in range(game.kmax + 1))
            val = Fraction(0)
            for m, joint in _split(strat, belief, game.lam).items():
                for r2, w in enumerate(joint):
                    if w:
                        val += w * W(hist + (m,), r2)
        memo[key] = val
        return val

    ms = game.messages if messages is None else messages
    return {(m, r): W(h + (m,), r) for m in ms for r in range(game.kmax + 1)}


@dataclass(frozen=True)
class ActionValues:
    """Unnormalised values of the pure choices at one history and belief.

    ``work_best`` already nets out the cost c.
    """

    shirk: dict
    found: dict
    empty: dict
    found_mass: Fraction
    empty_mass: Fraction
    c: Fraction

    @functools.cached_property
    def shirk_best(self) -> Fraction:
        return max(self.shirk.values())

    @functools.cached_property
    def work_best(self) -> Fraction:
        return max(self.found.values()) + max(self.empty.values()) - self.c

    @functools.cached_property
    def best(self) -> Fraction:
        return max(self.shirk_best, self.work_best)

    def argmax(self, which: str) -> tuple:
        d = getattr(self, which)
        top = max(d.values())
        return tuple(m for m in d if d[m] == top)

    def value_of(self, strat: RoundStrategy) -> Fraction:
        g = strat.gamma
        v = Fraction(0)
        if g < 1:
            v += (1 - g) * sum(p * self.shirk[m] for m, p in strat.shirk_report.items())
        if g > 0:
            work = sum(p * self.found[m] for m, p in strat.found_marginal().items())
            work += sum(p * self.empty[m] for m, p in strat.empty_report.items())
            v += g * (work - self.c)
        return v


def action_values(game: FiniteGame, W: dict, belief: tuple) -> ActionValues:
    lam = game.lam
    shirk, found, empty = {}, {}, {}
    for m in game.messages:
        shirk[m] = sum(b * W[(m, r)] for r, b in enumerate(belief))
        found[m] = sum(b * lam * W[(m, r - 1)] for r, b in enumerate(belief) if r > 0)
        empty[m] = belief[0] * W[(m, 0)] + sum(b * (1 - lam) * W[(m, r)] for r, b in enumerate(belief) if r > 0)
    fmass = lam * (1 - belief[0])
    return ActionValues(shirk, found, empty, fmass, 1 - fmass, game.c)


def deviation_gain(values: ActionValues, strat: RoundStrategy) -> Fraction:
    """Best pure payoff minus the payoff of ``strat`` (zero for a best response)."""
    return values.best - values.value_of(strat)


# -- expected payoffs ------------------------------------------------------

def _content_mode(profile: dict) -> bool:
    return any(s.content_mode for s in profile.values())


def expected_payoff(game: FiniteGame, profile: dict, agent: int) -> Fraction:
    """Exact E[V_agent(m) - c * 1{agent works}] under ``profile``.

    Profiles map every history to a RoundStrategy. Content-mode strategies
    (reports depending on the signal found) need ``game.signal_model``; the
    state and each discovered signal are then enumerated too.
    """
    missing = [h for h in game.all_histories() if h not in profile]
    if missing:
        raise ValueError(f"profile is missing histories {missing[:3]}")
    table = game.tables[agent - 1]
    lam = game.lam
    content = _content_mode(profile)
    if content and game.signal_model is None:
        raise ValueError("content-mode profile needs a signal model")
    if content:
        sm = game.signal_model
        states = ((("H"), sm.p0), (("L"), 1 - sm.p0))
    else:
        states = ((None, Fraction(1)),)
    pi = game.signal_model.pi if content else None

    def go(h, r, omega):
        if len(h) == game.T:
            return table[h]
        s = profile[h]
        own = len(h) + 1 == agent
        g = s.gamma
        v = Fraction(0)
        if g < 1:
            for m, p in s.shirk_report.items():
                v += (1 - g) * p * go(h + (m,), r, omega)
        if g > 0:
            miss = (1 - lam) if r > 0 else Fraction(1)
            if miss:
                for m, p in s.empty_report.items():
                    v += g * miss * p * go(h + (m,), r, omega)
            if r > 0:
                if s.content_mode:
                    for sig, dist in s.found_report.items():
                        ps = pi if sig == omega else 1 - pi
                        for m, p in dist.items():
                            v += g * lam * ps * p * go(h + (m,), r - 1, omega)
                else:
                    for m, p in s.found_report.items():
                        v += g * lam * p * go(h + (m,), r - 1, omega)
            if own:
                v -= g * game.c
        return v

    total = Fraction(0)
    for omega, w in states:
        for r, pr in enumerate(game.prior):
            if pr and w:
                total += w * pr * go((), r, omega)
    return total


# -- profiles and grids ----------------------------------------------------

def _dists(support: tuple, messages: tuple, step: Fraction) -> list:
    """All distributions on ``support`` whose weights are multiples of ``step``."""
    n = int(1 / step)
    out = []
    for combo in itertools.product(range(n + 1), repeat=len(support)):
        if sum(combo) == n:
            out.append({m: Fraction(k, n) for m, k in zip(support, combo) if k})
    return out


def _gammas(step: Fraction) -> list:
    n = int(1 / step)
    return [Fraction(k, n) for k in range(n + 1)]


@functools.lru_cache(maxsize=16)
def grid_strategies(messages: tuple, step: Fraction) -> list:
    """Every count-only strategy on the probability grid, in canonical form.

    Cached: the same objects come back for the same arguments.
    """
    return _strategies(messages, step, _gammas(step), messages, messages, messages)


def _strategies(messages, step, gammas, shirk_sup, found_sup, empty_sup) -> list:
    out = []
    for g in gammas:
        shirks = _dists(shirk_sup, messages, step) if g < 1 else [None]
        works = list(itertools.product(_dists(found_sup, messages, step), _dists(empty_sup, messages, step))) \
            if g > 0 else [(None, None)]
        for sd in shirks:
            for fd, ed in works:
                out.append(RoundStrategy(g, sd, fd, ed))
    return out


def best_response_strategies(values: ActionValues, messages: tuple, step: Fraction) -> list:
    """Grid strategies that are exact best responses to ``values``."""
    best = values.best
    shirk_ok = values.shirk_best == best
    work_ok = values.work_best == best
    gammas = [g for g in _gammas(step) if (g == 0 or work_ok) and (g == 1 or shirk_ok)]
    found_sup = values.argmax("found") if values.found_mass else messages
    empty_sup = values.argmax("empty") if values.empty_mass else messages
    return _strategies(messages, step, gammas, values.argmax("shirk"), found_sup, empty_sup)


def strategy_key(s: RoundStrategy) -> tuple:
    def d(x):
        return tuple((str(m), fmt(p)) for m, p in sorted((x or {}).items(), key=lambda t: str(t[0])))

    return (fmt(s.gamma), d(s.shirk_report), d(s.found_marginal() if s.gamma > 0 else None), d(s.empty_report))


def profile_key(profile: dict) -> tuple:
    return tuple((h, strategy_key(profile[h])) for h in sorted(profile, key=lambda h: (len(h), h)))


def all_shirk(game: FiniteGame, message) -> dict:
    s = RoundStrategy.shirk(message)
    return {h: s for h in game.all_histories()}


# -- certificates ----------------------------------------------------------

@dataclass
class EquilibriumCertificate:
    profile: dict
    epsilon: Fraction
    informative: bool
    beliefs: tuple  # off-path rules under which the profile is an equilibrium
    on_path: tuple

    def to_dict(self) -> dict:
        return {
            "profile": {"".join(map(str, h)) or "-": _strategy_dict(s) for h, s in
                        sorted(self.profile.items(), key=lambda t: (len(t[0]), t[0]))},
            "epsilon": fmt(self.epsilon),
            "informative": self.informative,
            "beliefs": list(self.beliefs),
            "on_path": ["".join(map(str, h)) or "-" for h in self.on_path],
        }


def _strategy_dict(s: RoundStrategy) -> dict:
    out = {"gamma": fmt(s.gamma)}
    if s.gamma < 1:
        out["shirk"] = {str(m): fmt(p) for m, p in sorted(s.shirk_report.items(), key=lambda t: str(t[0]))}
    if s.gamma > 0:
        out["found"] = {str(m): fmt(p) for m, p in sorted(s.found_marginal().items(), key=lambda t: str(t[0]))}
        out["empty"] = {str(m): fmt(p) for m, p in sorted(s.empty_report.items(), key=lambda t: str(t[0]))}
    return out


def max_deviation_gain(game: FiniteGame, profile: dict, rule: str = "prior") -> tuple:
    """Largest one-shot gain over all agents and histories.

    At histories with several candidate beliefs the most favourable
    candidate for the profile is used. Returns (gain, info).
    """
    info = history_beliefs(game, profile, rule)
    worst = Fraction(0)
    for h in game.all_histories():
        W = continuation_values(game, profile, len(h) + 1, h)
        gains = [deviation_gain(action_values(game, W, b), profile[h]) for b in info[h].beliefs]
        worst = max(worst, min(gains))
    return worst, info


def _is_br(values: ActionValues, s: RoundStrategy) -> bool:
    return values.value_of(s) == values.best


def enumerate_equilibria(game: FiniteGame, step="1/4", family=None, *, max_profiles: int = 1_000_000) -> list:
    """All grid profiles that are exact equilibria under some off-path rule.

    The search runs backwards over subtrees: the continuation after each
    message is a subgame whose equilibria depend only on the belief there,
    so they are solved once per (history, belief) and combined. The last
    agent's strategies are generated directly as grid best responses;
    earlier agents try every grid strategy. Each surviving profile is
    rechecked against every pure deviation. Certificates are sorted by
    profile. ``max_profiles`` caps the early agents' grid and the number of
    candidate combinations examined.
    """
    step = as_fraction(step)
    if game.T > 3 or len(game.messages) > 3:
        raise TractabilityError("enumeration needs T <= 3 and |M| <= 3")
    if step < Fraction(1, 8) or (1 / step).denominator != 1:
        raise TractabilityError("grid step must be 1/n with n <= 8")
    family = belief_family(game) if family is None else tuple(family)
    early = sum(len(game.messages) ** i for i in range(game.T - 1))
    size = len(grid_strategies(game.messages, step)) ** early
    if size > max_profiles:
        raise TractabilityError(f"{size} early-agent profiles exceed the guard {max_profiles}")
    search = _Search(game, step, max_profiles)
    found: dict = {}
    for rule in family:
        for profile in search.solve((), (search.beliefs.prior,), rule):
            key = profile_key(profile)
            if key in found:
                if rule not in found[key][1]:
                    found[key][1].append(rule)
            else:
                found[key] = (profile, [rule])
    certs = []
    for key in sorted(found):
        profile, rules = found[key]
        eps, info = max_deviation_gain(game, profile, rules[0])
        on_path = tuple(h for h in game.all_histories() if info[h].reach > 0)
        informative = any(profile[h].gamma > 0 for h in on_path)
        certs.append(EquilibriumCertificate(profile, eps, informative, tuple(rules), on_path))
    return certs


class _Search:
    """Memoised subgame solver behind :func:`enumerate_equilibria`.

    Caches key on object identity: strategies come from the shared grid or
    from cached best-response lists, beliefs are interned, and every
    subprofile stays referenced by the solution cache.
    """

    def __init__(self, game: FiniteGame, step: Fraction, budget: int):
        self.game = game
        self.step = step
        self.grid = grid_strategies(game.messages, step)
        self.beliefs = _shared_belief_cache(game.prior, game.lam)
        self.budget = budget
        self._solutions: dict = {}
        self._with: dict = {}
        self._branch: dict = {}
        self._values: dict = {}

    def _spend(self, n: int):
        self.budget -= n
        if self.budget < 0:
            raise TractabilityError("candidate profiles exceed the enumeration guard")

    def solve(self, h: tuple, beliefs: tuple, rule: str) -> list:
        return self._solve(h, beliefs, rule)[0]

    def _solve(self, h, beliefs, rule):
        """(equilibria of the subgame at h, whether the off-path rule mattered)."""
        ids = tuple(map(id, beliefs))
        hit = self._solutions.get((h, ids)) or self._solutions.get((h, ids, rule))
        if hit is not None:
            return hit[1]
        game = self.game
        agent = len(h) + 1
        if agent == game.T:
            W = {(m, r): game.tables[agent - 1][h + (m,)] for m in game.messages for r in range(game.kmax + 1)}
            seen, out = set(), []
            for b in beliefs:
                for s in best_response_strategies(action_values(game, W, b), game.messages, self.step):
                    k = strategy_key(s)
                    if k not in seen:
                        seen.add(k)
                        out.append({h: s})
            self._spend(len(out))
            result = (out, False)
        else:
            out, dep = [], False
            for s in self.grid:
                sols, d = self._solve_with(h, beliefs, s, rule)
                out.extend(sols)
                dep |= d
            result = (out, dep)
        # the cache entry keeps the beliefs alive so their ids stay valid
        self._solutions[(h, ids, rule) if result[1] else (h, ids)] = (beliefs, result)
        return result

    def _solve_with(self, h, beliefs, s, rule):
        ids = tuple(map(id, beliefs))
        hit = self._with.get((h, ids, id(s))) or self._with.get((h, ids, id(s), rule))
        if hit is not None:
            return hit[1]
        game = self.game
        agent = len(h) + 1
        steps = [self.beliefs.step(s, b) for b in beliefs]
        children, dep = [], False
        for m in game.messages:
            cands = []
            for st, b in zip(steps, beliefs):
                post = st[m][0] if m in st else None
                if post is None:
                    dep = True
                    cands.extend(self.beliefs.off_path(rule, b))
                else:
                    cands.append(post)
            sols, d = self._solve(h + (m,), _unique(cands), rule)
            dep |= d
            children.append(sols)
        size = 1
        for sols in children:
            size *= len(sols)
        self._spend(size)
        out = []
        for combo in itertools.product(*children):
            if any(_is_br(self._action_values(agent, h, combo, b), s) for b in beliefs):
                profile = {h: s}
                for sub in combo:
                    profile.update(sub)
                out.append(profile)
        self._with[(h, ids, id(s), rule) if dep else (h, ids, id(s))] = ((beliefs, s), (out, dep))
        return out, dep

    def _action_values(self, agent, h, combo, b) -> ActionValues:
        key = (agent, tuple(map(id, combo)), id(b))
        av = self._values.get(key)
        if av is None:
            W = {}
            for m, sub in zip(self.game.messages, combo):
                W.update(self._branch_values(agent, h, m, sub))
            av = self._values[key] = action_values(self.game, W, b)
        return av

    def _branch_values(self, agent, h, m, sub) -> dict:
        key = (agent, id(sub))
        hit = self._branch.get(key)
        if hit is None:
            hit = self._branch[key] = continuation_values(self.game, sub, agent, h, (m,))
        return hit


# -- dominance -------------------------------------------------------------

@dataclass
class DominanceCertificate:
    certified: bool
    margins: dict  # agent -> smallest shirk-minus-work margin found
    reason: str
    details: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"certified": self.certified, "reason": self.reason,
                "margins": {str(a): fmt(m) for a, m in sorted(self.margins.items())}}


def _shirk_continuations(game: FiniteGame, prefix: tuple, limit: int):
    """Pure all-shirk behaviour for agents after ``prefix``: history -> message."""
    hs = [prefix + tail for n in range(0, game.T - len(prefix))
          for tail in itertools.product(game.messages, repeat=n)]
    hs = [h for h in hs if len(h) < game.T]
    count = len(game.messages) ** len(hs)
    if count > limit:
        raise TractabilityError(f"{count} shirking continuations exceed the guard {limit}")
    for choice in itertools.product(game.messages, repeat=len(hs)):
        yield {h: RoundStrategy.shirk(m) for h, m in zip(hs, choice)}


def dominance_scan(game: FiniteGame, *, limit: int = 100_000) -> DominanceCertificate:
    """Backward proof that nobody works.

    For the last agent, and then for each earlier agent given that everyone
    after shirks, the payment after any message is the same whatever is left
    in the supply, so working buys nothing and costs c. Every pure shirking
    continuation is checked (mixed ones are averages of these) under the
    prior-reachable belief and every point-mass belief.
    """
    atoms = [tuple(Fraction(int(j == r)) for j in range(game.kmax + 1)) for r in range(game.kmax + 1)]
    margins: dict = {}
    details = []
    for agent in range(game.T, 0, -1):
        low = None
        for h in game.histories(agent):
            # W(m, .) only depends on behaviour after h+(m,), so each message is
            # paired with its own continuations
            per_message = []
            for m in game.messages:
                options = []
                for cont in _shirk_continuations(game, h + (m,), limit):
                    Wm = continuation_values(game, cont, agent, h, (m,))
                    if len({Wm[(m, r)] for r in range(game.kmax + 1)}) != 1:
                        return DominanceCertificate(False, margins, f"agent {agent} payoff depends on supply at {h}")
                    options.append(Wm[(m, 0)])
                per_message.append(sorted(set(options)))
            for vals in itertools.product(*per_message):
                W = {(m, r): v for m, v in zip(game.messages, vals) for r in range(game.kmax + 1)}
                for b in [game.prior] + atoms:
                    av = action_values(game, W, b)
                    margin = av.shirk_best - av.work_best
                    low = margin if low is None else min(low, margin)
        margins[agent] = low
        details.append((agent, low))
    ok = all(v > 0 for v in margins.values())
    reason = "every work action strictly dominated" if ok else "indifference between working and shirking"
    return DominanceCertificate(ok, margins, reason, details)


# -- bound checks ----------------------------------------------------------

@dataclass
class BoundReport:
    lemma_a2: list  # rows: history, message, lhs, rhs, slack, gamma
    supermartingale: list  # rows: history, k, F^k, E[F^k next]
    prop_a1: list
    holds: bool

    def to_dict(self) -> dict:
        def row(r):
            return {k: (fmt(v) if isinstance(v, Fraction) else ("".join(map(str, v)) or "-") if isinstance(v, tuple) else v)
                    for k, v in r.items()}

        return {"holds": self.holds, "lemma_a2": [row(r) for r in self.lemma_a2],
                "supermartingale": [row(r) for r in self.supermartingale],
                "prop_a1": [row(r) for r in self.prop_a1]}


def _survival_of(belief: tuple, k: int) -> Fraction:
    return sum(belief[k:], Fraction(0))


def bound_checks(game: FiniteGame, profile: dict, equilibrium: bool = False) -> BoundReport:
    """Exact checks on the game tree at every reached history.

    * the bound on working and finding nothing (needs lam < 1), with each
      table shifted to [0, spread] so gross payments are nonnegative;
    * F^k_i >= E[F^k_{i+1}] for every k (equality when nobody works);
    * with ``equilibrium=True``, the beta bound at rounds where
      F^k > C(lam) F^{k+1}.
    """
    info = history_beliefs(game, profile, "prior")
    a2, sm, pa1 = [], [], []
    ok = True
    lam = game.lam
    for h in game.all_histories():
        hi = info[h]
        if hi.reach == 0:
            continue
        b = hi.beliefs[0]
        agent = len(h) + 1
        strat = profile[h]
        f0 = b[0]
        if lam < 1:
            tab = game.tables[agent - 1]
            lo_v, hi_v = min(tab.values()), max(tab.values())
            spread = hi_v - lo_v
            W = continuation_values(game, profile, agent, h)
            Vs = {m: sum(b[r] * (W[(m, r)] - lo_v) for r in range(len(b))) for m in game.messages}
            vstar = max(Vs.values())
            denom = (1 - f0) * (1 - lam) + f0
            after = [b[0] / denom] + [b[r] * (1 - lam) / denom for r in range(1, len(b))]
            for m in game.messages:
                lhs = sum(after[r] * (W[(m, r)] - lo_v) for r in range(len(b)))
                rhs = vstar + f0 * spread / (1 - lam)
                a2.append({"history": h, "message": m, "lhs": lhs, "rhs": rhs, "slack": rhs - lhs,
                           "gamma": strat.gamma})
                ok &= lhs <= rhs
        split = _split(strat, b, lam)
        total = sum(sum(v) for v in split.values())
        for k in range(1, game.kmax + 1):
            now = _survival_of(b, k)
            nxt = sum(_survival_of(tuple(x / total for x in v), k) * (sum(v) / total)
                      for v in split.values() if sum(v))
            sm.append({"history": h, "k": k, "F": now, "E_next": nxt, "gamma": strat.gamma})
            ok &= nxt <= now
            if strat.gamma == 0:
                ok &= nxt == now
        if equilibrium and strat.gamma > 0 and game.c > 0:
            tab = game.tables[agent - 1]
            spread = max(tab.values()) - min(tab.values())
            C = 2 * spread / game.c if lam == 1 else 2 * spread / (game.c * lam * (1 - lam))
            plus = _messages_plus(game, profile, info, h)
            beta = strat.gamma * lam * (1 - f0)
            split = _split(strat, b, lam)
            total = sum(sum(v) for v in split.values())
            for k in range(1, game.kmax + 1):
                fk, fk1 = _survival_of(b, k), _survival_of(b, k + 1)
                if fk > C * fk1:
                    drop = sum((sum(v) / total) * (fk - _survival_of(tuple(x / sum(v) for x in v), k))
                               for m, v in split.items() if sum(v) and m in plus)
                    rhs = C * drop / (fk - C * fk1)
                    pa1.append({"history": h, "k": k, "beta": beta, "rhs": rhs})
                    ok &= beta <= rhs
    return BoundReport(a2, sm, pa1, ok)


def _messages_plus(game, profile, info, h) -> set:
    """Messages after which some later agent works with positive probability."""
    out = set()
    for m in game.messages:
        stack = [h + (m,)]
        while stack:
            x = stack.pop()
            if len(x) >= game.T:
                continue
            if profile[x].gamma > 0:
                out.add(m)
                break
            stack.extend(x + (mm,) for mm in game.messages)
    return out


def translate_tables(game: FiniteGame, shift) -> FiniteGame:
    """Same game with every payment moved by ``shift`` (box widened to fit)."""
    shift = as_fraction(shift)
    tabs = tuple({p: v + shift for p, v in t.items()} for t in game.tables)
    return FiniteGame(game.T, game.messages, game.supply, game.lam, tabs, game.c,
                      game.R + max(shift, Fraction(0)), game.P + max(-shift, Fraction(0)), game.signal_model)


def truncated_design_game(scheme, T: int, supply: SupplySpec, c, signal_model: Optional[SignalModel] = None) -> FiniteGame:
    """Finite game whose tables pay each agent by the designer's rule.

    Exit is read off the public belief after T reports: the top boundary if
    the net count of H over L reaches the top, the bottom if it reaches the
    bottom (first passage), and no exit otherwise.
    """
    grid = scheme.grid
    msgs = scheme.messages
    tabs = []
    for agent in range(1, T + 1):
        tab = {}
        for prof in itertools.product(msgs, repeat=T):
            k = grid.start
            exit_at = None
            where = []
            for m in prof:
                where.append(k)
                if exit_at is not None:
                    continue
                k += {"H": 1, "L": -1}.get(m, 0)
                if k == grid.N + 1:
                    exit_at = "top"
                elif k == 0:
                    exit_at = "bottom"
            if len(where) >= agent and _interior_path(grid, prof[:agent - 1]):
                tab[prof] = scheme.payment(where[agent - 1], prof[agent - 1], exit_at)
            else:
                tab[prof] = Fraction(0)
        tabs.append(tab)
    R = max(max(t.values()) for t in tabs)
    P = -min(min(t.values()) for t in tabs)
    return FiniteGame(T, msgs, supply, scheme.lam, tuple(tabs), c, max(R, Fraction(0)), max(P, Fraction(0)),
                      signal_model)


def _interior_path(grid, prefix) -> bool:
    k = grid.start
    for m in prefix:
        k += {"H": 1, "L": -1}.get(m, 0)
        if k in (0, grid.N + 1):
            return False
    return True
