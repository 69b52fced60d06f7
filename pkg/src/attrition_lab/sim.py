"""Episode simulation under a compensation scheme, with Monte Carlo aggregation."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from ._rational import as_fraction
from ._streams import stream
from .beliefs import OffPathMessage, RoundStrategy, SurvivalBelief, update_survival
from .designer import EMPTY, CompensationScheme
from .supply import SignalModel, SupplySpec, sample_sequence
from .thresholds import GameParams

TOP, BOTTOM, STOPPED, EXHAUSTED, TRUNCATED = "top", "bottom", "stopped", "exhausted", "truncated"


class OffPathDeviation(ValueError):
    """The deviation targets a point the profile never reaches."""


@dataclass(frozen=True)
class Profile:
    """Stationary behaviour of non-deviating agents.

    ``designed``: work at every interior belief and report the signal found
    (``N`` when nothing is found). ``shirk``: never work, always send
    ``message``; the public then learns nothing from reports.
    """

    kind: str = "designed"
    message: str = "H"

    @property
    def informative(self) -> bool:
        return self.kind == "designed"

    @classmethod
    def parse(cls, text: str) -> "Profile":
        if text == "designed":
            return cls("designed")
        if text.startswith("shirk"):
            _, _, m = text.partition(":")
            return cls("shirk", m or "H")
        raise ValueError(f"unknown profile {text!r}")


@dataclass(frozen=True)
class Deviation:
    """One agent's departure from the profile.

    ``kind="shirk"`` sends ``message`` without working; ``kind="work"``
    works and reports by ``rule`` = (after H, after L, after nothing).
    """

    kind: str
    message: str = "H"
    rule: tuple = ("H", "L", EMPTY)

    @classmethod
    def truthful(cls) -> "Deviation":
        return cls("work")

    @classmethod
    def parse(cls, text: str) -> "Deviation":
        kind, _, arg = text.partition("+")
        if kind == "shirk":
            return cls("shirk", arg or "H")
        if kind == "work":
            if not arg or arg == "truthful":
                return cls("work")
            if arg == "misreport":
                return cls("work", rule=("L", "H", EMPTY))
            parts = tuple(arg.split(","))
            if len(parts) != 3:
                raise ValueError(f"work rule needs three messages, got {arg!r}")
            return cls("work", rule=parts)
        raise ValueError(f"unknown deviation {text!r}")

    @property
    def label(self) -> str:
        return f"shirk+{self.message}" if self.kind == "shirk" else "work+" + ",".join(self.rule)


@dataclass(frozen=True)
class SimConfig:
    params: GameParams
    spec: SupplySpec
    model: SignalModel
    scheme: CompensationScheme
    profile: Profile = Profile()
    horizon: int = 10_000

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be positive")
        if self.profile.kind == "shirk" and self.profile.message not in self.scheme.messages + (EMPTY,):
            raise ValueError(f"profile message {self.profile.message!r} not in scheme messages")


@dataclass(frozen=True)
class RoundRecord:
    round: int
    k: int
    belief: Fraction
    worked: bool
    found: Optional[str]
    message: str
    survival_f1: Fraction


@dataclass
class Transcript:
    omega: str
    rounds: list
    terminal: str
    payments: list
    costs: list

    @property
    def utilities(self) -> list:
        return [p - c for p, c in zip(self.payments, self.costs)]

    @property
    def exit_at(self) -> Optional[str]:
        return self.terminal if self.terminal in (TOP, BOTTOM) else None

    def rows(self, episode: int = 0) -> list:
        out = []
        for r, pay, cost in zip(self.rounds, self.payments, self.costs):
            out.append({
                "episode": episode, "round": r.round, "k": r.k, "belief": r.belief,
                "worked": int(r.worked), "found": r.found or "", "message": r.message,
                "survival_f1": r.survival_f1, "payment": pay, "cost": cost,
                "utility": pay - cost, "terminal": self.terminal,
            })
        return out


def replay_payments(scheme: CompensationScheme, transcript: Transcript) -> list:
    """Recompute every agent's payment from (report, exit) alone."""
    return [scheme.payment(r.k, r.message, transcript.exit_at) for r in transcript.rounds]


def _profile_strategy(scheme: CompensationScheme, k: int) -> RoundStrategy:
    """Count-level view of the designed profile at q^k, for survival beliefs."""
    z = scheme.grid.z(k)
    return RoundStrategy(Fraction(1), None, {"H": z, "L": 1 - z}, {EMPTY: Fraction(1)})


class _SurvivalTracker:
    """Interns public survival beliefs so each (belief, k, message) step is solved once."""

    def __init__(self, scheme: CompensationScheme, spec: SupplySpec):
        self.scheme = scheme
        self.states = [SurvivalBelief.from_spec(spec)]
        self.f1 = [self.states[0].at(1)]
        self._ids = {self.states[0]: 0}
        self._step = {}

    def next(self, sid: int, k: int, message: str) -> int:
        key = (sid, k, message)
        out = self._step.get(key)
        if out is None:
            b = self.states[sid]
            try:
                nb = update_survival(b, _profile_strategy(self.scheme, k), message, self.scheme.lam)
            except OffPathMessage:
                nb = b
            out = self._ids.get(nb)
            if out is None:
                out = self._ids[nb] = len(self.states)
                self.states.append(nb)
                self.f1.append(nb.at(1))
            self._step[key] = out
        return out


def _act(scheme, k, seq, state, rng, behaviour):
    """Play one agent; returns (worked, found, message)."""
    kind, arg = behaviour
    if kind == "shirk":
        return False, None, arg
    found = None
    remaining = None if seq.count is None else seq.count - state["discovered"]
    if (remaining is None or remaining > 0) and rng.random() < float(scheme.lam):
        found = seq[state["discovered"]]
        state["discovered"] += 1
    if kind == "designed":
        return True, found, found or EMPTY
    mh, ml, me = arg
    return True, found, {"H": mh, "L": ml, None: me}[found]


def _play(config: SimConfig, rng, start_k: int, omega_seq, deviation: Optional[Deviation], deviator_round: int,
          tracker: Optional[_SurvivalTracker] = None):
    scheme = config.scheme
    if tracker is None:
        tracker = _SurvivalTracker(scheme, config.spec)
    grid = scheme.grid
    top = grid.N + 1
    seq = omega_seq
    state = {"discovered": 0}
    k = start_k
    sid = 0
    rounds, terminal = [], TRUNCATED
    stop_on_empty = scheme.ep.kappa < 1
    for i in range(1, config.horizon + 1):
        if i == deviator_round and deviation is not None:
            beh = ("shirk", deviation.message) if deviation.kind == "shirk" else ("rule", deviation.rule)
        elif config.profile.kind == "shirk":
            beh = ("shirk", config.profile.message)
        else:
            beh = ("designed", None)
        worked, found, msg = _act(scheme, k, seq, state, rng, beh)
        rounds.append(RoundRecord(i, k, grid.points[k], worked, found, msg, tracker.f1[sid]))
        if not config.profile.informative:
            continue
        sid = tracker.next(sid, k, msg)
        if msg == "H":
            k += 1
        elif msg == "L":
            k -= 1
        elif stop_on_empty:
            terminal = STOPPED
            break
        elif seq.count is not None and state["discovered"] >= seq.count:
            # nothing left to find and learning never stops: frozen forever
            terminal = EXHAUSTED
            break
        if k == top:
            terminal = TOP
            break
        if k == 0:
            terminal = BOTTOM
            break
    exit_at = terminal if terminal in (TOP, BOTTOM) else None
    c = config.params.c
    payments = [scheme.payment(r.k, r.message, exit_at) for r in rounds]
    costs = [c if r.worked else Fraction(0) for r in rounds]
    return Transcript(seq.omega, rounds, terminal, payments, costs)


def run_episode(config: SimConfig, seed, _tracker: Optional[_SurvivalTracker] = None) -> Transcript:
    """Play one episode from the prior grid point.

    The configured horizon caps the number of rounds; hitting it yields
    the ``truncated`` terminal rather than a silent stop.
    """
    rng = stream(seed)
    seq = sample_sequence(config.spec, config.model, rng)
    return _play(config, rng, config.scheme.grid.start, seq, None, 0, _tracker)


def _mean_se(total: Fraction, total_sq: Fraction, n: int):
    if n == 0:
        return None, None
    mean = total / n
    if n < 2:
        return float(mean), None
    var = (total_sq - n * mean * mean) / (n - 1)
    return float(mean), math.sqrt(max(float(var), 0.0) / n)


class _Moments:
    """Exact first and second moments from a histogram of rational values."""

    def __init__(self):
        self.counts = Counter()

    def add(self, value, times: int = 1):
        # (numerator, denominator) keys hash much faster than Fractions
        self.counts[(value.numerator, value.denominator)] += times

    def merge(self, other: "_Moments"):
        self.counts.update(other.counts)

    @property
    def n(self) -> int:
        return sum(self.counts.values())

    def summary(self):
        n = self.n
        total = sum((Fraction(*v) * c for v, c in self.counts.items()), Fraction(0))
        total_sq = sum((Fraction(*v) ** 2 * c for v, c in self.counts.items()), Fraction(0))
        return _mean_se(total, total_sq, n)


@dataclass
class EpisodeStats:
    n: int
    exit_top: Optional[float] = None
    exit_top_se: Optional[float] = None
    mean_rounds: Optional[float] = None
    mean_rounds_se: Optional[float] = None
    first_agent_payoff: Optional[float] = None
    first_agent_payoff_se: Optional[float] = None
    worker_payoff: Optional[float] = None
    worker_payoff_se: Optional[float] = None
    fabrication_payoff: Optional[float] = None
    fabrication_payoff_se: Optional[float] = None
    terminals: dict = field(default_factory=dict)
    drift: dict = field(default_factory=dict)  # k -> (mean, se, count)
    payoff_by_k: dict = field(default_factory=dict)  # k -> (mean, se, count)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "exit_top": self.exit_top, "exit_top_se": self.exit_top_se,
            "mean_rounds": self.mean_rounds, "mean_rounds_se": self.mean_rounds_se,
            "first_agent_payoff": self.first_agent_payoff, "first_agent_payoff_se": self.first_agent_payoff_se,
            "worker_payoff": self.worker_payoff, "worker_payoff_se": self.worker_payoff_se,
            "fabrication_payoff": self.fabrication_payoff, "fabrication_payoff_se": self.fabrication_payoff_se,
            "terminals": dict(sorted(self.terminals.items())),
            "drift": {str(k): list(v) for k, v in sorted(self.drift.items())},
            "payoff_by_k": {str(k): list(v) for k, v in sorted(self.payoff_by_k.items())},
        }


class _Accumulator:
    def __init__(self):
        self.top = _Moments()
        self.rounds = _Moments()
        self.first = _Moments()
        self.worker = _Moments()
        self.fab = _Moments()
        self.terminals = Counter()
        self.drift = {}
        self.by_k = {}

    def add_transcript(self, t: Transcript, points):
        self.top.add(1 if t.terminal == TOP else 0)
        self.rounds.add(len(t.rounds))
        self.terminals[t.terminal] += 1
        utils = t.utilities
        if utils:
            self.first.add(utils[0])
        for r, u in zip(t.rounds, utils):
            if r.worked:
                self.worker.add(u)
            self.by_k.setdefault(r.k, _Moments()).add(u)
        ks = [r.k for r in t.rounds]
        final_k = None
        if t.terminal == TOP:
            final_k = len(points) - 1
        elif t.terminal == BOTTOM:
            final_k = 0
        nxt = ks[1:] + ([final_k] if final_k is not None else [])
        for a, b in zip(ks, nxt):
            self.drift.setdefault(a, _Moments()).add(points[b] - points[a])

    def merge(self, other: "_Accumulator"):
        for name in ("top", "rounds", "first", "worker", "fab"):
            getattr(self, name).merge(getattr(other, name))
        self.terminals.update(other.terminals)
        for d_self, d_other in ((self.drift, other.drift), (self.by_k, other.by_k)):
            for k, m in d_other.items():
                d_self.setdefault(k, _Moments()).merge(m)

    def stats(self, n: int) -> EpisodeStats:
        s = EpisodeStats(n)
        s.exit_top, s.exit_top_se = self.top.summary()
        s.mean_rounds, s.mean_rounds_se = self.rounds.summary()
        s.first_agent_payoff, s.first_agent_payoff_se = self.first.summary()
        s.worker_payoff, s.worker_payoff_se = self.worker.summary()
        s.fabrication_payoff, s.fabrication_payoff_se = self.fab.summary()
        s.terminals = dict(self.terminals)
        s.drift = {k: (*m.summary(), m.n) for k, m in sorted(self.drift.items())}
        s.payoff_by_k = {k: (*m.summary(), m.n) for k, m in sorted(self.by_k.items())}
        return s


def _chunk(config: SimConfig, base_seed: int, lo: int, hi: int, fabrication: Optional[str]) -> _Accumulator:
    acc = _Accumulator()
    points = config.scheme.grid.points
    fab = Deviation("shirk", fabrication) if fabrication else None
    tracker = _SurvivalTracker(config.scheme, config.spec)
    for idx in range(lo, hi):
        acc.add_transcript(run_episode(config, (base_seed, 0, idx), tracker), points)
        if fab is not None:
            rng = stream((base_seed, 1, idx))
            seq = sample_sequence(config.spec, config.model, rng)
            t = _play(config, rng, config.scheme.grid.start, seq, fab, 1, tracker)
            acc.fab.add(t.utilities[0])
    return acc


def monte_carlo(config: SimConfig, n: int, seed: int = 0, *, fabrication: Optional[str] = None, jobs: int = 1) -> EpisodeStats:
    """Aggregate ``n`` episodes; episode i always uses stream (seed, 0, i).

    Moments are accumulated as exact histograms, so the result does not
    depend on ``jobs`` or on the order in which chunks finish. When
    ``fabrication`` names a message, a paired batch estimates the payoff of
    a first-round agent who shirks and sends it.
    """
    if n < 1:
        raise ValueError("need at least one episode")
    if jobs <= 1:
        acc = _chunk(config, seed, 0, n, fabrication)
    else:
        from concurrent.futures import ProcessPoolExecutor

        step = -(-n // jobs)
        bounds = [(lo, min(lo + step, n)) for lo in range(0, n, step)]
        acc = _Accumulator()
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_chunk, *zip(*[(config, seed, lo, hi, fabrication) for lo, hi in bounds])))
        for part in parts:
            acc.merge(part)
    return acc.stats(n)


def _round_reach_probability(config: SimConfig, r: int) -> Fraction:
    """Exact probability that round ``r`` is played at an interior belief."""
    scheme = config.scheme
    grid = scheme.grid
    if not config.profile.informative:
        return Fraction(1) if r <= config.horizon else Fraction(0)
    p0 = grid.points[grid.start]
    total = Fraction(0)
    for omega_p, pH in ((p0, scheme.grid.pi), (1 - p0, 1 - scheme.grid.pi)):
        dist = {grid.start: Fraction(1)}
        fp = scheme.find_prob
        for _ in range(r - 1):
            nxt: dict = {}
            for k, p in dist.items():
                for dk, w in ((1, fp * pH), (-1, fp * (1 - pH))):
                    j = k + dk
                    if 1 <= j <= grid.N:
                        nxt[j] = nxt.get(j, Fraction(0)) + p * w
                if fp < 1 and scheme.ep.kappa == 1:
                    nxt[k] = nxt.get(k, Fraction(0)) + p * (1 - fp)
            dist = nxt
        total += omega_p * sum(dist.values(), Fraction(0))
    return total if r <= config.horizon else Fraction(0)


@dataclass(frozen=True)
class DeviationEstimate:
    deviation: str
    mean: float
    se: Optional[float]
    n: int


def deviation_episode(config: SimConfig, deviation: Deviation, n: int, seed: int = 0, *,
                      at_index: Optional[int] = None, round: Optional[int] = None) -> DeviationEstimate:
    """Monte Carlo payoff of one deviating agent, everyone else on profile.

    ``at_index=k`` puts the deviator at public belief q^k (state drawn from
    that belief, which is what reaching q^k implies). ``round=r`` puts the
    deviator at round r of an episode started from the prior; episodes that
    end earlier are discarded.
    """
    grid = config.scheme.grid
    if (at_index is None) == (round is None):
        raise ValueError("give exactly one of at_index and round")
    if at_index is not None:
        if at_index not in grid.interior:
            raise OffPathDeviation(f"grid index {at_index} is not an interior point")
        q = grid.points[at_index]
        model = SignalModel(q, config.model.pi)
        start, dev_round = at_index, 1
    else:
        if round < 1 or _round_reach_probability(config, round) == 0:
            raise OffPathDeviation(f"round {round} is never reached on path")
        model, start, dev_round = config.model, grid.start, round
    m = _Moments()
    tracker = _SurvivalTracker(config.scheme, config.spec)
    for idx in range(n):
        rng = stream((seed, 2, idx))
        seq = sample_sequence(config.spec, model, rng)
        t = _play(config, rng, start, seq, deviation, dev_round, tracker)
        if len(t.rounds) >= dev_round:
            m.add(t.utilities[dev_round - 1])
    mean, se = m.summary()
    return DeviationEstimate(deviation.label, mean, se, m.n)


@dataclass(frozen=True)
class DoobReport:
    threshold: float
    frequency: float
    se: float
    bound: float
    eps: float
    holds: bool
    dominated: bool  # running survival never above the anchored one


def doob_check(spec: SupplySpec, strategy: RoundStrategy, lam, k: int, G: float, n: int, seed: int = 0,
               rounds: int = 20) -> DoobReport:
    """Maximal-inequality check for the survival belief anchored at round 1.

    Simulates a stationary count-level strategy on an explicit supply, filters
    the public posterior over (initial count, discoveries) exactly in floats,
    and records whether the anchored probability Pr(K >= k+1 | history) ever
    reaches G times its starting value.
    """
    import numpy as np

    if spec.kmax is None:
        raise ValueError("doob_check needs an explicit bounded supply")
    lam = float(as_fraction(lam))
    K = spec.kmax
    prior = np.array([float(spec.prob(j)) for j in range(K + 1)])
    msgs = sorted(strategy.messages, key=str)
    g = float(strategy.gamma)
    shirk = np.array([float(strategy.shirk_report.get(m, 0)) for m in msgs])
    found = np.array([float(strategy.found_marginal().get(m, 0)) for m in msgs]) if g > 0 else np.zeros(len(msgs))
    empty = np.array([float(strategy.empty_report.get(m, 0)) for m in msgs])
    eps = float(spec.tail(k + 1))
    level = G * eps
    anchored_mask = np.array([1.0 if j >= k + 1 else 0.0 for j in range(K + 1)])
    hits = 0
    dominated = True
    for idx in range(n):
        rng = stream((seed, 3, idx))
        kk = int(rng.choice(K + 1, p=prior))
        d = 0
        # joint posterior over (initial count, discoveries so far)
        post = np.zeros((K + 1, K + 1))
        post[:, 0] = prior
        hit = eps >= level
        for _ in range(rounds):
            works = rng.random() < g
            if works and kk - d > 0 and rng.random() < lam:
                d += 1
                m = rng.choice(len(msgs), p=found)
            elif works:
                m = rng.choice(len(msgs), p=empty)
            else:
                m = rng.choice(len(msgs), p=shirk)
            new = np.zeros_like(post)
            for j in range(K + 1):
                for dd in range(min(j, K) + 1):
                    w = post[j, dd]
                    if w == 0:
                        continue
                    rem = j - dd
                    new[j, dd] += w * (1 - g) * shirk[m]
                    if rem > 0:
                        new[j, dd] += w * g * (1 - lam) * empty[m]
                        new[j, dd + 1] += w * g * lam * found[m]
                    else:
                        new[j, dd] += w * g * empty[m]
            post = new / new.sum()
            anchored = float((post.sum(axis=1) * anchored_mask).sum())
            running = sum(post[j, dd] for j in range(K + 1) for dd in range(j + 1) if j - dd >= k + 1)
            if running > anchored + 1e-12:
                dominated = False
            if anchored >= level:
                hit = True
        hits += hit
    freq = hits / n
    se = math.sqrt(max(freq * (1 - freq), 1e-300) / n)
    bound = 1.0 / G
    return DoobReport(level, freq, se, bound, eps, freq <= bound + 3 * se, dominated)
