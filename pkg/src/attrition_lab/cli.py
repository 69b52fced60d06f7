"""Command line entry point: ``attrition-lab <subcommand> --config file.yaml``.

Every subcommand writes its artifacts under ``--out`` together with a
``manifest.json``. Exit status is 0 on success, 1 for an invalid config
and 2 when a verification fails; failures are described in ``errors.json``.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import os
import sys
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Optional

import yaml

from . import __version__
from ._rational import as_fraction, fmt
from .beliefs import SurvivalBelief
from .designer import CONSISTENT, InfeasibleScheme, design_scheme, continuation_kappa, minimal_q, shirk_payoff, \
    verify_ic, work_payoff
from .grid import build_grid, cheat_gaps, exit_probabilities_kappa
from .supply import SignalModel, SupplySpec, check_ihr
from .thresholds import GameParams, attrition_certificate, c_lambda, lemma1_bound, proof_constants, \
    witness_threshold

ENV_PREFIX = "ATTRITION_LAB_"
SUBCOMMANDS = ("thresholds", "grid", "design", "simulate", "oracle", "witness", "all")
REPORT_SCHEMA = "attrition-lab/report/1"

DEFAULTS = {
    "seed": 0,
    "game": {"R": "10", "P": "10", "c": "1", "lam": "1"},
    "supply": {"kind": "unlimited"},
    "signal": {"p0": "1/2", "pi": "3/4"},
    "grid": {"p_lo": "1/10", "p_hi": "9/10"},
    "scheme": {"Q": "auto"},
    "simulate": {"n": 10000, "horizon": 10000, "profile": "designed", "fabrication": "H",
                 "deviations": ["shirk+H", "shirk+L", "work+truthful", "work+misreport"],
                 "deviation_n": 2000, "deviation_at": None, "deviation_round": 1, "transcripts": 5},
    "oracle": {"game": "blood_test", "T": 2, "messages": ["H", "L"], "supply": {"kind": "pmf", "weights": ["0", "0", "1"]},
               "tables": {"random": 100, "corners": True, "seed": 11, "denominator": 4},
               "step": "1/4", "family": "all", "max_profiles": 1000000},
    "witness": {"messages": ["H", "L"], "density": {"kind": "uniform", "width": "1"}, "R": None,
                "eps": "1/10", "L": [2, 3], "n": 100000, "z": {"H": "1/100", "L": "1/100"},
                "informative_n": 20000, "F": ["1/1000", "1/100", "1/10", "1/2"], "ihr_depth": 4},
}


class ConfigError(ValueError):
    pass


class VerificationFailure(RuntimeError):
    def __init__(self, stage, reason, detail=None):
        super().__init__(f"{stage}: {reason}")
        self.stage, self.reason, self.detail = stage, reason, detail


# -- config ----------------------------------------------------------------

def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _set_path(tree: dict, dotted: str, value: str):
    keys = dotted.split(".")
    node = tree
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = yaml.safe_load(value)


@dataclass
class ExperimentConfig:
    raw: dict
    params: GameParams
    spec: SupplySpec
    model: SignalModel
    seed: int

    @property
    def digest(self) -> str:
        return hashlib.sha256(_dumps(self.raw).encode()).hexdigest()


def _frac(section: str, key: str, value) -> Fraction:
    try:
        return as_fraction(value if not isinstance(value, float) else repr(value))
    except (TypeError, ValueError, ZeroDivisionError):
        raise ConfigError(f"{section}.{key}: expected a rational literal, got {value!r}") from None


def load_config(path: Optional[str], overrides=(), seed: Optional[int] = None) -> ExperimentConfig:
    """Read YAML, apply dotted overrides, and validate every field."""
    user = {}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                user = yaml.safe_load(fh) or {}
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from None
        except yaml.YAMLError as e:
            raise ConfigError(f"config is not valid YAML: {e}") from None
        if not isinstance(user, dict):
            raise ConfigError("config must be a mapping")
    unknown = set(user) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    raw = _merge(DEFAULTS, user)
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not key=value")
        _set_path(raw, key, value)
    if seed is not None:
        raw["seed"] = seed
    return validate(raw)


def validate(raw: dict) -> ExperimentConfig:
    g = raw["game"]
    try:
        params = GameParams(*(_frac("game", k, g[k]) for k in ("R", "P", "c", "lam")))
        spec = SupplySpec.from_dict(raw["supply"])
        model = SignalModel(_frac("signal", "p0", raw["signal"]["p0"]), _frac("signal", "pi", raw["signal"]["pi"]))
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None
    lo, hi = _frac("grid", "p_lo", raw["grid"]["p_lo"]), _frac("grid", "p_hi", raw["grid"]["p_hi"])
    if not 0 < lo < model.p0 < hi < 1:
        raise ConfigError(f"grid bounds ({fmt(lo)}, {fmt(hi)}) must bracket p0={fmt(model.p0)} inside (0, 1)")
    if model.pi == 1:
        raise ConfigError("the belief grid needs pi < 1")
    Q = raw["scheme"].get("Q", "auto")
    if Q != "auto":
        Qv = _frac("scheme", "Q", Q)
        if Qv < 0 or Qv > params.P:
            raise ConfigError(f"scheme.Q={fmt(Qv)} outside [0, P={fmt(params.P)}]")
    if raw["scheme"].get("reading", CONSISTENT) != CONSISTENT:
        raise ConfigError("only the consistent reading drives the scheme")
    s = raw["simulate"]
    if int(s["n"]) < 0 or int(s["horizon"]) < 1 or int(s["deviation_n"]) < 0:
        raise ConfigError("simulate.n, deviation_n must be >= 0 and horizon >= 1")
    try:
        from .sim import Deviation, Profile

        Profile.parse(s["profile"])
        for d in s["deviations"]:
            Deviation.parse(d)
    except ValueError as e:
        raise ConfigError(f"simulate: {e}") from None
    o = raw["oracle"]
    if o["game"] not in ("blood_test", "custom", "design"):
        raise ConfigError(f"oracle.game must be blood_test, custom or design, got {o['game']!r}")
    if not 1 <= int(o["T"]) <= 3:
        raise ConfigError("oracle.T must be 1, 2 or 3")
    _frac("oracle", "step", o["step"])
    w = raw["witness"]
    if len(w["messages"]) < 2:
        raise ConfigError("witness needs at least two messages")
    try:
        from .witness import density_from_dict

        density_from_dict(w["density"])
    except (KeyError, ValueError, TypeError) as e:
        raise ConfigError(f"witness.density: {e}") from None
    for F in w["F"]:
        if not 0 <= _frac("witness", "F", F) < 1:
            raise ConfigError("witness.F values must lie in [0, 1)")
    try:
        seed = int(raw["seed"])
    except (TypeError, ValueError):
        raise ConfigError("seed must be an integer") from None
    return ExperimentConfig(raw, params, spec, model, seed)


# -- output helpers --------------------------------------------------------

def _plain(x):
    if isinstance(x, Fraction):
        return fmt(x)
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, float):
        return x if x == x and abs(x) != float("inf") else None
    return x


def _dumps(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


class Outputs:
    """Single writer for one run directory."""

    def __init__(self, root: Path):
        self.root = root
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: dict = {}

    def _record(self, name: str, data: bytes):
        path = self.root / name
        path.write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def json(self, name: str, obj):
        self._record(name, _dumps(obj).encode("utf-8"))

    def csv(self, name: str, rows: list, columns: list):
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: "" if r.get(k) is None else _cell(r.get(k)) for k in columns})
        self._record(name, buf.getvalue().encode("utf-8"))

    def figure(self, name: str, fig):
        buf = io.BytesIO()
        fig.savefig(buf, format="png", dpi=100, metadata={"Software": None})
        import matplotlib.pyplot as plt

        plt.close(fig)
        self._record(name, buf.getvalue())


def _cell(v):
    if isinstance(v, Fraction):
        return fmt(v)
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return v


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "attrition-lab"
    return plt


# -- subcommands -----------------------------------------------------------

def _design(cfg: ExperimentConfig):
    grid = build_grid(cfg.model.p0, cfg.raw["grid"]["p_lo"], cfg.raw["grid"]["p_hi"], cfg.model.pi)
    kappa = continuation_kappa(cfg.params.lam, _rho(cfg.spec))
    ep = exit_probabilities_kappa(grid, kappa)
    return grid, ep, kappa


def _rho(spec: SupplySpec) -> Fraction:
    if spec.kind == "geometric":
        return spec.rho
    if spec.kind == "unlimited":
        return Fraction(1)
    raise ConfigError("the designed scheme needs an unlimited or geometric supply")


def run_thresholds(cfg: ExperimentConfig, out: Outputs, opts) -> dict:
    p = cfg.params
    pc = proof_constants(p)
    cert = attrition_certificate(cfg.spec, p)
    ihr = check_ihr(cfg.spec)
    m = len(cfg.raw["witness"]["messages"])
    from .witness import density_from_dict

    fbar = density_from_dict(cfg.raw["witness"]["density"]).fbar
    wt = witness_threshold(m, fbar, float(p.R))
    rows = [
        {"name": "lemma1_bound", "value": lemma1_bound(p)},
        {"name": "c_lambda", "value": c_lambda(p)},
        {"name": "sqrtG", "value": pc.sqrtG},
        {"name": "G", "value": pc.G},
        {"name": "eta", "value": pc.eta},
        {"name": "B", "value": pc.B},
        {"name": "g", "value": pc.g},
        {"name": "quarter", "value": pc.quarter},
    ] + [{"name": f"term_{i + 1}", "value": t, "below_quarter": t < pc.quarter} for i, t in enumerate(pc.terms)]
    rows.append({"name": "witness_threshold", "value": wt})
    out.csv("thresholds.csv", rows, ["name", "value", "below_quarter"])
    res = {
        "constants": {r["name"]: r["value"] for r in rows},
        "final_inequality_holds": pc.final_inequality_holds,
        "terms_strictly_below_quarter": list(pc.terms_strictly_below_quarter),
        "certificate": cert.to_dict(),
        "ihr": {"holds": ihr.holds, "first_violation": ihr.first_violation},
    }
    out.json("thresholds.json", res)
    return res


def run_grid(cfg: ExperimentConfig, out: Outputs, opts) -> dict:
    grid, ep, kappa = _design(cfg)
    gaps = cheat_gaps(ep)
    rows = []
    for k, q in enumerate(grid.points):
        up, down = gaps.get(k, (None, None))
        rows.append({"k": k, "q": q, "hH": ep.hH[k], "hL": ep.hL[k], "lH": ep.lH[k], "lL": ep.lL[k],
                     "pi_mixed": ep.top(q, k), "pi_rho": ep.pi_rho(k), "cheat_up": up, "cheat_down": down})
    out.csv("grid.csv", rows, ["k", "q", "hH", "hL", "lH", "lL", "pi_mixed", "pi_rho", "cheat_up", "cheat_down"])
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    qs = [float(q) for q in grid.points]
    ax.plot(qs, [float(r["pi_mixed"]) for r in rows], "o-", label="top exit, p = q")
    ax.plot(qs, [float(r["pi_rho"]) for r in rows], "s--", label="any exit")
    ax.set_xlabel("public belief q")
    ax.set_ylabel("probability")
    ax.legend()
    fig.tight_layout()
    out.figure("grid.png", fig)
    res = {"N": grid.N, "start": grid.start, "kappa": kappa, "points": list(grid.points)}
    out.json("grid.json", res)
    return res


def run_design(cfg: ExperimentConfig, out: Outputs, opts) -> dict:
    grid, ep, kappa = _design(cfg)
    p = cfg.params
    Q = cfg.raw["scheme"].get("Q", "auto")
    rho = _rho(cfg.spec)
    try:
        if Q == "auto":
            mq = minimal_q(grid, ep, p.c, p.lam, rho)
            scheme, q_star, binding = mq.scheme, mq.Q, list(mq.binding)
        else:
            scheme = design_scheme(grid, ep, as_fraction(Q), lam=p.lam, survival_now=rho)
            q_star, binding = scheme.Q, []
    except InfeasibleScheme as e:
        raise VerificationFailure("design", str(e), {"bound": e.bound, "value": e.value, "limit": e.limit})
    ic = verify_ic(scheme, p)
    rows = []
    for row in scheme.rows(p.c):
        k = row["k"]
        row["work"] = work_payoff(scheme, k) - p.c
        row["fabricate"] = shirk_payoff(scheme, k)
        row["min_ic_margin"] = min(ic.margins[k].values())
        rows.append(row)
    out.csv("scheme.csv", rows, ["k", "q", "RH", "RL", "Q", "work", "fabricate", "margin", "min_ic_margin"])
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    qs = [float(r["q"]) for r in rows]
    ax.plot(qs, [float(r["RH"]) for r in rows], "^-", label="reward after H")
    ax.plot(qs, [float(r["RL"]) for r in rows], "v-", label="reward after L")
    ax.axhline(-float(scheme.Q), color="k", lw=0.8, label="punishment -Q")
    ax.set_xlabel("public belief q")
    ax.set_ylabel("payment")
    ax.legend()
    fig.tight_layout()
    out.figure("scheme.png", fig)
    res = {"Q": q_star, "binding": binding, "kappa": kappa, "max_reward": scheme.max_reward,
           "ic_feasible": ic.feasible, "ic_min_margin": ic.min_margin, "ic_binding": list(ic.binding),
           "box_ok": ic.box_ok, "notes": ic.notes, "messages": list(scheme.messages)}
    out.json("design.json", res)
    opts["_scheme"] = scheme
    if not ic.feasible:
        reason = "incentive constraints fail" if ic.min_margin < 0 else "payments outside the payoff box"
        raise VerificationFailure("design", reason, _plain(res))
    return res


def _scheme_for(cfg, opts):
    if "_scheme" not in opts:
        grid, ep, _ = _design(cfg)
        Q = cfg.raw["scheme"].get("Q", "auto")
        rho = _rho(cfg.spec)
        try:
            if Q == "auto":
                opts["_scheme"] = minimal_q(grid, ep, cfg.params.c, cfg.params.lam, rho).scheme
            else:
                opts["_scheme"] = design_scheme(grid, ep, as_fraction(Q), lam=cfg.params.lam, survival_now=rho)
        except InfeasibleScheme as e:
            raise VerificationFailure("design", str(e))
    return opts["_scheme"]


def run_simulate(cfg: ExperimentConfig, out: Outputs, opts) -> dict:
    from .sim import Deviation, OffPathDeviation, Profile, SimConfig, deviation_episode, monte_carlo, run_episode

    s = cfg.raw["simulate"]
    scheme = _scheme_for(cfg, opts)
    sc = SimConfig(cfg.params, cfg.spec, cfg.model, scheme, Profile.parse(s["profile"]), int(s["horizon"]))
    n = int(s["n"])
    stats = monte_carlo(sc, n, cfg.seed, fabrication=s.get("fabrication"), jobs=opts.get("jobs", 1)).to_dict() \
        if n > 0 else None
    devs = []
    where = {"at_index": s["deviation_at"]} if s.get("deviation_at") is not None \
        else {"round": int(s.get("deviation_round") or 1)}
    names = list(s["deviations"]) if int(s["deviation_n"]) > 0 else []
    if names and "work+truthful" not in names:
        names.insert(0, "work+truthful")
    baseline = None
    for d in names:
        try:
            est = deviation_episode(sc, Deviation.parse(d), int(s["deviation_n"]), cfg.seed, **where)
        except OffPathDeviation as e:
            devs.append({"deviation": d, "payoff": None, "se": None, "n": 0, "note": str(e)})
            continue
        if d == "work+truthful":
            baseline = est.mean
        devs.append({"deviation": d, "payoff": est.mean, "se": est.se, "n": est.n})
    # every deviation is played on the same streams, so differences are paired
    for row in devs:
        row["gain"] = None if row["payoff"] is None or baseline is None else row["payoff"] - baseline
    rows = []
    if stats:
        for k, (mean, se, cnt) in sorted(stats["drift"].items(), key=lambda t: int(t[0])):
            pay = stats["payoff_by_k"].get(k, [None, None, 0])
            rows.append({"k": int(k), "q": scheme.grid.points[int(k)], "drift": mean, "drift_se": se, "visits": cnt,
                         "payoff": pay[0], "payoff_se": pay[1],
                         "theory": work_payoff(scheme, int(k)) - cfg.params.c})
    out.csv("simulate.csv", rows, ["k", "q", "visits", "drift", "drift_se", "payoff", "payoff_se", "theory"])
    out.csv("deviations.csv", devs, ["deviation", "payoff", "se", "gain", "n", "note"])
    trows = []
    for i in range(int(s.get("transcripts", 0))):
        trows.extend(run_episode(sc, (cfg.seed, 0, i)).rows(i))
    out.csv("transcripts.csv", trows, ["episode", "round", "k", "belief", "worked", "found", "message",
                                       "survival_f1", "payment", "cost", "utility", "terminal"])
    if rows:
        plt = _pyplot()
        fig, ax = plt.subplots(figsize=(5, 3.5))
        qs = [float(r["q"]) for r in rows]
        ax.errorbar(qs, [r["payoff"] for r in rows], yerr=[3 * (r["payoff_se"] or 0) for r in rows], fmt="o",
                    label="simulated net payoff")
        ax.plot(qs, [float(r["theory"]) for r in rows], "x", label="exact")
        ax.errorbar(qs, [r["drift"] for r in rows], yerr=[3 * (r["drift_se"] or 0) for r in rows], fmt=".",
                    label="belief drift")
        ax.axhline(0, color="k", lw=0.6)
        ax.set_xlabel("public belief q")
        ax.legend()
        fig.tight_layout()
        out.figure("simulate.png", fig)
    res = {"stats": stats, "deviations": devs, "profile": s["profile"], "n": n}
    out.json("simulate.json", res)
    return res


def _oracle_game(cfg: ExperimentConfig, opts):
    from .oracle import FiniteGame, blood_test_game, truncated_design_game

    o = cfg.raw["oracle"]
    p = cfg.params
    if o["game"] == "blood_test":
        return blood_test_game(R=p.R, P=p.P, c=p.c)
    supply = SupplySpec.from_dict(o["supply"])
    if o["game"] == "design":
        return truncated_design_game(_scheme_for(cfg, opts), int(o["T"]), supply, p.c, cfg.model)
    T, msgs = int(o["T"]), tuple(o["messages"])
    import itertools

    flat = {prof: Fraction(0) for prof in itertools.product(msgs, repeat=T)}
    return FiniteGame(T, msgs, supply, p.lam, tuple(flat for _ in range(T)), p.c, p.R, p.P)


def run_oracle(cfg: ExperimentConfig, out: Outputs, opts) -> dict:
    from . import oracle as orc

    o = cfg.raw["oracle"]
    try:
        game = _oracle_game(cfg, opts)
    except ValueError as e:
        raise ConfigError(f"oracle: {e}") from None
    t = o["tables"]
    if o["game"] == "design":
        table_sets = [("design", game.tables)]
    else:
        table_sets = []
        if t.get("corners"):
            table_sets += [(f"corner-{i}", tab) for i, tab in enumerate(orc.corner_tables(game))]
        if int(t.get("random", 0)):
            table_sets += [(f"random-{i}", tab) for i, tab in
                           enumerate(orc.random_tables(game, int(t["random"]), (int(t.get("seed", 11)),),
                                                       int(t.get("denominator", 4))))]
        if not table_sets:
            table_sets = [("flat", game.tables)]
    family = None if o.get("family", "all") == "all" else tuple(o["family"])
    entries, rows = [], []
    for name, tabs in table_sets:
        g = game.with_tables(tabs)
        dom = orc.dominance_scan(g)
        try:
            certs = orc.enumerate_equilibria(g, o["step"], family, max_profiles=int(o["max_profiles"]))
        except orc.TractabilityError as e:
            raise ConfigError(f"oracle: {e}") from None
        entries.append({"table": name, "dominance": dom.to_dict(),
                        "certificates": [c.to_dict() for c in certs]})
        rows.append({"table": name, "certificates": len(certs),
                     "informative": sum(c.informative for c in certs),
                     "dominance_certified": dom.certified,
                     "min_margin": min(dom.margins.values()) if dom.margins else None,
                     "max_epsilon": max((c.epsilon for c in certs), default=Fraction(0))})
    out.csv("oracle.csv", rows, ["table", "certificates", "informative", "dominance_certified", "min_margin",
                                 "max_epsilon"])
    informative = [e["table"] for e in entries if any(c["informative"] for c in e["certificates"])]
    res = {"game": o["game"], "T": game.T, "messages": list(game.messages), "step": o["step"],
           "tables": len(entries), "informative_tables": informative,
           "certificates": entries}
    out.json("certificates.json", res)
    if informative:
        raise VerificationFailure("oracle", "informative equilibrium certificate in a finite game",
                                  {"tables": informative})
    return {k: v for k, v in res.items() if k != "certificates"} | {
        "total_certificates": sum(r["certificates"] for r in rows),
        "all_dominance_certified": all(r["dominance_certified"] for r in rows)}


def run_witness(cfg: ExperimentConfig, out: Outputs, opts) -> dict:
    from . import witness as wt

    w = cfg.raw["witness"]
    dens = wt.density_from_dict(w["density"])
    R = as_fraction(w["R"]) if w.get("R") is not None else cfg.params.R
    wspec = wt.WitnessSpec({m: dens for m in w["messages"]}, R)
    m = len(w["messages"])
    eps = _frac("witness", "eps", w["eps"])
    checks = []
    for i, L in enumerate(w["L"]):
        est = wt.collision_frequency([dens] * int(L), float(eps), int(w["n"]), (cfg.seed, 10, i))
        checks.append({"check": f"collision L={L}", "value": est.frequency, "se": est.se, "bound": est.bound,
                       "holds": est.within_bound})
    if isinstance(dens, wt.UniformShock) and dens.width == 1:
        exact = wt.uniform_pair_collision(eps)
        checks.append({"check": "uniform pair collision (exact)", "value": exact,
                       "bound": wt.order_stat_bound(2, Fraction(1), eps), "holds": exact <= 2 * eps})
    spec_ok = cfg.spec.tail(1) > 0
    if spec_ok and int(w["informative_n"]) > 0:
        z = {k: as_fraction(v) for k, v in w["z"].items()}
        inf = wt.informative_frequency(cfg.spec, wspec, z, int(w["informative_n"]), (cfg.seed, 11))
        checks.append({"check": "informative witness", "value": inf.frequency, "se": inf.se, "bound": inf.bound,
                       "holds": inf.within_bound})
    thr = witness_threshold(m, wspec.fbar, float(R))
    silence = []
    for F in w["F"]:
        cert = wt.silence_certificate(as_fraction(F), m, wspec.fbar, float(R))
        consistent = cert.silent == (float(as_fraction(F)) < thr)
        silence.append(cert.to_dict() | {"consistent": consistent})
        checks.append({"check": f"contraction F={F}", "value": cert.coefficient, "bound": 1,
                       "holds": consistent})
    ihr = check_ihr(cfg.spec)
    mono = wt.ihr_monotonicity_check(cfg.spec, depth=int(w["ihr_depth"]))
    if ihr.holds:
        checks.append({"check": "hat-survival part i", "value": mono.part_i, "holds": mono.part_i})
        checks.append({"check": "hat-survival part ii", "value": mono.part_ii, "holds": mono.part_ii})
    out.csv("witness.csv", checks, ["check", "value", "se", "bound", "holds"])
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    import numpy as np

    Fs = np.linspace(0, min(0.5, 20 * thr), 200)
    ax.plot(Fs, [float(wt.contraction_coefficient(float(f), m, wspec.fbar, float(R))) for f in Fs])
    ax.axhline(1, color="k", lw=0.6)
    ax.axvline(thr, color="r", lw=0.8, ls="--", label=f"threshold {thr:.6f}")
    ax.set_xlabel("F")
    ax.set_ylabel("contraction coefficient")
    ax.legend()
    fig.tight_layout()
    out.figure("witness.png", fig)
    res = {"fbar": wspec.fbar, "R": R, "messages": m, "threshold": thr, "silence": silence,
           "ihr": {"holds": ihr.holds, "first_violation": ihr.first_violation}, "monotonicity": mono.to_dict(),
           "checks": checks}
    out.json("witness.json", res)
    failed = [c["check"] for c in checks if not c["holds"]]
    if failed:
        raise VerificationFailure("witness", "bound checks failed", {"checks": failed})
    return {k: v for k, v in res.items() if k != "monotonicity"} | {
        "monotonicity": {"part_i": mono.part_i, "part_ii": mono.part_ii}}


RUNNERS = {"thresholds": run_thresholds, "grid": run_grid, "design": run_design, "simulate": run_simulate,
           "oracle": run_oracle, "witness": run_witness}


# -- report ----------------------------------------------------------------

def _flatten(prefix: str, obj, rows: list):
    if isinstance(obj, dict):
        for k in sorted(obj, key=str):
            _flatten(f"{prefix}.{k}" if prefix else str(k), obj[k], rows)
    elif isinstance(obj, (list, tuple)) and obj and all(isinstance(x, dict) for x in obj):
        for i, x in enumerate(obj):
            _flatten(f"{prefix}[{i}]", x, rows)
    else:
        rows.append({"key": prefix, "value": json.dumps(_plain(obj), sort_keys=True) if isinstance(obj, (list, tuple))
                     else _cell(_plain(obj))})


def emit_report(results: dict, out: Outputs) -> dict:
    """Write report.json / report.csv from whatever stages produced results."""
    if not results:
        raise ValueError("nothing to report")
    sim = results.get("simulate")
    if sim is not None and sim.get("stats") is None:
        sim = dict(sim, stats={k: None for k in ("n", "exit_top", "exit_top_se", "fabrication_payoff",
                                                 "fabrication_payoff_se", "worker_payoff", "worker_payoff_se")})
    report = {"schema": REPORT_SCHEMA, "version": __version__,
              "constants": results.get("thresholds"),
              "grid": results.get("grid"),
              "scheme": results.get("design"),
              "simulation": sim,
              "certificates": results.get("oracle"),
              "witness": results.get("witness")}
    if results.get("design") and sim and sim.get("stats"):
        st = sim["stats"]
        report["cross"] = {"Q": results["design"]["Q"], "ic_min_margin": results["design"]["ic_min_margin"],
                           "simulated_worker_payoff": st.get("worker_payoff"),
                           "simulated_worker_payoff_se": st.get("worker_payoff_se"),
                           "simulated_fabrication_payoff": st.get("fabrication_payoff"),
                           "simulated_fabrication_payoff_se": st.get("fabrication_payoff_se"),
                           "deviation_gains": {d["deviation"]: d["gain"] for d in sim.get("deviations", [])}}
    report = {k: v for k, v in report.items() if v is not None or k in ("schema", "version")}
    out.json("report.json", report)
    rows = []
    _flatten("", _plain(report), rows)
    out.csv("report.csv", rows, ["key", "value"])
    return report


# -- entry -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    env = os.environ
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=env.get(ENV_PREFIX + "CONFIG"), help="YAML experiment config")
    common.add_argument("--out", default=env.get(ENV_PREFIX + "OUT", "out"), help="output directory")
    common.add_argument("--seed", type=int, default=_env_int("SEED"), help="base seed (overrides config)")
    common.add_argument("--jobs", type=int, default=_env_int("JOBS") or 1, help="worker processes for simulation")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry, e.g. simulate.n=1000")
    p = argparse.ArgumentParser(prog="attrition-lab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, parents=[common], help=f"run the {name} stage" if name != "all" else "run every stage")
        if name in ("simulate", "all"):
            sp.add_argument("--n", type=int, help="number of episodes")
        if name in ("oracle", "all"):
            sp.add_argument("--step", help="strategy grid step, e.g. 1/4")
        if name in ("witness",):
            sp.add_argument("--samples", type=int, help="Monte Carlo draws for collision checks")
    return p


def _env_int(name: str) -> Optional[int]:
    v = os.environ.get(ENV_PREFIX + name)
    return int(v) if v not in (None, "") else None


def run(command: str, config: Optional[str], out_dir: str, *, seed=None, jobs: int = 1, overrides=()) -> int:
    start = time.perf_counter()
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    err_path = root / "errors.json"
    if err_path.exists():
        err_path.unlink()

    def fail(code, errors):
        err_path.write_text(_dumps({"exit_code": code, "errors": errors}), encoding="utf-8")
        for e in errors:
            print(f"attrition-lab: {e['stage']}: {e['reason']}", file=sys.stderr)
        return code

    try:
        cfg = load_config(config, overrides, seed)
    except ConfigError as e:
        return fail(1, [{"stage": "config", "reason": str(e)}])
    out = Outputs(root)
    stages = [c for c in RUNNERS] if command == "all" else [command]
    opts = {"jobs": max(1, jobs)}
    results, errors = {}, []
    for stage in stages:
        try:
            results[stage] = RUNNERS[stage](cfg, out, opts)
        except ConfigError as e:
            return fail(1, [{"stage": stage, "reason": str(e)}])
        except VerificationFailure as e:
            errors.append({"stage": e.stage, "reason": e.reason, "detail": _plain(e.detail)})
    if results:
        emit_report(results, out)
    manifest = {"config_sha256": cfg.digest, "seed": cfg.seed, "version": __version__, "command": command,
                "outputs": dict(sorted(out.files.items())), "wall_clock_s": round(time.perf_counter() - start, 3),
                "config": cfg.raw}
    (root / "manifest.json").write_text(_dumps(manifest), encoding="utf-8")
    if errors:
        return fail(2, errors)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = list(args.set)
    if getattr(args, "n", None) is not None:
        overrides.append(f"simulate.n={args.n}")
    if getattr(args, "step", None):
        overrides.append(f"oracle.step={args.step}")
    if getattr(args, "samples", None) is not None:
        overrides.append(f"witness.n={args.samples}")
    return run(args.command, args.config, args.out, seed=args.seed, jobs=args.jobs, overrides=overrides)


if __name__ == "__main__":
    sys.exit(main())
