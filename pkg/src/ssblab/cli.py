"""Command-line driver: named experiments over parameter sweeps.

Usage::

    ssblab EXPERIMENT [key=value ...] [--config PATH] [--out PATH]
                      [--format csv|json] [--jobs K] [--seed INT]

Values accept a sweep syntax:

* ``a..b..s``   inclusive arithmetic schedule (a non-dividing step truncates)
* ``a..b..*f``  geometric schedule a, a*f, a*f^2, ... up to b
* ``a..b``      unit steps for integers, decades (factor 10 or 1/10) for floats
* ``v1,v2,v3``  explicit list

A config file holds the same keys in ini sections::

    [experiment]
    name = ising-gap-sweep
    [params]
    B = 0.5
    N = 8..24..2
    [output]
    format = csv

Command-line values override the file.  Exit codes: 0 success, 2 invalid
configuration, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import datetime
import io
import itertools
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import __version__
from . import curieweiss as cw
from . import doublewell as dw
from . import flea2x2 as f2
from . import isingchain as ic
from .limits import MixtureTarget, is_monotone, mass_in_ball, mixture_deviation
from .numerics import ConvergenceError, IntegrationError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
FORMATS = ("csv", "json")


class ConfigError(ValueError):
    def __init__(self, diagnostics: list[str]):
        super().__init__("\n".join(diagnostics))
        self.diagnostics = diagnostics


# ---------------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------------

def _num(text: str, kind):
    text = text.strip()
    if kind is int:
        v = float(text)
        if v != int(v):
            raise ValueError(f"expected an integer, got {text!r}")
        return int(v)
    return float(text)


def parse_schedule(text: str, kind=float) -> list:
    """Expand a value or sweep expression into a list of ``kind`` values."""
    text = text.strip()
    if not text:
        raise ValueError("empty value")
    if kind is str:
        return [t.strip() for t in text.split(",")]
    if "," in text:
        return [_num(t, kind) for t in text.split(",")]
    if ".." not in text:
        return [_num(text, kind)]
    parts = text.split("..")
    if len(parts) not in (2, 3):
        raise ValueError(f"bad sweep {text!r}; use start..end[..step]")
    a, b = _num(parts[0], kind), _num(parts[1], kind)
    if len(parts) == 3 and parts[2].strip().startswith("*"):
        f = float(parts[2].strip()[1:])
        if a <= 0 or b <= 0 or f <= 0 or f == 1:
            raise ValueError("geometric sweeps need positive ends and a factor other than 1")
        return _geometric(a, b, f if (b >= a) == (f > 1) else 1 / f, kind)
    if len(parts) == 3:
        step = abs(_num(parts[2], kind))
        if step == 0:
            raise ValueError("sweep step must be nonzero")
        sign = 1 if b >= a else -1
        n = int(math.floor(abs(b - a) / step * (1 + 1e-12) + 1e-9))
        vals = [a + sign * k * step for k in range(n + 1)]
        return [kind(round(v, 12)) if kind is float else kind(v) for v in vals]
    if kind is int:
        sign = 1 if b >= a else -1
        return list(range(a, b + sign, sign))
    if a <= 0 or b <= 0:
        raise ValueError("decade sweeps need positive ends")
    return _geometric(a, b, 10.0 if b >= a else 0.1, kind)


def _geometric(a, b, f, kind) -> list:
    n = int(math.floor(math.log(b / a) / math.log(f) + 1e-9)) if a != b else 0
    vals = [a * f ** k for k in range(n + 1)]
    # snap to the shortest decimal so 1e-3 stays 1e-3 rather than 0.0010000000000000002
    return [kind(float(f"{v:.12g}")) for v in vals]


# ---------------------------------------------------------------------------
# experiment registry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Param:
    kind: type
    default: object
    sweep: bool = True
    help: str = ""


@dataclass(frozen=True)
class Experiment:
    name: str
    claim: str
    params: dict
    axes: tuple          # sweepable keys, outer to inner; the first always gets a column
    columns: tuple
    point: Callable
    finish: Optional[Callable] = None


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict = field(default_factory=dict)   # key -> list of values
    raw: dict = field(default_factory=dict)      # key -> text as given
    origin: dict = field(default_factory=dict)   # key -> "file:line" or "argument"
    out: Optional[str] = None
    format: str = "csv"
    jobs: int = 1
    seed: int = 0
    timestamp: bool = False


@dataclass
class ResultTable:
    columns: list
    rows: list
    metadata: dict

    def __post_init__(self):
        for r in self.rows:
            if len(r) != len(self.columns):
                raise ValueError("ragged result table")


def _nan(x) -> float:
    return float("nan") if x is None else float(x)


# --- double well -----------------------------------------------------------

def _dw_params(P):
    return dw.DoubleWellParams(P["hbar"], P["mass"], P["lam"], P["a"])


def _dw_gap_point(P):
    p = _dw_params(P)
    g = dw.GridSpec.default(p, P["points"])
    gap = dw.lowest_pair(p, g).gap
    fine = dw.lowest_pair(p, g.refined()).gap
    pred = dw.wkb_gap(p)
    return [[P["hbar"], gap, pred.predicted_gap, gap / pred.predicted_gap, abs(gap - fine) / fine]]


def _dw_state(P, p, g):
    pair = dw.lowest_pair(p, g)
    state = P["state"]
    if state == "ground":
        return dw.eigenstate(pair, g, 0)
    if state == "excited":
        return dw.eigenstate(pair, g, 1)
    plus, minus = dw.cat_states(pair, g)
    return plus if state == "plus" else minus


def _dw_target(state, a):
    if state == "plus":
        return MixtureTarget.pure((0.0, a))
    if state == "minus":
        return MixtureTarget.pure((0.0, -a))
    return MixtureTarget.symmetric((0.0, a), (0.0, -a))


def _dw_husimi_point(P):
    p = _dw_params(P)
    g = dw.GridSpec.default(p, P["points"])
    mu = dw.husimi(_dw_state(P, p, g), p, resolution=(P["resolution"], P["resolution"]))
    r = P["radius"]
    right = mass_in_ball(mu, (0.0, p.a), r)
    left = mass_in_ball(mu, (0.0, -p.a), r)
    dev = mixture_deviation(mu, _dw_target(P["state"], p.a), r)
    return [[P["hbar"], right, left, dev, mu.total_mass]]


def _dw_flea_point(P):
    p = _dw_params(P)
    g = dw.GridSpec.default(p, P["points"])
    gap = dw.lowest_pair(p, g).gap
    flea = dw.BumpFlea(P["eps"], P["center"], P["width"])
    psi = dw.eigenstate(dw.lowest_pair(p, g, flea), g, 0)
    return [[P["hbar"], P["eps"], gap, P["eps"] / gap,
             dw.side_mass(psi, "left"), dw.side_mass(psi, "right")]]


# --- Ising -----------------------------------------------------------------

def _ising_gap_point(P):
    p = ic.IsingParams(P["N"], P["B"])
    if P["method"] == "ed":
        gap = ic.ed_lowest_two(p, seed=P["seed"]).gap
    else:
        gap = ic.bdg_gap(p)[0]
    asym = ic.asymptotic_gap(p) if 0 < p.B < 1 else None
    return [[P["N"], P["B"], gap, _nan(asym), gap / asym if asym else float("nan")]]


def _ising_verify_point(P):
    p = ic.IsingParams(P["N"], P["B"])
    ed = ic.ed_lowest_two(p, seed=P["seed"]).gap
    bdg = ic.bdg_gap(p)[0]
    return [[P["N"], P["B"], ed, bdg, abs(ed - bdg)]]


def _ising_flea_point(P):
    p0 = ic.IsingParams(P["N"], P["B"])
    pair = ic.ed_lowest_two(p0, seed=P["seed"])
    plus, minus = ic.cat_states_ising(pair)
    p = ic.IsingParams(P["N"], P["B"], ic.SiteFlea(P["site"], P["delta"]))
    v = ic.ed_lowest_two(p, seed=P["seed"]).vector(0)
    prof = ic.magnetization_profile(v)
    uniform = float(np.all(prof > 0) or np.all(prof < 0))
    dp, dm = ic.flea_matrix_elements(p, plus, minus)
    c1sq = f2.ground_weights(f2.FleaMatrixParams(dp, dm, pair.gap))[0]
    return [[P["delta"], pair.gap, P["delta"] / pair.gap, float(np.abs(prof).max()), uniform,
             float(abs(v @ plus) ** 2), c1sq]]


# --- Curie-Weiss -----------------------------------------------------------

def _cw_gap_point(P):
    gap = cw.cw_gap(cw.CWParams(P["N"], P["B"]))
    return [[P["N"], P["B"], gap, math.log(gap) if gap > 0 else float("-inf")]]


def _cw_dynamics_point(P):
    res = cw.egorov_comparison(P["N"], P["B"], cw.named_start(P["start"]), P["t"], P["steps"])
    return [[t, *q, *c, e] for t, q, c, e in zip(res.times, res.quantum, res.classical, res.error)]


def _cw_flea_point(P):
    gap = cw.cw_gap(cw.CWParams(P["N"], P["B"]))
    delta = P["delta"] if P["ratio"] is None else P["ratio"] * gap
    pair = cw.sector_lowest_two(cw.CWParams(P["N"], P["B"], flea=delta))
    mu = cw.sz_distribution(cw.SectorState.from_vector(pair.vector(0)))
    s = math.sqrt(max(1 - P["B"] ** 2, 0.0))
    r = P["radius"]
    return [[delta, gap, delta / gap, mass_in_ball(mu, (0, 0, s), r),
             mass_in_ball(mu, (0, 0, -s), r), float(mu.mean()[2])]]


# --- two-level model ---------------------------------------------------------

def _flea2x2_run(P):
    curve = f2.crossover_curve(P["gap"], P["delta"])
    return [[g, P["delta"] / g, c] for g, c in curve]


# --- limits ------------------------------------------------------------------

def _limits_point(P):
    model, state, r = P["model"], P["state"], P["radius"]
    if model == "dw":
        r = 0.5 if r is None else r
        p = dw.DoubleWellParams(P["hbar"])
        g = dw.GridSpec.default(p, P["points"])
        mu = dw.husimi(_dw_state(P, p, g), p, resolution=(P["resolution"], P["resolution"]))
        target = _dw_target(state, p.a)
        param = P["hbar"]
    elif model == "cw":
        pair = cw.sector_lowest_two(cw.CWParams(P["N"], P["B"]))
        s = math.sqrt(1 - P["B"] ** 2)
        if state == "ground":
            v = cw.SectorState.from_vector(pair.vector(0))
            target = MixtureTarget.symmetric((0, 0, s), (0, 0, -s))
        else:
            plus, minus = cw.cat_states_cw(pair)
            v = plus if state == "plus" else minus
            target = MixtureTarget.pure((0, 0, s if state == "plus" else -s))
        mu = cw.sz_distribution(v)
        param = P["N"]
    else:
        pair = ic.ed_lowest_two(ic.IsingParams(P["N"], P["B"]), seed=P["seed"])
        m0 = ic.spontaneous_magnetization(P["B"])
        if state == "ground":
            v = pair.vector(0)
            target = MixtureTarget.symmetric((m0,), (-m0,))
        else:
            plus, minus = ic.cat_states_ising(pair)
            v = plus if state == "plus" else minus
            target = MixtureTarget.pure((m0 if state == "plus" else -m0,))
        mu = ic.order_parameter_distribution(v)
        param = P["N"]
    return [[param, mixture_deviation(mu, target, r)]]


def _limits_finish(P0, rows, meta):
    meta["monotone"] = "true" if is_monotone([r[1] for r in rows]) else "false"


_DW = {
    "hbar": Param(float, "0.5,0.4,0.3,0.2"),
    "mass": Param(float, 1.0, False), "lam": Param(float, 1.0, False), "a": Param(float, 1.0, False),
    "points": Param(int, 4001, False),
}

EXPERIMENTS = {e.name: e for e in [
    Experiment("dw-gap-sweep",
               "tunneling splitting of the quartic double well against the leading WKB formula",
               _DW, ("hbar",), ("hbar", "gap", "wkb", "ratio", "grid_rel_change"), _dw_gap_point),
    Experiment("dw-husimi",
               "Husimi measures of double-well states against the two classical minima",
               {**_DW, "hbar": Param(float, "0.5,0.3,0.2,0.1"), "points": Param(int, 2001, False),
                "state": Param(str, "ground", False), "resolution": Param(int, 121, False),
                "radius": Param(float, 0.5, False)},
               ("hbar",), ("hbar", "mass_right", "mass_left", "deviation", "total_mass"), _dw_husimi_point),
    Experiment("dw-flea",
               "a small asymmetric bump localizes the double-well ground state once eps exceeds the gap",
               {**_DW, "hbar": Param(float, 0.2), "eps": Param(float, "1e-8..1e-2"),
                "center": Param(float, None, False), "width": Param(float, None, False)},
               ("hbar", "eps"), ("hbar", "eps", "gap", "eps_over_gap", "mass_left", "mass_right"),
               _dw_flea_point),
    Experiment("ising-gap-sweep",
               "open transverse-field Ising chain gap against (1-B^2) B^N",
               {"N": Param(int, "8..24..2"), "B": Param(float, 0.5), "method": Param(str, "bdg", False)},
               ("N", "B"), ("N", "B", "gap", "asymptotic", "ratio"), _ising_gap_point),
    Experiment("ising-verify",
               "exact diagonalization gap equals the free-fermion gap",
               {"N": Param(int, "4..12..2"), "B": Param(float, "0.25,0.5,0.75")},
               ("N", "B"), ("N", "B", "gap_ed", "gap_bdg", "abs_diff"), _ising_verify_point),
    Experiment("ising-flea",
               "a single-site longitudinal field localizes the Ising ground state once delta exceeds the gap",
               {"N": Param(int, 10, False), "B": Param(float, 0.5, False), "delta": Param(float, "1e-6..1e-1"),
                "site": Param(int, 0, False)},
               ("delta",), ("delta", "gap", "delta_over_gap", "max_abs_mz", "uniform_sign",
                            "overlap_plus", "c1sq_2x2"), _ising_flea_point),
    Experiment("cw-gap-sweep",
               "Curie-Weiss tunneling gap decays exponentially in N in the ordered regime",
               {"N": Param(int, "40..200..20"), "B": Param(float, 0.5)},
               ("N", "B"), ("N", "B", "gap", "log_gap"), _cw_gap_point),
    Experiment("cw-dynamics",
               "quantum mean-field spin expectations follow the classical Lie-Poisson flow",
               {"N": Param(int, 100, False), "B": Param(float, 0.5, False), "t": Param(float, 2.0, False),
                "start": Param(str, "north", False), "steps": Param(int, 200, False)},
               (), ("t", "qx", "qy", "qz", "cx", "cy", "cz", "err"), _cw_dynamics_point),
    Experiment("cw-flea",
               "a collective longitudinal field selects one Curie-Weiss classical ground state",
               {"N": Param(int, 40, False), "B": Param(float, 0.5, False), "delta": Param(float, None),
                "ratio": Param(float, "0.01,0.1,1,10,100"), "radius": Param(float, 0.15, False)},
               ("delta", "ratio"), ("delta", "gap", "delta_over_gap", "mass_plus", "mass_minus", "mean_z"),
               _cw_flea_point),
    Experiment("flea2x2-crossover",
               "two-level flea model: ground state moves from the cat to one localized state as the gap closes",
               {"delta": Param(float, 1e-3, False), "gap": Param(float, "1e-2..1e-6")},
               (), ("gap", "delta_over_gap", "c1sq"), _flea2x2_run),
    Experiment("limits-report",
               "ground states converge to the symmetric mixture, cat components to the pure classical states",
               {"model": Param(str, "dw", False), "state": Param(str, "ground", False),
                "hbar": Param(float, "0.5,0.3,0.2,0.1"), "N": Param(int, "20..100..20"),
                "B": Param(float, 0.5, False), "radius": Param(float, None, False),
                "points": Param(int, 2001, False), "resolution": Param(int, 121, False)},
               ("hbar", "N"), ("parameter", "deviation"), _limits_point, _limits_finish),
]}

_STATES = {"dw-husimi": ("ground", "excited", "plus", "minus"),
           "limits-report": ("ground", "plus", "minus")}


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _where(cfg: ExperimentConfig, key: str) -> str:
    return f"{cfg.origin.get(key, 'default')}: {key}"


def validate(cfg: ExperimentConfig) -> list[str]:
    """Schema and range checks; an empty list means the config is valid."""
    diags = []
    exp = EXPERIMENTS.get(cfg.experiment)
    if exp is None:
        return [f"unknown experiment {cfg.experiment!r}; choose from {', '.join(EXPERIMENTS)}"]
    if cfg.format not in FORMATS:
        diags.append(f"output format {cfg.format!r} not in {FORMATS}")
    if cfg.jobs < 1:
        diags.append(f"--jobs must be >= 1, got {cfg.jobs}")
    for key in cfg.params:
        if key not in exp.params:
            diags.append(f"{_where(cfg, key)}: unknown parameter for {exp.name} "
                         f"(known: {', '.join(exp.params)})")
    P = resolved(cfg, exp)
    for key, vals in P.items():
        par = exp.params.get(key)
        if par is None:
            continue
        if not vals:
            diags.append(f"{_where(cfg, key)}: schedule is empty")
            continue
        if len(vals) > 1 and not par.sweep:
            diags.append(f"{_where(cfg, key)}: {exp.name} takes a single value, got {len(vals)}")
        for v in vals:
            msg = _check_value(exp.name, key, v, P)
            if msg:
                diags.append(f"{_where(cfg, key)}={v}: {msg}")
                break
    if exp.name == "flea2x2-crossover" and P.get("gap"):
        g = P["gap"]
        if any(b >= a for a, b in zip(g, g[1:])):
            diags.append(f"{_where(cfg, 'gap')}: gap schedule must be strictly decreasing")
    if exp.name == "cw-flea" and P["delta"] != [None] and cfg.raw.get("ratio") is not None:
        diags.append(f"{_where(cfg, 'delta')}: give either delta or ratio, not both")
    if exp.name == "limits-report":
        model = P["model"][0]
        if model not in ("dw", "cw", "ising"):
            diags.append(f"{_where(cfg, 'model')}: model must be dw, cw or ising")
        axis = "hbar" if model == "dw" else "N"
        if len(P[axis]) < 2:
            diags.append(f"{_where(cfg, axis)}: a convergence report needs at least two family members")
        if model in ("cw", "ising") and not 0 < P["B"][0] < 1:
            diags.append(f"{_where(cfg, 'B')}: limits-report needs 0 < B < 1 (ordered regime)")
    return diags


def _check_value(name: str, key: str, v, P) -> Optional[str]:
    if v is None:
        return None
    if key == "N":
        if v < 2 or v % 2:
            return "N must be an even integer >= 2 (the models are defined for an even number of sites N)"
        if name in ("ising-verify", "ising-flea") or (name == "ising-gap-sweep" and P["method"][0] == "ed") \
                or (name == "limits-report" and P["model"][0] == "ising"):
            if v > ic.MAX_ED_SITES:
                return f"exact diagonalization limited to N <= {ic.MAX_ED_SITES}"
    if key == "B" and not (math.isfinite(v) and v >= 0):
        return "B must be a finite number >= 0"
    if key == "hbar":
        if v == 0:
            return "classical limit is a limit, not a parameter value"
        if not v > 0:
            return "hbar must be positive"
    if key in ("mass", "lam", "a", "t", "radius", "width") and not v > 0:
        return f"{key} must be positive"
    if key == "points" and v < 101:
        return "grid needs at least 101 points to resolve the wells"
    if key == "points" and name.startswith("dw") or (key == "points" and P.get("model") == ["dw"]):
        for h in P.get("hbar", []):
            if h and h > 0:
                g = dw.GridSpec.default(dw.DoubleWellParams(h, P["mass"][0] if "mass" in P else 1.0,
                                                            P["lam"][0] if "lam" in P else 1.0,
                                                            P["a"][0] if "a" in P else 1.0), v)
                a = P["a"][0] if "a" in P else 1.0
                if g.dx > a / 20:
                    return f"grid spacing {g.dx:.3g} exceeds a/20; raise points"
    if key == "resolution" and v < 8:
        return "Husimi resolution must be at least 8"
    if key == "steps" and v < 1:
        return "steps must be >= 1"
    if key == "site" and not 0 <= v < P["N"][0]:
        return f"site must lie in 0..{P['N'][0] - 1}"
    if key == "gap" and not v > 0:
        return "gap schedule must be positive"
    if key == "delta" and name == "flea2x2-crossover" and v == 0:
        return "delta must be nonzero"
    if key == "method" and v not in ("bdg", "ed"):
        return "method must be bdg or ed"
    if key == "start":
        try:
            cw.named_start(v)
        except ValueError as exc:
            return str(exc)
    if key == "state" and v not in _STATES.get(name, ()):
        return f"state must be one of {_STATES.get(name)}"
    return None


def resolved(cfg: ExperimentConfig, exp: Experiment) -> dict:
    """Parameter schedules with defaults filled in."""
    P = {}
    for key, par in exp.params.items():
        if key in cfg.params:
            P[key] = cfg.params[key]
        elif par.default is None:
            P[key] = [None]
        elif isinstance(par.default, str) and par.kind is not str:
            P[key] = parse_schedule(par.default, par.kind)
        else:
            P[key] = [par.default]
    if exp.name == "cw-flea" and "delta" in cfg.params and "ratio" not in cfg.params:
        P["ratio"] = [None]
    if exp.name == "limits-report":
        # only the family axis of the chosen model is swept
        keep = "hbar" if P["model"][0] == "dw" else "N"
        drop = "N" if keep == "hbar" else "hbar"
        P[drop] = [None]
    return P


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------

def _points(exp: Experiment, P: dict) -> list[dict]:
    if not exp.axes:
        # the whole schedule goes to a single call
        return [{k: v if exp.params[k].sweep else v[0] for k, v in P.items()}]
    axes = [a for a in exp.axes if a in P]
    base = {k: v[0] for k, v in P.items() if k not in axes}
    return [{**base, **dict(zip(axes, combo))} for combo in itertools.product(*(P[a] for a in axes))]


def _columns(exp: Experiment, P: dict) -> tuple[list, list]:
    """Drop leading parameter columns for axes held at a single value."""
    cols = list(exp.columns)
    keep = list(range(len(cols)))
    swept = [a for a in exp.axes if a in cols]
    for a in swept[1:]:
        if len(P.get(a, [None])) <= 1:
            keep.remove(cols.index(a))
    return [cols[i] for i in keep], keep


def run(cfg: ExperimentConfig) -> ResultTable:
    """Execute a validated config; raises ConfigError on invalid input."""
    diags = validate(cfg)
    if diags:
        raise ConfigError(diags)
    exp = EXPERIMENTS[cfg.experiment]
    P = resolved(cfg, exp)
    pts = _points(exp, P)
    for pt in pts:
        pt["seed"] = cfg.seed
    if cfg.jobs > 1 and len(pts) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            chunks = list(pool.map(exp.point, pts))
    else:
        chunks = [exp.point(pt) for pt in pts]
    rows = [r for c in chunks for r in c]
    cols, keep = _columns(exp, P)
    rows = [[float(r[i]) for i in keep] for r in rows]
    meta = {
        "experiment": exp.name,
        "claim": exp.claim,
        "code_version": f"ssblab {__version__}",
        "parameters": {k: cfg.raw.get(k, _default_text(exp.params[k])) for k in exp.params},
        "seed": cfg.seed,
    }
    if exp.finish is not None:
        exp.finish(P, rows, meta)
    if cfg.timestamp:
        meta["timestamp"] = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    return ResultTable(cols, rows, meta)


def _default_text(par: Param) -> str:
    return "" if par.default is None else str(par.default)


def _fmt(v: float) -> str:
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return "%.17g" % v


def render(table: ResultTable, fmt: str) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        for k, v in table.metadata.items():
            if isinstance(v, dict):
                v = " ".join(f"{a}={b}" for a, b in v.items())
            buf.write(f"# {k}: {v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(table.columns)
        for r in table.rows:
            w.writerow([_fmt(x) for x in r])
        return buf.getvalue()
    rows = [[x if math.isfinite(x) else None for x in r] for r in table.rows]
    doc = {"metadata": table.metadata, "columns": table.columns, "rows": rows}
    return json.dumps(doc, indent=2) + "\n"


# ---------------------------------------------------------------------------
# configuration sources
# ---------------------------------------------------------------------------

def _line_of(lines: list[str], section: str, key: str) -> int:
    current = None
    for i, line in enumerate(lines, 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
        elif current == section and "=" in s and s.split("=", 1)[0].strip() == key:
            return i
    return 0


def load_config_file(path: str) -> tuple[dict, dict, dict]:
    """Read an ini-style file into (experiment/output settings, params, origins)."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read config ({exc.strerror})"])
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=path)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        raise ConfigError([f"{path}:{line or '?'}: {exc.message.splitlines()[0]}"])
    lines = text.splitlines()
    diags = []
    for sec in cp.sections():
        if sec not in ("experiment", "params", "output"):
            diags.append(f"{path}:{_line_of(lines, sec, '') or '?'}: unknown section [{sec}]")
    if diags:
        raise ConfigError(diags)
    settings = {}
    for sec in ("experiment", "output"):
        if cp.has_section(sec):
            for k, v in cp.items(sec):
                settings[k] = (v, f"{path}:{_line_of(lines, sec, k)}")
    params, origin = {}, {}
    if cp.has_section("params"):
        for k, v in cp.items("params"):
            params[k] = v
            origin[k] = f"{path}:{_line_of(lines, 'params', k)}"
    return settings, params, origin


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    settings, raw, origin = ({}, {}, {})
    if args.config:
        settings, raw, origin = load_config_file(args.config)
    diags = []
    for item in args.params:
        if "=" not in item:
            diags.append(f"argument {item!r}: expected key=value")
            continue
        k, v = item.split("=", 1)
        raw[k.strip()] = v.strip()
        origin[k.strip()] = "argument"
    name = args.experiment or settings.get("name", (None,))[0]
    if not name:
        diags.append("no experiment given (positional argument or [experiment] name=...)")
        raise ConfigError(diags)

    def setting(key, cast, default):
        if getattr(args, key) is not None:
            return getattr(args, key)
        if key in settings:
            text, where = settings[key]
            try:
                return cast(text)
            except ValueError:
                diags.append(f"{where}: {key}: cannot parse {text!r}")
        return default

    cfg = ExperimentConfig(
        experiment=name,
        out=setting("out", str, None),
        format=setting("format", str, "csv"),
        jobs=setting("jobs", int, 1),
        seed=setting("seed", int, 0),
        timestamp=bool(args.timestamp),
    )
    exp = EXPERIMENTS.get(name)
    for k, v in raw.items():
        cfg.raw[k] = v
        cfg.origin[k] = origin[k]
        par = exp.params.get(k) if exp else None
        kind = par.kind if par else float
        try:
            cfg.params[k] = parse_schedule(v, kind)
        except (ValueError, ZeroDivisionError, OverflowError) as exc:
            diags.append(f"{origin[k]}: {k}={v}: {exc}")
    if diags:
        raise ConfigError(diags)
    return cfg


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ssblab",
        description="Run a named experiment over a parameter sweep and emit a csv/json table.",
        epilog="experiments: " + ", ".join(EXPERIMENTS))
    ap.add_argument("experiment", nargs="?", metavar="EXPERIMENT",
                    help="one of: " + ", ".join(EXPERIMENTS))
    ap.add_argument("params", nargs="*", metavar="key=value",
                    help="parameter values or sweeps (a..b..step, a..b..*f, a..b, v1,v2)")
    ap.add_argument("--config", metavar="PATH", help="ini-style file with [experiment], [params], [output]")
    ap.add_argument("--out", metavar="PATH", help="write the table here instead of stdout")
    ap.add_argument("--format", choices=FORMATS, default=None)
    ap.add_argument("--jobs", type=int, default=None, metavar="K", help="parallel sweep points")
    ap.add_argument("--seed", type=int, default=None, help="Lanczos start-vector seed")
    ap.add_argument("--timestamp", action="store_true",
                    help="add a UTC timestamp to the metadata (output is then not byte-reproducible)")
    return ap


def main(argv: Optional[list] = None) -> int:
    ap = make_parser()
    args = ap.parse_intermixed_args(argv)
    if args.experiment and "=" in args.experiment:
        # experiment named in the config file; the first positional is an override
        args.params.insert(0, args.experiment)
        args.experiment = None
    try:
        cfg = build_config(args)
        table = run(cfg)
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(f"ssblab: config error: {d}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"ssblab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, IntegrationError, ArithmeticError, np.linalg.LinAlgError) as exc:
        report = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, ConvergenceError):
            report["report"] = exc.report
        if isinstance(exc, IntegrationError):
            report["last_time"] = exc.last_time
        print(json.dumps(report, default=str), file=sys.stderr)
        return EXIT_NUMERIC
    text = render(table, cfg.format)
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
