"""Bundled benchmark models, their scenarios, and closed-form oracles.

The two-mode thermostat admits an exact piecewise-exponential solution, so
its reachability probability reduces to a normal CDF difference over the
initial-temperature interval that lands in the goal window; oracle_t2
evaluates that in high-precision arithmetic (mpmath), fully independent of
the interval machinery it is used to check.

Published reference values live in models/expected.json.  Reference rows
for the bouncing ball and the 4-mode thermostat are not reproducible from
the textual model descriptions (see the notes in the model files); they are
carried as data, never asserted.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Callable

import mpmath as mp

from . import expr as ex
from . import predicates as pr
from .pdrh import HybridModel, parse


class CorpusError(RuntimeError):
    pass


def models_dir() -> Path:
    """Locate the models/ corpus directory (env override: REACHBOUND_MODELS)."""
    env = os.environ.get("REACHBOUND_MODELS")
    if env:
        p = Path(env)
        if (p / "expected.json").exists():
            return p
        raise CorpusError(f"REACHBOUND_MODELS={env} has no expected.json")
    here = Path(__file__).resolve()
    for parent in here.parents:
        cand = parent / "models"
        if (cand / "expected.json").exists():
            return cand
    cand = Path.cwd() / "models"
    if (cand / "expected.json").exists():
        return cand
    raise CorpusError("cannot locate the models/ corpus directory")


@lru_cache(maxsize=None)
def load(filename: str) -> HybridModel:
    return parse((models_dir() / filename).read_text())


@lru_cache(maxsize=1)
def expected_results() -> dict:
    return json.loads((models_dir() / "expected.json").read_text())


# -- scenario plumbing ---------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    label: str
    k: int
    goal_tau: float | None = None      # clock value in the goal, if any
    bounce_count: int | None = None    # bounce budget wired into goal_c, if any
    expected: tuple[float, float] | None = None  # published interval (reference)
    acceptance: bool = False           # quantitative acceptance target?


@dataclass(frozen=True)
class BenchmarkSpec:
    name: str
    filename: str
    scenarios: tuple[Scenario, ...]
    oracle: Callable[[Scenario], float] | None = None

    def model(self, scenario: Scenario | None = None) -> HybridModel:
        m = load(self.filename)
        if scenario is None:
            return m
        if scenario.goal_tau is not None:
            m = with_goal_clock(m, "tau", scenario.goal_tau)
        if scenario.bounce_count is not None:
            m = with_goal_clock(m, "n", scenario.bounce_count, goal_too=False)
        return m


def _rewrite_eq_const(p: pr.Pred, var: str, value: float) -> pr.Pred:
    if isinstance(p, pr.And):
        return pr.And(tuple(_rewrite_eq_const(q, var, value) for q in p.items))
    if isinstance(p, pr.Or):
        return pr.Or(tuple(_rewrite_eq_const(q, var, value) for q in p.items))
    if p.op == "=" and isinstance(p.left, ex.Var) and p.left.name == var:
        return pr.Cmp("=", p.left, ex.Const(Fraction(str(value)), str(value)))
    return p


def with_goal_clock(model: HybridModel, var: str, value: float, goal_too: bool = True) -> HybridModel:
    """New model whose goal/goal_c pin ``var = value`` (scenario rewriting).

    The shared model is not mutated; everything outside the rewritten
    predicates is structurally shared.
    """
    goal_mode, goal_pred = model.goal
    gc_mode, gc_pred = model.goal_c
    new_goal = _rewrite_eq_const(goal_pred, var, value) if goal_too else goal_pred
    new_gc = _rewrite_eq_const(gc_pred, var, value)
    return replace(model, goal=(goal_mode, new_goal), goal_c=(gc_mode, new_gc))


# -- thermostat oracle ---------------------------------------------------------

_T_MIN = 18  # switching thresholds of the 2-mode thermostat
_T_MAX = 22
_T_HEAT_BASE = 30


def oracle_t2(tau_goal: float, goal: tuple[float, float] = (19.9, 20.1),
              mu: float = 30.0, sigma: float = 1.0, k: int | None = None) -> float:
    """Exact probability for the 2-mode thermostat goal, via mpmath.

    Cooling follows x(t) = x0*exp(-t) until x = 18 at t1 = ln(x0/18);
    heating follows x(t) = 30 - 12*exp(-(t - t_enter)) until x = 22.  The
    goal clock runs at rate 10, so tau_goal corresponds to t = tau_goal/10.
    For each heating cycle the goal condition inverts to an interval of
    initial temperatures; the result is the summed normal mass of those
    intervals (phases beyond the jump budget k are excluded; k = None means
    unbounded).
    """
    with mp.workdps(40):
        tg = mp.mpf(tau_goal) / 10
        glo, ghi = (mp.mpf(str(goal[0])), mp.mpf(str(goal[1])))
        glo = max(glo, mp.mpf(_T_MIN))
        ghi = min(ghi, mp.mpf(_T_MAX))
        if ghi <= glo or tg <= 0:
            return 0.0
        heat = mp.log(mp.mpf(_T_HEAT_BASE - _T_MIN) / (_T_HEAT_BASE - _T_MAX))  # ln(12/8)
        cool = mp.log(mp.mpf(_T_MAX) / _T_MIN)                                  # ln(22/18)
        period = heat + cool
        base = _T_HEAT_BASE - _T_MIN  # 12
        u_lo = mp.log(base / (_T_HEAT_BASE - glo))
        u_hi = mp.log(base / (_T_HEAT_BASE - ghi))
        u_lo = max(u_lo, mp.mpf(0))
        u_hi = min(u_hi, heat)
        if u_hi <= u_lo:
            return 0.0
        mu_ = mp.mpf(str(mu))
        sg = mp.mpf(str(sigma))
        total = mp.mpf(0)
        n = 0
        while True:
            if k is not None and 2 * n + 1 > k:
                break
            t1_hi = tg - n * period - u_lo
            t1_lo = tg - n * period - u_hi
            if t1_hi <= 0:
                break
            t1_lo = max(t1_lo, mp.mpf(0))
            x0_lo = _T_MIN * mp.exp(t1_lo)
            x0_hi = _T_MIN * mp.exp(t1_hi)
            total += mp.ncdf((x0_hi - mu_) / sg) - mp.ncdf((x0_lo - mu_) / sg)
            if k is None and x0_hi > mu_ + 40 * sg:
                break
            n += 1
        return float(total)


# -- the benchmark table ---------------------------------------------------------


def _expected_interval(scenario_label: str) -> tuple[float, float] | None:
    for row in expected_results()["verified"]:
        if row["scenario"] == scenario_label:
            return tuple(row["interval"])
    return None


def _t2_oracle(s: Scenario) -> float:
    return oracle_t2(s.goal_tau, k=s.k)


def models() -> list[BenchmarkSpec]:
    """The bundled benchmark suite: BB, T2, T4, CBB, IG."""
    return [
        BenchmarkSpec(
            name="BB", filename="bouncingball.pdrh",
            scenarios=tuple(
                Scenario(f"BB k={k}", k=k, bounce_count=k, expected=_expected_interval(f"BB k={k}"))
                for k in (0, 1, 2, 3)),
        ),
        BenchmarkSpec(
            name="T2", filename="thermostat2.pdrh",
            scenarios=(
                Scenario("T2(0.6)", k=1, goal_tau=6, expected=_expected_interval("T2(0.6)"), acceptance=True),
                Scenario("T2(1.8)", k=5, goal_tau=18, expected=_expected_interval("T2(1.8)"), acceptance=True),
                Scenario("T2(2.4)", k=7, goal_tau=24, expected=_expected_interval("T2(2.4)"), acceptance=True),
            ),
            oracle=_t2_oracle,
        ),
        BenchmarkSpec(
            name="T4", filename="thermostat4.pdrh",
            scenarios=(
                Scenario("T4(0.6)", k=2, goal_tau=6, expected=_expected_interval("T4(0.6)")),
                Scenario("T4(1.7)", k=6, goal_tau=17, expected=_expected_interval("T4(1.7)")),
                Scenario("T4(1.8)", k=6, goal_tau=18, expected=_expected_interval("T4(1.8)")),
            ),
        ),
        BenchmarkSpec(
            name="CBB", filename="controlledball.pdrh",
            scenarios=(
                Scenario("CBB coarse", k=2, expected=_expected_interval("CBB coarse")),
                Scenario("CBB fine", k=2, expected=_expected_interval("CBB fine")),
            ),
        ),
        BenchmarkSpec(
            name="IG", filename="insulinglucose.pdrh",
            scenarios=(
                Scenario("IG eps=1e-2", k=1, expected=_expected_interval("IG eps=1e-2")),
                Scenario("IG eps=1e-3", k=1, expected=_expected_interval("IG eps=1e-3")),
                Scenario("IG eps=1e-4", k=1, expected=_expected_interval("IG eps=1e-4")),
            ),
        ),
    ]
