"""Statistical cross-validation: sample sizing, fast simulation, estimation.

Everything here is intentionally non-validated floating point: it exists to
sanity-check the verified solver, not to replace it.  Simulation uses a
fixed-step classical 4th-order integrator with guard/goal localization by
sign-change bisection inside a step; an event narrower than a step can be
missed (documented caveat of any fixed-step simulator).

Sampling is reproducible by construction: a counter-based generator is
seeded per chunk via numpy's Philox ``jumped`` streams, and normal variates
come from the rational inverse-CDF approximation of Wichura's algorithm
AS 241 (PPND16), so results depend only on (seed, chunk layout), not on
worker count or platform polar-method quirks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import expr as ex
from . import predicates as pr
from .density import UnsupportedDensity
from .intervals import Interval
from .pdrh import HybridModel

_CHUNK = 1 << 17


class SampleSizeError(ValueError):
    def __init__(self, required: int, cap: int):
        self.required = required
        self.cap = cap
        super().__init__(
            f"Chernoff-Hoeffding bound requires {required:,} samples, above the "
            f"cap of {cap:,}; the size grows quadratically as the interval shrinks"
        )


@dataclass(frozen=True)
class MCConfig:
    zeta: float                 # confidence-interval half-width
    confidence: float           # coverage probability
    seed: int = 0
    k: int = 0
    sim_step: float = 1e-3
    max_samples: int = 20_000_000

    def __post_init__(self):
        if not (0.0 < self.zeta < 1.0):
            raise ValueError(f"zeta must be in (0, 1), got {self.zeta}")
        if not (0.0 < self.confidence < 1.0):
            raise ValueError(f"confidence must be in (0, 1), got {self.confidence}")


@dataclass(frozen=True)
class MCResult:
    p_hat: float
    ci: Interval
    n_used: int
    successes: int


def chernoff_size(zeta: float, confidence: float) -> int:
    """N = ceil( ln(1/(1-c)) / (2 zeta^2) ).

    The value is nudged down by a few ulp before the ceiling so that cases
    where the exact quotient is an integer (and the float computation lands
    epsilon above it) do not get rounded one sample up.
    """
    if not (0.0 < zeta < 1.0) or not (0.0 < confidence < 1.0):
        raise ValueError("zeta and confidence must lie in (0, 1)")
    val = math.log(1.0 / (1.0 - confidence)) / (2.0 * zeta * zeta)
    return int(math.ceil(val - 8.0 * math.ulp(val)))


# -- inverse normal CDF (AS 241, double precision) ---------------------------

_A = (3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
      1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
      3.3430575583588128105e4, 2.5090809287301226727e3)
_B = (1.0, 4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
      2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
      5.2264952788528545610e3)
_C = (1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
      3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4)
_D = (1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
      1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
      1.05075007164441684324e-9)
_E = (6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
      2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7)
_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
      7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
      2.04426310338993978564e-15)


def _poly(coeffs, r):
    acc = coeffs[-1]
    for c in coeffs[-2::-1]:
        acc = acc * r + c
    return acc


def normal_quantile(p):
    """Standard normal inverse CDF; accepts floats or numpy arrays in (0,1)."""
    p = np.asarray(p, dtype=np.float64)
    q = p - 0.5
    out = np.empty_like(p)

    central = np.abs(q) <= 0.425
    if np.any(central):
        r = 0.180625 - q[central] * q[central]
        out[central] = q[central] * _poly(_A, r) / _poly(_B, r)

    tail = ~central
    if np.any(tail):
        pt = np.where(q[tail] < 0.0, p[tail], 1.0 - p[tail])
        r = np.sqrt(-np.log(pt))
        near = r <= 5.0
        val = np.empty_like(r)
        val[near] = _poly(_C, r[near] - 1.6) / _poly(_D, r[near] - 1.6)
        val[~near] = _poly(_E, r[~near] - 5.0) / _poly(_F, r[~near] - 5.0)
        out[tail] = np.where(q[tail] < 0.0, -val, val)
    return out if out.ndim else float(out)


def draw_samples(spec_kind: str, params: tuple[float, ...], n: int, rng) -> np.ndarray:
    u = rng.random(n)
    if spec_kind == "normal":
        mu, sigma = params
        u = np.clip(u, 1e-300, 1.0 - 1e-16)
        return mu + sigma * normal_quantile(u)
    if spec_kind == "uniform":
        a, b = params
        return a + (b - a) * u
    if spec_kind == "exponential":
        (rate,) = params
        return -np.log1p(-np.clip(u, 0.0, 1.0 - 1e-16)) / rate
    raise UnsupportedDensity(f"sampling not implemented for {spec_kind!r} densities")


# -- compiled model for fast simulation ---------------------------------------


def _compile_pred(p: pr.Pred, var_order: list[str], eq_tol: float):
    """Predicate -> boolean numpy function of state rows."""
    if isinstance(p, pr.And):
        subs = [_compile_pred(q, var_order, eq_tol) for q in p.items]
        return lambda *rows: np.logical_and.reduce([f(*rows) for f in subs])
    if isinstance(p, pr.Or):
        subs = [_compile_pred(q, var_order, eq_tol) for q in p.items]
        return lambda *rows: np.logical_or.reduce([f(*rows) for f in subs])
    lf = ex.compile_float(p.left, var_order)
    rf = ex.compile_float(p.right, var_order)
    op = p.op
    if op == "<=" or op == "<":
        return lambda *rows: lf(*rows) <= rf(*rows)
    if op == ">=" or op == ">":
        return lambda *rows: lf(*rows) >= rf(*rows)
    return lambda *rows: np.abs(lf(*rows) - rf(*rows)) <= eq_tol


def _equality_margins(p: pr.Pred, var_order: list[str]):
    """Compiled (left - right) margins of every equality atom in p."""
    out = []

    def walk(q):
        if isinstance(q, (pr.And, pr.Or)):
            for item in q.items:
                walk(item)
        elif q.op == "=":
            diff = ex.Bin("-", q.left, q.right)
            out.append(ex.compile_float(diff, var_order))

    walk(p)
    return out


class _CompiledMode:
    def __init__(self, mode, var_order, eq_tol):
        self.id = mode.id
        self.rhs = [ex.compile_float(mode.flow_map()[v], var_order) for v in var_order]
        self.invariant = (_compile_pred(pr.And(mode.invariants), var_order, eq_tol)
                          if mode.invariants else None)
        self.jumps = []
        for j in mode.jumps:
            reset_map = dict(j.resets)
            resets = [ex.compile_float(reset_map[v], var_order) if v in reset_map else None
                      for v in var_order]
            self.jumps.append((_compile_pred(j.guard, var_order, eq_tol), j.target, resets))


class _CompiledModel:
    def __init__(self, model: HybridModel, eq_tol: float = 1e-7):
        self.vars = model.state_vars()
        self.eq_tol = eq_tol
        self.modes = {m.id: _CompiledMode(m, self.vars, eq_tol) for m in model.modes}
        self.init_mode = model.init[0]
        self.init_assign = self._init_assignments(model)
        self.goal_mode = model.goal[0]
        self.goal = _compile_pred(model.goal[1], self.vars, eq_tol)
        self.goal_margins = _equality_margins(model.goal[1], self.vars)
        self.t_max = model.time_range().hi
        self.param = model.random_param()[0]

    def _init_assignments(self, model: HybridModel) -> dict[str, float]:
        out: dict[str, float] = {}

        def walk(q):
            if isinstance(q, pr.And):
                for item in q.items:
                    walk(item)
            elif isinstance(q, pr.Cmp) and q.op == "=" and isinstance(q.left, ex.Var):
                out[q.left.name] = ex.eval_float(q.right, {})

        walk(model.init[1])
        missing = [v for v in self.vars if v not in out and v != self.param]
        if missing:
            raise ValueError(
                f"simulation needs init equalities for {missing}; only the random "
                f"parameter {self.param!r} may start unpinned"
            )
        return out


_COMPILED_CACHE: "weakref.WeakKeyDictionary[HybridModel, _CompiledModel]" = None  # set below


def _compiled(model: HybridModel) -> _CompiledModel:
    global _COMPILED_CACHE
    if _COMPILED_CACHE is None:
        import weakref

        _COMPILED_CACHE = weakref.WeakKeyDictionary()
    cm = _COMPILED_CACHE.get(model)
    if cm is None:
        cm = _CompiledModel(model)
        _COMPILED_CACHE[model] = cm
    return cm


def _rk4(rhs, rows, h):
    k1 = [f(*rows) for f in rhs]
    mid1 = [y + 0.5 * h * k for y, k in zip(rows, k1)]
    k2 = [f(*mid1) for f in rhs]
    mid2 = [y + 0.5 * h * k for y, k in zip(rows, k2)]
    k3 = [f(*mid2) for f in rhs]
    end = [y + h * k for y, k in zip(rows, k3)]
    k4 = [f(*end) for f in rhs]
    return [y + (h / 6.0) * (a + 2.0 * b + 2.0 * c + d)
            for y, a, b, c, d in zip(rows, k1, k2, k3, k4)]


def _locate_flag(rhs, rows, flag_fn, h, iters=40):
    """Per-sample earliest time in (0, h] where flag_fn flips to True.

    Assumes a single switch inside the step (fixed-step caveat); h is a
    per-sample array of step lengths, rows the step-start states.
    """
    n = rows[0].shape[0]
    lo = np.zeros(n)
    hi = np.array(h, dtype=np.float64, copy=True)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        probe = _rk4_to(rhs, rows, mid)
        good = flag_fn(*probe)
        hi = np.where(good, mid, hi)
        lo = np.where(good, lo, mid)
    return hi


def _rk4_to(rhs, rows, t):
    """Single RK4 step of per-sample length t (arrays) from rows."""
    k1 = [f(*rows) for f in rhs]
    mid1 = [y + 0.5 * t * k for y, k in zip(rows, k1)]
    k2 = [f(*mid1) for f in rhs]
    mid2 = [y + 0.5 * t * k for y, k in zip(rows, k2)]
    k3 = [f(*mid2) for f in rhs]
    end = [y + t * k for y, k in zip(rows, k3)]
    k4 = [f(*end) for f in rhs]
    return [y + (t / 6.0) * (a + 2.0 * b + 2.0 * c + d)
            for y, a, b, c, d in zip(rows, k1, k2, k3, k4)]


def simulate_batch(model: HybridModel, r_values: np.ndarray, k: int, step: float) -> np.ndarray:
    """Boolean goal-reached flags for a vector of parameter values."""
    cm = _compiled(model)
    n = r_values.shape[0]
    rows = []
    for v in cm.vars:
        if v == cm.param:
            rows.append(np.array(r_values, dtype=np.float64, copy=True))
        else:
            rows.append(np.full(n, cm.init_assign[v]))
    mode = np.full(n, cm.init_mode, dtype=np.int64)
    jumps_used = np.zeros(n, dtype=np.int64)
    t_mode = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    reached = np.zeros(n, dtype=bool)

    max_iters = int((k + 1) * math.ceil(cm.t_max / step)) + 8

    for _ in range(max_iters):
        if not alive.any():
            break
        for mid in np.unique(mode[alive]):
            cmode = cm.modes[int(mid)]
            sel = alive & (mode == mid)
            idx = np.nonzero(sel)[0]
            cur = [row[idx] for row in rows]
            h = np.minimum(step, cm.t_max - t_mode[idx])
            nxt = _rk4_to(cmode.rhs, cur, h)

            # earliest event inside the step: goal hit or an enabling guard
            ev_time = np.full(idx.shape[0], np.inf)
            ev_kind = np.full(idx.shape[0], -1, dtype=np.int64)  # -2 goal, >=0 jump

            def consider(tcand, mask, kind):
                nonlocal ev_time, ev_kind
                better = mask & (tcand < ev_time)
                ev_time = np.where(better, tcand, ev_time)
                ev_kind = np.where(better, kind, ev_kind)

            if int(mid) == cm.goal_mode:
                # continuous equality atoms: localize each sign change
                for margin in cm.goal_margins:
                    m0 = margin(*cur)
                    m1 = margin(*nxt)
                    crossing = (np.sign(m0) != np.sign(m1)) & (h > 0)
                    if crossing.any():
                        tloc = _locate_flag(
                            cmode.rhs, cur,
                            lambda *s, _m=margin, _m0=m0: np.sign(_m(*s)) != np.sign(_m0),
                            h)
                        hit_state = _rk4_to(cmode.rhs, cur, tloc)
                        ok = cm.goal(*hit_state) & crossing
                        consider(tloc, ok, -2)
                # grid check: inequality-only goals and discrete equality atoms
                consider(h, cm.goal(*nxt), -2)

            can_jump = jumps_used[idx] < k
            for jnum, (guard, _tgt, _res) in enumerate(cmode.jumps):
                enabled = guard(*nxt) & ~guard(*cur) & can_jump & (h > 0)
                if enabled.any():
                    tj = _locate_flag(cmode.rhs, cur, guard, h)
                    consider(tj, enabled, jnum)

            hit = ev_kind == -2
            if hit.any():
                reached[idx[hit]] = True
                alive[idx[hit]] = False
            for jnum, (guard, tgt, resets) in enumerate(cmode.jumps):
                take = ev_kind == jnum
                if not take.any():
                    continue
                sub = [c[take] for c in cur]
                at = _rk4_to(cmode.rhs, sub, ev_time[take])
                new = [rf(*at) if rf is not None else at[i] for i, rf in enumerate(resets)]
                gidx = idx[take]
                for row, val in zip(rows, new):
                    row[gidx] = val
                mode[gidx] = tgt
                jumps_used[gidx] += 1
                t_mode[gidx] = 0.0
            quiet = ev_kind == -1
            if quiet.any():
                gidx = idx[quiet]
                for row, val in zip(rows, nxt):
                    row[gidx] = val[quiet]
                t_mode[gidx] += h[quiet]
                done = t_mode[gidx] >= cm.t_max - 1e-15
                alive[gidx[done]] = False
    return reached


def simulate(model: HybridModel, r: float, k: int, step: float) -> bool:
    """Goal reached within k jumps for one parameter value (non-validated)."""
    return bool(simulate_batch(model, np.array([float(r)]), k, step)[0])


def estimate(model: HybridModel, cfg: MCConfig) -> MCResult:
    """Chernoff-sized estimate of the reachability probability.

    Deterministic for a fixed seed: chunk i uses the Philox stream jumped i
    times, and chunk boundaries are fixed, so the result is independent of
    how chunks might be distributed over workers.
    """
    n = chernoff_size(cfg.zeta, cfg.confidence)
    if n > cfg.max_samples:
        raise SampleSizeError(n, cfg.max_samples)
    pname, spec = model.random_param()
    params = tuple(float(f) for f in spec.arg_fractions()) if spec.kind != "user" else ()
    if spec.kind == "user":
        raise UnsupportedDensity("sampling user-defined densities is not supported")

    successes = 0
    done = 0
    chunk_idx = 0
    base = np.random.Philox(key=cfg.seed)
    while done < n:
        m = min(_CHUNK, n - done)
        rng = np.random.Generator(base.jumped(chunk_idx))
        rs = draw_samples(spec.kind, params, m, rng)
        successes += int(simulate_batch(model, rs, cfg.k, cfg.sim_step).sum())
        done += m
        chunk_idx += 1
    p_hat = successes / n
    ci = Interval(max(0.0, p_hat - cfg.zeta), min(1.0, p_hat + cfg.zeta))
    return MCResult(p_hat=p_hat, ci=ci, n_used=n, successes=successes)
