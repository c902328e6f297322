"""Experiment registry: validated configs in, tables and verdicts out.

A config is a plain mapping (parsed from TOML by :mod:`ncmd.cli`) with
top-level ``id``, ``family``, ``seed`` and optional ``output``, a
``[params]`` table, and, depending on the family, ``[driver]``,
``[clock]`` and ``[[jumps]]`` blocks.  :data:`FAMILIES` holds one
:class:`FamilySpec` per family with its schema, a short description of
the statement it exercises, and its runner.
"""
from __future__ import annotations

import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from .convergence_lab import (
    WeakConvergenceCheck,
    binomial_tail_check,
    imm_scgf_check,
    imm_weak_check,
    levy_scgf_check,
    levy_weak_check,
    logistic_weak_check,
    poisson_scgf_check,
    poisson_weak_check,
    run_scgf_check,
    run_tail_decay,
    run_weak_convergence,
    skew_weak_check,
)
from .legendre import ConjugateProblem, ContractionProblem, conjugate, contract
from .levy_models import (
    BrownianWithDrift,
    CompoundPoisson,
    CumulantSpec,
    DeterministicDrift,
    GammaSubordinator,
    JumpMixture,
    LevyModel,
    PoissonSubordinator,
)
from .random_time import ScalingRegime
from .rate_functions import (
    LimitCumulant,
    SkewParams,
    binomial_poisson_rates,
    gaussian_md_rate,
    h_nu,
    imm_md_centered_1d,
    imm_md_explicit_cases,
    logistic_contraction_problem,
    logistic_log_ratios,
    skew_contraction_problem,
    skew_fiber,
    skew_map,
    skew_md_rate,
)

__all__ = [
    "ConfigError",
    "Field",
    "FamilySpec",
    "FAMILIES",
    "Table",
    "Verdict",
    "Outcome",
    "Config",
    "validate",
    "run_experiment",
    "template",
    "RATE_TOL",
]

RATE_TOL = 1e-4
ZERO_TOL = 1e-8
U64 = 2**64


class ConfigError(ValueError):
    """A config problem, tied to a dotted field path."""

    def __init__(self, path, message, line=None):
        self.path = path
        self.message = message
        self.line = line
        super().__init__(self.describe())

    def describe(self):
        where = f"line {self.line}: " if self.line else ""
        return f"{where}{self.path}: {self.message}"


# ------------------------------------------------------------- field kinds


def _num(path, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError(path, "must be finite")
    return v


def _open_unit(path, v, name="value"):
    v = _num(path, v)
    if not 0.0 < v < 1.0:
        raise ConfigError(path, f"constraint {name} in (0, 1) violated, got {v}")
    return v


def _positive(path, v):
    v = _num(path, v)
    if not v > 0:
        raise ConfigError(path, f"must be > 0, got {v}")
    return v


def _count(path, v):
    if isinstance(v, float) and v.is_integer():
        v = int(v)
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise ConfigError(path, f"expected a positive integer, got {v!r}")
    return v


def _vector(path, v):
    if not isinstance(v, list) or not v:
        raise ConfigError(path, "expected a nonempty array of numbers")
    return np.array([_num(f"{path}[{i}]", x) for i, x in enumerate(v)])


def _matrix(path, v):
    if not isinstance(v, list) or not v or not all(isinstance(r, list) for r in v):
        raise ConfigError(path, "expected a square array of arrays")
    M = np.array([[_num(f"{path}[{i}][{j}]", x) for j, x in enumerate(r)] for i, r in enumerate(v)]) \
        if all(len(r) == len(v) for r in v) else None
    if M is None:
        raise ConfigError(path, "matrix must be square")
    if not np.allclose(M, M.T):
        raise ConfigError(path, "matrix must be symmetric")
    if np.linalg.eigvalsh(M).min() < -1e-12:
        raise ConfigError(path, "matrix must be positive semidefinite")
    return M


def _points(path, v):
    """A 1-D grid (array or {start, stop, num}) or an array of vectors; always 2-D."""
    if isinstance(v, dict):
        extra = set(v) - {"start", "stop", "num"}
        if extra or len(v) != 3:
            raise ConfigError(path, "range tables need exactly start, stop, num")
        lo, hi = _num(f"{path}.start", v["start"]), _num(f"{path}.stop", v["stop"])
        num = _count(f"{path}.num", v["num"])
        return np.linspace(lo, hi, num)[:, None]
    if not isinstance(v, list) or not v:
        raise ConfigError(path, "expected a nonempty array or a {start, stop, num} table")
    if all(isinstance(r, list) for r in v):
        rows = [_vector(f"{path}[{i}]", r) for i, r in enumerate(v)]
        if len({r.size for r in rows}) != 1:
            raise ConfigError(path, "all points must have the same length")
        return np.array(rows)
    return _vector(path, v)[:, None]


def _horizons(path, v):
    h = _vector(path, v)
    if np.any(h <= 0) or np.any(np.diff(h) <= 0):
        raise ConfigError(path, "horizons must be positive and strictly increasing")
    return h.tolist()


def _delta(path, v):
    d = _vector(path, v)
    if np.any(np.abs(d) >= 1):
        raise ConfigError(path, "constraint delta_j in (-1, 1) violated")
    return d


def _choice(*options):
    def check(path, v):
        if v not in options:
            raise ConfigError(path, f"must be one of {', '.join(options)}; got {v!r}")
        return v

    return check


def _box(path, v):
    b = _vector(path, v)
    if b.size != 2 or not b[0] < b[1]:
        raise ConfigError(path, "box must be [lo, hi] with lo < hi")
    return (float(b[0]), float(b[1]))


KINDS: dict[str, tuple[str, Callable]] = {
    "nu": ("real in (0, 1)", lambda p, v: _open_unit(p, v, "nu")),
    "prob": ("real in (0, 1)", lambda p, v: _open_unit(p, v, "p")),
    "beta": ("real in (0, 1)", lambda p, v: _open_unit(p, v, "beta")),
    "positive": ("real > 0", _positive),
    "real": ("real", _num),
    "count": ("integer >= 1", _count),
    "vector": ("array of reals", _vector),
    "matrix": ("symmetric PSD matrix", _matrix),
    "points": ("array of reals, array of vectors, or {start, stop, num}", _points),
    "horizons": ("increasing array of positive reals", _horizons),
    "delta": ("array of reals in (-1, 1)", _delta),
    "map": ("'logistic' or 'skew'", _choice("logistic", "skew")),
    "box": ("[lo, hi]", _box),
}


@dataclass(frozen=True)
class Field:
    name: str
    kind: str
    required: bool = True
    default: Any = None
    doc: str = ""

    @property
    def constraint(self):
        return KINDS[self.kind][0]


# ----------------------------------------------------------- model blocks


def _block_keys(path, block, allowed):
    extra = sorted(set(block) - set(allowed))
    if extra:
        raise ConfigError(f"{path}.{extra[0]}", "unknown key")


def _parse_jumps(path, items):
    if not isinstance(items, list) or not items or not all(isinstance(j, dict) for j in items):
        raise ConfigError(path, "expected one or more [[jumps]] tables")
    w, means, covs = [], [], []
    for i, j in enumerate(items):
        p = f"{path}[{i}]"
        _block_keys(p, j, ("weight", "mean", "cov"))
        if "mean" not in j:
            raise ConfigError(f"{p}.mean", "required")
        m = _vector(f"{p}.mean", j["mean"])
        c = _matrix(f"{p}.cov", j["cov"]) if "cov" in j else np.zeros((m.size, m.size))
        if c.shape != (m.size, m.size):
            raise ConfigError(f"{p}.cov", "shape must match mean")
        w.append(_positive(f"{p}.weight", j.get("weight", 1.0)))
        means.append(m)
        covs.append(c)
    if len({m.size for m in means}) != 1:
        raise ConfigError(path, "all jumps must have the same dimension")
    w = np.array(w)
    try:
        return JumpMixture(w / w.sum(), np.array(means), np.array(covs))
    except ValueError as e:
        raise ConfigError(path, str(e)) from None


def _parse_driver(block):
    path = "driver"
    if not isinstance(block, dict):
        raise ConfigError(path, "expected a [driver] table")
    kind = _choice("brownian", "drift", "compound_poisson")(f"{path}.type", block.get("type"))
    if kind == "brownian":
        _block_keys(path, block, ("type", "mu", "sigma"))
        if "sigma" not in block:
            raise ConfigError(f"{path}.sigma", "required for a brownian driver")
        sigma = _matrix(f"{path}.sigma", block["sigma"])
        mu = _vector(f"{path}.mu", block["mu"]) if "mu" in block else np.zeros(sigma.shape[0])
        if mu.size != sigma.shape[0]:
            raise ConfigError(f"{path}.mu", "length must match sigma")
        return BrownianWithDrift(mu, sigma)
    if kind == "drift":
        _block_keys(path, block, ("type", "mu"))
        if "mu" not in block:
            raise ConfigError(f"{path}.mu", "required for a drift driver")
        return DeterministicDrift(_vector(f"{path}.mu", block["mu"]))
    _block_keys(path, block, ("type", "rate", "jumps"))
    rate = _positive(f"{path}.rate", block.get("rate"))
    return CompoundPoisson(rate, _parse_jumps(f"{path}.jumps", block.get("jumps")))


def _parse_clock(block):
    path = "clock"
    if not isinstance(block, dict):
        raise ConfigError(path, "expected a [clock] table")
    kind = _choice("gamma", "poisson")(f"{path}.type", block.get("type"))
    if kind == "gamma":
        _block_keys(path, block, ("type", "shape", "rate"))
        return GammaSubordinator(_positive(f"{path}.shape", block.get("shape")),
                                 _positive(f"{path}.rate", block.get("rate")))
    _block_keys(path, block, ("type", "rate"))
    return PoissonSubordinator(_positive(f"{path}.rate", block.get("rate")))


BLOCK_PARSERS = {"driver": _parse_driver, "clock": _parse_clock,
                 "jumps": lambda b: _parse_jumps("jumps", b)}


# ------------------------------------------------------------------ outputs


@dataclass
class Table:
    name: str
    columns: list
    rows: list = field(default_factory=list)


@dataclass
class Verdict:
    name: str
    passed: bool
    table: str
    detail: str = ""

    @property
    def status(self):
        return "PASS" if self.passed else "FAIL"


@dataclass
class Outcome:
    tables: list = field(default_factory=list)
    verdicts: list = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    def add(self, table: Table, *verdicts: Verdict):
        self.tables.append(table)
        self.verdicts.extend(verdicts)


@dataclass
class Config:
    id: str
    family: str
    seed: int
    params: dict
    blocks: dict
    output: Optional[str] = None
    raw: dict = field(default_factory=dict)


@dataclass(frozen=True)
class FamilySpec:
    id: str
    summary: str
    anchor: str
    params: tuple
    blocks: tuple
    runner: Callable
    example: dict


# ----------------------------------------------------------------- helpers


def _pool_map(fn, items, threads):
    items = list(items)
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _child_seed(seed, key):
    return int(np.random.SeedSequence(seed, spawn_key=(key,)).generate_state(1)[0])


def _xcols(dim, name="x"):
    return [name] if dim == 1 else [f"{name}{i + 1}" for i in range(dim)]


def _match(a, b, tol=RATE_TOL):
    if math.isinf(a) or math.isinf(b):
        return math.isinf(a) and math.isinf(b)
    return abs(a - b) <= tol


def _diff(a, b):
    if math.isinf(a) and math.isinf(b):
        return 0.0
    return abs(a - b)


def _check_dim(path, pts, dim):
    if pts.shape[1] != dim:
        raise ConfigError(path, f"points must have dimension {dim}, got {pts.shape[1]}")


def cumulant_rate(kappa: CumulantSpec, x):
    """Numeric conjugate of a cumulant (used as an inner rate)."""
    return conjugate(ConjugateProblem(kappa, x, grad=kappa.grad, hess=kappa.hess, restarts=0)).value


def rate_table(name, lc: LimitCumulant, pts, closed, threads, tol=RATE_TOL):
    """closed form (or None) next to the numeric conjugate on every grid point."""
    numeric = _pool_map(lambda x: lc.rate(x), pts, threads)
    t = Table(name, _xcols(pts.shape[1]) + ["closed_form", "numeric_conjugate", "abs_diff"])
    ok = True
    compared = 0
    for x, num in zip(pts, numeric):
        cf = closed(x) if closed is not None else None
        if cf is None:
            t.rows.append([*x, "", num, ""])
            continue
        compared += 1
        ok &= _match(cf, num, tol)
        t.rows.append([*x, cf, num, _diff(cf, num)])
    verdicts = []
    if compared:
        verdicts.append(Verdict(f"{name}: closed form = numeric conjugate", ok, name,
                                f"{compared} points, tolerance {tol:g}"))
    return t, verdicts, numeric


def scgf_table(name, check):
    rep = run_scgf_check(check)
    dim = check.grid.shape[1]
    t = Table(name, ["horizon"] + _xcols(dim, "theta") + ["prelimit", "limit", "abs_err"],
              [list(r) for r in rep.rows])
    detail = (f"errors {[float(f'{e:.3e}') for e in rep.errors]}, tolerance {rep.tolerance:g}"
              + (f"; {rep.note}" if rep.note else ""))
    return t, Verdict(f"{name}: prelimit -> limit", rep.passed, name, detail), rep


def weak_table(name, check: WeakConvergenceCheck, seed):
    rep = run_weak_convergence(check, seed)
    dim = check.grid.shape[1]
    t = Table(name, _xcols(dim, "theta") + ["empirical_mgf", "se", "target_mgf", "z"],
              [list(r) for r in rep.rows])
    zmax = max(abs(z) for z in rep.z)
    return t, Verdict(f"{name}: |z| <= {check.multiplier:g}", rep.passed, name,
                      f"max |z| = {zmax:.3f}, n = {check.n}")


def tail_table(name, check):
    rep = run_tail_decay(check)
    t = Table(name, ["n", "log_prob", "d_n", "target", "abs_err"], [list(r) for r in rep.rows])
    return t, Verdict(f"{name}: (1/v_n) log P -> -inf I", rep.passed, name,
                      f"final |d_n - target| = {rep.rows[-1][-1]:.3e}, tolerance {check.tolerance:g}"
                      + (f"; {rep.note}" if rep.note else ""))


def _jump_is_unit_point(J: JumpMixture):
    return J.dim == 1 and J.weights.size == 1 and J.means[0, 0] == 1.0 and not np.any(J.covs)


def _centered_1d_brownian(levy: LevyModel):
    return isinstance(levy, BrownianWithDrift) and levy.dim == 1 and not np.any(levy.mu)


# ------------------------------------------------------------------ runners


def _run_imm_ld(cfg: Config, ctx):
    P, levy = cfg.params, cfg.blocks["driver"]
    nu = P["nu"]
    lc = LimitCumulant.imm_ld(levy.cumulant, nu)
    _check_dim("params.x", P["x"], levy.dim)
    closed = None
    if _centered_1d_brownian(levy):
        q = float(levy.sigma[0, 0])
        closed = lambda x: imm_md_centered_1d(x[0], q, nu)  # noqa: E731
    elif isinstance(levy, DeterministicDrift) and levy.dim == 1:
        m = float(levy.mu[0])
        closed = lambda x: h_nu(x[0], m, nu)  # noqa: E731
    out = Outcome()
    t, v, _ = rate_table("rate", lc, P["x"], closed, ctx.threads)
    out.add(t, *v)
    _check_dim("params.theta", P["theta"], levy.dim)
    chk = imm_scgf_check(levy.cumulant, nu, ScalingRegime("inverse"), P["theta"], P["horizons"],
                         tolerance=P["tolerance"])
    t, v, _ = scgf_table("scgf", chk)
    out.add(t, v)
    return out


def _run_imm_weak(cfg: Config, ctx):
    P, levy = cfg.params, cfg.blocks["driver"]
    _check_dim("params.theta", P["theta"], levy.dim)
    chk = imm_weak_check(levy, P["nu"], P["t"], P["theta"], P["n"], ctx.threads)
    out = Outcome()
    t, v = weak_table("mgf", chk, _child_seed(cfg.seed, 0))
    out.add(t, v)
    return out


def _run_imm_md(cfg: Config, ctx):
    P, levy = cfg.params, cfg.blocks["driver"]
    nu = P["nu"]
    try:
        lc = LimitCumulant.imm_md(levy.cumulant, nu)
    except ValueError as e:
        raise ConfigError("driver", str(e)) from None
    _check_dim("params.x", P["x"], levy.dim)
    m = levy.cumulant.grad0
    closed = None
    if levy.dim == 1 and not np.any(m):
        q = float(levy.cumulant.hess0[0, 0])
        closed = lambda x: imm_md_centered_1d(x[0], q, nu)  # noqa: E731
    elif np.any(m):
        def closed(x):
            val, tag, _ = imm_md_explicit_cases(x, m, nu)
            return None if tag == "none" else val
    out = Outcome()
    t, v, _ = rate_table("rate", lc, P["x"], closed, ctx.threads)
    out.add(t, *v)
    _check_dim("params.theta", P["theta"], levy.dim)
    chk = imm_scgf_check(levy.cumulant, nu, ScalingRegime("power", P["beta"]), P["theta"],
                         P["horizons"], tolerance=P["tolerance"],
                         note="slow nu-dependent convergence; tolerance set from the schedule")
    t, v, _ = scgf_table("scgf", chk)
    out.add(t, v)
    return out


def _run_imm_explicit(cfg: Config, ctx):
    P = cfg.params
    m, nu, pts = P["m"], P["nu"], P["x"]
    if not np.any(m):
        raise ConfigError("params.m", "must be nonzero")
    _check_dim("params.x", pts, m.size)
    lc = LimitCumulant.imm_md_drift(m, nu)
    numeric = _pool_map(lambda x: lc.rate(x), pts, ctx.threads)
    t = Table("cases", _xcols(m.size) + ["case", "c", "closed_form", "numeric_conjugate", "abs_diff"])
    ok = True
    for x, num in zip(pts, numeric):
        val, tag, c = imm_md_explicit_cases(x, m, nu)
        ok &= _match(val, num)
        t.rows.append([*x, tag, "" if c is None else c, val, num, _diff(val, num)])
    out = Outcome()
    out.add(t, Verdict("cases: closed form and +inf classification = numeric conjugate", ok,
                       "cases", f"{len(pts)} points, tolerance {RATE_TOL:g}"))
    return out


def _levy_ld_closed(levy, clock):
    if _centered_1d_brownian(levy) and isinstance(clock, GammaSubordinator):
        k, b, s = clock.shape, clock.rate, math.sqrt(levy.sigma[0, 0])

        def closed(x):
            y = x[0] / s
            if y == 0:
                return 0.0
            th = (-k + math.sqrt(k * k + 2 * b * y * y)) / y
            return th * y + k * math.log1p(-th * th / (2 * b))

        return closed
    if isinstance(levy, DeterministicDrift) and levy.dim == 1 and isinstance(clock, PoissonSubordinator):
        mu, r = float(levy.mu[0]), clock.rate

        def closed(x):
            y = x[0] / mu
            if y < 0:
                return math.inf
            return (y * math.log(y / r) if y > 0 else 0.0) - y + r

        return closed
    return None


def _levy_md_closed(levy, clock):
    c = clock.mean_rate
    if isinstance(levy, BrownianWithDrift) and np.linalg.matrix_rank(levy.sigma) == levy.dim:
        return lambda x: gaussian_md_rate(x - c * levy.mu, c * levy.sigma)
    if isinstance(levy, DeterministicDrift):
        return lambda x: 0.0 if np.allclose(x, c * levy.mu, atol=1e-12) else math.inf
    return None


def _run_levy_ld(cfg: Config, ctx):
    P, levy, clock = cfg.params, cfg.blocks["driver"], cfg.blocks["clock"]
    lc = LimitCumulant.levy_ld(levy.cumulant, clock)
    _check_dim("params.x", P["x"], levy.dim)
    out = Outcome()
    t, v, _ = rate_table("rate", lc, P["x"], _levy_ld_closed(levy, clock), ctx.threads)
    out.add(t, *v)
    _check_dim("params.theta", P["theta"], levy.dim)
    chk = levy_scgf_check(levy.cumulant, clock, ScalingRegime("inverse"), P["theta"], P["horizons"],
                          tolerance=P["tolerance"])
    t, v, _ = scgf_table("scgf", chk)
    out.add(t, v)
    return out


def _run_levy_weak(cfg: Config, ctx):
    P, levy, clock = cfg.params, cfg.blocks["driver"], cfg.blocks["clock"]
    _check_dim("params.theta", P["theta"], levy.dim)
    chk = levy_weak_check(levy, clock, P["t"], P["theta"], P["n"], ctx.threads)
    out = Outcome()
    t, v = weak_table("mgf", chk, _child_seed(cfg.seed, 0))
    out.add(t, v)
    return out


def _run_levy_md(cfg: Config, ctx):
    P, levy, clock = cfg.params, cfg.blocks["driver"], cfg.blocks["clock"]
    lc = LimitCumulant.levy_md(levy.cumulant, clock)
    _check_dim("params.x", P["x"], levy.dim)
    out = Outcome()
    t, v, _ = rate_table("rate", lc, P["x"], _levy_md_closed(levy, clock), ctx.threads)
    out.add(t, *v)
    _check_dim("params.theta", P["theta"], levy.dim)
    chk = levy_scgf_check(levy.cumulant, clock, ScalingRegime("power", P["beta"]), P["theta"],
                          P["horizons"], tolerance=P["tolerance"])
    t, v, _ = scgf_table("scgf", chk)
    out.add(t, v)
    return out


def _inequality_table(name, xs, x0, ld, md, larger):
    """Rows x, I_LD, I_MD, diff = I_larger - I_smaller; verdicts on sign and common zero."""
    t = Table(name, ["x", "I_LD", "I_MD", "diff"])
    sign_ok, zero_ok, unique_ok = True, True, True
    for x, a, b in zip(xs, ld, md):
        big, small = (b, a) if larger == "MD" else (a, b)
        d = 0.0 if math.isinf(big) and math.isinf(small) else big - small
        t.rows.append([x, a, b, d])
        sign_ok &= d >= -ZERO_TOL
        if abs(x - x0) <= 1e-12:
            zero_ok &= a <= ZERO_TOL and b <= ZERO_TOL
        elif abs(x - x0) > 1e-6:
            unique_ok &= a > 0 and b > 0
    other = "LD" if larger == "MD" else "MD"
    return t, [
        Verdict(f"{name}: I_{larger} >= I_{other}", sign_ok, name, f"{len(xs)} points"),
        Verdict(f"{name}: common unique zero at x = {x0:g}", zero_ok and unique_ok, name,
                f"both rates <= {ZERO_TOL:g} at the zero and positive elsewhere"),
    ]


def _run_levy_inequality(cfg: Config, ctx):
    P, levy, clock = cfg.params, cfg.blocks["driver"], cfg.blocks["clock"]
    if levy.dim != 1:
        raise ConfigError("driver", "the inequality table is one-dimensional")
    x0 = float(clock.mean_rate * levy.cumulant.grad0[0])
    xs = sorted(set(P["x"][:, 0].tolist()) | {x0})
    ld = LimitCumulant.levy_ld(levy.cumulant, clock)
    md = LimitCumulant.levy_md(levy.cumulant, clock)
    I_ld = _pool_map(lambda x: ld.rate([x]), xs, ctx.threads)
    I_md = _pool_map(lambda x: md.rate([x]), xs, ctx.threads)
    out = Outcome()
    t, v = _inequality_table("inequality", xs, x0, I_ld, I_md, "MD")
    out.add(t, *v)
    return out


def _run_poisson_ld(cfg: Config, ctx):
    P, J = cfg.params, cfg.blocks["jumps"]
    p = P["p"]
    lc = LimitCumulant.poisson_ld(J, p)
    _check_dim("params.x", P["x"], J.dim)
    closed = (lambda x: binomial_poisson_rates(x[0], p)[0]) if _jump_is_unit_point(J) else None
    out = Outcome()
    t, v, _ = rate_table("rate", lc, P["x"], closed, ctx.threads)
    out.add(t, *v)
    if "tail_c" in P:
        if not _jump_is_unit_point(J):
            raise ConfigError("params.tail_c", "tail checks need a unit point-mass jump")
        chk = binomial_tail_check(p, P["tail_c"], [int(n) for n in P["tail_horizons"]], "ld",
                                  tolerance=P["tail_tolerance"])
        t, v = tail_table("tail", chk)
        out.add(t, v)
    return out


def _run_poisson_weak(cfg: Config, ctx):
    P, J = cfg.params, cfg.blocks["jumps"]
    _check_dim("params.theta", P["theta"], J.dim)
    if P["lam"] >= P["n_summands"]:
        raise ConfigError("params.n_summands", "must exceed lam so that lam/n is a probability")
    chk = poisson_weak_check(J, P["lam"], P["n_summands"], P["theta"], P["n"], ctx.threads)
    out = Outcome()
    t, v = weak_table("mgf", chk, _child_seed(cfg.seed, 0))
    out.add(t, v)
    return out


def _run_poisson_md(cfg: Config, ctx):
    P, J = cfg.params, cfg.blocks["jumps"]
    lam = P["lam"]
    lc = LimitCumulant.poisson_md(J, lam)
    _check_dim("params.x", P["x"], J.dim)
    closed = (lambda x: binomial_poisson_rates(x[0], lam)[1]) if _jump_is_unit_point(J) and lam < 1 \
        else None
    out = Outcome()
    t, v, _ = rate_table("rate", lc, P["x"], closed, ctx.threads)
    out.add(t, *v)
    _check_dim("params.theta", P["theta"], J.dim)
    chk = poisson_scgf_check(J, lam, P["beta"], P["theta"], P["horizons"], tolerance=P["tolerance"],
                             note="p_n = lam/(n a_n); gap ~ lam^2 (G-1)^2 / (2 n a_n)")
    t, v, _ = scgf_table("scgf", chk)
    out.add(t, v)
    if "tail_c" in P:
        if not (_jump_is_unit_point(J) and lam < 1):
            raise ConfigError("params.tail_c", "tail checks need a unit point-mass jump and lam < 1")
        chk = binomial_tail_check(lam, P["tail_c"], [int(n) for n in P["tail_horizons"]], "md",
                                  beta=P["beta"], tolerance=P["tail_tolerance"])
        t, v = tail_table("tail", chk)
        out.add(t, v)
    return out


def _run_poisson_inequality(cfg: Config, ctx):
    P = cfg.params
    p = P["p"]
    xs = P["x"][:, 0].tolist()
    rates = [binomial_poisson_rates(x, p) for x in xs]
    out = Outcome()
    t, v = _inequality_table("inequality", xs, p, [r[0] for r in rates], [r[1] for r in rates], "LD")
    out.add(t, *v)
    # the difference on [0, 1] is smallest at x = p
    inside = [(r[3], r[0]) for r in t.rows if 0.0 <= r[0] <= 1.0]
    dmin, xmin = min(inside)
    step = max(np.diff(sorted(xs)).max(initial=0.0), 0.0)
    ok = abs(xmin - p) <= step / 2 + 1e-12 and (abs(xmin - p) > 1e-12 or abs(dmin) <= 1e-9)
    out.verdicts.append(Verdict("inequality: I_LD - I_MD minimal at x = p on [0, 1]", ok, "inequality",
                                f"min diff {dmin:.3e} at x = {xmin:g}"))
    return out


def _law_cumulant(levy: LevyModel):
    return levy.cumulant


def _contraction_closed(kind, levy, delta):
    """Closed-form contracted rate when the summand law is Gaussian."""
    if not isinstance(levy, BrownianWithDrift):
        return None
    mu, S = levy.mu, levy.sigma
    if kind == "logistic":
        def closed(y):
            x = logistic_log_ratios(y)
            return math.inf if x is None else gaussian_md_rate(x - mu, S)

        return closed
    h = S.shape[0]
    if np.any(mu) or not np.allclose(S[-1, :-1], 0) or not math.isclose(S[-1, -1], 1.0):
        return None
    params = SkewParams(S[:-1, :-1], delta)
    assert params.h == h
    return lambda y: skew_md_rate(y, params).value


def _contraction_problem(kind, y, inner, h, delta, box):
    if kind == "logistic":
        return logistic_contraction_problem(y, inner, h, box=box)
    return ContractionProblem(inner_rate=inner, U=lambda x: skew_map(x, delta), y=y, h=h,
                              parametrization=skew_fiber(y, delta), param_dim=1, box=box)


def _contraction_rows(name, kind, pts, inner, h, delta, box, closed, threads):
    vals = _pool_map(lambda y: contract(_contraction_problem(kind, y, inner, h, delta, box)).value,
                     pts, threads)
    t = Table(name, _xcols(pts.shape[1], "y") + ["closed_form", "contraction", "abs_diff"])
    ok, compared = True, 0
    for y, v in zip(pts, vals):
        cf = closed(y) if closed is not None else None
        if cf is None:
            t.rows.append([*y, "", v, ""])
            continue
        compared += 1
        ok &= _match(cf, v)
        t.rows.append([*y, cf, v, _diff(cf, v)])
    verdicts = []
    if compared:
        verdicts.append(Verdict(f"{name}: closed form = contraction", ok, name,
                                f"{compared} points, tolerance {RATE_TOL:g}"))
    return t, verdicts


def _map_setup(P, h):
    kind = P["map"]
    delta = None
    if kind == "skew":
        if "delta" not in P:
            raise ConfigError("params.delta", "required for the skew map")
        delta = P["delta"]
        if delta.size != h - 1:
            raise ConfigError("params.delta", f"length must be h - 1 = {h - 1}")
        dim_y = h - 1
    else:
        dim_y = h + 1
    return kind, delta, dim_y


def _run_contraction_ld(cfg: Config, ctx):
    P, levy = cfg.params, cfg.blocks["driver"]
    h = levy.dim
    kind, delta, dim_y = _map_setup(P, h)
    _check_dim("params.y", P["y"], dim_y)
    kappa = _law_cumulant(levy)
    inner = lambda x: cumulant_rate(kappa, x)  # noqa: E731
    out = Outcome()
    t, v = _contraction_rows("rate", kind, P["y"], inner, h, delta, P["box"],
                             _contraction_closed(kind, levy, delta), ctx.threads)
    out.add(t, *v)
    return out


def _run_contraction_weak(cfg: Config, ctx):
    P = cfg.params
    kind = P["map"]
    if kind == "skew":
        if "delta" not in P:
            raise ConfigError("params.delta", "required for the skew map")
        _check_dim("params.theta", P["theta"], P["delta"].size)
        chk = skew_weak_check(P["delta"], P["theta"], P["n_summands"], P["n"], ctx.threads)
    else:
        h = P["h"]
        _check_dim("params.theta", P["theta"], h + 1)
        chk = logistic_weak_check(h, P["theta"], P["n_summands"], P["n"], ctx.threads)
    out = Outcome()
    t, v = weak_table("mgf", chk, _child_seed(cfg.seed, 0))
    out.add(t, v)
    return out


def _run_contraction_md(cfg: Config, ctx):
    P = cfg.params
    H = P["H"]
    h = H.shape[0]
    if np.linalg.matrix_rank(H) < h:
        raise ConfigError("params.H", "must be positive definite")
    kind, delta, dim_y = _map_setup(P, h)
    _check_dim("params.y", P["y"], dim_y)
    lc = LimitCumulant.gauss_md(H)
    inner = lambda x: lc.rate(x)  # noqa: E731
    gauss = BrownianWithDrift(np.zeros(h), H)
    out = Outcome()
    t, v = _contraction_rows("rate", kind, P["y"], inner, h, delta, P["box"],
                             _contraction_closed(kind, gauss, delta), ctx.threads)
    out.add(t, *v)
    return out


def _run_logistic_example(cfg: Config, ctx):
    P = cfg.params
    H = P["H"]
    h = H.shape[0]
    if np.linalg.matrix_rank(H) < h:
        raise ConfigError("params.H", "must be positive definite")
    _check_dim("params.y", P["y"], h + 1)
    inner = lambda x: gaussian_md_rate(x, H)  # noqa: E731
    closed = _contraction_closed("logistic", BrownianWithDrift(np.zeros(h), H), None)
    out = Outcome()
    t, v = _contraction_rows("rate", "logistic", P["y"], inner, h, None, P["box"], closed,
                             ctx.threads)
    out.add(t, *v)
    return out


def _run_skew_example(cfg: Config, ctx):
    P = cfg.params
    try:
        params = SkewParams(P["psi"], P["delta"])
    except ValueError as e:
        raise ConfigError("params.psi", str(e)) from None
    pts = P["y"]
    _check_dim("params.y", pts, params.h - 1)
    inner = lambda x: gaussian_md_rate(x, params.hessian)  # noqa: E731
    vals = _pool_map(lambda y: contract(skew_contraction_problem(y, params, inner, box=P["box"])).value,
                     pts, ctx.threads)
    cols = _xcols(pts.shape[1], "y") + ["I_MD", "branch", "x_hat", "contraction", "abs_diff", "gaussian"]
    t = Table("rate", cols)
    ok = True
    gauss_ok = True
    for y, v in zip(pts, vals):
        r = skew_md_rate(y, params)
        g = 0.5 * float(y @ np.linalg.solve(params.psi, y))
        ok &= _match(r.value, v)
        if not np.any(params.delta):
            gauss_ok &= abs(r.value - g) <= 1e-12
        t.rows.append([*y, r.value, r.branch, r.x_hat, v, _diff(r.value, v), g])
    out = Outcome()
    out.add(t, Verdict("rate: closed form = contraction", ok, "rate",
                       f"{len(pts)} points, tolerance {RATE_TOL:g}"))
    if not np.any(params.delta):
        out.verdicts.append(Verdict("rate: delta = 0 gives the Gaussian quadratic", gauss_ok, "rate"))
    return out


# ---------------------------------------------------------------- registry

_THETA = Field("theta", "points", doc="MGF / SCGF test points")
_X = Field("x", "points", doc="rate-function grid")
_HOR = Field("horizons", "horizons", doc="increasing t or n schedule")
_TOL = Field("tolerance", "positive", False, 1e-3, "final-horizon tolerance")
_NU = Field("nu", "nu", doc="stability index")
_N = Field("n", "count", False, 100_000, "Monte Carlo draws")
_T = Field("t", "positive", doc="time horizon")
_BOX = Field("box", "box", False, [-10.0, 10.0], "fiber search box")
_TAIL = (
    Field("tail_c", "real", False, None, "tail threshold c of {B_n >= c}"),
    Field("tail_horizons", "horizons", False, [500.0, 1000.0, 2000.0], "tail horizons n"),
    Field("tail_tolerance", "positive", False, 1e-2, "tail tolerance"),
)

_BM1 = {"type": "brownian", "mu": [0.0], "sigma": [[1.0]]}
_UNIT_JUMP = [{"weight": 1.0, "mean": [1.0]}]

FAMILIES: dict[str, FamilySpec] = {}


def _register(fid, summary, anchor, params, blocks, runner, example):
    FAMILIES[fid] = FamilySpec(fid, summary, anchor, tuple(params), tuple(blocks), runner, example)


_register(
    "imm-ld", "reference LDP of S(L_nu(t))/t, rate (f_nu o kappa_S)*",
    "satisfies the LDP with speed $t$",
    [_NU, _X, _THETA, _HOR, _TOL], ["driver"], _run_imm_ld,
    {"params": {"nu": 0.5, "x": {"start": -2.0, "stop": 2.0, "num": 9},
                "theta": [-1.0, -0.5, 0.5, 1.0], "horizons": [1e2, 1e4, 1e6]},
     "driver": _BM1},
)
_register(
    "imm-weak", "weak limit of t^alpha(nu) S(L_nu(t))/t via MGFs",
    "$t^{\\alpha(\\nu)}\\frac{S(L_\\nu(t))}{t}$",
    [_NU, _T, _THETA, _N], ["driver"], _run_imm_weak,
    {"params": {"nu": 0.5, "t": 1e4, "theta": [-1.0, -0.5, 0.0, 0.5, 1.0], "n": 100_000},
     "driver": _BM1},
)
_register(
    "imm-md", "noncentral moderate deviations for the inverse-stable time change",
    "with speed $1/a_t$",
    [_NU, Field("beta", "beta", doc="a_t = t^-beta"), _X, _THETA, _HOR,
     Field("tolerance", "positive", False, 2e-2, "schedule-calibrated tolerance")],
    ["driver"], _run_imm_md,
    {"params": {"nu": 0.5, "beta": 0.5, "x": {"start": -2.0, "stop": 2.0, "num": 9},
                "theta": [-1.0, -0.5, 0.5, 1.0], "horizons": [1e4, 1e6, 1e8]},
     "driver": _BM1},
)
_register(
    "imm-explicit-cases", "explicit cases (i)-(iii) of the drifted moderate-deviation rate",
    "Then we have the following cases",
    [Field("m", "vector", doc="drift grad kappa_S(0)"), _NU, _X], [], _run_imm_explicit,
    {"params": {"m": [2.0, 1.0], "nu": 0.5,
                "x": [[0.0, 0.0], [1.0, 0.5], [2.0, 1.0], [-1.0, 0.5], [1.0, -0.5], [1.0, 1.0]]}},
)
_register(
    "levy-ld", "reference LDP of S(V(t))/t, rate (kappa_V o kappa_S)*",
    "$\\kappa_V(\\kappa_S(\\theta))$",
    [_X, _THETA, _HOR, _TOL], ["driver", "clock"], _run_levy_ld,
    {"params": {"x": {"start": -2.0, "stop": 2.0, "num": 9}, "theta": [-0.8, -0.4, 0.4, 0.8],
                "horizons": [1e2, 1e4, 1e6]},
     "driver": _BM1, "clock": {"type": "gamma", "shape": 1.0, "rate": 1.0}},
)
_register(
    "levy-weak", "weak limit S(V(t)/t) -> S(kappa_V'(0)) via MGFs",
    "converges weakly to $S(\\kappa_V^\\prime(0))$",
    [_T, _THETA, _N], ["driver", "clock"], _run_levy_weak,
    {"params": {"t": 1e4, "theta": [-1.0, -0.5, 0.0, 0.5, 1.0], "n": 100_000},
     "driver": _BM1, "clock": {"type": "poisson", "rate": 1.0}},
)
_register(
    "levy-md", "moderate deviations for the subordinated Levy process",
    "$\\kappa_V^\\prime(0)\\kappa_S(\\theta)$",
    [Field("beta", "beta", doc="a_t = t^-beta"), _X, _THETA, _HOR, _TOL], ["driver", "clock"],
    _run_levy_md,
    {"params": {"beta": 0.5, "x": {"start": -2.0, "stop": 2.0, "num": 9},
                "theta": [-0.8, -0.4, 0.4, 0.8], "horizons": [1e2, 1e4, 1e6]},
     "driver": _BM1, "clock": {"type": "gamma", "shape": 1.0, "rate": 1.0}},
)
_register(
    "levy-inequality", "I_MD >= I_LD with a common zero at kappa_V'(0) grad kappa_S(0)",
    "$I_{\\mathrm{MD}}(x)\\geq I_{\\mathrm{LD}}(x)$",
    [_X], ["driver", "clock"], _run_levy_inequality,
    {"params": {"x": {"start": -2.0, "stop": 2.0, "num": 21}},
     "driver": _BM1, "clock": {"type": "gamma", "shape": 1.0, "rate": 1.0}},
)
_register(
    "poisson-ld", "reference LDP for sums of X(p), rate (log(1 + p(G - 1)))*",
    "$1-p+pG(\\theta)$",
    [Field("p", "prob", doc="P(X != 0)"), _X, *_TAIL], ["jumps"], _run_poisson_ld,
    {"params": {"p": 0.5, "x": {"start": 0.05, "stop": 0.95, "num": 10},
                "tail_c": 0.75, "tail_horizons": [500, 1000, 2000]},
     "jumps": _UNIT_JUMP},
)
_register(
    "poisson-weak", "compound-Poisson weak limit of X_1(lam/n) + ... + X_n(lam/n)",
    "converges weakly to a compound Poisson distributed random variable",
    [Field("lam", "positive", doc="lambda"), Field("n_summands", "count", doc="n"), _THETA, _N],
    ["jumps"], _run_poisson_weak,
    {"params": {"lam": 2.0, "n_summands": 10_000, "theta": [-1.0, -0.5, 0.0, 0.3, 0.5],
                "n": 100_000},
     "jumps": _UNIT_JUMP},
)
_register(
    "poisson-md", "moderate deviations for the triangular array, rate (lam (G - 1))*",
    "$\\lambda(G(\\theta)-1)$",
    [Field("lam", "positive", doc="lambda"), Field("beta", "beta", doc="a_n = n^-beta"), _X, _THETA,
     _HOR, Field("tolerance", "positive", False, 1e-6, "final-horizon tolerance"), *_TAIL],
    ["jumps"], _run_poisson_md,
    {"params": {"lam": 0.5, "beta": 0.1, "x": {"start": 0.1, "stop": 2.0, "num": 10},
                "theta": {"start": -0.5, "stop": 0.5, "num": 11}, "horizons": [1e2, 1e4, 1e6]},
     "jumps": _UNIT_JUMP},
)
_register(
    "poisson-inequality", "I_LD >= I_MD for lam = p; difference minimal at x = p",
    "$I_{\\mathrm{LD}}(x)\\geq I_{\\mathrm{MD}}(x)$",
    [Field("p", "prob", doc="p = lam"), _X], [], _run_poisson_inequality,
    {"params": {"p": 0.5, "x": {"start": 0.0, "stop": 1.0, "num": 101}}},
)
_register(
    "contraction-ld", "LDP pushed through U_1 or U_2 (contraction of kappa_X*)",
    "combined with the Contraction Principle",
    [Field("map", "map"), Field("delta", "delta", False, None, "skewness (skew map)"),
     Field("y", "points"), _BOX], ["driver"], _run_contraction_ld,
    {"params": {"map": "skew", "delta": [0.6], "y": [-1.0, -0.5, 0.5, 1.0, 2.0]},
     "driver": {"type": "brownian", "mu": [0.0, 0.0], "sigma": [[1.0, 0.0], [0.0, 1.0]]}},
)
_register(
    "contraction-weak", "weak limit U(Z) of mapped normalized sums (Rademacher summands)",
    "converges weakly to $U(Z)$",
    [Field("map", "map"), Field("delta", "delta", False, None, "skewness (skew map)"),
     Field("h", "count", False, 2, "dimension (logistic map)"),
     Field("n_summands", "count", False, 400, "summands per draw"), _THETA, _N],
    [], _run_contraction_weak,
    {"params": {"map": "skew", "delta": [0.6], "theta": [-1.0, -0.5, 0.0, 0.5, 1.0]}},
)
_register(
    "contraction-md", "moderate deviations pushed through U_1 or U_2",
    "combined with the Contraction Principle",
    [Field("map", "map"), Field("delta", "delta", False, None, "skewness (skew map)"),
     Field("H", "matrix", doc="Hessian of kappa_X at 0"), Field("y", "points"), _BOX],
    [], _run_contraction_md,
    {"params": {"map": "logistic", "H": [[1.0, 0.3], [0.3, 2.0]],
                "y": [[0.2, 0.3, 0.5], [0.25, 0.25, 0.5], [0.6, 0.3, 0.1], [0.0, 0.5, 0.5]]}},
)
_register(
    "logistic-example", "logistic-normal moderate-deviation rate on the open simplex",
    "logistic Normal distribution",
    [Field("H", "matrix", doc="Hessian of kappa_X at 0"), Field("y", "points"), _BOX], [],
    _run_logistic_example,
    {"params": {"H": [[1.0]], "y": [[0.5, 0.5], [0.2, 0.8], [0.9, 0.1], [1.0, 0.0]]}},
)
_register(
    "skew-example", "skew-normal moderate-deviation rate, two-branch closed form",
    "skew Normal distribution",
    [Field("psi", "matrix", doc="Psi"), Field("delta", "delta", doc="skewness"),
     Field("y", "points"), _BOX], [], _run_skew_example,
    {"params": {"psi": [[1.0]], "delta": [0.6], "y": {"start": -2.0, "stop": 2.0, "num": 9}}},
)


# --------------------------------------------------------------- validation

_ID = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]*$")
_TOP = ("id", "family", "seed", "output", "params", "driver", "clock", "jumps")


def validate(raw: dict) -> Config:
    """Check a parsed config against its family schema; raise :class:`ConfigError`."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a table")
    for k in raw:
        if k not in _TOP:
            raise ConfigError(k, "unknown top-level key")
    cid = raw.get("id")
    if not isinstance(cid, str) or not _ID.match(cid):
        raise ConfigError("id", "required; letters, digits, '_', '.', '-' only")
    fam = raw.get("family")
    if fam not in FAMILIES:
        raise ConfigError("family", f"unknown family {fam!r}; run 'ncmd list' for the catalog")
    spec = FAMILIES[fam]
    seed = raw.get("seed")
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < U64:
        raise ConfigError("seed", "required; an integer in [0, 2^64)")
    output = raw.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("output", "must be a string path")
    praw = raw.get("params", {})
    if not isinstance(praw, dict):
        raise ConfigError("params", "must be a table")
    known = {f.name: f for f in spec.params}
    for k in praw:
        if k not in known:
            raise ConfigError(f"params.{k}", f"not a parameter of {fam}")
    params = {}
    for f in spec.params:
        path = f"params.{f.name}"
        if f.name in praw:
            params[f.name] = KINDS[f.kind][1](path, praw[f.name])
        elif f.required:
            raise ConfigError(path, f"required ({f.constraint})")
        elif f.default is not None:
            params[f.name] = KINDS[f.kind][1](path, f.default)
    blocks = {}
    for b in ("driver", "clock", "jumps"):
        if b in spec.blocks:
            if b not in raw:
                raise ConfigError(b, f"required by {fam}")
            blocks[b] = BLOCK_PARSERS[b](raw[b])
        elif b in raw:
            raise ConfigError(b, f"not used by {fam}")
    return Config(cid, fam, int(seed), params, blocks, output, raw)


@dataclass
class RunContext:
    threads: int = 1


def run_experiment(cfg: Config, threads=1) -> Outcome:
    return FAMILIES[cfg.family].runner(cfg, RunContext(max(1, int(threads))))


def template(family: str, seed: int = 1) -> dict:
    """A config mapping for ``family`` built from its catalog example."""
    spec = FAMILIES[family]
    out = {"id": family.replace("-", "_") + "_template", "family": family, "seed": seed}
    out.update({k: v for k, v in spec.example.items()})
    return out
