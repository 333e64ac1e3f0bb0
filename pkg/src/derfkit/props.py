"""Numeric property classification of point-wise functions and the tanh-to-erf fit."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import funcs
from .errors import ContractError, EvaluationError
from .numerics import adaptive_simpson, bisect_root, golden_section


@dataclass(frozen=True)
class ClassifierConfig:
    asymmetry_tol: float = 0.05
    bound_cap: float = 2.0
    bound_probe_max: float = 1e6
    flat_level: float = 1e-6
    flat_width_max: float = 0.05
    mono_range: float = 8.0
    mono_points: int = 4001
    mono_tol: float = 1e-10
    growth_lo: float = 1e2
    growth_hi: float = 1e6
    log_slope_max: float = 0.3
    sublinear_slope_max: float = 0.9


DEFAULT_CONFIG = ClassifierConfig()
GROWTH_RANK = {"bounded": 0, "logarithmic": 1, "sublinear_power": 2, "linear_or_faster": 3}


@dataclass(frozen=True)
class PropertyReport:
    name: str
    zero_centered: bool
    asymmetry: float
    bounded: bool
    sup_abs: float
    center_sensitive: bool
    flat_half_width: float
    monotonic: str
    monotonic_violations: int
    growth_class: str
    growth_slope: float

    def to_dict(self) -> dict:
        return asdict(self)

    def labels(self) -> dict:
        return {
            "zero_centered": self.zero_centered,
            "bounded": self.bounded,
            "center_sensitive": self.center_sensitive,
            "monotonic": self.monotonic,
            "growth_class": self.growth_class,
        }


def _eval(f, x: np.ndarray) -> np.ndarray:
    with np.errstate(all="ignore"):
        y = np.asarray(f.value(x), dtype=np.float64)
    bad = ~np.isfinite(y)
    if bad.any():
        raise EvaluationError(f"{f.name} is not finite at x={float(x[bad][0])!r}")
    return y


def _bound_probe(cfg: ClassifierConfig) -> np.ndarray:
    pos = np.logspace(-3, math.log10(cfg.bound_probe_max), 601)
    return np.concatenate([-pos[::-1], [0.0], pos])


def _flat_half_width(f, cfg: ClassifierConfig) -> float:
    # contiguous region around 0 where |f| stays below flat_level
    r = np.concatenate([[0.0], np.logspace(-9, math.log10(cfg.mono_range), 2000)])
    widths = []
    for side in (r, -r):
        y = np.abs(_eval(f, side))
        above = np.nonzero(y >= cfg.flat_level)[0]
        if above.size == 0:
            widths.append(cfg.mono_range)
            continue
        i = above[0]
        if i == 0:
            widths.append(0.0)
            continue
        sgn = 1.0 if side is r else -1.0
        g = lambda t: abs(float(f.value(np.array([sgn * t]))[0])) - cfg.flat_level
        widths.append(bisect_root(g, abs(side[i - 1]), abs(side[i]), xtol=1e-12))
    return max(widths)


def classify(f: funcs.PointwiseFn, cfg: ClassifierConfig = DEFAULT_CONFIG) -> PropertyReport:
    pair = np.linspace(0.0, cfg.mono_range, 801)
    f0 = float(_eval(f, np.zeros(1))[0])
    asym = float(np.max(np.abs(_eval(f, pair) + _eval(f, -pair))) / 2.0)
    zero_centered = asym <= cfg.asymmetry_tol and abs(f0) <= cfg.asymmetry_tol

    sup = float(np.max(np.abs(_eval(f, _bound_probe(cfg)))))
    bounded = sup <= cfg.bound_cap

    width = _flat_half_width(f, cfg)
    center_sensitive = width <= cfg.flat_width_max

    grid = np.linspace(-cfg.mono_range, cfg.mono_range, cfg.mono_points)
    diffs = np.diff(_eval(f, grid))
    ups = int(np.sum(diffs > cfg.mono_tol))
    downs = int(np.sum(diffs < -cfg.mono_tol))
    if downs == 0:
        monotonic, violations = "increasing", 0
    elif ups == 0:
        monotonic, violations = "decreasing", 0
    else:
        monotonic, violations = "non_monotonic", min(ups, downs)

    slope = growth_slope(f, cfg)
    if bounded:
        growth = "bounded"
    elif slope < cfg.log_slope_max:
        growth = "logarithmic"
    elif slope < cfg.sublinear_slope_max:
        growth = "sublinear_power"
    else:
        growth = "linear_or_faster"

    return PropertyReport(f.name, bool(zero_centered), asym, bool(bounded), sup,
                          bool(center_sensitive), float(width), monotonic, violations,
                          growth, slope)


def growth_slope(f: funcs.PointwiseFn, cfg: ClassifierConfig = DEFAULT_CONFIG) -> float:
    """Least-squares slope of log|f| against log x on ``[growth_lo, growth_hi]``."""
    x = np.logspace(math.log10(cfg.growth_lo), math.log10(cfg.growth_hi), 81)
    y = np.abs(_eval(f, x))
    y = np.maximum(y, 1e-300)
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def growth_ordering(fs, cfg: ClassifierConfig = DEFAULT_CONFIG) -> list:
    """Sort unbounded functions slowest-growing first.

    Functions are grouped by growth class; inside a class, the one with the
    smaller magnitude at the top of the probe range comes first.
    """
    keyed = []
    for f in fs:
        rep = classify(f, cfg)
        if rep.bounded:
            raise ContractError(f"growth_ordering needs unbounded functions; {f.name} is bounded")
        top = abs(float(_eval(f, np.array([cfg.growth_hi]))[0]))
        keyed.append(((GROWTH_RANK[rep.growth_class], top, f.name), f))
    return [f for _, f in sorted(keyed, key=lambda t: t[0])]


@dataclass(frozen=True)
class EpsFitResult:
    eps_star: float
    objective_value: float
    truncation_radius: float
    integration_tolerance: float
    iterations: int

    def to_dict(self) -> dict:
        return asdict(self)


def _crossings(eps: float, radius: float, n: int = 257) -> list[float]:
    def d(x):
        return math.tanh(eps * x) - funcs.erf_eval(x)

    xs = np.linspace(0.0, radius, n)
    vals = np.tanh(eps * xs) - funcs.erf_eval(xs)
    cuts = []
    for i in range(1, n - 1):
        a, b = vals[i], vals[i + 1]
        if a == 0.0:
            cuts.append(float(xs[i]))
        elif a * b < 0:
            cuts.append(bisect_root(d, float(xs[i]), float(xs[i + 1])))
    return cuts


def l1_objective(eps: float, radius: float = 8.0, tol: float = 1e-10) -> float:
    """``int_{-R}^{R} |tanh(eps x) - erf(x)| dx``, split at sign changes."""
    def integrand(x):
        return abs(math.tanh(eps * x) - funcs.erf_eval(x))

    knots = [0.0, *_crossings(eps, radius), radius]
    tol_piece = tol / (2 * (len(knots) - 1))
    half = sum(adaptive_simpson(integrand, a, b, tol_piece) for a, b in zip(knots, knots[1:]))
    return 2.0 * half


def fit_eps(truncation_radius: float = 8.0, tol: float = 1e-6,
            bracket: tuple[float, float] = (0.8, 1.6),
            integration_tol: float = 1e-10) -> EpsFitResult:
    if truncation_radius < 6:
        raise ContractError(f"truncation radius must be >= 6, got {truncation_radius}")
    res = golden_section(lambda e: l1_objective(e, truncation_radius, integration_tol),
                         bracket[0], bracket[1], tol=tol)
    return EpsFitResult(res.x, res.fx, float(truncation_radius), integration_tol, res.iterations)
