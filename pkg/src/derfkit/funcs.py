"""Scalar point-wise functions, their derivatives, and shape-altering transforms.

Every function here is vectorized over numpy arrays. The catalog holds the
sixteen search candidates plus the unbounded growth probes and the
non-monotonic probes used by the property sweeps.
"""

from __future__ import annotations

import difflib
import hashlib
import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Mapping

import numpy as np

from .errors import ContractError, ParameterError, UnknownFunctionError

TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)
_SQRT_PI = math.sqrt(math.pi)

GROUPS = (
    "natural",
    "transformed_basic",
    "clipped_unbounded",
    "canonical_ratio",
    "unbounded_probe",
    "non_monotonic_probe",
)


def erf_eval(x):
    """Error function, accurate to a few ulp and exactly odd.

    Arrays go through a table of degree-14 Taylor expansions about the points
    ``k/4`` on ``[0, 6]``; their coefficients come from Hermite polynomials and
    the constant terms from the scalar path. Beyond ``|x| = 6`` the result
    rounds to 1.
    """
    if type(x) is float or type(x) is int:
        return _erf_scalar(float(x))
    arr = np.asarray(x, dtype=np.float64)
    flat = arr.reshape(-1)
    ax = np.fmin(np.abs(flat), _ERF_XMAX)  # NaN maps to the last center, restored below
    idx = np.rint(ax * (1.0 / _ERF_STEP)).astype(np.intp)
    h = ax - _ERF_CENTERS.take(idx)
    s = _ERF_COEF[_ERF_ORDER].take(idx)
    for k in range(_ERF_ORDER - 1, -1, -1):
        s *= h
        s += _ERF_COEF[k].take(idx)
    np.minimum(s, 1.0, out=s)
    out = np.copysign(s, flat)
    out[np.isnan(flat)] = np.nan
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def _erf_scalar(x: float) -> float:
    ax = abs(x)
    if ax < 2.5:
        x2 = ax * ax
        term = total = ax
        n = 0
        while True:
            n += 1
            term *= 2.0 * x2 / (2 * n + 1)
            total += term
            if term <= 1e-17 * total:
                break
        r = TWO_OVER_SQRT_PI * math.exp(-x2) * total
    elif ax >= 6.0:
        r = 1.0
    elif ax == ax:
        t = ax
        for k in range(60, 0, -1):
            t = ax + (0.5 * k) / t
        r = 1.0 - math.exp(-ax * ax) / _SQRT_PI / t
    else:
        return x
    return math.copysign(r, x)


_ERF_STEP = 0.25
_ERF_ORDER = 14
_ERF_XMAX = 6.0


def _erf_table():
    """Rows ``k`` hold ``erf^(k)(c) / k!`` for every center ``c``."""
    centers = np.arange(int(_ERF_XMAX / _ERF_STEP) + 1) * _ERF_STEP
    coef = np.zeros((_ERF_ORDER + 1, centers.size))
    for i, c in enumerate(centers):
        coef[0, i] = _erf_scalar(float(c))
        g = TWO_OVER_SQRT_PI * math.exp(-c * c)
        h_prev, h, fact = 0.0, 1.0, 1.0  # physicists' Hermite H_{k-1}(c)
        for k in range(1, _ERF_ORDER + 1):
            fact *= k
            coef[k, i] = g * (-1) ** (k - 1) * h / fact
            h_prev, h = h, 2.0 * c * h - 2.0 * (k - 1) * h_prev
    return centers, coef


_ERF_CENTERS, _ERF_COEF = _erf_table()


def _erf_prime(x):
    return TWO_OVER_SQRT_PI * np.exp(-np.square(x))


@dataclass(frozen=True)
class DeclaredProps:
    zero_centered: bool
    bounded: bool
    center_sensitive: bool
    monotonic: str  # "increasing" | "decreasing" | "non_monotonic"
    growth: str = "bounded"  # "bounded" | "logarithmic" | "sublinear_power" | "linear_or_faster"

    def as_dict(self) -> dict:
        return {
            "zero_centered": self.zero_centered,
            "bounded": self.bounded,
            "center_sensitive": self.center_sensitive,
            "monotonic": self.monotonic,
            "growth_class": self.growth,
        }


_FLIP = {"increasing": "decreasing", "decreasing": "increasing", "non_monotonic": "non_monotonic"}


@dataclass(frozen=True)
class PointwiseFn:
    """A named scalar map with its analytic derivative.

    ``kinks`` lists points where ``f`` is not twice differentiable (clip
    boundaries, ``|x|`` terms). Where the derivative itself jumps it takes the
    value of the smooth (unclipped) branch.
    """

    name: str
    value: Callable
    derivative: Callable
    props: DeclaredProps | None = None
    group: str | None = None
    formula: str = ""
    kinks: tuple = ()
    trainable: bool = True

    def __call__(self, x):
        out = self.value(np.asarray(x, dtype=np.float64))
        return float(out) if np.ndim(out) == 0 else out

    def grad(self, x):
        out = self.derivative(np.asarray(x, dtype=np.float64))
        return float(out) if np.ndim(out) == 0 else out


def _sign(x):
    return np.sign(x)


def _clip_deriv(inner, inner_d, bound):
    def d(x):
        return np.where(np.abs(inner(x)) <= bound, inner_d(x), 0.0)

    return d


def _safe_inv_root(x, power):
    # |x|^(-power) with the value 0 at x = 0
    ax = np.abs(x)
    with np.errstate(divide="ignore"):
        r = np.where(ax > 0, ax ** (-power), 0.0)
    return r


def _asinh_v(x):
    return np.arcsinh(x)


def _logsign_v(x):
    return _sign(x) * np.log1p(np.abs(x))


def _logquad_v(x):
    return _sign(x) * np.log1p(np.square(x))


def _power23_v(x):
    return _sign(x) * np.abs(x) ** (2.0 / 3.0)


def _power23_d(x):
    return (2.0 / 3.0) * _safe_inv_root(x, 1.0 / 3.0)


def _exproot_d(x):
    ax = np.abs(x)
    r = np.sqrt(ax)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.exp(-r) / (2.0 * r)
    return np.where(ax > 0, d, 0.0)


def _saturlog_v(x):
    lg = np.log1p(np.abs(x))
    return _sign(x) * lg / (lg + 1.0)


def _saturlog_d(x):
    ax = np.abs(x)
    lg = np.log1p(ax)
    return 1.0 / ((1.0 + ax) * (lg + 1.0) ** 2)


def _cubsign_v(x):
    a3 = np.abs(x) ** 3
    return _sign(x) * a3 / (a3 + 1.0)


def _cubsign_d(x):
    ax = np.abs(x)
    return 3.0 * ax * ax / (ax**3 + 1.0) ** 2


def _relsign_v(x):
    return x / (np.hypot(x, 1.0) + 1.0)


def _relsign_d(x):
    r = np.hypot(x, 1.0)
    return 1.0 / (r * (r + 1.0))


HALF_PI = math.pi / 2.0
_E1 = math.e - 1.0

_BOUNDED = DeclaredProps(True, True, True, "increasing")
_LOG = DeclaredProps(True, False, True, "increasing", "logarithmic")


def _entries() -> list[PointwiseFn]:
    fns = [
        PointwiseFn("erf", erf_eval, _erf_prime, _BOUNDED, "natural",
                    "2/sqrt(pi) * int_0^x exp(-t^2) dt"),
        PointwiseFn("tanh", np.tanh, lambda x: 1.0 - np.tanh(x) ** 2, _BOUNDED, "natural",
                    "(e^x - e^-x) / (e^x + e^-x)"),
        PointwiseFn("satursin", lambda x: np.sin(np.clip(x, -HALF_PI, HALF_PI)),
                    lambda x: np.where(np.abs(x) <= HALF_PI, np.cos(x), 0.0),
                    _BOUNDED, "transformed_basic", "sin(clip(x, -pi/2, pi/2))",
                    (-HALF_PI, HALF_PI)),
        PointwiseFn("arcsinh_clip", lambda x: np.clip(np.arcsinh(x), -1.0, 1.0),
                    _clip_deriv(np.arcsinh, lambda x: 1.0 / np.hypot(x, 1.0), 1.0),
                    _BOUNDED, "clipped_unbounded", "clip(asinh(x), -1, 1)",
                    (-math.sinh(1.0), math.sinh(1.0))),
        PointwiseFn("isru", lambda x: x / np.hypot(x, 1.0),
                    lambda x: np.hypot(x, 1.0) ** -3, _BOUNDED, "transformed_basic",
                    "x / sqrt(x^2 + 1)"),
        PointwiseFn("exproot", lambda x: _sign(x) * -np.expm1(-np.sqrt(np.abs(x))),
                    _exproot_d, _BOUNDED, "transformed_basic",
                    "sign(x) * (1 - exp(-sqrt|x|))", (0.0,)),
        PointwiseFn("linear_clip", lambda x: np.clip(x, -1.0, 1.0),
                    lambda x: np.where(np.abs(x) <= 1.0, 1.0, 0.0),
                    _BOUNDED, "clipped_unbounded", "clip(x, -1, 1)", (-1.0, 1.0)),
        PointwiseFn("expsign", lambda x: _sign(x) * -np.expm1(-np.abs(x)),
                    lambda x: np.exp(-np.abs(x)), _BOUNDED, "transformed_basic",
                    "sign(x) * (1 - exp(-|x|))", (0.0,)),
        PointwiseFn("logsign_clip", lambda x: np.clip(_logsign_v(x), -1.0, 1.0),
                    _clip_deriv(_logsign_v, lambda x: 1.0 / (1.0 + np.abs(x)), 1.0),
                    _BOUNDED, "clipped_unbounded", "clip(sign(x) ln(|x| + 1), -1, 1)",
                    (-_E1, 0.0, _E1)),
        PointwiseFn("relsign", _relsign_v, _relsign_d, _BOUNDED, "transformed_basic",
                    "x / (sqrt(x^2 + 1) + 1)"),
        PointwiseFn("arctan_scaled", lambda x: np.arctan(x) / HALF_PI,
                    lambda x: 1.0 / (HALF_PI * (1.0 + np.square(x))),
                    _BOUNDED, "natural", "(2/pi) arctan(x)"),
        PointwiseFn("smoothsign", lambda x: x / (1.0 + np.abs(x)),
                    lambda x: 1.0 / (1.0 + np.abs(x)) ** 2, _BOUNDED, "canonical_ratio",
                    "x / (1 + |x|)", (0.0,)),
        PointwiseFn("logquad_clip", lambda x: np.clip(_logquad_v(x), -1.0, 1.0),
                    _clip_deriv(_logquad_v, lambda x: 2.0 * np.abs(x) / (1.0 + np.square(x)), 1.0),
                    _BOUNDED, "clipped_unbounded", "clip(sign(x) ln(x^2 + 1), -1, 1)",
                    (-math.sqrt(_E1), 0.0, math.sqrt(_E1))),
        PointwiseFn("power23_clip", lambda x: np.clip(_power23_v(x), -1.0, 1.0),
                    _clip_deriv(_power23_v, _power23_d, 1.0),
                    _BOUNDED, "clipped_unbounded", "clip(sign(x) |x|^(2/3), -1, 1)",
                    (-1.0, 0.0, 1.0)),
        PointwiseFn("saturlog", _saturlog_v, _saturlog_d, _BOUNDED, "canonical_ratio",
                    "sign(x) L / (L + 1), L = ln(|x| + 1)", (0.0,)),
        PointwiseFn("cubsign", _cubsign_v, _cubsign_d, _BOUNDED, "transformed_basic",
                    "x^3 / (|x|^3 + 1)"),
        # raw arctan, range (-pi/2, pi/2); the search uses arctan_scaled
        PointwiseFn("arctan", np.arctan, lambda x: 1.0 / (1.0 + np.square(x)),
                    _BOUNDED, "natural", "arctan(x)"),
        # growth-rate probes
        PointwiseFn("arcsinh", _asinh_v, lambda x: 1.0 / np.hypot(x, 1.0), _LOG,
                    "unbounded_probe", "ln(x + sqrt(x^2 + 1))", trainable=False),
        PointwiseFn("logsign", _logsign_v, lambda x: 1.0 / (1.0 + np.abs(x)), _LOG,
                    "unbounded_probe", "sign(x) ln(|x| + 1)", (0.0,), trainable=False),
        PointwiseFn("logquad", _logquad_v, lambda x: 2.0 * np.abs(x) / (1.0 + np.square(x)),
                    _LOG, "unbounded_probe", "sign(x) ln(x^2 + 1)", (0.0,), trainable=False),
        PointwiseFn("power23", _power23_v, _power23_d,
                    DeclaredProps(True, False, True, "increasing", "sublinear_power"),
                    "unbounded_probe", "sign(x) |x|^(2/3)", (0.0,), trainable=False),
        PointwiseFn("linear", lambda x: np.array(x, dtype=np.float64, copy=True),
                    lambda x: np.ones_like(np.asarray(x, dtype=np.float64)),
                    DeclaredProps(True, False, True, "increasing", "linear_or_faster"),
                    "unbounded_probe", "x", trainable=False),
        # monotonicity probes
        PointwiseFn("sin", np.sin, np.cos, DeclaredProps(True, True, True, "non_monotonic"),
                    "non_monotonic_probe", "sin(x)"),
        PointwiseFn("dampx", lambda x: 2.0 * x / (1.0 + np.square(x)),
                    lambda x: 2.0 * (1.0 - np.square(x)) / (1.0 + np.square(x)) ** 2,
                    DeclaredProps(True, True, True, "non_monotonic"),
                    "non_monotonic_probe", "2x / (1 + x^2)"),
        PointwiseFn("dampexp", lambda x: 2.72 * x * np.exp(-np.abs(x)),
                    lambda x: 2.72 * np.exp(-np.abs(x)) * (1.0 - np.abs(x)),
                    DeclaredProps(True, True, True, "non_monotonic"),
                    "non_monotonic_probe", "2.72 x exp(-|x|)", (0.0,)),
        PointwiseFn("negerf", lambda x: -erf_eval(x), lambda x: -_erf_prime(x),
                    DeclaredProps(True, True, True, "decreasing"),
                    "non_monotonic_probe", "-erf(x)"),
    ]
    return fns


_CATALOG: dict[str, PointwiseFn] = {f.name: f for f in _entries()}

SEARCH_CANDIDATES = (
    "erf", "tanh", "satursin", "arcsinh_clip", "isru", "exproot", "linear_clip",
    "expsign", "logsign_clip", "relsign", "arctan_scaled", "smoothsign",
    "logquad_clip", "power23_clip", "saturlog", "cubsign",
)
GROWTH_PROBES = ("logsign", "arcsinh", "logquad", "power23", "linear")
NON_MONOTONIC_PROBES = ("sin", "dampx", "dampexp")


def catalog() -> list[PointwiseFn]:
    return list(_CATALOG.values())


def search_candidates() -> list[PointwiseFn]:
    return [_CATALOG[n] for n in SEARCH_CANDIDATES]


def names() -> list[str]:
    return list(_CATALOG)


def get(name: str) -> PointwiseFn:
    try:
        return _CATALOG[name]
    except KeyError:
        close = difflib.get_close_matches(name, list(_CATALOG), n=1, cutoff=0.0)
        raise UnknownFunctionError(name, close[0] if close else None) from None


def catalog_hash() -> str:
    h = hashlib.sha256()
    for f in catalog():
        h.update(f"{f.name}|{f.formula}|{f.group}|{f.props}\n".encode())
    return h.hexdigest()[:16]


# ---------------------------------------------------------------- transforms


def shift(f: PointwiseFn, kind: str, lam: float) -> PointwiseFn:
    lam = float(lam)
    if kind == "horizontal":
        return PointwiseFn(f"{f.name}|hshift({lam:g})", lambda x: f.value(x + lam),
                           lambda x: f.derivative(x + lam), None, f.group,
                           f"{f.name}(x + {lam:g})", tuple(k - lam for k in f.kinks), f.trainable)
    if kind == "vertical":
        return PointwiseFn(f"{f.name}|vshift({lam:g})", lambda x: f.value(x) + lam,
                           f.derivative, None, f.group, f"{f.name}(x) + {lam:g}",
                           f.kinks, f.trainable)
    raise ParameterError(f"shift kind must be 'horizontal' or 'vertical', got {kind!r}")


def clip_bound(f: PointwiseFn, lambda_u: float) -> PointwiseFn:
    lam = float(lambda_u)
    if not lam > 0:
        raise ParameterError(f"clip radius must be > 0, got {lambda_u}")
    props = None
    if f.props is not None:
        props = replace(f.props, bounded=True, growth="bounded")
    return PointwiseFn(
        f"{f.name}|clip({lam:g})",
        lambda x: np.clip(f.value(x), -lam, lam),
        lambda x: np.where(np.abs(f.value(x)) <= lam, f.derivative(x), 0.0),
        props, f.group, f"clip({f.name}(x), -{lam:g}, {lam:g})", f.kinks, True,
    )


def mix_linear(f: PointwiseFn, lambda_b: float) -> PointwiseFn:
    lam = float(lambda_b)
    if not 0.0 < lam < 1.0:
        raise ParameterError(f"mix weight must lie in (0, 1), got {lambda_b}")
    props = None
    if f.props is not None:
        props = replace(f.props, bounded=False, growth="linear_or_faster")
    return PointwiseFn(
        f"{f.name}|mix({lam:g})",
        lambda x: (1.0 - lam) * f.value(x) + lam * x,
        lambda x: (1.0 - lam) * f.derivative(x) + lam,
        props, f.group, f"(1 - {lam:g}) {f.name}(x) + {lam:g} x", f.kinks, True,
    )


def _assert_odd(f: PointwiseFn):
    probe = np.linspace(0.0, 6.0, 61)
    f0 = float(f.value(np.zeros(1))[0])
    asym = np.max(np.abs(f.value(probe) + f.value(-probe)))
    if abs(f0) > 1e-12 or asym > 1e-9:
        raise ContractError(
            f"{f.name} is not odd (f(0)={f0:.3g}, max |f(x)+f(-x)|={asym:.3g}); "
            "flat-zone construction needs f(0)=0"
        )


def flat_zone(f: PointwiseFn, lambda_flat: float) -> PointwiseFn:
    """Zero on ``[-lam, lam]``; the two branches of ``f`` moved outward by ``lam``.

    Continuous but not differentiable at ``+-lam`` (derivative there is taken
    from the inner, flat side).
    """
    lam = float(lambda_flat)
    if lam < 0:
        raise ParameterError(f"flat-zone half-width must be >= 0, got {lambda_flat}")
    _assert_odd(f)

    def value(x):
        x = np.asarray(x, dtype=np.float64)
        return np.where(x > lam, f.value(x - lam), np.where(x < -lam, f.value(x + lam), 0.0))

    def deriv(x):
        x = np.asarray(x, dtype=np.float64)
        return np.where(x > lam, f.derivative(x - lam),
                        np.where(x < -lam, f.derivative(x + lam), 0.0))

    if lam == 0.0:
        value, deriv = f.value, f.derivative
    kinks = tuple(sorted({*(k + lam for k in f.kinks if k >= 0), *(k - lam for k in f.kinks if k <= 0),
                          *((-lam, lam) if lam > 0 else ())}))
    return PointwiseFn(f"{f.name}|flat({lam:g})", value, deriv, None, f.group,
                       f"flat_zone({f.name}, {lam:g})", kinks, f.trainable)


def negate(f: PointwiseFn) -> PointwiseFn:
    props = None if f.props is None else replace(f.props, monotonic=_FLIP[f.props.monotonic])
    if f.name.endswith("|neg"):
        name = f.name[: -len("|neg")]
    else:
        name = f"{f.name}|neg"
    return PointwiseFn(name, lambda x: -f.value(x), lambda x: -f.derivative(x), props,
                       f.group, f"-{f.name}(x)", f.kinks, f.trainable)


def scale_input(f: PointwiseFn, eps: float) -> PointwiseFn:
    eps = float(eps)
    if not eps > 0:
        raise ParameterError(f"input scale must be > 0, got {eps}")
    return PointwiseFn(f"{f.name}|scale({eps:g})", lambda x: f.value(eps * x),
                       lambda x: eps * f.derivative(eps * x), f.props, f.group,
                       f"{f.name}({eps:g} x)", tuple(k / eps for k in f.kinks), f.trainable)


def scaled_tanh(eps_tanh: float) -> PointwiseFn:
    """``tanh(eps * x)``; eps = 1.205 is the L1-closest match to erf."""
    if not float(eps_tanh) > 0:
        raise ParameterError(f"eps_tanh must be > 0, got {eps_tanh}")
    if float(eps_tanh) == 1.0:
        return _CATALOG["tanh"]
    return scale_input(_CATALOG["tanh"], eps_tanh)


_TRANSFORMS = {
    "hshift": lambda f, v: shift(f, "horizontal", v),
    "vshift": lambda f, v: shift(f, "vertical", v),
    "clip": clip_bound,
    "mix": mix_linear,
    "flat": flat_zone,
    "negate": lambda f, v=None: negate(f),
    "scale": scale_input,
}
TRANSFORM_OPS = tuple(_TRANSFORMS)


def build(name: str, transforms: Iterable[Mapping] = ()) -> PointwiseFn:
    """Resolve a catalog name and apply ``[{"op": ..., "value": ...}, ...]`` in order."""
    f = get(name)
    for t in transforms:
        op = t.get("op")
        if op not in _TRANSFORMS:
            raise ParameterError(f"unknown transform {op!r}; expected one of {TRANSFORM_OPS}")
        if op == "negate":
            f = negate(f)
        else:
            f = _TRANSFORMS[op](f, t["value"])
    return f
