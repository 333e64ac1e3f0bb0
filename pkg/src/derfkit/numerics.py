"""Quadrature, bracketing minimization and finite-difference gradient checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import OptimizationError

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                     tol: float = 1e-10, max_depth: int = 60) -> float:
    """Integrate ``f`` over ``[a, b]`` with Richardson-corrected adaptive Simpson.

    Each panel is accepted when ``|S_left + S_right - S_whole| <= 15 * tol``
    with the tolerance halved at every split.
    """
    if a == b:
        return 0.0
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    total = 0.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        a, b, fa, fm, fb, whole, eps, depth = stack.pop()
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        delta = left + right - whole
        if depth >= max_depth or abs(delta) <= 15.0 * eps:
            total += left + right + delta / 15.0
        else:
            stack.append((m, b, fm, frm, fb, right, eps / 2.0, depth + 1))
            stack.append((a, m, fa, flm, fm, left, eps / 2.0, depth + 1))
    return total


@dataclass
class GoldenResult:
    x: float
    fx: float
    iterations: int
    bracket: tuple[float, float]


def golden_section(f: Callable[[float], float], lo: float, hi: float,
                   tol: float = 1e-6, max_iter: int = 500) -> GoldenResult:
    """Minimize a unimodal ``f`` on ``[lo, hi]``.

    Raises OptimizationError when the minimum sits on the bracket edge, which is
    what a monotone objective looks like.
    """
    a, b = float(lo), float(hi)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    it = 0
    while b - a > tol and it < max_iter:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
        it += 1
    x = 0.5 * (a + b)
    fx = f(x)
    edge = max(tol, 1e-9 * (hi - lo))
    if x - lo <= 2 * edge or hi - x <= 2 * edge:
        flo, fhi = f(lo), f(hi)
        raise OptimizationError(
            f"no interior minimum in [{lo}, {hi}]: f(lo)={flo:.6g}, f(hi)={fhi:.6g}, "
            f"search ended at {x:.6g}"
        )
    return GoldenResult(x, fx, it, (lo, hi))


def bisect_root(f: Callable[[float], float], a: float, b: float,
                xtol: float = 1e-15, max_iter: int = 200) -> float:
    fa = f(a)
    if fa == 0.0:
        return a
    for _ in range(max_iter):
        m = 0.5 * (a + b)
        fm = f(m)
        if fm == 0.0 or b - a <= xtol:
            return m
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def central_difference(f: Callable[[float], float], x: float, h: float = 1e-6) -> float:
    return (f(x + h) - f(x - h)) / (2.0 * h)


@dataclass
class GradCheckResult:
    ok: bool
    max_abs_err: float
    max_rel_err: float
    worst: str = ""
    failures: list = field(default_factory=list)


def numeric_gradient(loss_fn: Callable[[], float], arrays: Sequence[np.ndarray],
                     h: float = 1e-4) -> list[np.ndarray]:
    """Central differences of ``loss_fn()`` w.r.t. every entry of each array (mutated in place)."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn()
            flat[i] = orig - h
            down = loss_fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def compare_gradients(analytic: Sequence[np.ndarray], numeric: Sequence[np.ndarray],
                      names: Sequence[str], rtol: float, atol: float) -> GradCheckResult:
    """Entry passes when ``|a - n| <= max(atol, rtol * |n|)``."""
    max_abs = max_rel = 0.0
    worst = ""
    failures = []
    for name, a, n in zip(names, analytic, numeric):
        err = np.abs(np.asarray(a) - n)
        rel = err / (np.abs(n) + 1e-300)
        bad = err > np.maximum(atol, rtol * np.abs(n))
        if err.size and err.max() > max_abs:
            max_abs = float(err.max())
        rel_masked = np.where(err > atol, rel, 0.0)
        if rel_masked.size and rel_masked.max() > max_rel:
            max_rel = float(rel_masked.max())
            worst = name
        if bad.any():
            failures.append((name, int(bad.sum())))
    return GradCheckResult(not failures, max_abs, max_rel, worst, failures)
