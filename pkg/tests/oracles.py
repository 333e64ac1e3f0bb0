"""Reference computations that share no code with the package."""

import math

import numpy as np


def _simpson(f, a, fa, b, fb, m, fm, whole, tol, depth):
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
        return left + right + (left + right - whole) / 15.0
    return (_simpson(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
            + _simpson(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1))


def simpson(f, a, b, tol=1e-13, depth=50):
    """Plain recursive adaptive Simpson."""
    if a == b:
        return 0.0
    m = 0.5 * (a + b)
    fa, fb, fm = f(a), f(b), f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _simpson(f, a, fa, b, fb, m, fm, whole, tol, depth)


def erf_simpson(x, tol=1e-13):
    c = 2.0 / math.sqrt(math.pi)
    # unit pieces keep each recursion well conditioned
    edges = np.linspace(0.0, abs(x), max(2, int(math.ceil(abs(x))) + 1))
    total = sum(simpson(lambda t: c * math.exp(-t * t), lo, hi, tol) for lo, hi in zip(edges[:-1], edges[1:]))
    return math.copysign(total, x)


def _gap_antiderivative(eps, x):
    # integral of tanh(eps t) - erf(t) from 0 to x, for x >= 0
    log_cosh = eps * x + math.log1p(math.exp(-2.0 * eps * x)) - math.log(2.0)
    return log_cosh / eps - (x * math.erf(x) + (math.exp(-x * x) - 1.0) / math.sqrt(math.pi))


def l1_gap_closed_form(eps, radius=8.0, n_scan=4000):
    """2 * int_0^R |tanh(eps x) - erf(x)| dx, split at the sign changes."""
    gap = lambda t: math.tanh(eps * t) - math.erf(t)
    xs = np.linspace(0.0, radius, n_scan + 1)[1:]
    roots = []
    prev_x, prev_v = xs[0], gap(xs[0])
    for x in xs[1:]:
        v = gap(x)
        if v == 0.0 or (prev_v < 0) != (v < 0):
            lo, hi = prev_x, x
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if (gap(mid) < 0) == (prev_v < 0):
                    lo = mid
                else:
                    hi = mid
            roots.append(0.5 * (lo + hi))
        prev_x, prev_v = x, v
    pts = [0.0] + roots + [radius]
    return 2.0 * sum(abs(_gap_antiderivative(eps, b) - _gap_antiderivative(eps, a))
                     for a, b in zip(pts[:-1], pts[1:]))


def grid_scan_eps(lo=1.15, hi=1.25, n=10_000, radius=8.0):
    grid = np.linspace(lo, hi, n)
    vals = [l1_gap_closed_form(e, radius, n_scan=400) for e in grid]
    return float(grid[int(np.argmin(vals))])


def central_fd(f, x, h=1e-6):
    return (f(x + h) - f(x - h)) / (2.0 * h)


def nearest_centroid_accuracy(train_x, train_y, test_x, test_y):
    """Bayes rule for equal isotropic Gaussians, fitted on mean token embeddings."""
    tr, te = train_x.mean(axis=1), test_x.mean(axis=1)
    classes = np.unique(train_y)
    centroids = np.stack([tr[train_y == c].mean(axis=0) for c in classes])
    d = ((te[:, None, :] - centroids[None]) ** 2).sum(axis=-1)
    return float(np.mean(classes[np.argmin(d, axis=1)] == test_y))


def fd_gradient(loss, arrays, h=1e-4):
    """Central differences of ``loss()`` for every entry of each array, perturbing in place."""
    out = []
    for arr in arrays:
        g = np.zeros(arr.shape)
        for idx in np.ndindex(arr.shape):
            keep = arr[idx]
            arr[idx] = keep + h
            up = loss()
            arr[idx] = keep - h
            down = loss()
            arr[idx] = keep
            g[idx] = (up - down) / (2.0 * h)
        out.append(g)
    return out
