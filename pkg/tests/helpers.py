import numpy as np

from derfkit.tensor import Tape, Tensor
from oracles import fd_gradient

KINK_MARGIN = 0.05


def away_from_kinks(layer, x):
    """Nudge inputs so alpha*x + s stays KINK_MARGIN clear of the function's kinks."""
    fn = getattr(layer, "fn", None)
    if fn is None or not fn.kinks:
        return x
    alpha = float(layer.alpha.data)
    s = 0.0 if layer.s is None else layer.s.data
    for _ in range(20):
        z = alpha * x + s
        near = np.zeros(x.shape, dtype=bool)
        for k in fn.kinks:
            near |= np.abs(z - k) < KINK_MARGIN
        if not near.any():
            return x
        x = np.where(near, x + 2.5 * KINK_MARGIN / abs(alpha), x)
    raise AssertionError("could not move inputs off kinks")


def gradient_errors(forward, inputs, params, weight, h=1e-4, rtol=1e-4, atol=1e-7):
    """Worst excess of |analytic - numeric| over max(atol, rtol*|numeric|); <= 0 means pass."""
    leaves = [Tensor(a, requires_grad=True) for a in inputs]
    with Tape() as tape:
        loss = (forward(*leaves) * Tensor(weight)).sum()
    g = tape.backward(loss)
    analytic = [g.get(t, np.zeros(t.shape)) for t in leaves] + \
               [g.get(p, np.zeros(p.shape)) for p in params]
    arrays = list(inputs) + [p.data for p in params]
    numeric = fd_gradient(lambda: float((forward(*[Tensor(a) for a in inputs]).data * weight).sum()),
                          arrays, h)
    return max(float(np.max(np.abs(a - n) - np.maximum(atol, rtol * np.abs(n))))
               for a, n in zip(analytic, numeric))


def randomize(layer, rng):
    for _, p in layer.named_parameters():
        if p.name == "alpha":
            p.data[...] = rng.uniform(0.3, 1.5)
        elif p.name == "gamma":
            p.data[...] = rng.uniform(0.5, 1.5, p.shape)
        else:
            p.data[...] = rng.uniform(-0.5, 0.5, p.shape)
    return layer


def layer_grad_excess(layer, seed):
    rng = np.random.default_rng(seed)
    randomize(layer, rng)
    x = away_from_kinks(layer, rng.uniform(-2.0, 2.0, (3, layer.channels)))
    w = rng.standard_normal(x.shape)
    return gradient_errors(layer, [x], layer.parameters(), w)
