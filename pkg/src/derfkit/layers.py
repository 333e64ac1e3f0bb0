"""Normalization layers and their point-wise replacements."""

from __future__ import annotations

import numpy as np

from . import funcs
from . import tensor as T
from .errors import ParameterError, ShapeError
from .tensor import Tensor

NORM_EPS = 1e-5
S_MODES = ("absent", "scalar", "per_channel")


class Module:
    """Parameters are Tensor attributes with ``requires_grad``; children are
    Module attributes or lists of Modules. Registration order is attribute order."""

    def named_parameters(self, prefix: str = ""):
        for key, val in vars(self).items():
            if isinstance(val, Tensor) and val.requires_grad:
                yield prefix + key, val
            elif isinstance(val, Module):
                yield from val.named_parameters(f"{prefix}{key}.")
            elif isinstance(val, list):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{key}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _param(value, name: str) -> Tensor:
    return Tensor(value, requires_grad=True, name=name)


def _check_channels(x: Tensor, c: int, layer: str):
    if x.ndim < 1 or x.shape[-1] != c:
        raise ShapeError(f"{layer}: input shape {x.shape} does not end in {c} channels")


class LayerNorm(Module):
    kind = "layer_norm"

    def __init__(self, channels: int, eps: float = NORM_EPS):
        if channels < 1:
            raise ParameterError(f"channel count must be >= 1, got {channels}")
        if not eps >= 0:
            raise ParameterError(f"norm epsilon must be >= 0, got {eps}")
        self.channels = channels
        self.eps = eps
        self.gamma = _param(np.ones(channels), "gamma")
        self.beta = _param(np.zeros(channels), "beta")

    def forward(self, x: Tensor) -> Tensor:
        _check_channels(x, self.channels, "LayerNorm")
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=-1, keepdims=True)
        return xc / T.sqrt(var + self.eps) * self.gamma + self.beta


class RMSNorm(Module):
    kind = "rms_norm"

    def __init__(self, channels: int, eps: float = NORM_EPS, bias: bool = False):
        if channels < 1:
            raise ParameterError(f"channel count must be >= 1, got {channels}")
        if not eps >= 0:
            raise ParameterError(f"norm epsilon must be >= 0, got {eps}")
        self.channels = channels
        self.eps = eps
        self.gamma = _param(np.ones(channels), "gamma")
        self.beta = _param(np.zeros(channels), "beta") if bias else None

    def forward(self, x: Tensor) -> Tensor:
        _check_channels(x, self.channels, "RMSNorm")
        ms = (x * x).mean(axis=-1, keepdims=True)
        y = x / T.sqrt(ms + self.eps) * self.gamma
        return y + self.beta if self.beta is not None else y


class DynamicPointwise(Module):
    """``gamma * f(alpha * x + s) + beta`` with scalar alpha.

    ``s_mode`` is ``"absent"`` (no shift), ``"scalar"`` or ``"per_channel"``.
    """

    kind = "dynamic"

    def __init__(self, fn: funcs.PointwiseFn, channels: int, s_mode: str = "scalar",
                 alpha0: float = 0.5):
        if channels < 1:
            raise ParameterError(f"channel count must be >= 1, got {channels}")
        if s_mode not in S_MODES:
            raise ParameterError(f"s_mode must be one of {S_MODES}, got {s_mode!r}")
        self.fn = fn
        self.channels = channels
        self.s_mode = s_mode
        self.alpha = _param(np.array(float(alpha0)), "alpha")
        if s_mode == "scalar":
            self.s = _param(np.array(0.0), "s")
        elif s_mode == "per_channel":
            self.s = _param(np.zeros(channels), "s")
        else:
            self.s = None
        self.gamma = _param(np.ones(channels), "gamma")
        self.beta = _param(np.zeros(channels), "beta")

    def forward(self, x: Tensor) -> Tensor:
        _check_channels(x, self.channels, self.fn.name)
        z = self.alpha * x
        if self.s is not None:
            z = z + self.s
        return T.apply_fn(z, self.fn) * self.gamma + self.beta


def DyT(channels: int, alpha0: float = 0.5) -> DynamicPointwise:
    return DynamicPointwise(funcs.get("tanh"), channels, "absent", alpha0)


def Derf(channels: int, alpha0: float = 0.5, s_mode: str = "scalar") -> DynamicPointwise:
    return DynamicPointwise(funcs.get("erf"), channels, s_mode, alpha0)


LAYER_KINDS = ("layer_norm", "rms_norm", "dyt", "derf", "dynamic")


def init_layer(kind: str, channels: int, s_mode: str | None = None, alpha0: float = 0.5,
               fn: funcs.PointwiseFn | None = None, norm_eps: float = NORM_EPS) -> Module:
    """gamma = 1, beta = 0, alpha = alpha0, s = 0."""
    if channels < 1:
        raise ParameterError(f"channel count must be >= 1, got {channels}")
    if kind == "layer_norm":
        return LayerNorm(channels, norm_eps)
    if kind == "rms_norm":
        return RMSNorm(channels, norm_eps)
    if kind == "dyt":
        return DynamicPointwise(funcs.get("tanh"), channels, s_mode or "absent", alpha0)
    if kind == "derf":
        return DynamicPointwise(funcs.get("erf"), channels, s_mode or "scalar", alpha0)
    if kind == "dynamic":
        if fn is None:
            raise ParameterError("dynamic layer needs a point-wise function")
        return DynamicPointwise(fn, channels, s_mode or "scalar", alpha0)
    raise ParameterError(f"unknown layer kind {kind!r}; expected one of {LAYER_KINDS}")
