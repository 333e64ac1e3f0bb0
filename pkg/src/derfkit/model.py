"""Pre-norm transformer encoder classifier with a swappable normalization slot."""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__, funcs
from . import tensor as T
from .errors import ConfigError, ContractError, FileFormatError, ShapeError
from .layers import S_MODES, Module, init_layer
from .tensor import Tensor

SLOT_KINDS = ("layer_norm", "rms_norm", "dyt", "derf", "dynamic")
CKPT_MAGIC = b"DFKC"


@dataclass(frozen=True)
class SlotSpec:
    """What goes in every normalization position of the model."""

    kind: str = "derf"
    function: str | None = None
    s_mode: str | None = None
    transforms: tuple = ()

    @classmethod
    def parse(cls, value) -> "SlotSpec":
        if isinstance(value, SlotSpec):
            return value
        if isinstance(value, str):
            parts = value.split(":")
            if parts[0] == "dynamic":
                if len(parts) not in (2, 3):
                    raise ConfigError(f"norm_slot {value!r}: expected dynamic:<function>[:<s_mode>]")
                return cls("dynamic", parts[1], parts[2] if len(parts) == 3 else None)
            if len(parts) != 1:
                raise ConfigError(f"norm_slot {value!r} is malformed")
            return cls(parts[0])
        if isinstance(value, dict):
            unknown = set(value) - {f.name for f in fields(cls)}
            if unknown:
                raise ConfigError([f"norm_slot: unknown key {k!r}" for k in sorted(unknown)])
            tr = tuple(dict(t) for t in value.get("transforms", ()))
            return cls(value.get("kind", "derf"), value.get("function"), value.get("s_mode"), tr)
        raise ConfigError(f"norm_slot must be a string or object, got {type(value).__name__}")

    def problems(self) -> list[str]:
        out = []
        if self.kind not in SLOT_KINDS:
            out.append(f"norm_slot.kind must be one of {SLOT_KINDS}, got {self.kind!r}")
        if self.s_mode is not None and self.s_mode not in S_MODES:
            out.append(f"norm_slot.s_mode must be one of {S_MODES}, got {self.s_mode!r}")
        if self.kind == "dynamic":
            if not self.function:
                out.append("norm_slot.function is required for dynamic slots")
            else:
                try:
                    funcs.build(self.function, self.transforms)
                except Exception as e:  # surfaced as a config problem
                    out.append(f"norm_slot: {e}")
        elif self.transforms or self.function:
            out.append(f"norm_slot kind {self.kind!r} takes no function or transforms")
        return out

    def resolve_fn(self) -> funcs.PointwiseFn | None:
        if self.kind == "dynamic":
            return funcs.build(self.function, self.transforms)
        return None

    def label(self) -> str:
        if self.kind != "dynamic":
            base = self.kind
        else:
            base = funcs.build(self.function, self.transforms).name
        return base if self.s_mode is None else f"{base}[s={self.s_mode}]"

    def to_json(self):
        d = {"kind": self.kind}
        if self.function is not None:
            d["function"] = self.function
        if self.s_mode is not None:
            d["s_mode"] = self.s_mode
        if self.transforms:
            d["transforms"] = [dict(t) for t in self.transforms]
        return d


@dataclass(frozen=True)
class ToyTransformerConfig:
    depth: int = 2
    d_model: int = 64
    n_heads: int = 4
    d_ff: int = 256
    seq_len: int = 16
    in_dim: int = 16
    n_classes: int = 2
    norm_slot: SlotSpec = field(default_factory=SlotSpec)
    drop_path_rate: float = 0.0
    seed: int = 0
    alpha0: float = 0.5
    norm_eps: float = 1e-5
    init_std: float = 0.02

    def __post_init__(self):
        object.__setattr__(self, "norm_slot", SlotSpec.parse(self.norm_slot))

    def problems(self) -> list[str]:
        out = []
        for name in ("depth", "d_model", "n_heads", "d_ff", "seq_len", "in_dim"):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 1:
                out.append(f"{name} must be a positive integer, got {getattr(self, name)!r}")
        if isinstance(self.d_model, int) and isinstance(self.n_heads, int) and self.n_heads > 0 \
                and self.d_model % self.n_heads:
            out.append(f"d_model ({self.d_model}) must be divisible by n_heads ({self.n_heads})")
        if not isinstance(self.n_classes, int) or self.n_classes < 2:
            out.append(f"n_classes must be >= 2, got {self.n_classes!r}")
        if not 0.0 <= self.drop_path_rate < 1.0:
            out.append(f"drop_path_rate must lie in [0, 1), got {self.drop_path_rate}")
        if not self.norm_eps >= 0:
            out.append(f"norm_eps must be >= 0, got {self.norm_eps}")
        out.extend(self.norm_slot.problems())
        return out

    def to_json(self) -> dict:
        d = asdict(self)
        d["norm_slot"] = self.norm_slot.to_json()
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ToyTransformerConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError([f"model: unknown key {k!r}" for k in sorted(unknown)])
        return cls(**d)


def trunc_normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    """Normal(0, std) truncated at two standard deviations by redrawing."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return out * std


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, std: float):
        self.weight = Tensor(trunc_normal(rng, (d_in, d_out), std), requires_grad=True)
        self.bias = Tensor(np.zeros(d_out), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias


class Attention(Module):
    def __init__(self, d: int, heads: int, rng, std):
        self.heads = heads
        self.q = Linear(d, d, rng, std)
        self.k = Linear(d, d, rng, std)
        self.v = Linear(d, d, rng, std)
        self.out = Linear(d, d, rng, std)

    def _split(self, x: Tensor) -> Tensor:
        b, t, d = x.shape
        return x.reshape(b, t, self.heads, d // self.heads).transpose(0, 2, 1, 3)

    def forward(self, x: Tensor) -> Tensor:
        b, t, d = x.shape
        q, k, v = self._split(self.q(x)), self._split(self.k(x)), self._split(self.v(x))
        scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(d // self.heads))
        ctx = T.softmax(scores, axis=-1) @ v
        return self.out(ctx.transpose(0, 2, 1, 3).reshape(b, t, d))


class FeedForward(Module):
    def __init__(self, d: int, d_ff: int, rng, std):
        self.fc1 = Linear(d, d_ff, rng, std)
        self.fc2 = Linear(d_ff, d, rng, std)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(T.gelu(self.fc1(x)))


def _drop_path(branch: Tensor, rate: float, mode: str, rng) -> Tensor:
    if mode != "train" or rate == 0.0:
        return branch
    keep = (rng.random(branch.shape[0]) >= rate) / (1.0 - rate)
    return branch * Tensor(keep.reshape((-1,) + (1,) * (branch.ndim - 1)))


class Block(Module):
    def __init__(self, cfg: ToyTransformerConfig, rng):
        self.norm1 = _make_slot(cfg)
        self.attn = Attention(cfg.d_model, cfg.n_heads, rng, cfg.init_std)
        self.norm2 = _make_slot(cfg)
        self.ffn = FeedForward(cfg.d_model, cfg.d_ff, rng, cfg.init_std)
        self.drop_path_rate = cfg.drop_path_rate

    def forward(self, x: Tensor, mode: str, rng) -> Tensor:
        x = x + _drop_path(self.attn(self.norm1(x)), self.drop_path_rate, mode, rng)
        return x + _drop_path(self.ffn(self.norm2(x)), self.drop_path_rate, mode, rng)


def _make_slot(cfg: ToyTransformerConfig) -> Module:
    slot = cfg.norm_slot
    return init_layer(slot.kind, cfg.d_model, slot.s_mode, cfg.alpha0, slot.resolve_fn(),
                      cfg.norm_eps)


class ToyTransformer(Module):
    def __init__(self, cfg: ToyTransformerConfig):
        self.config = cfg
        rng = np.random.default_rng(cfg.seed)
        self.embed = Linear(cfg.in_dim, cfg.d_model, rng, cfg.init_std)
        self.pos = Tensor(trunc_normal(rng, (cfg.seq_len, cfg.d_model), cfg.init_std),
                          requires_grad=True)
        self.blocks = [Block(cfg, rng) for _ in range(cfg.depth)]
        self.norm_final = _make_slot(cfg)
        self.head = Linear(cfg.d_model, cfg.n_classes, rng, cfg.init_std)

    def norm_layers(self) -> list[Module]:
        out = []
        for b in self.blocks:
            out += [b.norm1, b.norm2]
        return out + [self.norm_final]

    def forward(self, inputs, mode: str = "eval", rng: np.random.Generator | None = None) -> Tensor:
        if mode not in ("train", "eval"):
            raise ContractError(f"mode must be 'train' or 'eval', got {mode!r}")
        cfg = self.config
        x = inputs.data if isinstance(inputs, Tensor) else np.asarray(inputs, dtype=np.float64)
        if x.ndim != 3 or x.shape[1:] != (cfg.seq_len, cfg.in_dim):
            raise ShapeError(
                f"expected inputs [B, {cfg.seq_len}, {cfg.in_dim}], got {list(x.shape)}")
        if mode == "train" and cfg.drop_path_rate > 0 and rng is None:
            raise ContractError("train mode with drop_path_rate > 0 needs an rng")
        h = self.embed(Tensor(x)) + self.pos
        for block in self.blocks:
            h = block(h, mode, rng)
        h = self.norm_final(h)
        return self.head(h.mean(axis=1))


def build(config: ToyTransformerConfig) -> ToyTransformer:
    problems = config.problems()
    if problems:
        raise ConfigError(problems)
    return ToyTransformer(config)


def forward(model: ToyTransformer, batch, mode: str = "eval", rng=None) -> Tensor:
    inputs = batch.inputs if hasattr(batch, "inputs") else batch
    return model.forward(inputs, mode, rng)


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(model: ToyTransformer, path, extra: dict | None = None) -> None:
    """Layout: ``DFKC`` | u64 LE header length | JSON header | f64 LE parameter blob."""
    manifest, chunks, offset = [], [], 0
    for name, p in model.named_parameters():
        raw = np.ascontiguousarray(p.data, dtype="<f8").tobytes()
        manifest.append({"name": name, "shape": list(p.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    header = {
        "format": "derfkit-checkpoint/1",
        "version": __version__,
        "config": model.config.to_json(),
        "manifest": manifest,
        "extra": extra or {},
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<Q", len(hbytes)))
        fh.write(hbytes)
        for c in chunks:
            fh.write(c)


def read_checkpoint_header(path) -> dict:
    with open(path, "rb") as fh:
        if fh.read(4) != CKPT_MAGIC:
            raise FileFormatError(f"{path} is not a derfkit checkpoint")
        (n,) = struct.unpack("<Q", fh.read(8))
        return json.loads(fh.read(n))


def load_checkpoint(path) -> ToyTransformer:
    data = Path(path).read_bytes()
    if data[:4] != CKPT_MAGIC or len(data) < 12:
        raise FileFormatError(f"{path} is not a derfkit checkpoint")
    (n,) = struct.unpack("<Q", data[4:12])
    try:
        header = json.loads(data[12 : 12 + n])
        manifest = header["manifest"]
        config = header["config"]
    except (ValueError, KeyError, TypeError) as e:
        raise FileFormatError(f"{path}: bad header ({e})") from None
    blob = data[12 + n :]
    model = build(ToyTransformerConfig.from_json(config))
    params = dict(model.named_parameters())
    if set(params) != {e["name"] for e in manifest}:
        raise ContractError(f"{path}: manifest does not match the configured model")
    for e in manifest:
        p = params[e["name"]]
        if tuple(e["shape"]) != p.shape:
            raise ContractError(f"{path}: {e['name']} has shape {e['shape']}, expected {list(p.shape)}")
        count = int(np.prod(e["shape"], dtype=np.int64))
        if e["offset"] + 8 * count > len(blob):
            raise FileFormatError(f"{path}: parameter blob is truncated")
        p.data = np.frombuffer(blob, dtype="<f8", count=count, offset=e["offset"]) \
            .astype(np.float64).reshape(p.shape)
    return model
