"""Synthetic toy datasets and their on-disk format.

File layout: ``DFK1`` | u64 LE header length | JSON header | f64 LE inputs | i64 LE labels.
"""

from __future__ import annotations

import gzip
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, FileFormatError, ParameterError

DATA_MAGIC = b"DFK1"
KINDS = ("cluster_tokens", "parity_seq")


@dataclass
class Dataset:
    inputs: np.ndarray  # [n, T, C_in]
    labels: np.ndarray  # [n]
    n_classes: int
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return int(self.labels.shape[0])

    @property
    def seq_len(self) -> int:
        return int(self.inputs.shape[1])

    @property
    def in_dim(self) -> int:
        return int(self.inputs.shape[2])

    def batches(self, batch_size: int, limit: int | None = None):
        n = len(self)
        for k, start in enumerate(range(0, n, batch_size)):
            if limit is not None and k >= limit:
                return
            yield self.inputs[start : start + batch_size], self.labels[start : start + batch_size]


@dataclass
class ToyBatch:
    inputs: np.ndarray
    labels: np.ndarray


def _balanced_labels(n: int, n_classes: int, rng) -> np.ndarray:
    return rng.permutation(np.arange(n) % n_classes).astype(np.int64)


def make_synthetic_dataset(kind: str, n: int, seed: int, *, n_classes: int = 2,
                           seq_len: int = 16, in_dim: int = 16, margin: float = 3.0,
                           noise: float = 1.0, token_noise: float = 1.0,
                           n_marked: int = 3, batch_size: int | None = None) -> Dataset:
    """Deterministic toy classification data.

    ``cluster_tokens``: each sequence's mean token is drawn from one of
    ``n_classes`` isotropic Gaussians (std ``noise``) whose centers sit
    ``margin * noise`` from every pairwise decision boundary; tokens add zero-mean
    jitter around that mean. ``parity_seq``: one random bit per token, encoded
    as +-1 in channel 0 plus noise in the rest; the label is the parity of the
    bits at ``n_marked`` fixed positions.
    """
    if kind not in KINDS:
        raise ParameterError(f"dataset kind must be one of {KINDS}, got {kind!r}")
    if batch_size is not None and n < 2 * batch_size:
        raise ParameterError(f"need n >= 2 * batch_size, got n={n}, batch_size={batch_size}")
    if n < 2:
        raise ParameterError(f"need n >= 2, got {n}")
    rng = np.random.default_rng(seed)
    meta = {"kind": kind, "seed": int(seed), "n": int(n), "n_classes": int(n_classes),
            "seq_len": int(seq_len), "in_dim": int(in_dim)}

    if kind == "cluster_tokens":
        if n_classes > in_dim:
            raise ParameterError("cluster_tokens needs n_classes <= in_dim")
        q, _ = np.linalg.qr(rng.standard_normal((in_dim, in_dim)))
        # orthonormal directions scaled so each center is margin*noise from every boundary
        centers = q[:, :n_classes].T * (margin * noise * np.sqrt(2.0))
        labels = _balanced_labels(n, n_classes, rng)
        means = centers[labels] + noise * rng.standard_normal((n, in_dim))
        jitter = token_noise * rng.standard_normal((n, seq_len, in_dim))
        jitter -= jitter.mean(axis=1, keepdims=True)
        inputs = means[:, None, :] + jitter
        meta.update(margin=float(margin), noise=float(noise), token_noise=float(token_noise))
    else:
        if n_classes != 2:
            raise ParameterError("parity_seq is a binary task")
        marked = np.sort(rng.choice(seq_len, size=n_marked, replace=False))
        bits = rng.integers(0, 2, size=(n, seq_len))
        labels = (bits[:, marked].sum(axis=1) % 2).astype(np.int64)
        inputs = 0.1 * token_noise * rng.standard_normal((n, seq_len, in_dim))
        inputs[:, :, 0] += 2.0 * bits - 1.0
        meta.update(marked=[int(m) for m in marked], token_noise=float(token_noise))
    return Dataset(np.ascontiguousarray(inputs, dtype=np.float64), labels, n_classes, meta)


def write_dataset(ds: Dataset, path) -> None:
    header = dict(ds.meta)
    header.update(n=len(ds), n_classes=ds.n_classes,
                  shapes={"inputs": list(ds.inputs.shape), "labels": list(ds.labels.shape)})
    hbytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(DATA_MAGIC)
        fh.write(struct.pack("<Q", len(hbytes)))
        fh.write(hbytes)
        fh.write(np.ascontiguousarray(ds.inputs, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(ds.labels, dtype="<i8").tobytes())


def read_dataset(path) -> Dataset:
    raw = Path(path).read_bytes()
    if raw[:4] != DATA_MAGIC or len(raw) < 12:
        raise FileFormatError(f"{path} is not a DFK1 dataset file")
    (n,) = struct.unpack("<Q", raw[4:12])
    try:
        header = json.loads(raw[12 : 12 + n])
        shp_in = tuple(header["shapes"]["inputs"])
        shp_lab = tuple(header["shapes"]["labels"])
        n_classes = int(header["n_classes"])
    except (ValueError, KeyError, TypeError) as e:
        raise FileFormatError(f"{path}: bad header ({e})") from None
    count_in, count_lab = int(np.prod(shp_in)), int(np.prod(shp_lab))
    off = 12 + n
    if len(raw) != off + 8 * (count_in + count_lab):
        raise FileFormatError(f"{path}: payload size does not match header shapes")
    inputs = np.frombuffer(raw, dtype="<f8", count=count_in, offset=off).astype(np.float64)
    off += 8 * count_in
    labels = np.frombuffer(raw, dtype="<i8", count=count_lab, offset=off).astype(np.int64)
    return Dataset(inputs.reshape(shp_in), labels.reshape(shp_lab), n_classes, header)


def split(ds: Dataset, n_val: int) -> tuple[Dataset, Dataset]:
    if not 0 < n_val < len(ds):
        raise ParameterError(f"validation size {n_val} must lie in (0, {len(ds)})")
    cut = len(ds) - n_val
    return (Dataset(ds.inputs[:cut], ds.labels[:cut], ds.n_classes, dict(ds.meta, split="train")),
            Dataset(ds.inputs[cut:], ds.labels[cut:], ds.n_classes, dict(ds.meta, split="val")))


# ---------------------------------------------------------------- IDX images


def _read_idx(path) -> np.ndarray:
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] != b"\x00\x00" or raw[2] != 0x08:
        raise FileFormatError(f"{path}: only unsigned-byte IDX files are supported")
    ndim = raw[3]
    dims = struct.unpack(">" + "I" * ndim, raw[4 : 4 + 4 * ndim])
    return np.frombuffer(raw, dtype=np.uint8, offset=4 + 4 * ndim).reshape(dims)


def load_idx_patches(images_path, labels_path, patch: int, limit: int | None = None) -> Dataset:
    """Cut ``[n, H, W]`` uint8 images into non-overlapping ``patch x patch`` tokens."""
    images = _read_idx(images_path)
    labels = _read_idx(labels_path).astype(np.int64)
    if images.ndim != 3 or labels.shape != (images.shape[0],):
        raise ContractError(f"IDX shapes do not match: images {images.shape}, labels {labels.shape}")
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    n, h, w = images.shape
    if h % patch or w % patch:
        raise ParameterError(f"patch size {patch} does not tile {h}x{w} images")
    x = images.astype(np.float64) / 255.0
    x = x.reshape(n, h // patch, patch, w // patch, patch).transpose(0, 1, 3, 2, 4)
    x = x.reshape(n, (h // patch) * (w // patch), patch * patch)
    x = (x - x.mean()) / (x.std() + 1e-12)
    n_classes = int(labels.max()) + 1
    meta = {"kind": "idx", "n": int(n), "n_classes": n_classes, "patch": int(patch),
            "source": str(images_path)}
    return Dataset(np.ascontiguousarray(x), labels, n_classes, meta)
