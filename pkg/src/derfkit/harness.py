"""Training loop, evaluation-mode loss protocol and experiment runner."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, funcs
from . import tensor as T
from .data import Dataset, make_synthetic_dataset, read_dataset, split
from .errors import ConfigError, ContractError
from .model import SlotSpec, ToyTransformer, ToyTransformerConfig, build, load_checkpoint, \
    save_checkpoint


# ---------------------------------------------------------------- specs


def _from_dict(cls, d: dict, where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object, got {type(d).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError([f"{where}: unknown key {k!r}" for k in unknown])
    return cls(**d)


@dataclass(frozen=True)
class OptimizerSpec:
    name: str = "adamw"
    lr: float = 1e-3
    weight_decay: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def problems(self) -> list[str]:
        out = []
        if self.name != "adamw":
            out.append(f"optimizer.name must be 'adamw', got {self.name!r}")
        if not self.lr >= 0:
            out.append(f"optimizer.lr must be >= 0, got {self.lr}")
        for b in ("beta1", "beta2"):
            if not 0.0 < getattr(self, b) < 1.0:
                out.append(f"optimizer.{b} must lie in (0, 1), got {getattr(self, b)}")
        if not self.weight_decay >= 0:
            out.append(f"optimizer.weight_decay must be >= 0, got {self.weight_decay}")
        return out


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "cluster_tokens"
    n_train: int = 2048
    n_val: int = 512
    n_classes: int = 2
    margin: float = 3.0
    seed: int = 0
    path: str | None = None

    def problems(self, batch_size: int) -> list[str]:
        out = []
        if self.path is None and self.kind not in ("cluster_tokens", "parity_seq"):
            out.append(f"dataset.kind must be cluster_tokens or parity_seq, got {self.kind!r}")
        if self.n_train < 2 * batch_size:
            out.append(f"dataset.n_train ({self.n_train}) must be >= 2 * batch_size ({batch_size})")
        if self.n_val < 1:
            out.append(f"dataset.n_val must be >= 1, got {self.n_val}")
        return out


@dataclass(frozen=True)
class TrainSpec:
    model: ToyTransformerConfig = field(default_factory=ToyTransformerConfig)
    optimizer: OptimizerSpec = field(default_factory=OptimizerSpec)
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    steps: int = 1000
    batch_size: int = 64
    warmup_steps: int = 50
    lr_schedule: str = "cosine"
    master_seed: int = 0
    divergence_factor: float = 50.0
    eval_batch_size: int = 256
    eval_max_batches: int | None = None
    eval_every: int | None = None
    target_accuracy: float | None = None

    def problems(self) -> list[str]:
        out = self.model.problems() + self.optimizer.problems() + self.dataset.problems(self.batch_size)
        if self.steps < 1:
            out.append(f"steps must be >= 1, got {self.steps}")
        if self.batch_size < 1:
            out.append(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr_schedule not in ("constant", "cosine"):
            out.append(f"lr_schedule must be 'constant' or 'cosine', got {self.lr_schedule!r}")
        if self.warmup_steps < 0:
            out.append(f"warmup_steps must be >= 0, got {self.warmup_steps}")
        if self.eval_every is not None and self.eval_every < 1:
            out.append(f"eval_every must be >= 1, got {self.eval_every}")
        if self.target_accuracy is not None and self.eval_every is None:
            out.append("target_accuracy needs eval_every")
        return out

    def validate(self) -> "TrainSpec":
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        return self

    def to_json(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_json()
        return d

    @classmethod
    def from_json(cls, d: dict) -> "TrainSpec":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError([f"train: unknown key {k!r}" for k in unknown])
        if "model" in d:
            d["model"] = ToyTransformerConfig.from_json(d["model"])
        if "optimizer" in d:
            d["optimizer"] = _from_dict(OptimizerSpec, d["optimizer"], "optimizer")
        if "dataset" in d:
            d["dataset"] = _from_dict(DatasetSpec, d["dataset"], "dataset")
        return cls(**d)


# ---------------------------------------------------------------- optimizer


def lr_at(step: int, spec: TrainSpec) -> float:
    base = spec.optimizer.lr
    if spec.warmup_steps and step < spec.warmup_steps:
        return base * (step + 1) / spec.warmup_steps
    if spec.lr_schedule == "constant":
        return base
    span = max(1, spec.steps - spec.warmup_steps)
    progress = min(1.0, (step - spec.warmup_steps) / span)
    return base * 0.5 * (1.0 + math.cos(math.pi * progress))


class AdamW:
    """Decoupled weight decay, applied to matrices only (not to biases or norm/point-wise params)."""

    def __init__(self, named_params, spec: OptimizerSpec):
        self.params = list(named_params)
        self.spec = spec
        self.m = [np.zeros_like(p.data) for _, p in self.params]
        self.v = [np.zeros_like(p.data) for _, p in self.params]
        self.t = 0

    def step(self, grads: dict, lr: float) -> None:
        s = self.spec
        self.t += 1
        c1 = 1.0 - s.beta1**self.t
        c2 = 1.0 - s.beta2**self.t
        for i, (_, p) in enumerate(self.params):
            g = grads.get(p)
            if g is None:
                continue
            self.m[i] = s.beta1 * self.m[i] + (1.0 - s.beta1) * g
            self.v[i] = s.beta2 * self.v[i] + (1.0 - s.beta2) * g * g
            update = (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + s.eps)
            if p.ndim >= 2 and s.weight_decay:
                update = update + s.weight_decay * p.data
            p.data = p.data - lr * update


# ---------------------------------------------------------------- results


@dataclass
class TrialResult:
    trial_id: str
    point: dict
    seed: int
    final_train_loss: float | None
    eval_mode_train_loss: float | None
    train_mode_train_loss: float | None
    val_accuracy: float | None
    diverged: bool
    steps_completed: int
    loss_history: list = field(default_factory=list)
    val_history: list = field(default_factory=list)
    wall_time: float = 0.0

    def to_json(self, include_wall_time: bool = False) -> dict:
        d = asdict(self)
        if not include_wall_time:
            d.pop("wall_time")
        return d


def detect_divergence(history, factor: float = 50.0) -> bool:
    """Non-finite loss anywhere, or any loss above ``factor`` x the step-10 loss."""
    h = np.asarray(history, dtype=np.float64)
    if not np.all(np.isfinite(h)):
        return True
    return h.size >= 10 and bool(np.any(h[9:] > factor * h[9]))


def stable_seed(master_seed: int, key: str) -> int:
    digest = hashlib.sha256(f"{master_seed}:{key}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


# ---------------------------------------------------------------- data


def load_data(spec: TrainSpec) -> tuple[Dataset, Dataset]:
    ds = spec.dataset
    m = spec.model
    if ds.path is not None:
        if not Path(ds.path).exists():
            raise FileNotFoundError(f"dataset file not found: {ds.path}")
        full = read_dataset(ds.path)
    else:
        full = make_synthetic_dataset(ds.kind, ds.n_train + ds.n_val, ds.seed,
                                      n_classes=ds.n_classes, seq_len=m.seq_len,
                                      in_dim=m.in_dim, margin=ds.margin)
    return split(full, ds.n_val)


def _check_compat(model: ToyTransformer, dataset: Dataset):
    cfg = model.config
    if dataset.inputs.shape[1:] != (cfg.seq_len, cfg.in_dim):
        raise ContractError(
            f"dataset tokens {list(dataset.inputs.shape[1:])} do not match model "
            f"[{cfg.seq_len}, {cfg.in_dim}]")
    if len(dataset) and (dataset.labels.min() < 0 or dataset.labels.max() >= cfg.n_classes):
        raise ContractError(f"dataset labels fall outside [0, {cfg.n_classes})")


# ---------------------------------------------------------------- evaluation


def _mean_loss(model, dataset, batch_size, max_batches, mode, rng) -> float:
    total, count = 0.0, 0
    with np.errstate(all="ignore"):
        for xb, yb in dataset.batches(batch_size, max_batches):
            loss = T.cross_entropy(model.forward(xb, mode, rng), yb)
            total += loss.item() * len(yb)
            count += len(yb)
    return total / count


def eval_mode_train_loss(checkpoint, dataset: Dataset, batch_size: int = 256,
                         max_batches: int | None = None) -> float:
    """Mean cross-entropy over the training set with drop-path off.

    ``checkpoint`` is a model or a checkpoint path. ``max_batches`` restricts
    the pass to the first K batches.
    """
    model = load_checkpoint(checkpoint) if isinstance(checkpoint, (str, os.PathLike)) else checkpoint
    _check_compat(model, dataset)
    return _mean_loss(model, dataset, batch_size, max_batches, "eval", None)


def train_mode_loss(model: ToyTransformer, dataset: Dataset, seed: int, batch_size: int = 256,
                    max_batches: int | None = None) -> float:
    """Same pass as :func:`eval_mode_train_loss` but with stochastic depth active."""
    _check_compat(model, dataset)
    rng = np.random.default_rng(seed)
    return _mean_loss(model, dataset, batch_size, max_batches, "train", rng)


def accuracy(model: ToyTransformer, dataset: Dataset, batch_size: int = 256) -> float:
    _check_compat(model, dataset)
    hits = 0
    with np.errstate(all="ignore"):
        for xb, yb in dataset.batches(batch_size):
            hits += int(np.sum(np.argmax(model.forward(xb, "eval").data, axis=1) == yb))
    return hits / len(dataset)


# ---------------------------------------------------------------- training


def train(spec: TrainSpec, checkpoint_path=None, *, trial_id: str = "train", point: dict | None = None,
          data: tuple[Dataset, Dataset] | None = None) -> tuple[TrialResult, ToyTransformer]:
    """Run AdamW on the toy task; divergence ends the run early and is reported, not raised.

    With ``eval_every`` set, validation accuracy is logged periodically and the
    run stops once it reaches ``target_accuracy``.
    """
    spec.validate()
    started = time.perf_counter()
    train_ds, val_ds = data if data is not None else load_data(spec)
    model = build(spec.model)
    _check_compat(model, train_ds)
    opt = AdamW(model.named_parameters(), spec.optimizer)
    rng = np.random.default_rng([spec.master_seed, 1])

    history: list[float] = []
    val_history: list = []
    order = rng.permutation(len(train_ds))
    cursor = 0
    diverged = False
    with np.errstate(all="ignore"):
        for step in range(spec.steps):
            if cursor + spec.batch_size > len(order):
                order = rng.permutation(len(train_ds))
                cursor = 0
            idx = order[cursor : cursor + spec.batch_size]
            cursor += spec.batch_size
            with T.Tape() as tape:
                logits = model.forward(train_ds.inputs[idx], "train", rng)
                loss = T.cross_entropy(logits, train_ds.labels[idx])
            value = loss.item()
            history.append(value)
            if detect_divergence(history, spec.divergence_factor):
                diverged = True
                break
            grads = tape.backward(loss)
            opt.step(grads, lr_at(step, spec))
            if spec.eval_every and (step + 1) % spec.eval_every == 0:
                acc = accuracy(model, val_ds, spec.eval_batch_size)
                val_history.append([step + 1, acc])
                if spec.target_accuracy is not None and acc >= spec.target_accuracy:
                    break

    if diverged:
        final = ev_loss = tr_loss = acc = None
    else:
        tail = history[-min(20, len(history)):]
        final = float(np.mean(tail))
        ev_loss = eval_mode_train_loss(model, train_ds, spec.eval_batch_size, spec.eval_max_batches)
        tr_loss = train_mode_loss(model, train_ds, stable_seed(spec.master_seed, "train-mode-probe"),
                                  spec.eval_batch_size, spec.eval_max_batches)
        acc = accuracy(model, val_ds, spec.eval_batch_size)
    if checkpoint_path is not None:
        save_checkpoint(model, checkpoint_path, {"trial_id": trial_id, "diverged": diverged})
    result = TrialResult(
        trial_id=trial_id,
        point=point or {"slot": spec.model.norm_slot.to_json()},
        seed=int(spec.model.seed),
        final_train_loss=final,
        eval_mode_train_loss=ev_loss,
        train_mode_train_loss=tr_loss,
        val_accuracy=acc,
        diverged=diverged,
        steps_completed=len(history) if not diverged else len(history) - 1,
        loss_history=[float(v) if math.isfinite(v) else None for v in history],
        val_history=val_history,
        wall_time=time.perf_counter() - started,
    )
    return result, model


# ---------------------------------------------------------------- experiments


EXPERIMENT_KINDS = {
    "search": set(),
    "shift_sweep": {"hshift", "vshift"},
    "bound_sweep": {"clip"},
    "mix_sweep": {"mix"},
    "flat_sweep": {"flat"},
    "monotonic_compare": {"negate"},
    "growth_probe": set(),
    "s_ablation": set(),
    "eps_tanh_compare": {"scale"},
    "fitloss": set(),
}


@dataclass(frozen=True)
class GridPoint:
    slot: SlotSpec
    lr: float | None = None
    tags: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        lab = self.slot.label()
        return lab if self.lr is None else f"{lab}@lr={self.lr:g}"

    def to_json(self) -> dict:
        d = {"label": self.label, "slot": self.slot.to_json(), "tags": dict(self.tags)}
        if self.lr is not None:
            d["lr"] = self.lr
        return d

    @classmethod
    def from_json(cls, d: dict) -> "GridPoint":
        unknown = set(d) - {"label", "slot", "tags", "lr"}
        if unknown:
            raise ConfigError([f"grid point: unknown key {k!r}" for k in sorted(unknown)])
        return cls(SlotSpec.parse(d["slot"]), d.get("lr"), dict(d.get("tags", {})))


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    base: TrainSpec
    grid: tuple
    repeats: int = 3

    def problems(self) -> list[str]:
        out = []
        if self.kind not in EXPERIMENT_KINDS:
            out.append(f"experiment kind must be one of {sorted(EXPERIMENT_KINDS)}, got {self.kind!r}")
            return out
        if not self.grid:
            out.append("experiment grid is empty")
        if self.repeats < 1:
            out.append(f"repeats must be >= 1, got {self.repeats}")
        allowed = EXPERIMENT_KINDS[self.kind]
        labels = set()
        for p in self.grid:
            for t in p.slot.transforms:
                if t.get("op") not in allowed:
                    out.append(f"{self.kind} grid may not use transform {t.get('op')!r}")
            out.extend(p.slot.problems())
            if p.label in labels:
                out.append(f"duplicate grid point {p.label!r}")
            labels.add(p.label)
        out.extend(self.base.problems())
        return out


def _dyn(name: str, transforms=(), s_mode: str | None = "scalar") -> SlotSpec:
    return SlotSpec("dynamic", name, s_mode, tuple(transforms))


def search_grid(functions=None, s_mode: str = "scalar") -> list[GridPoint]:
    names = list(functions or funcs.SEARCH_CANDIDATES)
    return [GridPoint(_dyn(n, (), s_mode), tags={"function": n}) for n in names]


def shift_grid(functions, shift_type: str, lambdas) -> list[GridPoint]:
    op = {"horizontal": "hshift", "vertical": "vshift"}[shift_type]
    return [GridPoint(_dyn(f, ({"op": op, "value": float(l)},), "absent"),
                      tags={"function": f, "shift_type": shift_type, "lambda": float(l)})
            for f in functions for l in lambdas]


def bound_grid(functions, lambdas, include_original: bool = True) -> list[GridPoint]:
    out = []
    for f in functions:
        if include_original:
            out.append(GridPoint(_dyn(f, (), "absent"), tags={"function": f, "lambda_u": None}))
        out += [GridPoint(_dyn(f, ({"op": "clip", "value": float(l)},), "absent"),
                          tags={"function": f, "lambda_u": float(l)}) for l in lambdas]
    return out


def mix_grid(functions, lambdas, include_original: bool = True) -> list[GridPoint]:
    out = []
    for f in functions:
        if include_original:
            out.append(GridPoint(_dyn(f, (), "absent"), tags={"function": f, "lambda_b": None}))
        out += [GridPoint(_dyn(f, ({"op": "mix", "value": float(l)},), "absent"),
                          tags={"function": f, "lambda_b": float(l)}) for l in lambdas]
    return out


def flat_grid(functions, lambdas) -> list[GridPoint]:
    return [GridPoint(_dyn(f, ({"op": "flat", "value": float(l)},) if l else (), "absent"),
                      tags={"function": f, "lambda_flat": float(l)})
            for f in functions for l in lambdas]


def monotonic_grid(functions, probes=funcs.NON_MONOTONIC_PROBES) -> list[GridPoint]:
    out = []
    for f in functions:
        out.append(GridPoint(_dyn(f, (), "absent"), tags={"function": f, "variant": "f"}))
        out.append(GridPoint(_dyn(f, ({"op": "negate"},), "absent"),
                             tags={"function": f, "variant": "negated"}))
    out += [GridPoint(_dyn(p, (), "absent"), tags={"function": p, "variant": "non_monotonic"})
            for p in probes]
    return out


def growth_grid(functions=funcs.GROWTH_PROBES) -> list[GridPoint]:
    return [GridPoint(_dyn(f, (), "absent"), tags={"function": f}) for f in functions]


def s_ablation_grid(functions, modes=("absent", "scalar", "per_channel")) -> list[GridPoint]:
    return [GridPoint(_dyn(f, (), m), tags={"function": f, "s_mode": m})
            for f in functions for m in modes]


def eps_tanh_grid(eps: float = 1.205) -> list[GridPoint]:
    return [
        GridPoint(_dyn("tanh"), tags={"function": "tanh"}),
        GridPoint(_dyn("tanh", ({"op": "scale", "value": float(eps)},)),
                  tags={"function": "tanh_eps", "eps": float(eps)}),
        GridPoint(_dyn("erf"), tags={"function": "erf"}),
    ]


def fitloss_grid(slots=("layer_norm", "dyt", "derf")) -> list[GridPoint]:
    return [GridPoint(SlotSpec.parse(s), tags={"slot": s}) for s in slots]


@dataclass(frozen=True)
class TrialTask:
    trial_id: str
    spec: TrainSpec
    point: dict
    checkpoint_path: str | None = None


def _trial_tasks(exp: ExperimentSpec, checkpoint_dir=None) -> list[TrialTask]:
    tasks = []
    for p in exp.grid:
        for r in range(exp.repeats):
            # seeds depend on the repeat only, so grid points are compared on identical inits
            seed = stable_seed(exp.base.master_seed, f"repeat-{r}")
            opt = exp.base.optimizer if p.lr is None else replace(exp.base.optimizer, lr=p.lr)
            spec = replace(exp.base, model=replace(exp.base.model, norm_slot=p.slot, seed=seed),
                           optimizer=opt, master_seed=seed)
            tid = f"{p.label}/r{r}"
            ckpt = None
            if checkpoint_dir is not None:
                ckpt = str(Path(checkpoint_dir) / (_safe_name(tid) + ".ckpt"))
            tasks.append(TrialTask(tid, spec, dict(p.to_json(), repeat=r), ckpt))
    return tasks


def _safe_name(s: str) -> str:
    return "".join(c if c.isalnum() or c in "-_.=" else "_" for c in s)


_DATA_CACHE: dict = {}


def run_trial(task: TrialTask) -> TrialResult:
    key = json.dumps({"d": asdict(task.spec.dataset), "t": task.spec.model.seq_len,
                      "c": task.spec.model.in_dim}, sort_keys=True)
    if key not in _DATA_CACHE:
        _DATA_CACHE.clear()
        _DATA_CACHE[key] = load_data(task.spec)
    result, _ = train(task.spec, task.checkpoint_path, trial_id=task.trial_id, point=task.point,
                      data=_DATA_CACHE[key])
    return result


def max_workers(requested: int | None = None) -> int:
    cap = os.environ.get("DERFKIT_THREADS")
    n = requested if requested is not None else (int(cap) if cap else 1)
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    trials: list
    report: dict


def run_experiment(exp: ExperimentSpec, workers: int | None = None, checkpoint_dir=None,
                   config: dict | None = None) -> ExperimentResult:
    problems = exp.problems()
    if problems:
        raise ConfigError(problems)
    tasks = _trial_tasks(exp, checkpoint_dir)
    n = max_workers(workers)
    if n == 1:
        results = [run_trial(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(run_trial, tasks))
    by_id = {r.trial_id: r for r in results}
    trials = [by_id[t.trial_id] for t in tasks]
    return ExperimentResult(exp, trials, build_report(exp, trials, config))


def _stats(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None, None
    return float(np.mean(vals)), float(np.min(vals)), float(np.max(vals))


def build_report(exp: ExperimentSpec, trials: list, config: dict | None = None) -> dict:
    groups: dict[str, list] = {}
    for t in trials:
        groups.setdefault(t.point["label"], []).append(t)
    rows = []
    for p in exp.grid:
        ts = groups.get(p.label, [])
        acc = _stats([t.val_accuracy for t in ts])
        ev = _stats([t.eval_mode_train_loss for t in ts])
        rows.append({
            "label": p.label,
            "tags": dict(p.tags),
            "repeats": len(ts),
            "diverged": sum(t.diverged for t in ts),
            "val_accuracy_mean": acc[0], "val_accuracy_min": acc[1], "val_accuracy_max": acc[2],
            "eval_mode_train_loss_mean": ev[0], "eval_mode_train_loss_min": ev[1],
            "eval_mode_train_loss_max": ev[2],
        })
    if exp.kind == "fitloss":
        key = lambda r: (r["eval_mode_train_loss_mean"] is None,
                         r["eval_mode_train_loss_mean"] or 0.0, r["label"])
    else:
        key = lambda r: (r["val_accuracy_mean"] is None, -(r["val_accuracy_mean"] or 0.0), r["label"])
    ranking = sorted(rows, key=key)
    for i, r in enumerate(ranking):
        r["rank"] = i + 1
    return {
        "experiment_kind": exp.kind,
        "master_seed": exp.base.master_seed,
        "repeats": exp.repeats,
        "grid": [p.to_json() for p in exp.grid],
        "trials": [t.to_json() for t in trials],
        "ranking": ranking,
        "config": config if config is not None else {"train": exp.base.to_json()},
        "version": __version__,
        "catalog_hash": funcs.catalog_hash(),
    }


def write_report(report: dict, out_dir, trials: list | None = None, name: str = "report") -> Path:
    """Write ``<name>.json`` (deterministic), ``<name>.csv`` and ``<name>.meta.json`` (timings)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{name}.json"
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    cols = ["rank", "label", "repeats", "diverged", "val_accuracy_mean", "val_accuracy_min",
            "val_accuracy_max", "eval_mode_train_loss_mean", "eval_mode_train_loss_min",
            "eval_mode_train_loss_max"]
    with open(out / f"{name}.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
        w.writeheader()
        w.writerows(report.get("ranking", []))
    meta = {"written_at": datetime.now(timezone.utc).isoformat(),
            "wall_time": {t.trial_id: t.wall_time for t in (trials or [])}}
    (out / f"{name}.meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def format_ranking(report: dict) -> str:
    lines = [f"{'rank':>4}  {'point':<40} {'val_acc (min..max)':<26} {'eval loss':>10}  div"]
    for r in report["ranking"]:
        if r["val_accuracy_mean"] is None:
            acc = "diverged"
        else:
            acc = f"{r['val_accuracy_mean']:.4f} ({r['val_accuracy_min']:.3f}..{r['val_accuracy_max']:.3f})"
        ev = "-" if r["eval_mode_train_loss_mean"] is None else f"{r['eval_mode_train_loss_mean']:.4f}"
        lines.append(f"{r['rank']:>4}  {r['label']:<40} {acc:<26} {ev:>10}  {r['diverged']}/{r['repeats']}")
    return "\n".join(lines)
