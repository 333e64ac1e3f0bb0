"""Command-line entry point: ``derfkit <command> ...``.

Exit codes: 0 completed (diverged trials included), 2 unknown function name,
3 malformed config or arguments, 4 file I/O problems.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, funcs, harness, props
from .data import make_synthetic_dataset, write_dataset
from .errors import (ConfigError, ContractError, DerfkitError, FileFormatError, ParameterError,
                     UnknownFunctionError)
from .model import SlotSpec

log = logging.getLogger("derfkit")

EXIT_OK, EXIT_LOOKUP, EXIT_CONFIG, EXIT_IO = 0, 2, 3, 4

CONFIG_KEYS = {"train", "functions", "repeats", "lambdas", "shift_type", "sweep", "slots",
               "s_mode", "eps"}

SWEEP_KINDS = {
    "shift": "shift_sweep",
    "bound": "bound_sweep",
    "mix": "mix_sweep",
    "flat": "flat_sweep",
    "monotonic": "monotonic_compare",
    "growth": "growth_probe",
    "s_ablation": "s_ablation",
    "eps_tanh": "eps_tanh_compare",
}

SWEEP_DEFAULTS = {
    "shift": (("erf", "tanh", "arctan_scaled"), (-2, -1, -0.5, -0.1, 0, 0.1, 0.5, 1, 2)),
    "bound": (("arcsinh", "logsign", "linear"), (0.5, 0.8, 1.0, 2.0, 3.0, 5.0)),
    "mix": (("erf", "tanh", "arctan_scaled", "isru"), (0.01, 0.1, 0.5)),
    "flat": (("erf", "tanh", "arctan_scaled"), (0, 0.1, 0.5, 1.0, 2.0, 3.0)),
    "monotonic": (("erf", "tanh", "arctan_scaled"), ()),
    "growth": (funcs.GROWTH_PROBES, ()),
    "s_ablation": (("erf",), ()),
    "eps_tanh": ((), ()),
}


# ---------------------------------------------------------------- config


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise OSError(f"cannot read config {path}: {e.strerror or e}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path}: invalid JSON at line {e.lineno} column {e.colno}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path}: top level must be an object")
    unknown = sorted(set(cfg) - CONFIG_KEYS)
    if unknown:
        raise ConfigError([f"config: unknown key {k!r}" for k in unknown])
    return cfg


def _csv(text: str | None, cast=str):
    if text is None:
        return None
    try:
        return [cast(v.strip()) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse list {text!r}") from None


def _effective(args) -> dict:
    """File values overridden by flags; this dict is embedded in every report."""
    cfg = load_config(args.config)
    train = dict(cfg.get("train", {}))
    if args.steps is not None:
        train["steps"] = args.steps
    if args.seed is not None:
        train["master_seed"] = args.seed
    if getattr(args, "lr", None) is not None:
        train["optimizer"] = dict(train.get("optimizer", {}), lr=args.lr)
    if getattr(args, "slot", None) is not None:
        train["model"] = dict(train.get("model", {}), norm_slot=args.slot)
    if args.data is not None:
        train["dataset"] = dict(train.get("dataset", {}), path=str(args.data))
    cfg["train"] = train
    for key in ("functions", "repeats", "shift_type", "s_mode", "eps"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if getattr(args, "lambdas", None) is not None:
        cfg["lambdas"] = _csv(args.lambdas, float)
    if getattr(args, "slots", None) is not None:
        cfg["slots"] = _csv(args.slots)
    return cfg


def _train_spec(cfg: dict, out_dir: Path, gen: bool) -> harness.TrainSpec:
    try:
        spec = harness.TrainSpec.from_json(cfg["train"])
    except TypeError as e:
        raise ConfigError(f"train: {e}") from None
    spec.validate()
    if gen:
        ds = spec.dataset
        if ds.path is not None:
            raise ConfigError("--gen and --data are mutually exclusive")
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "dataset.dfk1"
        write_dataset(make_synthetic_dataset(ds.kind, ds.n_train + ds.n_val, ds.seed,
                                             n_classes=ds.n_classes, seq_len=spec.model.seq_len,
                                             in_dim=spec.model.in_dim, margin=ds.margin), path)
        log.info("wrote %s", path)
        spec = replace(spec, dataset=replace(ds, path=str(path)))
    if spec.dataset.path is not None and not Path(spec.dataset.path).exists():
        raise FileNotFoundError(f"dataset file not found: {spec.dataset.path}")
    return spec


def _function_list(value, default) -> list[str]:
    if value is None or value == []:
        names = list(default)
    elif value == "all" or value == ["all"]:
        names = list(funcs.SEARCH_CANDIDATES)
    else:
        names = value if isinstance(value, list) else _csv(value)
    for n in names:
        funcs.get(n)
    return names


# ---------------------------------------------------------------- commands


def cmd_funcs(args) -> int:
    if args.action == "list":
        rows = [{"name": f.name, "formula": f.formula, "group": f.group, "trainable": f.trainable}
                for f in funcs.catalog()]
        if args.json:
            print(json.dumps(rows, indent=2))
        else:
            for r in rows:
                print(f"{r['name']:<16} {r['group']:<20} {r['formula']}")
        return EXIT_OK
    if not args.name:
        raise ConfigError(f"funcs {args.action} needs a function name")
    f = funcs.get(args.name)
    if args.action == "eval":
        if args.x is None:
            raise ConfigError("funcs eval needs a point x")
        x = float(args.x)
        print(json.dumps({"name": f.name, "x": x, "value": float(f(x)),
                          "derivative": float(f.grad(x))}))
        return EXIT_OK
    print(json.dumps(props.classify(f).to_dict(), indent=2))
    return EXIT_OK


def cmd_fit_eps(args) -> int:
    res = props.fit_eps(truncation_radius=args.radius, tol=args.tol)
    print(json.dumps(res.to_dict(), indent=2))
    return EXIT_OK


def cmd_gen_data(args) -> int:
    ds = make_synthetic_dataset(args.kind, args.n, args.seed, n_classes=args.n_classes,
                                seq_len=args.seq_len, in_dim=args.in_dim, margin=args.margin)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_dataset(ds, args.out)
    counts = np.bincount(ds.labels, minlength=ds.n_classes).tolist()
    print(json.dumps({"path": str(args.out), "n": len(ds), "class_counts": counts}))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _effective(args)
    out = Path(args.out_dir)
    spec = _train_spec(cfg, out, args.gen)
    out.mkdir(parents=True, exist_ok=True)
    result, _ = harness.train(spec, out / "model.ckpt", trial_id="train")
    report = {
        "experiment_kind": "train",
        "master_seed": spec.master_seed,
        "trials": [result.to_json()],
        "config": cfg,
        "version": __version__,
        "catalog_hash": funcs.catalog_hash(),
    }
    harness.write_report(report, out, [result], name="train")
    status = "diverged" if result.diverged else f"val_acc {result.val_accuracy:.4f}"
    print(f"{spec.model.norm_slot.label()}: {status}, steps {result.steps_completed}, "
          f"eval-mode train loss {result.eval_mode_train_loss}")
    return EXIT_OK


def _run(args, kind: str, grid, cfg: dict, checkpoint_dir=None) -> int:
    out = Path(args.out_dir)
    base = _train_spec(cfg, out, args.gen)
    exp = harness.ExperimentSpec(kind, base, tuple(grid), int(cfg.get("repeats", 3)))
    problems = exp.problems()
    if problems:
        raise ConfigError(problems)
    if checkpoint_dir is not None:
        Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
    res = harness.run_experiment(exp, workers=args.workers, checkpoint_dir=checkpoint_dir, config=cfg)
    path = harness.write_report(res.report, out, res.trials)
    print(harness.format_ranking(res.report))
    print(f"report: {path}")
    return EXIT_OK


def cmd_search(args) -> int:
    cfg = _effective(args)
    names = _function_list(cfg.get("functions"), funcs.SEARCH_CANDIDATES)
    return _run(args, "search", harness.search_grid(names, cfg.get("s_mode", "scalar")), cfg)


def cmd_sweep(args) -> int:
    cfg = _effective(args)
    sweep = args.kind or cfg.get("sweep")
    if sweep is None:
        raise ConfigError("sweep needs --kind")
    cfg["sweep"] = sweep
    if sweep not in SWEEP_KINDS:
        raise ConfigError(f"sweep kind must be one of {sorted(SWEEP_KINDS)}, got {sweep!r}")
    default_fns, default_lams = SWEEP_DEFAULTS[sweep]
    names = _function_list(cfg.get("functions"), default_fns)
    lams = cfg.get("lambdas") or list(default_lams)
    if sweep == "shift":
        st = cfg.get("shift_type", "both")
        types = ("horizontal", "vertical") if st == "both" else (st,)
        if any(t not in ("horizontal", "vertical") for t in types):
            raise ConfigError(f"shift_type must be horizontal, vertical or both, got {st!r}")
        grid = [p for t in types for p in harness.shift_grid(names, t, lams)]
    elif sweep == "bound":
        grid = harness.bound_grid(names, lams)
    elif sweep == "mix":
        grid = harness.mix_grid(names, lams)
    elif sweep == "flat":
        grid = harness.flat_grid(names, lams)
    elif sweep == "monotonic":
        grid = harness.monotonic_grid(names)
    elif sweep == "growth":
        grid = harness.growth_grid(names)
    elif sweep == "s_ablation":
        grid = harness.s_ablation_grid(names)
    else:
        grid = harness.eps_tanh_grid(float(cfg.get("eps", 1.205)))
    return _run(args, SWEEP_KINDS[sweep], grid, cfg)


def cmd_fitloss(args) -> int:
    cfg = _effective(args)
    slots = cfg.get("slots") or ["layer_norm", "dyt", "derf"]
    grid = [harness.GridPoint(SlotSpec.parse(s), tags={"slot": s}) for s in slots]
    ckpt = args.checkpoint_dir or str(Path(args.out_dir) / "checkpoints")
    return _run(args, "fitloss", grid, cfg, checkpoint_dir=ckpt)


# ---------------------------------------------------------------- parser


def _common(p: argparse.ArgumentParser, out_default: str):
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--out-dir", default=out_default)
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--workers", type=int, help="parallel trials (capped by DERFKIT_THREADS)")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--data", help="DFK1 dataset file")
    src.add_argument("--gen", action="store_true",
                     help="generate the configured synthetic dataset into --out-dir first")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="derfkit", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"derfkit {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("funcs", help="catalog queries")
    p.add_argument("action", choices=("list", "eval", "props"))
    p.add_argument("name", nargs="?")
    p.add_argument("x", nargs="?")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_funcs)

    p = sub.add_parser("fit-eps", help="fit tanh(eps x) to erf(x) in L1")
    p.add_argument("--radius", type=float, default=8.0)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(fn=cmd_fit_eps)

    p = sub.add_parser("gen-data", help="write a synthetic DFK1 dataset")
    p.add_argument("--kind", default="cluster_tokens", choices=("cluster_tokens", "parity_seq"))
    p.add_argument("--n", type=int, default=2560)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-classes", type=int, default=2)
    p.add_argument("--seq-len", type=int, default=16)
    p.add_argument("--in-dim", type=int, default=16)
    p.add_argument("--margin", type=float, default=3.0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train one model")
    _common(p, "runs/train")
    p.add_argument("--slot", help="layer_norm | rms_norm | dyt | derf | dynamic:<fn>[:<s_mode>]")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("search", help="function search over catalog candidates")
    _common(p, "runs/search")
    p.add_argument("--functions", help="'all' or a comma-separated list")
    p.add_argument("--repeats", type=int)
    p.add_argument("--s-mode", choices=("absent", "scalar", "per_channel"))
    p.set_defaults(fn=cmd_search)

    p = sub.add_parser("sweep", help="property sweeps")
    _common(p, "runs/sweep")
    p.add_argument("--kind", choices=sorted(SWEEP_KINDS))
    p.add_argument("--shift-type", choices=("horizontal", "vertical", "both"))
    p.add_argument("--lambdas", help="comma-separated values")
    p.add_argument("--functions", help="comma-separated list")
    p.add_argument("--repeats", type=int)
    p.add_argument("--eps", type=float, help="eps for the eps_tanh comparison")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("fitloss", help="eval-mode training loss comparison")
    _common(p, "runs/fitloss")
    p.add_argument("--slots", help="comma-separated slot specs")
    p.add_argument("--checkpoint-dir")
    p.add_argument("--repeats", type=int)
    p.set_defaults(fn=cmd_fitloss)
    return ap


def _join_negative_lists(argv):
    # "--lambdas -2,-1,0" would otherwise read "-2,-1,0" as an option
    out, it = [], iter(argv)
    for a in it:
        if a in ("--lambdas", "--functions", "--slots"):
            nxt = next(it, None)
            out.append(a if nxt is None else f"{a}={nxt}")
        else:
            out.append(a)
    return out


def main(argv=None) -> int:
    ap = build_parser()
    argv = _join_negative_lists(sys.argv[1:] if argv is None else list(argv))
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:  # argparse usage errors count as config errors
        return EXIT_OK if e.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except UnknownFunctionError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_LOOKUP
    except ConfigError as e:
        for problem in e.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, FileFormatError) as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except (ParameterError, ContractError, DerfkitError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
