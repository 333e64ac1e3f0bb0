import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from derfkit import harness as H
from derfkit import model as M
from derfkit.errors import ConfigError, ContractError
from derfkit.harness import DatasetSpec, ExperimentSpec, OptimizerSpec, TrainSpec
from derfkit.model import SlotSpec, ToyTransformerConfig
from derfkit.tensor import Tensor

TINY_MODEL = ToyTransformerConfig(depth=1, d_model=16, n_heads=2, d_ff=32, seq_len=4, in_dim=4)


def tiny(**kw) -> TrainSpec:
    base = TrainSpec(model=TINY_MODEL, dataset=DatasetSpec(n_train=256, n_val=64),
                     steps=20, batch_size=32, warmup_steps=5)
    return replace(base, **kw)


# ------------------------------------------------------------------ schedule and optimizer


def test_warmup_then_cosine():
    spec = TrainSpec(steps=100, warmup_steps=10, optimizer=OptimizerSpec(lr=1.0))
    assert H.lr_at(0, spec) == pytest.approx(0.1)
    assert H.lr_at(9, spec) == pytest.approx(1.0)
    assert H.lr_at(10, spec) == pytest.approx(1.0)
    assert H.lr_at(55, spec) == pytest.approx(0.5)
    assert H.lr_at(100, spec) == pytest.approx(0.0, abs=1e-15)
    flat = replace(spec, lr_schedule="constant")
    assert H.lr_at(80, flat) == 1.0


def test_adamw_first_step_by_hand():
    vec = Tensor([1.0, -2.0], requires_grad=True)
    mat = Tensor([[1.0], [3.0]], requires_grad=True)
    opt = H.AdamW([("v", vec), ("m", mat)], OptimizerSpec(weight_decay=0.1, eps=0.0))
    opt.step({vec: np.array([0.5, -0.25]), mat: np.array([[2.0], [-1.0]])}, lr=0.01)
    # bias-corrected first step moves by lr * sign(g); only matrices decay
    assert np.allclose(vec.data, [0.99, -1.99], rtol=0, atol=1e-15)
    assert np.allclose(mat.data, [[1.0 - 0.01 * 1.1], [3.0 + 0.01 - 0.01 * 0.3]], atol=1e-15)


def test_adamw_second_step_by_hand():
    p = Tensor([0.0], requires_grad=True)
    opt = H.AdamW([("p", p)], OptimizerSpec(eps=0.0))
    opt.step({p: np.array([1.0])}, lr=1.0)
    opt.step({p: np.array([3.0])}, lr=1.0)
    m = (0.9 * 0.1 * 1.0 + 0.1 * 3.0) / (1 - 0.9**2)
    v = (0.999 * 0.001 * 1.0 + 0.001 * 9.0) / (1 - 0.999**2)
    assert p.data[0] == pytest.approx(-1.0 - m / math.sqrt(v), rel=1e-14)


# ------------------------------------------------------------------ divergence


def test_divergence_examples():
    assert not H.detect_divergence([1.0] * 30)
    assert H.detect_divergence([1.0] * 5 + [math.inf])
    assert H.detect_divergence([1.0] * 5 + [math.nan])
    assert H.detect_divergence([1.0] * 10 + [50.5])
    assert not H.detect_divergence([1.0] * 10 + [50.0])
    # before step 10 there is no reference value
    assert not H.detect_divergence([1.0, 1e9])


@given(st.lists(st.floats(0.0, 1e3), min_size=1, max_size=60),
       st.one_of(st.none(), st.sampled_from([math.inf, -math.inf, math.nan])))
def test_divergence_flag_matches_history(history, bad):
    if bad is not None:
        history = history + [bad]
    h = np.array(history)
    expected = (not np.all(np.isfinite(h))) or (len(h) >= 10 and bool(np.any(h[9:] > 50 * h[9])))
    assert H.detect_divergence(history) == expected


def test_diverging_run_is_reported_not_raised():
    spec = tiny(optimizer=OptimizerSpec(lr=50.0, weight_decay=0.0), steps=60, warmup_steps=0,
                model=replace(TINY_MODEL, norm_slot="dynamic:linear:absent"))
    res, _ = H.train(spec)
    assert res.diverged
    assert res.val_accuracy is None and res.eval_mode_train_loss is None
    assert res.steps_completed < 60
    hist = [math.inf if v is None else v for v in res.loss_history]
    assert H.detect_divergence(hist)


# ------------------------------------------------------------------ training


def test_training_is_bit_reproducible():
    spec = tiny(model=replace(TINY_MODEL, drop_path_rate=0.2))
    a, _ = H.train(spec)
    b, _ = H.train(spec)
    assert a.to_json() == b.to_json()
    c, _ = H.train(replace(spec, master_seed=1))
    assert c.loss_history != a.loss_history


def test_zero_learning_rate_leaves_weights_and_loss_unchanged():
    spec = tiny(optimizer=OptimizerSpec(lr=0.0))
    train_ds, _ = H.load_data(spec)
    before = H.eval_mode_train_loss(M.build(spec.model), train_ds)
    res, model = H.train(spec)
    fresh = dict(M.build(spec.model).named_parameters())
    assert all(np.array_equal(p.data, fresh[n].data) for n, p in model.named_parameters())
    assert abs(res.eval_mode_train_loss - before) <= 1e-12


def test_eval_mode_loss_at_init_is_near_log_classes():
    for k in (2, 4):
        spec = tiny(dataset=DatasetSpec(n_train=256, n_val=64, n_classes=k),
                    model=replace(TINY_MODEL, n_classes=k))
        train_ds, _ = H.load_data(spec)
        m = M.build(spec.model)
        v = H.eval_mode_train_loss(m, train_ds)
        assert abs(v - math.log(k)) <= 0.1
        assert v == H.eval_mode_train_loss(m, train_ds)


def test_eval_mode_loss_from_checkpoint(tmp_path):
    spec = tiny()
    res, model = H.train(spec, tmp_path / "m.ckpt")
    train_ds, _ = H.load_data(spec)
    assert H.eval_mode_train_loss(tmp_path / "m.ckpt", train_ds) == res.eval_mode_train_loss
    assert H.eval_mode_train_loss(str(tmp_path / "m.ckpt"), train_ds, max_batches=1) == \
        H.eval_mode_train_loss(model, train_ds, max_batches=1)


def test_eval_mode_loss_rejects_mismatched_data():
    model = M.build(TINY_MODEL)
    other = H.load_data(tiny(model=replace(TINY_MODEL, seq_len=5)))[0]
    with pytest.raises(ContractError):
        H.eval_mode_train_loss(model, other)
    bad_labels = H.load_data(tiny())[0]
    bad_labels.labels = bad_labels.labels + 5
    with pytest.raises(ContractError):
        H.eval_mode_train_loss(model, bad_labels)


def test_early_stop_on_target_accuracy():
    spec = tiny(steps=200, eval_every=5, target_accuracy=0.9)
    res, _ = H.train(spec)
    assert res.steps_completed < 200 and res.steps_completed % 5 == 0
    assert res.val_history[-1][1] >= 0.9
    assert res.val_accuracy == res.val_history[-1][1]


def test_missing_dataset_file_is_io_error(tmp_path):
    spec = tiny(dataset=DatasetSpec(path=str(tmp_path / "nope.dfk1")))
    with pytest.raises(FileNotFoundError):
        H.train(spec)


def test_train_spec_validation_and_json():
    spec = tiny(eval_every=5, target_accuracy=0.5)
    assert TrainSpec.from_json(json.loads(json.dumps(spec.to_json()))) == spec
    with pytest.raises(ConfigError):
        TrainSpec.from_json({"stepz": 3})
    with pytest.raises(ConfigError):
        TrainSpec.from_json({"optimizer": {"learning_rate": 3}})
    for bad in (dict(steps=0), dict(optimizer=OptimizerSpec(beta1=1.0)), dict(lr_schedule="step"),
                dict(target_accuracy=0.9), dict(dataset=DatasetSpec(n_train=10)),
                dict(optimizer=OptimizerSpec(lr=-1.0))):
        with pytest.raises(ConfigError):
            tiny(**bad).validate()


def test_stable_seed():
    assert H.stable_seed(0, "a") == H.stable_seed(0, "a")
    assert H.stable_seed(0, "a") != H.stable_seed(1, "a") != H.stable_seed(0, "b")
    assert 0 <= H.stable_seed(123, "x") < 2**63


# ------------------------------------------------------------------ experiments


def experiment(kind, grid, repeats=1, **kw):
    return ExperimentSpec(kind, tiny(**kw), tuple(grid), repeats)


@pytest.mark.parametrize("kind,grid", [
    ("search", H.search_grid(["erf", "tanh"])),
    ("shift_sweep", H.shift_grid(["erf"], "horizontal", [0.0, 1.0])),
    ("shift_sweep", H.shift_grid(["erf"], "vertical", [0.5])),
    ("bound_sweep", H.bound_grid(["arcsinh"], [1.0])),
    ("mix_sweep", H.mix_grid(["erf"], [0.1])),
    ("flat_sweep", H.flat_grid(["erf"], [0.0, 1.0])),
    ("monotonic_compare", H.monotonic_grid(["erf"])),
    ("growth_probe", H.growth_grid()),
    ("s_ablation", H.s_ablation_grid(["erf"])),
    ("eps_tanh_compare", H.eps_tanh_grid()),
    ("fitloss", H.fitloss_grid()),
])
def test_grids_are_legal_for_their_kind(kind, grid):
    assert experiment(kind, grid).problems() == []


@pytest.mark.parametrize("kind,grid", [
    ("search", H.shift_grid(["erf"], "horizontal", [1.0])),
    ("bound_sweep", H.mix_grid(["erf"], [0.1])),
    ("fitloss", H.flat_grid(["erf"], [1.0])),
    ("search", []),
    ("nonsense", H.search_grid(["erf"])),
])
def test_illegal_grids_are_rejected(kind, grid):
    exp = experiment(kind, grid)
    assert exp.problems()
    with pytest.raises(ConfigError):
        H.run_experiment(exp)


def test_duplicate_points_rejected():
    assert experiment("search", H.search_grid(["erf", "erf"])).problems()


def test_search_expands_every_candidate_and_repeat():
    tasks = H._trial_tasks(ExperimentSpec("search", TrainSpec(), tuple(H.search_grid()), 3))
    assert len(tasks) == 48 and len({t.trial_id for t in tasks}) == 48
    assert {t.point["tags"]["function"] for t in tasks} == set(H.funcs.SEARCH_CANDIDATES)


def test_trial_seeds_are_shared_across_points():
    tasks = H._trial_tasks(experiment("search", H.search_grid(["erf", "tanh"]), repeats=2))
    seeds = {(t.point["tags"]["function"], t.point["repeat"]): t.spec.master_seed for t in tasks}
    assert seeds["erf", 0] == seeds["tanh", 0] != seeds["erf", 1]


def test_zero_shift_trial_equals_base_trial():
    exp = experiment("shift_sweep", H.shift_grid(["erf"], "horizontal", [0.0]))
    shifted = H.run_experiment(exp).trials[0]
    base = H.run_experiment(experiment("shift_sweep", [H.GridPoint(SlotSpec("dynamic", "erf", "absent"))])).trials[0]
    assert shifted.loss_history == base.loss_history
    assert shifted.eval_mode_train_loss == base.eval_mode_train_loss


def test_s_ablation_parameter_counts():
    tasks = H._trial_tasks(experiment("s_ablation", H.s_ablation_grid(["erf"], ("scalar", "per_channel"))))
    counts = [M.build(t.spec.model).num_parameters() for t in tasks]
    n_slots = 2 * TINY_MODEL.depth + 1
    assert counts[1] - counts[0] == n_slots * (TINY_MODEL.d_model - 1)


def test_monotonic_compare_completes():
    grid = [p for p in H.monotonic_grid(["erf"], probes=())]
    res = H.run_experiment(experiment("monotonic_compare", grid))
    assert len(res.trials) == 2 and not any(t.diverged for t in res.trials)


def test_report_structure_and_determinism(tmp_path):
    exp = experiment("fitloss", H.fitloss_grid(), repeats=2)
    a = H.run_experiment(exp)
    b = H.run_experiment(exp)
    ja, jb = json.dumps(a.report, sort_keys=True), json.dumps(b.report, sort_keys=True)
    assert ja == jb
    rep = a.report
    assert {"experiment_kind", "master_seed", "grid", "trials", "ranking"} <= set(rep)
    assert len(rep["trials"]) == 6 and len(rep["ranking"]) == 3
    losses = [r["eval_mode_train_loss_mean"] for r in rep["ranking"]]
    assert losses == sorted(losses) and [r["rank"] for r in rep["ranking"]] == [1, 2, 3]
    path = H.write_report(rep, tmp_path, a.trials)
    assert json.loads(path.read_text()) == json.loads(ja)
    assert (tmp_path / "report.csv").read_text().count("\n") == 4
    assert "wall_time" in (tmp_path / "report.meta.json").read_text()
    assert "wall_time" not in path.read_text()
    assert len(H.format_ranking(rep).splitlines()) == 4


def test_accuracy_ranking_is_descending():
    rep = H.run_experiment(experiment("search", H.search_grid(["erf", "linear_clip", "cubsign"]))).report
    accs = [r["val_accuracy_mean"] for r in rep["ranking"]]
    assert accs == sorted(accs, reverse=True)


def test_sequential_and_parallel_runs_agree(monkeypatch):
    monkeypatch.delenv("DERFKIT_THREADS", raising=False)
    exp = experiment("search", H.search_grid(["erf", "tanh", "isru"]))
    seq = H.run_experiment(exp, workers=1)
    par = H.run_experiment(exp, workers=3)
    key = lambda r: r.trial_id
    assert [t.to_json() for t in sorted(seq.trials, key=key)] == \
        [t.to_json() for t in sorted(par.trials, key=key)]
    assert json.dumps(seq.report, sort_keys=True) == json.dumps(par.report, sort_keys=True)


def test_worker_cap(monkeypatch):
    monkeypatch.setenv("DERFKIT_THREADS", "2")
    assert H.max_workers(8) == 2 and H.max_workers() == 2
    monkeypatch.delenv("DERFKIT_THREADS")
    assert H.max_workers() == 1 and H.max_workers(4) == 4
