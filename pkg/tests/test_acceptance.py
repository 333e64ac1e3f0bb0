"""End-to-end acceptance checks with runtime budgets."""

import json
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from derfkit import funcs, harness, props
from derfkit import model as M
from derfkit import tensor as T
from derfkit.funcs import clip_bound, erf_eval, flat_zone, get, mix_linear, negate, shift
from derfkit.harness import DatasetSpec, ExperimentSpec, TrainSpec
from derfkit.layers import Derf, DyT, DynamicPointwise, LayerNorm, RMSNorm
from derfkit.model import ToyTransformerConfig
from derfkit.tensor import Tensor
from helpers import gradient_errors, layer_grad_excess
from oracles import erf_simpson, grid_scan_eps


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        if exc[0] is None:
            assert self.elapsed < self.seconds, f"took {self.elapsed:.2f}s, budget {self.seconds}s"


@pytest.mark.criterion(1, "erf fidelity against the Simpson oracle")
def test_erf_fidelity():
    xs = np.linspace(-6.0, 6.0, 1201)
    ref = np.array([erf_simpson(x) for x in xs])
    with Budget(1.0):
        vec = erf_eval(xs)
        scal = np.array([erf_eval(float(x)) for x in xs])
    assert np.max(np.abs(vec - ref)) <= 1e-10
    assert np.max(np.abs(scal - ref)) <= 1e-10
    assert np.array_equal(erf_eval(-xs), -vec)
    assert all(erf_eval(-float(x)) == -erf_eval(float(x)) for x in xs)


@pytest.mark.criterion(2, "eps fit lands near 1.205 and matches a dense grid scan")
def test_eps_fit():
    with Budget(5.0):
        res = props.fit_eps()
    assert 1.195 <= res.eps_star <= 1.215
    assert abs(res.eps_star - grid_scan_eps()) <= 1e-4


LAYER_KINDS = {
    "layer_norm": lambda: LayerNorm(4),
    "rms_norm": lambda: RMSNorm(4),
    "dyt": lambda: DyT(4),
    "derf": lambda: Derf(4),
}


@pytest.mark.criterion(3, "gradient suite: layers, catalog layers, end-to-end model")
def test_gradient_suite():
    with Budget(30.0):
        for name, make in LAYER_KINDS.items():
            for seed in range(20):
                assert layer_grad_excess(make(), seed) <= 0.0, (name, seed)
        for f in funcs.catalog():
            for seed in range(20):
                assert layer_grad_excess(DynamicPointwise(f, 4, "scalar"), seed) <= 0.0, (f.name, seed)
        for slot in ("layer_norm", "rms_norm", "dyt", "derf"):
            cfg = ToyTransformerConfig(depth=1, d_model=8, n_heads=2, d_ff=16, seq_len=4, in_dim=3,
                                       norm_slot=slot, init_std=0.3, seed=1)
            m = M.build(cfg)
            rng = np.random.default_rng(2)
            x, y = rng.standard_normal((3, 4, 3)), rng.integers(0, 2, 3)
            excess = gradient_errors(lambda: T.cross_entropy(m.forward(x), y), [], m.parameters(),
                                     np.array(1.0), h=1e-5, rtol=1e-3, atol=1e-7)
            assert excess <= 0.0, slot


@pytest.mark.criterion(4, "golden property labels and growth ordering")
def test_golden_labels():
    with Budget(10.0):
        mismatches = {f.name: props.classify(f).labels() for f in funcs.catalog()
                      if props.classify(f).labels() != f.props.as_dict()}
        order = props.growth_ordering([get(n) for n in ("linear", "power23", "logquad", "logsign")])
    assert len(funcs.catalog()) >= 24
    assert mismatches == {}
    assert [f.name for f in order] == ["logsign", "logquad", "power23", "linear"]


@pytest.mark.criterion(5, "construction identities on dense grids")
def test_construction_identities():
    xs = np.linspace(-10.0, 10.0, 20001)
    with Budget(5.0):
        for f in funcs.catalog():
            y = f(xs)
            for kind in ("horizontal", "vertical"):
                assert np.array_equal(shift(f, kind, 0.0)(xs), y), f.name
            assert np.array_equal(flat_zone(f, 0.0)(xs), y), f.name
            for lam in (0.5, 1.0, 3.0):
                assert np.max(np.abs(clip_bound(f, lam)(xs))) <= lam, f.name
            # the gap is lam * |x - f(x)|, so it must shrink linearly as lam -> 0
            spread = np.max(np.abs(xs - y))
            ulps = 4 * np.finfo(float).eps * np.max(np.abs(xs))
            for lam in (1e-11, 1e-13):
                gap = np.max(np.abs(mix_linear(f, lam)(xs) - y))
                assert gap <= 1e-9 and gap <= lam * spread * (1 + 1e-6) + ulps, f.name
            assert np.array_equal(negate(negate(f))(xs), y), f.name


SMALL_TRAIN = TrainSpec(dataset=DatasetSpec(n_train=512, n_val=128), steps=30, warmup_steps=5,
                        eval_batch_size=128)


@pytest.mark.criterion(6, "determinism across reruns and parallel execution")
def test_determinism(monkeypatch):
    monkeypatch.delenv("DERFKIT_THREADS", raising=False)
    with Budget(120.0):
        spec = replace(SMALL_TRAIN, model=replace(SMALL_TRAIN.model, drop_path_rate=0.1))
        a, _ = harness.train(spec)
        b, _ = harness.train(spec)
        assert a.loss_history == b.loss_history
        assert json.dumps(a.to_json(), sort_keys=True) == json.dumps(b.to_json(), sort_keys=True)

        exp = ExperimentSpec("search", SMALL_TRAIN, tuple(harness.search_grid(["erf", "tanh", "isru"])), 2)
        seq = harness.run_experiment(exp, workers=1)
        par = harness.run_experiment(exp, workers=3)
        again = harness.run_experiment(exp, workers=1)
    by_id = lambda trials: [t.to_json() for t in sorted(trials, key=lambda t: t.trial_id)]
    assert by_id(seq.trials) == by_id(par.trials)
    dump = lambda r: json.dumps(r.report, sort_keys=True, indent=2)
    assert dump(seq) == dump(par) == dump(again)


def _hidden_before_final_norm(m, x):
    h = m.embed(Tensor(x)) + m.pos
    for block in m.blocks:
        h = block(h, "eval", None)
    return h


@pytest.mark.criterion(7, "toy model learns cluster_tokens with every slot kind")
def test_learnability():
    base = replace(TrainSpec(), eval_every=25, target_accuracy=0.95)
    assert base.steps == 1000 and base.dataset.kind == "cluster_tokens" and base.dataset.margin == 3.0
    with Budget(300.0):
        for slot in ("layer_norm", "rms_norm", "dyt", "derf"):
            spec = replace(base, model=replace(base.model, norm_slot=slot))
            res, m = harness.train(spec)
            assert not res.diverged, slot
            assert res.steps_completed <= 1000
            assert res.val_accuracy >= 0.95, (slot, res.val_accuracy)
            if slot == "layer_norm":
                train_ds, _ = harness.load_data(spec)
                h = _hidden_before_final_norm(m, train_ds.inputs[:64])
                ln = m.norm_final
                assert isinstance(ln, LayerNorm)
                # strip the trained affine to get the normalized tokens
                y = (ln(h).data - ln.beta.data) / ln.gamma.data
                assert np.max(np.abs(y.mean(axis=-1))) <= 1e-10


@pytest.mark.criterion(8, "eval-mode training loss protocol")
def test_eval_mode_loss_protocol():
    with Budget(60.0):
        spec = replace(SMALL_TRAIN, model=replace(SMALL_TRAIN.model, drop_path_rate=0.3), steps=120)
        train_ds, _ = harness.load_data(spec)
        fresh = M.build(spec.model)
        v0 = harness.eval_mode_train_loss(fresh, train_ds)
        assert v0 == harness.eval_mode_train_loss(fresh, train_ds)
        assert abs(v0 - math.log(2)) <= 0.1

        res, m = harness.train(spec)
        again = harness.eval_mode_train_loss(m, train_ds, spec.eval_batch_size)
        assert again == res.eval_mode_train_loss
        probe = harness.train_mode_loss(m, train_ds, seed=7, batch_size=spec.eval_batch_size)
    assert res.eval_mode_train_loss <= res.train_mode_train_loss
    assert res.eval_mode_train_loss <= probe
