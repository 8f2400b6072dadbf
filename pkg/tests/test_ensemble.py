import numpy as np
import pytest
from hypothesis import given, strategies as st

from fzmoo.ensemble import (
    ArchitectureBounds, EnsembleModel, HpoTrial, SearchResult, cv_loss, kfold_split, r_squared, read_hpo_csv,
    search_architectures, tpe_suggest, train_ensemble, train_test_split, write_best_per_depth_csv, write_hpo_csv,
)
from fzmoo.errors import ValidationError
from fzmoo.neural import Architecture, TrainConfig, forward, init_network
from fzmoo.param_space import fit_scaler, make_rng


def _net(value, seed=0):
    net = init_network(Architecture((3,)), make_rng(seed), "zeros")
    net.biases[-1][:] = value
    return net


def test_single_member_equals_forward():
    net = init_network(Architecture((5,)), make_rng(1))
    X = make_rng(2).random((4, 12))
    mean, spread = EnsembleModel([net]).predict(X)
    np.testing.assert_array_equal(mean, forward(net, X))
    assert not spread.any()


def test_identical_members_zero_spread():
    net = init_network(Architecture((5,)), make_rng(1))
    X = make_rng(2).random((4, 12))
    mean, spread = EnsembleModel([net.copy() for _ in range(4)]).predict(X)
    np.testing.assert_allclose(mean, forward(net, X), rtol=1e-15)
    np.testing.assert_allclose(spread, 0, atol=1e-15)


def test_mean_of_two_members():
    mean, _ = EnsembleModel([_net(0.2), _net(0.4)]).predict(np.zeros((1, 12)))
    np.testing.assert_allclose(mean, 0.3)


def test_mixed_architectures_rejected():
    with pytest.raises(ValidationError):
        EnsembleModel([init_network(Architecture((3,)), make_rng(0)), init_network(Architecture((4,)), make_rng(0))])


def _data(n=200, seed=0):
    rng = make_rng(seed)
    X = rng.random((n, 12))
    Y = np.column_stack([X[:, 0] + X[:, 1], X[:, 2] * X[:, 3], X[:, 4], X[:, 5] ** 2, X[:, 6], X[:, 7]])
    return X, Y


def test_train_ensemble_deterministic_file(tmp_path):
    X, Y = _data()
    cfg = TrainConfig(epochs=3)
    sc = fit_scaler(X, Y)
    a = train_ensemble(Architecture((8,)), X, Y, M=10, base_seed=5, config=cfg, scaler=sc)
    b = train_ensemble(Architecture((8,)), X, Y, M=10, base_seed=5, config=cfg, scaler=sc)
    a.save(tmp_path / "a.json")
    b.save(tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    loaded = EnsembleModel.load(tmp_path / "a.json")
    assert loaded.scaler == sc and len(loaded) == 10
    np.testing.assert_array_equal(loaded(X), a(X))


def test_physical_prediction_needs_scaler():
    with pytest.raises(ValidationError):
        EnsembleModel([_net(0.1)]).predict_physical(np.zeros((1, 12)))


def test_kfold_sizes():
    folds = kfold_split(25, 10, seed=1)
    assert [len(f) for f in folds] == [3, 3, 3, 3, 3, 2, 2, 2, 2, 2]
    assert sorted(np.concatenate(folds).tolist()) == list(range(25))
    assert all(np.array_equal(a, b) for a, b in zip(folds, kfold_split(25, 10, seed=1)))


@given(n=st.integers(1, 300), k=st.integers(1, 20), seed=st.integers(0, 99))
def test_kfold_partition_property(n, k, seed):
    if k > n:
        with pytest.raises(ValidationError):
            kfold_split(n, k, seed)
        return
    folds = kfold_split(n, k, seed)
    sizes = [len(f) for f in folds]
    assert max(sizes) - min(sizes) <= 1
    assert np.array_equal(np.sort(np.concatenate(folds)), np.arange(n))


def test_train_test_split_fraction():
    tr, te = train_test_split(2390, 0.1, 3)
    assert len(te) == 239 and len(tr) == 2151
    assert not np.intersect1d(tr, te).size


def test_constant_target_cv_loss_small():
    X, _ = _data(600)
    Y = np.full((600, 6), 0.5)
    res = cv_loss(Architecture((4,)), X, Y, k=3, config=TrainConfig(init="zeros"))
    assert res.mean < 1e-4 and len(res.fold_losses) == 3


def test_r_squared_examples():
    t = np.array([1.0, 2.0, 3.0])
    assert r_squared(t, t)[0] == 1.0
    assert r_squared(np.full(3, 2.0), t)[0] == 0.0
    assert r_squared(np.array([1.1, 1.9, 3.0]), t)[0] == pytest.approx(0.99)
    assert np.isnan(r_squared(np.ones(3), np.full(3, 2.0))[0])


def _trial(i, loss, widths):
    return HpoTrial(i, Architecture(tuple(widths)), loss, [loss])


def test_tpe_empty_history_uniform_within_bounds():
    b = ArchitectureBounds()
    archs = [tpe_suggest([], b, s) for s in range(50)]
    assert all(b.contains(a) for a in archs)
    assert len({a.hidden_layers for a in archs}) > 3


def test_tpe_deterministic_and_in_bounds():
    b = ArchitectureBounds(1, 4, 2, 16)
    rng = make_rng(0)
    hist = [HpoTrial(i, b.random(rng), float(rng.random()), []) for i in range(20)]
    a = tpe_suggest(hist, b, 77)
    assert a == tpe_suggest(hist, b, 77)
    assert b.contains(a)


def test_tpe_prefers_good_region():
    b = ArchitectureBounds(1, 3, 2, 8)
    hist = [_trial(i, 0.01, [8]) for i in range(5)] + [_trial(5 + i, 1.0, [2, 2, 2]) for i in range(15)]
    picks = [tpe_suggest(hist, b, s) for s in range(30)]
    assert np.mean([a.hidden_layers == 1 for a in picks]) > 0.6


def test_tpe_all_equal_losses():
    b = ArchitectureBounds(1, 3, 2, 8)
    hist = [_trial(i, 0.5, [3 + i % 4]) for i in range(12)]
    assert b.contains(tpe_suggest(hist, b, 1))


def test_search_budget_one_and_csv(tmp_path):
    X, Y = _data(60)
    res = search_architectures(X, Y, ArchitectureBounds(1, 2, 2, 6), budget=1, k=3,
                               config=TrainConfig(epochs=2))
    assert len(res.trials) == 1 and res.best is res.trials[0]
    write_hpo_csv(res, tmp_path / "h.csv")
    back = read_hpo_csv(tmp_path / "h.csv")
    assert back.best.architecture == res.best.architecture and back.best.mean_loss == res.best.mean_loss


def test_random_search_independent_of_threads():
    X, Y = _data(60)
    kw = dict(bounds=ArchitectureBounds(1, 3, 2, 8), budget=5, method="random", k=3, seed=4,
              config=TrainConfig(epochs=2))
    a = search_architectures(X, Y, threads=1, **kw)
    b = search_architectures(X, Y, threads=3, **kw)
    assert [(t.index, t.architecture, t.mean_loss) for t in a.trials] == \
           [(t.index, t.architecture, t.mean_loss) for t in b.trials]


def test_best_per_depth(tmp_path):
    res = SearchResult(sorted([_trial(0, 0.3, [4]), _trial(1, 0.1, [4, 4]), _trial(2, 0.2, [5]),
                               _trial(3, 0.05, [2, 3])], key=lambda t: t.mean_loss))
    best = res.best_per_depth()
    assert [(t.index, t.architecture.hidden_layers) for t in best] == [(3, 2), (2, 1)]
    write_best_per_depth_csv(res, tmp_path / "b.csv", 3)
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "mse,hidden_layers,layer1,layer2,layer3"
    assert lines[1] == "0.05,2,2,3,"


def test_search_rejects_bad_method():
    X, Y = _data(20)
    with pytest.raises(ValidationError):
        search_architectures(X, Y, budget=1, method="grid")
