import numpy as np
import pytest

from shipgen.neural import (
    AdamState, ChecksumError, FeedforwardNet, TrainConfig, adam_init, adam_step, load_net,
    non_decreasing_windows, predict, r_squared, save_net, train_classifier, train_regressor,
)

ARCHS = {
    "regressor": dict(out_dim=1),
    "classifier": dict(out_dim=1, output="sigmoid"),
    "denoiser": dict(out_dim=12, time_dim=64),
    "conditional": dict(out_dim=12, time_dim=64, n_classes=2),
}


def _aux(net, n, rng):
    t = rng.integers(1, 1001, n) if net.time_dim else None
    c = rng.integers(0, net.n_classes, n) if net.n_classes else None
    return t, c


def fd_input_error(net, x, t, c, head=0, h=1e-4):
    """Max-norm relative error of grad_input against central differences."""
    log = net.output == "sigmoid"
    g = net.grad_input(x, head, t, c, log=log)

    def f(z):
        y = net(z, t, c)[:, head]
        return (np.log(y) if log else y).sum()

    fd = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        e = np.zeros_like(x)
        e[idx] = h
        fd[idx] = (f(x + e) - f(x - e)) / (2 * h)
    return np.abs(g - fd).max() / np.abs(fd).max()


def fd_param_error(net, x, t, c, rng, n_entries=4, h=1e-4):
    """Same check for the parameter gradient of sum(w * logit), on sampled entries."""
    w = rng.standard_normal((len(x), net.out_dim))
    grads = net.grad_params(x, w, t, c)
    worst = 0.0
    for name, p in net.params.items():
        picks = [tuple(rng.integers(0, s) for s in p.shape) for _ in range(n_entries)]
        fd = np.empty(n_entries)
        an = np.empty(n_entries)
        for k, idx in enumerate(picks):
            old = p[idx]
            p[idx] = old + h
            fp = (net.logit(x, t, c) * w).sum()
            p[idx] = old - h
            fm = (net.logit(x, t, c) * w).sum()
            p[idx] = old
            fd[k] = (fp - fm) / (2 * h)
            an[k] = grads[name][idx]
        scale = max(np.abs(fd).max(), np.abs(grads[name]).max(), 1e-12)
        worst = max(worst, np.abs(fd - an).max() / scale)
    return worst


# ---------------------------------------------------------------- forward


def test_zero_weights_give_output_bias():
    net = FeedforwardNet(5, 3, (8, 8), seed=1)
    for k in net.params:
        net.params[k][...] = 0.0
    net.params["b2"][:] = [1.0, -2.0, 0.5]
    np.testing.assert_array_equal(net(np.ones((4, 5))), np.tile([1.0, -2.0, 0.5], (4, 1)))


def test_single_linear_layer():
    rng = np.random.default_rng(0)
    net = FeedforwardNet(4, 2, (), residual=False, seed=2)
    W, b = net.params["W0"], net.params["b0"]
    b[:] = [0.3, -0.1]
    x = rng.standard_normal((6, 4))
    np.testing.assert_allclose(net(x), x @ W + b, rtol=1e-15)
    np.testing.assert_allclose(net.grad_input(x, 1), np.tile(W[:, 1], (6, 1)), rtol=1e-15)


def test_zero_final_layer_gives_zero_input_gradient():
    net = FeedforwardNet(6, 1, seed=3)
    net.params["W4"][...] = 0.0
    assert not np.any(net.grad_input(np.random.default_rng(1).standard_normal((3, 6))))


def test_forward_is_deterministic():
    x = np.random.default_rng(2).standard_normal((10, 12))
    a = FeedforwardNet(12, 12, time_dim=64, seed=9)(x, np.arange(1, 11))
    b = FeedforwardNet(12, 12, time_dim=64, seed=9)(x, np.arange(1, 11))
    assert np.array_equal(a.view(np.uint64), b.view(np.uint64))
    assert np.all(np.isfinite(a))


def test_input_validation():
    net = FeedforwardNet(12, 12, time_dim=64, n_classes=2, seed=0)
    x = np.zeros((2, 12))
    with pytest.raises(ValueError):
        net(np.zeros((2, 11)), [1, 2], [0, 1])
    with pytest.raises(ValueError):
        net(x, None, [0, 1])
    with pytest.raises(ValueError):
        net(x, [1, 2], None)
    with pytest.raises(ValueError):
        net(x, [1, 2], [0, 2])
    with pytest.raises(ValueError):
        FeedforwardNet(12, 1, seed=0)(x, t=[1, 2])
    with pytest.raises(ValueError):
        net.grad_input(x, head=12, t=[1, 2], c=[0, 1])
    with pytest.raises(ValueError):
        net.grad_input(x, head=slice(0, 2), t=[1, 2], c=[0, 1])
    with pytest.raises(ValueError):
        FeedforwardNet(4, 1, (8, 16), residual=True)


def test_sigmoid_head_is_a_probability():
    net = FeedforwardNet(3, 1, output="sigmoid", seed=4)
    net.params["b4"][:] = 40.0
    p = net(np.random.default_rng(3).standard_normal((100, 3)) * 50)
    assert np.all((p > 0.0) & (p <= 1.0)) and np.all(np.isfinite(p))


# ---------------------------------------------------------------- gradients


@pytest.mark.parametrize("arch", sorted(ARCHS))
def test_gradients_match_finite_differences(arch):
    rng = np.random.default_rng(hash(arch) % 2**32)
    for k in range(5):
        net = FeedforwardNet(12, seed=100 + k, **ARCHS[arch])
        x = rng.standard_normal((3, 12))
        t, c = _aux(net, 3, rng)
        assert fd_input_error(net, x, t, c, head=int(rng.integers(net.out_dim))) < 1e-4
        assert fd_param_error(net, x, t, c, rng) < 1e-4


# ---------------------------------------------------------------- adam


def test_adam_zero_gradient_is_a_no_op():
    p = {"w": np.array([1.0, -2.0])}
    s = adam_step(adam_init(p), {"w": np.zeros(2)}, lr=0.1)
    np.testing.assert_array_equal(s.params["w"], p["w"])


def test_adam_first_step_on_square():
    s = adam_init({"w": np.array([1.0])})
    s = adam_step(s, {"w": 2.0 * s.params["w"]}, lr=0.1)
    # bias-corrected first step has unit size: 1 - lr
    assert s.params["w"][0] == pytest.approx(0.9, abs=1e-8)
    for _ in range(200):
        s = adam_step(s, {"w": 2.0 * s.params["w"]}, lr=0.1)
    assert abs(s.params["w"][0]) < 0.05


def test_adam_is_deterministic_and_checks_shapes():
    def run():
        s = adam_init({"a": np.ones((2, 2)), "b": np.zeros(3)})
        rng = np.random.default_rng(5)
        for _ in range(5):
            s = adam_step(s, {"a": rng.standard_normal((2, 2)), "b": rng.standard_normal(3)})
        return s
    a, b = run(), run()
    for k in a.params:
        assert np.array_equal(a.params[k], b.params[k]) and np.array_equal(a.v[k], b.v[k])
    with pytest.raises(ValueError):
        adam_step(adam_init({"a": np.ones(2)}), {"a": np.ones(3)})
    with pytest.raises(ValueError):
        adam_step(adam_init({"a": np.ones(2)}), {"b": np.ones(2)})


# ---------------------------------------------------------------- training

SMALL = TrainConfig(hidden=(64, 64, 64), epochs=60, batch=128, lr=2e-3, seed=3)


def _smooth_problem(n=3000, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (n, 6))
    y = np.sin(2 * X[:, 0]) + X[:, 1] * X[:, 2] + 0.5 * X[:, 3] ** 2
    return X, y


def test_r_squared_matches_two_pass_reference():
    rng = np.random.default_rng(4)
    y = rng.standard_normal(500) * 3 + 10
    p = y + rng.standard_normal(500)
    mean = sum(y) / len(y)
    ss_tot = sum((v - mean) ** 2 for v in y)
    ss_res = sum((a - b) ** 2 for a, b in zip(y, p))
    assert r_squared(y, p) == pytest.approx(1 - ss_res / ss_tot, rel=1e-12)
    assert r_squared(y, y) == 1.0


def test_regressor_fits_and_is_reproducible():
    X, y = _smooth_problem()
    net, rep = train_regressor(X, y, SMALL, name="toy")
    assert rep.metric_name == "r2" and rep.metric > 0.95
    assert rep.hyper["epochs"] == 60 and rep.seed == 3
    assert rep.losses[-1] < 0.2 * rep.losses[0]
    again, _ = train_regressor(X, y, SMALL, name="toy")
    for k in net.params:
        assert np.array_equal(net.params[k], again.params[k])
    pred = predict(net, X[:5])
    assert np.allclose(pred, y[:5], atol=0.3)
    with pytest.raises(ValueError):
        train_regressor(X, np.full(len(X), 2.0), SMALL)


def test_classifier_accuracy_and_chance_control():
    rng = np.random.default_rng(6)
    X = rng.uniform(-1, 1, (6000, 6))
    labels = (X[:, 0] + X[:, 1] ** 2 - 0.3 > 0).astype(int)
    net, rep = train_classifier(X, labels, SMALL)
    assert rep.metric_name == "accuracy" and rep.metric >= 0.95
    p = net(X)[:, 0]
    assert np.all((p > 0) & (p < 1))
    _, control = train_classifier(X, labels, SMALL, shuffle_labels=True)
    balance = max(labels.mean(), 1 - labels.mean())
    assert abs(control.metric - balance) <= 0.05, (control.metric, balance)
    with pytest.raises(ValueError):
        train_classifier(X, np.ones(len(X)), SMALL)


def test_window_flagging():
    assert non_decreasing_windows(list(np.linspace(1, 0, 30))) == []
    losses = [1.0] * 5 + [0.5] * 20
    losses[15] = 2.0
    assert non_decreasing_windows(losses) == [5]


# ---------------------------------------------------------------- persistence


def test_model_file_round_trip(tmp_path):
    net = FeedforwardNet(12, 12, time_dim=64, n_classes=2, seed=7, meta={"kind": "x", "T": 10})
    digest = save_net(net, tmp_path / "m.net")
    back = load_net(tmp_path / "m.net")
    ref = net.rounded()
    assert back.config() == net.config() and back.meta == net.meta
    for k in net.params:
        assert np.array_equal(back.params[k], ref.params[k])
    assert len(digest) == 64 and back.checksum() == digest
    data = bytearray((tmp_path / "m.net").read_bytes())
    data[-3] ^= 0xFF
    (tmp_path / "bad.net").write_bytes(bytes(data))
    with pytest.raises(ChecksumError):
        load_net(tmp_path / "bad.net")
