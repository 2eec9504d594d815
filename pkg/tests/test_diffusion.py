import numpy as np
import pytest

from shipgen.designspace import DesignSpace
from shipgen.diffusion import (
    FEASIBLE, INVALID, DiffusionConfig, GuidanceConfig, draw_lambdas, make_schedule, sample,
    sample_classifier_guided, sample_conditional, sample_performance_guided, train_conditional,
    train_ddpm,
)
from shipgen.neural import FeedforwardNet


class Identity:
    def inverse(self, u):
        return np.atleast_2d(u)

    def to_dict(self):
        return {}


def box(d, half=50.0):
    return DesignSpace(tuple(f"p{i}" for i in range(d)), np.full(d, -half), np.full(d, half),
                       (), lambda p: np.zeros((len(np.atleast_2d(p)), 0)))


D = 4
SPACE = box(D)
SCHED = make_schedule(40, 1e-3, 0.2)


def _den(seed=0, n_classes=0):
    kind = "conditional-denoiser" if n_classes else "denoiser"
    return FeedforwardNet(D, D, (32, 32), time_dim=64, n_classes=n_classes, seed=seed,
                          out_scale=0.3, meta={"kind": kind})


def _clf(seed=1):
    return FeedforwardNet(D, 1, (32, 32), output="sigmoid", seed=seed, meta={"kind": "classifier"})


def _regs(seed=2):
    return [FeedforwardNet(D, 1, (16, 16), seed=seed + i, meta={"kind": "regressor"}) for i in range(7)]


# ---------------------------------------------------------------- schedule


def test_schedule_examples():
    s = make_schedule(1000, 1e-4, 0.02)
    assert s.alpha_bar[0] == pytest.approx(0.9999, abs=1e-15)
    prod = 1.0
    for b in np.linspace(1e-4, 0.02, 1000):
        prod *= 1.0 - b
    assert s.alpha_bar[-1] == pytest.approx(prod, rel=1e-10) and s.alpha_bar[-1] < 0.01
    one = make_schedule(1, 0.3, 0.3)
    assert one.alpha_bar[0] == one.alphas[0] == pytest.approx(0.7)
    assert np.all(np.diff(s.alpha_bar) < 0) and np.all((s.betas > 0) & (s.betas < 1))
    np.testing.assert_allclose(s.sigmas ** 2, s.betas, rtol=1e-15)


@pytest.mark.parametrize("args", [(0, 1e-4, 0.02), (10, 0.0, 0.02), (10, 0.03, 0.02), (10, 1e-4, 1.0)])
def test_schedule_rejects_bad_bounds(args):
    with pytest.raises(ValueError):
        make_schedule(*args)


def test_noising_keeps_unit_variance():
    s = make_schedule()
    rng = np.random.default_rng(0)
    x, e = rng.standard_normal((2, 200_000))
    for t in (1, 300, 1000):
        ab = s.alpha_bar[t - 1]
        v = (np.sqrt(ab) * x + np.sqrt(1 - ab) * e).var()
        assert v == pytest.approx(1.0, abs=0.015)


# ---------------------------------------------------------------- training


def two_moons(n, seed):
    r = np.random.default_rng(seed)
    k = r.integers(0, 2, n)
    th = r.random(n) * np.pi
    x = np.where(k == 0, np.cos(th), 1 - np.cos(th))
    y = np.where(k == 0, np.sin(th), 0.5 - np.sin(th))
    P = np.column_stack([x, y]) + 0.05 * r.standard_normal((n, 2))
    return (P - [0.5, 0.25]) / [1.6, 0.9]


def test_two_moons_moments():
    X = two_moons(2000, 0)
    cfg = DiffusionConfig(hidden=(128, 128, 128), epochs=400, lr=2e-3, cosine=True, seed=0)
    sched = make_schedule()
    net, rep = train_ddpm(X, sched, cfg)
    assert rep.losses[0] == pytest.approx(1.0, abs=0.25)
    assert rep.losses[-1] < 0.5 * rep.losses[0]
    S = sample(net, sched, Identity(), 1500, seed=1, space=box(2)).designs
    assert np.all(np.abs(S.mean(axis=0) - X.mean(axis=0)) < 0.05)
    cs, cx = np.cov(S.T), np.cov(X.T)
    assert np.all(np.abs(cs - cx) <= 0.2 * np.abs(cx)), (cs, cx)


def test_initial_loss_is_noise_variance():
    X = np.random.default_rng(1).uniform(-1, 1, (512, D))
    _, rep = train_ddpm(X, make_schedule(), DiffusionConfig(hidden=(64, 64), epochs=1, seed=2))
    assert rep.losses[0] == pytest.approx(1.0, abs=0.1)


def test_training_rejects_unnormalised_data():
    X = np.zeros((10, D))
    X[3, 1] = 1.6
    with pytest.raises(ValueError):
        train_ddpm(X, SCHED)


def test_training_is_reproducible():
    X = np.random.default_rng(2).uniform(-1, 1, (300, D))
    cfg = DiffusionConfig(hidden=(32, 32), epochs=3, seed=4)
    a, _ = train_ddpm(X, SCHED, cfg)
    b, _ = train_ddpm(X, SCHED, cfg)
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)


def test_conditional_training():
    rng = np.random.default_rng(3)
    X = np.concatenate([rng.uniform(0, 1, (400, D)), rng.uniform(-1, 0, (400, D))])
    y = np.repeat([1, 0], 400)
    cfg = DiffusionConfig(hidden=(64, 64), epochs=40, lr=2e-3, seed=5)
    net, rep = train_conditional(X, y, SCHED, cfg)
    assert rep.losses[-1] < rep.losses[0]
    assert rep.extra["embedding_distance"] > 1e-3
    a = sample_conditional(net, SCHED, Identity(), FEASIBLE, 300, seed=1, space=SPACE).designs
    b = sample_conditional(net, SCHED, Identity(), INVALID, 300, seed=1, space=SPACE).designs
    # each label pulls samples toward its own half of the cube
    assert a.mean() > 0.2 and b.mean() < -0.2
    with pytest.raises(ValueError):
        train_conditional(X, np.ones(len(X)), SCHED, cfg)
    with pytest.raises(ValueError):
        sample_conditional(net, SCHED, Identity(), 2, 5, seed=1, space=SPACE)


# ---------------------------------------------------------------- sampling


def _bits(a):
    return np.ascontiguousarray(a).view(np.uint64)


def test_sampling_is_deterministic_and_clamped():
    den = _den()
    a = sample(den, SCHED, Identity(), 20, seed=3, space=box(D, 0.5))
    b = sample(den, SCHED, Identity(), 20, seed=3, space=box(D, 0.5))
    assert np.array_equal(_bits(a.designs), _bits(b.designs))
    assert np.all(np.abs(a.designs) <= 0.5)
    assert np.abs(a.model).max() > 0.5          # the clamp was exercised


def test_chains_do_not_depend_on_batching():
    den = _den()
    full = sample(den, SCHED, Identity(), 300, seed=4, space=SPACE).model
    head = sample(den, SCHED, Identity(), 7, seed=4, space=SPACE).model
    assert np.array_equal(_bits(full[:7]), _bits(head))
    par = sample(den, SCHED, Identity(), 300, seed=4, jobs=2, space=SPACE).model
    assert np.array_equal(_bits(full), _bits(par))


def test_guidance_with_zero_weights_reduces_to_plain_sampling():
    den, clf, regs = _den(), _clf(), _regs()
    plain = sample(den, SCHED, Identity(), 30, seed=5, space=SPACE).model
    cg = sample_classifier_guided(den, clf, SCHED, Identity(), 0.0, 30, seed=5, space=SPACE).model
    assert np.array_equal(_bits(plain), _bits(cg))
    zero = GuidanceConfig(gamma=0.0, lambda_mode="fixed", lambdas=(0,) * 7)
    pg = sample_performance_guided(den, clf, regs, SCHED, Identity(), 30, seed=5,
                                   guidance=zero, space=SPACE).model
    assert np.array_equal(_bits(plain), _bits(pg))


def test_full_classifier_weight_removes_noise():
    den, clf = _den(), _clf()
    a = sample_classifier_guided(den, clf, SCHED, Identity(), 1.0, 10, seed=6, space=SPACE).model
    b = sample_classifier_guided(den, clf, SCHED, Identity(), 1.0, 10, seed=99, space=SPACE).model
    # only X_T differs between seeds; with the same X_T the path is fixed
    c = sample_classifier_guided(den, clf, SCHED, Identity(), 1.0, 10, seed=6, space=SPACE).model
    assert np.array_equal(a, c) and not np.array_equal(a, b)
    undamped = sample_classifier_guided(den, clf, SCHED, Identity(), 1.0, 10, seed=6,
                                        damp_noise=False, space=SPACE).model
    assert not np.array_equal(a, undamped)


def test_classifier_guidance_raises_predicted_feasibility():
    den, clf = _den(), _clf()
    plain = sample(den, SCHED, Identity(), 200, seed=7, space=SPACE).model
    guided = sample_classifier_guided(den, clf, SCHED, Identity(), 0.5, 200, seed=7, space=SPACE)
    assert clf(guided.model).mean() > clf(plain).mean()
    assert guided.grad_norms.shape == (SCHED.T, 8)


def test_single_objective_guidance_lowers_that_objective():
    den, clf, regs = _den(), _clf(), _regs()
    only_first = GuidanceConfig(gamma=0.5, lambda_mode="fixed", lambdas=(1, 0, 0, 0, 0, 0, 0))
    g = sample_performance_guided(den, clf, regs, SCHED, Identity(), 200, seed=8,
                                  guidance=only_first, space=SPACE)
    base = sample_classifier_guided(den, clf, SCHED, Identity(), 0.5, 200, seed=8, space=SPACE)
    assert regs[0](g.model).mean() < regs[0](base.model).mean()


def test_random_lambdas_lie_on_the_simplex():
    lam = draw_lambdas(GuidanceConfig(gamma=0.5), seed=3, chains=np.arange(500))
    assert np.all(lam >= 0) and np.allclose(lam.sum(axis=1), 1.0, atol=1e-9)
    assert np.array_equal(lam[10:20], draw_lambdas(GuidanceConfig(), 3, np.arange(10, 20)))
    fixed = draw_lambdas(GuidanceConfig(lambda_mode="fixed", lambdas=(2, 0, 0, 0, 0, 0, 2)), 0, [0, 1])
    np.testing.assert_allclose(fixed, [[0.5, 0, 0, 0, 0, 0, 0.5]] * 2)


def test_guidance_argument_checks():
    den, clf, regs = _den(), _clf(), _regs()
    with pytest.raises(ValueError):
        GuidanceConfig(gamma=1.5)
    with pytest.raises(ValueError):
        GuidanceConfig(lambda_mode="fixed", lambdas=(1, 2))
    with pytest.raises(ValueError):
        sample_performance_guided(den, clf, regs[:6], SCHED, Identity(), 5, seed=1, space=SPACE)
    with pytest.raises(ValueError):
        sample(FeedforwardNet(D, D, (8, 8), time_dim=64), SCHED, Identity(), 5, seed=1, space=SPACE)
    with pytest.raises(ValueError):
        sample_conditional(den, SCHED, Identity(), FEASIBLE, 5, seed=1, space=SPACE)


def test_clip_bounds_the_guidance_step():
    den, clf = _den(), _clf()
    for p in clf.params:
        clf.params[p] = clf.params[p] * 40.0         # a very steep classifier
    plain = sample(den, SCHED, Identity(), 20, seed=9, space=SPACE).model
    clipped = sample_classifier_guided(den, clf, SCHED, Identity(), 1.0, 20, seed=9, clip=1e-3,
                                       space=SPACE).model
    free = sample_classifier_guided(den, clf, SCHED, Identity(), 1.0, 20, seed=9, clip=None,
                                    space=SPACE).model
    # gamma=1 removes the noise; the classifier moves each chain at most T * clip
    noiseless = sample_classifier_guided(den, clf, SCHED, Identity(), 1.0, 20, seed=9, clip=1e-12,
                                         space=SPACE).model
    assert np.abs(clipped - noiseless).max() < 10 * SCHED.T * 1e-3
    assert np.abs(free - noiseless).max() > np.abs(clipped - noiseless).max()
    assert not np.array_equal(plain, clipped)
    with pytest.raises(ValueError):
        GuidanceConfig(clip=0.0)


def test_perf_step_follows_the_schedule():
    den, clf, regs = _den(), _clf(), _regs()
    only_first = dict(gamma=0.5, lambda_mode="fixed", lambdas=(1, 0, 0, 0, 0, 0, 0))
    small = sample_performance_guided(den, clf, regs, SCHED, Identity(), 100, seed=8,
                                      guidance=GuidanceConfig(perf_step=1.0, **only_first), space=SPACE)
    big = sample_performance_guided(den, clf, regs, SCHED, Identity(), 100, seed=8,
                                    guidance=GuidanceConfig(perf_step=5.0, **only_first), space=SPACE)
    assert regs[0](big.model).mean() < regs[0](small.model).mean()
    assert big.info["perf_step"] == 5.0
    with pytest.raises(ValueError):
        GuidanceConfig(perf_step=-1.0)
