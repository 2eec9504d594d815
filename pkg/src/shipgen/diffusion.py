"""Denoising diffusion on normalised design vectors.

Training regresses the injected noise from a noised design at a uniformly
drawn step; sampling runs the reverse chain from pure noise.  Guided
variants add the input gradient of the feasibility classifier's
log-probability and subtract weighted gradients of the performance
regressors at every step.  All gradients live in model (normalised) space.

Every chain ``i`` owns the random stream ``default_rng([seed, i])``: the
first draw is X_T and the following ``T`` rows are the per-step noise, so a
chain's result does not depend on how chains are batched or distributed.
Per-sample objective weights come from a separate stream.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from shipgen.dataset import Normalizer
from shipgen.designspace import HULL_SPACE, DesignSpace
from shipgen.neural import (FeedforwardNet, TrainConfig, TrainReport, non_decreasing_windows,
                            run_epochs)

log = logging.getLogger(__name__)

TIME_DIM = 64
CLASS_DIM = 16
CHAIN_BLOCK = 256
MAX_ABS_INPUT = 1.5
GUIDE_CLIP = 1.0
PERF_STEP = 10.0
N_OBJECTIVES = 7
FEASIBLE, INVALID = 1, 0


@dataclass(frozen=True)
class NoiseSchedule:
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bar: np.ndarray
    sigmas: np.ndarray

    @property
    def T(self) -> int:
        return len(self.betas)

    def at(self, t: int) -> tuple[float, float, float, float]:
        """(beta, alpha, alpha_bar, sigma) at step t (1-based)."""
        i = t - 1
        return self.betas[i], self.alphas[i], self.alpha_bar[i], self.sigmas[i]


def make_schedule(T: int = 1000, beta1: float = 1e-4, betaT: float = 0.02) -> NoiseSchedule:
    """Linear beta ramp with sigma_t = sqrt(beta_t)."""
    if T < 1:
        raise ValueError("T must be at least 1")
    if not 0.0 < beta1 <= betaT < 1.0:
        raise ValueError("need 0 < beta1 <= betaT < 1")
    betas = np.linspace(beta1, betaT, T) if T > 1 else np.array([beta1])
    alphas = 1.0 - betas
    # cumulative product in extended precision
    alpha_bar = np.cumprod(alphas.astype(np.longdouble)).astype(np.float64)
    return NoiseSchedule(betas, alphas, alpha_bar, np.sqrt(betas))


def schedule_from_meta(meta: dict) -> NoiseSchedule:
    return make_schedule(meta["T"], meta["beta1"], meta["betaT"])


@dataclass(frozen=True)
class DiffusionConfig(TrainConfig):
    lr: float = 2e-4
    epochs: int = 1500
    out_scale: float = 0.1


def _check_normalized(X, limit: float = MAX_ABS_INPUT):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("training data must be a non-empty (n, d) array")
    if np.any(np.abs(X) > limit):
        raise ValueError(f"training data is not normalised (|x| > {limit} present)")
    return X


def _denoiser_step(X0, sched: NoiseSchedule, labels=None):
    def step(net, idx, rng):
        n, d = len(idx), X0.shape[1]
        t = rng.integers(1, sched.T + 1, size=n)
        eps = rng.standard_normal((n, d))
        ab = sched.alpha_bar[t - 1][:, None]
        xt = np.sqrt(ab) * X0[idx] + np.sqrt(1.0 - ab) * eps
        c = None if labels is None else labels[idx]
        pred, cache = net.forward_cache(xt, t, c)
        r = pred - eps
        grads, _ = net.backward(cache, 2.0 * r / (n * d))
        return float((r * r).mean()), grads
    return step


def _new_denoiser(d: int, sched: NoiseSchedule, cfg: DiffusionConfig, n_classes: int = 0,
                  kind: str = "denoiser") -> FeedforwardNet:
    meta = {"kind": kind, "T": sched.T, "beta1": float(sched.betas[0]),
            "betaT": float(sched.betas[-1])}
    return FeedforwardNet(d, d, cfg.hidden, residual=cfg.residual, time_dim=TIME_DIM,
                          n_classes=n_classes, class_dim=CLASS_DIM, seed=cfg.seed,
                          out_scale=cfg.out_scale, meta=meta)


def train_ddpm(X0, sched: NoiseSchedule, cfg: DiffusionConfig = DiffusionConfig(),
               log_to=None) -> tuple[FeedforwardNet, TrainReport]:
    """Noise-prediction training on normalised feasible designs."""
    X0 = _check_normalized(X0)
    net = _new_denoiser(X0.shape[1], sched, cfg)
    rng = np.random.default_rng([cfg.seed, 3])
    losses = run_epochs(net, len(X0), _denoiser_step(X0, sched), cfg, rng, log=log_to)
    return net, TrainReport(losses, "final_loss", losses[-1], cfg.seed, cfg.as_dict(), None,
                            non_decreasing_windows(losses), {"n_train": len(X0)})


def train_conditional(X, labels, sched: NoiseSchedule, cfg: DiffusionConfig = DiffusionConfig(),
                      log_to=None) -> tuple[FeedforwardNet, TrainReport]:
    """Class-conditioned denoiser; label 1 = feasible, 0 = invalid.

    Invalid designs may sit outside the fitted range of the normaliser, so
    the input check is looser than for the plain denoiser.
    """
    X = _check_normalized(X, limit=4.0)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if len(labels) != len(X):
        raise ValueError("one label per design is required")
    if len(np.unique(labels)) < 2:
        raise ValueError("conditional training needs both feasible and invalid designs")
    if np.any((labels != 0) & (labels != 1)):
        raise ValueError("labels must be 0 (invalid) or 1 (feasible)")
    net = _new_denoiser(X.shape[1], sched, cfg, n_classes=2, kind="conditional-denoiser")
    rng = np.random.default_rng([cfg.seed, 4])
    losses = run_epochs(net, len(X), _denoiser_step(X, sched, labels), cfg, rng, log=log_to)
    E = net.params["E"]
    return net, TrainReport(losses, "final_loss", losses[-1], cfg.seed, cfg.as_dict(), None,
                            non_decreasing_windows(losses),
                            {"n_train": len(X), "embedding_distance": float(np.linalg.norm(E[1] - E[0]))})


# ---------------------------------------------------------------- sampling


@dataclass(frozen=True)
class GuidanceConfig:
    """gamma weights the classifier term; lambdas weight the objectives.

    ``lambda_mode`` is ``"random"`` (uniform on the simplex per sample) or
    ``"fixed"`` (``lambdas`` renormalised).  ``damp_noise=False`` restores
    the undamped noise term sigma_t * Z for ablations.  ``clip`` caps the
    per-sample norm of the classifier gradient and of the weighted objective
    gradient (model-space units; ``None`` disables).  A classifier trained to
    high accuracy is very steep off the data, and an unclipped step at large
    t throws chains far outside the region the denoiser has seen.

    ``perf_step`` scales the objective term by ``perf_step * beta_t`` so the
    push follows the noise schedule; ``None`` applies it with unit weight at
    every step, which drives nearly all chains out of the feasible region.
    """
    gamma: float = 0.0
    lambda_mode: str = "random"
    lambdas: tuple | None = None
    damp_noise: bool = True
    clip: float | None = GUIDE_CLIP
    perf_step: float | None = PERF_STEP

    def __post_init__(self):
        if self.perf_step is not None and not self.perf_step > 0.0:
            raise ValueError("perf_step must be positive or None")
        if self.clip is not None and not self.clip > 0.0:
            raise ValueError("clip must be positive or None")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.lambda_mode not in ("random", "fixed"):
            raise ValueError(f"unknown lambda mode {self.lambda_mode!r}")
        if self.lambda_mode == "fixed":
            lam = np.asarray(self.lambdas if self.lambdas is not None else [], dtype=float)
            if lam.shape != (N_OBJECTIVES,) or np.any(lam < 0.0):
                raise ValueError(f"fixed mode needs {N_OBJECTIVES} non-negative weights")


def draw_lambdas(cfg: GuidanceConfig, seed: int, chains) -> np.ndarray:
    """Per-chain objective weights, non-negative and summing to one."""
    if cfg.lambda_mode == "fixed":
        lam = np.asarray(cfg.lambdas, dtype=float)
        s = lam.sum()
        row = lam / s if s > 0 else lam
        return np.tile(row, (len(chains), 1))
    out = np.empty((len(chains), N_OBJECTIVES))
    for k, i in enumerate(chains):
        e = np.random.default_rng([seed, int(i), 1]).exponential(size=N_OBJECTIVES)
        out[k] = e / e.sum()
    return out


@dataclass
class SampleBatch:
    designs: np.ndarray                   # raw design vectors, clamped to the box
    model: np.ndarray                     # final model-space vectors before clamping
    lambdas: np.ndarray | None = None
    grad_norms: np.ndarray | None = None  # (T, 1 + 7) mean gradient norms, t = T..1
    info: dict = field(default_factory=dict)


def _clip_rows(g, clip):
    if clip is None:
        return g
    n = np.sqrt(np.einsum("ij,ij->i", g, g))[:, None]
    return g * np.minimum(1.0, clip / np.maximum(n, 1e-300))


def _block(args):
    (den, sched, chains, seed, gamma, damp, clip, clf, regs, lam, label, pstep) = args
    T = sched.T
    d = den.in_dim
    noise = np.stack([np.random.default_rng([seed, int(i)]).standard_normal((T + 1, d))
                      for i in chains])
    x = noise[:, 0]
    B = len(chains)
    c = None if label is None else np.full(B, label)
    norms = np.zeros((T, 1 + N_OBJECTIVES)) if (clf is not None or regs) else None
    zero = np.zeros((B, d))
    for t in range(T, 0, -1):
        beta, alpha, ab, sigma = sched.at(t)
        eps = den(x, np.full(B, t), c)
        mean = (1.0 / np.sqrt(alpha)) * (x - ((1.0 - alpha) / np.sqrt(1.0 - ab)) * eps)
        z = noise[:, T - t + 1] if t > 1 else zero
        step = mean + sigma * (z * (1.0 - gamma)) if damp else mean + sigma * z
        row = T - t
        if clf is not None and gamma != 0.0:
            g = clf.grad_input(x, 0, log=True)
            norms[row, 0] = np.linalg.norm(g, axis=1).mean()
            step = step + gamma * _clip_rows(g, clip)
        if regs:
            perf = np.zeros_like(x)
            for j, r in enumerate(regs):
                g = r.grad_input(x, 0)
                perf += lam[:, j:j + 1] * g
                norms[row, 1 + j] = np.linalg.norm(g, axis=1).mean()
            w = 1.0 if pstep is None else pstep * beta
            step = step - w * _clip_rows(perf, clip)
        x = step
    return x, norms


def _run_chains(den, sched, n, seed, jobs=1, gamma=0.0, damp=True, clip=None, clf=None,
                regs=None, lam=None, label=None, perf_step=None):
    if n < 1:
        raise ValueError("n must be at least 1")
    if den.meta.get("kind") not in ("denoiser", "conditional-denoiser"):
        raise ValueError("network is not a trained denoiser")
    chains = np.arange(n)
    blocks = [chains[s:s + CHAIN_BLOCK] for s in range(0, n, CHAIN_BLOCK)]
    tasks = [(den, sched, b, seed, gamma, damp, clip, clf, regs,
              None if lam is None else lam[b[0]:b[-1] + 1], label, perf_step) for b in blocks]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_block, tasks))
    else:
        results = [_block(tk) for tk in tasks]
    X = np.concatenate([r[0] for r in results])
    norms = None
    if results[0][1] is not None:
        w = np.array([len(b) for b in blocks], dtype=float)
        norms = sum(r[1] * wk for r, wk in zip(results, w)) / w.sum()
    return X, norms


def _to_designs(X, normalizer: Normalizer, space: DesignSpace):
    return space.clamp(normalizer.inverse(X))


class NormalizerMismatchError(ValueError):
    """A network was trained against a different normaliser than the one supplied."""


def _check_pair(net: FeedforwardNet, normalizer: Normalizer, what: str):
    ref = net.meta.get("normalizer_sha256")
    if ref is not None and ref != normalizer_checksum(normalizer):
        raise NormalizerMismatchError(f"{what} was trained with a different normalizer")


def normalizer_checksum(normalizer: Normalizer) -> str:
    import hashlib
    import json
    return hashlib.sha256(json.dumps(normalizer.to_dict(), sort_keys=True).encode()).hexdigest()


def sample(den: FeedforwardNet, sched: NoiseSchedule, normalizer: Normalizer, n: int, seed: int,
           jobs: int = 1, space: DesignSpace = HULL_SPACE) -> SampleBatch:
    """Plain reverse chain from X_T ~ N(0, I)."""
    _check_pair(den, normalizer, "denoiser")
    X, _ = _run_chains(den, sched, n, seed, jobs)
    return SampleBatch(_to_designs(X, normalizer, space), X)


def sample_classifier_guided(den, classifier, sched, normalizer, gamma: float, n: int, seed: int,
                             jobs: int = 1, damp_noise: bool = True, clip: float | None = GUIDE_CLIP,
                             space: DesignSpace = HULL_SPACE) -> SampleBatch:
    cfg = GuidanceConfig(gamma=gamma, damp_noise=damp_noise, clip=clip)
    if classifier.output != "sigmoid" or classifier.in_dim != den.in_dim:
        raise ValueError("classifier does not match the denoiser")
    _check_pair(den, normalizer, "denoiser")
    _check_pair(classifier, normalizer, "classifier")
    X, norms = _run_chains(den, sched, n, seed, jobs, cfg.gamma, cfg.damp_noise, cfg.clip,
                           clf=classifier)
    return SampleBatch(_to_designs(X, normalizer, space), X, grad_norms=norms,
                       info={"gamma": gamma, "damp_noise": damp_noise, "clip": clip})


def sample_performance_guided(den, classifier, regressors, sched, normalizer, n: int, seed: int,
                              guidance: GuidanceConfig = GuidanceConfig(gamma=0.5), jobs: int = 1,
                              space: DesignSpace = HULL_SPACE) -> SampleBatch:
    """Classifier guidance plus the weighted sum of objective gradients, subtracted."""
    regressors = list(regressors)
    if len(regressors) != N_OBJECTIVES:
        raise ValueError(f"performance guidance needs {N_OBJECTIVES} regressors, got {len(regressors)}")
    for r in regressors:
        if r.in_dim != den.in_dim or r.out_dim != 1:
            raise ValueError("regressor does not match the denoiser")
        _check_pair(r, normalizer, "regressor")
    _check_pair(den, normalizer, "denoiser")
    _check_pair(classifier, normalizer, "classifier")
    lam = draw_lambdas(guidance, seed, np.arange(n))
    X, norms = _run_chains(den, sched, n, seed, jobs, guidance.gamma, guidance.damp_noise,
                           guidance.clip, clf=classifier, regs=regressors, lam=lam,
                           perf_step=guidance.perf_step)
    return SampleBatch(_to_designs(X, normalizer, space), X, lambdas=lam, grad_norms=norms,
                       info={"gamma": guidance.gamma, "lambda_mode": guidance.lambda_mode,
                             "clip": guidance.clip, "perf_step": guidance.perf_step})


def sample_conditional(den: FeedforwardNet, sched, normalizer, label: int, n: int, seed: int,
                       jobs: int = 1, space: DesignSpace = HULL_SPACE) -> SampleBatch:
    if den.n_classes == 0:
        raise ValueError("network is not class-conditional")
    if label not in (FEASIBLE, INVALID):
        raise ValueError(f"unknown class label {label!r}")
    _check_pair(den, normalizer, "conditional denoiser")
    X, _ = _run_chains(den, sched, n, seed, jobs, label=label)
    return SampleBatch(_to_designs(X, normalizer, space), X, info={"label": label})
