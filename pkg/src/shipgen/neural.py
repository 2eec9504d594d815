"""Small feedforward networks with hand-written reverse-mode gradients.

One class covers the denoiser, the feasibility classifier and the
performance regressors: SiLU hidden layers, an optional residual link from
the first to the last hidden layer, a linear or sigmoid head, and optional
timestep / class embeddings concatenated to the input.  Gradients are
available with respect to the parameters (training) and the input
(guidance).
"""
from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

MAGIC = b"SHIPNET1"
FORMAT_VERSION = 1


def silu(z):
    return z * expit(z)


def _silu_grad(z):
    s = expit(z)
    return s * (1.0 + z * (1.0 - s))


_P_LO, _P_HI = np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0)


def sigmoid(z):
    """Logistic function, kept strictly inside (0, 1)."""
    return np.clip(expit(np.asarray(z, dtype=float)), _P_LO, _P_HI)


def timestep_embedding(t, dim: int) -> np.ndarray:
    """Sinusoidal features of integer timesteps, shape (len(t), dim)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    half = dim // 2
    freqs = np.exp(-math.log(10_000.0) * np.arange(half) / half)
    arg = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(arg), np.cos(arg)], axis=1)


class FeedforwardNet:
    """Multilayer perceptron; weights are stored as (fan_in, fan_out) arrays.

    ``output`` is ``"linear"`` or ``"sigmoid"``.  With ``time_dim > 0`` the
    forward pass takes integer timesteps ``t``; with ``n_classes > 0`` it
    takes integer class labels ``c`` looked up in a learned embedding table.
    """

    def __init__(self, in_dim: int, out_dim: int, hidden=(256, 256, 256, 256), *,
                 residual: bool = True, output: str = "linear", time_dim: int = 0,
                 n_classes: int = 0, class_dim: int = 16, seed: int = 0,
                 out_scale: float = 1.0, meta: dict | None = None):
        hidden = tuple(int(h) for h in hidden)
        if output not in ("linear", "sigmoid"):
            raise ValueError(f"unknown output activation {output!r}")
        if residual and (len(hidden) < 2 or hidden[0] != hidden[-1]):
            raise ValueError("residual link needs two or more hidden layers of equal width")
        self.in_dim, self.out_dim, self.hidden = int(in_dim), int(out_dim), hidden
        self.residual, self.output = bool(residual), output
        self.time_dim, self.n_classes = int(time_dim), int(n_classes)
        self.class_dim = int(class_dim) if n_classes else 0
        self.meta = dict(meta or {})
        rng = np.random.default_rng(seed)
        widths = (self.in_dim + self.time_dim + self.class_dim,) + hidden + (self.out_dim,)
        self.params: dict[str, np.ndarray] = {}
        if self.n_classes:
            self.params["E"] = rng.standard_normal((self.n_classes, self.class_dim))
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            scale = math.sqrt(2.0 / a) if i < len(hidden) else out_scale / math.sqrt(a)
            self.params[f"W{i}"] = rng.standard_normal((a, b)) * scale
            self.params[f"b{i}"] = np.zeros(b)

    # ------------------------------------------------------------ structure

    @property
    def n_layers(self) -> int:
        return len(self.hidden) + 1

    def config(self) -> dict:
        return {"in_dim": self.in_dim, "out_dim": self.out_dim, "hidden": list(self.hidden),
                "residual": self.residual, "output": self.output, "time_dim": self.time_dim,
                "n_classes": self.n_classes, "class_dim": self.class_dim}

    def copy(self) -> "FeedforwardNet":
        net = FeedforwardNet.__new__(FeedforwardNet)
        net.__dict__.update(self.__dict__)
        net.params = {k: v.copy() for k, v in self.params.items()}
        net.meta = json.loads(json.dumps(self.meta))
        return net

    def rounded(self) -> "FeedforwardNet":
        """Copy with every weight rounded to 32-bit, as stored on disk."""
        net = self.copy()
        net.params = {k: v.astype("<f4").astype(np.float64) for k, v in net.params.items()}
        return net

    # ------------------------------------------------------------ evaluation

    def _inputs(self, x, t, c):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.in_dim:
            raise ValueError(f"input has {x.shape[1]} columns, network expects {self.in_dim}")
        parts = [x]
        if self.time_dim:
            if t is None:
                raise ValueError("this network needs timesteps")
            t = np.broadcast_to(np.asarray(t), (len(x),))
            parts.append(timestep_embedding(t, self.time_dim))
        elif t is not None:
            raise ValueError("this network takes no timestep input")
        if self.n_classes:
            if c is None:
                raise ValueError("this network needs class labels")
            c = np.broadcast_to(np.asarray(c, dtype=np.int64), (len(x),))
            if np.any((c < 0) | (c >= self.n_classes)):
                raise ValueError(f"class labels must lie in [0, {self.n_classes})")
            parts.append(self.params["E"][c])
        elif c is not None:
            raise ValueError("this network takes no class input")
        return np.concatenate(parts, axis=1) if len(parts) > 1 else x, c

    def forward_cache(self, x, t=None, c=None):
        a, c = self._inputs(x, t, c)
        cache = {"a": [a], "z": [], "c": c}
        H = len(self.hidden)
        for i in range(H):
            z = a @ self.params[f"W{i}"] + self.params[f"b{i}"]
            a = silu(z)
            if self.residual and i == H - 1:
                a = a + cache["a"][1]
            cache["z"].append(z)
            cache["a"].append(a)
        logit = a @ self.params[f"W{H}"] + self.params[f"b{H}"]
        y = sigmoid(logit) if self.output == "sigmoid" else logit
        cache["logit"], cache["y"] = logit, y
        return y, cache

    def forward(self, x, t=None, c=None) -> np.ndarray:
        return self.forward_cache(x, t, c)[0]

    __call__ = forward

    def logit(self, x, t=None, c=None) -> np.ndarray:
        return self.forward_cache(x, t, c)[1]["logit"]

    def backward(self, cache, g_logit) -> tuple[dict, np.ndarray]:
        """Gradients given dL/d(pre-activation output); returns (param grads, dL/dx)."""
        H = len(self.hidden)
        grads = {}
        a = cache["a"]
        g = np.asarray(g_logit, dtype=float)
        grads[f"W{H}"] = a[H].T @ g
        grads[f"b{H}"] = g.sum(axis=0)
        ga = g @ self.params[f"W{H}"].T
        g_res = None
        for i in range(H - 1, -1, -1):
            if self.residual and i == H - 1:
                g_res = ga
            if self.residual and i == 0 and g_res is not None:
                ga = ga + g_res
            gz = ga * _silu_grad(cache["z"][i])
            grads[f"W{i}"] = a[i].T @ gz
            grads[f"b{i}"] = gz.sum(axis=0)
            ga = gz @ self.params[f"W{i}"].T
        if self.n_classes:
            gE = np.zeros_like(self.params["E"])
            np.add.at(gE, cache["c"], ga[:, self.in_dim + self.time_dim:])
            grads["E"] = gE
        return grads, ga[:, :self.in_dim]

    def grad_input(self, x, head: int = 0, t=None, c=None, log: bool = False) -> np.ndarray:
        """d y[head] / dx for every row (rows are independent).

        With ``log=True`` on a sigmoid head this is the gradient of
        log(sigmoid(logit)), the feasible-class log-probability.
        """
        if not isinstance(head, (int, np.integer)) or not 0 <= head < self.out_dim:
            raise ValueError("head must select a single scalar output")
        y, cache = self.forward_cache(x, t, c)
        g = np.zeros_like(cache["logit"])
        if self.output == "sigmoid":
            z = cache["logit"][:, head]
            q = sigmoid(-z)          # 1 - p without cancellation
            g[:, head] = q if log else sigmoid(z) * q
        else:
            if log:
                raise ValueError("log-probability gradient needs a sigmoid head")
            g[:, head] = 1.0
        return self.backward(cache, g)[1]

    def grad_params(self, x, g_logit, t=None, c=None) -> dict:
        """Parameter gradient of sum(g_logit * logit)."""
        _, cache = self.forward_cache(x, t, c)
        return self.backward(cache, g_logit)[0]

    # ------------------------------------------------------------ persistence

    def to_bytes(self) -> bytes:
        payload = b"".join(self.params[k].astype("<f4").tobytes() for k in self.params)
        header = {"format": "shipgen-net", "version": FORMAT_VERSION, **self.config(),
                  "params": [[k, list(v.shape)] for k, v in self.params.items()],
                  "meta": self.meta, "payload_sha256": hashlib.sha256(payload).hexdigest()}
        hb = json.dumps(header, sort_keys=True).encode()
        return MAGIC + struct.pack("<I", len(hb)) + hb + payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "FeedforwardNet":
        if data[:8] != MAGIC:
            raise ModelFormatError("not a network file")
        (n,) = struct.unpack_from("<I", data, 8)
        header = json.loads(data[12:12 + n])
        payload = data[12 + n:]
        if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
            raise ChecksumError("network weights do not match their checksum")
        net = cls(header["in_dim"], header["out_dim"], header["hidden"], residual=header["residual"],
                  output=header["output"], time_dim=header["time_dim"],
                  n_classes=header["n_classes"], class_dim=header["class_dim"] or 16,
                  meta=header["meta"])
        flat = np.frombuffer(payload, dtype="<f4").astype(np.float64)
        pos = 0
        params = {}
        for name, shape in header["params"]:
            size = int(np.prod(shape))
            params[name] = flat[pos:pos + size].reshape(shape).copy()
            pos += size
        if pos != len(flat):
            raise ModelFormatError("payload size does not match the header")
        net.params = params
        return net

    def checksum(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()


class ModelFormatError(ValueError):
    pass


class ChecksumError(ValueError):
    pass


def save_net(net: FeedforwardNet, path) -> str:
    data = net.to_bytes()
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def load_net(path) -> FeedforwardNet:
    return FeedforwardNet.from_bytes(Path(path).read_bytes())


# ---------------------------------------------------------------- optimiser


@dataclass
class AdamState:
    params: dict
    m: dict
    v: dict
    t: int = 0


def adam_init(params: dict) -> AdamState:
    return AdamState({k: p.copy() for k, p in params.items()},
                     {k: np.zeros_like(p) for k, p in params.items()},
                     {k: np.zeros_like(p) for k, p in params.items()}, 0)


def adam_step(state: AdamState, grads: dict, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    """One bias-corrected Adam update; returns a new state."""
    if grads.keys() != state.params.keys():
        raise ValueError("gradient names do not match the parameters")
    t = state.t + 1
    c1, c2 = 1.0 - beta1 ** t, 1.0 - beta2 ** t
    params, m, v = {}, {}, {}
    for k, p in state.params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {k} has shape {g.shape}, expected {p.shape}")
        m[k] = beta1 * state.m[k] + (1.0 - beta1) * g
        v[k] = beta2 * state.v[k] + (1.0 - beta2) * g * g
        params[k] = p - lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + eps)
    return AdamState(params, m, v, t)


# ---------------------------------------------------------------- training


@dataclass(frozen=True)
class TrainConfig:
    hidden: tuple = (256, 256, 256, 256)
    epochs: int = 200
    batch: int = 256
    lr: float = 1e-3
    holdout: float = 0.1
    seed: int = 0
    residual: bool = True
    cosine: bool = False
    ema: float = 0.0

    def as_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class TrainReport:
    losses: list
    metric_name: str
    metric: float
    seed: int
    hyper: dict
    split_seed: int | None = None
    flagged_windows: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


def non_decreasing_windows(losses, width: int = 10) -> list[int]:
    """Epochs i where the loss at i + width exceeds the loss at i."""
    return [i for i in range(len(losses) - width) if losses[i + width] > losses[i]]


def run_epochs(net: FeedforwardNet, n: int, step, cfg: TrainConfig, rng,
               log=None) -> list[float]:
    """Minibatch Adam over ``cfg.epochs`` shuffled passes of ``n`` rows.

    ``step(net, idx, rng)`` returns ``(mean loss, grads)`` for the rows
    ``idx``.  With ``cfg.cosine`` the learning rate decays to zero over the
    run; with ``cfg.ema > 0`` the net ends up holding the exponential moving
    average of the iterates.  Returns the per-epoch mean training loss.
    """
    state = adam_init(net.params)
    avg = {k: p.copy() for k, p in net.params.items()} if cfg.ema > 0 else None
    steps_per_epoch = -(-n // cfg.batch)
    total_steps = cfg.epochs * steps_per_epoch
    losses = []
    k = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, cfg.batch):
            idx = order[s:s + cfg.batch]
            loss, grads = step(net, idx, rng)
            lr = cfg.lr * 0.5 * (1.0 + math.cos(math.pi * k / total_steps)) if cfg.cosine else cfg.lr
            state = adam_step(state, grads, lr)
            net.params = state.params
            if avg is not None:
                for name, p in net.params.items():
                    avg[name] = cfg.ema * avg[name] + (1.0 - cfg.ema) * p
            total += loss * len(idx)
            k += 1
        losses.append(total / n)
        if log is not None and (epoch + 1) % 25 == 0:
            log.info("epoch %d: loss %.5f", epoch + 1, losses[-1])
    if avg is not None:
        net.params = avg
    return losses


def split_indices(n: int, holdout: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng([seed, 0x5EED]).permutation(n)
    k = max(1, int(round(holdout * n)))
    return np.sort(perm[k:]), np.sort(perm[:k])


def r_squared(y, pred) -> float:
    y, pred = np.asarray(y, dtype=float), np.asarray(pred, dtype=float)
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    return 1.0 - ss_res / ss_tot


def _mse_step(X, Y):
    def step(net, idx, rng):
        y, cache = net.forward_cache(X[idx])
        r = y - Y[idx]
        n = len(idx) * Y.shape[1]
        grads, _ = net.backward(cache, 2.0 * r / n)
        return float((r * r).sum() / n), grads
    return step


def train_regressor(X, y, cfg: TrainConfig = TrainConfig(), name: str = "metric",
                    log=None) -> tuple[FeedforwardNet, TrainReport]:
    """MSE regression of one standardised target on model-space inputs.

    The returned net predicts the standardised target; ``meta`` holds the
    shift and scale to undo it.  R^2 is measured on the held-out split in
    the target's own units.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if len(X) != len(y) or len(y) < 10:
        raise ValueError("need matching inputs and targets (at least 10 rows)")
    if not np.all(np.isfinite(y)):
        raise ValueError(f"target {name} has non-finite values")
    tr, ho = split_indices(len(X), cfg.holdout, cfg.seed)
    mu, sd = float(y[tr].mean()), float(y[tr].std())
    if sd == 0.0:
        raise ValueError(f"target {name} is constant")
    net = FeedforwardNet(X.shape[1], 1, cfg.hidden, residual=cfg.residual, seed=cfg.seed,
                         meta={"kind": "regressor", "target": name, "shift": mu, "scale": sd})
    Yn = ((y - mu) / sd)[:, None]
    rng = np.random.default_rng([cfg.seed, 1])
    losses = run_epochs(net, len(tr), _mse_step(X[tr], Yn[tr]), cfg, rng, log=log)
    pred = net(X[ho])[:, 0] * sd + mu
    r2 = r_squared(y[ho], pred)
    return net, TrainReport(losses, "r2", r2, cfg.seed, cfg.as_dict(), cfg.seed,
                            non_decreasing_windows(losses), {"target": name})


def predict(net: FeedforwardNet, X) -> np.ndarray:
    """Regressor output in the target's own units."""
    return net(X)[:, 0] * net.meta.get("scale", 1.0) + net.meta.get("shift", 0.0)


def train_classifier(X, labels, cfg: TrainConfig = TrainConfig(), log=None,
                     shuffle_labels: bool = False) -> tuple[FeedforwardNet, TrainReport]:
    """Binary cross-entropy on a sigmoid head; label 1 means feasible."""
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels).astype(float).reshape(-1)
    if len(np.unique(labels)) < 2:
        raise ValueError("classifier needs both feasible and invalid examples")
    if shuffle_labels:
        labels = np.random.default_rng([cfg.seed, 2]).permutation(labels)
    tr, ho = split_indices(len(X), cfg.holdout, cfg.seed)
    net = FeedforwardNet(X.shape[1], 1, cfg.hidden, residual=cfg.residual, output="sigmoid",
                         seed=cfg.seed, meta={"kind": "classifier"})
    Xt, Lt = X[tr], labels[tr][:, None]

    def step(net, idx, rng):
        p, cache = net.forward_cache(Xt[idx])
        z, lab = cache["logit"], Lt[idx]
        # log(1 + e^-|z|) form of the cross-entropy, stable for large |z|
        loss = np.maximum(z, 0.0) - z * lab + np.log1p(np.exp(-np.abs(z)))
        grads, _ = net.backward(cache, (p - lab) / len(idx))
        return float(loss.mean()), grads

    rng = np.random.default_rng([cfg.seed, 1])
    losses = run_epochs(net, len(tr), step, cfg, rng, log=log)
    acc = float(((net(X[ho])[:, 0] > 0.5) == (labels[ho] > 0.5)).mean())
    return net, TrainReport(losses, "accuracy", acc, cfg.seed, cfg.as_dict(), cfg.seed,
                            non_decreasing_windows(losses),
                            {"shuffled_labels": shuffle_labels, "n_train": int(len(tr))})
