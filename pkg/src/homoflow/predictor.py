"""Camera-motion prediction on the preview horizon.

Two families: Taylor extrapolation of the past estimated motion (baselines,
motion input only) and a small tanh MLP that maps the downsampled recall
frames to the next ``M`` four-point deltas (image input only).
"""
from __future__ import annotations

import csv
import datetime as _dt
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, EmptyDataset, MissingHistory

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- baselines

def _history(recall_motions, need):
    h = np.asarray(recall_motions, dtype=np.float64).reshape(-1, 4, 2)
    if len(h) < need:
        raise MissingHistory(f"need {need} past motions, got {len(h)}")
    if not np.all(np.isfinite(h[-need:])):
        raise MissingHistory("past motion is missing")
    return h


def taylor_o1(recall_motions, m: int = 1) -> np.ndarray:
    """Hold the last motion: ``(m, 4, 2)``."""
    h = _history(recall_motions, 1)
    return np.repeat(h[-1][None], m, axis=0)


def taylor_o2(recall_motions, m: int = 1) -> np.ndarray:
    """Linear extrapolation of the last two motions: ``(m, 4, 2)``."""
    h = _history(recall_motions, 2)
    slope = h[-1] - h[-2]
    return np.stack([h[-1] + (j + 1) * slope for j in range(m)])


# ---------------------------------------------------------------- network

def mlp_forward(weights, biases, x):
    """tanh hidden layers, linear output. Returns ``(out, activations)``."""
    acts = [x]
    a = x
    for i, (w, b) in enumerate(zip(weights, biases)):
        z = a @ w + b
        a = np.tanh(z) if i < len(weights) - 1 else z
        acts.append(a)
    return a, acts


def mlp_backward(weights, acts, dout):
    """Gradients of a scalar whose derivative w.r.t. the output is ``dout``."""
    gw = [None] * len(weights)
    gb = [None] * len(weights)
    delta = dout
    for i in range(len(weights) - 1, -1, -1):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ weights[i].T) * (1.0 - acts[i] ** 2)
    return gw, gb


@dataclass
class PredictorModel:
    n_frames: int
    frame_shape: tuple
    m: int
    hidden_dims: list
    weights: list
    biases: list
    target_mean: np.ndarray
    target_scale: np.ndarray
    input_offset: float = 0.5
    seed: int = 0
    created: str = ""

    @property
    def input_dim(self) -> int:
        return self.n_frames * int(np.prod(self.frame_shape))

    @property
    def output_dim(self) -> int:
        return 8 * self.m

    def arch(self) -> dict:
        return {"input_dim": self.input_dim, "hidden_dims": list(self.hidden_dims),
                "output_dim": self.output_dim, "n_frames": self.n_frames,
                "frame_shape": list(self.frame_shape), "m": self.m,
                "activation": "tanh", "input_offset": self.input_offset}

    def copy(self) -> "PredictorModel":
        return PredictorModel(self.n_frames, tuple(self.frame_shape), self.m, list(self.hidden_dims),
                              [w.copy() for w in self.weights], [b.copy() for b in self.biases],
                              self.target_mean.copy(), self.target_scale.copy(),
                              self.input_offset, self.seed, self.created)


def init_model(n_frames=14, frame_shape=(32, 32), m=1, hidden_dims=(128,), seed=0,
               target_mean=None, target_scale=None) -> PredictorModel:
    """Glorot-uniform hidden layers, zero-initialised output layer."""
    rng = np.random.default_rng(seed)
    dims = [n_frames * int(np.prod(frame_shape))] + list(hidden_dims) + [8 * m]
    weights, biases = [], []
    for i in range(len(dims) - 1):
        lim = np.sqrt(6.0 / (dims[i] + dims[i + 1]))
        w = rng.uniform(-lim, lim, (dims[i], dims[i + 1]))
        if i == len(dims) - 2:
            w = np.zeros_like(w)
        weights.append(w)
        biases.append(np.zeros(dims[i + 1]))
    mean = np.zeros(8 * m) if target_mean is None else np.asarray(target_mean, dtype=np.float64)
    scale = np.ones(8 * m) if target_scale is None else np.asarray(target_scale, dtype=np.float64)
    return PredictorModel(n_frames, tuple(frame_shape), m, list(hidden_dims), weights, biases,
                          mean, scale, seed=seed)


def _flatten_inputs(model: PredictorModel, frames) -> np.ndarray:
    x = np.asarray(frames, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
    if x.shape[1:] != (model.n_frames, *model.frame_shape):
        raise DimensionMismatch(f"expected (*, {model.n_frames}, {model.frame_shape}), got {x.shape}")
    return x.reshape(len(x), -1) - model.input_offset


def forward(model: PredictorModel, frames) -> np.ndarray:
    """Predicted deltas ``(batch, m, 4, 2)`` for recall stacks ``(batch, n, h, w)``."""
    x = _flatten_inputs(model, frames)
    z, _ = mlp_forward(model.weights, model.biases, x)
    pred = z * model.target_scale + model.target_mean
    return pred.reshape(len(x), model.m, 4, 2)


def loss(pred, target, lam: float = 0.1) -> float:
    """Mean corner error norm plus ``lam`` times mean predicted corner norm."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionMismatch(f"shape mismatch {pred.shape} vs {target.shape}")
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    err = np.sqrt(((pred - target) ** 2).sum(axis=-1)).mean()
    reg = np.sqrt((pred ** 2).sum(axis=-1)).mean()
    return float(err + lam * reg)


def _safe_unit(v):
    n = np.sqrt((v ** 2).sum(axis=-1, keepdims=True))
    return np.divide(v, n, out=np.zeros_like(v), where=n > 0)


def gradient(model: PredictorModel, frames, target, lam: float = 0.1):
    """Batch-mean loss and its analytic gradient ``(loss, grad_weights, grad_biases)``.

    The norm's kink at zero takes subgradient 0.
    """
    x = _flatten_inputs(model, frames)
    target = np.asarray(target, dtype=np.float64).reshape(len(x), model.m, 4, 2)
    z, acts = mlp_forward(model.weights, model.biases, x)
    pred = (z * model.target_scale + model.target_mean).reshape(target.shape)
    count = pred[..., 0].size  # batch * m * 4 corners
    dpred = (_safe_unit(pred - target) + lam * _safe_unit(pred)) / count
    dz = dpred.reshape(len(x), -1) * model.target_scale
    gw, gb = mlp_backward(model.weights, acts, dz)
    return loss(pred, target, lam), gw, gb


# ---------------------------------------------------------------- training

@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 1e-3
    lr_drops: list = field(default_factory=list)
    lam: float = 0.1
    seed: int = 0
    hidden_dims: list = field(default_factory=lambda: [128])
    weight_decay: float = 0.0
    keep_best: bool = True

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be > 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        self.lr_drops = [(int(e), float(f)) for e, f in self.lr_drops]

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        d["lr_drops"] = [list(x) for x in self.lr_drops]
        return d

    def lr_at(self, epoch: int) -> float:
        lr = self.learning_rate
        for e, f in self.lr_drops:
            if epoch >= e:
                lr *= f
        return lr


def mpd_value(pred, target) -> float:
    return float(np.sqrt(((np.asarray(pred) - np.asarray(target)) ** 2).sum(axis=-1)).mean())


def predict(model: PredictorModel, frames, batch_size: int = 256) -> np.ndarray:
    frames = np.asarray(frames)
    out = [forward(model, frames[i:i + batch_size]) for i in range(0, len(frames), batch_size)]
    if not out:
        return np.zeros((0, model.m, 4, 2))
    return np.concatenate(out)


def train(frames, targets, cfg: TrainConfig, val_frames=None, val_targets=None, augment=None):
    """Mini-batch Adam on the motion loss.

    ``frames``: ``(k, n, h, w)`` recall stacks; ``targets``: ``(k, m, 4, 2)``.
    ``augment(epoch, indices, x, y) -> (x, y)`` transforms each batch online.
    Returns ``(model, log_rows)`` with rows ``(epoch, split, loss, mpd, lr)``.
    """
    frames = np.asarray(frames)
    targets = np.asarray(targets, dtype=np.float64)
    if len(frames) == 0:
        raise EmptyDataset("no training clips")
    k, n = frames.shape[:2]
    m = targets.shape[1]
    flat = targets.reshape(k, -1)
    mean = flat.mean(axis=0)
    scale = flat.std(axis=0)
    scale = np.where(scale > 1e-8, scale, 1.0)
    model = init_model(n, frames.shape[2:], m, cfg.hidden_dims, cfg.seed, mean, scale)
    model.created = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")

    params = model.weights + model.biases
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    b1, b2, eps = 0.9, 0.999, 1e-8
    step = 0
    rng = np.random.default_rng(cfg.seed)
    rows = []
    best, best_val = None, np.inf
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = rng.permutation(k)
        tot, tot_mpd, seen = 0.0, 0.0, 0
        for start in range(0, k, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = frames[idx], targets[idx]
            if augment is not None:
                xb, yb = augment(epoch, idx, xb, yb)
            lval, gw, gb = gradient(model, xb, yb, cfg.lam)
            grads = gw + gb
            step += 1
            for i, (p, g) in enumerate(zip(params, grads)):
                if cfg.weight_decay and i < len(gw):
                    g = g + cfg.weight_decay * p
                m1[i] = b1 * m1[i] + (1 - b1) * g
                m2[i] = b2 * m2[i] + (1 - b2) * g * g
                mh = m1[i] / (1 - b1 ** step)
                vh = m2[i] / (1 - b2 ** step)
                p -= lr * mh / (np.sqrt(vh) + eps)
            tot += lval * len(idx)
            tot_mpd += mpd_value(forward(model, xb), yb) * len(idx)
            seen += len(idx)
        rows.append((epoch, "train", tot / seen, tot_mpd / seen, lr))
        if val_frames is not None and len(val_frames):
            vp = predict(model, val_frames)
            vl = loss(vp, val_targets, cfg.lam)
            rows.append((epoch, "val", vl, mpd_value(vp, val_targets), lr))
            if cfg.keep_best and vl < best_val:
                best_val, best = vl, model.copy()
        log.info("epoch %d lr %.2e train %.4f", epoch, lr, tot / seen)
    if best is not None:
        model = best
    return model, rows


# ---------------------------------------------------------------- I/O

def save_model(path, model: PredictorModel) -> None:
    data = {
        "arch": model.arch(),
        "normalization": {"mean": model.target_mean.tolist(), "scale": model.target_scale.tolist()},
        "seed": model.seed,
        "created": model.created,
        "weights": [w.ravel().tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(data))


def load_model(path) -> PredictorModel:
    data = json.loads(Path(path).read_text())
    arch = data["arch"]
    dims = [arch["input_dim"]] + list(arch["hidden_dims"]) + [arch["output_dim"]]
    weights = [np.asarray(w, dtype=np.float64).reshape(dims[i], dims[i + 1])
               for i, w in enumerate(data["weights"])]
    biases = [np.asarray(b, dtype=np.float64) for b in data["biases"]]
    return PredictorModel(arch["n_frames"], tuple(arch["frame_shape"]), arch["m"], list(arch["hidden_dims"]),
                          weights, biases, np.asarray(data["normalization"]["mean"], dtype=np.float64),
                          np.asarray(data["normalization"]["scale"], dtype=np.float64),
                          arch.get("input_offset", 0.5), data.get("seed", 0), data.get("created", ""))


def write_loss_log(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "split", "loss", "mpd", "lr"])
        for r in rows:
            w.writerow([r[0], r[1], repr(float(r[2])), repr(float(r[3])), repr(float(r[4]))])
