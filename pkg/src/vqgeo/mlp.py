"""Desk-scale classical optimization task: a small GELU MLP classifier on
Gaussian cluster data, trained with the Table-2 style optimizers and a
per-layer block empirical Fisher preconditioner.

Parameters are flattened layer by layer, W (row-major, shape in x out)
followed by the bias, so layer l occupies a contiguous slice and the
curvature blocks of ClassicalOptState line up with it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .errors import InvalidDimensions, NonFiniteGradient, NonFiniteLoss, NotPositiveDefinite
from .numkit import SplitRng
from .optim import CLASSICAL_METHODS, ClassicalHyper, ClassicalOptState, classical_step, fisher_precond_refresh

__all__ = [
    "MLPSpec",
    "SyntheticDataset",
    "TrainConfig",
    "RunTrace",
    "init_params",
    "forward_loss_grad",
    "per_example_layer_grads",
    "train_run",
    "time_to_threshold",
    "empirical_threshold",
]

_SQRT2 = math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def _gelu_grad(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + erf(x / _SQRT2)) + x * _INV_SQRT2PI * np.exp(-0.5 * x * x)


@dataclass
class MLPSpec:
    """Layer widths (input, hidden..., classes), GELU hidden activations."""

    widths: tuple = (20, 16, 16, 4)
    seed: int = 0

    def __post_init__(self):
        if len(self.widths) < 3:
            raise InvalidDimensions("need at least one hidden layer")

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    @property
    def layer_slices(self) -> list:
        slices, start = [], 0
        for w_in, w_out in zip(self.widths[:-1], self.widths[1:]):
            stop = start + (w_in + 1) * w_out
            slices.append((start, stop))
            start = stop
        return slices

    @property
    def n_params(self) -> int:
        return self.layer_slices[-1][1]


def init_params(spec: MLPSpec) -> np.ndarray:
    """He-style Gaussian init for weights, zero biases."""
    rng = SplitRng(spec.seed, ("mlp-init",))
    theta = np.zeros(spec.n_params)
    for (start, stop), w_in, w_out in zip(spec.layer_slices, spec.widths[:-1], spec.widths[1:]):
        w = rng.normal((w_in, w_out)) * np.sqrt(2.0 / w_in)
        theta[start : start + w_in * w_out] = w.ravel()
    return theta


def _unpack(spec: MLPSpec, theta: np.ndarray):
    layers = []
    for (start, stop), w_in, w_out in zip(spec.layer_slices, spec.widths[:-1], spec.widths[1:]):
        w = theta[start : start + w_in * w_out].reshape(w_in, w_out)
        b = theta[start + w_in * w_out : stop]
        layers.append((w, b))
    return layers


@dataclass
class SyntheticDataset:
    """Gaussian class clusters, exactly balanced, deterministic from seed."""

    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    seed: int

    @classmethod
    def sample(cls, n_samples: int = 5120, n_features: int = 20, n_classes: int = 4,
               seed: int = 0, spread: float = 0.65) -> "SyntheticDataset":
        rng = SplitRng(seed, ("dataset",))
        centers = rng.normal((n_classes, n_features)) * spread
        per = n_samples // n_classes
        counts = [per + (1 if c < n_samples - per * n_classes else 0) for c in range(n_classes)]
        labels = np.concatenate([np.full(k, c, dtype=np.int64) for c, k in enumerate(counts)])
        features = centers[labels] + rng.normal((n_samples, n_features))
        order = rng.permutation(n_samples)
        return cls(features[order], labels[order], n_classes, seed)

    def split(self, n_val: int):
        """(train, validation) views; the tail n_val samples validate."""
        n = len(self.labels) - n_val
        train = SyntheticDataset(self.features[:n], self.labels[:n], self.n_classes, self.seed)
        val = SyntheticDataset(self.features[n:], self.labels[n:], self.n_classes, self.seed)
        return train, val


def _forward(spec: MLPSpec, theta: np.ndarray, x: np.ndarray):
    layers = _unpack(spec, theta)
    acts = [x]  # layer inputs
    pre = []
    h = x
    for i, (w, b) in enumerate(layers):
        z = h @ w + b
        pre.append(z)
        h = _gelu(z) if i < len(layers) - 1 else z
        if i < len(layers) - 1:
            acts.append(h)
    return layers, acts, pre, h  # h = logits


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _backward_deltas(layers, acts, pre, probs, y_onehot):
    """Per-example deltas dL_b/dz_l (without the 1/B batch average)."""
    deltas = [None] * len(layers)
    d = probs - y_onehot
    deltas[-1] = d
    for i in range(len(layers) - 2, -1, -1):
        w_next = layers[i + 1][0]
        d = (d @ w_next.T) * _gelu_grad(pre[i])
        deltas[i] = d
    return deltas


def forward_loss_grad(spec: MLPSpec, theta: np.ndarray, x: np.ndarray, y: np.ndarray, lam: float = 0.0):
    """Cross-entropy + ridge loss, exact mean gradient, and accuracy."""
    if x.shape[0] == 0:
        raise InvalidDimensions("empty batch")
    if x.shape[1] != spec.widths[0]:
        raise InvalidDimensions(f"features have dim {x.shape[1]}, expected {spec.widths[0]}")
    theta = np.asarray(theta, dtype=np.float64)
    layers, acts, pre, logits = _forward(spec, theta, x)
    probs = _softmax(logits)
    b = x.shape[0]
    nll = -np.mean(np.log(np.maximum(probs[np.arange(b), y], 1e-300)))
    loss = nll + 0.5 * lam * float(theta @ theta)
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"loss evaluated to {loss}")
    onehot = np.zeros_like(probs)
    onehot[np.arange(b), y] = 1.0
    deltas = _backward_deltas(layers, acts, pre, probs, onehot)
    grad = np.empty_like(theta)
    for (start, stop), h, d, (w, _) in zip(spec.layer_slices, acts, deltas, layers):
        gw = h.T @ d / b
        gb = d.mean(axis=0)
        grad[start : start + w.size] = gw.ravel()
        grad[start + w.size : stop] = gb
    grad += lam * theta
    accuracy = float(np.mean(np.argmax(logits, axis=1) == y))
    return loss, grad, accuracy


def per_example_layer_grads(spec: MLPSpec, theta: np.ndarray, x: np.ndarray, y: np.ndarray, lam: float = 0.0):
    """Per-example gradient segments [(B, p_l)] for the Fisher blocks.

    The ridge term lam * theta_l is added to every example's segment, so the
    regularizer enters the curvature estimate as well as the gradient.
    """
    theta = np.asarray(theta, dtype=np.float64)
    layers, acts, pre, logits = _forward(spec, theta, x)
    probs = _softmax(logits)
    b = x.shape[0]
    onehot = np.zeros_like(probs)
    onehot[np.arange(b), y] = 1.0
    deltas = _backward_deltas(layers, acts, pre, probs, onehot)
    segs = []
    for (start, stop), h, d, (w, _) in zip(spec.layer_slices, acts, deltas, layers):
        gw = np.einsum("bi,bo->bio", h, d).reshape(b, -1)
        g = np.concatenate([gw, d], axis=1)
        g += lam * theta[start:stop]
        segs.append(g)
    return segs


@dataclass
class TrainConfig:
    """Batch size, trajectory length, regularization and Fisher cadence."""

    batch_size: int = 128
    max_steps: int = 200
    lam: float = 1e-4
    curv_every: int = 20
    inv_every: int = 40
    val_every: int = 10
    n_val: int = 1024

    def __post_init__(self):
        if self.curv_every <= 0 or self.inv_every <= 0:
            raise ValueError("cadences must be positive")
        if self.inv_every % self.curv_every != 0:
            raise ValueError("inv_every must be a multiple of curv_every")


@dataclass
class RunTrace:
    """One training trajectory: per-step loss plus periodic validation."""

    method: str
    losses: np.ndarray
    val_steps: np.ndarray
    val_accuracies: np.ndarray
    valid: bool
    final_theta: np.ndarray = field(repr=False, default=None)

    def best_accuracy(self) -> float:
        return float(self.val_accuracies.max()) if len(self.val_accuracies) else 0.0


def _minibatches(n: int, batch_size: int, rng: SplitRng):
    """Infinite stream of shuffled minibatch index arrays."""
    epoch = 0
    while True:
        order = SplitRng(rng.master_seed, rng.path + ("epoch", epoch)).permutation(n)
        for k in range(0, n - batch_size + 1, batch_size):
            yield order[k : k + batch_size]
        epoch += 1


def train_run(spec: MLPSpec, dataset: SyntheticDataset, method: str, hyper: ClassicalHyper,
              config: TrainConfig, seed: int) -> RunTrace:
    """Train for exactly max_steps; runs that go non-finite are flagged
    invalid rather than raised (and the trace is truncated where they died)."""
    if method not in CLASSICAL_METHODS:
        raise ValueError(f"unknown method {method!r}")
    train, val = dataset.split(config.n_val)
    rng = SplitRng(seed, ("train-run",))
    theta = init_params(MLPSpec(spec.widths, seed=rng.split("init").seed64))
    state = ClassicalOptState.init(spec.n_params, spec.layer_slices, hyper,
                                   config.curv_every, config.inv_every)
    needs_fisher = method.startswith("f-")
    batches = _minibatches(len(train.labels), config.batch_size, rng.split("batches"))
    losses, val_steps, val_accs = [], [], []
    valid = True
    for step in range(1, config.max_steps + 1):
        idx = next(batches)
        x, y = train.features[idx], train.labels[idx]
        try:
            loss, grad_reg, _ = forward_loss_grad(spec, theta, x, y, config.lam)
            data_grad = grad_reg - config.lam * theta
            segs = None
            if needs_fisher and step % config.curv_every == 0:
                segs = per_example_layer_grads(spec, theta, x, y, config.lam)
            dtheta = classical_step(state, method, data_grad, theta)
        except (NonFiniteLoss, NonFiniteGradient, FloatingPointError):
            valid = False
            break
        losses.append(loss)
        theta = theta + dtheta
        if not np.all(np.isfinite(theta)):
            valid = False
            break
        if segs is not None:
            try:
                fisher_precond_refresh(state, segs)
            except NotPositiveDefinite:
                valid = False
                break
        if step % config.val_every == 0:
            _, _, acc = forward_loss_grad(spec, theta, val.features, val.labels, 0.0)
            val_steps.append(step)
            val_accs.append(acc)
    return RunTrace(method, np.array(losses), np.array(val_steps, dtype=np.int64),
                    np.array(val_accs), valid and len(losses) == config.max_steps, theta)


def time_to_threshold(trace: RunTrace, target_accuracy: float) -> float:
    """First validation step with accuracy >= target; +inf if never."""
    hits = np.nonzero(trace.val_accuracies >= target_accuracy)[0]
    return float(trace.val_steps[hits[0]]) if hits.size else math.inf


def empirical_threshold(traces_by_method: dict) -> float:
    """Task threshold: the slowest method's reached accuracy.

    Per method, the median (over runs) of the best validation accuracy in
    the trace; the threshold is the minimum over methods, so every method
    reaches it on a median run.
    """
    per_method = [
        float(np.median([t.best_accuracy() for t in traces]))
        for traces in traces_by_method.values()
    ]
    return min(per_method)
