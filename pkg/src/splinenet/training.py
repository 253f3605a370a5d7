"""Losses, optimizers, the mini-batch training loop, and evaluation."""

import csv
import time
from dataclasses import dataclass

import numpy as np

from .backprop import backward, loss_grad_mse

METRICS_HEADER = ["epoch", "train_loss", "train_acc", "test_acc", "seconds", "frac_clamped"]


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    loss: str = "softmax_xent"
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("adam betas must lie in (0, 1)")
        if self.eps <= 0:
            raise ValueError("adam eps must be > 0")
        if self.loss not in ("mse", "softmax_xent"):
            raise ValueError(f"unknown loss {self.loss!r}")


@dataclass
class EpochMetrics:
    """Per-epoch training record.

    For classification runs train_acc/test_acc are accuracies in [0, 1];
    for regression runs the same fields carry train/test MSE.
    """

    epoch: int
    train_loss: float
    train_acc: float
    test_acc: float
    seconds: float
    frac_clamped: float

    def row(self):
        # full float precision so a replayed evaluation reproduces the
        # recorded value exactly
        return [
            self.epoch,
            repr(float(self.train_loss)),
            repr(float(self.train_acc)) if np.isfinite(self.train_acc) else "",
            repr(float(self.test_acc)) if np.isfinite(self.test_acc) else "",
            f"{self.seconds:.4f}",
            f"{self.frac_clamped:.6f}",
        ]


def mse_loss(y_hat, y, m):
    """Sum of squared errors divided by the batch size m."""
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y_hat.shape != y.shape:
        raise ValueError(f"shape mismatch: {y_hat.shape} vs {y.shape}")
    if m < 1:
        raise ValueError("batch size m must be >= 1")
    return float(((y_hat - y) ** 2).sum() / m)


def softmax_xent(logits, class_index):
    """Cross-entropy of softmax(logits) against one true class.

    Returns (loss, dlogits) computed with the log-sum-exp shift for
    numerical stability.
    """
    logits = np.asarray(logits, dtype=np.float64)
    k = logits.shape[-1]
    if not 0 <= class_index < k:
        raise ValueError(f"class index {class_index} out of range [0, {k})")
    shifted = logits - logits.max()
    lse = np.log(np.exp(shifted).sum())
    loss = float(lse - shifted[class_index])
    dlogits = np.exp(shifted - lse)
    dlogits[class_index] -= 1.0
    return loss, dlogits


def softmax_xent_batch(logits, classes):
    """Mean cross-entropy over a batch; dlogits carries the 1/m factor."""
    logits = np.asarray(logits, dtype=np.float64)
    classes = np.asarray(classes)
    m = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    loss = float((lse - shifted[np.arange(m), classes]).mean())
    dlogits = np.exp(shifted - lse[:, None])
    dlogits[np.arange(m), classes] -= 1.0
    return loss, dlogits / m


def _aligned(params, tape):
    pairs = list(zip(params, tape.named()))
    for (name, p), (gname, g) in pairs:
        if name != gname:
            raise ValueError(f"parameter/tape mismatch: {name} vs {gname}")
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
    return pairs


def sgd_step(params, tape, lr):
    """In-place SGD update over (name, array) parameter pairs."""
    for (_, p), (_, g) in _aligned(params, tape):
        p -= lr * g


class AdamState:
    """First/second moment accumulators keyed by parameter name."""

    def __init__(self):
        self.t = 0
        self.m = {}
        self.v = {}


def adam_step(params, tape, state, config):
    """In-place Adam update with bias correction."""
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    for (name, p), (_, g) in _aligned(params, tape):
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m += (1 - b1) * (g - m)
        v += (1 - b2) * (g * g - v)
        m_hat = m / (1 - b1**state.t)
        v_hat = v / (1 - b2**state.t)
        p -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)


def _one_hot(classes, k):
    out = np.zeros((len(classes), k))
    out[np.arange(len(classes)), classes] = 1.0
    return out


def _training_targets(dataset, config):
    if dataset.task == "classification":
        if config.loss == "mse":
            return _one_hot(dataset.targets, dataset.num_classes)
        return dataset.targets
    if config.loss != "mse":
        raise ValueError("regression datasets require loss='mse'")
    return dataset.targets


def train(net, dataset, config, test_dataset=None, metrics_path=None, on_epoch=None):
    """Mini-batch training; returns (net, per-epoch metrics).

    Deterministic given (net initialization, dataset, config.seed). A
    non-finite loss aborts with TrainingDiverged. When metrics_path is
    given, one CSV row per epoch is appended (header written first).
    """
    rng = np.random.default_rng(config.seed)
    targets = _training_targets(dataset, config)
    n = dataset.features.shape[0]
    if n == 0:
        raise ValueError("empty dataset")
    adam = AdamState()
    params = net.parameters()

    writer = None
    fh = None
    if metrics_path is not None:
        fh = open(metrics_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)

    metrics = []
    try:
        for epoch in range(config.epochs):
            t0 = time.perf_counter()
            clamped = total_slots = 0
            loss_sum = 0.0
            order = rng.permutation(n) if config.shuffle else np.arange(n)
            for start in range(0, n, config.batch_size):
                idx = order[start : start + config.batch_size]
                xb = dataset.features[idx]
                try:
                    with np.errstate(over="ignore", invalid="ignore"):
                        trace = net.forward(xb)
                        if config.loss == "mse":
                            yb = targets[idx]
                            loss = mse_loss(trace.y_hat, yb, len(idx))
                            d = loss_grad_mse(trace.y_hat, yb, len(idx))
                        else:
                            loss, d = softmax_xent_batch(trace.y_hat, targets[idx])
                except FloatingPointError as exc:
                    raise TrainingDiverged(
                        f"{exc} at epoch {epoch}, sample offset {start}"
                    ) from None
                if not np.isfinite(loss):
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch}, sample offset {start}"
                    )
                loss_sum += loss * len(idx)
                c, t = trace.clamp_counts()
                clamped += c
                total_slots += t
                tape = backward(net, trace, d)
                if config.optimizer == "sgd":
                    sgd_step(params, tape, config.learning_rate)
                else:
                    adam_step(params, tape, adam, config)
            em = EpochMetrics(
                epoch=epoch,
                train_loss=loss_sum / n,
                train_acc=evaluate(net, dataset),
                test_acc=evaluate(net, test_dataset) if test_dataset is not None else float("nan"),
                seconds=time.perf_counter() - t0,
                frac_clamped=clamped / total_slots if total_slots else 0.0,
            )
            metrics.append(em)
            if writer is not None:
                writer.writerow(em.row())
                fh.flush()
            if on_epoch is not None:
                on_epoch(em)
    finally:
        if fh is not None:
            fh.close()
    return net, metrics


def evaluate(net, dataset, chunk=2048):
    """Accuracy for classification datasets, MSE for regression ones."""
    n = dataset.features.shape[0]
    if n == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    with np.errstate(over="ignore", invalid="ignore"):
        preds = []
        for start in range(0, n, chunk):
            preds.append(net.forward(dataset.features[start : start + chunk]).y_hat)
        y_hat = np.concatenate(preds, axis=0)
        if dataset.task == "classification":
            return float((y_hat.argmax(axis=1) == dataset.targets).mean())
        return mse_loss(y_hat, dataset.targets, n)


GRID_LEARNING_RATES = (1e-2, 3e-3, 1e-3)
GRID_NUM_BASIS = (5, 8, 16)
GRID_DEGREES = (2, 3)


def grid_search(make_net, dataset, val_dataset, base_config, seed=0):
    """Small fixed grid over learning rate and (for spline models) grid size.

    ``make_net(num_basis, degree, seed)`` builds a fresh network; models
    without a spline grid may ignore those arguments. Returns the result
    list and the best entry by validation metric.
    """
    results = []
    for lr in GRID_LEARNING_RATES:
        for nb in GRID_NUM_BASIS:
            for deg in GRID_DEGREES:
                cfg = TrainConfig(
                    epochs=base_config.epochs,
                    batch_size=base_config.batch_size,
                    learning_rate=lr,
                    optimizer=base_config.optimizer,
                    beta1=base_config.beta1,
                    beta2=base_config.beta2,
                    eps=base_config.eps,
                    loss=base_config.loss,
                    seed=seed,
                    shuffle=base_config.shuffle,
                )
                net = make_net(nb, deg, seed)
                net, _ = train(net, dataset, cfg)
                score = evaluate(net, val_dataset)
                results.append({"learning_rate": lr, "num_basis": nb, "degree": deg, "score": score})
    better = max if dataset.task == "classification" else min
    best = better(results, key=lambda r: r["score"])
    return results, best
