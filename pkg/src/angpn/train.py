"""Initialisation, Adam, the training loop and evaluation metrics."""
import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import rng_stream
from .errors import ContractError, TrainingError
from .model import ModelState, loss_and_gradients, network_forward
from .propagation import HyperParams


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.005
    max_epochs: int = 10000
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    patience: int = 100
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ContractError("learning_rate must be positive")
        if self.max_epochs < 1:
            raise ContractError("max_epochs must be >= 1")
        if self.patience < 1:
            raise ContractError("patience must be >= 1")


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def glorot_init(rows, cols, rng):
    """Uniform on (-b, b) with ``b = sqrt(6 / (rows + cols))``."""
    if rows < 1 or cols < 1:
        raise ContractError(f"glorot_init needs positive dims, got {rows}x{cols}")
    bound = math.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


def init_model(layer_dims, hyper=None, variant="angpn", seed=0):
    """Glorot-initialised model; weight ``i`` draws from RNG stream ``i + 1``."""
    weights = [glorot_init(layer_dims[i], layer_dims[i + 1], rng_stream(seed, i + 1))
               for i in range(len(layer_dims) - 1)]
    return ModelState(weights, list(layer_dims), hyper or HyperParams(), variant)


def adam_step(state, params, grads, cfg):
    """One bias-corrected Adam update; returns new parameter arrays."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ContractError("params, grads and Adam state must have equal length")
    state.t += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape or p.shape != state.m[i].shape:
            raise ContractError(f"shape mismatch for parameter {i}: {p.shape} vs {g.shape}")
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * (g * g)
        mhat = state.m[i] / c1
        vhat = state.v[i] / c2
        out.append(p - cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.adam_eps))
    return out


def accuracy(z, labels, idx):
    """Fraction of ``idx`` whose argmax (lowest index on ties) is correct."""
    idx = np.asarray(idx)
    if idx.size == 0:
        raise ContractError("accuracy over an empty index set")
    pred = np.argmax(np.asarray(z)[idx], axis=1)
    return float(np.mean(pred == np.asarray(labels)[idx]))


@dataclass
class History:
    train_loss: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    best_epoch: int = -1

    @property
    def epochs_run(self):
        return len(self.train_loss)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "val_acc"])
            for e, (l, a) in enumerate(zip(self.train_loss, self.val_acc)):
                w.writerow([e, repr(l), repr(a)])


def fit(model, dist, x, split, cfg, callback=None):
    """Full-batch training with validation-based model selection.

    The weights evaluated at each epoch are those *before* that epoch's
    update, so loss and validation accuracy come from one forward pass.
    Returns ``(best_model, history)``.
    """
    weights = [w.copy() for w in model.weights]
    adam = AdamState.zeros_like(weights)
    hist = History()
    best_acc, best_weights = -1.0, None
    for epoch in range(cfg.max_epochs):
        loss, grads, z = loss_and_gradients(model, dist, x, split, weights=weights,
                                            return_z=True)
        if not math.isfinite(loss):
            raise TrainingError("non-finite training loss", epoch)
        acc = accuracy(z, split.labels, split.val_idx)
        hist.train_loss.append(loss)
        hist.val_acc.append(acc)
        if acc > best_acc:
            best_acc, best_weights, hist.best_epoch = acc, weights, epoch
        if callback is not None:
            callback(epoch, loss, acc)
        if epoch - hist.best_epoch >= cfg.patience:
            break
        weights = adam_step(adam, weights, grads, cfg)
    best = ModelState([w.copy() for w in best_weights], list(model.layer_dims),
                      model.hyper, model.variant)
    return best, hist


def evaluate(model, dist, x, split):
    z = network_forward(model, dist, x)
    return accuracy(z, split.labels, split.test_idx), z


def metrics_json(path, dataset, label_rate, seed, variant, test_accuracy, epochs_run):
    obj = {
        "dataset": dataset, "label_rate": label_rate, "seed": seed,
        "variant": variant, "test_accuracy": test_accuracy, "epochs_run": epochs_run,
    }
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
    return obj


def config_dict(cfg):
    return asdict(cfg)
