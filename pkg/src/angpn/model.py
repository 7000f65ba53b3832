"""The propagation network: layers, softmax output, loss and gradients."""
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DataError, ShapeError
from .graphlearn import GraphMode
from .numkit import Tape, Var, apply, backward, matmul, relu, rowwise_softmax
from .propagation import HyperParams, anfp_propagate

VARIANTS = ("angpn", "ngpn")
CHECKPOINT_MAGIC = b"ANGPN1"
LOG_FLOOR = 1e-12


@dataclass
class ModelState:
    """Weights ``W[0..K-1]`` plus the configuration they belong to."""

    weights: list
    layer_dims: list
    hyper: HyperParams = field(default_factory=HyperParams)
    variant: str = "angpn"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ContractError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if len(self.weights) < 1 or len(self.layer_dims) != len(self.weights) + 1:
            raise ShapeError("need K >= 1 weights and K + 1 layer dims")
        for i, w in enumerate(self.weights):
            expect = (self.layer_dims[i], self.layer_dims[i + 1])
            if w.shape != expect:
                raise ShapeError(f"weight {i} has shape {w.shape}, expected {expect}")

    @property
    def n_layers(self):
        return len(self.weights)

    @property
    def n_classes(self):
        return self.layer_dims[-1]

    def layer_hyper(self):
        if self.variant == "ngpn":
            return self.hyper.with_(beta=0.0)
        return self.hyper

    def copy(self):
        return ModelState([w.copy() for w in self.weights], list(self.layer_dims),
                          self.hyper, self.variant)


@dataclass(frozen=True, eq=False)
class LabeledSplit:
    """Disjoint train/validation/test indices over a label vector."""

    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        parts = [np.asarray(p) for p in (self.train_idx, self.val_idx, self.test_idx)]
        joined = np.concatenate(parts)
        if len(np.unique(joined)) != len(joined):
            raise DataError("train/val/test index sets overlap")
        n = len(self.labels)
        if len(joined) and (joined.min() < 0 or joined.max() >= n):
            raise DataError("split index out of range")
        present = np.unique(self.labels[parts[0]])
        if len(present) != self.n_classes:
            missing = sorted(set(range(self.n_classes)) - set(present.tolist()))
            raise DataError(f"classes {missing} have no training point")

    @property
    def one_hot(self):
        y = np.zeros((len(self.train_idx), self.n_classes))
        y[np.arange(len(self.train_idx)), self.labels[self.train_idx]] = 1.0
        return y


def layer_forward(state, layer, dist, h_in, weights=None):
    """One layer: propagate, multiply by ``W[layer]``, then ReLU if hidden."""
    w = (weights or state.weights)[layer]
    width = h_in.shape[1]
    if width != state.layer_dims[layer]:
        raise ShapeError(f"layer {layer} expects {state.layer_dims[layer]} input "
                         f"columns, got {width}")
    f, s = anfp_propagate(dist, h_in, state.layer_hyper())
    out = matmul(f, w)
    if layer < state.n_layers - 1:
        out = relu(out)
    return out, s


def network_forward(state, dist, x, weights=None, return_graphs=False):
    """Class probabilities ``Z`` (n x c); optionally the graph of each layer."""
    h = x
    graphs = []
    for layer in range(state.n_layers):
        h, s = layer_forward(state, layer, dist, h, weights)
        graphs.append(s.value if isinstance(s, Var) else s)
    z = rowwise_softmax(h)
    return (z, graphs) if return_graphs else z


def semi_ce_loss(z, split):
    """Summed cross-entropy over the training nodes (``ln`` floored at 1e-12)."""
    idx = np.asarray(split.train_idx)
    if len(idx) == 0:
        raise ContractError("cross-entropy needs at least one training node")
    lab = split.labels[idx]

    def fwd(zv):
        picked = np.maximum(zv[idx, lab], LOG_FLOOR)
        return np.array([[-np.sum(np.log(picked))]])

    def vjp(g, out, zv):
        picked = zv[idx, lab]
        gz = np.zeros_like(zv)
        live = picked > LOG_FLOOR
        gz[idx, lab] = np.divide(-g[0, 0], picked, out=np.zeros_like(picked), where=live)
        return (gz,)

    out = apply("cross_entropy", fwd, vjp, z)
    return out if isinstance(out, Var) else float(out[0, 0])


def loss_and_gradients(state, dist, x, split, weights=None, return_z=False):
    """Loss and its gradient for every weight matrix.

    With ``grad_mode="unrolled"`` the gradient also flows through each
    learned graph's dependence on the features; with ``"frozen-graph"``
    the graphs are treated as constants.
    """
    tape = Tape()
    ws = [tape.param(w, name=f"W{i}") for i, w in enumerate(weights or state.weights)]
    z = network_forward(state, dist, x, weights=ws)
    loss = semi_ce_loss(z, split)
    grads = backward(tape, loss)
    value = float(loss.value[0, 0])
    if return_z:
        return value, grads, z.value
    return value, grads


# ---------------------------------------------------------------------------
# serialisation


def _hyper_dict(state):
    h = state.hyper
    return {
        "alpha": h.alpha, "beta": h.beta, "gamma": h.gamma, "k": h.k,
        "t_steps": h.t_steps, "solver": h.mode.solver,
        "gamma_mode": h.mode.gamma_mode, "grad_mode": h.grad_mode,
        "variant": state.variant,
    }


def save_checkpoint(path, state):
    """Binary checkpoint; layout documented in docs/formats.md."""
    meta = json.dumps(_hyper_dict(state), sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", state.n_layers))
        fh.write(struct.pack(f"<{state.n_layers + 1}Q", *state.layer_dims))
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)
        for w in state.weights:
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:6] != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: not an ANGPN1 checkpoint")
    pos = 6
    (k,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    dims = list(struct.unpack_from(f"<{k + 1}Q", buf, pos))
    pos += 8 * (k + 1)
    (mlen,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    meta = json.loads(buf[pos:pos + mlen].decode())
    pos += mlen
    weights = []
    for i in range(k):
        count = dims[i] * dims[i + 1]
        w = np.frombuffer(buf, dtype="<f8", count=count, offset=pos)
        weights.append(w.reshape(dims[i], dims[i + 1]).astype(np.float64))
        pos += 8 * count
    if pos != len(buf):
        raise DataError(f"{path}: {len(buf) - pos} trailing bytes")
    hyper = HyperParams(
        alpha=meta["alpha"], beta=meta["beta"], gamma=meta["gamma"], k=meta["k"],
        t_steps=meta["t_steps"], mode=GraphMode(meta["solver"], meta["gamma_mode"]),
        grad_mode=meta["grad_mode"],
    )
    return ModelState(weights, dims, hyper, meta["variant"])


def write_predictions_csv(path, z):
    np.savetxt(path, np.asarray(z), delimiter=",", fmt="%.17g")
