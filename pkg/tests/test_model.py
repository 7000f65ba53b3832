import numpy as np
import pytest
from hypothesis import given, strategies as st

from angpn.data import Dataset, stratified_split
from angpn.errors import DataError, ShapeError
from angpn.graphlearn import EXACT, PAPER, GraphMode, pairwise_euclidean
from angpn.model import (LabeledSplit, ModelState, layer_forward, load_checkpoint,
                         loss_and_gradients, network_forward, save_checkpoint, semi_ce_loss)
from angpn.oracles import model_gradcheck
from angpn.propagation import HyperParams, anfp_propagate
from angpn.train import init_model


def tiny(seed=0, variant="angpn", **kw):
    r = np.random.default_rng(seed)
    x = r.standard_normal((12, 4))
    ds = Dataset(x, np.arange(12) % 2, 2)
    split = stratified_split(ds, 0.3, 0.1, seed)
    hyper = HyperParams(**{"k": 3, **kw})
    model = init_model([4, 6, 2], hyper, variant, seed)
    return model, pairwise_euclidean(x), x, split


def split_for(labels, train):
    labels = np.asarray(labels)
    rest = np.setdiff1d(np.arange(len(labels)), train)
    return LabeledSplit(np.asarray(train), rest[:0], rest, labels, int(labels.max()) + 1)


def test_zero_weights_give_zero_layer(rng):
    x = rng.standard_normal((5, 3))
    m = ModelState([np.zeros((3, 4)), np.zeros((4, 2))], [3, 4, 2], HyperParams(k=2))
    out, _ = layer_forward(m, 0, pairwise_euclidean(x), x)
    assert np.array_equal(out, np.zeros((5, 4)))


def test_alpha_zero_identity_weight_is_relu(rng):
    x = rng.standard_normal((5, 3))
    m = ModelState([np.eye(3), np.eye(3)], [3, 3, 3], HyperParams(alpha=0.0, k=2))
    out, _ = layer_forward(m, 0, pairwise_euclidean(x), x)
    assert np.array_equal(out, np.maximum(x, 0))


def test_layer_recomposes(rng):
    x = rng.standard_normal((5, 3))
    w0 = rng.standard_normal((3, 4))
    hyper = HyperParams(k=2)
    m = ModelState([w0, rng.standard_normal((4, 2))], [3, 4, 2], hyper)
    dist = pairwise_euclidean(x)
    out, _ = layer_forward(m, 0, dist, x)
    f, _ = anfp_propagate(dist, x, hyper)
    assert np.array_equal(out, np.maximum(f @ w0, 0))


def test_layer_width_mismatch(rng):
    x = rng.standard_normal((5, 2))
    m = ModelState([np.eye(3)], [3, 3], HyperParams(k=2))
    with pytest.raises(ShapeError):
        layer_forward(m, 0, pairwise_euclidean(x), x)


def test_single_layer_zero_weights_uniform(rng):
    x = rng.standard_normal((6, 3))
    m = ModelState([np.zeros((3, 4))], [3, 4], HyperParams(k=2))
    z = network_forward(m, pairwise_euclidean(x), x)
    assert np.array_equal(z, np.full((6, 4), 0.25))


@given(seed=st.integers(0, 2**31))
def test_output_rows_sum_to_one(seed):
    model, dist, x, _ = tiny(seed)
    z = network_forward(model, dist, x)
    assert np.max(np.abs(z.sum(axis=1) - 1)) <= 1e-12


def test_ce_uniform():
    loss = semi_ce_loss(np.full((3, 4), 0.25), split_for([0, 1, 2], [0, 1, 2]))
    assert abs(loss - 3 * np.log(4)) <= 1e-12
    assert abs(loss - 4.158883) <= 1e-6


def test_ce_perfect_predictions():
    z = np.eye(3)
    assert semi_ce_loss(z, split_for([0, 1, 2], [0, 1, 2])) <= 3e-12 * 3


def test_ce_hand_instance():
    z = np.array([[0.9, 0.1], [0.2, 0.8]])
    loss = semi_ce_loss(z, split_for([0, 1], [0, 1]))
    assert abs(loss - 0.328504066972036) <= 1e-12


@pytest.mark.parametrize("variant", ["angpn", "ngpn"])
@pytest.mark.parametrize("solver", [EXACT, PAPER])
@pytest.mark.parametrize("t_steps", [1, 2])
def test_gradients_match_finite_differences(variant, solver, t_steps):
    model, dist, x, split = tiny(1, variant, t_steps=t_steps, mode=GraphMode(solver))
    rep = model_gradcheck(model, dist, x, split)
    assert rep.max_rel_error <= 1e-4, rep.format()


def test_frozen_equals_unrolled_when_beta_zero():
    m1, dist, x, split = tiny(2, beta=0.0)
    m2, *_ = tiny(2, beta=0.0, grad_mode="frozen-graph")
    _, g1 = loss_and_gradients(m1, dist, x, split)
    _, g2 = loss_and_gradients(m2, dist, x, split)
    assert all(np.array_equal(a, b) for a, b in zip(g1, g2))


def test_frozen_differs_from_unrolled_when_beta_positive():
    m1, dist, x, split = tiny(2)
    m2, *_ = tiny(2, grad_mode="frozen-graph")
    _, g1 = loss_and_gradients(m1, dist, x, split)
    _, g2 = loss_and_gradients(m2, dist, x, split)
    assert not np.array_equal(g1[0], g2[0])


def test_zero_weight_last_layer_gradient(rng):
    # at W = 0 the softmax is uniform; dL/dW_last = P^T (Z - Y) on labelled rows
    x = rng.standard_normal((8, 3))
    hyper = HyperParams(k=3)
    dist = pairwise_euclidean(x)
    m = ModelState([np.zeros((3, 2))], [3, 2], hyper)
    split = split_for([0, 1, 0, 0, 1, 0, 1, 1], [0, 1, 2, 3])
    _, (g,) = loss_and_gradients(m, dist, x, split)
    p, _ = anfp_propagate(dist, x, hyper)
    y = split.one_hot
    expect = p[split.train_idx].T @ (0.5 - y)
    assert np.max(np.abs(g - expect)) <= 1e-12


def test_beta_zero_angpn_equals_ngpn():
    m, dist, x, _ = tiny(4, beta=0.0)
    n = ModelState([w.copy() for w in m.weights], m.layer_dims, m.hyper.with_(beta=0.7),
                   "ngpn")
    assert np.array_equal(network_forward(m, dist, x), network_forward(n, dist, x))


@given(seed=st.integers(0, 2**31))
def test_network_permutation_equivariance(seed):
    model, _, x, _ = tiny(seed)
    perm = np.random.default_rng(seed).permutation(12)
    z = network_forward(model, pairwise_euclidean(x), x)
    zp = network_forward(model, pairwise_euclidean(x[perm]), x[perm])
    assert np.max(np.abs(zp - z[perm])) <= 1e-10


def test_loss_trace_deterministic():
    a = loss_and_gradients(*tiny(5))
    b = loss_and_gradients(*tiny(5))
    assert a[0] == b[0] and all(np.array_equal(p, q) for p, q in zip(a[1], b[1]))


def test_checkpoint_round_trip(tmp_path):
    model, *_ = tiny(6, mode=GraphMode(PAPER, "per-row-k"), gamma=None)
    save_checkpoint(tmp_path / "m.angpn", model)
    back = load_checkpoint(tmp_path / "m.angpn")
    assert back.hyper == model.hyper and back.variant == model.variant
    assert back.layer_dims == model.layer_dims
    assert all(np.array_equal(a, b) for a, b in zip(back.weights, model.weights))
    raw = (tmp_path / "m.angpn").read_bytes()
    assert raw[:6] == b"ANGPN1"
    (tmp_path / "bad").write_bytes(raw + b"\0")
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "bad")


def test_split_validation():
    with pytest.raises(DataError):
        LabeledSplit(np.array([0, 1]), np.array([1]), np.array([2]), np.array([0, 1, 0]), 2)
    with pytest.raises(DataError):
        LabeledSplit(np.array([0, 2]), np.array([]), np.array([1]), np.array([0, 1, 0]), 2)
