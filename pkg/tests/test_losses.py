import math

import numpy as np
import pytest

from mgbr.config import MgbrConfig
from mgbr.errors import ContractError
from mgbr.gradcheck import TINY, tiny_setup
from mgbr.losses import aux_loss_a, aux_loss_b, batch_loss, bpr_pair, pairwise_loss, total_loss
from mgbr.numeric import GradientTape, Tensor


def T(x):
    return Tensor(np.asarray(x, dtype=np.float64))


# ---------------------------------------------------------------- pairwise

def test_equal_scores_give_log_two():
    assert bpr_pair(T([0.3]), T([0.3])).item() == pytest.approx(math.log(2), abs=1e-12)


def test_nine_tied_negatives():
    # 9 terms of ln 2 over 10 samples
    loss = pairwise_loss(T([0.5]), T([[0.5] * 9]))
    assert loss.item() == pytest.approx(9 * math.log(2) / 10, abs=1e-4)
    assert loss.item() == pytest.approx(0.6238, abs=1e-4)


def test_single_tied_pair():
    assert pairwise_loss(T([1.0]), T([[1.0]])).item() == pytest.approx(0.3466, abs=1e-4)


def test_large_margin_is_tiny():
    assert bpr_pair(T([20.0]), T([0.0])).item() == pytest.approx(2.06e-9, rel=1e-2)


def test_reversed_margin():
    assert bpr_pair(T([0.0]), T([1.0])).item() == pytest.approx(1.3133, abs=1e-4)


def test_pairwise_is_nonnegative_and_stable():
    rng = np.random.default_rng(0)
    pos, neg = rng.normal(0, 50, 20), rng.normal(0, 50, (20, 4))
    value = pairwise_loss(T(pos), T(neg)).item()
    assert np.isfinite(value) and value >= 0


def test_pairwise_rejects_mismatch_and_empty():
    with pytest.raises(ContractError):
        pairwise_loss(T([1.0, 2.0]), T([[0.0]]))
    with pytest.raises(ContractError):
        pairwise_loss(T(np.zeros(0)), T(np.zeros((0, 3))))


# ---------------------------------------------------------------- auxiliary

def test_listnet_uniform_scores():
    # softmax over 2T equal scores is 1/2T; half the labels are 1
    t = 5
    loss = aux_loss_a(T(np.zeros((3, t))), T(np.zeros((3, t))))
    assert loss.item() == pytest.approx(math.log(2 * t) / 2, abs=1e-12)


def test_listnet_matches_numpy():
    rng = np.random.default_rng(1)
    a, b = rng.random((4, 3)), rng.random((4, 3))
    s = np.concatenate([a, b], axis=1)
    logp = s - np.log(np.exp(s).sum(axis=1, keepdims=True))
    expect = -logp[:, 3:].sum() / (4 * 6)
    assert aux_loss_a(T(a), T(b)).item() == pytest.approx(expect, abs=1e-12)


def test_listnet_raw_log_variant():
    a, b = np.full((2, 2), 0.25), np.full((2, 2), 0.5)
    loss = aux_loss_a(T(a), T(b), softmax_listnet=False)
    assert loss.item() == pytest.approx(-math.log(0.5) / 2, abs=1e-12)


def test_listnet_prefers_participant_replacements():
    low = aux_loss_a(T([[0.0, 0.0]]), T([[5.0, 5.0]])).item()
    high = aux_loss_a(T([[5.0, 5.0]]), T([[0.0, 0.0]])).item()
    assert low < high


def test_aux_b_is_mean_bpr():
    loss = aux_loss_b(T([1.0, 0.0]), T([[1.0, 0.0], [0.0, 1.0]]))
    expect = (math.log(2) + math.log1p(math.exp(-1)) + math.log(2) + math.log1p(math.e)) / 4
    assert loss.item() == pytest.approx(expect, abs=1e-12)


def test_aux_shape_errors():
    with pytest.raises(ContractError):
        aux_loss_a(T(np.zeros((2, 3))), T(np.zeros((2, 2))))
    with pytest.raises(ContractError):
        aux_loss_b(T([1.0]), T(np.zeros((2, 2))))


# ---------------------------------------------------------------- total

def test_total_weights():
    cfg = MgbrConfig(weight_b=1.0, aux_weight_a=0.3, aux_weight_b=0.3)
    assert total_loss(1.0, 2.0, 0.0, 1.0, cfg) == pytest.approx(3.3)


def test_total_without_aux():
    cfg = MgbrConfig(weight_b=0.5, aux_losses=False)
    assert total_loss(1.0, 2.0, 10.0, 10.0, cfg) == pytest.approx(2.0)


def test_disabled_aux_reduces_to_weighted_pair_losses():
    cfg = TINY.replace(aux_losses=False, weight_b=0.7)
    model, batch = tiny_setup(cfg, seed=1)
    parts = batch_loss(model, batch)
    assert parts.aux_a is None and parts.aux_b is None
    assert parts.total.item() == pytest.approx(parts.loss_a.item() + 0.7 * parts.loss_b.item(), rel=1e-6)


def test_batch_loss_components_nonnegative():
    model, batch = tiny_setup(seed=2)
    values = batch_loss(model, batch).values()
    assert all(v >= 0 for v in values.values())
    expect = values["loss_A"] + values["loss_B"] + 0.3 * (values["aux_A"] + values["aux_B"])
    assert values["total"] == pytest.approx(expect, rel=1e-5)


def test_batch_order_invariance():
    model, batch = tiny_setup(seed=3)
    rng = np.random.default_rng(0)
    shuffled = batch.permuted(rng.permutation(len(batch.a_user)), rng.permutation(len(batch.b_user)))
    assert batch_loss(model, shuffled).total.item() == pytest.approx(batch_loss(model, batch).total.item(),
                                                                     rel=1e-5)


def test_total_gradient_is_weighted_sum_of_parts():
    cfg = TINY.replace(weight_b=0.6, aux_weight_a=0.2, aux_weight_b=0.4)
    model, batch = tiny_setup(cfg, seed=4)
    model.params.astype(np.float64)
    grads = {}
    for part in ("loss_a", "loss_b", "aux_a", "aux_b", "total"):
        with GradientTape() as tape:
            value = getattr(batch_loss(model, batch), part)
        grads[part] = tape.gradient(value, model.params)
    for name in model.params:
        combo = (grads["loss_a"][name] + 0.6 * grads["loss_b"][name] + 0.2 * grads["aux_a"][name]
                 + 0.4 * grads["aux_b"][name])
        np.testing.assert_allclose(grads["total"][name], combo, atol=1e-10)


def test_empty_batch_is_contract_error():
    model, batch = tiny_setup(seed=0)
    empty = batch.permuted(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
    with pytest.raises(ContractError):
        batch_loss(model, empty)
