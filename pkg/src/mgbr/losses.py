"""Pairwise ranking losses, the two auxiliary losses and their weighted sum."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import MgbrConfig
from .errors import ContractError
from .model import MEAN_PARTICIPANT, MGBR
from .numeric import Tensor, concat, log, log_softmax_rows, mul, reshape, softplus, take
from .numeric import sum_ as tsum


def bpr_pair(s_pos: Tensor, s_neg: Tensor) -> Tensor:
    """-log sigmoid(s_pos - s_neg), elementwise, via softplus(s_neg - s_pos)."""
    return softplus(s_neg - s_pos)


def pairwise_loss(pos: Tensor, neg: Tensor) -> Tensor:
    """BPR over every (positive, own negative) pair, divided by #positives + #negatives.

    ``pos`` is (n,), ``neg`` is (n, k).
    """
    if pos.shape[0] == 0:
        raise ContractError("ranking loss over an empty batch")
    if neg.data.ndim != 2 or neg.shape[0] != pos.shape[0]:
        raise ContractError(f"negatives {neg.shape} do not pair with positives {pos.shape}")
    n, k = neg.shape
    terms = bpr_pair(reshape(pos, (n, 1)), neg)
    return tsum(terms) * (1.0 / (n * (k + 1)))


def aux_loss_a(item_replaced: Tensor, part_replaced: Tensor, softmax_listnet: bool = True) -> Tensor:
    """Listwise loss over each positive's 2T corrupted triples.

    Participant-replaced triples carry label 1, item-replaced label 0. With
    ``softmax_listnet`` the 2T scores are softmax-normalized before the log;
    otherwise the raw scores are logged.
    """
    if item_replaced.shape != part_replaced.shape or item_replaced.data.ndim != 2:
        raise ContractError(f"auxiliary lists differ: {item_replaced.shape} vs {part_replaced.shape}")
    n, t = item_replaced.shape
    if n == 0:
        raise ContractError("auxiliary loss over an empty batch")
    scores = concat([item_replaced, part_replaced], axis=1)
    logp = log_softmax_rows(scores) if softmax_listnet else log(scores)
    labels = Tensor(np.concatenate([np.zeros((n, t)), np.ones((n, t))], axis=1).astype(scores.dtype))
    return tsum(mul(logp, labels)) * (-1.0 / (n * 2 * t))


def aux_loss_b(pos: Tensor, item_replaced: Tensor) -> Tensor:
    """Mean BPR of s(p|u,i) against s(p|u,i') over T item replacements."""
    if pos.shape[0] == 0:
        raise ContractError("auxiliary loss over an empty batch")
    if item_replaced.data.ndim != 2 or item_replaced.shape[0] != pos.shape[0]:
        raise ContractError(f"replacements {item_replaced.shape} do not pair with {pos.shape}")
    n, t = item_replaced.shape
    return tsum(bpr_pair(reshape(pos, (n, 1)), item_replaced)) * (1.0 / (n * t))


def total_loss(loss_a, loss_b, aux_a, aux_b, config: MgbrConfig):
    """loss_A + w_B loss_B + w_A' aux_A + w_B' aux_B; aux terms vanish when disabled."""
    total = loss_a + loss_b * config.weight_b
    if config.aux_losses:
        total = total + aux_a * config.aux_weight_a + aux_b * config.aux_weight_b
    return total


@dataclass
class TrainBatch:
    """Index arrays for one optimisation step."""

    a_user: np.ndarray        # (n_a,)
    a_items: np.ndarray       # (n_a, 1 + k): positive item first
    b_user: np.ndarray        # (n_b,)
    b_item: np.ndarray        # (n_b,)
    b_parts: np.ndarray       # (n_b, 1 + k): positive participant first
    aux_user: np.ndarray      # (n_a,) one triple per item-task positive
    aux_item: np.ndarray
    aux_part: np.ndarray
    aux_items: np.ndarray     # (n_a, T) item replacements
    aux_parts: np.ndarray     # (n_a, T) participant replacements
    b_aux_items: np.ndarray   # (n_b, T) item replacements for participant-task positives

    def permuted(self, perm_a: np.ndarray, perm_b: np.ndarray) -> "TrainBatch":
        return TrainBatch(self.a_user[perm_a], self.a_items[perm_a], self.b_user[perm_b],
                          self.b_item[perm_b], self.b_parts[perm_b], self.aux_user[perm_a],
                          self.aux_item[perm_a], self.aux_part[perm_a], self.aux_items[perm_a],
                          self.aux_parts[perm_a], self.b_aux_items[perm_b])


@dataclass
class LossParts:
    loss_a: Tensor
    loss_b: Tensor
    aux_a: Tensor | None
    aux_b: Tensor | None
    total: Tensor

    def values(self) -> dict[str, float]:
        f = lambda t: float(t.item()) if t is not None else 0.0  # noqa: E731
        return {"loss_A": f(self.loss_a), "loss_B": f(self.loss_b), "aux_A": f(self.aux_a),
                "aux_B": f(self.aux_b), "total": f(self.total)}


def batch_loss(model: MGBR, batch: TrainBatch) -> LossParts:
    """Full forward for one batch: embeddings, both heads, all loss terms."""
    cfg = model.config
    tables = model.embeddings()
    n_a, k1 = batch.a_items.shape
    n_b, kb1 = batch.b_parts.shape
    if n_a == 0 or n_b == 0:
        raise ContractError("batch has no item-task or no participant-task positives")
    use_aux = cfg.aux_losses

    # item-head rows: ranked items with the averaged participant, then aux triples
    u_a = [np.repeat(batch.a_user, k1)]
    i_a = [batch.a_items.reshape(-1)]
    p_a = [np.full(n_a * k1, MEAN_PARTICIPANT)]
    if use_aux:
        t = batch.aux_items.shape[1]
        u_a.append(np.repeat(batch.aux_user, 2 * t))
        i_a.append(np.concatenate([batch.aux_items, np.repeat(batch.aux_item[:, None], t, axis=1)], axis=1).reshape(-1))
        p_aux = np.concatenate([np.repeat(batch.aux_part[:, None], t, axis=1), batch.aux_parts], axis=1).reshape(-1)
        p_a.append(p_aux)

    # participant-head rows: ranked participants, then item replacements
    u_b = [np.repeat(batch.b_user, kb1)]
    i_b = [np.repeat(batch.b_item, kb1)]
    p_b = [batch.b_parts.reshape(-1)]
    if use_aux:
        tb = batch.b_aux_items.shape[1]
        u_b.append(np.repeat(batch.b_user, tb))
        i_b.append(batch.b_aux_items.reshape(-1))
        p_b.append(np.repeat(batch.b_parts[:, 0], tb))

    s_a, s_b = model.score_rows(tables, np.concatenate(u_a), np.concatenate(i_a),
                                np.concatenate(p_a),
                                np.concatenate(u_b), np.concatenate(i_b), np.concatenate(p_b))

    rank_a = reshape(take(s_a, np.arange(n_a * k1)), (n_a, k1))
    loss_a = pairwise_loss(_col(rank_a, 0), _cols(rank_a, 1, k1))
    rank_b = reshape(take(s_b, np.arange(n_b * kb1)), (n_b, kb1))
    pos_b = _col(rank_b, 0)
    loss_b = pairwise_loss(pos_b, _cols(rank_b, 1, kb1))
    aux_a = aux_b = None
    if use_aux:
        lists = reshape(take(s_a, np.arange(n_a * k1, n_a * k1 + n_a * 2 * t)), (n_a, 2 * t))
        aux_a = aux_loss_a(_cols(lists, 0, t), _cols(lists, t, 2 * t), cfg.softmax_listnet)
        repl = reshape(take(s_b, np.arange(n_b * kb1, n_b * kb1 + n_b * tb)), (n_b, tb))
        aux_b = aux_loss_b(pos_b, repl)
    total = total_loss(loss_a, loss_b, aux_a, aux_b, cfg)
    return LossParts(loss_a, loss_b, aux_a, aux_b, total)


def _cols(x: Tensor, start: int, stop: int) -> Tensor:
    """Columns [start, stop) of a 2-D tensor."""
    n, m = x.shape
    idx = (np.arange(n)[:, None] * m + np.arange(start, stop)[None, :]).reshape(-1)
    return reshape(take(reshape(x, (n * m, 1)), idx), (n, stop - start))


def _col(x: Tensor, k: int) -> Tensor:
    return reshape(_cols(x, k, k + 1), (x.shape[0],))

