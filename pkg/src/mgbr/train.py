"""Epoch loop: fresh negatives, forward, backward, Adam, validation, early stopping."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .config import MgbrConfig
from .data import (Dataset, DealGroup, sample_aux_negatives, sample_item_replacements, sample_negatives_A,
                   sample_negatives_B)
from .errors import DivergenceError
from .evaluate import build_candidates, mrr_at_n, score_instances
from .graphs import build_views
from .losses import TrainBatch, batch_loss
from .model import MGBR
from .numeric import AdamState, GradientTape

log = logging.getLogger(__name__)

LOG_FIELDS = ["epoch", "loss_A", "loss_B", "aux_A", "aux_B", "total", "val_mrr_A", "val_mrr_B"]


def sample_batch(groups: Sequence[DealGroup], dataset: Dataset, config: MgbrConfig,
                 rng: np.random.Generator) -> TrainBatch:
    k = config.train_neg
    t = config.aux_neg_size
    want_aux = config.aux_losses
    a_user, a_items, b_user, b_item, b_parts, b_aux = [], [], [], [], [], []
    aux_trip, aux_items, aux_parts = [], [], []
    for g in groups:
        u, i = g.initiator, g.item
        a_user.append(u)
        a_items.append([i, *sample_negatives_A(u, dataset, k, rng)])
        joined = dataset.participants_of(u, i)
        for p in g.participants:
            b_user.append(u)
            b_item.append(i)
            b_parts.append([p, *sample_negatives_B(u, i, joined, dataset, k, rng)])
            if want_aux:
                b_aux.append(sample_item_replacements((u, i, p), dataset, t, rng))
        if want_aux:
            p = g.participants[int(rng.integers(len(g.participants)))]
            neg = sample_aux_negatives((u, i, p), dataset, t, rng)
            aux_trip.append((u, i, p))
            aux_items.append(neg.items)
            aux_parts.append(neg.participants)
    as_int = lambda x, shape: np.asarray(x, dtype=np.int64).reshape(shape)  # noqa: E731
    trip = as_int(aux_trip, (-1, 3)) if want_aux else np.zeros((0, 3), dtype=np.int64)
    return TrainBatch(
        a_user=as_int(a_user, -1), a_items=as_int(a_items, (-1, k + 1)),
        b_user=as_int(b_user, -1), b_item=as_int(b_item, -1), b_parts=as_int(b_parts, (-1, k + 1)),
        aux_user=trip[:, 0], aux_item=trip[:, 1], aux_part=trip[:, 2],
        aux_items=as_int(aux_items, (-1, t)), aux_parts=as_int(aux_parts, (-1, t)),
        b_aux_items=as_int(b_aux, (-1, t)),
    )


@dataclass
class TrainResult:
    model: MGBR
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_score: float = float("-inf")
    stopped_early: bool = False


def train_step(model: MGBR, adam: AdamState, batch: TrainBatch, where: str = "") -> dict[str, float]:
    with GradientTape() as tape:
        parts = batch_loss(model, batch)
    values = parts.values()
    if not np.isfinite(values["total"]):
        raise DivergenceError(f"non-finite loss {values} at {where or 'step'}")
    grads = tape.gradient(parts.total, model.params)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient for {name} at {where or 'step'}")
    adam.step(model.params, grads)
    return values


def validation_mrr(model: MGBR, val_a, val_b) -> tuple[float, float]:
    score_instances(model, val_a, val_b)
    n = len(val_a[0].candidates)
    return mrr_at_n(val_a, n), (mrr_at_n(val_b, n) if val_b else 0.0)


def train(dataset: Dataset, config: MgbrConfig, log_path: str | Path | None = None,
          on_epoch: Callable[[dict], None] | None = None) -> TrainResult:
    """Train until ``max_epochs`` or ``patience`` epochs without a better validation MRR.

    The returned model holds the parameters of the best validation epoch
    (or the last epoch when there is no validation split).
    """
    views = build_views(dataset.train, dataset.n_users, dataset.n_items)
    model = MGBR(config, dataset.n_users, dataset.n_items, views)
    adam = AdamState(model.params, lr=config.lr)
    result = TrainResult(model)
    val_a, val_b = (build_candidates(dataset.val, dataset, config.train_neg, config.eval_seed)
                    if dataset.val else ([], []))
    best_arrays = None
    stale = 0
    writer = fh = None
    if log_path is not None:
        fh = open(log_path, "w", encoding="utf-8", newline="")
        writer = csv.DictWriter(fh, fieldnames=LOG_FIELDS, lineterminator="\n")
        writer.writeheader()
    try:
        for epoch in range(1, config.max_epochs + 1):
            rng = np.random.default_rng([config.neg_seed, epoch])
            order = rng.permutation(len(dataset.train))
            sums = dict.fromkeys(LOG_FIELDS[1:6], 0.0)
            n_steps = 0
            for step, start in enumerate(range(0, len(order), config.batch_size)):
                groups = [dataset.train[j] for j in order[start:start + config.batch_size]]
                batch = sample_batch(groups, dataset, config, rng)
                values = train_step(model, adam, batch, f"epoch {epoch} step {step}")
                for key in sums:
                    sums[key] += values[key]
                n_steps += 1
            row = {"epoch": epoch, **{k: v / n_steps for k, v in sums.items()}}
            if val_a:
                row["val_mrr_A"], row["val_mrr_B"] = validation_mrr(model, val_a, val_b)
                score = (row["val_mrr_A"] + row["val_mrr_B"]) / 2
            else:
                row["val_mrr_A"] = row["val_mrr_B"] = float("nan")
                score = -row["total"]
            result.history.append(row)
            if writer:
                writer.writerow(row)
                fh.flush()
            if on_epoch:
                on_epoch(row)
            log.info("epoch %d total %.5f val A %.4f B %.4f", epoch, row["total"],
                     row["val_mrr_A"], row["val_mrr_B"])
            if score > result.best_score:
                result.best_score = score
                result.best_epoch = epoch
                best_arrays = model.params.arrays()
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    result.stopped_early = True
                    break
    finally:
        if fh:
            fh.close()
    if best_arrays is not None:
        model.params.load_arrays(best_arrays)
    return result
