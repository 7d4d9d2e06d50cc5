"""Candidate lists, MRR@N / NDCG@N and the evaluation report."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Dataset, DealGroup, sample_negatives_A, sample_negatives_B
from .errors import ContractError
from .model import MGBR

SCORE_CHUNK = 20000


@dataclass
class RankedCandidates:
    """One test instance: the positive plus its sampled negatives.

    ``candidates[0]`` is the positive. For the item task ``item`` is the
    positive item; for the participant task it is the group's item.
    """

    instance: int
    task: str
    user: int
    item: int
    candidates: np.ndarray
    scores: np.ndarray | None = None

    @property
    def positive(self) -> int:
        return int(self.candidates[0])

    @property
    def rank(self) -> int:
        """1-based rank of the positive; ties go to the smaller candidate id."""
        if self.scores is None:
            raise ContractError(f"instance {self.instance} has not been scored")
        return rank_of(self.scores, self.candidates, 0)


def rank_of(scores: np.ndarray, candidates: np.ndarray, pos_index: int = 0) -> int:
    s = scores[pos_index]
    c = candidates[pos_index]
    ahead = (scores > s) | ((scores == s) & (candidates < c))
    return 1 + int(ahead.sum())


def build_candidates(groups: Sequence[DealGroup], dataset: Dataset, neg_k: int, seed: int):
    """Task-A instances (one per group) and task-B instances (one per participant)."""
    rng = np.random.default_rng(seed)
    inst_a: list[RankedCandidates] = []
    inst_b: list[RankedCandidates] = []
    for g in groups:
        negs = sample_negatives_A(g.initiator, dataset, neg_k, rng)
        inst_a.append(RankedCandidates(len(inst_a), "A", g.initiator, g.item,
                                       np.array([g.item, *negs], dtype=np.int64)))
        joined = dataset.participants_of(g.initiator, g.item)
        for p in g.participants:
            negs = sample_negatives_B(g.initiator, g.item, joined, dataset, neg_k, rng)
            inst_b.append(RankedCandidates(len(inst_b), "B", g.initiator, g.item,
                                           np.array([p, *negs], dtype=np.int64)))
    return inst_a, inst_b


def _ranks(instances) -> np.ndarray:
    ranks = np.array([x.rank if isinstance(x, RankedCandidates) else int(x) for x in instances])
    if ranks.size == 0:
        raise ContractError("metric over an empty instance set")
    if ranks.min() < 1:
        raise ContractError("ranks are 1-based")
    return ranks


def mrr_at_n(instances, n: int | None = None) -> float:
    """Mean of 1/rank, counting ranks beyond ``n`` as 0."""
    ranks = _ranks(instances)
    rr = 1.0 / ranks
    if n is not None:
        rr = np.where(ranks <= n, rr, 0.0)
    return float(rr.mean())


def ndcg_at_n(instances, n: int | None = None) -> float:
    """Binary-relevance NDCG with a single relevant entry: 1/log2(rank+1)."""
    ranks = _ranks(instances)
    gain = 1.0 / np.log2(ranks + 1.0)
    if n is not None:
        gain = np.where(ranks <= n, gain, 0.0)
    return float(gain.mean())


def score_instances(model: MGBR, inst_a: Sequence[RankedCandidates], inst_b: Sequence[RankedCandidates]) -> None:
    """Fill ``scores`` for every instance with one shared embedding pass."""
    tables = model.embeddings()
    if inst_a:
        cands = np.stack([x.candidates for x in inst_a])
        users = np.repeat([x.user for x in inst_a], cands.shape[1])
        flat = cands.reshape(-1)
        out = np.concatenate([model.score_item(users[s:s + SCORE_CHUNK], flat[s:s + SCORE_CHUNK], tables).data
                              for s in range(0, flat.size, SCORE_CHUNK)])
        for x, row in zip(inst_a, out.reshape(cands.shape)):
            x.scores = row
    if inst_b:
        cands = np.stack([x.candidates for x in inst_b])
        k = cands.shape[1]
        users = np.repeat([x.user for x in inst_b], k)
        items = np.repeat([x.item for x in inst_b], k)
        flat = cands.reshape(-1)
        out = np.concatenate([
            model.score_participant(users[s:s + SCORE_CHUNK], items[s:s + SCORE_CHUNK],
                                    flat[s:s + SCORE_CHUNK], tables).data
            for s in range(0, flat.size, SCORE_CHUNK)])
        for x, row in zip(inst_b, out.reshape(cands.shape)):
            x.scores = row


def metrics_report(inst_a, inst_b, seed: int) -> dict:
    n = len(inst_a[0].candidates) if inst_a else len(inst_b[0].candidates)
    report = {"n": n, "seed": seed, "instances_A": len(inst_a), "instances_B": len(inst_b)}
    for task, insts in (("taskA", inst_a), ("taskB", inst_b)):
        if not insts:
            continue
        mrr = mrr_at_n(insts, n)
        ndcg = ndcg_at_n(insts, n)
        report.update({f"{task}.mrr": mrr, f"{task}.ndcg": ndcg,
                       f"{task}.mrr@{n}": mrr, f"{task}.ndcg@{n}": ndcg})
    return report


def evaluate_model(model: MGBR, dataset: Dataset, split: str = "test", neg_k: int = 9, seed: int = 0):
    """Score the split's candidate lists; returns (report, task-A instances, task-B instances)."""
    inst_a, inst_b = build_candidates(dataset.split_groups(split), dataset, neg_k, seed)
    if not inst_a:
        raise ContractError(f"split {split!r} is empty")
    score_instances(model, inst_a, inst_b)
    return metrics_report(inst_a, inst_b, seed), inst_a, inst_b


def write_ranks_csv(path: str | Path, inst_a, inst_b) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["task", "instance", "user", "item", "positive", "rank", "list_size"])
        for x in [*inst_a, *inst_b]:
            w.writerow([x.task, x.instance, x.user, x.item, x.positive, x.rank, len(x.candidates)])


def random_baseline_mrr(list_size: int) -> float:
    """Expected MRR of a uniformly random ranking: H(n)/n."""
    return math.fsum(1.0 / k for k in range(1, list_size + 1)) / list_size
