"""Sigmoid GCN per view and assembly of the 2d-wide object embeddings."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DimensionError, IdLookupError
from .graphs import ViewGraph
from .numeric import SparseMatrix, Tensor, concat, matmul, sigmoid, spmm, take

ROLES = ("initiator", "participant", "item")


def gcn_forward(view: ViewGraph | SparseMatrix, x0: Tensor, weights: Sequence[Tensor]) -> Tensor:
    """X^l = sigmoid(A_hat X^(l-1) W^(l-1)) for each weight in turn."""
    adj = view.adjacency if isinstance(view, ViewGraph) else view
    if not weights:
        raise DimensionError("gcn_forward needs at least one layer weight")
    if x0.shape[0] != adj.rows:
        raise DimensionError(f"layer-0 embeddings have {x0.shape[0]} rows, graph has {adj.rows} nodes")
    x = x0
    for w in weights:
        x = sigmoid(matmul(spmm(adj, x), w))
    return x


@dataclass
class EmbeddingTables:
    """Per-object multi-view embeddings, each row 2d wide.

    initiator = UI || UP, item = UI || PI, participant = PI || UP.
    """

    initiator: Tensor
    item: Tensor
    participant: Tensor

    @property
    def n_users(self) -> int:
        return self.initiator.shape[0]

    @property
    def n_items(self) -> int:
        return self.item.shape[0]

    def table(self, role: str) -> Tensor:
        if role not in ROLES:
            raise IdLookupError(f"unknown role {role!r}")
        return getattr(self, role)

    def lookup(self, role: str, ids) -> Tensor:
        tab = self.table(role)
        idx = np.asarray(ids, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= tab.shape[0]):
            raise IdLookupError(f"{role} id out of range [0, {tab.shape[0]})")
        return take(tab, idx)


def assemble_embeddings(x_ui: Tensor, x_pi: Tensor, x_up: Tensor, n_users: int) -> EmbeddingTables:
    n_bi = x_ui.shape[0]
    if x_pi.shape[0] != n_bi or x_up.shape[0] != n_users or n_users >= n_bi:
        raise DimensionError(f"view outputs {x_ui.shape}, {x_pi.shape}, {x_up.shape} "
                             f"inconsistent with {n_users} users")
    users = np.arange(n_users)
    items = np.arange(n_users, n_bi)
    return EmbeddingTables(
        initiator=concat([take(x_ui, users), x_up], axis=1),
        item=concat([take(x_ui, items), take(x_pi, items)], axis=1),
        participant=concat([take(x_pi, users), x_up], axis=1),
    )


def export_embeddings(tables: EmbeddingTables, path: str | Path) -> int:
    """CSV ``object_type,id,v0..`` with one row per (role, id); returns the row count."""
    width = tables.initiator.shape[1]
    rows = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["object_type", "id", *(f"v{k}" for k in range(width))])
        for role in ROLES:
            data = tables.table(role).data
            for k, vec in enumerate(data):
                w.writerow([role, k, *(repr(float(x)) for x in vec)])
                rows += 1
    return rows
