"""Initiator-item, participant-item and initiator-participant view graphs."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import DealGroup
from .errors import StructuralError
from .numeric import SparseMatrix

VIEWS = ("UI", "PI", "UP")
NORMALIZATION = "symmetric"


@dataclass(frozen=True)
class ViewGraph:
    view: str
    n_nodes: int
    edges: tuple[tuple[int, int], ...]  # undirected, each stored once with a < b
    adjacency: SparseMatrix  # normalized, with self-loops


def normalize(adjacency: SparseMatrix) -> SparseMatrix:
    """D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I."""
    n = adjacency.rows
    a = adjacency.csr.tocoo()
    off = a.row != a.col
    rows = np.concatenate([a.row[off], np.arange(n)])
    cols = np.concatenate([a.col[off], np.arange(n)])
    vals = np.concatenate([a.data[off], np.ones(n)])
    deg = np.bincount(rows, weights=vals, minlength=n)
    inv_sqrt = 1.0 / np.sqrt(deg)
    return SparseMatrix(n, n, rows, cols, vals * inv_sqrt[rows] * inv_sqrt[cols])


def _view(view: str, n: int, pairs: set[tuple[int, int]]) -> ViewGraph:
    edges = tuple(sorted(pairs))
    if edges:
        e = np.array(edges, dtype=np.int64)
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
    raw = SparseMatrix(n, n, rows, cols, np.ones(rows.size))
    return ViewGraph(view, n, edges, normalize(raw))


def build_views(train_groups: Sequence[DealGroup], n_users: int, n_items: int):
    """Three normalized views from training groups; item nodes sit after user nodes."""
    ui: set[tuple[int, int]] = set()
    pi: set[tuple[int, int]] = set()
    up: set[tuple[int, int]] = set()
    for g in train_groups:
        if not 0 <= g.item < n_items or any(not 0 <= x < n_users for x in g.users):
            raise StructuralError(f"group {g} out of range for {n_users} users / {n_items} items")
        item_node = n_users + g.item
        ui.add((g.initiator, item_node))
        for p in g.participants:
            pi.add((p, item_node))
            up.add((min(g.initiator, p), max(g.initiator, p)))
    n_bi = n_users + n_items
    return _view("UI", n_bi, ui), _view("PI", n_bi, pi), _view("UP", n_users, up)


def export_edges(views: Sequence[ViewGraph], out_dir: str | Path) -> None:
    """Debug dump: one ``a<TAB>b`` edge list per view."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for v in views:
        with open(out / f"edges_{v.view}.txt", "w", encoding="utf-8") as fh:
            for a, b in v.edges:
                fh.write(f"{a}\t{b}\n")
