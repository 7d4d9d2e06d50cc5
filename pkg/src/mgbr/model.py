"""Full model: view GCNs, multi-task module and the two prediction heads."""

from __future__ import annotations

from typing import Iterator, Mapping

import numpy as np

from .config import MgbrConfig
from .errors import CompatibilityError, IdLookupError
from .gcn import EmbeddingTables, assemble_embeddings, gcn_forward
from .graphs import ViewGraph
from .mtl import TableInputs, init_mtl_params, lecun_uniform, mtl_forward_tables
from .numeric import Tensor, concat, matmul, mean_rows, parameter, relu, reshape, scale, sigmoid, take

MEAN_PARTICIPANT = -1

HEAD_LAYERS = 3
# sigmoid has slope 1/4 at the origin; a gain of 4 keeps row-to-row spread alive
# through the view GCN layers instead of shrinking it fourfold per layer
GCN_INIT_GAIN = 4.0


class ParameterStore(Mapping[str, Tensor]):
    """Every trainable tensor, addressable by name, in a fixed order."""

    def __init__(self, arrays: Mapping[str, np.ndarray]):
        self._params = {k: parameter(np.array(v), name=k) for k, v in arrays.items()}

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self._params.items()}

    def load_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        if set(arrays) != set(self._params):
            missing = sorted(set(self._params) ^ set(arrays))
            raise CompatibilityError(f"parameter names differ: {missing[:5]}")
        for k, p in self._params.items():
            if arrays[k].shape != p.shape:
                raise CompatibilityError(f"{k}: stored shape {arrays[k].shape}, model {p.shape}")
            p.data = np.array(arrays[k], dtype=p.dtype)

    def astype(self, dtype) -> None:
        for p in self._params.values():
            p.data = p.data.astype(dtype)

    def n_scalars(self) -> int:
        return int(sum(p.size for p in self._params.values()))


def init_parameters(config: MgbrConfig, n_users: int, n_items: int) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(config.init_seed)
    d = config.embed_dim
    n_bi = n_users + n_items
    out: dict[str, np.ndarray] = {}
    for view, n in (("UI", n_bi), ("PI", n_bi), ("UP", n_users)):
        out[f"gcn.{view}.x0"] = rng.standard_normal((n, d)).astype(np.float32)
        for layer in range(config.gcn_layers):
            out[f"gcn.{view}.w{layer}"] = GCN_INIT_GAIN * lecun_uniform(rng, d, (d, d))
    out.update(init_mtl_params(d, config.n_experts, config.mtl_layers, rng,
                               shared=config.shared_experts, adjusted=config.adjusted_gates))
    sizes = [d, d, d // 2, 1]
    for head in ("A", "B"):
        for k in range(HEAD_LAYERS):
            out[f"head_{head}.{k}.weight"] = lecun_uniform(rng, sizes[k], (sizes[k], sizes[k + 1]))
            out[f"head_{head}.{k}.bias"] = np.zeros((1, sizes[k + 1]), dtype=np.float32)
    return out


def head_forward(x: Tensor, params: Mapping[str, Tensor], head: str) -> Tensor:
    """MLP d -> d -> d/2 -> 1 (ReLU between layers), squashed to (0, 1); shape (n,)."""
    for k in range(HEAD_LAYERS):
        x = matmul(x, params[f"head_{head}.{k}.weight"]) + params[f"head_{head}.{k}.bias"]
        if k < HEAD_LAYERS - 1:
            x = relu(x)
    return sigmoid(reshape(x, (x.shape[0],)))


class MGBR:
    def __init__(self, config: MgbrConfig, n_users: int, n_items: int,
                 views: tuple[ViewGraph, ViewGraph, ViewGraph], arrays: Mapping[str, np.ndarray] | None = None):
        self.config = config
        self.n_users = n_users
        self.n_items = n_items
        self.views = dict(zip(("UI", "PI", "UP"), views))
        if self.views["UI"].n_nodes != n_users + n_items or self.views["UP"].n_nodes != n_users:
            raise CompatibilityError("view graphs do not match the user/item counts")
        self.params = ParameterStore(arrays if arrays is not None
                                     else init_parameters(config, n_users, n_items))

    # ------------------------------------------------------------------ embeddings

    def embeddings(self) -> EmbeddingTables:
        out = {}
        for view, graph in self.views.items():
            weights = [self.params[f"gcn.{view}.w{k}"] for k in range(self.config.gcn_layers)]
            out[view] = gcn_forward(graph, self.params[f"gcn.{view}.x0"], weights)
        return assemble_embeddings(out["UI"], out["PI"], out["UP"], self.n_users)

    def mean_participant(self, tables: EmbeddingTables, initiators) -> Tensor:
        """Rows of the averaged participant embedding used by the item task.

        With ``exclude_self_from_mean`` the initiator's own row is left out.
        """
        table = self._mean_table(tables)
        idx = np.asarray(initiators, dtype=np.int64)
        return take(table, idx if self.config.exclude_self_from_mean else np.zeros(len(idx), dtype=np.int64))

    def _mean_table(self, tables: EmbeddingTables) -> Tensor:
        mean = mean_rows(tables.participant)
        if not self.config.exclude_self_from_mean:
            return mean
        k = self.n_users
        every = take(mean, np.zeros(k, dtype=np.int64))
        return scale(every, k / (k - 1)) - scale(tables.participant, 1.0 / (k - 1))

    # ------------------------------------------------------------------ scoring

    def gates(self, tables: EmbeddingTables, u, i, p) -> tuple[Tensor, Tensor]:
        """Final gate outputs for rows (u, i, p); ``p == MEAN_PARTICIPANT`` selects the average."""
        cfg = self.config
        u = np.asarray(u, dtype=np.int64)
        p = np.asarray(p, dtype=np.int64)
        mean_idx = self.n_users + (u if cfg.exclude_self_from_mean else 0)
        p_idx = np.where(p == MEAN_PARTICIPANT, mean_idx, p)
        p_table = concat([tables.participant, self._mean_table(tables)], axis=0) \
            if (p == MEAN_PARTICIPANT).any() else tables.participant
        inputs = TableInputs({"u": tables.initiator, "i": tables.item, "p": p_table},
                             {"u": u, "i": np.asarray(i, dtype=np.int64), "p": p_idx})
        alpha_a = cfg.adjust_coef_a if cfg.adjusted_gates else 0.0
        alpha_b = cfg.adjust_coef_b if cfg.adjusted_gates else 0.0
        return mtl_forward_tables(inputs, self.params, cfg.n_experts, cfg.mtl_layers, alpha_a, alpha_b,
                                  shared=cfg.shared_experts, softmax_gates=cfg.softmax_gates)

    def score_rows(self, tables: EmbeddingTables, u_a, i_a, p_a, u_b, i_b, p_b) -> tuple[Tensor, Tensor]:
        """Head-A scores for rows (u_a, i_a, p_a) and head-B scores for (u_b, i_b, p_b).

        ``p_a`` entries equal to ``MEAN_PARTICIPANT`` use the averaged
        participant embedding. Both row sets share one multi-task pass.
        """
        n_a, n_b = len(u_a), len(u_b)
        cat = lambda a, b: np.concatenate([np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64)])  # noqa: E731
        g_a, g_b = self.gates(tables, cat(u_a, u_b), cat(i_a, i_b), cat(p_a, p_b))
        s_a = head_forward(take(g_a, np.arange(n_a)) if n_b else g_a, self.params, "A") if n_a else None
        s_b = head_forward(take(g_b, np.arange(n_a, n_a + n_b)) if n_a else g_b, self.params, "B") if n_b else None
        return s_a, s_b

    def _check(self, role: str, ids) -> np.ndarray:
        ids = np.atleast_1d(np.asarray(ids, dtype=np.int64))
        n = self.n_items if role == "item" else self.n_users
        if ids.size and (ids.min() < 0 or ids.max() >= n):
            raise IdLookupError(f"{role} id out of range [0, {n})")
        return ids

    def score_item(self, u, i, tables: EmbeddingTables | None = None) -> Tensor:
        """s(i|u) with the averaged participant embedding."""
        u, i = np.broadcast_arrays(self._check("user", u), self._check("item", i))
        tables = tables or self.embeddings()
        s, _ = self.score_rows(tables, u, i, np.full(len(u), MEAN_PARTICIPANT), [], [], [])
        return s

    def score_participant(self, u, i, p, tables: EmbeddingTables | None = None) -> Tensor:
        """s(p|u,i) with the candidate's own participant embedding."""
        u, i, p = np.broadcast_arrays(self._check("user", u), self._check("item", i), self._check("user", p))
        tables = tables or self.embeddings()
        _, s = self.score_rows(tables, [], [], [], u, i, p)
        return s

    def score_triple(self, u, i, p, tables: EmbeddingTables | None = None) -> Tensor:
        """Item-head score with participant ``p`` in place of the averaged embedding."""
        u, i, p = np.broadcast_arrays(self._check("user", u), self._check("item", i), self._check("user", p))
        tables = tables or self.embeddings()
        s, _ = self.score_rows(tables, u, i, p, [], [], [])
        return s
