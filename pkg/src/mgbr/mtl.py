"""Expert networks and gates shared between the item and participant tasks.

Three sub-modules per layer: A (item task), B (participant task) and the
shared S. Experts are bias-free linear maps; each gate mixes its experts with
weights that are themselves linear in the previous gate outputs (the generic
part) plus, for A and B, weights linear in pairwise embedding concatenations
(the adjusted part, scaled by a coefficient in (0, 1)).

Parameter layout per layer ``l`` (1-based), with ``w`` the previous gate width
(6d at layer 1, d after) and ``K`` experts:

``mtl.l.expert_A`` / ``expert_B``  (2w, K*d), or (w, K*d) without S
``mtl.l.expert_S``                 (3w, K*d)
``mtl.l.gate_A`` / ``gate_B``      (2w, 2K), or (w, K) without S
``mtl.l.gate_S``                   (3w, 3K)
``mtl.l.adjust_{A,B}_{ui,ip,up}``  (4d, K)

Columns ``[k*d, (k+1)*d)`` of an expert matrix belong to expert ``k``.

Layer-1 inputs are concatenations of e_u, e_i, e_p blocks. When rows come
from embedding tables (:class:`TableInputs`) those products are computed
once per table row and gathered, which is exact and much cheaper than
multiplying the repeated rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import DimensionError
from .numeric import Tensor, concat, matmul, reshape, softmax_rows, take

PAIRS = ("ui", "ip", "up")


def lecun_uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    """U(-sqrt(3/fan_in), sqrt(3/fan_in)): unit-variance outputs for unit-variance inputs."""
    limit = np.sqrt(3.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


def init_mtl_params(embed_dim: int, n_experts: int, n_layers: int, rng: np.random.Generator,
                    shared: bool = True, adjusted: bool = True) -> dict[str, np.ndarray]:
    d, K = embed_dim, n_experts
    out: dict[str, np.ndarray] = {}
    for layer in range(1, n_layers + 1):
        w = 6 * d if layer == 1 else d
        ab_in = 2 * w if shared else w
        for kind in ("A", "B"):
            out[f"mtl.{layer}.expert_{kind}"] = lecun_uniform(rng, ab_in, (ab_in, K * d))
        if shared:
            out[f"mtl.{layer}.expert_S"] = lecun_uniform(rng, 3 * w, (3 * w, K * d))
        for kind in ("A", "B"):
            out[f"mtl.{layer}.gate_{kind}"] = lecun_uniform(rng, ab_in, (ab_in, 2 * K if shared else K))
        if shared and layer < n_layers:  # the last layer has no shared state to emit
            out[f"mtl.{layer}.gate_S"] = lecun_uniform(rng, 3 * w, (3 * w, 3 * K))
        if adjusted:
            for kind in ("A", "B"):
                for pair in PAIRS:
                    out[f"mtl.{layer}.adjust_{kind}_{pair}"] = lecun_uniform(rng, 4 * d, (4 * d, K))
    return out


class TableInputs:
    """Layer-1 rows given as embedding tables plus per-row indices.

    ``tables`` maps role ``u``/``i``/``p`` to a (rows, 2d) tensor and
    ``index`` maps the same roles to int arrays of equal length.
    """

    def __init__(self, tables: Mapping[str, Tensor], index: Mapping[str, np.ndarray]):
        self.tables = dict(tables)
        self.index = {r: np.asarray(v, dtype=np.int64) for r, v in index.items()}
        sizes = {len(v) for v in self.index.values()}
        if len(sizes) != 1:
            raise DimensionError(f"row indices differ in length: {sorted(sizes)}")
        self.n = sizes.pop()

    def rows(self, role: str) -> Tensor:
        return take(self.tables[role], self.index[role])

    def project(self, weight: Tensor, roles: str) -> Tensor:
        """Equivalent to concat([rows(r) for r in roles]) @ weight."""
        width = self.tables["u"].shape[1]
        if weight.shape[0] != width * len(roles):
            raise DimensionError(f"weight {weight.shape} does not take a {roles!r} input of width {width}")
        out = None
        for role in "uip":
            blocks = [k for k, r in enumerate(roles) if r == role]
            if not blocks:
                continue
            w = None
            for k in blocks:
                chunk = take(weight, np.arange(k * width, (k + 1) * width))
                w = chunk if w is None else w + chunk
            term = take(matmul(self.tables[role], w), self.index[role])
            out = term if out is None else out + term
        return out


@dataclass
class GateState:
    """Gate outputs of the previous layer.

    At layer 0 a :class:`TableInputs` may stand in for the (identical)
    g_A = g_B = g_S = e_u || e_i || e_p rows.
    """

    A: Tensor | None
    B: Tensor | None
    S: Tensor | None
    layer0: TableInputs | None = None


def initial_state(e_u: Tensor, e_i: Tensor, e_p: Tensor, shared: bool = True) -> GateState:
    g0 = concat([e_u, e_i, e_p], axis=1)
    return GateState(g0, g0, g0 if shared else None)


_LAYOUT = {"A": ("A", "S"), "B": ("B", "S"), "S": ("A", "S", "B")}


def expert_input(kind: str, state: GateState) -> Tensor:
    if state.layer0 is not None:
        raise DimensionError("factored layer-0 state has no materialized input rows")
    parts = [getattr(state, k) for k in _LAYOUT[kind] if getattr(state, k) is not None]
    return parts[0] if len(parts) == 1 else concat(parts, axis=1)


def _project(kind: str, state: GateState, weight: Tensor, shared: bool) -> Tensor:
    if state.layer0 is not None:
        blocks = len(_LAYOUT[kind]) if shared else 1
        return state.layer0.project(weight, "uip" * blocks)
    x = expert_input(kind, state)
    if x.shape[1] != weight.shape[0]:
        raise DimensionError(f"{kind} input width {x.shape[1]} does not match weight {weight.shape}")
    return matmul(x, weight)


def expert_forward(kind: str, layer: int, state: GateState, params: Mapping[str, Tensor],
                   n_experts: int, shared: bool = True) -> Tensor:
    """Stacked outputs of the K experts of ``kind``: shape (n, K, d)."""
    w = params[f"mtl.{layer}.expert_{kind}"]
    out = _project(kind, state, w, shared)
    return reshape(out, (out.shape[0], n_experts, w.shape[1] // n_experts))


def _mix(logits: Tensor, experts: Tensor, normalize: bool) -> Tensor:
    if normalize:
        logits = softmax_rows(logits)
    n, m = logits.shape
    if experts.shape[:2] != (n, m):
        raise DimensionError(f"gate weights {logits.shape} do not match experts {experts.shape}")
    return reshape(matmul(reshape(logits, (n, 1, m)), experts), (n, experts.shape[2]))


def pair_inputs(e_u: Tensor, e_i: Tensor, e_p: Tensor) -> dict[str, Tensor]:
    return {"ui": concat([e_u, e_i], axis=1), "ip": concat([e_i, e_p], axis=1),
            "up": concat([e_u, e_p], axis=1)}


def _pair_logits(pairs, pair: str, weight: Tensor) -> Tensor:
    if isinstance(pairs, TableInputs):
        return pairs.project(weight, pair)
    return matmul(pairs[pair], weight)


def gate_forward(kind: str, layer: int, state: GateState, experts: Mapping[str, Tensor],
                 pairs, params: Mapping[str, Tensor], alpha: float,
                 softmax_gates: bool = False) -> Tensor:
    """Gate A or B output: generic mixture plus ``alpha`` times the adjusted mixture.

    Gate A routes the (u, i) term through its own experts and the (i, p),
    (u, p) terms through S; gate B does the reverse. Without S, the S routes
    fall back to the gate's own experts. ``pairs`` is either the dict from
    :func:`pair_inputs` or a :class:`TableInputs`.
    """
    own = experts[kind]
    shared = experts.get("S")
    stack = own if shared is None else concat([own, shared], axis=1)
    logits = _project(kind, state, params[f"mtl.{layer}.gate_{kind}"], shared is not None)
    g = _mix(logits, stack, softmax_gates)
    if alpha == 0 or pairs is None:
        return g
    other = own if shared is None else shared
    route = {"A": {"ui": own, "ip": other, "up": other},
             "B": {"ui": other, "ip": own, "up": own}}[kind]
    adjusted = None
    for pair in PAIRS:
        term = _mix(_pair_logits(pairs, pair, params[f"mtl.{layer}.adjust_{kind}_{pair}"]),
                    route[pair], softmax_gates)
        adjusted = term if adjusted is None else adjusted + term
    return g + adjusted * alpha


def gate_s_forward(layer: int, state: GateState, experts: Mapping[str, Tensor],
                   params: Mapping[str, Tensor], softmax_gates: bool = False) -> Tensor:
    stack = concat([experts["A"], experts["S"], experts["B"]], axis=1)
    return _mix(_project("S", state, params[f"mtl.{layer}.gate_S"], True), stack, softmax_gates)


def _run(state: GateState, pairs, params, n_experts, n_layers, alpha_a, alpha_b, shared, softmax_gates):
    if n_layers < 1:
        raise DimensionError("the multi-task module needs at least one layer")
    for layer in range(1, n_layers + 1):
        experts = {k: expert_forward(k, layer, state, params, n_experts, shared)
                   for k in (("A", "B", "S") if shared else ("A", "B"))}
        g_a = gate_forward("A", layer, state, experts, pairs, params, alpha_a, softmax_gates)
        g_b = gate_forward("B", layer, state, experts, pairs, params, alpha_b, softmax_gates)
        g_s = None
        if shared and layer < n_layers:
            g_s = gate_s_forward(layer, state, experts, params, softmax_gates)
        state = GateState(g_a, g_b, g_s)
    return state.A, state.B


def _wants_pairs(params, alpha_a, alpha_b) -> bool:
    return "mtl.1.adjust_A_ui" in params and bool(alpha_a or alpha_b)


def mtl_forward(e_u: Tensor, e_i: Tensor, e_p: Tensor, params: Mapping[str, Tensor], n_experts: int,
                n_layers: int, alpha_a: float = 0.1, alpha_b: float = 0.1, shared: bool = True,
                softmax_gates: bool = False) -> tuple[Tensor, Tensor]:
    """Final gate A and gate B outputs, each (n, d), for rows of (e_u, e_i, e_p)."""
    state = initial_state(e_u, e_i, e_p, shared)
    pairs = pair_inputs(e_u, e_i, e_p) if _wants_pairs(params, alpha_a, alpha_b) else None
    return _run(state, pairs, params, n_experts, n_layers, alpha_a, alpha_b, shared, softmax_gates)


def mtl_forward_tables(inputs: TableInputs, params: Mapping[str, Tensor], n_experts: int, n_layers: int,
                       alpha_a: float = 0.1, alpha_b: float = 0.1, shared: bool = True,
                       softmax_gates: bool = False) -> tuple[Tensor, Tensor]:
    """Same as :func:`mtl_forward` with layer-1 products taken per table row."""
    state = GateState(None, None, None, layer0=inputs)
    pairs = inputs if _wants_pairs(params, alpha_a, alpha_b) else None
    return _run(state, pairs, params, n_experts, n_layers, alpha_a, alpha_b, shared, softmax_gates)
