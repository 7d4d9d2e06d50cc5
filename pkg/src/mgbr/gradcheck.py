"""Central finite-difference checks of tape gradients, run in float64."""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .config import MgbrConfig
from .data import Dataset, generate_synthetic
from .graphs import build_views
from .losses import TrainBatch, batch_loss
from .model import MGBR
from .numeric import GradientTape, Tensor

TINY = MgbrConfig(embed_dim=4, gcn_layers=1, n_experts=2, mtl_layers=2, aux_neg_size=2, train_neg=2,
                  batch_size=10)
TINY_SIZES = {"users": 8, "items": 6, "groups": 10}


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a||, ||n||), 0 when both vanish."""
    scale = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)))
    if scale < 1e-12:
        return 0.0
    return float(np.linalg.norm(analytic - numeric)) / scale


def numeric_gradient(f: Callable[[], float], x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """d f / d x by central differences, perturbing ``x`` in place."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + eps
        up = f()
        flat[k] = orig - eps
        down = f()
        flat[k] = orig
        grad.reshape(-1)[k] = (up - down) / (2 * eps)
    return grad


def check_function(fn: Callable[..., Tensor], *arrays: np.ndarray, eps: float = 1e-6) -> float:
    """Max relative error over the inputs of a scalar-valued tensor function."""
    inputs = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
    with GradientTape() as tape:
        out = fn(*inputs)
    grads = tape.gradient(out, inputs)
    worst = 0.0
    for k, x in enumerate(inputs):
        g = grads[k]
        num = numeric_gradient(lambda: float(fn(*inputs).item()), x.data, eps)
        worst = max(worst, relative_error(g, num))
    return worst


def model_gradient_errors(model: MGBR, batch: TrainBatch, names=None, eps: float = 1e-6) -> dict[str, float]:
    """Relative error of the total-loss gradient for each named parameter."""
    model.params.astype(np.float64)
    with GradientTape() as tape:
        loss = batch_loss(model, batch).total
    grads = tape.gradient(loss, model.params)
    out = {}
    for name in names or list(model.params):
        f = lambda: float(batch_loss(model, batch).total.item())  # noqa: E731
        out[name] = relative_error(grads[name], numeric_gradient(f, model.params[name].data, eps))
    return out


def tiny_setup(config: MgbrConfig | None = None, seed: int = 0,
               sizes: Mapping[str, int] = TINY_SIZES) -> tuple[MGBR, TrainBatch]:
    """Model and one fixed batch over a small synthetic corpus (every group in the batch).

    Biases start at zero, which can leave a ReLU input exactly on its kink
    where finite differences are meaningless, so they get a small jitter.
    """
    from .train import sample_batch

    config = config or TINY
    groups = generate_synthetic(sizes["users"], sizes["items"], sizes["groups"], latent_dim=2, seed=seed,
                                max_participants=2)
    dataset = Dataset(sizes["users"], sizes["items"], groups)
    model = MGBR(config, dataset.n_users, dataset.n_items,
                 build_views(dataset.train, dataset.n_users, dataset.n_items))
    rng = np.random.default_rng(seed)
    arrays = model.params.arrays()
    for name in arrays:
        if name.endswith(".bias"):
            arrays[name] = arrays[name] + rng.normal(0.0, 0.1, arrays[name].shape).astype(arrays[name].dtype)
    model.params.load_arrays(arrays)
    batch = sample_batch(groups, dataset, config, rng)
    return model, batch


def run_gradcheck(config: MgbrConfig | None = None, seed: int = 0) -> dict[str, float]:
    model, batch = tiny_setup(config, seed)
    return model_gradient_errors(model, batch)
