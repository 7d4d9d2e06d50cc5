import numpy as np
import pytest

from mgbr.checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
from mgbr.config import MgbrConfig
from mgbr.data import Dataset, generate_synthetic
from mgbr.errors import CheckpointError, CompatibilityError
from mgbr.evaluate import evaluate_model
from mgbr.graphs import build_views
from mgbr.model import MGBR

CFG = MgbrConfig(embed_dim=4, gcn_layers=1, n_experts=2, mtl_layers=2, lr=0.01, threads=1)


@pytest.fixture(scope="module")
def setup():
    ds = Dataset.from_groups(generate_synthetic(60, 30, 250, seed=2), min_interactions=1, seed=0)
    model = MGBR(CFG, ds.n_users, ds.n_items, build_views(ds.train, ds.n_users, ds.n_items))
    return ds, model


def test_round_trip_preserves_parameters_and_config(setup, tmp_path):
    ds, model = setup
    save_checkpoint(tmp_path / "m.ckpt", model, ds.train, extra={"best_epoch": 3})
    header, arrays = read_checkpoint(tmp_path / "m.ckpt")
    assert MgbrConfig.from_dict(header["config"]) == model.config
    assert header["extra"]["best_epoch"] == 3
    for k, v in model.params.arrays().items():
        np.testing.assert_array_equal(arrays[k], v)


def test_round_trip_preserves_evaluation(setup, tmp_path):
    ds, model = setup
    save_checkpoint(tmp_path / "m.ckpt", model, ds.train)
    back = load_checkpoint(tmp_path / "m.ckpt", ds)
    r1, a1, b1 = evaluate_model(model, ds, "test", 9, seed=3)
    r2, a2, b2 = evaluate_model(back, ds, "test", 9, seed=3)
    assert r1 == r2
    for x, y in zip(a1 + b1, a2 + b2):
        np.testing.assert_array_equal(x.scores, y.scores)


def test_save_is_byte_identical(setup, tmp_path):
    ds, model = setup
    save_checkpoint(tmp_path / "a", model, ds.train)
    save_checkpoint(tmp_path / "b", model, ds.train)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_corrupted_byte_detected(setup, tmp_path):
    ds, model = setup
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model, ds.train)
    raw = bytearray(path.read_bytes())
    raw[len(raw) // 2] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="checksum"):
        read_checkpoint(path)


def test_not_a_checkpoint(tmp_path):
    (tmp_path / "x").write_bytes(b"hello world" * 10)
    with pytest.raises(CheckpointError):
        read_checkpoint(tmp_path / "x")


def test_vocabulary_mismatch(setup, tmp_path):
    ds, model = setup
    save_checkpoint(tmp_path / "m.ckpt", model, ds.train)
    other = Dataset(ds.n_users + 1, ds.n_items, ds.train, ds.val, ds.test)
    with pytest.raises(CompatibilityError):
        load_checkpoint(tmp_path / "m.ckpt", other)


def test_training_split_mismatch(setup, tmp_path):
    ds, model = setup
    save_checkpoint(tmp_path / "m.ckpt", model, ds.train)
    other = Dataset(ds.n_users, ds.n_items, ds.train[1:], ds.val, ds.test)
    with pytest.raises(CompatibilityError, match="training split"):
        load_checkpoint(tmp_path / "m.ckpt", other)


def test_shape_mismatch_on_load(setup):
    _, model = setup
    arrays = model.params.arrays()
    arrays["head_A.0.weight"] = np.zeros((3, 3), dtype=np.float32)
    with pytest.raises(CompatibilityError):
        model.params.load_arrays(arrays)
