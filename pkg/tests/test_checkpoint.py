import numpy as np
import pytest

from randla.checkpoint import MAGIC, load_model, load_tensors, save_model, save_tensors
from randla.network import NetworkConfig, init_params
from randla.rng import Rng


def test_tensor_container_round_trip(tmp_path, rng):
    blob = {
        "a.W": rng.uniforms((3, 4)),
        "scalar": np.float64(2.5),
        "vec": rng.uniforms((7,)),
        "cube": rng.uniforms((2, 3, 4)),
    }
    path = tmp_path / "t.ntck"
    save_tensors(str(path), blob)
    back = load_tensors(str(path))
    assert set(back) == set(blob)
    for name in blob:
        assert np.array_equal(np.asarray(blob[name]), back[name])
        assert np.asarray(blob[name]).shape == back[name].shape


def test_container_layout(tmp_path):
    path = tmp_path / "t.ntck"
    save_tensors(str(path), {"x": np.zeros(2)})
    raw = path.read_bytes()
    assert raw[:4] == MAGIC
    assert raw[4] == 1  # version byte
    # count=1, name len=1, 'x', rank=1, dim=2, 16 payload bytes
    assert len(raw) == 4 + 1 + 4 + 2 + 1 + 1 + 4 + 16


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "t.ntck"
    path.write_bytes(b"JUNKxxxx")
    with pytest.raises(ValueError, match="magic"):
        load_tensors(str(path))


def test_trailing_bytes_rejected(tmp_path):
    path = tmp_path / "t.ntck"
    save_tensors(str(path), {"x": np.zeros(2)})
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(ValueError, match="trailing"):
        load_tensors(str(path))


def test_model_round_trip(tmp_path):
    cfg = NetworkConfig(n_class=4, d_in=3, k=5, channels=(4, 8, 16), block_depth=3,
                        locse_mode="rel_dist", pooling="max", dropout=0.25,
                        head_widths=(10, 6), coord_scale=2.5)
    params = init_params(cfg, Rng(3))
    path = tmp_path / "m.ntck"
    save_model(str(path), params)
    back = load_model(str(path))
    assert back.config == cfg
    assert [n for n, _ in back.named()] == [n for n, _ in params.named()]
    for (_, a), (_, b) in zip(params.named(), back.named()):
        assert np.array_equal(a.data, b.data)
        assert b.requires_grad


def test_save_is_deterministic(tmp_path):
    cfg = NetworkConfig(n_class=2, d_in=3, k=2, channels=(2, 4))
    params = init_params(cfg, Rng(1))
    a = tmp_path / "a.ntck"
    b = tmp_path / "b.ntck"
    save_model(str(a), params)
    save_model(str(b), params)
    assert a.read_bytes() == b.read_bytes()
