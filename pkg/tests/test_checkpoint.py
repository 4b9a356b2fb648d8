import numpy as np
import pytest

from imvalign import checkpoint as ckpt_io
from imvalign.checkpoint import CheckpointError
from imvalign.model import ModelConfig, Transducer
from imvalign.optim import Adam


def model(**kw):
    return Transducer(ModelConfig(vocab_size=7, feature_dim=5, dim=8, heads=2, **kw), seed=9)


def test_round_trip_is_bit_exact(tmp_path):
    m = model(lam=0.25, sigma_init=0.3)
    m.params["decoder.out.b"].data[:] = [np.pi, -0.0, 1e-30, np.float32(3.4e38), 1 / 3, 7, -1]
    path = tmp_path / "m.ckpt"
    ckpt_io.save_checkpoint(path, m, meta={"step": 12})
    back = ckpt_io.load_model(path)
    assert back.cfg == m.cfg
    assert list(back.params) == list(m.params)
    for (name, p), q in zip(m.params.items(), back.params.values()):
        assert p.data.tobytes() == q.data.tobytes(), name
    ckpt_io.save_checkpoint(tmp_path / "again.ckpt", back, meta={"step": 12})
    assert path.read_bytes() == (tmp_path / "again.ckpt").read_bytes()


def test_optimizer_state_and_meta(tmp_path):
    m = model()
    opt = Adam(m.params)
    for p in m.params.trainable():
        p.grad = np.full_like(p.data, 0.1)
    opt.step()
    path = tmp_path / "m.ckpt"
    ckpt_io.save_checkpoint(path, m, opt, {"step": 1, "seed": 4})
    ck = ckpt_io.read_checkpoint(path)
    assert ck.meta == {"step": 1, "seed": 4, "optimizer": "adam", "lr": 1e-3}
    state = ck.optimizer_state()
    assert state["step"][0] == 1
    np.testing.assert_array_equal(state["m.decoder.out.w"], opt.m["decoder.out.w"])
    assert set(ck.params()) == set(m.params)


def test_header_layout(tmp_path):
    path = tmp_path / "m.ckpt"
    ckpt_io.save_checkpoint(path, model())
    raw = path.read_bytes()
    assert raw.startswith(b"IMVALIGN-CKPT")
    assert int.from_bytes(raw[13:17], "little") == ckpt_io.VERSION


class TestCorruption:
    @pytest.fixture
    def raw(self, tmp_path):
        path = tmp_path / "m.ckpt"
        ckpt_io.save_checkpoint(path, model())
        return path.read_bytes()

    def test_bad_magic(self, raw):
        with pytest.raises(CheckpointError, match="magic"):
            ckpt_io.decode(b"X" + raw[1:])

    def test_future_version(self, raw):
        with pytest.raises(CheckpointError, match="version"):
            ckpt_io.decode(raw[:13] + (99).to_bytes(4, "little") + raw[17:])

    def test_truncated(self, raw):
        with pytest.raises(CheckpointError, match="truncated"):
            ckpt_io.decode(raw[:-3])

    def test_trailing_bytes(self, raw):
        with pytest.raises(CheckpointError, match="trailing"):
            ckpt_io.decode(raw + b"\0")

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            ckpt_io.read_checkpoint(tmp_path / "nope.ckpt")

    def test_shape_mismatch(self, raw):
        ck = ckpt_io.decode(raw)
        ck.tensors["decoder.out.b"] = np.zeros(3, dtype=np.float32)
        with pytest.raises(CheckpointError, match="shape"):
            ckpt_io.model_from_checkpoint(ck)

    def test_missing_and_unknown_parameters(self, raw):
        ck = ckpt_io.decode(raw)
        del ck.tensors["decoder.out.b"]
        with pytest.raises(CheckpointError, match="lacks"):
            ckpt_io.model_from_checkpoint(ck)
        ck = ckpt_io.decode(raw)
        ck.tensors["stray"] = np.zeros(1, dtype=np.float32)
        with pytest.raises(CheckpointError, match="unknown"):
            ckpt_io.model_from_checkpoint(ck)
