import numpy as np
import pytest

from facemotion.checkpoint import load_checkpoint, save_checkpoint
from facemotion.errors import FormatError, NonFiniteDataError, TruncatedPayloadError


def sample_arrays(rng):
    return {
        "param.embedding": rng.normal(size=(6, 4)),
        "param.decoder.0.conv1.bias": rng.normal(size=4),
        "buffer.frontend.0.norm.running_mean": rng.normal(size=3),
        "adam.t.param.embedding": np.asarray(7.0),
    }


class TestRoundTrip:
    def test_values_epoch_and_config_survive(self, rng, tmp_path):
        arrays = sample_arrays(rng)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, arrays, epoch=42, config_text="alpha = 0.1\nfps = 30.0")
        back, epoch, text = load_checkpoint(path)
        assert epoch == 42
        assert text == "alpha = 0.1\nfps = 30.0"
        assert set(back) == set(arrays)
        for name in arrays:
            want = np.asarray(arrays[name], dtype=np.float32).astype(np.float64)
            np.testing.assert_array_equal(back[name], want)
            assert back[name].shape == np.asarray(arrays[name]).shape

    def test_scalar_entry_round_trips(self, tmp_path):
        save_checkpoint(tmp_path / "s.ckpt", {"adam.t.w": np.asarray(3.0)}, 1, "")
        arrays, _, _ = load_checkpoint(tmp_path / "s.ckpt")
        assert arrays["adam.t.w"].shape == ()
        assert float(arrays["adam.t.w"]) == 3.0

    def test_empty_table(self, tmp_path):
        save_checkpoint(tmp_path / "e.ckpt", {}, 0, "")
        arrays, epoch, text = load_checkpoint(tmp_path / "e.ckpt")
        assert arrays == {} and epoch == 0 and text == ""

    def test_rewrite_is_byte_identical(self, rng, tmp_path):
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(a, sample_arrays(rng), 5, "x = 1")
        arrays, epoch, text = load_checkpoint(a)
        save_checkpoint(b, arrays, epoch, text)
        assert a.read_bytes() == b.read_bytes()


class TestCorruption:
    def test_bad_magic(self, rng, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, sample_arrays(rng), 1, "")
        raw = bytearray(path.read_bytes())
        raw[:4] = b"NOPE"
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="magic"):
            load_checkpoint(path)

    def test_bad_version(self, rng, tmp_path):
        path = tmp_path / "v.ckpt"
        save_checkpoint(path, sample_arrays(rng), 1, "")
        raw = bytearray(path.read_bytes())
        raw[4] = 99
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="version"):
            load_checkpoint(path)

    def test_truncation_anywhere_raises(self, rng, tmp_path):
        path = tmp_path / "t.ckpt"
        save_checkpoint(path, sample_arrays(rng), 1, "k = v")
        raw = path.read_bytes()
        # cut at several depths: inside config, name table, tensor data
        for cut in (6, len(raw) // 3, len(raw) - 5):
            path.write_bytes(raw[:cut])
            with pytest.raises(TruncatedPayloadError):
                load_checkpoint(path)

    def test_trailing_bytes(self, rng, tmp_path):
        path = tmp_path / "x.ckpt"
        save_checkpoint(path, sample_arrays(rng), 1, "")
        path.write_bytes(path.read_bytes() + b"\x00\x00")
        with pytest.raises(FormatError, match="trailing"):
            load_checkpoint(path)

    def test_non_finite_entry(self, tmp_path):
        path = tmp_path / "nan.ckpt"
        save_checkpoint(path, {"param.w": np.array([1.0, 2.0])}, 1, "")
        raw = bytearray(path.read_bytes())
        raw[-4:] = np.array([np.nan], dtype="<f4").tobytes()
        path.write_bytes(bytes(raw))
        with pytest.raises(NonFiniteDataError, match="param.w"):
            load_checkpoint(path)
