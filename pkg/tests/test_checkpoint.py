"""Checkpoint round-trips and corruption detection.

Every test that flips or truncates bytes asserts the loader raises a
CheckpointError subclass rather than returning silently wrong weights.
"""

import json

import numpy as np
import pytest

from signseq.checkpoint import (
    CheckpointError,
    CorruptPayload,
    TruncatedFile,
    VersionMismatch,
    load_checkpoint,
    read_manifest,
    save_checkpoint,
)
from signseq.landmarks import ClassVocabulary
from signseq.model import ModelConfig, init_params

MINI = ModelConfig(input_dim=6, hidden_dim=8, num_heads=2, num_layers=2,
                   ffn_dim=16, dropout_p=0.1, embed_dropout_p=0.1,
                   num_classes=3, max_seq_len=5)
VOCAB = ClassVocabulary(("apple", "pear", "still"))


@pytest.fixture()
def saved(tmp_path):
    params = init_params(MINI, seed=7)
    path = tmp_path / "model.ckpt"
    save_checkpoint(params, MINI, VOCAB, path, seed=7,
                    metrics={"accuracy": 0.5})
    return params, path


class TestRoundTrip:
    def test_bitwise_identical_weights(self, saved):
        params, path = saved
        loaded, config, vocab = load_checkpoint(path)
        for (name_a, a), (name_b, b) in zip(params.named(), loaded.named()):
            assert name_a == name_b
            assert a.data.dtype == b.data.dtype == np.float32
            assert np.array_equal(a.data, b.data)

    def test_config_and_vocab_survive(self, saved):
        _, path = saved
        _, config, vocab = load_checkpoint(path)
        assert config == MINI
        assert vocab.names == VOCAB.names
        manifest = read_manifest(path)
        assert manifest["seed"] == 7
        assert manifest["metrics"]["accuracy"] == 0.5

    def test_read_manifest_without_payload(self, saved):
        _, path = saved
        manifest = read_manifest(path)
        assert manifest["format_version"] == 1
        assert manifest["config"]["hidden_dim"] == 8
        names = [t["name"] for t in manifest["tensors"]]
        assert names == [n for n, _ in init_params(MINI, seed=0).named()]

    def test_loaded_params_usable(self, saved):
        from signseq.model import forward
        _, path = saved
        loaded, config, _ = load_checkpoint(path)
        x = np.zeros((1, 5, 6), dtype=np.float32)
        mask = np.ones((1, 5), dtype=bool)
        out = forward(x, mask, loaded, config, training=False)
        assert out.data.shape == (1, 3)

    def test_save_is_deterministic(self, saved, tmp_path):
        params, path = saved
        again = tmp_path / "again.ckpt"
        save_checkpoint(params, MINI, VOCAB, again, seed=7,
                        metrics={"accuracy": 0.5})
        assert path.read_bytes() == again.read_bytes()


class TestCorruption:
    def test_truncation_every_region(self, saved, tmp_path):
        _, path = saved
        blob = path.read_bytes()
        for keep in (0, 5, len(blob) // 4, len(blob) // 2, len(blob) - 1):
            bad = tmp_path / "trunc.ckpt"
            bad.write_bytes(blob[:keep])
            with pytest.raises((TruncatedFile, VersionMismatch, CorruptPayload)):
                load_checkpoint(bad)

    def test_payload_flip(self, saved, tmp_path):
        _, path = saved
        blob = bytearray(path.read_bytes())
        blob[-3] ^= 0x40
        bad = tmp_path / "flip.ckpt"
        bad.write_bytes(bytes(blob))
        with pytest.raises(CorruptPayload):
            load_checkpoint(bad)

    def test_magic_flip(self, saved, tmp_path):
        _, path = saved
        blob = bytearray(path.read_bytes())
        blob[0] ^= 0x01
        bad = tmp_path / "magic.ckpt"
        bad.write_bytes(bytes(blob))
        with pytest.raises(VersionMismatch):
            load_checkpoint(bad)

    def test_version_bump(self, saved, tmp_path):
        _, path = saved
        blob = path.read_bytes()
        bad = tmp_path / "v9.ckpt"
        bad.write_bytes(blob.replace(b"SIGNSEQCKPT 1\n", b"SIGNSEQCKPT 9\n", 1))
        with pytest.raises(VersionMismatch):
            load_checkpoint(bad)

    def test_manifest_flip(self, saved, tmp_path):
        _, path = saved
        blob = bytearray(path.read_bytes())
        # flip a byte inside the JSON manifest region
        header_end = blob.index(b"\n", blob.index(b"\n") + 1) + 1
        blob[header_end + 10] ^= 0x08
        bad = tmp_path / "mani.ckpt"
        bad.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError):
            load_checkpoint(bad)

    def test_every_single_byte_flip_detected(self, saved, tmp_path):
        """Flip one random bit of one byte at 120 random offsets."""
        _, path = saved
        blob = path.read_bytes()
        rng = np.random.default_rng(13)
        offsets = rng.integers(0, len(blob), size=120)
        bits = rng.integers(0, 8, size=120)
        bad = tmp_path / "bit.ckpt"
        for off, bit in zip(offsets, bits):
            mutated = bytearray(blob)
            mutated[int(off)] ^= 1 << int(bit)
            bad.write_bytes(bytes(mutated))
            with pytest.raises(CheckpointError):
                load_checkpoint(bad)

    def test_extra_trailing_bytes(self, saved, tmp_path):
        _, path = saved
        bad = tmp_path / "extra.ckpt"
        bad.write_bytes(path.read_bytes() + b"\x00\x00")
        with pytest.raises(CorruptPayload):
            load_checkpoint(bad)

    def test_tensor_shape_lie(self, saved, tmp_path):
        """A manifest whose declared shapes disagree with the model skeleton."""
        _, path = saved
        blob = path.read_bytes()
        nl1 = blob.index(b"\n")
        nl2 = blob.index(b"\n", nl1 + 1)
        manifest_len = int(blob[nl1 + 1:nl2].split()[0])
        manifest = json.loads(blob[nl2 + 1:nl2 + 1 + manifest_len])
        payload = blob[nl2 + 1 + manifest_len:]
        manifest["tensors"][0]["shape"] = [1, 1]
        import zlib
        raw = json.dumps(manifest, indent=2, sort_keys=True).encode()
        rebuilt = (blob[:nl1 + 1]
                   + f"{len(raw)} {zlib.crc32(raw) & 0xFFFFFFFF:08x}\n".encode()
                   + raw + payload)
        bad = tmp_path / "lie.ckpt"
        bad.write_bytes(rebuilt)
        with pytest.raises(CheckpointError):
            load_checkpoint(bad)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_checkpoint(tmp_path / "nope.ckpt")
