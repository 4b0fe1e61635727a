import struct

import numpy as np
import pytest

from lightconv import build_model, make_rng
from lightconv import serialize as ser
from lightconv.config import Config, REPRESENTATIONS, load as load_config
from lightconv.errors import ArtifactError, ChecksumError, TruncatedError, VersionError


def small_nwp(vocab=40, rank=3, c=8, variant="separable_bottleneck_gelu"):
    cfg = Config(task="nwp")
    cfg.encoder.variant, cfg.encoder.c, cfg.encoder.b, cfg.encoder.n = variant, c, 2, 1
    cfg.model.vocab, cfg.model.rank = vocab, rank
    model = build_model(cfg.validate(), make_rng(5))
    model.meta = {"vocab": "a b c", "note": "x = y"}
    return model


def header_len(blob):
    return struct.unpack_from("<I", blob, 5)[0]


def test_save_load_save_is_byte_identical(tmp_path):
    model = small_nwp()
    info = ser.save_artifact(model, tmp_path / "a.fcnv")
    back = ser.load_artifact(tmp_path / "a.fcnv")
    ser.save_artifact(back, tmp_path / "b.fcnv")
    assert (tmp_path / "a.fcnv").read_bytes() == (tmp_path / "b.fcnv").read_bytes()
    assert info.n_params == model.num_parameters() and info.n_tensors == 8
    assert back.meta == model.meta
    assert back.cfg.dumps() == model.cfg.dumps()


@pytest.mark.parametrize("variant", REPRESENTATIONS)
def test_size_formula_is_exact(variant):
    model = small_nwp(variant=variant)
    blob = ser.dumps_artifact(model)
    shapes = {n: p.shape for n, p in model.named_parameters().items()}
    assert len(blob) == ser.expected_size(header_len(blob), shapes)
    assert len(blob) == 4 + 1 + 4 + header_len(blob) + 8 + sum(
        2 + len(n) + 1 + 4 * len(s) + 4 * int(np.prod(s)) for n, s in shapes.items())


def test_factorization_saving_on_disk():
    V, r, d = 400, 4, 16
    model = small_nwp(vocab=V, rank=r, c=d)
    blob = ser.dumps_artifact(model)
    shapes = {n: p.shape for n, p in model.named_parameters().items()}
    shapes.pop("embedding.w_a"), shapes.pop("embedding.w_b")
    full = ser.expected_size(header_len(blob), {"embedding.table": (V, d), **shapes})
    assert full - len(blob) == pytest.approx(4 * (V * d - V * r - r * d), abs=40)


def test_header_is_sorted_text():
    blob = ser.dumps_artifact(small_nwp())
    text = blob[9 : 9 + header_len(blob)].decode()
    keys = [line.split(" = ")[0] for line in text.splitlines()]
    assert keys == sorted(keys)
    assert "format = FCNV/1" in text.splitlines()


def test_reference_config_is_rebuilt_from_header():
    cfg = load_config("ref_intentslot").with_variant("recurrent")
    cfg.encoder.c, cfg.model.char_filters, cfg.model.gaz_dim = 16, 12, 4
    model = build_model(cfg.validate(), make_rng(0))
    back = ser.loads_artifact(ser.dumps_artifact(model))
    assert back.cfg.dumps() == cfg.dumps()
    for name, p in model.named_parameters().items():
        np.testing.assert_array_equal(back.named_parameters()[name].data, p.data.astype("<f4"))


def test_rejections(tmp_path):
    blob = ser.dumps_artifact(small_nwp())
    with pytest.raises(VersionError, match="version 2"):
        ser.loads_artifact(blob[:4] + b"\x02" + blob[5:])
    with pytest.raises(ArtifactError, match="bad magic"):
        ser.loads_artifact(b"XCNV" + blob[4:])
    with pytest.raises(ArtifactError, match="trailing"):
        ser.loads_artifact(blob + b"\0")
    with pytest.raises(TruncatedError, match="checksum"):
        ser.loads_artifact(blob[:-8])
    with pytest.raises(ChecksumError):
        ser.loads_artifact(blob[:20] + bytes([blob[20] ^ 1]) + blob[21:])
    with pytest.raises(TruncatedError):
        ser.loads_artifact(b"")
    with pytest.raises(ArtifactError, match="no such artifact"):
        ser.load_artifact(tmp_path / "missing.fcnv")


def test_config_mismatch_is_reported():
    model = small_nwp()
    blob = bytearray(ser.dumps_artifact(model))
    start, n = 9, header_len(blob)
    header = blob[start : start + n].replace(b"model.vocab = 40", b"model.vocab = 41")
    body = bytes(blob[:start]) + bytes(header) + bytes(blob[start + n : -8])
    forged = body + ser.checksum(bytes(header) + bytes(blob[start + n : -8]))
    with pytest.raises(ArtifactError, match="shape"):
        ser.loads_artifact(forged)
