import struct

import numpy as np
import pytest

from mdmtl.descriptors import DomainSchema
from mdmtl.errors import ModelFormatError
from mdmtl.model_multi import init_cp, init_full, init_tt, init_tucker, to_tucker
from mdmtl.model_single import init_single
from mdmtl.persist import MAGIC, VERSION, dumps_model, load_model, loads_model, save_model

GRID = DomainSchema.distributed([("A", ("1", "2")), ("B", ("1", "2"))])

MODELS = {
    "single": lambda: init_single(6, 4, 3, seed=0, schema=GRID),
    "single_fixed": lambda: init_single(6, 4, fixed_P=True, seed=1, schema=GRID),
    "cp": lambda: init_cp(6, 3, 4, 2, seed=2, schema=GRID),
    "tucker": lambda: init_tucker(6, 3, 4, (2, 2, 3), seed=3),
    "tt": lambda: init_tt(6, 3, 4, (3, 2), seed=4, schema=GRID),
    "full": lambda: init_full(6, 3, 4, seed=5),
    "tucker_from_cp": lambda: to_tucker(init_cp(6, 3, 4, 2, seed=6)),
}


class TestRoundTrip:
    @pytest.mark.parametrize("name", list(MODELS))
    def test_bitwise(self, tmp_path, rng, name):
        m = MODELS[name]()
        path = str(tmp_path / "m.bin")
        save_model(m, path)
        back = load_model(path)
        assert back.kind == m.kind and back.dims == m.dims
        assert back.frozen == m.frozen and back.schema == m.schema
        for block in m.blocks:
            a, b = getattr(m, block), getattr(back, block)
            assert a.tobytes() == b.tobytes()
        X, Z = rng.normal(size=(100, 6)), rng.normal(size=(100, 4))
        assert np.asarray(m.forward(X, Z)).tobytes() == np.asarray(back.forward(X, Z)).tobytes()

    def test_fixed_P_flag(self):
        m = loads_model(dumps_model(MODELS["single_fixed"]()))
        assert m.fixed_P and "P" in m.frozen

    def test_dumps_deterministic(self):
        assert dumps_model(MODELS["cp"]()) == dumps_model(MODELS["cp"]())

    def test_header(self):
        data = dumps_model(MODELS["tt"]())
        assert data[:8] == MAGIC
        assert struct.unpack("<I", data[8:12])[0] == VERSION


class TestCorruption:
    def test_bad_magic(self):
        data = bytearray(dumps_model(MODELS["cp"]()))
        data[0:8] = b"NOTMODEL"
        with pytest.raises(ModelFormatError, match="magic"):
            loads_model(bytes(data))

    def test_version_mismatch(self):
        data = bytearray(dumps_model(MODELS["cp"]()))
        data[8:12] = struct.pack("<I", VERSION + 1)
        with pytest.raises(ModelFormatError, match="version"):
            loads_model(bytes(data))

    @pytest.mark.parametrize("cut", [1, 9, 40, 100])
    def test_truncated(self, cut):
        data = dumps_model(MODELS["tucker"]())
        with pytest.raises(ModelFormatError):
            loads_model(data[: len(data) - cut])

    def test_trailing_bytes(self):
        with pytest.raises(ModelFormatError, match="trailing"):
            loads_model(dumps_model(MODELS["full"]()) + b"\0")

    def test_empty(self):
        with pytest.raises(ModelFormatError):
            loads_model(b"")
