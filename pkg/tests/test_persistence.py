import numpy as np
import pytest

from stochpe.errors import CorruptCheckpoint, GridMismatch, VersionMismatch
from stochpe.grid import Grid, random_field_in_H
from stochpe.persistence import (
    checkpoint_bytes,
    checkpoint_load,
    checkpoint_parse,
    checkpoint_save,
    config_digest,
    load_snapshot,
    rng_pack,
    rng_unpack,
    save_snapshot,
    snapshot_bytes,
)


def test_snapshot_round_trip(tmp_path, g8):
    v = random_field_in_H(g8, 4)
    p = tmp_path / "v.pesf"
    save_snapshot(p, v)
    assert p.stat().st_size == 20 + 16 * 2 * 8 * 8 * 8
    u = load_snapshot(p, g8)
    assert np.array_equal(u.data, v.data)


def test_snapshot_grid_mismatch(tmp_path, g8):
    p = tmp_path / "v.pesf"
    save_snapshot(p, random_field_in_H(g8, 0))
    with pytest.raises(GridMismatch):
        load_snapshot(p, Grid(8, 8, 16))


@pytest.mark.parametrize("cut", [3, 20, 100])
def test_snapshot_truncated(tmp_path, g8, cut):
    p = tmp_path / "v.pesf"
    p.write_bytes(snapshot_bytes(g8, random_field_in_H(g8, 0).data)[:cut])
    with pytest.raises(CorruptCheckpoint):
        load_snapshot(p)


def test_snapshot_version(tmp_path, g8):
    b = bytearray(snapshot_bytes(g8, random_field_in_H(g8, 0).data))
    b[4] = 9
    p = tmp_path / "v.pesf"
    p.write_bytes(bytes(b))
    with pytest.raises(VersionMismatch):
        load_snapshot(p)


def test_rng_round_trip():
    r = np.random.default_rng(123)
    r.standard_normal(7)
    r.integers(0, 10, size=3, dtype=np.uint32)
    s, _ = rng_unpack(rng_pack(r))
    assert np.array_equal(r.standard_normal(50), s.standard_normal(50))


def test_rng_rejects_other_generators():
    with pytest.raises(ValueError):
        rng_pack(np.random.Generator(np.random.MT19937(0)))


def _ck(g8):
    states = [random_field_in_H(g8, s).data for s in range(2)]
    rngs = [np.random.default_rng(s) for s in range(2)]
    aux = {"x": np.arange(4.0), "flag": np.array([True, False])}
    return states, rngs, aux


def test_checkpoint_round_trip(tmp_path, g8):
    states, rngs, aux = _ck(g8)
    p = tmp_path / "c.peck"
    checkpoint_save(p, g8, 17, states, rngs, aux, config_digest("abc"))
    ck = checkpoint_load(p)
    assert ck["step"] == 17 and ck["grid"] == g8 and ck["digest"] == config_digest("abc")
    assert all(np.array_equal(a, b) for a, b in zip(states, ck["states"]))
    assert np.array_equal(ck["aux"]["x"], aux["x"])
    for r0, r1 in zip(rngs, ck["rngs"]):
        assert np.array_equal(r0.standard_normal(5), r1.standard_normal(5))


def test_checkpoint_corruption(g8):
    states, rngs, aux = _ck(g8)
    buf = checkpoint_bytes(g8, 1, states, rngs, aux, config_digest(""))
    with pytest.raises(CorruptCheckpoint):
        checkpoint_parse(buf[: len(buf) // 2])
    with pytest.raises(CorruptCheckpoint):
        checkpoint_parse(buf[:10])
    flipped = bytearray(buf)
    flipped[200] ^= 1
    with pytest.raises(CorruptCheckpoint):
        checkpoint_parse(bytes(flipped))
    with pytest.raises(CorruptCheckpoint):
        checkpoint_parse(b"XXXX" + buf[4:])
