import numpy as np
import pytest

from kahlerkit.manifold.container import ContainerError, read_field, read_meta, write_field
from kahlerkit.manifold.grids import ChartGrid, TorusGrid


@pytest.mark.parametrize("dtype,tol", [("complex64", 1e-6), ("complex128", 0.0)])
def test_round_trip(tmp_path, rng, dtype, tol):
    grid = TorusGrid(2, 8)
    v = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    p = write_field(tmp_path / "f.kkf", v, grid.spec(), "phi", dtype=dtype, extra={"t": "0.1"})
    back, header = read_field(p)
    assert back.shape == grid.shape
    assert np.max(np.abs(back - v)) <= tol
    assert header["manifold"] == "torus" and header["name"] == "phi" and header["t"] == "0.1"
    meta = read_meta(tmp_path / "f.kkf.meta")
    assert int(meta["bytes"]) == v.size * (8 if dtype == "complex64" else 16)


def test_chart_grid_spec(tmp_path):
    grid = ChartGrid(8, 16)
    p = write_field(tmp_path / "c.kkf", np.ones(grid.shape), grid.spec(), "u")
    _, header = read_field(p)
    assert header["n_theta"] == "8" and header["grid"] == "8,16"


def test_bad_magic(tmp_path):
    p = tmp_path / "bad.kkf"
    p.write_bytes(b"NOTAFIELD" + b"\0" * 20)
    with pytest.raises(ContainerError):
        read_field(p)


def test_truncated_payload(tmp_path):
    grid = TorusGrid(1, 8)
    p = write_field(tmp_path / "f.kkf", np.ones(grid.shape), grid.spec(), "u")
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(ContainerError):
        read_field(p)


def test_unknown_dtype(tmp_path):
    with pytest.raises(ContainerError):
        write_field(tmp_path / "f.kkf", np.ones(4), {"manifold": "torus", "m": 1}, "u", dtype="float16")
