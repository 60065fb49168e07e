import io

import numpy as np
import pytest

from fracrate.errors import InvalidInputError
from fracrate.gridpath import GridPath, l2_norm, trapezoid_weights


def test_invariants():
    with pytest.raises(InvalidInputError):
        GridPath(0.0, 0.0, [1.0, 2.0])
    with pytest.raises(InvalidInputError):
        GridPath(0.0, -0.1, [1.0, 2.0])
    with pytest.raises(InvalidInputError):
        GridPath(0.0, 0.1, np.zeros((0, 1)))
    p = GridPath(0.5, 0.25, [[1.0, 2.0], [3.0, 4.0]])
    assert p.n == 2 and p.dim == 2
    assert np.allclose(p.times(), [0.5, 0.75])


def test_grid_times_exact():
    p = GridPath(0.0, 0.1, np.zeros(11))
    t = p.times()
    assert t[0] == 0.0
    assert np.allclose(t, 0.1 * np.arange(11))


def test_csv_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(3)
    vals = rng.standard_normal((17, 3)) * np.pi
    p = GridPath(0.25, 1.0 / 3.0, vals)
    path = tmp_path / "p.csv"
    p.to_csv(str(path))
    q = GridPath.from_csv(str(path))
    assert q.values.shape == p.values.shape
    assert np.array_equal(q.values, p.values)
    assert q.t0 == p.t0
    assert abs(q.dt - p.dt) < 1e-15
    # value columns are byte-stable across round trips
    buf1, buf2 = io.StringIO(), io.StringIO()
    p.to_csv(buf1)
    q.to_csv(buf2)
    cols1 = [line.split(",")[1:] for line in buf1.getvalue().splitlines()]
    cols2 = [line.split(",")[1:] for line in buf2.getvalue().splitlines()]
    assert cols1 == cols2


def test_csv_rejects_nonuniform(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t,v0\n0.0,1.0\n0.1,2.0\n0.3,3.0\n")
    with pytest.raises(InvalidInputError):
        GridPath.from_csv(str(path))


def test_derivative_convention():
    dt = 0.01
    t = dt * np.arange(101)
    p = GridPath(0.0, dt, t**3)
    d = p.derivative()[:, 0]
    # second-order interior and one-sided ends
    assert abs(d[50] - 3 * t[50] ** 2) < 2e-4
    assert abs(d[-1] - 3 * t[-1] ** 2) < 1e-3
    assert abs(d[0]) < 1e-3


def test_quadrature_helpers():
    w = trapezoid_weights(5, 0.25)
    assert w[0] == w[-1] == 0.125
    assert np.isclose(w.sum(), 1.0)
    dt = 0.001
    vals = np.sin(dt * np.arange(1001))
    # L2 norm of sin on [0,1]
    exact = np.sqrt(0.5 - np.sin(2.0) / 4.0)
    assert abs(l2_norm(vals, dt) - exact) < 1e-6
