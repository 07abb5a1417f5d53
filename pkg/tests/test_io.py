import numpy as np
import pytest
from hypothesis import given, strategies as st

from feplab import io
from feplab.core import GaussianDensity, GridAxis, GridDensity
from feplab.helmholtz import decompose_linear
from feplab.presets import preset_system
from feplab.sde import IntegratorConfig, integrate_em


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_fmt_roundtrips_exactly(v):
    assert float(io.fmt(v)) == v


def test_trajectory_roundtrip():
    traj = integrate_em(preset_system("rotation-2d"), [1.0, 0.0], IntegratorConfig(1e-2, 50, seed=3))
    text = io.trajectory_to_csv(traj)
    assert text.startswith("t,x0,x1\r\n")
    back = io.trajectory_from_csv(text)
    np.testing.assert_array_equal(back.states, traj.states)
    np.testing.assert_array_equal(back.times, traj.times)
    assert len(io.trajectory_to_csv(traj, every=10).splitlines()) == 1 + 6


def test_quantities_roundtrip_and_duplicates():
    text = io.quantities_to_csv([("a", 1.0), ("b", 1 / 3)])
    assert io.quantities_from_csv(text) == {"a": 1.0, "b": 1 / 3}
    with pytest.raises(ValueError):
        io.quantities_from_csv("quantity,value\r\na,1\r\na,2\r\n")
    with pytest.raises(ValueError):
        io.quantities_from_csv("name,value\r\na,1\r\n")


def test_grid_roundtrip():
    axes = (GridAxis(-5, 5, 0.25), GridAxis(-4, 4, 0.25))
    g = GridDensity.from_gaussian(GaussianDensity(np.zeros(2), np.diag([1.0, 0.5])), axes, normalize=True)
    back = io.grid_from_csv(io.grid_to_csv(g))
    np.testing.assert_array_equal(back.values, g.values)
    assert [a.count for a in back.axes] == [a.count for a in g.axes]


def test_decomposition_roundtrip():
    d = decompose_linear(preset_system("blanket-4d-coupled"))
    back = io.decomposition_from_csv(io.decomposition_to_csv(d))
    np.testing.assert_array_equal(back.q, d.q)
    np.testing.assert_array_equal(back.gamma, d.gamma)
    np.testing.assert_array_equal(back.density.covariance, d.density.covariance)


def test_kl_curve_csv():
    text = io.kl_curve_to_csv([[0.5, 0.1], [1.0, 0.01]])
    assert text == "t,kl\r\n0.5,0.10000000000000001\r\n1,0.01\r\n"
