import numpy as np
import pytest

from pshenvelope import kernels
from pshenvelope.envelope import envelope_berman, envelope_obstacle
from pshenvelope.grid import sample
from pshenvelope.solver import DensityField, RHSSpec, local_solve

pytestmark = pytest.mark.skipif("compiled" not in kernels.available_backends(),
                                reason="compiled extension not built")


def test_backend_selection():
    assert kernels.get_backend("python").__name__.endswith("_reference")
    assert kernels.get_backend("compiled").__name__.endswith("_sweep")
    with pytest.raises(ValueError):
        kernels.get_backend("gpu")


@pytest.mark.parametrize("mode", ["seq", "redblack"])
def test_obstacle_envelopes_agree(disc16, ball2_4, mode):
    for grid, u, f in ((disc16, "min(abs(z - 0.3)**2, abs(z + 0.3)**2)", 1.0),
                       (ball2_4, "abs(z1)**2 - abs(z2)**2", 8.0)):
        obst = sample(u, grid)
        a = envelope_obstacle(obst, f, mode=mode, backend="compiled")
        b = envelope_obstacle(obst, f, mode=mode, backend="python")
        assert a.report.iterations == b.report.iterations
        assert np.max(np.abs(a.P.values - b.P.values)[grid.active]) <= 1e-13


def test_penalised_envelopes_agree(disc16):
    u = sample("max(re(z), 0)", disc16)
    g = DensityField.constant(2.0, disc16)
    a = envelope_berman(u, 1.0, g, j_schedule=[1, 8, 64], backend="compiled", subsolution="declared")
    b = envelope_berman(u, 1.0, g, j_schedule=[1, 8, 64], backend="python", subsolution="declared")
    assert np.max(np.abs(a.P.values - b.P.values)[disc16.active]) <= 1e-12


def test_local_solves_agree(ball2_4, rng):
    vals = sample("abs(z1)**2 + abs(z2)**2", ball2_4).values + 0.01 * rng.standard_normal(ball2_4.shape)
    u = sample(0, ball2_4).with_values(vals)
    rhs = RHSSpec.penalty(DensityField.constant(4.0, ball2_4), DensityField.constant(32.0, ball2_4), u, 5.0)
    for node in [(0, 0, 0, 0), (0.25, 0, -0.25, 0.25)]:
        a = local_solve(u, node, rhs, backend="compiled")
        b = local_solve(u, node, rhs, backend="python")
        assert a == pytest.approx(b, abs=1e-12)
