import numpy as np
import pytest

from pshenvelope.errors import StencilError
from pshenvelope.grid import GridSet, sample
from pshenvelope.ma import is_discretely_psh, line_laplacian, ma_density, ma_integral, normalization
from pshenvelope.stencil import StencilSet


def interior(u):
    return u.values[u.grid.interior]


def test_normalization_constants():
    assert normalization(1) == 4
    assert normalization(2) == 32


def test_line_laplacian_examples(disc16, ball2_4):
    u = sample("abs(z)**2", disc16)
    assert line_laplacian(u, (0.25, 0.5), 1) == pytest.approx(4.0)
    q = sample("abs(z1)**2 + abs(z2)**2", ball2_4)
    assert line_laplacian(q, (0.25, 0, 0, 0), (1, 0)) == pytest.approx(4.0)
    assert line_laplacian(q, (0, 0, 0, 0), (1, 1j)) == pytest.approx(4.0)
    lin = sample("re(z1)", ball2_4)
    for xi in [(1, 0), (1, -1), (1, 1j)]:
        assert line_laplacian(lin, (0.25, 0.25, 0, 0), xi) == pytest.approx(0.0, abs=1e-12)
    degenerate = sample("abs(z1)**2", ball2_4)
    assert line_laplacian(degenerate, (0, 0, 0, 0), (0, 1)) == pytest.approx(0.0, abs=1e-12)


def test_ma_density_examples(disc16, ball2_4):
    assert np.allclose(interior(ma_density(sample("abs(z)**2", disc16))), 4.0)
    assert np.allclose(interior(ma_density(sample("abs(z1)**2 + abs(z2)**2", ball2_4))), 32.0)
    assert np.allclose(interior(ma_density(sample("abs(z1)**2", ball2_4))), 0.0, atol=1e-10)


def test_exact_on_rotated_quadratic(ball2_4):
    # eigen-directions (1,1) and (1,-1) with eigenvalues 3 and 1: det = 3
    q = sample("2 * abs(z1)**2 + 2 * abs(z2)**2 + 2 * re(z1 * conj(z2))", ball2_4)
    assert np.allclose(interior(ma_density(q)), 32 * 3.0)


def test_psh_examples(disc16, ball2_4):
    assert is_discretely_psh(sample("abs(z)**2", disc16), 0.0)
    rep = is_discretely_psh(sample("-abs(z)**2", disc16), 0.0)
    assert not rep.psh and rep.worst_value == pytest.approx(-4.0)
    assert is_discretely_psh(sample("re(z1)", ball2_4), 1e-12)


def test_ma_integral_examples(disc16, ball2_4):
    g = disc16
    u = sample("abs(z)**2", g)
    assert ma_integral(u) == pytest.approx(4 * g.num_interior * g.h ** 2)
    assert ma_integral(sample("3 * re(z) - im(z) + 1", g)) == pytest.approx(0.0, abs=1e-9)
    half = GridSet.from_predicate(g, "re(z)")
    assert ma_integral(u, half) == pytest.approx(4 * len(half) * g.h ** 2)


def test_affine_invariance_and_scaling(ball2_4):
    u = sample(lambda x: np.sin(3 * x[:, 0]) + x[:, 1] ** 2 + np.cos(x[:, 2] * x[:, 3]), ball2_4)
    base = interior(ma_density(u))
    shifted = interior(ma_density(u + sample("2 * re(z1) - 3 * im(z2) + 0.5", ball2_4)))
    assert np.allclose(shifted, base, atol=1e-9)
    assert np.allclose(interior(ma_density(u * 3.0)), 9.0 * base, rtol=1e-12, atol=1e-9)


def test_stencil_validation():
    with pytest.raises(StencilError, match="frame 0"):
        StencilSet.from_frames(2, [((1, 0), (1, 1))])
    with pytest.raises(StencilError):
        StencilSet.from_config(1, {"frames": [[[[1, 0], [0, 0]], [[0, 0], [1, 0]]]]})
    s = StencilSet.from_config(2, {"extra_frames": [[[[2, 0], [1, 0]], [[1, 0], [-2, 0]]]]})
    assert len(s.frames) == 4
    assert StencilSet.from_config(2, s.to_config()) == s
