import itertools

import numpy as np
import pytest

from pshenvelope.domain import ball, box, from_dict, polydisc, shrink_domain, sublevel, translate_spec
from pshenvelope.errors import EmptyInterior, EmptyRegion, EvaluationError, NonLatticeOffset
from pshenvelope.grid import (
    BAND,
    INTERIOR,
    GridFunction,
    GridSet,
    build_grid,
    read_function,
    read_grid,
    sample,
    sup_diff,
    translate_function,
    write_function,
    write_grid,
)


def test_disc_h_half_has_nine_interior_nodes(disc):
    g = build_grid(disc, 0.5)
    pts = [p for p in itertools.product([-1, -0.5, 0, 0.5, 1], repeat=2) if p[0] ** 2 + p[1] ** 2 < 1]
    assert len(pts) == 9
    assert g.num_interior == 9
    got = sorted(map(tuple, g.coords(g.interior_flat)))
    assert got == sorted(pts)


def test_coarse_disc_keeps_only_origin(disc):
    g = build_grid(disc, 2.0)
    assert g.num_interior == 1
    assert tuple(g.coords(g.interior_flat)[0]) == (0.0, 0.0)


def test_ball_in_c2_matches_enumeration():
    g = build_grid(ball(radius=1.0, n=2), 0.5)
    vals = [-1, -0.5, 0, 0.5, 1]
    want = sum(1 for p in itertools.product(vals, repeat=4) if sum(x * x for x in p) < 1)
    assert g.num_interior == want


def test_band_covers_stencil_neighbours(disc16, ball2_4):
    for g in (disc16, ball2_4):
        lab = g.labels.reshape(-1)
        for k in g.interior_flat:
            for off in g.direction_offsets.reshape(-1):
                assert lab[k + off] in (BAND, INTERIOR)


def test_build_grid_is_deterministic(disc):
    a, b = build_grid(disc, 1 / 8), build_grid(disc, 1 / 8)
    assert a.labels.tobytes() == b.labels.tobytes()
    assert np.array_equal(a.lo, b.lo)


def test_sample_examples(disc):
    g = build_grid(disc, 0.5)
    zero = sample(0, g)
    assert np.all(zero.values[g.active] == 0)
    q = sample("abs(z)**2", g)
    assert q.at((0.5, 0.0)) == pytest.approx(0.25)
    with pytest.raises(EvaluationError):
        sample("log(abs(z))", g)


def test_shrink_examples():
    s = shrink_domain(ball(radius=1.0), 0.25)
    assert s.kind == "ball" and s.radii == (0.75,)
    with pytest.raises(EmptyInterior):
        shrink_domain(ball(radius=1.0), 1.5)
    b = shrink_domain(box([-1, -1], [1, 1]), 0.5)
    assert b.lo == (-0.5, -0.5) and b.hi == (0.5, 0.5)


def test_shrink_is_monotone_on_sublevel_domain():
    spec = sublevel("abs(z)**2 + 0.5 * re(z)**2 - 1", ([-1.2, -1.2], [1.2, 1.2]))
    a = build_grid(shrink_domain(spec, 1 / 16), 1 / 32)
    b = build_grid(shrink_domain(spec, 1 / 8), 1 / 32)
    inner_b = GridSet(b, b.interior).transfer(a)
    assert len(inner_b) == b.num_interior


def test_translate_examples(disc):
    t = translate_spec(disc, (1, 0))
    assert t.center == (1.0, 0.0) and t.radii == (1.0,)
    g = build_grid(disc, 0.25)
    u = sample("abs(z)**2", g)
    v = translate_function(u, (0.5, 0.0))
    w = sample("abs(z - 0.5)**2", v.grid)
    assert sup_diff(v, w) < 1e-14
    with pytest.raises(NonLatticeOffset):
        translate_function(u, (0.125, 0.0))


def test_translate_round_trip(disc16):
    u = sample("re(z) * im(z)", disc16)
    back = translate_function(translate_function(u, (0.25, -0.5)), (-0.25, 0.5))
    assert back.grid.same_as(u.grid)
    assert np.array_equal(back.values, u.values, equal_nan=True)


def test_sup_diff_examples(disc):
    g = build_grid(disc, 0.5)
    u = sample(0, g)
    v = sample("abs(z)**2", g)
    assert sup_diff(v, v) == 0
    assert sup_diff(u, v) == pytest.approx(0.5)
    with pytest.raises(EmptyRegion):
        sup_diff(u, v, GridSet(g, np.zeros(g.shape, bool)))


def test_file_round_trip(tmp_path, ball2_4):
    u = sample("exp(-abs(z1)**2) + im(z2)", ball2_4)
    write_grid(tmp_path / "g.pshg", ball2_4)
    write_function(tmp_path / "u.pshg", u)
    g2 = read_grid(tmp_path / "g.pshg")
    assert g2.labels.tobytes() == ball2_4.labels.tobytes()
    u2 = read_function(tmp_path / "u.pshg")
    assert u2.values.tobytes() == u.values.tobytes()


def test_file_header_layout(tmp_path, disc):
    g = build_grid(disc, 0.5)
    write_function(tmp_path / "u.pshg", sample(1, g))
    buf = (tmp_path / "u.pshg").read_bytes()
    assert buf[:4] == b"PSHG"
    assert np.frombuffer(buf, "<u4", 2, 4).tolist() == [1, 1]
    count = int(np.prod(g.shape))
    assert len(buf) == 4 + 8 + 8 + 8 + 16 + count + 8 * count


def test_domain_dict_round_trip():
    for spec in (ball((0.1, 0.2), 0.9), polydisc(radii=(1.0, 0.5)), box([-1, -2], [1, 2])):
        assert from_dict(spec.to_dict()) == spec


def test_gridfunction_is_immutable(disc16):
    u = sample(0, disc16)
    with pytest.raises(ValueError):
        u.values[0] = 1.0
    assert isinstance(u, GridFunction)
