import json
import math

import numpy as np
import pytest

from pshenvelope.capacity import ball_capacity, capacity, closed_ball_set, relative_extremal
from pshenvelope.domain import ball
from pshenvelope.errors import DegenerateFit, EmptyInner, EmptyInterior, EmptySet, NonNested
from pshenvelope.experiments import (
    ExperimentReport,
    capacity_inequality_check,
    continuity_modulus,
    exhaustion_study,
    lipschitz_constant,
    loglog_slope,
    ma_bound_check,
    shrink_comparison,
    stability_study,
)
from pshenvelope.grid import GridSet, build_grid, sample, sup_diff


def test_ball_capacity_formula():
    assert ball_capacity(0.5, 1) == pytest.approx(2 * math.pi / math.log(2))
    assert ball_capacity(0.5, 2) == pytest.approx((2 * math.pi / math.log(2)) ** 2)
    assert ball_capacity(0.5, 2) == pytest.approx(82.17, abs=0.01)


def test_extremal_of_whole_interior(disc16):
    res = relative_extremal(GridSet.all_interior(disc16))
    assert np.all(res.P.values[disc16.interior] == -1.0)


def test_extremal_range_and_value_on_set(disc16):
    E = closed_ball_set(disc16, 0.5)
    P = relative_extremal(E).P
    vals = P.values[disc16.interior]
    assert vals.min() >= -1 - 1e-12 and vals.max() <= 1e-12
    assert np.all(P.values[E.mask] == -1.0)


def test_extremal_of_closed_half_disc_matches_formula():
    g = build_grid(ball(radius=1.0), 1 / 64)
    P = relative_extremal(closed_ball_set(g, 0.5)).P
    exact = sample("max(-1, log(abs(z) + 1e-300) / log(2))", g)
    assert sup_diff(P, exact) <= 0.05


def test_extremal_of_center_node_is_logarithmic():
    g = build_grid(ball(radius=1.0), 1 / 64)
    E = GridSet.from_predicate(g, lambda x: np.hypot(x[:, 0], x[:, 1]) < 1e-9)
    P = relative_extremal(E).P
    flat = g.interior_flat
    r = np.hypot(*g.coords(flat).T)
    sel = (r > 0.2) & (r < 0.8)
    # h_E = log r / log(1/r_eff): fit the slope a = 1/log(1/r_eff) by least squares
    lr = np.log(r[sel])
    a = float(np.dot(lr, P.flat[flat][sel]) / np.dot(lr, lr))
    r_eff = math.exp(-1 / a)
    assert r_eff < 4 * g.h
    k = g.flat_index((0.5, 0.0))
    assert abs(P.flat[k] - math.log(0.5) / math.log(1 / r_eff)) <= 0.1


def test_capacity_disc_within_ten_percent():
    g = build_grid(ball(radius=1.0), 1 / 64)
    cap = capacity(closed_ball_set(g, 0.5))
    assert abs(cap / ball_capacity(0.5, 1) - 1) <= 0.10


def test_capacity_monotone_in_set_and_domain():
    g = build_grid(ball(radius=1.0), 1 / 32)
    small, big = capacity(closed_ball_set(g, 0.3)), capacity(closed_ball_set(g, 0.5))
    assert small <= big + 1e-6
    g2 = build_grid(ball(radius=0.8), 1 / 32)
    assert capacity(closed_ball_set(g, 0.3)) <= capacity(closed_ball_set(g2, 0.3)) + 1e-6


def test_empty_set_raises(disc16):
    with pytest.raises(EmptySet):
        capacity(GridSet(disc16, np.zeros(disc16.shape, bool)))


def test_stability_examples(disc16):
    u = sample(0, disc16)
    rep = stability_study(u, 4.0, [4.5, 5.0, 6.0, 4.0])
    assert rep.passed
    rows = {r["perturbation"]: r for r in rep.table}
    assert rows["4.0"]["lp_distance"] == 0
    for t in (0.5, 1.0, 2.0):
        assert rows[repr(4.0 + t)]["sup_gap"] == pytest.approx(t / 4, abs=2 * disc16.h)
    with pytest.raises(DegenerateFit):
        stability_study(u, 4.0, [4.0, 5.0])


def test_capacity_inequality_trivial_cases(disc16):
    u = sample("re(z)", disc16)
    W = ball(radius=0.5)
    rep = capacity_inequality_check(u, u, W, 0.1)
    assert rep.measured["L"] == 0 and rep.measured["R"] == 0 and rep.passed
    # a uniform shift c moves the envelope by c, so {|dP| >= M eps} is empty only for eps > 1
    rep = capacity_inequality_check(u + 0.05, u, W, 2.0)
    assert rep.measured["L"] == 0 and rep.measured["R"] == 0 and rep.passed
    rep = capacity_inequality_check(u + 0.05, u, W, 0.1)
    assert rep.measured["R"] == 0 and rep.measured["L"] > 0 and not rep.passed
    with pytest.raises(EmptyInner):
        capacity_inequality_check(u, u, ball((0.03, 0.03), 0.01), 0.1)


def test_shrink_examples():
    rep = shrink_comparison("abs(z)**2 - 1", 0.0, ball(radius=1.0), [1 / 8, 1 / 16], 1 / 32)
    assert max(abs(r["C"]) for r in rep.table) <= 1e-5 and rep.passed
    with pytest.raises(EmptyInterior):
        shrink_comparison(0, 4.0, ball(radius=1.0), [1.0], 1 / 16)


def test_continuity_examples(disc16):
    assert lipschitz_constant(sample("abs(z)**2 - 1", disc16)) == pytest.approx(2.0, rel=0.1)
    assert lipschitz_constant(sample(3, disc16)) == 0
    rep = continuity_modulus([sample("abs(z)**2 - 1", build_grid(ball(), h)) for h in (1 / 8, 1 / 16)],
                             reference=2.0, ref_tol=0.2)
    assert rep.passed


def test_exhaustion_examples():
    spec = ball(radius=1.0)
    rep = exhaustion_study(0, 4.0, spec, [spec, spec], 1 / 16)
    assert all(r["gap"] <= 2 * 1e-8 for r in rep.table)
    with pytest.raises(NonNested):
        exhaustion_study(0, 4.0, spec, [ball(radius=0.75), ball(radius=0.5)], 1 / 16)


def test_ma_bound_trivial(disc16):
    rep = ma_bound_check(sample(0, disc16), 0.0, 0.0, j_schedule=[1, 2])
    assert rep.passed
    assert rep.measured["cross_method_gap"] == 0


def test_loglog_slope():
    x = np.array([1.0, 2.0, 4.0])
    assert loglog_slope(x, 3 * x ** 0.5) == pytest.approx(0.5)


def test_report_serialises(tmp_path):
    rep = ExperimentReport("demo", {"h": np.float64(0.5)}, {"x": np.int64(3)}, True, {}, 0.1,
                           [{"a": 1}, {"a": 2, "b": 3}])
    d = json.loads(rep.to_json())
    assert d["measured"]["x"] == 3
    rep.write_csv(tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines() == ["a,b", "1,", "2,3"]
    assert rep.summary().startswith("PASS demo")
