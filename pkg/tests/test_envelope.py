import warnings

import numpy as np
import pytest

from pshenvelope.domain import ball
from pshenvelope.errors import OffsetLeavesDomain
from pshenvelope.envelope import (
    SubsolutionCheckFailed,
    berman_monotonicity,
    default_schedule,
    envelope_berman,
    envelope_idempotence_check,
    envelope_obstacle,
    inf_convolution,
    subsolution_defect,
    tolerances,
)
from pshenvelope.grid import build_grid, sample, sup_diff
from pshenvelope.ma import ma_density
from pshenvelope.solver import DensityField


def test_zero_obstacle_zero_density(disc16):
    res = envelope_obstacle(sample(0, disc16), 0.0)
    assert np.all(res.P.values[disc16.active] == 0)
    assert len(res.contact) == disc16.num_interior


def test_psh_obstacle_is_its_own_envelope(disc16):
    u = sample("abs(z)**2 - 1", disc16)
    res = envelope_obstacle(u, 0.0)
    assert sup_diff(res.P, u) <= res.tol


def test_disc_benchmark_and_constraints(disc):
    g = build_grid(disc, 1 / 16)
    u = sample(0, g)
    f = DensityField.constant(4, g)
    res = envelope_obstacle(u, f)
    assert sup_diff(res.P, sample("abs(z)**2 - 1", g)) <= 2 * g.h
    chk = res.check_constraints(u, f)
    assert chk["ok"], chk
    assert res.report.converged


def test_ball_c2_benchmark(ball2_4):
    res = envelope_obstacle(sample(0, ball2_4), 32.0)
    assert sup_diff(res.P, sample("abs(z1)**2 + abs(z2)**2 - 1", ball2_4)) <= 3 * ball2_4.h


def test_tolerance_rule(disc16):
    c, m, p = tolerances(disc16, 1e-8)
    assert c == pytest.approx(1e-7)
    assert m == p == pytest.approx(max(1e-6, 1e-7 / disc16.h ** 2))


def test_maximality_restart_agrees(disc16):
    res = envelope_obstacle(sample("min(abs(z - 0.3)**2, abs(z + 0.3)**2)", disc16), 1.0, check_maximality=True)
    assert res.report.extra["maximality_ok"]


def test_obstacle_and_density_monotonicity(disc16):
    u1 = sample("re(z)**2 - 0.2", disc16)
    u2 = sample("re(z)**2", disc16)
    m = disc16.interior
    a = envelope_obstacle(u1, 2.0).P.values[m]
    b = envelope_obstacle(u2, 2.0).P.values[m]
    c = envelope_obstacle(u2, 5.0).P.values[m]
    assert np.all(a <= b + 2e-8)
    assert np.all(c <= b + 2e-8)


def test_berman_disc_benchmark(disc16):
    u = sample(0, disc16)
    ref = envelope_obstacle(u, 4.0).P
    res = envelope_berman(u, 4.0, 0.0, j_schedule=[1, 4, 16], reference=ref)
    assert sup_diff(res.P, ref) <= 1e-6
    assert [r["j"] for r in res.trace] == [1, 4, 16]
    assert res.report.extra["subsolution_ok"]


def test_berman_trace_is_monotone(disc16):
    u = sample("max(re(z), 0)", disc16)
    g = DensityField(disc16, np.nan_to_num(ma_density(u).values))
    res = envelope_berman(u, 1.0, g, j_schedule=default_schedule(6))
    mono = berman_monotonicity(res.trace, res.tol)
    assert mono["increasing_ok"] and mono["below_obstacle_ok"], mono


def test_subsolution_warning(disc16):
    u = sample("abs(z)**2", disc16)
    assert subsolution_defect(u, DensityField.zero(disc16)) == pytest.approx(4.0)
    with pytest.warns(SubsolutionCheckFailed):
        envelope_berman(u, 0.0, 0.0, j_schedule=[1])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        envelope_berman(u, 0.0, 0.0, j_schedule=[1], subsolution="declared")


def test_inf_convolution_examples(disc16):
    c = inf_convolution(sample(0.7, disc16), 3.0, 0.2)
    assert np.allclose(c.values[c.grid.interior], 0.7)
    u = sample("re(z) + 0.5 * im(z)", disc16)
    lip = np.hypot(1, 0.5)
    um = inf_convolution(u, 1.2 * lip, 0.2)
    ref = sample("re(z) + 0.5 * im(z)", um.grid)
    assert sup_diff(um, ref) < 1e-14
    # smaller slope pulls the value down
    low = inf_convolution(u, 0.0, 0.2)
    assert np.all(low.values[low.grid.interior] <= ref.values[low.grid.interior])
    with pytest.raises(OffsetLeavesDomain):
        inf_convolution(u, 1.0, 3.0)


def test_idempotence_examples(disc16):
    psh = envelope_idempotence_check(sample("abs(z)**2 - 1", disc16), 0.0)
    assert psh.sup_diff <= 2 * psh.tol
    zero = envelope_idempotence_check(sample(0, disc16), 4.0)
    assert zero.sup_diff <= 2 * zero.tol
    well = envelope_idempotence_check(sample("min(abs(z - 0.3)**2, abs(z + 0.3)**2)", disc16), 1.0)
    assert well.ok


def test_modes_bit_identical():
    g = build_grid(ball(radius=1.0, n=1), 1 / 16)
    u = sample("min(abs(z - 0.3)**2, abs(z + 0.3)**2)", g)
    a = envelope_obstacle(u, 1.0, mode="seq").P
    b = envelope_obstacle(u, 1.0, mode="redblack").P
    assert a.values.tobytes() == b.values.tobytes()
