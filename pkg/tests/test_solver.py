import numpy as np
import pytest

from pshenvelope.domain import ball
from pshenvelope.errors import MaxIterExceeded, NonMonotoneRHS, ValidationError
from pshenvelope.grid import build_grid, sample, sup_diff
from pshenvelope.solver import DensityField, RHSSpec, local_solve, residual, solve_dirichlet


def test_local_solve_examples(disc):
    g = build_grid(disc, 0.5)
    ones = sample(1, g)
    assert local_solve(ones, (0.0, 0.0), RHSSpec(DensityField.zero(g))) == pytest.approx(1.0)
    assert local_solve(ones, (0.0, 0.0), RHSSpec(DensityField.constant(4, g))) == pytest.approx(0.75)


def test_local_solve_quadratic_exact_n2(ball2_4):
    q = sample("abs(z1)**2 + abs(z2)**2 - 1", ball2_4)
    rhs = RHSSpec(DensityField.constant(32, ball2_4))
    for node in [(0, 0, 0, 0), (0.25, -0.25, 0, 0.25), (0, 0, 0.5, 0)]:
        assert local_solve(q, node, rhs) == pytest.approx(q.at(node), abs=1e-12)


def test_local_solve_penalised_matches_constant_when_g_zero(disc16):
    u = sample("abs(z)**2", disc16)
    f = DensityField.constant(2, disc16)
    a = local_solve(u, (0.25, 0.0), RHSSpec(f))
    b = local_solve(u, (0.25, 0.0), RHSSpec.penalty(DensityField.zero(disc16), f, u, 64))
    assert a == pytest.approx(b, abs=1e-9)


def test_disc_benchmark_within_2h(disc):
    for h in (1 / 8, 1 / 16):
        g = build_grid(disc, h)
        w, rep = solve_dirichlet(RHSSpec(DensityField.constant(4, g)), sample(0, g))
        assert sup_diff(w, sample("abs(z)**2 - 1", g)) <= 2 * h
        assert rep.converged and rep.residual <= 1e-8 and rep.update <= 1e-8


def test_affine_reproduced(disc16):
    phi = sample("re(z)", disc16)
    w, rep = solve_dirichlet(RHSSpec(DensityField.zero(disc16)), phi)
    assert sup_diff(w, phi) < 1e-14 and rep.iterations == 1
    # from a zero start the error is the stopping tolerance amplified by the contraction rate
    w, rep = solve_dirichlet(RHSSpec(DensityField.zero(disc16)), phi, init=sample(0, disc16))
    assert sup_diff(w, phi) <= 1e-5


def test_penalised_with_zero_g_reduces_to_f(disc16):
    f = DensityField.constant(4, disc16)
    phi = sample(0, disc16)
    a, _ = solve_dirichlet(RHSSpec(f), phi)
    b, _ = solve_dirichlet(RHSSpec.penalty(DensityField.zero(disc16), f, phi, 16), phi)
    assert sup_diff(a, b) <= 1e-8


def test_residual_examples(disc16):
    rhs = RHSSpec(DensityField.constant(4, disc16))
    exact = sample("abs(z)**2 - 1", disc16)
    r = residual(exact, rhs)
    assert r.sup < 1e-12 and r.density_sup < 1e-9

    w, rep = solve_dirichlet(rhs, sample(0, disc16))
    assert residual(w, rhs).sup <= rep.tol

    k = disc16.flat_index((0.25, 0.0))
    bumped = exact.flat.copy()
    bumped[k] += 1.0
    rb = residual(exact.with_values(bumped), rhs).nodewise
    hot = np.flatnonzero(np.nan_to_num(rb.flat) > 1e-6)
    allowed = {k} | {k + s * o for o in disc16.direction_offsets.reshape(-1) for s in (1, -1)}
    assert k in hot and set(hot.tolist()) <= allowed


def test_seq_and_redblack_agree_bitwise(ball2_4):
    rhs = RHSSpec(DensityField.from_expr("32 * (1 + re(z1))", ball2_4))
    phi = sample("im(z2)", ball2_4)
    a, _ = solve_dirichlet(rhs, phi, mode="seq")
    b, _ = solve_dirichlet(rhs, phi, mode="redblack")
    assert a.values.tobytes() == b.values.tobytes()


def test_max_iter_returns_best_iterate(disc16):
    rhs = RHSSpec(DensityField.constant(4, disc16))
    with pytest.raises(MaxIterExceeded) as info:
        solve_dirichlet(rhs, sample(0, disc16), max_iter=3)
    assert info.value.report.iterations == 3
    w, rep = solve_dirichlet(rhs, sample(0, disc16), max_iter=3, raise_on_fail=False)
    assert not rep.converged and np.all(np.isfinite(w.values[disc16.interior]))


def test_density_validation(disc16):
    with pytest.raises(ValidationError):
        DensityField.from_expr("re(z)", disc16)
    with pytest.raises(NonMonotoneRHS):
        RHSSpec.penalty(DensityField.zero(disc16), DensityField.zero(disc16), sample(0, disc16), -1)
    f = DensityField.constant(2, disc16, p=2)
    assert f.lp_norm() == pytest.approx(2 * (disc16.num_interior * disc16.h ** 2) ** 0.5)


def test_comparison_principle(disc16):
    lo = sample("re(z) - 0.1", disc16)
    hi = sample("re(z) + abs(z)**2", disc16)
    a, _ = solve_dirichlet(RHSSpec(DensityField.constant(6, disc16)), lo)
    b, _ = solve_dirichlet(RHSSpec(DensityField.constant(2, disc16)), hi)
    m = disc16.interior
    assert np.all(a.values[m] <= b.values[m] + 2e-8)


def test_c2_ball_benchmark():
    g = build_grid(ball(radius=1.0, n=2), 1 / 4)
    w, rep = solve_dirichlet(RHSSpec(DensityField.constant(32, g)), sample(0, g))
    assert rep.converged
    assert sup_diff(w, sample("abs(z1)**2 + abs(z2)**2 - 1", g)) <= 3 * g.h
