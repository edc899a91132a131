import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from pshenvelope.domain import ball
from pshenvelope.envelope import envelope_obstacle
from pshenvelope.grid import GridFunction, build_grid, read_function, sample, translate_function, write_function
from pshenvelope.ma import ma_density
from pshenvelope.solver import DensityField, RHSSpec, solve_dirichlet

G1 = build_grid(ball(radius=1.0, n=1), 1 / 8)
G2 = build_grid(ball(radius=1.0, n=2), 1 / 3)

settings.register_profile("pkg", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.function_scoped_fixture])
settings.load_profile("pkg")

seeds = st.integers(0, 2**32 - 1)


def random_function(grid, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    return GridFunction(grid, scale * rng.standard_normal(grid.shape))


def inner(u):
    return u.values[u.grid.interior]


@given(seed=seeds, bump=st.floats(0.01, 2.0), which=st.sampled_from([G1, G2]))
def test_density_monotone_in_neighbours_and_centre(seed, bump, which):
    u = random_function(which, seed) + sample("abs(z)**2" if which.n == 1 else "abs(z1)**2 + abs(z2)**2", which)
    rng = np.random.default_rng(seed + 1)
    k = int(rng.choice(which.interior_flat))
    base = ma_density(u).flat
    up = u.flat.copy()
    up[k] += bump
    after = ma_density(u.with_values(up)).flat
    # raising u at k lowers the density at k and cannot lower it elsewhere
    assert after[k] <= base[k] + 1e-9
    others = np.setdiff1d(which.interior_flat, [k])
    assert np.all(after[others] >= base[others] - 1e-9)


@given(seed=seeds, a=st.lists(st.floats(-3, 3), min_size=5, max_size=5), which=st.sampled_from([G1, G2]))
def test_density_affine_invariant(seed, a, which):
    u = random_function(which, seed)
    coords = which.coords(np.arange(which.size))
    aff = coords @ np.asarray(a[: 2 * which.n]) + a[4]
    v = u + GridFunction(which, aff.reshape(which.shape))
    assert np.allclose(inner(ma_density(v)), inner(ma_density(u)), atol=1e-8)


@given(seed=seeds, c=st.floats(0.0, 5.0), which=st.sampled_from([G1, G2]))
def test_density_scaling(seed, c, which):
    u = random_function(which, seed)
    lhs = inner(ma_density(u * c))
    rhs = c ** which.n * inner(ma_density(u))
    assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-8)


@given(seed=seeds, which=st.sampled_from([G1, G2]))
def test_function_file_round_trip(tmp_path_factory, seed, which):
    u = random_function(which, seed)
    path = tmp_path_factory.mktemp("rt") / "u.pshg"
    write_function(path, u)
    v = read_function(path)
    assert v.grid.same_as(which)
    assert v.values.tobytes() == u.values.tobytes()


@given(seed=seeds, sx=st.integers(-5, 5), sy=st.integers(-5, 5))
def test_translate_inverse(seed, sx, sy):
    u = random_function(G1, seed)
    a = (sx * G1.h, sy * G1.h)
    back = translate_function(translate_function(u, a), (-a[0], -a[1]))
    assert back.grid.same_as(G1) and back.values.tobytes() == u.values.tobytes()


@given(seed=seeds, f1=st.floats(0.0, 8.0), df=st.floats(0.0, 4.0), dphi=st.floats(0.0, 1.0))
def test_dirichlet_comparison(seed, f1, df, dphi):
    phi = random_function(G1, seed, 0.3)
    rhs_big = RHSSpec(DensityField.constant(f1 + df, G1))
    rhs_small = RHSSpec(DensityField.constant(f1, G1))
    lo, _ = solve_dirichlet(rhs_big, phi)
    hi, _ = solve_dirichlet(rhs_small, phi + dphi)
    assert np.all(inner(lo) <= inner(hi) + 2e-8)


@given(seed=seeds, lift=st.floats(0.0, 0.5), f=st.floats(0.0, 6.0), df=st.floats(0.0, 3.0))
def test_envelope_monotone_in_obstacle_and_antitone_in_density(seed, lift, f, df):
    u = random_function(G1, seed, 0.2)
    base = inner(envelope_obstacle(u, f).P)
    assert np.all(base <= inner(envelope_obstacle(u + lift, f).P) + 2e-8)
    assert np.all(inner(envelope_obstacle(u, f + df).P) <= base + 2e-8)
    assert np.all(base <= inner(u) + 2e-8)
