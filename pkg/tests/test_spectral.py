import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zknf.errors import DecayViolation, DomainError, NearSingular, ParityMismatch, ValidationError
from zknf.profiles import (
    GridSpec1D,
    PowerParams,
    Profile,
    WeightParams,
    critical_speed,
    eval_psi_star,
    eval_soliton_derivatives,
    from_periodic,
)
from zknf.spectral import (
    assemble_Lc,
    derivative_matrices,
    eig_Lc,
    from_parity_coords,
    inner_product,
    lambda_slope,
    parity_block,
    solve_shifted,
    spectral_derivative,
    to_parity_coords,
    transverse_spectrum,
)

CS = critical_speed(2)


@pytest.fixture(scope="module")
def Lstar(grid):
    return assemble_Lc(PowerParams(2, CS), grid)


def test_derivative_matrices_agree_with_fft(grid):
    f = np.exp(-grid.xi[:-1] ** 2 / 8)
    d1, d2 = derivative_matrices(grid)
    assert np.allclose(d1 @ f, spectral_derivative(grid, f, 1), atol=1e-12)
    assert np.allclose(d2 @ f, spectral_derivative(grid, f, 2), atol=1e-12)
    exact = -grid.xi[:-1] / 4 * f
    assert np.max(np.abs(d1 @ f - exact)) < 1e-12


def test_fd4_is_fourth_order():
    errs = []
    for n in (256, 512):
        g = GridSpec1D(20.0, n)
        f = np.exp(-g.xi[:-1] ** 2)
        d1, _ = derivative_matrices(g, "fd4")
        errs.append(np.max(np.abs(d1 @ f + 2 * g.xi[:-1] * f)))
    assert 12 < errs[0] / errs[1] < 20
    with pytest.raises(ValidationError):
        derivative_matrices(GridSpec1D(20.0, 256), "chebyshev")


def test_parity_roundtrip(rng):
    n = 64
    v = rng.standard_normal(n)
    even = 0.5 * (v + v[(n - np.arange(n)) % n])
    z = to_parity_coords(even, "even")
    assert np.allclose(from_parity_coords(z, n, "even"), even)
    a = rng.standard_normal((n, n))
    a = a + a.T
    blk = parity_block(a, "odd")
    assert np.allclose(blk, blk.T)


@given(s1=st.floats(0.5, 3.0), s2=st.floats(0.5, 3.0), x1=st.floats(-5, 5), x2=st.floats(-5, 5))
@settings(max_examples=25, deadline=None)
def test_Lc_self_adjoint(s1, s2, x1, x2):
    g = GridSpec1D.default(2, 512)
    L = assemble_Lc(PowerParams(2, CS), g)
    p = from_periodic(g, np.exp(-((g.xi[:-1] - x1) / s1) ** 2))
    q = from_periodic(g, np.exp(-((g.xi[:-1] - x2) / s2) ** 2))
    lhs = inner_product(L.apply(p), q)
    rhs = inner_product(p, L.apply(q))
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)


def test_lowest_eigenvalues(grid, Lstar):
    rep = eig_Lc(Lstar, m=3)
    vals = np.sort(rep.eigenvalues.real)
    assert vals[0] == pytest.approx(-1.0, abs=1e-6)
    assert abs(vals[1]) < 1e-6
    lowest = rep.eigenfunctions[list(rep.eigenvalues.real).index(vals[0])]
    psi = eval_psi_star(2, grid)
    cosang = inner_product(lowest, psi) / np.sqrt(inner_product(psi, psi))
    assert abs(cosang) == pytest.approx(1.0, abs=1e-8)
    kernel = rep.eigenfunctions[list(rep.eigenvalues.real).index(vals[1])]
    assert kernel.asymmetry(odd=True) < 1e-10


def test_derivative_profiles_are_in_kernel_and_generalized_kernel(grid, Lstar):
    dxi, dc = eval_soliton_derivatives(PowerParams(2, CS), grid)
    assert np.max(np.abs(Lstar.apply(dxi).values)) < 1e-9
    u = np.sqrt(2 * CS) / np.cosh(np.sqrt(CS) * grid.xi)
    assert np.max(np.abs(Lstar.apply(dc).values + u)) < 1e-9


def test_solve_shifted_checks(grid, Lstar):
    psi = eval_psi_star(2, grid)
    # L + 1 annihilates psi*: singular on the even subspace
    with pytest.raises(NearSingular):
        solve_shifted(Lstar, 1.0, psi, parity="even")
    odd = from_periodic(grid, grid.xi[:-1] * psi.periodic)
    with pytest.raises(ParityMismatch):
        solve_shifted(Lstar, 4.0, odd, parity="even")
    w = solve_shifted(Lstar, 4.0, psi, parity="even")
    back = Lstar.apply(w).values + 4.0 * w.values
    assert np.max(np.abs(back - psi.values)) < 1e-9


def test_assemble_requires_decay():
    with pytest.raises(DecayViolation):
        assemble_Lc(PowerParams(2, CS), GridSpec1D(10.0, 256))


def test_inner_product_requires_decay(grid):
    p = Profile(grid, np.ones(grid.num_points + 1))
    with pytest.raises(DecayViolation):
        inner_product(p, p)


def test_transverse_unstable_and_stable():
    unstable = transverse_spectrum(PowerParams(2, 0.4), 1)
    assert unstable.real_pair
    assert unstable.max_real_part == pytest.approx(0.07698, abs=1e-4)
    stable = transverse_spectrum(PowerParams(2, 0.3), 1)
    assert not stable.real_pair
    assert stable.max_abs_real < 1e-4


def test_transverse_weight_independence():
    lams = [transverse_spectrum(PowerParams(2, 0.4), 1, WeightParams(mu)).max_real_part
            for mu in (0.05, 0.1, 0.15)]
    assert max(lams) - min(lams) < 1e-4


def test_lambda_slope_domain():
    with pytest.raises(DomainError):
        lambda_slope(0.5)
    assert lambda_slope(0.01) == pytest.approx(2 / np.sqrt(3), rel=0.02)


def test_report_json_is_valid():
    import json

    rep = transverse_spectrum(PowerParams(2, 0.4), 1)
    d = json.loads(rep.to_json())
    assert d["real_pair"] is True and d["n"] == 1
