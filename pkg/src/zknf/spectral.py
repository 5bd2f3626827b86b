"""Discretized linearized operators, eigenproblems, shifted solves, quadrature.

Differentiation is Fourier-spectral on the periodic extension of the grid
(the decay certificate makes the wraparound negligible).  A fourth-order
finite-difference stencil is kept for robustness comparisons.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla

from .errors import (
    ConvergenceFailure,
    DecayViolation,
    DomainError,
    NearSingular,
    ParityMismatch,
    ValidationError,
)
from .io import dumps
from .profiles import (
    DECAY_TOL,
    GridSpec1D,
    PowerParams,
    Profile,
    WeightParams,
    critical_speed,
    from_periodic,
    soliton_values,
)

# ---------------------------------------------------------------------------
# differentiation


@lru_cache(maxsize=16)
def _spectral_matrices(grid):
    n = grid.num_points
    k = np.array(grid.wavenumbers)
    k1 = k.copy()
    k1[n // 2] = 0.0  # odd derivative drops the Nyquist mode
    e0 = np.zeros(n)
    e0[0] = 1.0
    c1 = np.fft.ifft(1j * k1 * np.fft.fft(e0)).real
    c2 = np.fft.ifft(-(k**2) * np.fft.fft(e0)).real
    d1 = sla.circulant(c1)
    d2 = sla.circulant(c2)
    d1.setflags(write=False)
    d2.setflags(write=False)
    return d1, d2


@lru_cache(maxsize=16)
def _fd4_matrices(grid):
    n, h = grid.num_points, grid.h
    c1 = np.zeros(n)
    c2 = np.zeros(n)
    # circulant first column: entry i multiplies v_{j-i}
    for off, w in ((1, 8.0), (2, -1.0)):
        c1[off % n] -= w / (12 * h)
        c1[-off % n] += w / (12 * h)
    c2[0] = -30.0 / (12 * h * h)
    for off, w in ((1, 16.0), (2, -1.0)):
        c2[off % n] += w / (12 * h * h)
        c2[-off % n] += w / (12 * h * h)
    d1 = sla.circulant(c1)
    d2 = sla.circulant(c2)
    d1.setflags(write=False)
    d2.setflags(write=False)
    return d1, d2


def derivative_matrices(grid, method="spectral"):
    """Dense first and second derivative matrices on the periodic nodes."""
    if method == "spectral":
        return _spectral_matrices(grid)
    if method == "fd4":
        return _fd4_matrices(grid)
    raise ValidationError(f"unknown differentiation method {method!r}")


def spectral_derivative(grid, f, order=1):
    k = np.array(grid.wavenumbers)
    if order % 2:
        k[grid.num_points // 2] = 0.0
    return np.fft.ifft((1j * k) ** order * np.fft.fft(f)).real


# ---------------------------------------------------------------------------
# parity-restricted blocks


@lru_cache(maxsize=16)
def _parity_basis(n, parity):
    """Orbit representatives and normalisation for even/odd subspaces.

    Periodic node j mirrors to (n - j) mod n; nodes 0 and n/2 are fixed.
    """
    if parity == "even":
        idx = np.arange(n // 2 + 1)
    else:
        idx = np.arange(1, n // 2)
    mirror = (n - idx) % n
    mult = np.where(mirror == idx, 1.0, 2.0)
    return idx, mirror, mult


def parity_block(a, parity):
    """Orthonormal restriction ``B^T A B`` of a dense operator to a parity subspace."""
    n = a.shape[0]
    idx, mirror, mult = _parity_basis(n, parity)
    s = 1.0 if parity == "even" else -1.0
    fixed = mirror == idx
    cols = a[:, idx] + np.where(fixed, 0.0, s) * a[:, mirror]
    blk = cols[idx, :] + (np.where(fixed, 0.0, s)[:, None]) * cols[mirror, :]
    scale = 1.0 / np.sqrt(mult)
    return blk * scale[:, None] * scale[None, :]


def to_parity_coords(v, parity):
    n = v.shape[0]
    idx, _, mult = _parity_basis(n, parity)
    return v[idx] * np.sqrt(mult)


def from_parity_coords(z, n, parity):
    idx, mirror, mult = _parity_basis(n, parity)
    s = 1.0 if parity == "even" else -1.0
    v = np.zeros(n)
    vals = z / np.sqrt(mult)
    v[idx] = vals
    v[mirror] = s * vals
    if parity == "odd":
        v[0] = 0.0
        v[n // 2] = 0.0
    return v


# ---------------------------------------------------------------------------
# operators


@dataclass(frozen=True, eq=False)
class OperatorHandle:
    """``v -> -v'' + (c - (k+1) u_c^k) v``, optionally conjugated by ``e^{mu xi}``.

    With a weight the derivative becomes ``d - mu``; the handle stays symmetric
    only for ``mu = 0``.
    """

    grid: GridSpec1D
    params: PowerParams
    potential: Profile
    method: str = "spectral"
    mu: float = 0.0
    potential_override: bool = field(default=False, repr=False)

    @property
    def n(self):
        return self.grid.num_points

    def first_derivative(self):
        d1, _ = derivative_matrices(self.grid, self.method)
        if self.mu:
            return d1 - self.mu * np.eye(self.n)
        return d1

    def matrix(self):
        d1, d2 = derivative_matrices(self.grid, self.method)
        if self.mu:
            dm = d1 - self.mu * np.eye(self.n)
            lap = dm @ dm
        else:
            lap = d2
        return -lap + np.diag(self.potential.periodic)

    def apply(self, p):
        v = p.periodic if isinstance(p, Profile) else np.asarray(p)
        if self.method == "spectral" and not self.mu:
            out = -spectral_derivative(self.grid, v, 2) + self.potential.periodic * v
        else:
            out = self.matrix() @ v
        return from_periodic(self.grid, out)


def assemble_Lc(params, grid, mu=0.0, method="spectral"):
    u = soliton_values(params.k, params.c, grid.xi)
    pot = params.c - (params.k + 1) * u**params.k
    potential = Profile(grid, pot)
    if abs(pot[0] - params.c) > DECAY_TOL or abs(pot[-1] - params.c) > DECAY_TOL:
        raise DecayViolation("potential does not reach c at the grid ends")
    return OperatorHandle(grid, params, potential, method=method, mu=mu)


def operator_from_potential(params, grid, potential_values, method="spectral"):
    """Schrodinger operator ``-d^2 + V`` with an explicitly given potential."""
    return OperatorHandle(
        grid, params, Profile(grid, potential_values), method=method,
        potential_override=True,
    )


# ---------------------------------------------------------------------------
# spectra


@dataclass(frozen=True, eq=False)
class SpectralReport:
    eigenvalues: np.ndarray
    max_real_part: float
    leading_eigenfunction: Profile | None
    essential_edge: float
    eigenfunctions: tuple = ()
    parities: tuple = ()
    residuals: tuple = ()
    real_pair: bool = False
    max_abs_real: float = 0.0
    c: float | None = None
    n: int | None = None
    mu: float | None = None

    def to_json(self):
        payload = {
            "c": self.c,
            "n": self.n,
            "mu": self.mu,
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "max_real": float(self.max_real_part),
            "max_abs_real": float(self.max_abs_real),
            "real_pair": bool(self.real_pair),
            "essential_edge": float(self.essential_edge),
        }
        return dumps(payload)


def eig_Lc(handle, m=4, tol=1e-8):
    """Lowest ``m`` eigenpairs of the self-adjoint operator, split by parity."""
    if handle.mu:
        raise ValidationError("eig_Lc needs the unweighted (self-adjoint) operator")
    a = handle.matrix()
    n = handle.n
    vals, vecs, pars = [], [], []
    for parity in ("even", "odd"):
        blk = parity_block(a, parity)
        mm = min(m, blk.shape[0])
        w, z = sla.eigh(blk, subset_by_index=[0, mm - 1])
        for j in range(mm):
            vals.append(w[j])
            vecs.append(from_parity_coords(z[:, j], n, parity))
            pars.append(parity)
    order = np.argsort(vals)[:m]
    vals = np.array(vals)[order]
    vecs = [vecs[i] for i in order]
    pars = tuple(pars[i] for i in order)
    h = handle.grid.h
    funcs, res = [], []
    for lam, v in zip(vals, vecs):
        v = v / np.sqrt(h * np.sum(v * v))
        if v[n // 2] < 0 or (abs(v[n // 2]) < 1e-12 and v[n // 2 + 1] < 0):
            v = -v
        r = np.linalg.norm(a @ v - lam * v) / np.linalg.norm(v)
        if r > tol * max(1.0, abs(lam)):
            raise ConvergenceFailure(f"eigenpair residual {r:.2e} above tolerance")
        res.append(r)
        funcs.append(from_periodic(handle.grid, v))
    desc = np.argsort(-vals)
    return SpectralReport(
        eigenvalues=vals[desc].astype(complex),
        max_real_part=float(vals.max()),
        leading_eigenfunction=funcs[desc[0]],
        essential_edge=float(handle.params.c),
        eigenfunctions=tuple(funcs[i] for i in desc),
        parities=tuple(pars[i] for i in desc),
        residuals=tuple(res[i] for i in desc),
        c=handle.params.c,
        mu=0.0,
    )


def _smallest_singular_estimate(lu, size, iters=25):
    v = np.cos(np.arange(size) * 0.7) + 0.1
    v /= np.linalg.norm(v)
    g = 0.0
    for _ in range(iters):
        w = sla.lu_solve(lu, v)
        g = np.linalg.norm(w)
        if not np.isfinite(g) or g == 0:
            return 0.0
        v = w / g
    return 1.0 / g


def solve_shifted(handle, shift, rhs, parity="none", gap_tol=1e-6, res_tol=1e-9):
    """Solve ``(L + shift) w = rhs`` in the requested parity subspace."""
    if parity not in ("even", "odd", "none"):
        raise ValidationError(f"parity must be even, odd or none, got {parity!r}")
    f = rhs.periodic if isinstance(rhs, Profile) else np.asarray(rhs, dtype=float)
    n = handle.n
    fnorm = np.max(np.abs(f))
    if fnorm == 0:
        return from_periodic(handle.grid, np.zeros(n), "generic")
    a = handle.matrix() + shift * np.eye(n)
    if parity == "none":
        blk, z = a, f
    else:
        s = 1.0 if parity == "even" else -1.0
        mirrored = f[(n - np.arange(n)) % n]
        if np.max(np.abs(f - s * mirrored)) > 1e-10 * fnorm:
            raise ParityMismatch(f"right-hand side is not {parity}")
        f = 0.5 * (f + s * mirrored)
        blk = parity_block(a, parity)
        z = to_parity_coords(f, parity)
    lu = sla.lu_factor(blk)
    if _smallest_singular_estimate(lu, blk.shape[0]) < gap_tol:
        raise NearSingular(
            f"shifted operator (shift={shift}) is singular on the {parity} subspace"
        )
    x = sla.lu_solve(lu, z)
    x = x + sla.lu_solve(lu, z - blk @ x)  # one refinement sweep
    w = x if parity == "none" else from_parity_coords(x, n, parity)
    resid = np.max(np.abs(a @ w - f))
    if resid > res_tol * fnorm:
        raise ConvergenceFailure(f"shifted solve residual {resid:.2e} too large")
    return from_periodic(handle.grid, w)


TRANSVERSE_GRID = GridSpec1D(150.0, 1024)


def transverse_matrix(params, n, mu, grid=TRANSVERSE_GRID):
    """Dense ``(d - mu)(L~_c + n^2)``: the transverse problem in ``L^2_mu``."""
    handle = assemble_Lc(params, grid, mu=mu)
    dm = handle.first_derivative()
    return dm @ (handle.matrix() + n * n * np.eye(grid.num_points))


def transverse_spectrum(params, n, weight=None, grid=TRANSVERSE_GRID, tol=1e-4,
                        outer_fraction=0.1, outer_mass=0.01, res_tol=1e-8):
    """Isolated spectrum of ``d_xi (L_c + n^2)`` in the weighted space.

    Eigenvalues whose eigenvectors put more than ``outer_mass`` of their mass
    in the outer ``outer_fraction`` of the grid are discarded as discretized
    essential spectrum.  The retained ones are refined by shift-invert
    iteration.
    """
    if n < 1:
        raise ValidationError("transverse wavenumber must be >= 1")
    mu = 0.0 if weight is None else weight.mu
    a = transverse_matrix(params, n, mu, grid)
    w, v = np.linalg.eig(a)
    x = grid.xi[:-1]
    mass = np.abs(v) ** 2
    mass /= mass.sum(axis=0)
    outer = np.abs(x) > (1.0 - outer_fraction) * grid.half_width
    keep = mass[outer].sum(axis=0) < outer_mass
    kept, funcs, res = [], [], []
    eye = np.eye(grid.num_points)
    for j in np.flatnonzero(keep):
        lam, vec = _refine_eigenpair(a, eye, w[j], v[:, j])
        r = np.linalg.norm(a @ vec - lam * vec) / np.linalg.norm(vec)
        if r > res_tol:
            raise ConvergenceFailure(f"transverse eigenpair residual {r:.2e}")
        kept.append(lam)
        res.append(r)
        funcs.append(vec)
    kept = np.array(kept, dtype=complex)
    order = np.argsort(-kept.real)
    kept = kept[order]
    funcs = [funcs[i] for i in order]
    res = [res[i] for i in order]
    profiles = []
    h = grid.h
    for vec in funcs:
        # eigenvector of the weighted operator; undo the weight for display
        vec = vec * np.exp(-mu * x) if mu else vec
        j = int(np.argmax(np.abs(vec)))
        vec = (vec / vec[j]).real
        profiles.append(from_periodic(grid, vec / np.sqrt(h * np.sum(vec * vec))))
    real_mask = np.abs(kept.imag) < tol
    real_pos = kept[real_mask & (kept.real > tol)]
    if mu == 0.0:
        # Hamiltonian symmetry: a positive real eigenvalue comes with its mirror
        pair = any(np.min(np.abs(kept + lam)) < tol for lam in real_pos)
    else:
        # the mirror eigenfunction leaves L^2_mu once mu exceeds its decay rate
        pair = real_pos.size > 0
    return SpectralReport(
        eigenvalues=kept,
        max_real_part=float(w.real.max()),
        leading_eigenfunction=profiles[0] if profiles else None,
        essential_edge=float(-mu * (params.c + n * n - mu * mu)),
        eigenfunctions=tuple(profiles),
        residuals=tuple(res),
        real_pair=bool(pair),
        max_abs_real=float(np.abs(w.real).max()),
        c=params.c,
        n=n,
        mu=mu,
    )


def _refine_eigenpair(a, eye, lam, vec, iters=3):
    vec = vec / np.linalg.norm(vec)
    try:
        lu = sla.lu_factor(a - (lam + 1e-10) * eye)
    except (ValueError, np.linalg.LinAlgError):
        return lam, vec
    for _ in range(iters):
        y = sla.lu_solve(lu, vec)
        nrm = np.linalg.norm(y)
        if not np.isfinite(nrm) or nrm == 0:
            break
        vec = y / nrm
        lam = np.vdot(vec, a @ vec)
    return lam, vec


def continued_eigenvalue(report, tol=1e-8):
    """The real eigenvalue nearest zero (the branch continued through c*)."""
    cand = [z for z in report.eigenvalues if abs(z.imag) < max(tol, 1e-6)]
    if not cand:
        raise ConvergenceFailure(f"no real isolated eigenvalue at c={report.c}")
    return min(cand, key=abs).real


def lambda_slope(dc, k=2, n=1, weight=None, grid=TRANSVERSE_GRID):
    """Central difference of the continued small eigenvalue across c*."""
    if not (1e-3 <= dc <= 1e-1):
        raise DomainError(f"dc must lie in [1e-3, 1e-1], got {dc}")
    weight = WeightParams(0.1) if weight is None else weight
    cs = critical_speed(k)
    lp = continued_eigenvalue(transverse_spectrum(PowerParams(k, cs + dc), n, weight, grid))
    lm = continued_eigenvalue(transverse_spectrum(PowerParams(k, cs - dc), n, weight, grid))
    return (lp - lm) / (2.0 * dc)


# ---------------------------------------------------------------------------
# quadrature


def inner_product(p, q, tol=DECAY_TOL):
    """Trapezoid quadrature of ``p q``; the product must decay at both ends."""
    if p.grid != q.grid:
        raise ValidationError("profiles live on different grids")
    prod = p.values * q.values
    if abs(prod[0]) >= tol or abs(prod[-1]) >= tol:
        raise DecayViolation(
            f"pairing integrand does not decay: {abs(prod[0]):.2e}, {abs(prod[-1]):.2e}"
        )
    h = p.grid.h
    return float(h * (np.sum(prod) - 0.5 * (prod[0] + prod[-1])))
