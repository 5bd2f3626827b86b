"""Transversely modulated stationary waves near the critical speed.

Solves ``-Lap u + c u - u^3 = 0`` for u even in xi and y, expanded as
``u = sum_m U_m(xi) cos(m y)``, by Newton's method with the exact Jacobian
assembled from harmonic blocks.  The cubic term is evaluated by collocation
at Ny equispaced y nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .coefficients import compute_alpha, compute_beta, solve_w0, solve_w2
from .errors import CollapsedToLineSoliton, DomainError, NewtonDivergence, ValidationError
from .fields import Field2D
from .profiles import (
    GridSpec1D,
    critical_speed,
    dc_soliton_values,
    psi_star_values,
    soliton_values,
)
from .spectral import derivative_matrices

DEFAULT_GRID = GridSpec1D.default(2, 512)
MODES = 8
NY = 32
TRIVIAL_B = 1e-6


@dataclass(frozen=True, eq=False)
class HarmonicGrid:
    grid: GridSpec1D = DEFAULT_GRID
    modes: int = MODES
    ny: int = NY

    def __post_init__(self):
        if self.ny < 16:
            raise ValidationError("need at least 16 y nodes")
        if self.ny <= 2 * self.modes:
            raise ValidationError("y collocation must resolve the retained harmonics")

    @property
    def half(self):
        n = self.grid.num_points
        return np.arange(n // 2 + 1)

    @property
    def xi_half(self):
        # nodes -L .. 0 in the periodic indexing; even functions are determined there
        return self.grid.xi[: self.grid.num_points // 2 + 1]

    def cos_matrix(self):
        y = 2.0 * np.pi * np.arange(self.ny) / self.ny
        return np.cos(np.outer(y, np.arange(self.modes + 1)))  # (ny, M+1)

    def projector(self):
        p = self.cos_matrix().T * (2.0 / self.ny)
        p[0] *= 0.5
        return p  # (M+1, ny)

    def even_d2(self):
        _, d2 = derivative_matrices(self.grid)
        n = self.grid.num_points
        idx = self.half
        mirror = (n - idx) % n
        fixed = mirror == idx
        return d2[np.ix_(idx, idx)] + np.where(fixed, 0.0, 1.0) * d2[np.ix_(idx, mirror)]

    def to_full(self, half_vals):
        """Extend even half-grid data (..., N/2+1) to the N+1 closed grid."""
        n = self.grid.num_points
        full = np.empty(half_vals.shape[:-1] + (n + 1,))
        full[..., : n // 2 + 1] = half_vals
        full[..., n // 2 + 1:] = half_vals[..., n // 2 - 1:: -1][..., : n // 2]
        return full


@dataclass(frozen=True, eq=False)
class ProjectionSplit:
    b: float
    tilde: Field2D
    orth_residual: float = 0.0


@dataclass(frozen=True, eq=False)
class BifurcationPoint:
    c: float
    b: float
    u_b: Field2D
    residual_norm: float
    utilde_norm: float
    modes: np.ndarray = field(repr=False, default=None)  # (M+1, N+1) cosine coefficients
    iterations: int = 0
    residual_history: tuple = ()
    harmonics: HarmonicGrid = field(default=None, repr=False)

    def to_row(self, delta):
        return {
            "delta": delta,
            "c": self.c,
            "b": self.b,
            "residual": self.residual_norm,
            "utilde_norm": self.utilde_norm,
        }


def _residual(U, a_blocks, C, P, c):
    # U: (M+1, Nh)
    phys = C @ U  # (ny, Nh)
    cubic = P @ phys**3
    lin = np.stack([a @ um for a, um in zip(a_blocks, U)])
    return lin + c * U - cubic, phys


def _jacobian(phys, a_blocks, C, P, c):
    m1, nh = P.shape[0], phys.shape[1]
    g = 3.0 * phys**2  # (ny, Nh)
    # G[m, n, i] = sum_j P[m, j] g[j, i] C[j, n]
    G = np.einsum("mj,ji,jn->mni", P, g, C)
    J = np.zeros((m1 * nh, m1 * nh))
    for m in range(m1):
        for n in range(m1):
            blk = J[m * nh:(m + 1) * nh, n * nh:(n + 1) * nh]
            if m == n:
                blk += a_blocks[m] + c * np.eye(nh)
            blk[np.diag_indices(nh)] -= G[m, n]
    return J


def newton_solve(c, U0, hg=None, tol=1e-12, max_iter=30):
    hg = HarmonicGrid() if hg is None else hg
    d2 = hg.even_d2()
    nh = d2.shape[0]
    a_blocks = [-d2 + m * m * np.eye(nh) for m in range(hg.modes + 1)]
    C, P = hg.cos_matrix(), hg.projector()
    U = np.array(U0, dtype=float)
    hist = []
    for it in range(max_iter):
        F, phys = _residual(U, a_blocks, C, P, c)
        r = float(np.max(np.abs(F)))
        hist.append(r)
        if not np.isfinite(r) or r > 1e6:
            raise NewtonDivergence(f"Newton residual blew up to {r:.3e} at c={c}")
        if r < tol * max(1.0, float(np.max(np.abs(phys)))):
            return U, hist
        J = _jacobian(phys, a_blocks, C, P, c)
        try:
            step = sla.solve(J, F.ravel(), check_finite=False)
        except sla.LinAlgError as exc:
            raise NewtonDivergence(f"singular Jacobian at c={c}") from exc
        U = U - step.reshape(U.shape)
    raise NewtonDivergence(
        f"Newton did not converge in {max_iter} iterations (residual {hist[-1]:.3e})"
    )


def _h2_norm(hg, modes_full):
    """Discrete H^2 norm of a cosine-expanded field over R x T."""
    g = hg.grid
    k = np.asarray(g.wavenumbers)
    tot = 0.0
    for m, f in enumerate(modes_full):
        fh = np.fft.fft(f[:-1])
        sym = (1.0 + k**2 + m * m) ** 2
        energy = g.h * np.sum(sym * np.abs(fh) ** 2) / g.num_points
        tot += (2.0 * np.pi if m == 0 else np.pi) * energy
    return float(np.sqrt(tot))


def project_v1(hg, modes_full):
    """Split off the ``cos(y) psi*`` component: ``b = <psi*, U_1> / ||psi*||^2``."""
    g = hg.grid
    psi = psi_star_values(2, g.xi)
    w = np.full(g.num_points + 1, g.h)
    w[0] = w[-1] = 0.5 * g.h
    b = float(np.sum(w * psi * modes_full[1]) / np.sum(w * psi * psi))
    tilde = modes_full.copy()
    tilde[0] = tilde[0] - soliton_values(2, critical_speed(2), g.xi)
    tilde[1] = tilde[1] - b * psi
    orth = float(np.sum(w * psi * tilde[1]))
    return b, tilde, orth


def modes_to_field(hg, modes_full, ny=None):
    ny = hg.ny if ny is None else ny
    y = 2.0 * np.pi * np.arange(ny) / ny
    cosm = np.cos(np.outer(np.arange(modes_full.shape[0]), y))
    vals = modes_full[:, :-1].T @ cosm  # (N, ny)
    return Field2D(vals, hg.grid.half_width)


def split(hg, modes_full):
    b, tilde, orth = project_v1(hg, modes_full)
    return ProjectionSplit(b, modes_to_field(hg, tilde), orth)


def solve_modulated_wave(delta, b_init, hg=None):
    if abs(delta) > 0.05:
        raise DomainError(f"|delta| must be <= 0.05, got {delta}")
    hg = HarmonicGrid() if hg is None else hg
    cs = critical_speed(2)
    c = cs + delta
    xh = hg.xi_half
    U0 = np.zeros((hg.modes + 1, xh.size))
    U0[0] = soliton_values(2, cs, xh)
    U0[1] = b_init * psi_star_values(2, xh)
    U, hist = newton_solve(c, U0, hg)
    full = hg.to_full(U)
    b, tilde, _ = project_v1(hg, full)
    if b < 0:
        # pitchfork symmetry b -> -b is the half-period shift y -> y + pi
        full[1::2] *= -1.0
        b, tilde, _ = project_v1(hg, full)
    u_b = modes_to_field(hg, full)
    point = BifurcationPoint(
        c=c, b=b, u_b=u_b, residual_norm=hist[-1], utilde_norm=_h2_norm(hg, tilde),
        modes=full, iterations=len(hist) - 1, residual_history=tuple(hist),
        harmonics=hg,
    )
    if b_init != 0 and abs(b) < TRIVIAL_B:
        raise CollapsedToLineSoliton(
            f"Newton from b_init={b_init} landed on the line-soliton branch at delta={delta}",
            point=point,
        )
    return point


def predicted_b2(delta):
    alpha = compute_alpha()
    beta = compute_beta()[0]
    return -alpha * delta / beta


def verify_pitchfork(deltas=(4e-3, 2e-3, 1e-3), hg=None, negative_delta=-1e-3):
    hg = HarmonicGrid() if hg is None else hg
    deltas = [float(d) for d in deltas]
    if any(d <= 0 for d in deltas):
        raise DomainError("pitchfork sweep needs positive deltas")
    if deltas != sorted(deltas, reverse=True):
        raise DomainError("deltas must be descending toward 0")
    cs = critical_speed(2)
    rows = []
    w2 = solve_w2(2)
    w0 = solve_w0(2)
    for d in deltas:
        pred = predicted_b2(d)
        pt = solve_modulated_wave(d, np.sqrt(pred), hg)
        b2 = pt.b**2
        # leading-order corrector prediction, sampled onto the stationary grid
        w2_on = np.interp(hg.grid.xi, w2.xi, w2.values)
        w0_on = np.interp(hg.grid.xi, w0.xi, w0.values)
        second = pt.modes[2]
        sh_err = float(np.max(np.abs(second - b2 * w2_on)) / np.max(np.abs(b2 * w2_on)))
        mean_pred = (
            soliton_values(2, cs, hg.grid.xi) + d * dc_soliton_values(2, cs, hg.grid.xi)
            + b2 * w0_on
        )
        mean_dev = pt.modes[0] - soliton_values(2, cs + d, hg.grid.xi)
        rows.append({
            "delta": d,
            "b": pt.b,
            "b2": b2,
            "predicted_b2": pred,
            "ratio": b2 / pred,
            "utilde_over_b2": pt.utilde_norm / b2,
            "residual": pt.residual_norm,
            "u_norm": float(np.max(np.abs(pt.u_b.values))),
            "second_harmonic_rel_err": sh_err,
            "mean_corrector_rel_err": float(
                np.max(np.abs(pt.modes[0] - mean_pred)) / np.max(np.abs(b2 * w0_on))
            ),
            "mean_minus_soliton_over_b2": float(np.max(np.abs(mean_dev)) / b2),
            "iterations": pt.iterations,
            "residual_history": list(pt.residual_history),
        })
    ratios = [r["ratio"] for r in rows]
    errs = [abs(r - 1.0) for r in ratios]
    ut = [r["utilde_over_b2"] for r in rows]
    negative = None
    if negative_delta is not None:
        try:
            pt = solve_modulated_wave(negative_delta, np.sqrt(predicted_b2(abs(negative_delta))), hg)
            negative = {"delta": negative_delta, "collapsed": False, "b": pt.b}
        except CollapsedToLineSoliton as exc:
            negative = {"delta": negative_delta, "collapsed": True, "b": exc.point.b}
    return {
        "rows": rows,
        "alpha": compute_alpha(),
        "beta": compute_beta()[0],
        "ratio_in_band": all(0.85 <= r <= 1.15 for r in ratios),
        "monotone": all(errs[i + 1] <= errs[i] for i in range(len(errs) - 1)),
        "utilde_variation": (max(ut) - min(ut)) / min(ut),
        "negative_branch": negative,
    }
