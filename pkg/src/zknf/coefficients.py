"""Normal-form coefficients: correctors w0, w2, quadrature identities, alpha, beta, gamma.

Each coefficient is computed by quadrature of solved profiles and, where a
closed form exists, checked against it.  The quadratic power (k = 1) has its
own short verification path at the bottom of the module.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ChainMismatch, IdentityMismatch, UnsupportedPower
from .io import dumps
from .profiles import (
    GridSpec1D,
    PowerParams,
    Profile,
    critical_speed,
    eval_eta_star,
    eval_line_soliton,
    eval_psi_star,
    eval_soliton_derivatives,
    sech,
)
from .spectral import assemble_Lc, inner_product, operator_from_potential, solve_shifted

IDENTITY_RTOL = 1e-8

# slaving constants of the cubic reduction (k = 2); see ``gamma_pipeline``
KAPPA_H = 64.0 / 27.0
KAPPA_Q = 16.0 / 27.0

# at N = 4096 the roundoff floor of the k = 1 mean corrector sits just above
# the decay tolerance; 2048 nodes already resolve sech^3 to machine precision
K1_GRID = GridSpec1D.default(1, 2048)


@dataclass(frozen=True)
class IdentityRow:
    closed_form: float
    quadrature: float

    @property
    def rel_error(self):
        return abs(self.quadrature - self.closed_form) / abs(self.closed_form)


@dataclass(frozen=True)
class IdentityTable:
    rows: dict

    def failing(self, rtol=IDENTITY_RTOL):
        return [k for k, r in self.rows.items() if r.rel_error >= rtol]

    def check(self, rtol=IDENTITY_RTOL):
        bad = self.failing(rtol)
        if bad:
            raise IdentityMismatch(
                "quadrature identities failed: " + ", ".join(bad), rows=bad
            )
        return self

    def to_dict(self):
        return {
            k: {"closed_form": r.closed_form, "quadrature": r.quadrature,
                "rel_error": r.rel_error}
            for k, r in self.rows.items()
        }


@dataclass(frozen=True)
class CoefficientSet:
    k: int
    c_star: float
    alpha: float
    beta: float
    beta_paper_bound: float
    gamma_paper: float
    gamma_pipeline: float
    lambda_prime: float
    identities: IdentityTable
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "k": self.k,
            "c_star": self.c_star,
            "alpha": self.alpha,
            "beta": self.beta,
            "beta_paper_bound": self.beta_paper_bound,
            "gamma_paper": self.gamma_paper,
            "gamma_pipeline": self.gamma_pipeline,
            "lambda_prime": self.lambda_prime,
            "identities": self.identities.to_dict(),
            "extras": self.extras,
        }

    def to_json(self):
        return dumps(self.to_dict())


# ---------------------------------------------------------------------------
# k = 2 building blocks


@dataclass(frozen=True, eq=False)
class CriticalProfiles:
    grid: GridSpec1D
    u: Profile
    dxi_u: Profile
    dc_u: Profile
    psi: Profile
    eta: Profile


@lru_cache(maxsize=8)
def critical_profiles(grid=None):
    grid = GridSpec1D.default(2) if grid is None else grid
    params = PowerParams(2, critical_speed(2))
    dxi, dc = eval_soliton_derivatives(params, grid)
    return CriticalProfiles(
        grid, eval_line_soliton(params, grid), dxi, dc,
        eval_psi_star(2, grid), eval_eta_star(2, grid),
    )


@lru_cache(maxsize=8)
def _handle_k2(grid):
    return assemble_Lc(PowerParams(2, critical_speed(2)), grid)


def _cubic_source(cp):
    return cp.u.with_values(1.5 * cp.u.values * cp.psi.values**2, "generic")


@lru_cache(maxsize=8)
def _w0_k2(grid):
    cp = critical_profiles(grid)
    w = solve_shifted(_handle_k2(grid), 0.0, _cubic_source(cp), "even")
    return w.with_values(w.values, "w0")


@lru_cache(maxsize=8)
def _w2_k2(grid):
    cp = critical_profiles(grid)
    w = solve_shifted(_handle_k2(grid), 4.0, _cubic_source(cp), "even")
    return w.with_values(w.values, "w2")


def w0_closed_form(grid):
    u = critical_profiles(grid).u.values
    return Profile(grid, 0.5 * (u**3 - 4.0 * critical_speed(2) * u), "w0")


def solve_w0(k=2, grid=None):
    if k == 2:
        return _w0_k2(GridSpec1D.default(2) if grid is None else grid)
    if k == 1:
        return _k1_correctors(K1_GRID if grid is None else grid)[0]
    raise UnsupportedPower(f"coefficients are defined for k in {{1, 2}}, got {k}")


def solve_w2(k=2, grid=None):
    if k == 2:
        return _w2_k2(GridSpec1D.default(2) if grid is None else grid)
    if k == 1:
        return _k1_correctors(K1_GRID if grid is None else grid)[1]
    raise UnsupportedPower(f"coefficients are defined for k in {{1, 2}}, got {k}")


def _p(grid, values):
    return Profile(grid, values)


@lru_cache(maxsize=8)
def pairings_k2(grid=None):
    """Every quadrature the k = 2 coefficients are assembled from."""
    grid = GridSpec1D.default(2) if grid is None else grid
    cp = critical_profiles(grid)
    u, dcu, psi = cp.u.values, cp.dc_u.values, cp.psi.values
    psi2u = _p(grid, psi**2 * u)
    w0, w2 = _w0_k2(grid), _w2_k2(grid)
    Lp = _p(grid, psi - 6.0 * u * dcu * psi)  # L' psi with L' = 1 - 6 u d_c u
    return {
        "psi_norm2": inner_product(cp.psi, cp.psi),
        "psi_l4": inner_product(_p(grid, psi**2), _p(grid, psi**2)),
        "psi2_udcu_x6": 6.0 * inner_product(_p(grid, psi**2), _p(grid, u * dcu)),
        "psi2u_w0": inner_product(psi2u, w0),
        "psi2u_w2": inner_product(psi2u, w2),
        "psi_Lprime_psi": inner_product(cp.psi, Lp),
        "psi2u_norm2": inner_product(psi2u, psi2u),
        "eta_psi": inner_product(cp.eta, cp.psi),
    }


def identity_table(grid=None, check=True):
    grid = GridSpec1D.default(2) if grid is None else grid
    cs = critical_speed(2)
    q = pairings_k2(grid)
    closed = {
        "psi_norm2": (16.0 / 3.0) * cs**1.5,
        "psi_l4": (2.0**9 / 35.0) * cs**3.5,
        "psi2_udcu_x6": (64.0 / 3.0) * cs**1.5,
        "psi2u_w0": -(2.0**10 / 105.0) * cs**3.5,
        "psi_Lprime_psi": -16.0 * cs**1.5,
        "psi2u_norm2": (2.0**13 / 315.0) * cs**4.5,
        "eta_psi": 8.0 * cs,
    }
    table = IdentityTable({k: IdentityRow(v, q[k]) for k, v in closed.items()})
    return table.check() if check else table


def w0_mismatch(grid=None):
    grid = GridSpec1D.default(2) if grid is None else grid
    return float(np.max(np.abs(_w0_k2(grid).values - w0_closed_form(grid).values)))


def compute_alpha(grid=None):
    """2 alpha = -||psi*||^2 + 6 <psi*^2, u d_c u>, checked against 8 c*^{3/2}."""
    q = pairings_k2(grid)
    quad = 0.5 * (-q["psi_norm2"] + q["psi2_udcu_x6"])
    via_Lprime = -0.5 * q["psi_Lprime_psi"]
    closed = 8.0 * critical_speed(2) ** 1.5
    for name, val in (("alpha_quadrature", quad), ("alpha_Lprime", via_Lprime)):
        if abs(val - closed) >= IDENTITY_RTOL * closed:
            raise IdentityMismatch(f"{name}={val!r} differs from {closed!r}", rows=[name])
    return quad


def compute_beta(grid=None):
    """Cubic coefficient of the stationary bifurcation equation.

    ``alpha * delta * b + beta * b^3 = 0`` with b the coefficient of
    ``cos(y) psi*``.  Returns ``(beta, printed_bound, details)``; details
    holds the alternative normalization that appears in print, for audit.
    """
    cs = critical_speed(2)
    q = pairings_k2(grid)
    beta = 0.375 * q["psi_l4"] + 3.0 * q["psi2u_w0"] + 1.5 * q["psi2u_w2"]
    bound = (2.0**6 / 315.0) * cs**3.5 * (-45.0 + 32.0 / 3.0)
    printed = 0.75 * (2.0 * q["psi2u_w0"] + q["psi2u_w2"]) + 0.375 * q["psi_l4"]
    # same estimate as the printed bound but with the 3/2 weight on w2 and
    # <psi^2 u, w2> <= ||psi^2 u||^2 / 3
    consistent_bound = (
        0.375 * q["psi_l4"] + 3.0 * q["psi2u_w0"] + 0.5 * q["psi2u_norm2"]
    )
    details = {
        "beta_printed_formula": printed,
        "beta_printed_formula_bound_gap": printed - bound,
        "beta_consistent_bound": consistent_bound,
        "beta_spec_expected": bound + 0.75 * (q["psi2u_w2"] - 0.5 * q["psi2u_norm2"]),
    }
    return beta, bound, details


def compute_gamma_k2(grid=None):
    """Return ``(gamma_paper, gamma_pipeline, audit)``.

    gamma_pipeline is the cubic coefficient of the amplitude equation with
    the perturbation ``(b e^{iy} + c.c.) psi* + 4|b|^2 w0 + 2(b^2 e^{2iy} + c.c.) w2``
    and the slaved modulation ``h' = KAPPA_H |b|^2``, ``delta = delta0 - KAPPA_Q |b|^2``,
    projected on eta* and divided by ``<eta*, psi*>``.
    """
    cs = critical_speed(2)
    q = pairings_k2(grid)
    X = q["psi2u_w2"]
    gamma_paper = (X + (47.0 / 105.0) * cs**1.5) / (8.0 * cs)
    terms = {
        "translation": -KAPPA_H * q["psi_norm2"],
        "mean_corrector": 24.0 * q["psi2u_w0"],
        "speed_slaving": KAPPA_H * q["psi2_udcu_x6"],
        "second_harmonic": 12.0 * X,
        "cubic": 3.0 * q["psi_l4"],
        "momentum_shift": KAPPA_Q * q["psi_Lprime_psi"],
    }
    gamma_pipeline = sum(terms.values()) / q["eta_psi"]
    literal = (
        6.0 * (q["psi2u_w0"] + X)
        + 3.0 * q["psi_l4"]
        + (128.0 / 9.0) * q["psi2_udcu_x6"] / 6.0
        - (64.0 / 27.0) * q["psi_norm2"]
        + 16.0 * cs**1.5 * (56.0 / 27.0)
    ) / q["eta_psi"]
    printed_collapse = (73.0 / 105.0) * 2.0**9 * cs**3.5
    audit = {
        "pipeline_terms": {k: v / q["eta_psi"] for k, v in terms.items()},
        "gamma_listed_bracket": literal,
        "printed_cubic_constant": printed_collapse,
        # the same collapse evaluated from the listed identities
        "recomputed_cubic_constant": 6.0 * q["psi2u_w0"]
        + (128.0 / 9.0) * q["psi2_udcu_x6"] / 6.0
        + 3.0 * q["psi_l4"]
        - (64.0 / 27.0) * q["psi_norm2"],
        "gamma_ratio_pipeline_over_paper": gamma_pipeline / gamma_paper,
        "psi2u_w2": X,
        "gamma_paper_without_w2": (47.0 / 840.0) * np.sqrt(cs),
    }
    return gamma_paper, gamma_pipeline, audit


def lambda_prime_quadrature(grid=None):
    q = pairings_k2(grid)
    return -q["psi_Lprime_psi"] / q["eta_psi"]


def coefficient_set(k=2, grid=None):
    if k == 1:
        rep = verify_appendix_k1(grid)
        cs = critical_speed(1)
        return CoefficientSet(
            k=1, c_star=cs, alpha=float("nan"), beta=float("nan"),
            beta_paper_bound=float("nan"), gamma_paper=rep["chain_total"],
            gamma_pipeline=rep["gamma_estimate"], lambda_prime=float("nan"),
            identities=IdentityTable({"psi_norm2": IdentityRow(
                16.0 / (15.0 * np.sqrt(cs)), rep["psi_norm2"])}),
            extras=rep,
        )
    if k != 2:
        raise UnsupportedPower(f"coefficients are defined for k in {{1, 2}}, got {k}")
    grid = GridSpec1D.default(2) if grid is None else grid
    table = identity_table(grid)
    alpha = compute_alpha(grid)
    beta, bound, bdet = compute_beta(grid)
    gp, gpipe, audit = compute_gamma_k2(grid)
    extras = dict(bdet)
    extras["gamma_audit"] = audit
    extras["w0_closed_form_max_error"] = w0_mismatch(grid)
    extras["alpha_closed_form"] = 8.0 * critical_speed(2) ** 1.5
    extras["grid"] = {"half_width": grid.half_width, "num_points": grid.num_points}
    return CoefficientSet(
        k=2, c_star=critical_speed(2), alpha=alpha, beta=beta,
        beta_paper_bound=bound, gamma_paper=gp, gamma_pipeline=gpipe,
        lambda_prime=lambda_prime_quadrature(grid), identities=table,
        extras=extras,
    )


# ---------------------------------------------------------------------------
# quadratic power (k = 1)
#
# operator realised as -d^2 + 4c - 12c sech^2(sqrt(c) xi), i.e. linearisation
# about 6c sech^2(sqrt(c) xi); then sech^3 is the ground state with eigenvalue
# -5c = -1 at c* = 1/5.


def k1_potential(c, xi):
    return 4.0 * c - 12.0 * c * sech(np.sqrt(c) * xi) ** 2


def k1_dc_soliton(c, xi):
    z = np.sqrt(c) * xi
    s2 = sech(z) ** 2
    return 6.0 * s2 - 6.0 * z * s2 * np.tanh(z)


@lru_cache(maxsize=4)
def k1_handle(grid):
    cs = critical_speed(1)
    return operator_from_potential(PowerParams(1, cs), grid, k1_potential(cs, grid.xi))


@lru_cache(maxsize=4)
def _k1_correctors(grid):
    h = k1_handle(grid)
    psi = eval_psi_star(1, grid)
    src = psi.values**2
    w0 = solve_shifted(h, 0.0, Profile(grid, 12.0 * src), "even")
    w2 = solve_shifted(h, 4.0, Profile(grid, 6.0 * src), "even")
    return w0.with_values(w0.values, "w0"), w2.with_values(w2.values, "w2")


QUOTED_K1 = {
    "psi2_w0": -160.0 / 21.0,
    "psi2_dcu": 4.0 / 5.0,
    "psi_norm2": 16.0 / 15.0,
    "psi2_w2_bound": 1024.0 / 693.0,
}


def k1_quoted_chain(cs=None):
    """Sign estimate for k = 1 from the quoted pairings (all over sqrt(c*))."""
    cs = critical_speed(1) if cs is None else cs
    r = 1.0 / np.sqrt(cs)
    total = (
        12.0 * (QUOTED_K1["psi2_w0"] + QUOTED_K1["psi2_w2_bound"])
        + 144.0 * QUOTED_K1["psi2_dcu"]
        - 48.0 * QUOTED_K1["psi_norm2"]
    ) * r
    expected = -6720.0 / 693.0 * r
    if abs(total - expected) > 1e-12 * abs(expected):
        raise ChainMismatch(f"chain total {total!r} != {expected!r}")
    return total


def verify_appendix_k1(grid=None, flag_rtol=0.01):
    grid = K1_GRID if grid is None else grid
    cs = critical_speed(1)
    r = 1.0 / np.sqrt(cs)
    psi = eval_psi_star(1, grid)
    psi2 = Profile(grid, psi.values**2)
    w0, w2 = _k1_correctors(grid)
    dcu = Profile(grid, k1_dc_soliton(cs, grid.xi))
    q_w0 = inner_product(psi2, w0)
    q_w2 = inner_product(psi2, w2)
    q_dcu = inner_product(psi2, dcu)
    q_norm = inner_product(psi, psi)
    chain = k1_quoted_chain(cs)
    gamma_est = (
        12.0 * (QUOTED_K1["psi2_w0"] * r + q_w2)
        + 144.0 * QUOTED_K1["psi2_dcu"] * r
        - 48.0 * QUOTED_K1["psi_norm2"] * r
    )
    gamma_all_numeric = 12.0 * (q_w0 + q_w2) + 144.0 * q_dcu - 48.0 * q_norm
    flags = {}
    for name, val in (("psi2_w0", q_w0), ("psi2_dcu", q_dcu)):
        quoted = QUOTED_K1[name] * r
        flags[name] = {
            "quoted": quoted,
            "quadrature": val,
            "normalization_flag": bool(abs(val - quoted) > flag_rtol * abs(quoted)),
        }
    return {
        "chain_total": chain,
        "chain_expected": -6720.0 / 693.0 * r,
        "psi_norm2": q_norm,
        "psi_norm2_quoted": QUOTED_K1["psi_norm2"] * r,
        "psi2_w2": q_w2,
        "psi2_w2_bound": QUOTED_K1["psi2_w2_bound"] * r,
        "gamma_estimate": gamma_est,
        "gamma_all_numeric": gamma_all_numeric,
        "normalization_flags": flags,
    }
