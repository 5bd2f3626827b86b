"""Modulation tracking of simulated fields and the amplitude normal form.

A snapshot is decomposed as ``u(x, y) = u_c(x - a) + u~`` with ``u~``
orthogonal to ``u_c`` and ``q = d^{-1} d_c u_c`` (both y-independent, so only
the y-mean enters the fit), then ``u~ = (b e^{iy} + c.c.) psi* + v`` with
``v`` orthogonal to ``eta* e^{+-iy}``.  Everything here is for k = 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coefficients import KAPPA_Q, coefficient_set
from .errors import (
    BlowupReached,
    DecayViolation,
    GridMismatch,
    NewtonDivergence,
    OutOfNeighborhood,
    SingularS,
    ValidationError,
)
from .profiles import (
    critical_speed,
    dc_soliton_values,
    dxi_soliton_values,
    eta_star_values_k2,
    psi_star_values,
    q_values_k2,
    soliton_values,
)

EPS0 = 0.2
ORTH_TOL = 1e-8
# relative size of the eta* pairing integrand tolerated at the right window end
DECAY_REL = 1e-4
K = 2


def wrap(x, Lx):
    return (x + Lx) % (2.0 * Lx) - Lx


def dc_q_values(c, xi):
    # d_c of q = xi sech(sqrt(c) xi) / sqrt(2c)
    q = q_values_k2(c, xi)
    return -q / (2.0 * c) - q * np.tanh(np.sqrt(c) * xi) * xi / (2.0 * np.sqrt(c))


def P_prime(c):
    return 1.0 / np.sqrt(c)


def momentum_P(c):
    return 2.0 * np.sqrt(c)


@dataclass(frozen=True)
class ModulationSample:
    t: float
    a: float
    c: float
    h: float
    delta: float
    b: complex
    orth_residuals: tuple
    vnorm: float
    rate_terms: dict = field(default_factory=dict)
    mass2: float = float("nan")
    energy: float = float("nan")
    vnorm_plain: float = float("nan")

    def csv_row(self):
        return (self.t, self.a, self.c, self.h, self.delta, self.b.real, self.b.imag,
                abs(self.b), self.orth_residuals[0], self.orth_residuals[1], self.vnorm,
                self.mass2, self.energy)


TRACE_HEADER = ("t", "a", "c", "h", "delta", "re_b", "im_b", "abs_b", "orth1", "orth2",
                "vnorm", "mass2", "energy")


@dataclass(frozen=True)
class NormalFormParams:
    lambda_prime: float
    c_plus: float
    c_star: float
    gamma: float
    b0: complex

    def __post_init__(self):
        if not self.lambda_prime > 0:
            raise ValidationError("lambda_prime must be positive")

    @property
    def lam(self):
        return self.lambda_prime * (self.c_plus - self.c_star)

    def blowup_time(self):
        lam, B0 = self.lam, abs(self.b0) ** 2
        if self.gamma > 0 and B0 > 0:
            r = lam / (self.gamma * B0)
            if abs(r) < 1e-8:
                return (1.0 - 0.5 * r) / (2.0 * self.gamma * B0)
            if r > -1.0:
                return math.log1p(r) / (2.0 * lam)
        return math.inf


@dataclass(frozen=True)
class SMatrix:
    entries: np.ndarray

    @property
    def det(self):
        return float(np.linalg.det(self.entries))


@dataclass(frozen=True, eq=False)
class Decomposition:
    """Everything extracted from one snapshot (in the frame xi = x - a)."""

    a: float
    c: float
    b: complex
    xi: np.ndarray
    utilde: np.ndarray  # (Nx, Ny) values of u~ at x nodes
    v: np.ndarray
    weight: np.ndarray
    dx: float
    dy: float
    orth: tuple
    orth_b: float


# ---------------------------------------------------------------------------
# primary decomposition


def _pairings(xbar, x, Lx, a, c, dx):
    xi = wrap(x - a, Lx)
    uc = soliton_values(K, c, xi)
    r = xbar - uc
    return np.array([dx * np.sum(uc * r), dx * np.sum(q_values_k2(c, xi) * r)])


def neighborhood_distance(field_, a, c_ref=None):
    c_ref = critical_speed(K) if c_ref is None else c_ref
    x = field_.x
    xi = wrap(x - a, field_.Lx)
    ref = soliton_values(K, c_ref, xi)
    num = np.sqrt(np.sum((field_.values - ref[:, None]) ** 2))
    den = np.sqrt(np.sum(ref**2) * field_.Ny)
    return float(num / den)


def fit_translation_speed(field_, guess, eps0=EPS0, tol=1e-13, max_iter=50):
    """Newton solve of both orthogonality conditions for ``(a, c)``."""
    a, c = map(float, guess)
    d = neighborhood_distance(field_, a)
    if d > eps0:
        raise OutOfNeighborhood(f"relative distance {d:.3f} to the soliton orbit exceeds {eps0}")
    x, Lx, dx = field_.x, field_.Lx, field_.dx
    xbar = field_.y_mean()
    scale = np.sqrt(dx * np.sum(xbar**2))
    for _ in range(max_iter):
        F = _pairings(xbar, x, Lx, a, c, dx)
        if np.max(np.abs(F)) < tol * scale:
            break
        ha, hc = 1e-6, 1e-6 * c
        J = np.column_stack([
            (_pairings(xbar, x, Lx, a + ha, c, dx) - _pairings(xbar, x, Lx, a - ha, c, dx)) / (2 * ha),
            (_pairings(xbar, x, Lx, a, c + hc, dx) - _pairings(xbar, x, Lx, a, c - hc, dx)) / (2 * hc),
        ])
        try:
            step = np.linalg.solve(J, F)
        except np.linalg.LinAlgError as exc:
            raise NewtonDivergence("singular Jacobian in the (a, c) fit") from exc
        a, c = a - step[0], c - step[1]
        if not (np.isfinite(a) and np.isfinite(c)) or c <= 0:
            raise NewtonDivergence(f"(a, c) fit left the admissible region: a={a}, c={c}")
    F = _pairings(xbar, x, Lx, a, c, dx)
    if np.max(np.abs(F)) > ORTH_TOL:
        raise NewtonDivergence(f"(a, c) fit residual {np.max(np.abs(F)):.2e} above {ORTH_TOL}")
    return a, c, (float(F[0]), float(F[1]))


# ---------------------------------------------------------------------------
# secondary decomposition


def cutoff_weight(xi, Lx, mu):
    """1 up to xi_R = 0.75 Lx, then exp(-mu (xi - xi_R))."""
    xr = 0.75 * Lx
    return np.where(xi > xr, np.exp(-mu * (xi - xr)), 1.0)


def extract_b(field_, a, c, mu=0.1, check_decay=True):
    x, Lx, dx, dy = field_.x, field_.Lx, field_.dx, field_.dy
    xi = wrap(x - a, Lx)
    ut = field_.values - soliton_values(K, c, xi)[:, None]
    w = cutoff_weight(xi, Lx, mu)
    eta = eta_star_values_k2(xi) * w
    psi = psi_star_values(K, xi)
    norm = dx * np.sum(eta * psi)
    u1 = np.fft.fft(ut, axis=1)[:, 1] / field_.Ny
    prod = eta * u1
    if check_decay:
        # largest xi node (just left of the wrap) is the right end of the window
        j = int(np.argmax(xi))
        floor = 1e-12 + DECAY_REL * np.max(np.abs(prod))
        if abs(prod[j]) > floor:
            raise DecayViolation(
                f"eta* pairing not decayed at the right end: {abs(prod[j]):.2e}"
            )
    b = complex(dx * np.sum(prod) / norm)
    y = field_.y
    v = ut - 2.0 * np.real(b * np.exp(1j * y))[None, :] * psi[:, None]
    v1 = np.fft.fft(v, axis=1)[:, 1] / field_.Ny
    orth_b = float(abs(dx * np.sum(eta * v1)))
    return Decomposition(a, c, b, xi, ut, v, w, dx, dy, (0.0, 0.0), orth_b)


def remainder_norm(dec, mu=0.1):
    """Weighted L2 norm of v with weight exp(mu min(xi, 0)); plain L2 as second value."""
    rho = np.exp(2.0 * mu * np.minimum(dec.xi, 0.0))
    area = dec.dx * dec.dy
    wn = math.sqrt(area * float(np.sum(rho[:, None] * dec.v**2)))
    pn = math.sqrt(area * float(np.sum(dec.v**2)))
    return wn, pn


# ---------------------------------------------------------------------------
# modulation equations


def assemble_S(dec, ut=None):
    """Coefficient matrix of the (c', a' - c) system for perturbation ``ut``."""
    ut = dec.utilde if ut is None else ut
    c, xi = dec.c, dec.xi
    area = dec.dx * dec.dy
    mean = lambda f: area * float(np.sum(f[:, None] * ut)) / (2.0 * np.pi)
    p_dc = mean(dc_soliton_values(K, c, xi))
    p_dqc = mean(dc_q_values(c, xi))
    p_dxi = mean(dxi_soliton_values(K, c, xi))
    Pp = P_prime(c)
    S = np.array([[-p_dqc, Pp + p_dc], [Pp - p_dc, p_dxi]])
    return SMatrix(S)


def nonlinear_pairings(dec, ut=None):
    ut = dec.utilde if ut is None else ut
    c, xi = dec.c, dec.xi
    uc = soliton_values(K, c, xi)[:, None]
    N = ut**3 + 3.0 * uc * ut**2
    area = dec.dx * dec.dy
    return np.array([
        area * float(np.sum(dc_soliton_values(K, c, xi)[:, None] * N)) / (2.0 * np.pi),
        area * float(np.sum(dxi_soliton_values(K, c, xi)[:, None] * N)) / (2.0 * np.pi),
    ])


def modulation_rates(S, rhs):
    """Solve ``S [c', a' - c] = rhs``."""
    if abs(S.det) < 1e-6:
        raise SingularS(f"modulation matrix is singular (det={S.det:.2e})")
    sol = np.linalg.solve(S.entries, rhs)
    return float(sol[0]), float(sol[1])


def delta0_from_momentum(field0, b0, c0):
    """Return ``(delta0_numeric, delta0_printed, details)``.

    With u~ orthogonal to u_c the momentum splits as
    ``Q = 2 pi P(c) + ||u~||^2 / 2`` and ``||u~||^2 = 4 pi |b|^2 ||psi*||^2 + O(|b|^4)``,
    so ``P(c* + delta0) := Q / (2 pi)`` fixes the constant of motion.
    """
    cs = critical_speed(K)
    Q = 0.5 * field0.dx * field0.dy * float(np.sum(field0.values**2))
    p = Q / (2.0 * np.pi)
    delta_num = (p / 2.0) ** 2 - cs  # P(c) = 2 sqrt(c)
    B0 = abs(b0) ** 2
    delta_printed = (c0 - cs) + (56.0 / 27.0) * B0
    details = {
        "Q": Q,
        "b2_coefficient_numeric": (delta_num - (c0 - cs)) / B0 if B0 > 0 else None,
        "b2_coefficient_leading": KAPPA_Q,
        "b2_coefficient_printed": 56.0 / 27.0,
    }
    return delta_num, delta_printed, details


# ---------------------------------------------------------------------------
# normal form ODE


def bernoulli_abs2(params, t):
    lam, g, B0 = params.lam, params.gamma, abs(params.b0) ** 2
    t = np.asarray(t, dtype=float)
    x = 2.0 * lam * t
    # (e^{2 lam t} - 1) / lam without cancellation for small lam t
    with np.errstate(divide="ignore", invalid="ignore"):
        growth = np.where(np.abs(x) < 1e-8, 2.0 * t * (1.0 + 0.5 * x), np.expm1(x) / lam)
    return B0 * np.exp(x) / (1.0 - g * B0 * growth)


def integrate_normal_form(params, t_grid, rel_step=0.005):
    """RK4 for ``b' = lam b + gamma |b|^2 b`` sampled on ``t_grid``."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size and np.any(np.diff(t_grid) <= 0):
        raise ValidationError("t_grid must be strictly increasing")
    tstar = params.blowup_time()
    if t_grid.size and t_grid[-1] >= tstar:
        raise BlowupReached(f"normal form blows up at t*={tstar:.6g}", t_star=tstar)
    lam, g = params.lam, params.gamma
    f = lambda z: lam * z + g * (z.real**2 + z.imag**2) * z
    out = np.empty(t_grid.size, dtype=complex)
    b = complex(params.b0)
    t = float(t_grid[0]) if t_grid.size else 0.0
    for i, tn in enumerate(t_grid):
        while t < tn:
            rate = abs(lam) + abs(g) * abs(b) ** 2
            h = min(tn - t, rel_step / rate if rate > 0 else tn - t)
            k1 = f(b)
            k2 = f(b + 0.5 * h * k1)
            k3 = f(b + 0.5 * h * k2)
            k4 = f(b + h * k3)
            b = b + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            t = tn if tn - t - h < 1e-14 * max(1.0, abs(tn)) else t + h
        out[i] = b
    return out


# ---------------------------------------------------------------------------
# tracking fold


def decompose(field_, guess, mu=0.1, check_decay=True):
    a, c, orth = fit_translation_speed(field_, guess)
    dec = extract_b(field_, a, c, mu, check_decay)
    return Decomposition(dec.a, dec.c, dec.b, dec.xi, dec.utilde, dec.v, dec.weight,
                         dec.dx, dec.dy, orth, dec.orth_b)


def track(states, records=None, frame_speed=0.0, mu=0.1, epsilon=None, stop_factor=3.0,
          guess=None):
    """Fold over snapshots; returns ``(samples, decompositions)``.

    Positions are reported in the lab frame (``a_lab = a_frame + s t``).  The
    window closes once ``|b|`` exceeds ``stop_factor * epsilon`` or the
    neighbourhood check fails.
    """
    cs = critical_speed(K)
    guess = (0.0, cs) if guess is None else guess
    samples, decs = [], []
    c_int, prev = 0.0, None
    for i, st in enumerate(states):
        try:
            dec = decompose(st, guess, mu)
        except OutOfNeighborhood:
            break
        guess = (dec.a, dec.c)
        t = st.time
        a_lab = dec.a + frame_speed * t
        if prev is not None:
            c_int += 0.5 * (t - prev[0]) * (dec.c + prev[1])
        S = assemble_S(dec)
        rates = modulation_rates(S, nonlinear_pairings(dec))
        wn, pn = remainder_norm(dec, mu)
        rec = records[i] if records is not None else None
        samples.append(ModulationSample(
            t=t, a=a_lab, c=dec.c, h=a_lab - c_int, delta=dec.c - cs, b=dec.b,
            orth_residuals=dec.orth, vnorm=wn,
            rate_terms={"c_dot": rates[0], "a_dot_minus_c": rates[1], "orth_b": dec.orth_b,
                        "S_det": S.det},
            mass2=rec.mass2 if rec else float("nan"),
            energy=rec.energy if rec else float("nan"),
            vnorm_plain=pn,
        ))
        decs.append(dec)
        prev = (t, dec.c)
        if epsilon is not None and abs(dec.b) > stop_factor * epsilon:
            break
    return samples, decs


def amplitude_stop(limit, mu=0.1, guess=None):
    """Stop callback for ``simulator.run``: true once the fitted ``|b|`` exceeds ``limit``."""
    guess = [0.0, critical_speed(K)] if guess is None else list(guess)

    def stop(state):
        a, c, _ = fit_translation_speed(state, guess)
        guess[:] = [a, c]
        return abs(extract_b(state, a, c, mu, check_decay=False).b) > limit

    return stop


def gauge_consistency(samples):
    """Max gap between h = a - int c and the integrated a' - c rates."""
    t = np.array([s.t for s in samples])
    h = np.array([s.h for s in samples])
    r = np.array([s.rate_terms["a_dot_minus_c"] for s in samples])
    integ = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (r[1:] + r[:-1]))])
    return float(np.max(np.abs((h - h[0]) - integ)))


def b_rate_decomposition(samples, decs, i):
    """Term table of the exact b' balance at sample ``i`` (central differences)."""
    if not 0 < i < len(samples) - 1:
        raise ValidationError("central difference needs interior samples")
    cs = critical_speed(K)
    s0, s1 = samples[i - 1], samples[i + 1]
    bdot = (s1.b - s0.b) / (s1.t - s0.t)
    dec = decs[i]
    xi, area = dec.xi, dec.dx * dec.dy
    psi = psi_star_values(K, xi)
    eta = eta_star_values_k2(xi) * dec.weight
    eta_psi = dec.dx * float(np.sum(eta * psi))
    y = np.arange(dec.v.shape[1]) * dec.dy
    ey = np.exp(-1j * y)[None, :]  # conjugate of e^{iy}
    pair = lambda f, g: area * complex(np.sum(f[:, None] * ey * g)) / (2.0 * np.pi)
    hdot = samples[i].rate_terms["a_dot_minus_c"]
    uc = soliton_values(K, dec.c, xi)
    dL = (dec.c - cs) - 3.0 * (uc**2 - soliton_values(K, cs, xi) ** 2)
    ut = dec.utilde
    N = ut**3 + 3.0 * uc[:, None] * ut**2
    psi_norm = dec.dx * float(np.sum(psi * psi))
    terms = {
        "bdot_eta_psi": bdot * eta_psi,
        "hdot_term": dec.b * hdot * psi_norm,
        "dL_psi_term": dec.b * dec.dx * float(np.sum(psi * dL * psi)),
        "dL_v_term": pair(psi * dL, dec.v),
        "hdot_v_term": hdot * pair(psi, dec.v),
        "rhs_nonlinear": pair(psi, N),
    }
    lhs = sum(terms[k] for k in ("bdot_eta_psi", "hdot_term", "dL_psi_term", "dL_v_term",
                                 "hdot_v_term"))
    terms["lhs"] = lhs
    terms["mismatch"] = abs(lhs - terms["rhs_nonlinear"])
    terms["relative_mismatch"] = terms["mismatch"] / abs(terms["bdot_eta_psi"])
    return terms


def compare(samples, nf, t_nf=None):
    if len(samples) != len(nf):
        raise GridMismatch(f"{len(samples)} samples versus {len(nf)} normal-form values")
    if t_nf is not None:
        t = np.array([s.t for s in samples])
        if np.max(np.abs(t - np.asarray(t_nf))) > 1e-9:
            raise GridMismatch("sample and normal-form time grids differ")
    bp = np.array([s.b for s in samples])
    nf = np.asarray(nf)
    dev = np.abs(bp - nf) / np.abs(nf)
    return {
        "deviation": dev,
        "max_rel_dev": float(np.max(dev)) if dev.size else 0.0,
        "vnorm": np.array([s.vnorm for s in samples]),
    }


def normal_form_for(samples, field0, gamma=None, lambda_prime=None, route="numeric"):
    cs = critical_speed(K)
    cset = None
    if gamma is None or lambda_prime is None:
        cset = coefficient_set(2)
    gamma = cset.gamma_pipeline if gamma is None else gamma
    lambda_prime = cset.lambda_prime if lambda_prime is None else lambda_prime
    s0 = samples[0]
    d_num, d_pr, det = delta0_from_momentum(field0, s0.b, s0.c)
    d0 = d_num if route == "numeric" else d_pr
    params = NormalFormParams(lambda_prime, cs + d0, cs, gamma, s0.b)
    return params, {"delta0_numeric": d_num, "delta0_printed": d_pr, **det}
