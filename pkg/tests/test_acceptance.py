"""Acceptance criteria 1-9.  Each test prints one PASS/FAIL line (also
collected in the terminal summary) and then asserts the same verdict.

Run on its own with ``pytest -v tests/test_acceptance.py``.
"""

import math
import time

import numpy as np
import pytest

from zknf.coefficients import (
    k1_quoted_chain,
    coefficient_set,
    compute_alpha,
    compute_beta,
    compute_gamma_k2,
    identity_table,
    verify_appendix_k1,
    w0_mismatch,
)
from zknf.profiles import GridSpec1D, PowerParams, WeightParams, critical_speed, eval_psi_star
from zknf.simulator import MemorySink, RunConfig, Stepper, init_field, measure_shift, run
from zknf.spectral import (
    assemble_Lc,
    eig_Lc,
    inner_product,
    lambda_slope,
    transverse_matrix,
    transverse_spectrum,
)
from zknf.stationary import verify_pitchfork
from zknf.tracker import (
    NormalFormParams,
    amplitude_stop,
    bernoulli_abs2,
    delta0_from_momentum,
    extract_b,
    integrate_normal_form,
    track,
)

CS = critical_speed(2)
pytestmark = pytest.mark.acceptance


def test_criterion_1_identities(verdict):
    t0 = time.perf_counter()
    grid = GridSpec1D(40 * math.sqrt(3), 4096)
    table = identity_table(grid, check=False)
    w0_err = w0_mismatch(grid)
    elapsed = time.perf_counter() - t0
    worst = max(r.rel_error for r in table.rows.values())
    ok = not table.failing(1e-8) and w0_err < 1e-8 and elapsed < 5
    assert verdict(1, ok, f"max identity rel err {worst:.1e}, w0 err {w0_err:.1e}, {elapsed:.1f}s")


def test_criterion_2_spectra(verdict):
    t0 = time.perf_counter()
    grid = GridSpec1D.default(2)
    rep = eig_Lc(assemble_Lc(PowerParams(2, CS), grid), m=2)
    order = np.argsort(rep.eigenvalues.real)
    low, ker = (rep.eigenvalues.real[i] for i in order)
    f_low, f_ker = (rep.eigenfunctions[i] for i in order)
    psi = eval_psi_star(2, grid)
    cos_low = abs(inner_product(f_low, psi)) / math.sqrt(inner_product(psi, psi))
    unstable = transverse_spectrum(PowerParams(2, 0.4), 1)
    stable = transverse_spectrum(PowerParams(2, 0.3), 1)
    slope = lambda_slope(0.01)
    lams = [transverse_spectrum(PowerParams(2, 0.4), 1, WeightParams(mu)).max_real_part
            for mu in (0.05, 0.1, 0.15)]
    elapsed = time.perf_counter() - t0
    checks = {
        "lowest": abs(low + 1) < 1e-6 and rep.parities[order[0]] == "even"
        and abs(cos_low - 1) < 1e-6,
        "kernel": abs(ker) < 1e-6 and rep.parities[order[1]] == "odd"
        and f_ker.asymmetry(odd=True) < 1e-8,
        "real_pair": unstable.real_pair and not stable.real_pair and stable.max_abs_real < 1e-4,
        "slope": abs(slope / (2 / math.sqrt(3)) - 1) < 0.02,
        "mu_independent": max(lams) - min(lams) < 1e-4,
        "time": elapsed < 30,
    }
    detail = (f"lowest {low:.8f}, kernel {ker:.1e}, lam(0.4)={unstable.max_real_part:.6f}, "
              f"max|Re| at 0.3 {stable.max_abs_real:.1e}, lambda' {slope:.6f}, "
              f"mu spread {max(lams) - min(lams):.1e}, {elapsed:.1f}s")
    failed = [k for k, v in checks.items() if not v]
    assert verdict(2, not failed, detail + (f" failed: {failed}" if failed else ""))


def test_criterion_3_coefficients(verdict):
    identity_table()  # warm the correctors, as the criterion is timed after suite 1
    t0 = time.perf_counter()
    alpha = compute_alpha()
    beta, _, _ = compute_beta()
    g_closed, g_pipe, _ = compute_gamma_k2()
    elapsed = time.perf_counter() - t0
    ok = (
        abs(alpha - 8 * CS**1.5) < 1e-8 * 8 * CS**1.5
        and beta < 0 and beta <= -0.149153 + 1e-6
        and g_closed > 0 and g_pipe > 0
        and np.sign(g_closed) == np.sign(g_pipe)
        and elapsed < 10
    )
    assert verdict(3, ok, f"alpha {alpha:.10f}, beta {beta:.6f}, gamma closed {g_closed:.6f}, "
                          f"gamma pipeline {g_pipe:.6f} (ratio {g_pipe / g_closed:.2f}), "
                          f"{elapsed:.1f}s")


def test_criterion_4_quadratic_power(verdict):
    t0 = time.perf_counter()
    c1 = critical_speed(1)
    chain = k1_quoted_chain()
    rep = verify_appendix_k1()
    elapsed = time.perf_counter() - t0
    expected = -6720 / (693 * math.sqrt(c1))
    ok = (
        abs(chain - expected) < 1e-12 * abs(expected)
        and abs(rep["psi_norm2"] / (16 / (15 * math.sqrt(c1))) - 1) < 1e-8
        and rep["psi2_w2"] <= 1024 / (693 * math.sqrt(c1))
        and rep["gamma_estimate"] < 0
        and elapsed < 10
    )
    assert verdict(4, ok, f"chain {chain:.12f}, psi norm2 {rep['psi_norm2']:.10f}, "
                          f"<psi^2,w2> {rep['psi2_w2']:.5f} <= {rep['psi2_w2_bound']:.5f}, "
                          f"gamma estimate {rep['gamma_estimate']:.3f}, {elapsed:.1f}s")


def test_criterion_5_pitchfork(verdict):
    t0 = time.perf_counter()
    rep = verify_pitchfork((4e-3, 2e-3, 1e-3))
    elapsed = time.perf_counter() - t0
    ratios = [r["ratio"] for r in rep["rows"]]
    resid = max(r["residual"] for r in rep["rows"])
    ok = (rep["ratio_in_band"] and rep["monotone"] and resid < 1e-10
          and rep["negative_branch"]["collapsed"] and elapsed < 120)
    assert verdict(5, ok, "ratios " + ", ".join(f"{r:.4f}" for r in ratios)
                   + f", residual {resid:.1e}, delta<0 collapsed "
                   f"{rep['negative_branch']['collapsed']}, {elapsed:.1f}s")


@pytest.mark.slow
def test_criterion_6_conservation(verdict):
    t0 = time.perf_counter()
    cfg = RunConfig(Lx=60.0, Nx=512, Ny=32, dt=5e-4, t_end=10.0, epsilon=0.05,
                    output_every=2000)
    sink = MemorySink(keep_fields=False)
    run(cfg, [sink])
    m = np.array([r.mass2 for r in sink.records])
    e = np.array([r.energy for r in sink.records])
    drift_m = np.max(np.abs(m - m[0])) / m[0]
    drift_e = np.max(np.abs(e - e[0])) / abs(e[0])

    base = dict(Lx=60.0, Nx=512, Ny=32, t_end=1.0, epsilon=0.1, output_every=10**6)
    sols = []
    for dt in (1.6e-3, 8e-4, 4e-4):
        c = RunConfig(**base, dt=dt)
        sols.append(Stepper(c).advance(init_field(c).values, c.num_steps))
    ratio = np.abs(sols[0] - sols[1]).max() / np.abs(sols[1] - sols[2]).max()

    line = RunConfig(Lx=60.0, Nx=512, Ny=32, dt=5e-4, t_end=5e-4)
    s0 = init_field(line)
    s1 = Stepper(line).advance(s0.values, 1)
    speed = measure_shift(s0.y_mean(), s1.mean(axis=1), line.Lx) / line.dt
    speed_err = abs(speed - line.c0)
    elapsed = time.perf_counter() - t0

    ok = drift_m < 1e-6 and drift_e < 1e-6 and 12 <= ratio <= 20 and speed_err < 1e-6 \
        and elapsed < 600
    assert verdict(6, ok, f"mass2 drift {drift_m:.1e}, energy drift {drift_e:.1e}, "
                          f"dt-halving ratio {ratio:.2f}, speed error {speed_err:.1e}, "
                          f"{elapsed:.0f}s")


@pytest.mark.slow
def test_criterion_7_growth_rate(verdict):
    t0 = time.perf_counter()
    c0 = 0.4
    reference = transverse_spectrum(PowerParams(2, c0), 1).max_real_part
    cfg = RunConfig(c0=c0, epsilon=1e-3, Lx=60.0, Nx=256, Ny=16, dt=2e-3, t_end=20.0,
                    frame_speed=c0, sponge_width=10.0, sponge_strength=2.0, output_every=250)
    # project the first harmonic on the left eigenvector of the unstable mode
    a = transverse_matrix(PowerParams(2, c0), 1, 0.0, GridSpec1D(cfg.Lx, cfg.Nx))
    w, vl = np.linalg.eig(a.T)
    left = vl[:, np.argmax(w.real)]
    sink = MemorySink()
    run(cfg, [sink])
    t = np.array([s.time for s in sink.states])
    amp = np.array([abs(np.dot(left, s.harmonic(1))) for s in sink.states])
    fit = t >= 5.0
    rate = np.polyfit(t[fit], np.log(amp[fit]), 1)[0]
    elapsed = time.perf_counter() - t0
    rel = abs(rate / reference - 1)
    ok = rel < 0.1 and elapsed < 900
    assert verdict(7, ok, f"measured rate {rate:.6f} vs eigenvalue {reference:.6f} "
                          f"(rel {rel:.1e}), {elapsed:.0f}s")


def _normal_form_case(eps, gamma, lambda_prime):
    dt = 2.5e-3
    cfg = RunConfig(c0=CS, epsilon=eps, Lx=50.0, Nx=256, Ny=16, dt=dt, t_end=0.0,
                    frame_speed=CS, sponge_width=12.0, sponge_strength=3.0)
    field0 = init_field(cfg)
    b0 = extract_b(field0, 0.0, CS).b
    d0, _, _ = delta0_from_momentum(field0, b0, CS)
    params = NormalFormParams(lambda_prime, CS + d0, CS, gamma, b0)
    tstar = params.blowup_time()
    every = max(1, int(round(tstar / 100 / dt)))
    cfg = cfg.replace(t_end=every * dt * math.floor(tstar / (every * dt)), output_every=every)
    sink = MemorySink()
    run(cfg, [sink], stop=amplitude_stop(3.2 * eps))
    samples, _ = track(sink.states, sink.records, frame_speed=CS, epsilon=eps,
                       stop_factor=3.2)
    t = np.array([s.t for s in samples])
    keep = t < tstar
    nf = integrate_normal_form(params, t[keep])
    bp = np.array([s.b for s in samples])[keep]
    inside = (np.abs(bp) <= 3 * eps) & (np.abs(nf) <= 3 * eps)
    end = int(np.argmin(inside)) if not inside.all() else inside.size
    dev = np.abs(bp[:end] - nf[:end]) / np.abs(nf[:end])
    return {
        "b0_err": abs(samples[0].b - eps),
        "max_dev": float(dev.max()),
        "window_end": float(t[end - 1]),
        "tstar": tstar,
        "pde_b_at_end": float(abs(bp[end - 1])),
        "sup_v": max(s.vnorm for s in samples[:end]) / eps**2,
        "orth": max(max(map(abs, s.orth_residuals)) for s in samples),
    }


@pytest.mark.slow
def test_criterion_8_normal_form(verdict):
    t0 = time.perf_counter()
    cset = coefficient_set(2)
    cases = {eps: _normal_form_case(eps, cset.gamma_pipeline, cset.lambda_prime)
             for eps in (0.02, 0.03, 0.045)}
    elapsed = time.perf_counter() - t0
    sups = [c["sup_v"] for c in cases.values()]
    checks = {
        "b0": all(c["b0_err"] < 1e-6 for c in cases.values()),
        "deviation": all(c["max_dev"] <= 0.2 for c in cases.values()),
        "remainder": max(sups) / min(sups) < 2,
        "orthogonality": all(c["orth"] < 1e-8 for c in cases.values()),
        "time": elapsed < 45 * 60,
    }
    detail = "; ".join(
        f"eps {eps}: dev {c['max_dev']:.3f} to t={c['window_end']:.0f} (t* {c['tstar']:.0f}, "
        f"|b| {c['pde_b_at_end'] / eps:.2f} eps), sup v/eps^2 {c['sup_v']:.1f}, "
        f"orth {c['orth']:.0e}"
        for eps, c in cases.items()
    )
    failed = [k for k, v in checks.items() if not v]
    assert verdict(8, not failed, detail + f"; {elapsed:.0f}s"
                   + (f" failed: {failed}" if failed else ""))


def test_criterion_9_ode_oracle(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    for d, gamma in ((1e-3, 0.925), (0.0, 0.5), (-5e-4, 2.0)):
        b0 = 0.03
        p = NormalFormParams(2 / math.sqrt(3), CS + d, CS, gamma, complex(b0))
        lam, B0, BT = p.lam, b0**2, (10 * b0) ** 2
        if abs(lam) < 1e-14:
            t_end = (1 / B0 - 1 / BT) / (2 * gamma)
        else:
            t_end = math.log(BT * (lam + gamma * B0) / (B0 * (lam + gamma * BT))) / (2 * lam)
        t = np.linspace(0.0, t_end, 200)
        nf = integrate_normal_form(p, t)
        exact = np.sqrt(bernoulli_abs2(p, t))
        assert abs(nf[-1]) == pytest.approx(10 * b0, rel=1e-6)
        worst = max(worst, float(np.max(np.abs(np.abs(nf) - exact) / exact)))
    elapsed = time.perf_counter() - t0
    assert verdict(9, worst < 1e-8 and elapsed < 1, f"max rel err {worst:.1e} up to 10x "
                                                   f"growth, {elapsed:.2f}s")
