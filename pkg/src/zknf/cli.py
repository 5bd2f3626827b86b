"""Command-line entry point: ``zknf <stage> [options]``.

Exit status is 0 on success, 2 for invalid input and 3 when a computation
fails.  Every invocation writes ``manifest.json`` to the output directory with
the resolved configuration and the tool version.
"""

from __future__ import annotations

import argparse
import glob
import json
import math
import os
import re
import sys

import numpy as np

from . import __version__
from .errors import NumericalFailure, ValidationError, ZKNFError
from .io import dumps, ensure_dir, write_csv, write_json

STAGE_DEFAULTS = {
    "coeffs": {"k": 2, "num_points": 4096},
    "spectrum": {"c": 0.4, "n": 1, "mu": 0.1, "half_width": 150.0, "num_points": 1024},
    "stationary": {"delta": 1e-3, "sweep": [4e-3, 2e-3, 1e-3], "modes": 8, "ny": 32,
                   "num_points": 512},
    "track": {"stop_factor": 3.0, "gamma": "pipeline", "delta0_route": "numeric",
              "max_rel_dev": 0.2, "snapshots": True},
}


def load_config(path):
    from .simulator import RunConfig

    raw = {}
    if path:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ValidationError("config must be a JSON object")
    stages = {}
    for name, defaults in STAGE_DEFAULTS.items():
        section = raw.pop(name, {})
        if not isinstance(section, dict):
            raise ValidationError(f"config section {name!r} must be an object")
        unknown = set(section) - set(defaults)
        if unknown:
            raise ValidationError(f"unknown keys in {name!r}: {sorted(unknown)}")
        stages[name] = {**defaults, **section}
    run = RunConfig.from_dict(raw)
    return run, stages


def write_manifest(out, command, run, stages):
    write_json(os.path.join(out, "manifest.json"), {
        "tool": "zknf",
        "version": __version__,
        "command": command,
        "run": run.to_dict(),
        **stages,
    })


# ---------------------------------------------------------------------------
# stages


def stage_coeffs(out, st):
    from .coefficients import coefficient_set
    from .profiles import GridSpec1D

    k = int(st["k"])
    grid = GridSpec1D.default(k, int(st["num_points"])) if k == 2 else None
    cset = coefficient_set(k, grid)
    write_json(os.path.join(out, "coefficients.json"), cset.to_dict())
    return cset


def stage_spectrum(out, st):
    from .profiles import GridSpec1D, PowerParams, WeightParams
    from .spectral import transverse_spectrum

    grid = GridSpec1D(float(st["half_width"]), int(st["num_points"]))
    mu = float(st["mu"])
    weight = WeightParams(mu) if mu > 0 else None
    rep = transverse_spectrum(PowerParams(2, float(st["c"])), int(st["n"]), weight, grid)
    with open(os.path.join(out, "spectrum.json"), "w", newline="\n") as fh:
        fh.write(rep.to_json())
    return rep


def stage_stationary(out, st, sweep):
    from .profiles import GridSpec1D
    from .stationary import HarmonicGrid, predicted_b2, solve_modulated_wave, verify_pitchfork

    hg = HarmonicGrid(GridSpec1D.default(2, int(st["num_points"])), int(st["modes"]),
                      int(st["ny"]))
    if sweep:
        rep = verify_pitchfork(st["sweep"], hg)
        rows = [{k: r[k] for k in ("delta", "b", "ratio", "utilde_over_b2", "residual")}
                for r in rep["rows"]]
        payload = {"rows": rows, "details": rep}
    else:
        d = float(st["delta"])
        b_init = math.sqrt(predicted_b2(abs(d)))
        pt = solve_modulated_wave(d, b_init, hg)
        b2 = pt.b**2
        row = {"delta": d, "b": pt.b, "ratio": b2 / predicted_b2(d) if d > 0 else None,
               "utilde_over_b2": pt.utilde_norm / b2 if b2 > 0 else None,
               "residual": pt.residual_norm}
        payload = {"rows": [row]}
    write_json(os.path.join(out, "stationary.json"), payload)
    return payload


def _snapshot_name(t):
    return f"t_{round(t, 10)!r}.csv"


def stage_simulate(out, run, stop=None, snapshots=True):
    from .simulator import run as run_sim

    snapdir = ensure_dir(os.path.join(out, "snapshots"))
    inv_rows = []

    def sink(state, rec):
        if snapshots:
            state.to_csv(os.path.join(snapdir, _snapshot_name(state.time)))
        inv_rows.append((rec.t, rec.mass2, rec.energy, rec.momentum))

    try:
        final = run_sim(run, [sink], stop=stop)
    finally:
        write_csv(os.path.join(out, "invariants.csv"), ("t", "mass2", "energy", "momentum"),
                  inv_rows)
    return final


def _load_snapshots(out):
    from .fields import Field2D

    files = glob.glob(os.path.join(out, "snapshots", "t_*.csv"))
    if not files:
        raise ValidationError(f"no snapshots under {out}/snapshots; run 'simulate' first")
    timed = []
    for f in files:
        m = re.match(r"t_(.+)\.csv$", os.path.basename(f))
        timed.append((float(m.group(1)), f))
    timed.sort()
    return [Field2D.from_csv(f, time=t) for t, f in timed]


def _load_invariants(out):
    path = os.path.join(out, "invariants.csv")
    if not os.path.exists(path):
        return None
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data


def stage_track(out, run, st, states=None):
    from .tracker import TRACE_HEADER, track

    states = _load_snapshots(out) if states is None else states
    inv = _load_invariants(out)
    records = None
    if inv is not None and len(inv) >= len(states):
        from .simulator import InvariantRecord

        records = [InvariantRecord(r[0], r[1], r[2], r[3], float("nan")) for r in inv]
    eps = run.epsilon if run.epsilon > 0 else None
    samples, decs = track(states, records, frame_speed=run.frame_speed, mu=run.mu,
                          epsilon=eps, stop_factor=float(st["stop_factor"]))
    write_csv(os.path.join(out, "trace.csv"), TRACE_HEADER, [s.csv_row() for s in samples])
    return samples, decs, states


def _read_trace(out):
    path = os.path.join(out, "trace.csv")
    if not os.path.exists(path):
        raise ValidationError(f"{path} missing; run 'track' first")
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def stage_normalform(out, run, st, gamma_override=None):
    from .coefficients import coefficient_set
    from .errors import BlowupReached
    from .tracker import NormalFormParams, bernoulli_abs2, delta0_from_momentum, integrate_normal_form
    from .profiles import critical_speed

    tr = _read_trace(out)
    states = _load_snapshots(out)
    cset = coefficient_set(2)
    gamma = {"pipeline": cset.gamma_pipeline, "closed": cset.gamma_paper}.get(st["gamma"])
    if gamma is None:
        raise ValidationError("track.gamma must be 'pipeline' or 'closed'")
    if gamma_override is not None:
        gamma = gamma_override
    cs = critical_speed(2)
    b0 = complex(tr[0, 5], tr[0, 6])
    d_num, d_pr, det = delta0_from_momentum(states[0], b0, tr[0, 2])
    d0 = {"numeric": d_num, "printed": d_pr}.get(st["delta0_route"])
    if d0 is None:
        raise ValidationError("track.delta0_route must be 'numeric' or 'printed'")
    params = NormalFormParams(cset.lambda_prime, cs + d0, cs, gamma, b0)
    t = tr[:, 0]
    tstar = params.blowup_time()
    keep = t < tstar
    try:
        nf = integrate_normal_form(params, t[keep])
    except BlowupReached:
        raise
    exact = bernoulli_abs2(params, t[keep]) if b0.imag == 0 else np.full(keep.sum(), np.nan)
    rows = [(ti, z.real, z.imag, abs(z), math.sqrt(e) if e == e else e)
            for ti, z, e in zip(t[keep], nf, exact)]
    write_csv(os.path.join(out, "normalform.csv"),
              ("t", "re_b", "im_b", "abs_b", "abs_b_exact"), rows)
    info = {
        "lambda_prime": params.lambda_prime,
        "c_plus": params.c_plus,
        "c_star": cs,
        "gamma": gamma,
        "b0": [b0.real, b0.imag],
        "blowup_time": tstar,
        "delta0_numeric": d_num,
        "delta0_printed": d_pr,
        **{k: v for k, v in det.items()},
    }
    write_json(os.path.join(out, "normalform.json"), info)
    return params, info


def stage_compare(out, run, st):

    tr = _read_trace(out)
    path = os.path.join(out, "normalform.csv")
    if not os.path.exists(path):
        raise ValidationError(f"{path} missing; run 'normalform' first")
    nf = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    with open(os.path.join(out, "normalform.json")) as fh:
        info = json.load(fh)
    n = nf.shape[0]
    eps = run.epsilon
    bp = tr[:n, 5] + 1j * tr[:n, 6]
    bo = nf[:, 1] + 1j * nf[:, 2]
    if np.max(np.abs(tr[:n, 0] - nf[:, 0])) > 1e-9:
        from .errors import GridMismatch

        raise GridMismatch("trace and normal-form time grids differ")
    bound = float(st["stop_factor"]) * eps
    win = (np.abs(bp) <= bound) & (np.abs(bo) <= bound) if eps > 0 else np.ones(n, bool)
    # the window is the initial run of samples with both amplitudes inside the bound
    end = int(np.argmin(win)) if not win.all() else n
    dev = np.abs(bp[:end] - bo[:end]) / np.abs(bo[:end])
    orth = np.max(np.abs(tr[:, 8:10])) if tr.size else 0.0
    vn = tr[:end, 10]
    report = {
        "c_plus": info["c_plus"],
        "gamma_used": info["gamma"],
        "max_rel_dev": float(dev.max()) if dev.size else 0.0,
        "window_end": float(tr[end - 1, 0]) if end else 0.0,
        "blowup_time_ode": info["blowup_time"],
        "checks": {
            "b0": float(bp[0].real) if n else None,
            "b0_error": float(abs(bp[0] - eps)) if n else None,
            "b0_within_1e-6": bool(n and abs(bp[0] - eps) < 1e-6),
            "max_rel_dev_ok": bool(dev.size and dev.max() <= float(st["max_rel_dev"])),
            "orth_max": float(orth),
            "orth_ok": bool(orth < 1e-8),
            "sup_vnorm_over_eps2": float(vn.max() / eps**2) if eps > 0 and vn.size else None,
            "reached_amplitude_bound": bool(end < n) or bool(tr.shape[0] > n),
        },
    }
    write_json(os.path.join(out, "compare.json"), report)
    return report


# ---------------------------------------------------------------------------
# argument parsing


def build_parser():
    p = argparse.ArgumentParser(prog="zknf", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"zknf {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config (run keys plus stage sections)")
        sp.add_argument("--out", default=".", help="output directory (default: .)")
        return sp

    sp = common(sub.add_parser("coeffs", help="normal-form coefficients and identities"))
    sp.add_argument("--k", type=int)
    sp = common(sub.add_parser("spectrum", help="transverse spectrum of the line soliton"))
    sp.add_argument("--c", type=float)
    sp.add_argument("--n", type=int)
    sp.add_argument("--mu", type=float)
    sp = common(sub.add_parser("stationary", help="modulated stationary waves"))
    sp.add_argument("--delta", type=float)
    sp.add_argument("--sweep", action="store_true", help="run the pitchfork sweep")
    for name, helptext in (("simulate", "2D time integration"),
                           ("track", "modulation tracking of snapshots"),
                           ("normalform", "integrate the amplitude normal form"),
                           ("compare", "compare tracked and normal-form amplitudes"),
                           ("all", "simulate, track, normalform and compare")):
        common(sub.add_parser(name, help=helptext))
    return p


def _apply_flags(args, stages):
    if args.command == "coeffs" and args.k is not None:
        stages["coeffs"]["k"] = args.k
    if args.command == "spectrum":
        for key in ("c", "n", "mu"):
            if getattr(args, key) is not None:
                stages["spectrum"][key] = getattr(args, key)
    if args.command == "stationary" and args.delta is not None:
        stages["stationary"]["delta"] = args.delta


def dispatch(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        run, stages = load_config(args.config)
        _apply_flags(args, stages)
        out = ensure_dir(args.out)
        write_manifest(out, args.command, run, stages)
        cmd = args.command
        if cmd == "coeffs":
            stage_coeffs(out, stages["coeffs"])
        elif cmd == "spectrum":
            stage_spectrum(out, stages["spectrum"])
        elif cmd == "stationary":
            stage_stationary(out, stages["stationary"], args.sweep)
        elif cmd == "simulate":
            stage_simulate(out, run, snapshots=True)
        elif cmd == "track":
            stage_track(out, run, stages["track"])
        elif cmd == "normalform":
            stage_normalform(out, run, stages["track"])
        elif cmd == "compare":
            stage_compare(out, run, stages["track"])
        elif cmd == "all":
            stop = _amplitude_stop(run, stages["track"])
            stage_simulate(out, run, stop=stop)
            stage_track(out, run, stages["track"])
            stage_normalform(out, run, stages["track"])
            rep = stage_compare(out, run, stages["track"])
            sys.stdout.write(dumps(rep))
    except ValidationError as exc:
        print(f"zknf: invalid input: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"zknf: numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 3
    except ZKNFError as exc:  # pragma: no cover - every error is one of the above
        print(f"zknf: {exc}", file=sys.stderr)
        return 3
    return 0


def _amplitude_stop(run, st):
    """Stop the simulation shortly after the tracked window closes."""
    if run.epsilon <= 0:
        return None
    from .tracker import amplitude_stop

    return amplitude_stop(1.1 * float(st["stop_factor"]) * run.epsilon, run.mu)


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
