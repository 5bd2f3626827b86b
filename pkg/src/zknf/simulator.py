"""Pseudo-spectral integration of ``u_t + (u^{k+1})_x + u_xxx + u_xyy = 0``.

The x direction is periodic on [-Lx, Lx) (profiles decay well before the
edges, and an optional sponge removes radiation), y is 2 pi periodic.  Time
stepping is the integrating-factor (Lawson) RK4 scheme: the dispersive part
is propagated exactly in Fourier space, the flux by RK4.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import DecayViolation, NumericBlowup, ValidationError
from .fields import Field2D, x_nodes
from .profiles import DECAY_TOL, psi_star_values, soliton_values

BLOWUP_LEVEL = 1e3


def _pow2(n):
    return n >= 2 and n & (n - 1) == 0


@dataclass(frozen=True)
class RunConfig:
    k: int = 2
    c0: float = 1.0 / 3.0
    epsilon: float = 0.0
    Lx: float = 60.0
    Nx: int = 512
    Ny: int = 32
    dt: float = 5e-4
    t_end: float = 10.0
    mu: float = 0.1
    sponge_width: float = 0.0
    sponge_strength: float = 0.0
    dealias: bool = True
    output_every: int = 100
    frame_speed: float = 0.0

    def __post_init__(self):
        if self.k not in (1, 2, 3):
            raise ValidationError(f"k must be 1, 2 or 3, got {self.k}")
        if not self.c0 > 0:
            raise ValidationError("c0 must be positive")
        if not _pow2(self.Nx) or not _pow2(self.Ny):
            raise ValidationError("Nx and Ny must be powers of two")
        if not 0 <= self.epsilon <= 0.1:
            raise ValidationError("epsilon must lie in [0, 0.1]")
        if not self.dt > 0 or self.t_end < 0 or self.Lx <= 0:
            raise ValidationError("dt, Lx must be positive and t_end non-negative")
        if self.output_every < 1:
            raise ValidationError("output_every must be >= 1")
        if self.sponge_width < 0 or self.sponge_strength < 0:
            raise ValidationError("sponge parameters must be non-negative")
        if self.sponge_width >= self.Lx:
            raise ValidationError("sponge wider than the domain")
        if self.dt > self.cfl_limit():
            raise ValidationError(
                f"dt={self.dt} exceeds the stability bound {self.cfl_limit():.3e}"
            )

    def cfl_limit(self):
        kx = np.pi * self.Nx / (2.0 * self.Lx)
        ny = self.Ny / 2.0
        if self.dealias:
            kx, ny = 2.0 * kx / 3.0, 2.0 * ny / 3.0
        return 2.8 / (kx**3 + kx * ny**2)

    @property
    def num_steps(self):
        return int(round(self.t_end / self.dt))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def replace(self, **kw):
        d = self.to_dict()
        d.update(kw)
        return RunConfig.from_dict(d)


@dataclass(frozen=True)
class InvariantRecord:
    t: float
    mass2: float
    energy: float
    momentum: float
    energy_printed: float


class Spectral2D:
    """Wavenumbers, dealias mask and propagators for one configuration."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.kx = np.pi / cfg.Lx * np.fft.fftfreq(cfg.Nx, d=1.0 / cfg.Nx)[:, None]
        self.ky = np.fft.rfftfreq(cfg.Ny, d=1.0 / cfg.Ny)[None, :]
        kxm = np.abs(self.kx).max()
        kym = cfg.Ny / 2.0
        if cfg.dealias:
            self.mask = (np.abs(self.kx) < (2.0 / 3.0) * kxm) & (self.ky < (2.0 / 3.0) * kym)
        else:
            self.mask = np.ones((cfg.Nx, self.ky.size), dtype=bool)
        # drop the Nyquist row/column for odd derivatives
        kx = self.kx * (np.abs(self.kx) < kxm)
        self.ikx = 1j * kx * np.ones_like(self.ky)
        self.sym = 1j * (kx**3 + kx * self.ky**2 + cfg.frame_speed * kx)
        self.half = np.exp(0.5 * cfg.dt * self.sym)
        self.full = self.half**2
        self.flux = -self.ikx * self.mask
        x = x_nodes(cfg.Lx, cfg.Nx)
        self.damp = None
        if cfg.sponge_width > 0 and cfg.sponge_strength > 0:
            edge = cfg.Lx - cfg.sponge_width
            s = np.clip((np.abs(x) - edge) / cfg.sponge_width, 0.0, 1.0)
            sigma = cfg.sponge_strength * s * s * (3.0 - 2.0 * s)
            self.damp = (1.0 - sigma * cfg.dt)[:, None]

    def fft(self, u):
        return np.fft.rfft2(u)

    def ifft(self, uh):
        return np.fft.irfft2(uh, s=(self.cfg.Nx, self.cfg.Ny))

    def nonlinear(self, uh):
        u = self.ifft(uh)
        return self.flux * self.fft(u ** (self.cfg.k + 1))


def make_field(cfg, values, time=0.0):
    return Field2D(values, cfg.Lx, time)


def init_field(cfg):
    x = x_nodes(cfg.Lx, cfg.Nx)
    y = 2.0 * np.pi * np.arange(cfg.Ny) / cfg.Ny
    u0 = soliton_values(cfg.k, cfg.c0, x)
    ends = max(abs(u0[0]), abs(soliton_values(cfg.k, cfg.c0, cfg.Lx)))
    if ends >= DECAY_TOL:
        raise DecayViolation(f"soliton not decayed at the x boundary ({ends:.2e})")
    vals = np.repeat(u0[:, None], cfg.Ny, axis=1)
    if cfg.epsilon:
        if cfg.k not in (1, 2):
            raise ValidationError("perturbation profile needs k in {1, 2}")
        vals = vals + 2.0 * cfg.epsilon * np.outer(psi_star_values(cfg.k, x), np.cos(y))
    return make_field(cfg, vals)


class Stepper:
    def __init__(self, cfg):
        self.cfg = cfg
        self.sp = Spectral2D(cfg)

    def step_hat(self, uh):
        sp, dt = self.sp, self.cfg.dt
        E, E2 = sp.half, sp.full
        k1 = sp.nonlinear(uh)
        k2 = sp.nonlinear(E * (uh + 0.5 * dt * k1))
        k3 = sp.nonlinear(E * uh + 0.5 * dt * k2)
        k4 = sp.nonlinear(E2 * uh + dt * E * k3)
        return E2 * uh + (dt / 6.0) * (E2 * k1 + 2.0 * E * (k2 + k3) + k4)

    def advance(self, u, nsteps, t0=0.0):
        """Advance raw values ``u`` by ``nsteps``; returns new values."""
        sp = self.sp
        uh = sp.fft(u)
        for j in range(nsteps):
            uh = self.step_hat(uh)
            if sp.damp is not None:
                uh = sp.fft(sp.ifft(uh) * sp.damp)
        out = sp.ifft(uh)
        check_blowup(out, t0 + nsteps * self.cfg.dt)
        return out


def check_blowup(u, t):
    m = np.max(np.abs(u))
    if not np.isfinite(m) or m > BLOWUP_LEVEL:
        raise NumericBlowup(f"solution blew up at t={t:.6g} (max |u| = {m:.3e})", t)


def step(state, cfg, stepper=None):
    stepper = Stepper(cfg) if stepper is None else stepper
    out = stepper.advance(state.values, 1, state.time)
    return state.replace(values=out, time=state.time + cfg.dt)


def invariants(state, k=2):
    u = state.values
    nx, ny = u.shape
    area = state.dx * state.dy
    kx = np.pi / state.Lx * np.fft.fftfreq(nx, d=1.0 / nx)[:, None]
    ky = np.fft.fftfreq(ny, d=1.0 / ny)[None, :]
    uh = np.fft.fft2(u)
    grad2 = np.sum((kx**2 + ky**2) * np.abs(uh) ** 2) / (nx * ny)  # Parseval
    mass2 = float(area * np.sum(u * u))
    pot = float(area * np.sum(u ** (k + 2)) / (k + 2))
    kin = 0.5 * area * grad2
    return InvariantRecord(
        t=state.time,
        mass2=mass2,
        energy=float(kin - pot),
        momentum=0.5 * mass2,
        energy_printed=float(kin - 0.5 * pot),
    )


class CSVSink:
    """Writes ``t_<time>.csv`` snapshots and appends to ``invariants.csv``."""

    def __init__(self, outdir, snapshots=True):
        self.outdir = outdir
        self.snapshots = snapshots
        os.makedirs(outdir, exist_ok=True)
        self._inv = open(os.path.join(outdir, "invariants.csv"), "w", newline="\n")
        self._inv.write("t,mass2,energy,momentum\n")

    def __call__(self, state, record):
        if self.snapshots:
            state.to_csv(os.path.join(self.outdir, f"t_{state.time:.6f}.csv"))
        self._inv.write(
            f"{record.t:.17g},{record.mass2:.17g},{record.energy:.17g},{record.momentum:.17g}\n"
        )

    def close(self):
        self._inv.close()


class MemorySink:
    def __init__(self, keep_fields=True):
        self.keep_fields = keep_fields
        self.states = []
        self.records = []

    def __call__(self, state, record):
        if self.keep_fields:
            self.states.append(state)
        self.records.append(record)


def run(cfg, sinks=(), state=None, stop=None):
    """Integrate to ``t_end`` and feed every ``output_every``-th state to the sinks.

    ``stop(state)`` may return True to end the run early at an output step.
    Returns the final state.
    """
    stepper = Stepper(cfg)
    state = init_field(cfg) if state is None else state
    rec = invariants(state, cfg.k)
    for s in sinks:
        s(state, rec)
    done = 0
    total = cfg.num_steps
    while done < total:
        n = min(cfg.output_every, total - done)
        vals = stepper.advance(state.values, n, state.time)
        done += n
        state = make_field(cfg, vals, done * cfg.dt)
        rec = invariants(state, cfg.k)
        for s in sinks:
            s(state, rec)
        if stop is not None and stop(state):
            break
    return state


def measure_shift(before, after, Lx):
    """Least-squares x-translation taking the y-mean of ``before`` onto ``after``."""
    f0 = np.fft.rfft(np.asarray(before))
    f1 = np.fft.rfft(np.asarray(after))
    n = len(before)
    k = np.pi / Lx * np.arange(f0.size)
    k[-1] = 0.0 if n % 2 == 0 else k[-1]
    s = 0.0
    for _ in range(20):
        ph = np.exp(-1j * k * s)
        r = f1 - ph * f0
        dr = 1j * k * ph * f0
        g = np.real(np.vdot(dr, r))
        hss = np.real(np.vdot(dr, dr))
        ds = -g / hss
        s += ds
        if abs(ds) < 1e-15:
            break
    return s
