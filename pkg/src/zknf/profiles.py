"""Line-soliton profiles and the critical eigenfunctions on a uniform grid.

The line soliton of the power nonlinearity ``u^{k+1}`` is

    u_c(xi) = (c (k+2)/2)^{1/k} sech^{2/k}((k/2) sqrt(c) xi),

and at the critical speed the transverse neutral mode ``psi_star`` and its
adjoint ``eta_star = int_{-inf}^{xi} psi_star`` are available in closed form.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DecayViolation, UnsupportedPower, ValidationError

DECAY_TOL = 1e-12

DECAYING_ROLES = frozenset(
    {"soliton", "dxi_soliton", "dc_soliton", "psi_star", "w0", "w2"}
)
BOUNDED_ROLES = frozenset({"eta_star", "q_antiderivative"})
ROLES = DECAYING_ROLES | BOUNDED_ROLES | {"generic"}


def critical_speed(k):
    """Speed at which the first transverse mode becomes neutral."""
    if k == 2:
        return 1.0 / 3.0
    if k == 1:
        return 1.0 / 5.0
    raise UnsupportedPower(f"critical speed is only defined for k in {{1, 2}}, got {k}")


@dataclass(frozen=True)
class PowerParams:
    k: int
    c: float

    def __post_init__(self):
        if self.k not in (1, 2, 3):
            raise UnsupportedPower(f"k must be 1, 2 or 3, got {self.k}")
        if not self.c > 0:
            raise ValidationError(f"wave speed must be positive, got {self.c}")


@dataclass(frozen=True)
class GridSpec1D:
    """Uniform grid ``xi_j = -L + j h``, ``j = 0..N`` with ``h = 2L/N``.

    The first N nodes form a periodic grid; node N duplicates node 0 under
    periodic extension, which is harmless because all profiles placed on the
    grid are certified to decay there.
    """

    half_width: float
    num_points: int = 4096

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValidationError("half_width must be positive")
        if self.num_points < 64 or self.num_points % 2:
            raise ValidationError("num_points must be an even integer >= 64")

    @property
    def h(self):
        return 2.0 * self.half_width / self.num_points

    @cached_property
    def xi(self):
        x = -self.half_width + self.h * np.arange(self.num_points + 1)
        x.setflags(write=False)
        return x

    @cached_property
    def wavenumbers(self):
        k = 2.0 * np.pi * np.fft.fftfreq(self.num_points, d=self.h)
        k.setflags(write=False)
        return k

    @classmethod
    def default(cls, k=2, num_points=4096):
        return cls(40.0 / np.sqrt(critical_speed(k)), num_points)


@dataclass(frozen=True)
class WeightParams:
    mu: float = 0.1
    c_star: float = 1.0 / 3.0

    def __post_init__(self):
        if self.mu < 0 or self.mu >= np.sqrt(self.c_star):
            raise ValidationError(
                f"weight mu={self.mu} must lie in [0, sqrt(c*)={np.sqrt(self.c_star):.4f})"
            )


@dataclass(frozen=True, eq=False)
class Profile:
    grid: GridSpec1D
    values: np.ndarray = field(repr=False)
    role: str = "generic"

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValidationError(f"unknown profile role {self.role!r}")
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.num_points + 1,):
            raise ValidationError(
                f"profile needs {self.grid.num_points + 1} values, got {v.shape}"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        check_decay(self)

    @property
    def xi(self):
        return self.grid.xi

    @property
    def periodic(self):
        """Values on the N periodic nodes (drops the duplicated right end)."""
        return self.values[:-1]

    def with_values(self, values, role=None):
        return Profile(self.grid, values, self.role if role is None else role)

    def at(self, x):
        """Value at a grid node closest to ``x`` (for spot checks)."""
        j = int(np.argmin(np.abs(self.xi - x)))
        return float(self.values[j])

    def asymmetry(self, odd=False):
        s = -1.0 if odd else 1.0
        return float(np.max(np.abs(self.values - s * self.values[::-1])))

    def to_csv(self, path=None):
        buf = io.StringIO()
        buf.write("xi,value\n")
        for x, v in zip(self.xi, self.values):
            buf.write(f"{x:.17g},{v:.17g}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="\n") as fh:
                fh.write(text)
        return text


def from_periodic(grid, values, role="generic"):
    """Build a profile from values on the N periodic nodes."""
    v = np.asarray(values, dtype=float)
    return Profile(grid, np.append(v, v[0]), role)


def check_decay(p, tol=DECAY_TOL):
    v = p.values
    if p.role in DECAYING_ROLES:
        if abs(v[0]) >= tol or abs(v[-1]) >= tol:
            raise DecayViolation(
                f"{p.role} profile does not decay on the grid: "
                f"|u(-L)|={abs(v[0]):.3e}, |u(+L)|={abs(v[-1]):.3e}"
            )
    elif p.role in BOUNDED_ROLES:
        if abs(v[0]) >= tol:
            raise DecayViolation(
                f"{p.role} profile must vanish at the left end, got {abs(v[0]):.3e}"
            )


def sech(z):
    a = np.exp(-np.abs(z))
    return 2.0 * a / (1.0 + a * a)


# pointwise closed forms; these take raw arrays so other modules can evaluate
# at shifted coordinates


def soliton_values(k, c, xi):
    s = 0.5 * k * np.sqrt(c)
    amp = (c * (k + 2) / 2.0) ** (1.0 / k)
    return amp * sech(s * xi) ** (2.0 / k)


def dxi_soliton_values(k, c, xi):
    s = 0.5 * k * np.sqrt(c)
    return -np.sqrt(c) * np.tanh(s * xi) * soliton_values(k, c, xi)


def dc_soliton_values(k, c, xi):
    s = 0.5 * k * np.sqrt(c)
    u = soliton_values(k, c, xi)
    return u * (1.0 / (k * c) - xi * np.tanh(s * xi) / (2.0 * np.sqrt(c)))


def psi_star_values(k, xi):
    cs = critical_speed(k)
    if k == 2:
        return 2.0 * cs * sech(np.sqrt(cs) * xi) ** 2
    return sech(np.sqrt(cs) * xi) ** 3


def eta_star_values_k2(xi):
    # 2c* int_{-inf}^{xi} sech^2(sqrt(c*) s) ds
    cs = critical_speed(2)
    return 2.0 * np.sqrt(cs) * (1.0 + np.tanh(np.sqrt(cs) * xi))


def q_values_k2(c, xi):
    # int_{-inf}^{xi} d_c u_c for k = 2; vanishes at both ends because M'(c) = 0
    return xi * sech(np.sqrt(c) * xi) / np.sqrt(2.0 * c)


def eval_line_soliton(params, grid):
    return Profile(grid, soliton_values(params.k, params.c, grid.xi), "soliton")


def eval_soliton_derivatives(params, grid):
    """Return ``(d_xi u_c, d_c u_c)`` from analytic differentiation."""
    k, c, x = params.k, params.c, grid.xi
    return (
        Profile(grid, dxi_soliton_values(k, c, x), "dxi_soliton"),
        Profile(grid, dc_soliton_values(k, c, x), "dc_soliton"),
    )


def eval_psi_star(k, grid):
    if k not in (1, 2):
        raise UnsupportedPower(f"psi_star is only available for k in {{1, 2}}, got {k}")
    return Profile(grid, psi_star_values(k, grid.xi), "psi_star")


def spectral_antiderivative(grid, f):
    """Cumulative integral from the left end of a function decaying at both ends.

    ``f`` is given on the N periodic nodes.  The zero-mean part is integrated
    in Fourier space and the mean contributes the linear ramp, so the result
    is spectrally accurate and need not be periodic.
    """
    n = grid.num_points
    fh = np.fft.fft(f)
    kk = grid.wavenumbers
    mean = fh[0].real / n
    gh = np.zeros_like(fh)
    nz = kk != 0
    gh[nz] = fh[nz] / (1j * kk[nz])
    if n % 2 == 0:
        gh[n // 2] = 0.0
    g = np.fft.ifft(gh).real
    x = grid.xi
    out = np.empty(n + 1)
    out[:-1] = g + mean * (x[:-1] - x[0])
    out[-1] = g[0] + mean * (x[-1] - x[0])
    return out - out[0]


def antiderivative_decaying(p, role=None):
    """``int_{-L}^{xi} p`` for a profile that decays at the left end.

    Profiles that also decay on the right are integrated spectrally; otherwise
    a cumulative Simpson rule is used.
    """
    v = p.values
    tol = DECAY_TOL
    if abs(v[0]) >= tol:
        raise DecayViolation(
            f"antiderivative needs decay at the left end, got {abs(v[0]):.3e}"
        )
    if role is None:
        role = "eta_star" if p.role == "psi_star" else "q_antiderivative"
    if abs(v[-1]) < tol:
        out = spectral_antiderivative(p.grid, p.periodic)
    else:
        from scipy.integrate import cumulative_simpson

        out = cumulative_simpson(v, dx=p.grid.h, initial=0.0)
    return Profile(p.grid, out, role)


def eval_eta_star(k, grid):
    return antiderivative_decaying(eval_psi_star(k, grid), role="eta_star")


def eval_q(params, grid):
    """``d_xi^{-1} d_c u_c``, built through the decaying antiderivative."""
    _, dc = eval_soliton_derivatives(params, grid)
    return antiderivative_decaying(dc, role="q_antiderivative")
