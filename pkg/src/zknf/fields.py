"""Two-dimensional fields on a periodic (xi, y) grid, y-period 2 pi."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericBlowup, ValidationError


@dataclass(frozen=True, eq=False)
class Field2D:
    values: np.ndarray = field(repr=False)  # shape (Nx, Ny); row i is x_i = -Lx + i*2Lx/Nx
    Lx: float
    time: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise ValidationError("field values must be a 2D array")
        if not np.all(np.isfinite(v)):
            raise NumericBlowup("non-finite field values", self.time)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def Nx(self):
        return self.values.shape[0]

    @property
    def Ny(self):
        return self.values.shape[1]

    @property
    def x(self):
        return x_nodes(self.Lx, self.Nx)

    @property
    def y(self):
        return y_nodes(self.Ny)

    @property
    def dx(self):
        return 2.0 * self.Lx / self.Nx

    @property
    def dy(self):
        return 2.0 * np.pi / self.Ny

    def y_mean(self):
        return self.values.mean(axis=1)

    def harmonic(self, m):
        """Complex coefficient of ``e^{i m y}`` as a function of x."""
        return np.fft.fft(self.values, axis=1)[:, m % self.Ny] / self.Ny

    def replace(self, values=None, time=None):
        return Field2D(self.values if values is None else values, self.Lx,
                       self.time if time is None else time)

    def to_csv(self, path):
        """Header line ``Lx,Nx,Ny`` then one row of Ny values per x node."""
        with open(path, "w", newline="\n") as fh:
            fh.write("Lx,Nx,Ny\n")
            fh.write(f"{self.Lx:.17g},{self.Nx},{self.Ny}\n")
            for row in self.values:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    @classmethod
    def from_csv(cls, path, time=0.0):
        with open(path) as fh:
            fh.readline()
            lx, nx, ny = fh.readline().strip().split(",")
            vals = np.loadtxt(fh, delimiter=",", ndmin=2)
        if vals.shape != (int(nx), int(ny)):
            raise ValidationError(f"snapshot shape {vals.shape} != ({nx}, {ny})")
        return cls(vals, float(lx), time)


def x_nodes(Lx, Nx):
    return -Lx + (2.0 * Lx / Nx) * np.arange(Nx)


def y_nodes(Ny):
    return (2.0 * np.pi / Ny) * np.arange(Ny)
