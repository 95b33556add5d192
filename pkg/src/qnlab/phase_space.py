"""Phase-space containers: the periodic 1D1V grid, gridded densities, particle
ensembles and velocity moments.

Positions live on the unit torus; velocities are truncated to
``[-v_max, v_max]`` on grids, unbounded for ensembles.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_BOUNDARY_FRACTION = 1e-8


def wrap(x):
    """Map positions onto [0, 1)."""
    y = np.mod(x, 1.0)
    # np.mod can return exactly 1.0 for tiny negative inputs
    return np.where(y >= 1.0, 0.0, y)


def minimal_image(dx):
    """Representative of a periodic displacement in [-1/2, 1/2]."""
    return dx - np.round(dx)


@dataclass(frozen=True)
class TorusPoint:
    coords: tuple

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(wrap(np.asarray(self.coords, dtype=float))))
        object.__setattr__(self, "coords", c)

    @property
    def dim(self):
        return len(self.coords)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coords, dtype=dtype)


def torus_distance(x, y):
    """Periodic distance ``min_m |x - y + m|`` on the unit torus.

    Accepts ``TorusPoint`` objects or arrays whose last axis is the dimension;
    broadcasting is applied over leading axes.
    """
    a = np.asarray(x, dtype=float)
    b = np.asarray(y, dtype=float)
    if a.ndim == 0:
        a = a[None]
    if b.ndim == 0:
        b = b[None]
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    d = minimal_image(a - b)
    out = np.sqrt(np.sum(d * d, axis=-1))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PhaseGrid:
    nx: int
    nv: int
    v_max: float

    def __post_init__(self):
        if int(self.nx) < 4 or int(self.nv) < 4:
            raise ValueError(f"grid needs nx, nv >= 4, got nx={self.nx}, nv={self.nv}")
        if not self.v_max > 0:
            raise ValueError(f"v_max must be positive, got {self.v_max}")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "nv", int(self.nv))
        object.__setattr__(self, "v_max", float(self.v_max))

    @property
    def dx(self):
        return 1.0 / self.nx

    @property
    def dv(self):
        return 2.0 * self.v_max / self.nv

    @property
    def x(self):
        return (np.arange(self.nx) + 0.5) * self.dx

    @property
    def v(self):
        return -self.v_max + (np.arange(self.nv) + 0.5) * self.dv

    @property
    def cell_area(self):
        return self.dx * self.dv


@dataclass(frozen=True)
class GriddedDistribution:
    """Phase-space density ``f[i, j] ~ f(x_i, v_j)`` (mass per unit dx*dv)."""

    grid: PhaseGrid
    values: np.ndarray
    mass: float = field(init=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True)
        if vals.shape != (self.grid.nx, self.grid.nv):
            raise ValueError(f"values shape {vals.shape} does not match grid {(self.grid.nx, self.grid.nv)}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("values must be finite")
        if np.any(vals < 0):
            raise ValueError(f"negative density values (min {vals.min():.3e})")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "mass", float(vals.sum() * self.grid.cell_area))

    def density(self):
        return self.values.sum(axis=1) * self.grid.dv

    def boundary_fraction(self):
        """Fraction of the mass sitting in the first and last velocity cells."""
        if self.mass == 0:
            return 0.0
        edge = self.values[:, 0].sum() + self.values[:, -1].sum()
        return float(edge * self.grid.cell_area / self.mass)

    def to_text(self):
        g = self.grid
        buf = io.StringIO()
        buf.write(f"{g.nx} {g.nv} {g.v_max!r}\n")
        for row in self.values:
            buf.write(" ".join(repr(float(val)) for val in row))
            buf.write("\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text):
        tokens = text.split()
        if len(tokens) < 3:
            raise ValueError("distribution text needs a 'nx nv v_max' header")
        nx, nv, v_max = int(tokens[0]), int(tokens[1]), float(tokens[2])
        body = np.array([float(t) for t in tokens[3:]])
        if body.size != nx * nv:
            raise ValueError(f"expected {nx * nv} values, found {body.size}")
        return cls(PhaseGrid(nx, nv, v_max), body.reshape(nx, nv))

    def save(self, path):
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path):
        return cls.from_text(Path(path).read_text())


@dataclass(frozen=True)
class ParticleEnsemble:
    """Weighted points on T^d x R^d; arrays are (n, d), (n, d), (n,)."""

    x: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float, copy=True)
        v = np.array(self.v, dtype=float, copy=True)
        w = np.array(self.w, dtype=float, copy=True).reshape(-1)
        if x.ndim == 1:
            x = x[:, None]
        if v.ndim == 1:
            v = v[:, None]
        if x.shape != v.shape or x.shape[0] != w.shape[0]:
            raise ValueError(f"inconsistent shapes x{x.shape} v{v.shape} w{w.shape}")
        if not 1 <= x.shape[1] <= 3:
            raise ValueError(f"dimension must be 1..3, got {x.shape[1]}")
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
        x = wrap(x)
        for arr in (x, v, w):
            arr.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "w", w)

    @classmethod
    def uniform_weights(cls, x, v):
        n = np.asarray(x).shape[0]
        return cls(x, v, np.full(n, 1.0 / n))

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def dim(self):
        return self.x.shape[1]

    def to_csv(self):
        d = self.dim
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"x_{k}" for k in range(d)] + [f"v_{k}" for k in range(d)] + ["w"])
        for xi, vi, wi in zip(self.x, self.v, self.w):
            writer.writerow([repr(float(a)) for a in xi] + [repr(float(a)) for a in vi] + [repr(float(wi))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], [r for r in rows[1:] if r]
        d = sum(1 for h in header if h.startswith("x_"))
        if header != [f"x_{k}" for k in range(d)] + [f"v_{k}" for k in range(d)] + ["w"]:
            raise ValueError(f"unexpected ensemble header {header}")
        data = np.array(body, dtype=float).reshape(-1, 2 * d + 1)
        return cls(data[:, :d], data[:, d:2 * d], data[:, -1])

    def save(self, path):
        Path(path).write_text(self.to_csv())

    @classmethod
    def load(cls, path):
        return cls.from_csv(Path(path).read_text())


@dataclass(frozen=True)
class MomentFields:
    rho: np.ndarray
    j: np.ndarray
    pi: np.ndarray

    @property
    def velocity(self):
        """Mean velocity j / rho (zero where rho vanishes)."""
        return np.divide(self.j, self.rho, out=np.zeros_like(self.j), where=self.rho > 0)


def moments(f: GriddedDistribution) -> MomentFields:
    """Density, current and second velocity moment by midpoint quadrature in v."""
    v = f.grid.v
    dv = f.grid.dv
    vals = f.values
    return MomentFields(
        rho=vals.sum(axis=1) * dv,
        j=vals @ v * dv,
        pi=vals @ (v * v) * dv,
    )


def sample_particles(f: GriddedDistribution, n: int, seed: int) -> ParticleEnsemble:
    """Equal-weight particles by stratified inverse-CDF sampling over cells.

    Cell ``i * nv + j`` is picked with probability proportional to its mass,
    then the point is placed uniformly inside the cell.
    """
    if n <= 0:
        raise ValueError(f"number of particles must be positive, got {n}")
    if f.mass <= 0:
        raise ValueError("cannot sample from a distribution with zero mass")
    g = f.grid
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(f.values.ravel())
    cdf /= cdf[-1]
    u = (np.arange(n) + rng.random(n)) / n
    cells = np.searchsorted(cdf, u, side="right")
    cells = np.minimum(cells, cdf.size - 1)
    i, j = np.divmod(cells, g.nv)
    jitter = rng.random((n, 2))
    x = (i + jitter[:, 0]) * g.dx
    v = -g.v_max + (j + jitter[:, 1]) * g.dv
    return ParticleEnsemble.uniform_weights(x[:, None], v[:, None])


def _linear_weights(frac_index, n):
    """Left index and right weight for linear deposition on n nodes (clamped)."""
    s = np.clip(frac_index, 0.0, n - 1.0)
    left = np.minimum(np.floor(s).astype(int), n - 2)
    return left, s - left


def deposit(e: ParticleEnsemble, grid: PhaseGrid, mass: float = 1.0) -> GriddedDistribution:
    """Cloud-in-cell deposition of a 1D1V ensemble onto ``grid``.

    Periodic in x. In v, particles beyond the outermost cell centre are
    assigned to the edge cell so that no mass is lost.
    """
    if e.dim != 1:
        raise ValueError("deposit supports 1D1V ensembles only")
    x = e.x[:, 0]
    v = e.v[:, 0]
    bad = np.flatnonzero(np.abs(v) > grid.v_max)
    if bad.size:
        raise ValueError(f"velocities outside [-v_max, v_max] at particle indices {bad.tolist()}")
    m = e.w * mass
    sx = x / grid.dx - 0.5
    ix = np.floor(sx).astype(int)
    wx = sx - ix
    jl, wv = _linear_weights((v + grid.v_max) / grid.dv - 0.5, grid.nv)
    out = np.zeros((grid.nx, grid.nv))
    for di, ax in ((0, 1.0 - wx), (1, wx)):
        for dj, av in ((0, 1.0 - wv), (1, wv)):
            np.add.at(out, (np.mod(ix + di, grid.nx), jl + dj), m * ax * av)
    return GriddedDistribution(grid, out / grid.cell_area)


def monokinetic(rho, u, grid: PhaseGrid) -> GriddedDistribution:
    """Tent-profile stand-in for ``rho(x) * delta(v - u(x))``.

    The hat of half-width dv centred at u(x) reproduces rho and rho*u exactly
    and rho*u^2 up to ``rho * dv^2 / 4``.
    """
    rho = np.broadcast_to(np.asarray(rho, dtype=float), (grid.nx,))
    u = np.broadcast_to(np.asarray(u, dtype=float), (grid.nx,))
    if np.any(rho < 0):
        raise ValueError("rho must be nonnegative")
    if np.any(np.abs(u) >= grid.v_max - grid.dv):
        raise ValueError(f"|u| must stay below v_max - dv = {grid.v_max - grid.dv:.6g}")
    hat = np.maximum(0.0, 1.0 - np.abs(grid.v[None, :] - u[:, None]) / grid.dv)
    return GriddedDistribution(grid, rho[:, None] * hat / grid.dv)


def maxwellian(rho, u, temperature, grid: PhaseGrid) -> GriddedDistribution:
    """``rho(x) * N(u(x), temperature)`` in v, renormalised per cell so that the
    discrete density equals rho exactly."""
    rho = np.broadcast_to(np.asarray(rho, dtype=float), (grid.nx,))
    u = np.broadcast_to(np.asarray(u, dtype=float), (grid.nx,))
    prof = np.exp(-0.5 * (grid.v[None, :] - u[:, None]) ** 2 / temperature)
    prof /= prof.sum(axis=1, keepdims=True) * grid.dv
    return GriddedDistribution(grid, rho[:, None] * prof)
