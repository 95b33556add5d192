"""Time evolution on phase space.

Gridded Vlasov solvers use Strang splitting with semi-Lagrangian cubic-spline
shifts: periodic in x, zero inflow at the velocity cut-off. Particle paths
are advanced with velocity Verlet. The isothermal Euler reference uses a
first-order local Lax-Friedrichs finite-volume scheme.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import TimeStepError, TruncationError, VacuumError
from .fields import FieldState, solve_poisson_boltzmann, solve_scaled_poisson
from .phase_space import (
    DEFAULT_BOUNDARY_FRACTION,
    GriddedDistribution,
    ParticleEnsemble,
    minimal_image,
    moments,
    wrap,
)

log = logging.getLogger(__name__)

C_OSC = 0.2
CLIP_TOLERANCE = 1e-6
DIAGNOSTIC_COLUMNS = ("t", "mass", "kinetic_energy", "field_energy", "rho_min", "rho_max", "clipped_mass")


def free_flow(e: ParticleEnsemble, t) -> ParticleEnsemble:
    """Exact free transport ``(x, v) -> (x + t v, v)``."""
    return ParticleEnsemble(wrap(e.x + t * e.v), e.v, e.w)


# --- gridded Vlasov ------------------------------------------------------------


def _shift_x(values, shifts_cells):
    """``out[i, j] = f(x_i - s_j)`` with a periodic cubic spline in x."""
    nx, nv = values.shape
    i = np.arange(nx, dtype=float)[:, None] - shifts_cells[None, :]
    j = np.broadcast_to(np.arange(nv, dtype=float)[None, :], (nx, nv))
    return ndimage.map_coordinates(values, [i, j], order=3, mode="grid-wrap")


def _shift_v(values, shifts_cells):
    """``out[i, j] = f(v_j - s_i)``; zero outside the velocity window."""
    nx, nv = values.shape
    i = np.broadcast_to(np.arange(nx, dtype=float)[:, None], (nx, nv))
    j = np.arange(nv, dtype=float)[None, :] - shifts_cells[:, None]
    return ndimage.map_coordinates(values, [i, j], order=3, mode="grid-constant", cval=0.0)


def kernel_force(rho, kernel):
    """``F(x_i) = sum_l K(x_i - x_l) rho_l dx`` as a circular convolution."""
    nx = rho.shape[0]
    offsets = np.arange(nx) / nx
    kvals = kernel(offsets)
    return np.real(np.fft.ifft(np.fft.fft(kvals) * np.fft.fft(rho))) / nx


def sine_kernel(strength):
    """``K(x) = B sin(2 pi x) / (2 pi)``, whose derivative has sup norm B."""
    return lambda x: strength * np.sin(2.0 * np.pi * np.asarray(x)) / (2.0 * np.pi)


def field_for(model, rho, epsilon, kernel=None) -> FieldState:
    """Self-consistent field of the given model from a density."""
    if model == "vp":
        # track the background at the current mass so O(1e-10) drift from the
        # velocity cut-off does not make the torus problem unsolvable
        return solve_scaled_poisson(rho - rho.mean() + 1.0, epsilon)
    if model == "vpme":
        return solve_poisson_boltzmann(rho, epsilon)
    if model == "kernel":
        e = kernel_force(rho, kernel)
        return FieldState(u=np.zeros_like(e), e=e, epsilon=float(epsilon))
    raise ValueError(f"unknown model {model!r}")


def check_time_step(epsilon, dt, c_osc=C_OSC):
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    limit = c_osc * epsilon
    if dt > limit * (1 + 1e-12):
        raise TimeStepError(f"dt={dt:g} does not resolve the plasma period 2*pi*{epsilon:g}", limit)


class FieldHistory:
    """Field ``E(t, x)`` frozen from solver output.

    Piecewise linear in time between stored slices (constant outside the
    stored range), trigonometric interpolation in x.
    """

    def __init__(self, times, fields):
        self.times = np.asarray(times, dtype=float)
        self.fields = np.asarray(fields, dtype=float)
        if self.fields.ndim != 2 or self.fields.shape[0] != self.times.shape[0]:
            raise ValueError("fields must be (n_times, nx) matching times")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        nx = self.fields.shape[1]
        coef = np.fft.rfft(self.fields, axis=1) / nx
        coef[:, 1:] *= 2.0
        if nx % 2 == 0:
            coef[:, -1] /= 2.0
        # samples sit at cell centres x_i = (i + 1/2) / nx
        coef *= np.exp(-1j * np.pi * np.arange(coef.shape[1]) / nx)
        self._coef = coef
        self._modes = 2.0 * np.pi * np.arange(coef.shape[1])

    def coefficients(self, t):
        ts = self.times
        if t <= ts[0]:
            return self._coef[0]
        if t >= ts[-1]:
            return self._coef[-1]
        k = int(np.searchsorted(ts, t, side="right")) - 1
        a = (t - ts[k]) / (ts[k + 1] - ts[k])
        return (1.0 - a) * self._coef[k] + a * self._coef[k + 1]

    def __call__(self, t, x):
        c = self.coefficients(t)
        x = np.asarray(x, dtype=float)
        phase = np.exp(1j * np.multiply.outer(x, self._modes))
        return np.real(phase @ c)

    def grid_values(self, t):
        nx = self.fields.shape[1]
        return self(t, (np.arange(nx) + 0.5) / nx)


@dataclass
class SimulationResult:
    final: GriddedDistribution
    times: np.ndarray
    rho: np.ndarray
    j: np.ndarray
    diagnostics: list
    field_history: FieldHistory
    snapshots: list = field(default_factory=list)

    def diagnostics_csv(self):
        lines = [",".join(DIAGNOSTIC_COLUMNS)]
        for row in self.diagnostics:
            lines.append(",".join(repr(float(row[c])) for c in DIAGNOSTIC_COLUMNS))
        return "\n".join(lines) + "\n"

    @property
    def rho_sup(self):
        return self.rho.max(axis=1)


def _energies(f: GriddedDistribution, fs: FieldState, epsilon, model):
    g = f.grid
    kinetic = 0.5 * float(np.sum(f.values @ (g.v**2))) * g.cell_area
    if model == "vp":
        field_energy = 0.5 * epsilon**2 * float(np.sum(fs.e**2)) * g.dx
    else:
        field_energy = 0.0
    return kinetic, field_energy


def simulate(
    f0: GriddedDistribution,
    epsilon,
    dt,
    steps,
    model="vp",
    kernel=None,
    snapshot_every=0,
    c_osc=C_OSC,
    boundary_fraction=DEFAULT_BOUNDARY_FRACTION,
    clip_tolerance=CLIP_TOLERANCE,
):
    """Advance ``f0`` by ``steps`` Strang steps of the chosen Vlasov model.

    Per step: half x-shift by ``v dt/2``, field solve on the shifted density,
    full v-shift by ``E dt``, half x-shift. Negative undershoots are clipped
    and counted; a step that clips more than ``clip_tolerance`` of the mass,
    or leaves more than ``boundary_fraction`` of it in the outermost velocity
    cells, raises ``TruncationError``.
    """
    if model not in ("vp", "vpme", "kernel"):
        raise ValueError(f"unknown model {model!r}")
    if model == "kernel" and kernel is None:
        raise ValueError("kernel model needs a kernel")
    if model == "vp":
        defect = f0.density().mean() - 1.0
        if abs(defect) > 1e-10:
            raise ValueError(f"VP data must have mean density 1 (defect {defect:.3e})")
    if model != "kernel":
        check_time_step(epsilon, dt, c_osc)
    steps = int(steps)
    g = f0.grid
    mass0 = f0.mass
    half_x = g.v * (0.5 * dt) / g.dx
    values = np.array(f0.values)

    fs = field_for(model, f0.density(), epsilon, kernel)
    field_times = [0.0]
    field_slices = [fs.e]
    m = moments(f0)
    rho_hist = [m.rho]
    j_hist = [m.j]
    ke, fe = _energies(f0, fs, epsilon, model)
    diagnostics = [dict(t=0.0, mass=mass0, kinetic_energy=ke, field_energy=fe,
                        rho_min=float(m.rho.min()), rho_max=float(m.rho.max()), clipped_mass=0.0)]
    snapshots = [(0.0, f0)] if snapshot_every else []

    def clip(arr):
        neg = arr < 0
        if not neg.any():
            return arr, 0.0
        lost = -float(arr[neg].sum()) * g.cell_area
        arr = np.where(neg, 0.0, arr)
        return arr, lost

    for n in range(steps):
        t = n * dt
        values, c1 = clip(_shift_x(values, half_x))
        rho = values.sum(axis=1) * g.dv
        fs = field_for(model, rho, epsilon, kernel)
        field_times.append(t + 0.5 * dt)
        field_slices.append(fs.e)
        values, c2 = clip(_shift_v(values, fs.e * dt / g.dv))
        values, c3 = clip(_shift_x(values, half_x))
        clipped = c1 + c2 + c3
        if clipped > clip_tolerance * mass0:
            raise TruncationError(f"step {n}: clipped negative mass {clipped:.3e} exceeds {clip_tolerance:g} of total")
        if clipped:
            log.debug("step %d clipped %.3e of negative mass", n, clipped)
        f = GriddedDistribution(g, values)
        if f.boundary_fraction() > boundary_fraction:
            raise TruncationError(
                f"step {n}: {f.boundary_fraction():.3e} of the mass reached the velocity cut-off "
                f"(limit {boundary_fraction:g}); increase v_max"
            )
        m = moments(f)
        rho_hist.append(m.rho)
        j_hist.append(m.j)
        fs_diag = field_for(model, m.rho, epsilon, kernel) if model == "vp" else fs
        ke, fe = _energies(f, fs_diag, epsilon, model)
        diagnostics.append(dict(t=(n + 1) * dt, mass=f.mass, kinetic_energy=ke, field_energy=fe,
                                rho_min=float(m.rho.min()), rho_max=float(m.rho.max()), clipped_mass=clipped))
        if snapshot_every and (n + 1) % snapshot_every == 0:
            snapshots.append(((n + 1) * dt, f))

    final = GriddedDistribution(g, values)
    # close the field history at the final time so closures cover [0, T]
    fs_end = field_for(model, final.density(), epsilon, kernel)
    if steps:
        field_times.append(steps * dt)
        field_slices.append(fs_end.e)
    return SimulationResult(
        final=final,
        times=np.arange(steps + 1) * dt,
        rho=np.array(rho_hist),
        j=np.array(j_hist),
        diagnostics=diagnostics,
        field_history=FieldHistory(field_times, field_slices) if steps else FieldHistory([0.0, 1.0], [fs.e, fs.e]),
        snapshots=snapshots,
    )


def advance_vp(f, epsilon, dt, steps, **kw) -> GriddedDistribution:
    """Scaled Vlasov-Poisson: field from ``-eps^2 U'' = rho - 1``."""
    return simulate(f, epsilon, dt, steps, model="vp", **kw).final


def advance_vpme(f, epsilon, dt, steps, **kw) -> GriddedDistribution:
    """Vlasov with massless electrons: field from ``eps^2 U'' = e^U - rho``."""
    return simulate(f, epsilon, dt, steps, model="vpme", **kw).final


def advance_kernel(f, kernel, dt, steps, **kw) -> GriddedDistribution:
    """Vlasov with a smooth interaction: force ``K * rho``."""
    return simulate(f, 1.0, dt, steps, model="kernel", kernel=kernel, **kw).final


def total_energy(f: GriddedDistribution, epsilon):
    fs = solve_scaled_poisson(f.density() - f.density().mean() + 1.0, epsilon)
    ke, fe = _energies(f, fs, epsilon, "vp")
    return ke + fe


# --- characteristics ---------------------------------------------------------


@dataclass
class Trajectories:
    """Sampled 1D particle paths. ``x`` holds continuous lifts (not wrapped)."""

    times: np.ndarray
    x: np.ndarray
    v: np.ndarray

    def at(self, t):
        ts = self.times
        if t < ts[0] - 1e-12 or t > ts[-1] + 1e-12:
            raise ValueError(f"time {t} outside trajectory table [{ts[0]}, {ts[-1]}]")
        k = int(np.clip(np.searchsorted(ts, t), 0, ts.size - 1))
        if abs(ts[k] - t) <= 1e-12:
            return self.x[k], self.v[k]
        k -= 1
        a = (t - ts[k]) / (ts[k + 1] - ts[k])
        return (1 - a) * self.x[k] + a * self.x[k + 1], (1 - a) * self.v[k] + a * self.v[k + 1]

    @property
    def n(self):
        return self.x.shape[1]


def verlet(accel, x0, v0, dt, steps, t0=0.0):
    """Velocity Verlet for ``x' = v, v' = accel(t, x)``; returns lifted paths."""
    x = np.array(x0, dtype=float).reshape(-1)
    v = np.array(v0, dtype=float).reshape(-1)
    xs = [x.copy()]
    vs = [v.copy()]
    a = accel(t0, x)
    for n in range(int(steps)):
        t = t0 + n * dt
        v_half = v + 0.5 * dt * a
        x = x + dt * v_half
        a = accel(t + dt, x)
        v = v_half + 0.5 * dt * a
        xs.append(x.copy())
        vs.append(v.copy())
    return Trajectories(t0 + np.arange(int(steps) + 1) * dt, np.array(xs), np.array(vs))


@dataclass
class CharacteristicPair:
    """Two characteristic systems sampled on a common time grid.

    ``x1``, ``x2`` are continuous lifts; ``r = dX - t dV`` with ``dX`` the
    minimal-image displacement fixed at t = 0 and followed continuously.
    ``residual_r`` and ``residual_dv`` are the discrete defects of
    ``R' = -t (E1 - E2)`` and ``dV' = E1 - E2`` (NaN at the end points).
    """

    t: np.ndarray
    x1: np.ndarray
    v1: np.ndarray
    x2: np.ndarray
    v2: np.ndarray
    r: np.ndarray
    dv_abs: np.ndarray
    residual_r: np.ndarray
    residual_dv: np.ndarray

    @property
    def dx(self):
        shift = self.r[0] - (self.x1[0] - self.x2[0])
        return self.x1 - self.x2 + shift

    @property
    def first(self):
        return Trajectories(self.t, self.x1, self.v1)

    @property
    def second(self):
        return Trajectories(self.t, self.x2, self.v2)


def integrate_pair(E1, E2, z1, z2, dt, steps) -> CharacteristicPair:
    """Advance ``x' = v, v' = E_i(t, x)`` for two sets of initial points.

    ``E1``, ``E2`` are callables ``(t, x_array) -> array``; ``z1``, ``z2`` are
    ``(x, v)`` pairs of scalars or equal-length arrays.
    """
    tr1 = verlet(E1, z1[0], z1[1], dt, steps)
    tr2 = verlet(E2, z2[0], z2[1], dt, steps)
    t = tr1.times
    lift = minimal_image(tr1.x[0] - tr2.x[0]) - (tr1.x[0] - tr2.x[0])
    dx = tr1.x - tr2.x + lift
    dv = tr1.v - tr2.v
    r = dx - t[:, None] * dv
    de = np.array([E1(tk, x1) - E2(tk, x2) for tk, x1, x2 in zip(t, tr1.x, tr2.x)])
    res_r = np.full_like(r, np.nan)
    res_dv = np.full_like(r, np.nan)
    if len(t) >= 3:
        res_r[1:-1] = np.abs((r[2:] - r[:-2]) / (2 * dt) + t[1:-1, None] * de[1:-1])
        res_dv[1:-1] = np.abs((dv[2:] - dv[:-2]) / (2 * dt) - de[1:-1])
    return CharacteristicPair(t, tr1.x, tr1.v, tr2.x, tr2.v, r, np.abs(dv), res_r, res_dv)


def mean_field_accel(kernel, weights):
    """Acceleration ``sum_j w_j K(x - x_j)`` of an ensemble on itself."""
    w = np.asarray(weights, dtype=float)

    def accel(t, x):
        return kernel(x[:, None] - x[None, :]) @ w

    return accel


def kernel_flow(e: ParticleEnsemble, kernel, dt, steps) -> Trajectories:
    """Empirical-measure solution of the Vlasov equation with force ``K * rho``."""
    if e.dim != 1:
        raise ValueError("kernel_flow supports 1D1V ensembles")
    return verlet(mean_field_accel(kernel, e.w), e.x[:, 0], e.v[:, 0], dt, steps)


# --- isothermal Euler --------------------------------------------------------


@dataclass(frozen=True)
class FluidState:
    rho: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        u = np.broadcast_to(np.asarray(self.u, dtype=float), rho.shape).copy()
        if np.any(rho <= 0):
            raise VacuumError("isothermal Euler state needs rho > 0")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "u", u)

    @property
    def momentum(self):
        return self.rho * self.u

    @property
    def dx(self):
        return 1.0 / self.rho.shape[0]

    def max_dt(self, cfl=0.5):
        return cfl * self.dx / (np.max(np.abs(self.u)) + 1.0)


def isothermal_euler_step(s: FluidState, dt) -> FluidState:
    """One local Lax-Friedrichs step for ``(rho, rho u)`` with pressure ``p = rho``."""
    limit = s.max_dt()
    if dt > limit * (1 + 1e-12):
        raise TimeStepError("isothermal Euler CFL condition violated", limit)
    rho, m, u = s.rho, s.momentum, s.u
    flux_rho = m
    flux_m = m * u + rho
    speed = np.abs(u) + 1.0
    rho_r, m_r = np.roll(rho, -1), np.roll(m, -1)
    a = np.maximum(speed, np.roll(speed, -1))
    f_rho = 0.5 * (flux_rho + np.roll(flux_rho, -1)) - 0.5 * a * (rho_r - rho)
    f_m = 0.5 * (flux_m + np.roll(flux_m, -1)) - 0.5 * a * (m_r - m)
    lam = dt / s.dx
    rho_new = rho - lam * (f_rho - np.roll(f_rho, 1))
    m_new = m - lam * (f_m - np.roll(f_m, 1))
    if np.any(rho_new < 1e-12):
        raise VacuumError(f"density dropped to {rho_new.min():.3e}")
    return FluidState(rho_new, m_new / rho_new)


def run_isothermal_euler(s: FluidState, t_final, cfl=0.45, sample_times=None):
    """Integrate to ``t_final``; returns ``(times, states)`` at ``sample_times``
    (default: every step). Steps are shortened to land on sample times."""
    targets = list(sample_times) if sample_times is not None else None
    times, states = [0.0], [s]
    t = 0.0
    while t < t_final - 1e-14:
        dt = min(s.max_dt(cfl), t_final - t)
        if targets:
            while targets and targets[0] <= t + 1e-14:
                targets.pop(0)
            if targets:
                dt = min(dt, targets[0] - t)
        s = isothermal_euler_step(s, dt)
        t += dt
        if sample_times is None or any(abs(t - ts) < 1e-12 for ts in sample_times):
            times.append(t)
            states.append(s)
    return np.array(times), states


def steepening_time(s: FluidState, factor=3.0, t_max=10.0, cfl=0.45):
    """First time at which ``max |d rho/dx|`` reaches ``factor`` times its
    initial value (``t_max`` if it never does)."""
    def grad(st):
        return np.max(np.abs(np.roll(st.rho, -1) - st.rho)) / st.dx

    g0 = grad(s)
    if g0 == 0:
        return float(t_max)
    t = 0.0
    while t < t_max:
        dt = min(s.max_dt(cfl), t_max - t)
        s = isothermal_euler_step(s, dt)
        t += dt
        if grad(s) >= factor * g0:
            return t
    return float(t_max)
