"""Periodic elliptic solves for the potential.

All operators act on the uniform cell-centred grid of the unit torus and use
trigonometric (FFT) differentiation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ChargeImbalanceError, ConvergenceError

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 50
LOG_FLOOR = 1e-10


@dataclass(frozen=True)
class FieldState:
    """Potential ``u`` and field ``e = -u'`` on the spatial grid.

    ``epsilon`` is the scaled Debye ratio used to produce them (0 marks the
    quasineutral limit potential). ``iterations`` and ``residual`` are filled
    in by the iterative solver.
    """

    u: np.ndarray
    e: np.ndarray
    epsilon: float
    iterations: int = 0
    residual: float = 0.0

    @property
    def nx(self):
        return self.u.shape[0]

    @property
    def x(self):
        return (np.arange(self.nx) + 0.5) / self.nx


@dataclass(frozen=True)
class PlasmaParameters:
    temperature: float
    density: float
    permittivity: float
    boltzmann: float
    charge: float

    def __post_init__(self):
        for name in ("temperature", "density", "permittivity", "boltzmann", "charge"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def wavenumbers(nx):
    return 2.0 * np.pi * np.fft.fftfreq(nx, d=1.0 / nx)


def spectral_derivative(u, order=1):
    """Periodic derivative of a real grid function; the Nyquist mode is
    dropped for odd orders."""
    n = u.shape[-1]
    k = wavenumbers(n)
    ik = (1j * k) ** order
    if order % 2 == 1 and n % 2 == 0:
        ik[n // 2] = 0.0
    return np.real(np.fft.ifft(ik * np.fft.fft(u)))


def _field_from_potential(u):
    e = -spectral_derivative(u)
    return e - e.mean()


def _check_size(a):
    if a.ndim != 1 or a.shape[0] < 4:
        raise ValueError(f"expected a 1D grid function with at least 4 points, got shape {a.shape}")


def solve_scaled_poisson(rho, epsilon) -> FieldState:
    """Zero-mean solution of ``-eps^2 U'' = rho - 1`` and ``E = -U'``."""
    rho = np.asarray(rho, dtype=float)
    _check_size(rho)
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    defect = rho.mean() - 1.0
    if abs(defect) > 1e-10:
        raise ChargeImbalanceError(defect)
    k2 = wavenumbers(rho.shape[0]) ** 2
    src = np.fft.fft(rho - 1.0)
    src[0] = 0.0
    k2[0] = 1.0
    base = np.real(np.fft.ifft(src / k2))
    u = base / epsilon**2
    u = u - u.mean()
    return FieldState(u=u, e=_field_from_potential(u), epsilon=float(epsilon))


def poisson_boltzmann_residual(u, rho, epsilon):
    """``eps^2 U'' - e^U + rho`` evaluated spectrally."""
    return epsilon**2 * spectral_derivative(u, 2) - np.exp(u) + rho


def _second_derivative_matrix(nx):
    k2 = wavenumbers(nx) ** 2
    eye = np.eye(nx)
    return np.real(np.fft.ifft(-k2[:, None] * np.fft.fft(eye, axis=0), axis=0))


def solve_poisson_boltzmann(rho, epsilon, tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER) -> FieldState:
    """Damped Newton solve of ``eps^2 U'' = e^U - rho``.

    Starts from the quasineutral guess ``U = log(rho)``; each Newton step is
    halved until the sup-norm residual decreases. The potential is not
    normalised, the exponential fixes the constant.
    """
    rho = np.asarray(rho, dtype=float)
    _check_size(rho)
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if np.any(rho < 0):
        raise ValueError("rho must be nonnegative")
    if not rho.mean() > 0:
        raise ValueError("rho must have positive mean")
    nx = rho.shape[0]
    lap = epsilon**2 * _second_derivative_matrix(nx)
    u = np.log(np.maximum(rho, LOG_FLOOR))
    res = poisson_boltzmann_residual(u, rho, epsilon)
    norm = float(np.max(np.abs(res)))
    history = [norm]
    it = 0
    while norm > tol:
        if it >= max_iter:
            raise ConvergenceError(f"Newton did not reach tol={tol:g} in {max_iter} iterations", history)
        jac = lap - np.diag(np.exp(u))
        step = np.linalg.solve(jac, -res)
        s = 1.0
        while True:
            trial = u + s * step
            trial_res = poisson_boltzmann_residual(trial, rho, epsilon)
            trial_norm = float(np.max(np.abs(trial_res)))
            if trial_norm < norm or s < 1e-8:
                break
            s *= 0.5
        if trial_norm >= norm:
            raise ConvergenceError("damped Newton step failed to decrease the residual", history + [trial_norm])
        u, res, norm = trial, trial_res, trial_norm
        history.append(norm)
        it += 1
    return FieldState(u=u, e=_field_from_potential(u), epsilon=float(epsilon), iterations=it, residual=norm)


def solve_limit_potential(pi) -> FieldState:
    """Compatibility potential of the quasineutral limit, ``-U'' = Pi''``.

    In one dimension this is ``U = -(Pi - mean(Pi))``.
    """
    pi = np.asarray(pi, dtype=float)
    _check_size(pi)
    u = -(pi - pi.mean())
    return FieldState(u=u, e=_field_from_potential(u), epsilon=0.0)


def debye_length(p: PlasmaParameters) -> float:
    return math.sqrt(p.permittivity * p.boltzmann * p.temperature / (p.density * p.charge**2))


def screening_profile(defect_amplitude, defect_width, epsilon, nx=1024, center=0.5):
    """Potential screening a Gaussian charge defect, from ``eps^2 U'' = U - rho_ext``.

    The defect has peak ``defect_amplitude`` and standard deviation
    ``defect_width`` around ``center``.
    """
    dx = 1.0 / nx
    if defect_width < 3 * dx:
        raise ValueError(f"defect_width {defect_width:g} is below 3*dx = {3 * dx:g}")
    if not epsilon >= 2 * dx:
        raise ValueError(f"epsilon {epsilon:g} is not resolved on nx={nx} (needs >= {2 * dx:g})")
    if not epsilon < 0.5:
        raise ValueError("screening needs epsilon well below the period")
    x = (np.arange(nx) + 0.5) * dx
    d = x - center
    d -= np.round(d)
    src = defect_amplitude * np.exp(-0.5 * (d / defect_width) ** 2)
    k2 = wavenumbers(nx) ** 2
    return np.real(np.fft.ifft(np.fft.fft(src) / (1.0 + epsilon**2 * k2)))


def fit_decay_rate(u, epsilon, center=0.5, window=(3.0, 8.0)):
    """Least-squares slope of ``-log|U|`` against distance from ``center``,
    using points whose distance lies in ``window`` (in units of epsilon)."""
    u = np.asarray(u, dtype=float)
    nx = u.shape[0]
    x = (np.arange(nx) + 0.5) / nx
    d = np.abs(x - center)
    d = np.minimum(d, 1.0 - d)
    sel = (d >= window[0] * epsilon) & (d <= window[1] * epsilon) & (np.abs(u) > 0)
    if sel.sum() < 3:
        raise ValueError("not enough points in the fit window")
    slope, _ = np.polyfit(d[sel], np.log(np.abs(u[sel])), 1)
    return float(-slope)
