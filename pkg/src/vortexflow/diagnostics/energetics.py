"""Energy-based diagnostics: excess energy, the eta functional, time averages,
equipartition of the stress and the kinetic-energy comparison."""

from __future__ import annotations

import math

import numpy as np

from ..errors import UsageError
from ..field import Field, PolarGrid, cartesian_gradient, energy_density, total_energy
from ..initial_data import approximate_energy
from ..kernels import KernelContext, VortexConfiguration, as_complex


# -- smooth cutoff -------------------------------------------------------------

def _psi(t):
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)


def cutoff(s):
    """C-infinity cutoff: 1 for s <= 1, 0 for s >= 2,
    chi(s) = psi(2 - s) / (psi(2 - s) + psi(s - 1)) with psi(t) = exp(-1/t) for t > 0."""
    a, b = _psi(2.0 - np.asarray(s, dtype=float)), _psi(np.asarray(s, dtype=float) - 1.0)
    return a / (a + b)


def localizer(z, centre: complex, rho: float) -> np.ndarray:
    """phi(x - a) = (x - a) chi(|x - a| / rho) as complex numbers."""
    d = np.asarray(z, dtype=complex) - centre
    return d * cutoff(np.abs(d) / rho)


# -- excess energy --------------------------------------------------------------

def excess_energy(f: Field, ctx: KernelContext, cfg: VortexConfiguration) -> float:
    """D = E_eps(u) - [W + n (pi |log eps| + gamma)]."""
    return total_energy(f) - approximate_energy(ctx, cfg, f.epsilon)


# -- eta ------------------------------------------------------------------------

def _eta_from(vectors: np.ndarray):
    return float(np.sum(np.abs(vectors))), np.stack([vectors.real, vectors.imag], 1)


def eta(f: Field, a, rho_star: float):
    """eta = sum_j |int e_eps / |log eps| * phi(x - a_j)| and the per-vortex vectors."""
    a = np.atleast_1d(as_complex(a))
    g = f.grid
    dens = energy_density(f) * g.area / abs(math.log(f.epsilon))
    vec = np.array([np.sum(dens * localizer(g.z, aj, rho_star)) for aj in a], dtype=complex)
    return _eta_from(vec)


def eta_atomic(points, weights, a, rho_star: float):
    """eta for an energy density given as atoms sum_i w_i delta_{xi_i} (already divided by |log eps|)."""
    xi = np.atleast_1d(as_complex(points))
    w = np.asarray(weights, dtype=float).reshape(-1)
    a = np.atleast_1d(as_complex(a))
    vec = np.array([np.sum(w * localizer(xi, aj, rho_star)) for aj in a], dtype=complex)
    return _eta_from(vec)


# -- time average ------------------------------------------------------------------

def time_average(t, h, delta: float, at=None) -> np.ndarray:
    """<h>_delta(s) = (1/delta) int_{s-delta}^s h, with h piecewise linear between samples.

    Evaluated at ``at`` (default: every sample time s >= t[0] + delta).
    """
    t = np.asarray(t, dtype=float)
    h = np.asarray(h, dtype=float)
    if delta <= 0:
        raise UsageError("delta must be positive")
    if np.any(np.diff(t) <= 0):
        raise UsageError("sample times must increase")
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (h[1:] + h[:-1]) * np.diff(t))])

    def primitive(s):
        k = np.clip(np.searchsorted(t, s, side="right") - 1, 0, len(t) - 2)
        ds = s - t[k]
        slope = (h[k + 1] - h[k]) / (t[k + 1] - t[k])
        return cum[k] + h[k] * ds + 0.5 * slope * ds**2

    tol = 1e-12 * max(1.0, abs(t[-1]))
    s = t[t >= t[0] + delta - tol] if at is None else np.atleast_1d(np.asarray(at, dtype=float))
    if np.any(s - delta < t[0] - tol) or np.any(s > t[-1] + tol):
        raise UsageError("averaging window leaves the sampled interval")
    return (primitive(s) - primitive(np.maximum(s - delta, t[0]))) / delta


# -- equipartition -------------------------------------------------------------------

def ball_coverage(grid: PolarGrid, centre: complex, radius: float, sub: int = 8) -> np.ndarray:
    """Fraction of each cell's area inside the closed ball, by supersampling boundary cells."""
    z = grid.z
    dist = np.abs(z - centre)
    diam = math.hypot(grid.dr, grid.r[-1] * grid.dtheta)
    frac = (dist <= radius).astype(float)
    band = np.abs(dist - radius) <= diam
    if np.any(band):
        ii, kk = np.nonzero(band)
        off = (np.arange(sub) + 0.5) / sub - 0.5
        rs = grid.r[ii][:, None, None] + off[None, :, None] * grid.dr
        ts = grid.theta[kk][:, None, None] + off[None, None, :] * grid.dtheta
        pts = rs * np.exp(1j * ts)
        wts = np.broadcast_to(rs, pts.shape)
        inside = np.abs(pts - centre) <= radius
        frac[ii, kk] = np.sum(wts * inside, axis=(1, 2)) / np.sum(wts, axis=(1, 2))
    return frac


def stress_matrix(f: Field, xi, sigma: float) -> np.ndarray:
    """1/2 int_{B_sigma(xi)} (d_i u, d_j u)."""
    ux, uy = cartesian_gradient(f)
    w = ball_coverage(f.grid, complex(as_complex(xi)), sigma) * f.grid.area
    d = [ux, uy]
    M = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            M[i, j] = 0.5 * np.sum(w * np.real(d[i] * np.conj(d[j])))
    return M


def equipartition_check(f: Field, xi, sigma: float) -> dict:
    """Stress matrix over B_sigma(xi) against (pi/2) log(sigma/eps) times the identity."""
    if sigma <= f.epsilon:
        raise UsageError("sigma must exceed eps")
    M = stress_matrix(f, xi, sigma)
    L = math.log(sigma / f.epsilon)
    dev = M - 0.5 * math.pi * L * np.eye(2)
    frob = float(np.linalg.norm(dev))
    return {"matrix": M.tolist(), "deviation": dev.tolist(), "frobenius": frob,
            "ratio": frob / math.sqrt(L), "log_ratio": L}


def equipartition_constant(ratio: float) -> float:
    """c0(S) with each diagonal entry of an exact radial vortex equal to (pi/2) log S + c0."""
    from ..initial_data import core_energy
    return 0.5 * core_energy(ratio) - 0.5 * math.pi * math.log(ratio)


# -- kinetic comparison ------------------------------------------------------------------

def _trapz(t, y):
    t, y = np.asarray(t, dtype=float), np.asarray(y, dtype=float)
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t))) if len(t) > 1 else 0.0


def _chi_sum(grid: PolarGrid, a, rho_star: float) -> np.ndarray:
    chi = np.zeros(grid.shape)
    for aj in a:
        chi += cutoff(np.abs(grid.z - complex(aj[0], aj[1])) / rho_star)
    return np.minimum(chi, 1.0)


def _ode_side(ode_traj, t0: float, t1: float) -> float:
    if ode_traj is None or ode_traj.n == 0:
        return 0.0
    y0 = ode_traj.dense(t0 / ode_traj.time_scale)
    y1 = ode_traj.dense(t1 / ode_traj.time_scale)
    return float(y1[-1] - y0[-1])


def _report(ts, pde, ode_traj) -> dict:
    pde_side = _trapz(ts, pde)
    ode_side = _ode_side(ode_traj, ts[0], ts[-1])
    return {"window": [float(ts[0]), float(ts[-1])], "ode": ode_side, "pde": pde_side,
            "difference": pde_side - ode_side, "abs_difference": abs(pde_side - ode_side),
            "samples": len(ts)}


class KineticAccumulator:
    """Step callback for ``tdgl.run`` collecting int chi(x - a(t)) |u_t|^2 / |log eps| at every step.

    mode "difference" (default) uses the observed quotient (u^{k+1} - u^k) / dt
    with chi at the interval midpoint; its sum tracks the discrete energy drop
    even when dt is only moderately small against eps^2 / |log eps|.  mode
    "rate" evaluates the semi-discrete right-hand side at each step, which
    carries splitting error in the stiff core modes and needs much smaller dt.
    """

    def __init__(self, ode_traj, rho_star: float, window=None, mode: str = "difference"):
        if mode not in ("difference", "rate"):
            raise UsageError(f"unknown mode {mode!r}")
        self.ode_traj = ode_traj
        self.rho_star = rho_star
        self.window = window
        self.mode = mode
        self.times: list[float] = []
        self.values: list[float] = []
        self._prev = None
        self._total = 0.0

    def _inside(self, t) -> bool:
        return self.window is None or self.window[0] - 1e-12 <= t <= self.window[1] + 1e-12

    def _chi(self, grid, t):
        return _chi_sum(grid, self.ode_traj.positions_at(t), self.rho_star)

    def __call__(self, k: int, f: Field) -> None:
        t = f.time
        if not self._inside(t):
            self._prev = None
            return
        self.times.append(t)
        empty = self.ode_traj is None or self.ode_traj.n == 0
        g = f.grid
        L = abs(math.log(f.epsilon))
        if self.mode == "rate":
            from ..tdgl import rate
            v = 0.0 if empty else float(np.sum(self._chi(g, t) * np.abs(rate(f)) ** 2 * g.area)) / L
            self.values.append(v)
            return
        if self._prev is not None and not empty:
            t0, u0 = self._prev
            dt = t - t0
            q = np.abs(f.values - u0) ** 2 / dt**2
            self._total += dt * float(np.sum(self._chi(g, 0.5 * (t + t0)) * q * g.area)) / L
        self.values.append(self._total)
        self._prev = (t, f.values.copy())

    def report(self) -> dict:
        if len(self.times) < 2:
            raise UsageError("window holds fewer than two PDE samples")
        ts = np.array(self.times)
        if self.mode == "rate":
            return _report(ts, self.values, self.ode_traj)
        ode_side = _ode_side(self.ode_traj, ts[0], ts[-1])
        pde_side = self.values[-1]
        return {"window": [float(ts[0]), float(ts[-1])], "ode": ode_side, "pde": pde_side,
                "difference": pde_side - ode_side, "abs_difference": abs(pde_side - ode_side),
                "samples": len(ts)}


def kinetic_comparison(pde_traj, ode_traj, rho_star: float, window=None) -> dict:
    """pi int |a'|^2 against int int chi(x - a(t)) |u_t|^2 / |log eps| over a time window.

    ``pde_traj`` needs recorded rates; ``ode_traj`` is an OdeTrajectory on the
    same time axis (or None for an empty vortex set).  The time integral uses
    the snapshot times only; see KineticAccumulator for per-step sampling.
    """
    if pde_traj.rates is None:
        raise UsageError("PDE trajectory has no recorded rates")
    t = pde_traj.times
    lo, hi = (t[0], t[-1]) if window is None else window
    sel = (t >= lo - 1e-12) & (t <= hi + 1e-12)
    ts = t[sel]
    if len(ts) < 2:
        raise UsageError("window holds fewer than two PDE samples")
    snaps = [s for s, k in zip(pde_traj.snapshots, sel) if k]
    rates = [r for r, k in zip(pde_traj.rates, sel) if k]
    g = snaps[0].grid
    L = abs(math.log(snaps[0].epsilon))
    pde = []
    for tt, r in zip(ts, rates):
        if ode_traj is None or ode_traj.n == 0:
            pde.append(0.0)
            continue
        chi = _chi_sum(g, ode_traj.positions_at(tt), rho_star)
        pde.append(float(np.sum(chi * np.abs(r) ** 2 * g.area)) / L)
    return _report(ts, pde, ode_traj)
