"""Gradient flow of the renormalized energy: da_j/dt = -(1/pi) grad_{a_j} W.

Along exact solutions dW/dt = -pi sum_j |da_j/dt|^2, so the energy ledger is
W(a(t)) + pi * int_0^t |a'|^2 = W(a(0)).  The integral is carried as an extra
ODE component so it is integrated by the same adaptive scheme.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ConfigurationError, UsageError
from .kernels import (DISK, KernelContext, VortexConfiguration, boundary_distance,
                      grad_W, grad_W_complex, monitor_configuration, renormalized_W, rho_a,
                      validate_configuration)

log = logging.getLogger(__name__)


def rhs(ctx: KernelContext, cfg: VortexConfiguration) -> np.ndarray:
    """Velocities -(1/pi) grad W, shape (n, 2)."""
    return -grad_W(ctx, cfg) / np.pi


def _rho_fast(ctx, z):
    r = np.min(boundary_distance(ctx, z))
    if len(z) > 1:
        d = np.abs(z[:, None] - z[None, :])
        d[np.diag_indices(len(z))] = np.inf
        r = min(r, d.min())
    return r


@dataclass
class OdeTrajectory:
    """Samples of a point-vortex run.

    ``dissipation`` is pi * int_0^t |a'|^2, so W + dissipation is constant.
    """

    times: np.ndarray
    positions: np.ndarray  # (m, n, 2)
    degrees: np.ndarray
    W: np.ndarray
    dissipation: np.ndarray
    rho: np.ndarray
    stop_reason: str
    t_stop: float
    ctx: KernelContext = DISK
    dense: object = field(default=None, repr=False)
    time_scale: float = 1.0

    @property
    def n(self) -> int:
        return len(self.degrees)

    @property
    def ledger_residual(self) -> np.ndarray:
        return self.W + self.dissipation - self.W[0]

    def configuration(self, k: int) -> VortexConfiguration:
        return VortexConfiguration(self.positions[k], self.degrees)

    def configurations(self):
        return [self.configuration(k) for k in range(len(self.times))]

    def positions_at(self, t) -> np.ndarray:
        """Dense-output positions at time(s) t, in this trajectory's time units."""
        if self.dense is None:
            raise UsageError("trajectory has no dense output")
        t = np.asarray(t, dtype=float) / self.time_scale
        if np.any(t > self.t_stop * (1 + 1e-12) + 1e-15):
            raise UsageError("requested time beyond the end of the trajectory")
        y = self.dense(t)
        z = y[: 2 * self.n]
        if z.ndim == 1:
            return z.reshape(self.n, 2)
        return np.moveaxis(z.reshape(self.n, 2, -1), -1, 0)

    def rows(self):
        for k, t in enumerate(self.times):
            yield [t, *self.positions[k].ravel(), self.W[k], self.dissipation[k], self.rho[k]]

    def header(self):
        cols = ["t"]
        for j in range(self.n):
            cols += [f"a_{j + 1}x", f"a_{j + 1}y"]
        return cols + ["W", "kinetic_cum", "rho_a"]


def integrate(ctx: KernelContext, cfg0: VortexConfiguration, t_end: float, rho_stop: float,
              probes=None, rtol: float = 1e-11, atol: float = 1e-12,
              monitor: bool = True) -> OdeTrajectory:
    """Adaptive DOP853 integration, stopping at t_end or when rho_a falls to rho_stop."""
    validate_configuration(ctx, cfg0)
    if cfg0.n == 0:
        raise ConfigurationError("empty configuration")
    if rho_a(cfg0, ctx) <= rho_stop:
        raise ConfigurationError("initial configuration already violates rho_stop")
    n = cfg0.n
    deg = cfg0.degrees

    class _Cfg:  # lightweight view used inside the right-hand side
        degrees = deg
        n = cfg0.n

    def f(t, y):
        view = _Cfg()
        view.z = y[0:2 * n:2] + 1j * y[1:2 * n:2]
        v = -grad_W_complex(ctx, view) / np.pi
        out = np.empty_like(y)
        out[0:2 * n:2] = v.real
        out[1:2 * n:2] = v.imag
        out[-1] = np.pi * np.sum(np.abs(v) ** 2)
        return out

    def breach(t, y):
        return _rho_fast(ctx, y[0:2 * n:2] + 1j * y[1:2 * n:2]) - rho_stop
    breach.terminal = True
    breach.direction = -1

    y0 = np.concatenate([cfg0.positions.ravel(), [0.0]])
    sol = solve_ivp(f, (0.0, t_end), y0, method="DOP853", rtol=rtol, atol=atol,
                    events=[breach], dense_output=True)
    if sol.status < 0:
        raise ConfigurationError(f"ODE integration failed: {sol.message}")
    stopped = sol.status == 1
    t_stop = float(sol.t_events[0][0]) if stopped else float(t_end)
    if probes is None:
        times = sol.t
    else:
        times = np.asarray([t for t in probes if 0 <= t <= t_stop], dtype=float)
    Y = sol.sol(times) if len(times) else np.zeros((2 * n + 1, 0))
    pos = Y[: 2 * n].T.reshape(-1, n, 2)
    W = np.empty(len(times))
    rho = np.empty(len(times))
    for k in range(len(times)):
        c = VortexConfiguration(pos[k], deg)
        W[k] = renormalized_W(ctx, c)
        rho[k] = rho_a(c, ctx)
        if monitor:
            monitor_configuration(ctx, c, W=W[k])
    traj = OdeTrajectory(times, pos, deg.copy(), W, Y[-1].copy(), rho,
                         "rho_breach" if stopped else "reached_t_end", t_stop, ctx, sol.sol)
    if stopped:
        log.info("point-vortex run stopped at t=%.6g: rho_a reached %.3g", t_stop, rho_stop)
    return traj


def rescale_to_meanfield_time(traj: OdeTrajectory, n: int | None = None) -> OdeTrajectory:
    """Relabel sample times by tbar = n t."""
    n = traj.n if n is None else n
    return OdeTrajectory(traj.times * n, traj.positions, traj.degrees, traj.W, traj.dissipation,
                         traj.rho, traj.stop_reason, traj.t_stop * n, traj.ctx, traj.dense,
                         traj.time_scale * n)
