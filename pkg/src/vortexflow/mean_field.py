"""Regularized particle method for the vorticity transport equation.

A measure of total mass 2 pi is represented by weighted particles.  Its
velocity is

    v(x) = sum_k w_k [ K_delta(x - y_k) + grad_x H(x, y_k) ],
    K_delta(z) = z / max(|z|^2, delta^2),

and particles move with the transport velocity v / pi in the rescaled time
tbar = n t.  With weights 2 pi / n this reproduces the point-vortex law
da/dt = -(1/pi) grad W after the time change, as long as the blobs do not
overlap.  Since div v = 2 pi omega, the weak form reads

    -int int omega d_t chi + [int chi omega] + c int int S(chi, v) = 0,
    S = (chi_11 - chi_22)/2 (v_1^2 - v_2^2) + 2 chi_12 v_1 v_2,  c = 1 / (2 pi^2).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson
from scipy.spatial import cKDTree

from .errors import UnsupportedError, UsageError
from .kernels import KernelContext, VortexConfiguration, regular_grad_x

log = logging.getLogger(__name__)

TOTAL_MASS = 2 * math.pi
STRESS_FACTOR = 1.0 / (2 * math.pi**2)
_CHUNK = 2_000_000
_CLAMP = 1.0 - 1e-9


@dataclass(frozen=True)
class VorticityMeasure:
    positions: np.ndarray
    weights: np.ndarray
    blob_radius: float

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(p) != len(w):
            raise UsageError("positions and weights differ in length")
        if np.any(w < 0):
            raise UsageError("weights must be nonnegative")
        if abs(np.sum(w) - TOTAL_MASS) > 1e-12 * max(1.0, len(w) ** 0.5):
            raise UsageError(f"total weight {np.sum(w):.15g} is not 2*pi")
        if not self.blob_radius > 0:
            raise UsageError("blob radius must be positive")
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "weights", w)

    @property
    def z(self) -> np.ndarray:
        return self.positions[:, 0] + 1j * self.positions[:, 1]

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights))

    def moved(self, positions) -> "VorticityMeasure":
        return VorticityMeasure(positions, self.weights, self.blob_radius)


def empirical_measure(cfg: VortexConfiguration, blob_radius: float = 1e-6) -> VorticityMeasure:
    """Atoms of weight 2 pi / n at the vortex positions."""
    if cfg.n == 0:
        raise UsageError("empty configuration")
    if np.any(cfg.degrees != 1):
        raise UnsupportedError("empirical measures need all degrees +1")
    return VorticityMeasure(cfg.positions, np.full(cfg.n, TOTAL_MASS / cfg.n), blob_radius)


def sunflower_patch(N: int, radius: float, center=(0.0, 0.0), blob_radius: float = 0.01):
    """N equal-weight particles filling a disk quasi-uniformly (Vogel spiral)."""
    k = np.arange(N) + 0.5
    rr = radius * np.sqrt(k / N)
    th = k * math.pi * (3 - math.sqrt(5))
    pos = np.stack([center[0] + rr * np.cos(th), center[1] + rr * np.sin(th)], axis=1)
    return VorticityMeasure(pos, np.full(N, TOTAL_MASS / N), blob_radius)


def velocity_complex(ctx: KernelContext, m: VorticityMeasure, z) -> np.ndarray:
    """Velocity as complex numbers at complex targets z."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    y, w = m.z, m.weights
    d2 = m.blob_radius**2
    out = np.empty(z.shape, dtype=complex)
    flat = z.ravel()
    res = out.reshape(-1)
    step = max(1, _CHUNK // max(1, len(y)))
    for s in range(0, len(flat), step):
        zz = flat[s:s + step, None]
        diff = zz - y[None, :]
        k = diff / np.maximum(np.abs(diff) ** 2, d2)
        h = regular_grad_x(ctx, np.broadcast_to(zz, diff.shape), np.broadcast_to(y[None, :], diff.shape))
        res[s:s + step] = (k + h) @ w
    return out


def velocity(ctx: KernelContext, m: VorticityMeasure, x) -> np.ndarray:
    """Mean-field velocity v(x) at points of shape (..., 2)."""
    x = np.asarray(x, dtype=float)
    v = velocity_complex(ctx, m, x[..., 0] + 1j * x[..., 1])
    v = v.reshape(x.shape[:-1])
    return np.stack([v.real, v.imag], axis=-1)


def _clamp(ctx: KernelContext, z: np.ndarray) -> np.ndarray:
    zeta = ctx.w(z)
    r = np.abs(zeta)
    out = r >= _CLAMP
    if np.any(out):
        log.info("clamped %d particle(s) to the boundary", int(np.count_nonzero(out)))
        zeta = np.where(out, zeta / np.where(out, r, 1) * _CLAMP, zeta)
        z = np.where(out, ctx.inverse_map(zeta), z)
    return z


def step_particles(ctx: KernelContext, m: VorticityMeasure, dt: float) -> VorticityMeasure:
    """One RK4 step of the particle positions with velocity v / pi; weights unchanged."""
    def V(z):
        return velocity_complex(ctx, m.moved(np.stack([z.real, z.imag], 1)), z) / math.pi
    z = m.z
    k1 = V(z)
    k2 = V(z + 0.5 * dt * k1)
    k3 = V(z + 0.5 * dt * k2)
    k4 = V(z + dt * k3)
    z = _clamp(ctx, z + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4))
    return m.moved(np.stack([z.real, z.imag], 1))


def run_particles(ctx: KernelContext, m0: VorticityMeasure, t_end: float, dt: float,
                  probes=None) -> list:
    """Fixed-step RK4 run; returns [(tbar, measure)] at probe times (rounded to steps)."""
    n = int(round(t_end / dt))
    want = {0, n} if probes is None else {int(round(t / dt)) for t in probes}
    out, m = [], m0
    for k in range(n + 1):
        if k in want:
            out.append((k * dt, m))
        if k < n:
            m = step_particles(ctx, m, dt)
    return out


# -- weak residual ------------------------------------------------------------

@dataclass(frozen=True)
class BumpTest:
    """chi(x, t) = psi(t) exp(1 - 1 / (1 - |x - c|^2 / R^2)) inside the disk of radius R.

    psi is 1, or 1 + a t when ``time_slope`` a is given.
    """

    radius: float
    center: tuple = (0.0, 0.0)
    time_slope: float = 0.0

    def _q(self, x, y):
        cx, cy = self.center
        return ((x - cx) ** 2 + (y - cy) ** 2) / self.radius**2

    def space(self, x, y):
        q = self._q(x, y)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            val = np.where(q < 1, np.exp(1 - 1 / (1 - np.minimum(q, 1 - 1e-300))), 0.0)
        return val

    def psi(self, t):
        return 1.0 + self.time_slope * t

    def value(self, x, y, t):
        return self.psi(t) * self.space(x, y)

    def dt(self, x, y, t):
        return self.time_slope * self.space(x, y)

    def hessian(self, x, y, t):
        """(chi_11, chi_12, chi_22)."""
        cx, cy = self.center
        R2 = self.radius**2
        X, Y = x - cx, y - cy
        q = (X**2 + Y**2) / R2
        inside = q < 1
        s = np.where(inside, 1 - q, 1.0)
        g = np.where(inside, np.exp(1 - 1 / s), 0.0)
        # chi = exp(1 - 1/s), s = 1 - q; d chi/dq = -chi / s^2
        d1 = -g / s**2
        d2 = g / s**4 - 2 * g / s**3  # d^2 chi / dq^2
        qx, qy = 2 * X / R2, 2 * Y / R2
        psi = self.psi(t)
        h11 = (d2 * qx * qx + d1 * 2 / R2) * psi
        h12 = (d2 * qx * qy) * psi
        h22 = (d2 * qy * qy + d1 * 2 / R2) * psi
        return h11, h12, h22

    def support_distance(self) -> float:
        return 1.0 - math.hypot(*self.center) - self.radius


@dataclass(frozen=True)
class ZeroTest:
    def value(self, x, y, t):
        return np.zeros(np.shape(x))

    def dt(self, x, y, t):
        return np.zeros(np.shape(x))

    def hessian(self, x, y, t):
        z = np.zeros(np.shape(x))
        return z, z, z

    def support_distance(self) -> float:
        return 1.0

    @property
    def radius(self):
        return 0.0

    center = (0.0, 0.0)


@dataclass
class WeakResidualReport:
    time_term: float
    stress_diag: float
    stress_off: float
    meta: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return self.time_term + self.stress_diag + self.stress_off

    def as_dict(self) -> dict:
        return {"time_term": self.time_term, "stress_diag": self.stress_diag,
                "stress_off": self.stress_off, "sum": self.total, **self.meta}


def _time_integral(t, y):
    """Simpson's rule over the snapshot times (trapezoid for two samples)."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(t) < 2:
        return 0.0
    if len(t) == 2:
        return float(0.5 * (y[0] + y[1]) * (t[1] - t[0]))
    return float(simpson(y, x=t))


def weak_residual(ctx: KernelContext, snapshots, chi, quad_spacing: float | None = None,
                  blob_radius: float | None = None) -> WeakResidualReport:
    """Terms of the weak formulation over the snapshot window.

    ``snapshots`` is a list of (tbar, VorticityMeasure).  Spatial integrals of
    the stress use a midpoint grid over the support of chi with spacing
    ``quad_spacing`` (default: a quarter of the blob radius).
    """
    snaps = list(snapshots)
    if not snaps:
        raise UsageError("weak_residual needs snapshots")
    delta = blob_radius if blob_radius is not None else snaps[0][1].blob_radius
    if chi.support_distance() < 2 * delta:
        raise UsageError("test function support is closer than 2*blob_radius to the boundary")
    t = np.array([s[0] for s in snaps])
    pair = [chi.value(m.positions[:, 0], m.positions[:, 1], tt) @ m.weights for tt, m in snaps]
    dchi = [chi.dt(m.positions[:, 0], m.positions[:, 1], tt) @ m.weights for tt, m in snaps]
    time_term = -_time_integral(t, dchi) + (pair[-1] - pair[0])
    if chi.radius == 0:
        return WeakResidualReport(float(time_term), 0.0, 0.0)
    h = quad_spacing if quad_spacing is not None else delta / 4
    R = chi.radius
    k = int(math.ceil(2 * R / h))
    xs = chi.center[0] - R + (np.arange(k) + 0.5) * (2 * R / k)
    ys = chi.center[1] - R + (np.arange(k) + 0.5) * (2 * R / k)
    X, Y = np.meshgrid(xs, ys)
    inside = (X - chi.center[0]) ** 2 + (Y - chi.center[1]) ** 2 < R**2
    X, Y = X[inside], Y[inside]
    area = (2 * R / k) ** 2
    diag, off = [], []
    for tt, m in snaps:
        mb = VorticityMeasure(m.positions, m.weights, delta)
        v = velocity_complex(ctx, mb, X + 1j * Y)
        h11, h12, h22 = chi.hessian(X, Y, tt)
        diag.append(np.sum(0.5 * (h11 - h22) * (v.real**2 - v.imag**2)) * area)
        off.append(np.sum(2 * h12 * v.real * v.imag) * area)
    return WeakResidualReport(float(time_term), STRESS_FACTOR * _time_integral(t, diag),
                              STRESS_FACTOR * _time_integral(t, off),
                              {"blob_radius": delta, "quad_spacing": 2 * R / k, "snapshots": len(snaps)})


# -- maximal vorticity ----------------------------------------------------------

def maximal_vorticity(measure, r: float) -> float:
    """Largest mass of a closed ball of radius r centred on a lattice of spacing r/4.

    ``measure`` is a VorticityMeasure or a (positions, weights) pair; absolute
    weights are used.
    """
    if not 0 < r <= 0.5:
        raise UsageError("r must lie in (0, 1/2]")
    if isinstance(measure, VorticityMeasure):
        pos, w = measure.positions, measure.weights
    else:
        pos, w = measure
        pos = np.asarray(pos, dtype=float).reshape(-1, 2)
    w = np.abs(np.asarray(w, dtype=float))
    if len(pos) == 0:
        return 0.0
    s = r / 4
    lo = np.floor((pos.min(axis=0) - r) / s).astype(int)
    hi = np.ceil((pos.max(axis=0) + r) / s).astype(int)
    gx = np.arange(lo[0], hi[0] + 1) * s
    gy = np.arange(lo[1], hi[1] + 1) * s
    G = np.stack(np.meshgrid(gx, gy), -1).reshape(-1, 2)
    atoms = cKDTree(pos)
    lattice = cKDTree(G)
    # small slack keeps atoms exactly on the sphere inside the closed ball
    dm = lattice.sparse_distance_matrix(atoms, r * (1 + 1e-12), output_type="coo_matrix")
    mass = np.bincount(dm.row, weights=w[dm.col], minlength=len(G))
    best = float(mass.max()) if mass.size else 0.0
    return max(best, float(w.max()))


def particles_csv(snapshots) -> str:
    """Particle snapshots [(tbar, VorticityMeasure)] as CSV text with columns tbar, x, y, w."""
    lines = ["tbar,x,y,w"]
    for tb, m in snapshots:
        for (x, y), w in zip(m.positions, m.weights):
            lines.append(f"{tb:.12g},{x:.17g},{y:.17g},{w:.17g}")
    return "\n".join(lines) + "\n"
