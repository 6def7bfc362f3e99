"""Vortex placement from a target vorticity, well-prepared fields and the core constant.

The radial profile f0 solves f'' + f'/r - f/r^2 + f (1 - f^2) = 0 with
f(0) = 0, f(inf) = 1.  The core constant is

    gamma = lim_R [ I(f0, R) - pi log R ],
    I(f, R) = pi * int_0^R (f'^2 + f^2/r^2 + (1 - f^2)^2 / 2) r dr.

Two independent solvers are provided: shooting on the slope f'(0) with
bisection, and collocation (scipy solve_bvp) of the boundary value problem
for g = f / r.  Both hand over to the far-field series
f ~ 1 - 1/(2r^2) - 9/(8r^4) - 161/(16r^6) - 24661/(128r^8).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad, solve_bvp, solve_ivp
from scipy.interpolate import CubicHermiteSpline

from .errors import ConfigurationError, DomainError, ResolutionError, UsageError
from .field import Field, PolarGrid, bc_for_kernel, canonical_harmonic_map, total_energy
from .kernels import KernelContext, VortexConfiguration, renormalized_W

log = logging.getLogger(__name__)

_SERIES = (-1.0 / 2, -9.0 / 8, -161.0 / 16, -24661.0 / 128)
MATCH_RADIUS = 10.0
GAMMA_TOL = 1e-4


def far_field(r):
    """Far-field series of the profile and its derivative."""
    r = np.asarray(r, dtype=float)
    f = np.ones_like(r)
    df = np.zeros_like(r)
    for k, c in enumerate(_SERIES, start=1):
        f = f + c * r ** (-2 * k)
        df = df - 2 * k * c * r ** (-2 * k - 1)
    return f, df


def _integrand(f, df, r):
    return (df**2 + (f / r) ** 2 + 0.5 * (1 - f**2) ** 2) * r


def _tail(R: float) -> float:
    """pi * int_R^inf (integrand - 1/r) dr evaluated with the far-field series."""
    def h(r):
        f, df = far_field(r)
        return _integrand(f, df, r) - 1.0 / r
    val, _ = quad(h, R, np.inf, epsabs=1e-14, epsrel=1e-12, limit=200)
    return math.pi * val


# -- shooting --------------------------------------------------------------

def _shoot(alpha: float, r_end: float, dense: bool = False):
    r0 = 1e-4
    y0 = [alpha * r0 * (1 - r0**2 / 8), alpha * (1 - 3 * r0**2 / 8)]

    def rhs(r, y):
        f, df = y
        return [df, -df / r + f / r**2 - f * (1 - f * f)]

    over = lambda r, y: y[0] - 1.0
    over.terminal = True
    down = lambda r, y: y[1]
    down.terminal = True
    down.direction = -1
    return solve_ivp(rhs, (r0, r_end), y0, method="DOP853", rtol=1e-13, atol=1e-15,
                     events=[over, down], dense_output=dense)


@lru_cache(maxsize=1)
def shooting_slope() -> float:
    """Slope f0'(0) found by bisection between overshooting and turning back."""
    lo, hi = 0.5, 0.7
    for _ in range(70):
        mid = 0.5 * (lo + hi)
        sol = _shoot(mid, 16.0)
        if sol.t_events[0].size:
            hi = mid
        elif sol.t_events[1].size:
            lo = mid
        else:
            # reached the end without deciding: compare with the far field
            if sol.y[0, -1] > far_field(sol.t[-1])[0]:
                hi = mid
            else:
                lo = mid
        if hi - lo < 1e-16:
            break
    else:
        pass
    if not (0.55 < lo < 0.62):
        raise ArithmeticError("shooting for the radial profile did not converge")
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class RadialProfile:
    """Callable profile f0(s) with derivative; far-field series beyond the match radius."""

    spline: CubicHermiteSpline
    slope: float
    match: float

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = np.empty_like(s)
        inner = s <= self.match
        out[inner] = self.spline(s[inner])
        out[~inner] = far_field(s[~inner])[0]
        return out

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        out = np.empty_like(s)
        inner = s <= self.match
        out[inner] = self.spline.derivative()(s[inner])
        out[~inner] = far_field(s[~inner])[1]
        return out


@lru_cache(maxsize=1)
def radial_profile() -> RadialProfile:
    alpha = shooting_slope()
    sol = _shoot(alpha, MATCH_RADIUS, dense=True)
    if sol.t[-1] < MATCH_RADIUS - 1e-9:
        raise ArithmeticError("radial profile integration stopped early")
    s = np.concatenate([[0.0], np.linspace(1e-4, MATCH_RADIUS, 6001)])
    y = sol.sol(np.maximum(s, 1e-4))
    f, df = y[0], y[1]
    f[0], df[0] = 0.0, alpha
    # blend continuously into the far field at the match radius
    ff, dff = far_field(MATCH_RADIUS)
    f[-1], df[-1] = ff, dff
    return RadialProfile(CubicHermiteSpline(s, f, df), alpha, MATCH_RADIUS)


def _energy_shooting(R: float) -> float:
    """I(f0, R) from the shooting solution (far-field series beyond the match radius)."""
    alpha = shooting_slope()
    sol = _shoot(alpha, MATCH_RADIUS, dense=True)
    Rm = min(R, MATCH_RADIUS)

    def h(r):
        if r < 1e-4:
            return 2 * alpha**2 * r
        f, df = sol.sol(r)
        return _integrand(f, df, r)
    knots = np.linspace(0, Rm, 21)
    val = sum(quad(h, a, b, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
              for a, b in zip(knots[:-1], knots[1:]))
    if R > MATCH_RADIUS:
        val += quad(lambda r: _integrand(*far_field(r), r), MATCH_RADIUS, R,
                    epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    return math.pi * val


def gamma_estimate(R: float, tail: bool = True) -> float:
    """I(f0, R) - pi log R, plus the analytic far-field remainder when ``tail``."""
    val = _energy_shooting(R) - math.pi * math.log(R)
    return val + (_tail(R) if tail else 0.0)


@lru_cache(maxsize=1)
def bbh_gamma() -> float:
    """Core constant from the shooting solution; tolerance GAMMA_TOL."""
    return gamma_estimate(MATCH_RADIUS)


@lru_cache(maxsize=1)
def bbh_gamma_relaxation(R: float = 30.0) -> float:
    """Core constant from collocation of the boundary value problem for g = f / r."""
    S = np.array([[0.0, 0.0], [0.0, -3.0]])

    def fun(r, y):
        g, dg = y
        return np.vstack([dg, -g * (1 - (r * g) ** 2)])

    def bc(ya, yb):
        return np.array([ya[1], R * yb[0] - far_field(R)[0]])

    r = np.linspace(0, R, 3001)
    g0 = 1 / np.sqrt(2 + r**2)
    dg0 = -r / (2 + r**2) ** 1.5
    sol = solve_bvp(fun, bc, r, np.vstack([g0, dg0]), S=S, tol=1e-10, max_nodes=200000)
    if not sol.success:
        raise ArithmeticError(f"relaxation solve failed: {sol.message}")

    def h(rr):
        g, dg = sol.sol(rr)
        f, df = rr * g, g + rr * dg
        return (df**2 + g**2 + 0.5 * (1 - f**2) ** 2) * rr
    knots = np.linspace(0, R, 61)
    val = sum(quad(h, a, b, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
              for a, b in zip(knots[:-1], knots[1:]))
    return math.pi * val - math.pi * math.log(R) + _tail(R)


def core_energy(s_max: float) -> float:
    """pi * int_0^s_max (f0'^2 + f0^2/s^2) s ds, by quadrature."""
    prof = radial_profile()

    def h(s):
        if s == 0:
            return 0.0
        f, df = prof(np.array([s]))[0], prof.derivative(np.array([s]))[0]
        return (df**2 + (f / s) ** 2) * s
    knots = np.unique(np.concatenate([np.linspace(0, min(s_max, MATCH_RADIUS), 41), [s_max]]))
    return math.pi * sum(quad(h, a, b, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
                         for a, b in zip(knots[:-1], knots[1:]))


# -- vorticity densities and placement ---------------------------------------

@dataclass(frozen=True)
class DensityGrid:
    """Piecewise-constant density on a uniform grid over [-1, 1]^2.

    ``values[iy, ix]`` is the density on the cell with x in
    [-1 + ix dx, -1 + (ix + 1) dx] and y likewise (row 0 is the lowest y).
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise UsageError("density grid must be 2-D")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise UsageError("density must be finite and nonnegative")
        object.__setattr__(self, "values", v)

    @property
    def dx(self) -> float:
        return 2.0 / self.values.shape[1]

    @property
    def dy(self) -> float:
        return 2.0 / self.values.shape[0]

    @property
    def mass(self) -> float:
        return float(np.sum(self.values) * self.dx * self.dy)

    def centers(self):
        ny, nx = self.values.shape
        x = -1 + (np.arange(nx) + 0.5) * self.dx
        y = -1 + (np.arange(ny) + 0.5) * self.dy
        return np.meshgrid(x, y)

    def normalized(self, mass: float = 2 * math.pi) -> "DensityGrid":
        return DensityGrid(self.values * (mass / self.mass))

    def support_margin(self) -> float:
        """Distance from the support (cell corners) to the unit circle."""
        iy, ix = np.nonzero(self.values > 0)
        if iy.size == 0:
            return 1.0
        xs = np.stack([-1 + ix * self.dx, -1 + (ix + 1) * self.dx])
        ys = np.stack([-1 + iy * self.dy, -1 + (iy + 1) * self.dy])
        rmax = np.max(np.hypot(np.max(np.abs(xs), axis=0), np.max(np.abs(ys), axis=0)))
        return float(1.0 - rmax)

    @classmethod
    def from_function(cls, fn, cells: int = 400, sub: int = 4) -> "DensityGrid":
        """Cell averages of fn(x, y) by sub x sub midpoint sampling."""
        h = 2.0 / cells
        off = (np.arange(sub) + 0.5) / sub * h
        base = -1 + np.arange(cells) * h
        acc = np.zeros((cells, cells))
        for oy in off:
            for ox in off:
                X, Y = np.meshgrid(base + ox, base + oy)
                acc += fn(X, Y)
        return cls(acc / sub**2)

    @classmethod
    def uniform_patch(cls, radius: float, center=(0.0, 0.0), cells: int = 400) -> "DensityGrid":
        cx, cy = center
        g = cls.from_function(lambda x, y: ((x - cx) ** 2 + (y - cy) ** 2 < radius**2) * 1.0,
                              cells=cells, sub=8)
        return g.normalized()

    @classmethod
    def from_csv(cls, path) -> "DensityGrid":
        return cls(np.loadtxt(path, delimiter=",", ndmin=2))


def _overlap(edges_a: np.ndarray, edges_b: np.ndarray) -> np.ndarray:
    """Overlap lengths between intervals [a_i, a_i+1] and [b_j, b_j+1]."""
    lo = np.maximum(edges_a[:-1, None], edges_b[None, :-1])
    hi = np.minimum(edges_a[1:, None], edges_b[None, 1:])
    return np.clip(hi - lo, 0.0, None)


def place_vortices(density: DensityGrid, n: int, min_margin: float = 0.05) -> VortexConfiguration:
    """Deterministic placement of degree-one vortices approximating ``density``.

    Squares of side h = n^(-1/4) tile [-1, 1]^2 from the corner (-1, -1).
    A square receives floor((n / 2 pi) * mass) vortices, or none if it meets
    the unit circle.  Its vortices sit at the centres of equal-width slices,
    vertical slices on even squares (ix + iy even) and horizontal otherwise.
    """
    if n < 1:
        raise UsageError("n must be positive")
    if abs(density.mass - 2 * math.pi) > 1e-9 * 2 * math.pi:
        raise ConfigurationError(f"density mass {density.mass:.12g} is not 2*pi")
    margin = density.support_margin()
    if margin < min_margin:
        raise DomainError(f"density support is {margin:.4g} from the boundary (need {min_margin:g})")
    h = n ** -0.25
    m = int(math.ceil(2.0 / h - 1e-12))
    sq = -1 + h * np.arange(m + 1)
    ny, nx = density.values.shape
    ox = _overlap(sq, -1 + density.dx * np.arange(nx + 1))
    oy = _overlap(sq, -1 + density.dy * np.arange(ny + 1))
    mass = oy @ density.values @ ox.T  # [iy, ix]
    positions, counts = [], np.zeros((m, m), dtype=int)
    excluded = 0
    for iy in range(m):
        y0 = sq[iy]
        for ix in range(m):
            x0 = sq[ix]
            cx = np.clip(0.0, x0, x0 + h)
            cy = np.clip(0.0, y0, y0 + h)
            near = math.hypot(cx, cy)
            far = math.hypot(max(abs(x0), abs(x0 + h)), max(abs(y0), abs(y0 + h)))
            # small guard so that exact integers are not floored away by rounding
            k = int(math.floor(n * mass[iy, ix] / (2 * math.pi) + 1e-9))
            if near < 1.0 <= far or near >= 1.0:
                excluded += max(k, 0)
                continue
            if k <= 0:
                continue
            counts[iy, ix] = k
            w = h / k
            for s in range(k):
                if (ix + iy) % 2 == 0:
                    positions.append((x0 + (s + 0.5) * w, y0 + 0.5 * h))
                else:
                    positions.append((x0 + 0.5 * h, y0 + (s + 0.5) * w))
    if excluded:
        log.warning("%d vortex(es) fell in squares meeting the boundary and were not placed", excluded)
    pos = np.array(positions, dtype=float).reshape(-1, 2)
    meta = {"n_requested": int(n), "n_hat": int(len(pos)), "h": h,
            "occupied_cells": int(np.count_nonzero(counts)), "excluded": excluded}
    return VortexConfiguration(pos, np.ones(len(pos), dtype=int), meta)


def energy_bound_check(cfg: VortexConfiguration) -> float:
    """-(1/n^2) sum over ordered pairs j != k of log|a_j - a_k|."""
    if cfg.n < 2:
        raise UsageError("energy_bound_check needs n >= 2")
    z = cfg.z
    d = np.abs(z[:, None] - z[None, :])
    iu = np.triu_indices(cfg.n, 1)
    return float(-2.0 * np.sum(np.log(d[iu])) / cfg.n**2)


# -- well-prepared fields -----------------------------------------------------

def approximate_energy(ctx: KernelContext, cfg: VortexConfiguration, epsilon: float) -> float:
    """W + n (pi |log eps| + gamma)."""
    W = renormalized_W(ctx, cfg) if cfg.n else 0.0
    return W + cfg.n * (math.pi * abs(math.log(epsilon)) + bbh_gamma())


def core_modulus(cfg: VortexConfiguration, epsilon: float, z, bc_kind: str) -> np.ndarray:
    """Product of core profiles f0(|x - a| / eps).

    For Dirichlet data each factor is divided by f0(|1 - x conj(a)| / eps),
    which equals the numerator on the unit circle, so the modulus is exactly
    1 there and no boundary layer forms against the unit-modulus trace.
    """
    prof = radial_profile()
    z = np.asarray(z, dtype=complex)
    mod = np.ones(z.shape)
    for a in cfg.z:
        fac = prof(np.abs(z - a) / epsilon)
        if bc_kind == "dirichlet":
            fac = fac / prof(np.abs(1 - z * np.conj(a)) / epsilon)
        mod = mod * fac
    return mod


def build_field(ctx: KernelContext, cfg: VortexConfiguration, epsilon: float,
                grid: PolarGrid) -> Field:
    """Canonical harmonic map times a radial core profile at each vortex.

    The boundary data of a Dirichlet field is the canonical map's trace, so
    it is matched exactly.  The measured excess energy is stored in meta.
    """
    for a in cfg.z:
        spacing = max(grid.dr, abs(a) * grid.dtheta)
        if epsilon < 2 * spacing:
            raise ResolutionError(
                f"core eps={epsilon:g} unresolved: grid spacing {spacing:.4g} near vortex at {a:.3g}")
    u = canonical_harmonic_map(ctx, cfg, grid, epsilon)
    mod = core_modulus(cfg, epsilon, grid.z, u.bc_kind)
    f = u.with_values(u.values * mod)
    E = total_energy(f)
    D = E - approximate_energy(ctx, cfg, epsilon)
    f.meta.update({"bc_kind": bc_for_kernel(ctx), "energy": E, "excess_energy": D,
                   "positions": cfg.positions.tolist(), "degrees": cfg.degrees.tolist()})
    return f
