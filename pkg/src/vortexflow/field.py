"""Polar-grid order parameter and its pointwise quantities.

Grid layout: cell-centred rings r_i = (i + 1/2) dr, dr = 1/n_r, and angles
theta_k = k dtheta, dtheta = 2 pi / n_theta.  Arrays have shape
(n_r, n_theta).  The boundary r = 1 sits half a cell beyond the last ring;
a ghost ring at r = 1 + dr/2 carries the boundary condition
(2 g - u for Dirichlet data g, mirror copy for Neumann).

The discrete energy is the exact quadratic form of the discrete Laplacian:
sum(e * r dr dtheta) = -<u, L u> / 2 + boundary terms + potential, so the
semi-discrete equation is a gradient flow of total_energy.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ResolutionError, UsageError
from .kernels import KernelContext, VortexConfiguration, kernel_grad_x, validate_configuration

BC_KINDS = ("dirichlet", "neumann")
_MAGIC = b"VXF1"
_HEADER = struct.Struct("<4sIIdI")


@dataclass(frozen=True)
class PolarGrid:
    n_r: int
    n_theta: int

    def __post_init__(self):
        if self.n_r < 4:
            raise UsageError("n_r must be >= 4")
        if self.n_theta < 8 or self.n_theta % 2:
            raise UsageError("n_theta must be even and >= 8")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_r, self.n_theta)

    @property
    def dr(self) -> float:
        return 1.0 / self.n_r

    @property
    def dtheta(self) -> float:
        return 2.0 * np.pi / self.n_theta

    @cached_property
    def r(self) -> np.ndarray:
        return (np.arange(self.n_r) + 0.5) * self.dr

    @cached_property
    def r_face(self) -> np.ndarray:
        """Outer face radius of each ring, (i + 1) dr; the last one is 1."""
        return (np.arange(self.n_r) + 1.0) * self.dr

    @cached_property
    def theta(self) -> np.ndarray:
        return np.arange(self.n_theta) * self.dtheta

    @cached_property
    def z(self) -> np.ndarray:
        return self.r[:, None] * np.exp(1j * self.theta)[None, :]

    @cached_property
    def area(self) -> np.ndarray:
        """Cell areas r dr dtheta; they sum to pi exactly in exact arithmetic."""
        return np.broadcast_to(self.r[:, None] * self.dr * self.dtheta, self.shape)

    @cached_property
    def lam(self) -> np.ndarray:
        """Eigenvalues of minus the 3-point angular second difference, FFT order."""
        m = np.fft.fftfreq(self.n_theta, d=1.0 / self.n_theta)
        return (2.0 * np.sin(m * self.dtheta / 2) / self.dtheta) ** 2

    @cached_property
    def plaquette_area(self) -> np.ndarray:
        """Areas of the Jacobian cells: central wedges (row 0) and ring sectors."""
        rr = self.r
        a = np.empty(self.n_r)
        a[0] = 0.5 * rr[0] ** 2 * self.dtheta
        a[1:] = 0.5 * (rr[1:] ** 2 - rr[:-1] ** 2) * self.dtheta
        return np.broadcast_to(a[:, None], self.shape)

    @cached_property
    def plaquette_z(self) -> np.ndarray:
        """Representative centres of the Jacobian cells."""
        rr = self.r
        rc = np.empty(self.n_r)
        rc[0] = 2.0 * rr[0] / 3.0
        rc[1:] = 0.5 * (rr[1:] + rr[:-1])
        return rc[:, None] * np.exp(1j * (self.theta + 0.5 * self.dtheta))[None, :]


def dirichlet_trace(grid: PolarGrid, winding: int, ctx: KernelContext | None = None) -> np.ndarray:
    """Boundary data exp(i (n theta + phi_star(theta)))."""
    phase = winding * grid.theta
    if ctx is not None:
        phase = phase + ctx.phi_star_value(grid.theta)
    return np.exp(1j * phase)


@dataclass
class Field:
    """Complex order parameter on a polar grid.

    ``boundary`` holds the Dirichlet trace g(theta_k) at r = 1 and must be
    None for Neumann fields.
    """

    values: np.ndarray
    epsilon: float
    bc_kind: str = "neumann"
    boundary: np.ndarray | None = None
    time: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.ndim != 2:
            raise UsageError("field values must be a 2-D array")
        self.grid  # validates shape
        if not self.epsilon > 0:
            raise UsageError("epsilon must be positive")
        if self.bc_kind not in BC_KINDS:
            raise UsageError(f"bc_kind must be one of {BC_KINDS}")
        if self.bc_kind == "dirichlet":
            if self.boundary is None:
                raise UsageError("Dirichlet field needs boundary data")
            self.boundary = np.asarray(self.boundary, dtype=complex).reshape(self.values.shape[1])
        elif self.boundary is not None:
            raise UsageError("Neumann field must not carry boundary data")

    @property
    def grid(self) -> PolarGrid:
        return PolarGrid(*self.values.shape)

    def with_values(self, values, time=None) -> "Field":
        return replace(self, values=values, time=self.time if time is None else time,
                       meta=dict(self.meta))

    def copy(self) -> "Field":
        return self.with_values(self.values.copy())


# -- discrete operators ---------------------------------------------------

def ghost_ring(values: np.ndarray, bc_kind: str, boundary=None) -> np.ndarray:
    if bc_kind == "dirichlet":
        return 2.0 * boundary - values[-1]
    return values[-1]


def padded(f: Field) -> np.ndarray:
    """Values with the ghost ring appended, shape (n_r + 1, n_theta)."""
    return np.vstack([f.values, ghost_ring(f.values, f.bc_kind, f.boundary)[None, :]])


def laplacian_values(values, grid: PolarGrid, bc_kind: str, boundary=None) -> np.ndarray:
    """Conservative 5-point polar Laplacian with ghost-ring boundary closure."""
    U = np.vstack([values, ghost_ring(values, bc_kind, boundary)[None, :]])
    flux = grid.r_face[:, None] * (U[1:] - U[:-1])  # outward face fluxes times r
    inner = np.vstack([np.zeros((1, grid.n_theta), dtype=flux.dtype), flux[:-1]])
    radial = (flux - inner) / (grid.r[:, None] * grid.dr**2)
    ang = (np.roll(values, -1, axis=1) - 2 * values + np.roll(values, 1, axis=1)) / (
        grid.r[:, None] ** 2 * grid.dtheta**2)
    return radial + ang


def laplacian(f: Field) -> np.ndarray:
    return laplacian_values(f.values, f.grid, f.bc_kind, f.boundary)


def gradient_squared(f: Field) -> np.ndarray:
    """|grad u|^2 from averaged squared face differences."""
    g = f.grid
    U = padded(f)
    fr = g.r_face[:, None] * np.abs((U[1:] - U[:-1]) / g.dr) ** 2
    inner = np.vstack([np.zeros((1, g.n_theta)), fr[:-1]])
    grad_r = (fr + inner) / (2 * g.r[:, None])
    dth = np.abs((np.roll(f.values, -1, axis=1) - f.values) / (g.r[:, None] * g.dtheta)) ** 2
    grad_t = 0.5 * (dth + np.roll(dth, 1, axis=1))
    return grad_r + grad_t


def potential_density(f: Field) -> np.ndarray:
    return (1.0 - np.abs(f.values) ** 2) ** 2 / (4.0 * f.epsilon**2)


def energy_density(f: Field) -> np.ndarray:
    """e = |grad u|^2 / 2 + (1 - |u|^2)^2 / (4 eps^2) on the cell centres."""
    return 0.5 * gradient_squared(f) + potential_density(f)


def integrate(grid: PolarGrid, density: np.ndarray) -> float:
    return float(np.sum(density * grid.area))


def total_energy(f: Field) -> float:
    return integrate(f.grid, energy_density(f))


def polar_derivatives(f: Field) -> tuple[np.ndarray, np.ndarray]:
    """Centred d/dr and (1/r) d/dtheta at cell centres.

    The inner neighbour of ring 0 is the opposite point across the origin.
    """
    g = f.grid
    U = padded(f)
    below = np.vstack([np.roll(f.values[:1], g.n_theta // 2, axis=1), f.values[:-1]])
    ur = (U[1:] - below) / (2 * g.dr)
    ut = (np.roll(f.values, -1, axis=1) - np.roll(f.values, 1, axis=1)) / (
        2 * g.dtheta * g.r[:, None])
    return ur, ut


def cartesian_gradient(f: Field) -> tuple[np.ndarray, np.ndarray]:
    ur, ut = polar_derivatives(f)
    c, s = np.cos(f.grid.theta)[None, :], np.sin(f.grid.theta)[None, :]
    return c * ur - s * ut, s * ur + c * ut


def supercurrent(f: Field) -> np.ndarray:
    """j = (iu, grad u) = Im(conj(u) grad u), Cartesian components (n_r, n_theta, 2)."""
    ux, uy = cartesian_gradient(f)
    ub = np.conj(f.values)
    return np.stack([np.imag(ub * ux), np.imag(ub * uy)], axis=-1)


def face_currents(f: Field) -> tuple[np.ndarray, np.ndarray]:
    """Currents on radial faces (outer face of each ring) and angular faces.

    jr[i, k] lives at (r_face[i], theta_k); jt[i, k] at (r_i, theta_k + dtheta/2).
    These satisfy div_h j = Im(conj(u) L u) exactly.
    """
    g = f.grid
    U = padded(f)
    jr = np.imag(np.conj(U[:-1]) * U[1:]) / g.dr
    jt = np.imag(np.conj(f.values) * np.roll(f.values, -1, axis=1)) / (g.r[:, None] * g.dtheta)
    return jr, jt


def face_divergence(grid: PolarGrid, jr: np.ndarray, jt: np.ndarray) -> np.ndarray:
    flux = grid.r_face[:, None] * jr
    inner = np.vstack([np.zeros((1, grid.n_theta)), flux[:-1]])
    return (flux - inner) / (grid.r[:, None] * grid.dr) + (jt - np.roll(jt, 1, axis=1)) / (
        grid.r[:, None] * grid.dtheta)


def _edge_terms(f: Field, weighted: bool):
    """Edge circulations along radial edges (ring i -> i+1) and ring edges (k -> k+1)."""
    u = f.values
    out_r = u[1:] * np.conj(u[:-1])
    out_t = np.roll(u, -1, axis=1) * np.conj(u)
    er, et = np.angle(out_r), np.angle(out_t)
    if weighted:
        a = np.abs(u)
        er = er * a[1:] * a[:-1]
        et = et * a * np.roll(a, -1, axis=1)
    return er, et


def _plaquette_circulation(f: Field, weighted: bool) -> np.ndarray:
    er, et = _edge_terms(f, weighted)
    g = f.grid
    circ = np.empty(g.shape)
    circ[0] = np.sum(et[0]) / g.n_theta
    circ[1:] = er + et[1:] - np.roll(er, -1, axis=1) - et[:-1]
    return circ


def jacobian_integrals(f: Field) -> np.ndarray:
    """Integral of J over each Jacobian cell: half the cell circulation of j.

    Row 0 splits the central polygon into n_theta equal wedges; row i >= 1 is
    the ring sector between r_{i-1} and r_i starting at theta_k.
    """
    return 0.5 * _plaquette_circulation(f, weighted=True)


def jacobian(f: Field) -> np.ndarray:
    """Jacobian density det(grad u) on the Jacobian cells."""
    return jacobian_integrals(f) / f.grid.plaquette_area


def plaquette_winding(f: Field) -> np.ndarray:
    """Integer phase winding of each Jacobian cell; the central polygon is row 0, column 0."""
    circ = _plaquette_circulation(f, weighted=False)
    w = np.rint(circ / (2 * np.pi)).astype(int)
    w[0] = 0
    w[0, 0] = int(np.rint(circ[0, 0] * f.grid.n_theta / (2 * np.pi)))
    return w


def boundary_winding(f: Field) -> int:
    u = f.values[-1]
    return int(np.rint(np.sum(np.angle(np.roll(u, -1) * np.conj(u))) / (2 * np.pi)))


# -- canonical harmonic map -------------------------------------------------

def bc_for_kernel(ctx: KernelContext) -> str:
    """Field boundary condition paired with a kernel kind."""
    return "dirichlet" if ctx.kernel_kind == "neumann" else "neumann"


def _phi_extension(ctx: KernelContext, z):
    """Harmonic extension of phi_star into the disk."""
    out = np.zeros(np.shape(z))
    for m, a, b in ctx.phi_star:
        out = out + np.real((a - 1j * b) * z**m)
    return out


def canonical_map_values(ctx: KernelContext, cfg: VortexConfiguration, z) -> np.ndarray:
    """Pointwise unit-modulus canonical map at complex points z."""
    if not ctx.is_disk:
        raise UsageError("canonical map is only synthesized on the unit disk")
    z = np.asarray(z, dtype=complex)
    u = np.ones(z.shape, dtype=complex)
    for a, d in zip(cfg.z, cfg.degrees):
        if ctx.kernel_kind == "neumann":
            fac = (z - a) * (1 - z * np.conj(a))
        else:
            fac = (z - a) / (1 - z * np.conj(a))
        fac = fac / np.abs(fac)
        u = u * (fac if d > 0 else np.conj(fac))
    if ctx.kernel_kind == "neumann" and ctx.phi_star:
        u = u * np.exp(1j * _phi_extension(ctx, z))
    return u


def canonical_current(ctx: KernelContext, cfg: VortexConfiguration, z) -> np.ndarray:
    """j(u_star) = perpendicular gradient of sum_j d_j K(x, a_j), as complex numbers."""
    z = np.asarray(z, dtype=complex)
    g = np.zeros(z.shape, dtype=complex)
    for a, d in zip(cfg.z, cfg.degrees):
        g = g + d * kernel_grad_x(ctx, z, np.full(z.shape, a))
    return 1j * g


def _check_canonical(ctx: KernelContext, cfg: VortexConfiguration):
    validate_configuration(ctx, cfg)
    if ctx.kernel_kind == "neumann" and ctx.phi_star and int(np.sum(cfg.degrees)) != ctx.winding:
        raise ConfigurationError("Dirichlet data with phi_star needs total degree equal to winding")


def canonical_harmonic_map(ctx: KernelContext, cfg: VortexConfiguration, grid: PolarGrid,
                           epsilon: float = 1.0) -> Field:
    """Unit-modulus map with the prescribed vortices sampled on ``grid``.

    A Neumann kernel pairs with Dirichlet boundary data exp(i(n theta + phi_star)),
    a Dirichlet-Green kernel with vanishing normal current.
    """
    _check_canonical(ctx, cfg)
    if cfg.n and np.max(np.abs(cfg.z)) > 1 - 2 * grid.dr:
        raise ResolutionError("vortex within two grid cells of the boundary")
    bc = bc_for_kernel(ctx)
    values = canonical_map_values(ctx, cfg, grid.z)
    boundary = None
    if bc == "dirichlet":
        boundary = canonical_map_values(ctx, cfg, np.exp(1j * grid.theta))
    return Field(values, epsilon, bc, boundary, meta={"winding": int(np.sum(cfg.degrees))})


# -- serialization ----------------------------------------------------------

def save_field(f: Field, path) -> None:
    """Binary snapshot plus JSON sidecar ``<path>.json``.

    Header: magic, n_r, n_theta (uint32), epsilon (float64), bc code (uint32),
    little-endian.  Body: values row-major as (re, im) float64 pairs; a
    Dirichlet field appends its boundary trace as one extra row.
    """
    path = Path(path)
    g = f.grid
    code = BC_KINDS.index(f.bc_kind)
    body = f.values
    if f.bc_kind == "dirichlet":
        body = np.vstack([body, f.boundary[None, :]])
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, g.n_r, g.n_theta, float(f.epsilon), code))
        fh.write(np.ascontiguousarray(body, dtype="<c16").tobytes())
    side = {"n_r": g.n_r, "n_theta": g.n_theta, "epsilon": f.epsilon, "bc_kind": f.bc_kind,
            "time": f.time, "meta": f.meta}
    Path(str(path) + ".json").write_text(json.dumps(side, indent=2, sort_keys=True, default=str))


def load_field(path) -> Field:
    path = Path(path)
    raw = path.read_bytes()
    magic, n_r, n_theta, eps, code = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise UsageError(f"{path} is not a field snapshot")
    bc = BC_KINDS[code]
    rows = n_r + (1 if bc == "dirichlet" else 0)
    body = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size, count=rows * n_theta)
    body = body.reshape(rows, n_theta).astype(complex)
    time, meta = 0.0, {}
    side = Path(str(path) + ".json")
    if side.exists():
        info = json.loads(side.read_text())
        time, meta = info.get("time", 0.0), info.get("meta", {})
    boundary = body[-1] if bc == "dirichlet" else None
    return Field(body[:n_r].copy(), eps, bc, boundary, time, meta)


def export_grid_csv(path, grid: PolarGrid, values: np.ndarray, name: str = "value") -> None:
    """CSV with columns r, theta, x, y, <name> (vector grids get _x, _y columns)."""
    vals = np.asarray(values)
    R, T = np.meshgrid(grid.r, grid.theta, indexing="ij")
    cols = [R.ravel(), T.ravel(), (R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()]
    header = ["r", "theta", "x", "y"]
    if vals.ndim == 3:
        cols += [vals[..., 0].ravel(), vals[..., 1].ravel()]
        header += [f"{name}_x", f"{name}_y"]
    else:
        cols.append(vals.ravel())
        header.append(name)
    np.savetxt(path, np.column_stack(cols), delimiter=",", header=",".join(header),
               comments="", fmt="%.17g")
