"""Neumann and Dirichlet-Green kernels, the renormalized energy and its gradient.

Points are passed as real pairs (or arrays of shape (..., 2)) and handled
internally as complex numbers.  The fundamental solution is log|x - y|, so
the Laplacian of every kernel is 2*pi times a Dirac mass.

On the unit disk the kernels are explicit::

    N(x, y) = log|x - y| + log|1 - x conj(y)|      (boundary flux 1 per unit length)
    G(x, y) = log|x - y| - log|1 - x conj(y)|      (zero on the boundary)

Prescribed boundary phase data phi_star and polynomial conformal maps are
handled by adding a harmonic correction P(zeta) + P(eta), with P computed
from boundary Fourier data.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContextError, DomainError, UsageError

log = logging.getLogger(__name__)

KERNEL_KINDS = ("neumann", "dirichlet_green")
MAX_PHI_MODES = 64
_BOUNDARY_SAMPLES = 512

# Constants for the soft monitors, derived from |x - y| <= 2, |1 - x conj(y)| <= 2
# and |1 - x conj(y)| >= dist(x, boundary) on the disk.
SEPARATION_C = 2.0 * np.pi * np.log(2.0)
GRADIENT_C = 4.0 * np.pi
SCALE_C = 2.0 * np.pi


def as_complex(p) -> np.ndarray | complex:
    """Convert a point or an array of points of shape (..., 2) to complex."""
    a = np.asarray(p)
    if np.iscomplexobj(a):
        return a
    a = a.astype(float)
    if a.shape[-1:] != (2,):
        raise UsageError(f"points must have trailing dimension 2, got shape {a.shape}")
    z = a[..., 0] + 1j * a[..., 1]
    return complex(z) if z.ndim == 0 else z


def as_pairs(z) -> np.ndarray:
    z = np.asarray(z)
    return np.stack([z.real, z.imag], axis=-1)


def _polyval(coef: np.ndarray, z):
    """Evaluate sum_k coef[k] z^k by Horner's rule."""
    out = np.zeros_like(np.asarray(z, dtype=complex)) + coef[-1]
    for c in coef[-2::-1]:
        out = out * z + c
    return out


def _polyder(coef: np.ndarray) -> np.ndarray:
    if len(coef) == 1:
        return np.zeros(1, dtype=complex)
    return coef[1:] * np.arange(1, len(coef))


@dataclass(frozen=True)
class VortexConfiguration:
    """Vortex positions (n, 2) with degrees in {+1, -1}."""

    positions: np.ndarray
    degrees: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        deg = np.asarray(self.degrees, dtype=int).reshape(-1)
        if len(deg) != len(pos):
            raise ConfigurationError("positions and degrees differ in length")
        if not np.all(np.isfinite(pos)):
            raise ConfigurationError("non-finite vortex position")
        if np.any(np.abs(deg) != 1):
            raise ConfigurationError("degrees must be +1 or -1")
        z = pos[:, 0] + 1j * pos[:, 1]
        if len(z) > 1:
            d = np.abs(z[:, None] - z[None, :])
            np.fill_diagonal(d, np.inf)
            if d.min() == 0.0:
                raise ConfigurationError("coincident vortex positions")
        pos.setflags(write=False)
        deg.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "degrees", deg)

    @classmethod
    def plus(cls, positions) -> "VortexConfiguration":
        pos = np.asarray(positions, dtype=float).reshape(-1, 2)
        return cls(pos, np.ones(len(pos), dtype=int))

    @property
    def n(self) -> int:
        return len(self.degrees)

    @property
    def z(self) -> np.ndarray:
        return self.positions[:, 0] + 1j * self.positions[:, 1]

    def moved(self, positions) -> "VortexConfiguration":
        return VortexConfiguration(positions, self.degrees, dict(self.meta))


@dataclass(frozen=True)
class KernelContext:
    """Domain and boundary-flux data that determine the kernels.

    ``phi_star`` lists (m, a_m, b_m) for phi_star(theta) = sum a_m cos(m theta)
    + b_m sin(m theta), m >= 1.  ``conformal_map`` lists coefficients
    (c_0, c_1, ..., c_K) of w(z) = sum c_k z^k taking the domain onto the unit
    disk; c_0 must be 0 so the origin is inside the domain.
    """

    winding: int = 1
    phi_star: tuple = ()
    conformal_map: tuple | None = None
    kernel_kind: str = "neumann"
    _corr: np.ndarray = field(init=False, repr=False, compare=False, default=None)
    _map: tuple = field(init=False, repr=False, compare=False, default=None)
    _boundary: np.ndarray = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        if int(self.winding) != self.winding or self.winding < 1:
            raise ContextError("winding must be an integer >= 1")
        if self.kernel_kind not in KERNEL_KINDS:
            raise ContextError(f"kernel_kind must be one of {KERNEL_KINDS}")
        modes = tuple((int(m), float(a), float(b)) for m, a, b in self.phi_star)
        if len(modes) > MAX_PHI_MODES:
            raise ContextError(f"at most {MAX_PHI_MODES} phi_star modes supported")
        for m, a, b in modes:
            # m >= 1 makes the tangential derivative integrate to zero on the boundary
            if m < 1:
                raise ContextError("phi_star modes must have m >= 1 (zero-mean derivative)")
            if not (np.isfinite(a) and np.isfinite(b)):
                raise ContextError("non-finite phi_star coefficient")
        object.__setattr__(self, "phi_star", modes)
        if self.conformal_map is not None:
            coef = np.asarray(self.conformal_map, dtype=complex)
            if coef.ndim != 1 or len(coef) < 2:
                raise ContextError("conformal map needs coefficients (c_0, c_1, ...)")
            if coef[0] != 0:
                raise ContextError("conformal map must fix the origin (c_0 = 0)")
            object.__setattr__(self, "conformal_map", tuple(complex(c) for c in coef))
            d1 = _polyder(coef)
            d2 = _polyder(d1)
            object.__setattr__(self, "_map", (coef, d1, d2))
            self._check_map()
        object.__setattr__(self, "_corr", self._correction_coefficients())

    # -- conformal map -------------------------------------------------
    @property
    def is_disk(self) -> bool:
        return self._map is None

    def w(self, x):
        return x if self._map is None else _polyval(self._map[0], x)

    def dw(self, x):
        return np.ones_like(x) if self._map is None else _polyval(self._map[1], x)

    def d2w(self, x):
        return np.zeros_like(x) if self._map is None else _polyval(self._map[2], x)

    def inverse_map(self, zeta, steps: int = 24):
        """Invert w by Newton continuation from the origin along rays."""
        zeta = np.asarray(zeta, dtype=complex)
        if self._map is None:
            return zeta
        coef, d1, _ = self._map
        z = zeta / coef[1]
        for s in np.linspace(0.0, 1.0, steps + 1)[1:]:
            target = s * zeta
            for _ in range(4):
                z = z - (_polyval(coef, z) - target) / _polyval(d1, z)
        for _ in range(30):
            dz = (_polyval(coef, z) - zeta) / _polyval(d1, z)
            z = z - dz
            if np.all(np.abs(dz) < 1e-15):
                break
        if not np.all(np.abs(_polyval(coef, z) - zeta) < 1e-11):
            raise ContextError("inverse conformal map did not converge")
        return z

    def _check_map(self):
        coef, d1, _ = self._map
        psi = 2 * np.pi * np.arange(_BOUNDARY_SAMPLES) / _BOUNDARY_SAMPLES
        # sample the closed disk in the image plane and pull back
        rr = np.linspace(0.0, 1.0, 33)
        zeta = (rr[:, None] * np.exp(1j * psi[None, ::4])).ravel()
        z = self.inverse_map(zeta)
        if np.min(np.abs(_polyval(d1, z))) < 1e-8:
            raise ContextError("conformal map derivative vanishes at a sampled point")
        zb = self.inverse_map(np.exp(1j * psi))
        # the boundary preimage must be a simple closed curve winding once around 0
        turn = np.sum(np.angle(np.roll(zb, -1) / zb))
        if abs(turn - 2 * np.pi) > 1e-6:
            raise ContextError("conformal map is not injective on the sampled boundary")
        # distinct sample points must stay distinct (injectivity by sampling)
        dz = np.abs(z[:, None] - z[None, :])
        dzeta = np.abs(zeta[:, None] - zeta[None, :])
        mask = dzeta > 1e-9
        if np.any(dz[mask] < 1e-12):
            raise ContextError("conformal map is not injective on sampled points")
        object.__setattr__(self, "_boundary", zb)

    def boundary_points(self, m: int = _BOUNDARY_SAMPLES) -> np.ndarray:
        psi = 2 * np.pi * np.arange(m) / m
        return self.inverse_map(np.exp(1j * psi))

    # -- boundary correction --------------------------------------------
    def phi_star_value(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.zeros_like(theta)
        for m, a, b in self.phi_star:
            out = out + a * np.cos(m * theta) + b * np.sin(m * theta)
        return out

    def _correction_coefficients(self) -> np.ndarray:
        """Coefficients c_m of Phi(zeta) = sum c_m zeta^m with P = Re Phi.

        P is harmonic with radial derivative equal to the tangential
        derivative of the boundary potential b(psi); writing
        b = sum a_m cos + b_m sin gives c_m = b_m + i a_m.
        """
        if self._map is None:
            if not self.phi_star:
                return np.zeros(1, dtype=complex)
            mmax = max(m for m, _, _ in self.phi_star)
            c = np.zeros(mmax + 1, dtype=complex)
            for m, a, b in self.phi_star:
                c[m] += (b + 1j * a) / self.winding
            return c
        M = _BOUNDARY_SAMPLES
        psi = 2 * np.pi * np.arange(M) / M
        zb = self.inverse_map(np.exp(1j * psi))
        beta = np.unwrap(np.angle(zb)) - psi
        beta = beta - 2 * np.pi * np.round((beta[0]) / (2 * np.pi))
        bpot = beta + self.phi_star_value(np.angle(zb)) / self.winding
        fc = np.fft.rfft(bpot) / M
        am = 2 * fc.real
        bm = -2 * fc.imag
        c = (bm + 1j * am)
        c[0] = 0.0
        c = c[: M // 2]
        keep = np.nonzero(np.abs(c) > 1e-16)[0]
        return c[: (keep.max() + 1 if len(keep) else 1)]

    def correction(self, zeta):
        """P(zeta), zero mean on the unit circle."""
        if len(self._corr) == 1:
            return np.zeros_like(np.real(zeta))
        return np.real(_polyval(self._corr, zeta))

    def correction_grad(self, zeta):
        """Complex gradient of P with respect to zeta."""
        if len(self._corr) == 1:
            return np.zeros_like(np.asarray(zeta, dtype=complex))
        return np.conj(_polyval(_polyder(self._corr), zeta))

    @property
    def has_correction(self) -> bool:
        return len(self._corr) > 1

    # -- domain membership ----------------------------------------------
    def contains(self, x, closed: bool = True, tol: float = 1e-12):
        x = np.asarray(x, dtype=complex)
        r = np.abs(self.w(x))
        inside = r <= 1 + tol if closed else r < 1 - tol
        if self._map is not None:
            with np.errstate(all="ignore"):
                try:
                    back = self.inverse_map(np.where(inside, self.w(x), 0))
                except ContextError:
                    return np.zeros_like(inside, dtype=bool)
                inside = inside & (np.abs(back - x) < 1e-8)
        return inside

    def check_points(self, *pts, closed: bool = True):
        for p in pts:
            if not np.all(self.contains(p, closed=closed)):
                raise DomainError("point outside the domain")


DISK = KernelContext()


def _prep(ctx: KernelContext, x, y, allow_equal: bool):
    zx, zy = as_complex(x), as_complex(y)
    ctx.check_points(zx, zy)
    if not allow_equal and np.any(zx == zy):
        raise DomainError("coincident points")
    return zx, zy


def neumann_N(ctx: KernelContext, x, y):
    """Neumann function with flux d(theta)/ds + (1/n) d(phi_star)/ds."""
    zx, zy = _prep(ctx, x, y, allow_equal=False)
    if ctx.is_disk and not ctx.has_correction:
        return np.log(np.abs(zx - zy)) + np.log(np.abs(1 - zx * np.conj(zy)))
    zeta, eta = ctx.w(zx), ctx.w(zy)
    return (
        np.log(np.abs(zeta - eta))
        + np.log(np.abs(1 - zeta * np.conj(eta)))
        + ctx.correction(zeta)
        + ctx.correction(eta)
    )


def harmonic_part_H(ctx: KernelContext, x, y):
    """H = N - log|x - y|, finite on the diagonal."""
    zx, zy = _prep(ctx, x, y, allow_equal=True)
    zeta, eta = ctx.w(zx), ctx.w(zy)
    out = np.log(np.abs(1 - zeta * np.conj(eta))) + ctx.correction(zeta) + ctx.correction(eta)
    if not ctx.is_disk:
        same = zx == zy
        with np.errstate(divide="ignore", invalid="ignore"):
            quot = np.where(same, ctx.dw(zx), (zeta - eta) / np.where(same, 1, zx - zy))
        out = out + np.log(np.abs(quot))
    return out


def dirichlet_green_G(ctx: KernelContext, x, y):
    """Green function vanishing on the boundary."""
    zx, zy = _prep(ctx, x, y, allow_equal=False)
    zeta, eta = ctx.w(zx), ctx.w(zy)
    return np.log(np.abs(zeta - eta)) - np.log(np.abs(1 - zeta * np.conj(eta)))


def conformal_kernel(ctx: KernelContext, x, y):
    """Neumann function of a mapped domain; requires a conformal map."""
    if ctx.conformal_map is None:
        raise ContextError("conformal_kernel needs a conformal map")
    return neumann_N(ctx, x, y)


# -- kernel dispatch on complex arrays (no validation) ---------------------

def _kernel_full(ctx, zx, zy):
    zeta, eta = ctx.w(zx), ctx.w(zy)
    if ctx.kernel_kind == "neumann":
        return (np.log(np.abs(zeta - eta)) + np.log(np.abs(1 - zeta * np.conj(eta)))
                + ctx.correction(zeta) + ctx.correction(eta))
    return np.log(np.abs(zeta - eta)) - np.log(np.abs(1 - zeta * np.conj(eta)))


def _kernel_diag(ctx, za):
    """Regular part of the active kernel on the diagonal."""
    zeta = ctx.w(za)
    out = np.log(np.abs(ctx.dw(za))) if not ctx.is_disk else np.zeros(np.shape(za))
    if ctx.kernel_kind == "neumann":
        return out + np.log(1 - np.abs(zeta) ** 2) + 2 * ctx.correction(zeta)
    return out - np.log(1 - np.abs(zeta) ** 2)


def kernel_grad_x(ctx, zx, zy):
    """Complex gradient in x of the active kernel K(x, y), x != y."""
    zeta, eta = ctx.w(zx), ctx.w(zy)
    sing = 1.0 / np.conj(zeta - eta)
    img = eta / (1 - np.conj(zeta) * eta)
    if ctx.kernel_kind == "neumann":
        g = sing - img + ctx.correction_grad(zeta)
    else:
        g = sing + img
    return g if ctx.is_disk else np.conj(ctx.dw(zx)) * g


def regular_grad_x(ctx, zx, zy):
    """Complex gradient in x of the regular part K(x, y) - log|x - y|.

    Valid for x == y as well (the diagonal limit).
    """
    zx = np.asarray(zx, dtype=complex)
    zy = np.asarray(zy, dtype=complex)
    zeta, eta = ctx.w(zx), ctx.w(zy)
    img = eta / (1 - np.conj(zeta) * eta)
    if ctx.kernel_kind == "neumann":
        g = -img + ctx.correction_grad(zeta)
    else:
        g = img
    if ctx.is_disk:
        return g
    dw = ctx.dw(zx)
    same = zx == zy
    with np.errstate(divide="ignore", invalid="ignore"):
        quot = np.conj(dw) / np.conj(np.where(same, 1, zeta - eta)) - 1.0 / np.conj(
            np.where(same, 1, zx - zy))
    quot = np.where(same, np.conj(ctx.d2w(zx) / (2 * dw)), quot)
    return np.conj(dw) * g + quot


def regular_diag_grad(ctx, za):
    """Complex gradient of a -> K_reg(a, a)."""
    zeta = ctx.w(za)
    if ctx.kernel_kind == "neumann":
        g = -2 * zeta / (1 - np.abs(zeta) ** 2) + 2 * ctx.correction_grad(zeta)
    else:
        g = 2 * zeta / (1 - np.abs(zeta) ** 2)
    if ctx.is_disk:
        return g
    dw = ctx.dw(za)
    return np.conj(dw) * g + np.conj(ctx.d2w(za) / dw)


# -- configuration geometry -------------------------------------------------

def validate_configuration(ctx: KernelContext, cfg: VortexConfiguration):
    if cfg.n and not np.all(ctx.contains(cfg.z, closed=False)):
        raise ConfigurationError("vortex outside the open domain")


def boundary_distance(ctx: KernelContext, z):
    z = np.asarray(z, dtype=complex)
    if ctx.is_disk:
        return 1.0 - np.abs(z)
    zb = ctx._boundary
    # polygon distance, refined by the dense boundary sample
    return np.min(np.abs(z[..., None] - zb), axis=-1)


def rho_a(cfg: VortexConfiguration, ctx: KernelContext = DISK) -> float:
    """Minimum of pairwise distances and distances to the boundary."""
    if cfg.n == 0:
        raise UsageError("rho_a needs a nonempty configuration")
    z = cfg.z
    r = float(np.min(boundary_distance(ctx, z)))
    if cfg.n > 1:
        d = np.abs(z[:, None] - z[None, :])
        d[np.diag_indices(cfg.n)] = np.inf
        r = min(r, float(d.min()))
    return r


def rho_star(trajectory, ctx: KernelContext = DISK) -> float:
    """A quarter of the smallest rho_a along a sequence of configurations."""
    cfgs = list(trajectory)
    if not cfgs:
        raise UsageError("rho_star needs a nonempty trajectory")
    return 0.25 * min(rho_a(c, ctx) for c in cfgs)


def renormalized_W(ctx: KernelContext, cfg: VortexConfiguration) -> float:
    """W = -pi sum_{j != k} d_j d_k K(a_j, a_k) - pi sum_j K_reg(a_j, a_j)."""
    validate_configuration(ctx, cfg)
    if cfg.n == 0:
        return 0.0
    z, d = cfg.z, cfg.degrees
    self_terms = _kernel_diag(ctx, z)
    total = -np.pi * np.sum(self_terms)
    if cfg.n > 1:
        iu = np.triu_indices(cfg.n, 1)
        pair = _kernel_full(ctx, z[iu[0]], z[iu[1]])
        total += -2 * np.pi * np.sum(d[iu[0]] * d[iu[1]] * pair)
    return float(total)


def grad_W_complex(ctx: KernelContext, cfg: VortexConfiguration) -> np.ndarray:
    z, d = cfg.z, cfg.degrees
    g = regular_diag_grad(ctx, z)
    if cfg.n > 1 and ctx.is_disk and not ctx.has_correction:
        # direct broadcasting on the plain disk
        diff = z[:, None] - z[None, :]
        np.fill_diagonal(diff, 1.0)
        sing = 1.0 / np.conj(diff)
        np.fill_diagonal(sing, 0.0)
        img = z[None, :] / (1 - np.conj(z)[:, None] * z[None, :])
        np.fill_diagonal(img, 0.0)
        pair = sing - img if ctx.kernel_kind == "neumann" else sing + img
        g = g + 2 * (pair @ d if np.all(d == 1) else (d[:, None] * pair) @ d)
    elif cfg.n > 1:
        zx, zy = np.meshgrid(z, z, indexing="ij")
        off = ~np.eye(cfg.n, dtype=bool)
        pair = np.zeros((cfg.n, cfg.n), dtype=complex)
        pair[off] = kernel_grad_x(ctx, zx[off], zy[off])
        g = g + 2 * np.sum((d[:, None] * d[None, :]) * pair, axis=1)
    return -np.pi * g


def grad_W(ctx: KernelContext, cfg: VortexConfiguration) -> np.ndarray:
    """Gradient of W with respect to each vortex position, shape (n, 2)."""
    validate_configuration(ctx, cfg)
    if cfg.n == 0:
        return np.zeros((0, 2))
    return as_pairs(grad_W_complex(ctx, cfg))


# -- soft monitors --------------------------------------------------------

def separation_lower_bound(W: float, n: int) -> float:
    return float(np.exp(-W - SEPARATION_C * n * n))


def monitor_configuration(ctx: KernelContext, cfg: VortexConfiguration, W=None, grad=None) -> dict:
    """Evaluate the separation, gradient and scale bounds; log violations."""
    W = renormalized_W(ctx, cfg) if W is None else W
    grad = grad_W(ctx, cfg) if grad is None else grad
    rho = rho_a(cfg, ctx)
    n = cfg.n
    report = {
        "separation_ok": rho >= separation_lower_bound(W, n),
        "gradient_ok": bool(np.all(np.hypot(grad[:, 0], grad[:, 1]) <= GRADIENT_C * n / rho)),
        "scale_ok": W <= SCALE_C * (n**3 + n**2 / rho**2),
    }
    for key, ok in report.items():
        if not ok:
            log.warning("soft bound violated: %s (n=%d, rho_a=%.3g, W=%.6g)", key, n, rho, W)
    return report
