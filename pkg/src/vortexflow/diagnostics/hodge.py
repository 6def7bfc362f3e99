"""Discrete Hodge decomposition j = grad f1 + perp-grad f2 on the polar grid.

Vector fields live on the faces of the cell grid: the radial component jr on
the outer radial face of each cell (r = (i + 1) dr, theta_k), the angular
component jt on the angular face (r_i, theta_k + dtheta/2).  f1 lives on
cell centres and f2 on cell corners (r = (i + 1) dr, theta_k + dtheta/2),
with the origin as an extra corner where f2 = 0.  The discrete divergence of
a discrete gradient is the conservative Laplacian, so the remainder after
removing grad f1 is exactly divergence free and integrates to a stream
function.

bc "dirichlet": f1 = 0 on the boundary; the normal flux of j stays in
perp-grad f2.  bc "neumann": d_nu f1 = j.nu, so f2 is constant on the
boundary and is shifted to vanish there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from ..errors import UsageError
from ..field import BC_KINDS, Field, PolarGrid, canonical_current, face_currents
from ..kernels import KernelContext, VortexConfiguration


@dataclass
class HodgeResult:
    f1: np.ndarray  # cell centres
    f2: np.ndarray  # corners
    grad_f1: tuple  # (radial faces, angular faces)
    perp_f2: tuple
    norms: dict


def cell_to_faces(grid: PolarGrid, j: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Interpolate a cell-centred Cartesian field (n_r, n_theta, 2) to face normal components."""
    jc = j[..., 0] + 1j * j[..., 1]
    e = np.exp(1j * grid.theta)[None, :]
    jrad = np.real(jc * np.conj(e))
    # radial faces: average of the two neighbours, linear extrapolation at r = 1
    fr = np.empty(grid.shape)
    fr[:-1] = 0.5 * (jrad[1:] + jrad[:-1])
    fr[-1] = 1.5 * jrad[-1] - 0.5 * jrad[-2]
    eh = np.exp(1j * (grid.theta + 0.5 * grid.dtheta))[None, :]
    jn = 0.5 * (jc + np.roll(jc, -1, axis=1))
    ft = np.real(jn * np.conj(1j * eh))
    return fr, ft


def _div(grid: PolarGrid, fr, ft):
    flux = grid.r_face[:, None] * fr
    inner = np.vstack([np.zeros((1, grid.n_theta)), flux[:-1]])
    return (flux - inner) / (grid.r[:, None] * grid.dr) + (ft - np.roll(ft, 1, axis=1)) / (
        grid.r[:, None] * grid.dtheta)


def poisson(grid: PolarGrid, rhs: np.ndarray, bc: str) -> np.ndarray:
    """Solve L f = rhs with the homogeneous ghost-ring closure of the conservative Laplacian.

    For bc "neumann" the mean (area-weighted) of f is zero and rhs must have zero mean.
    """
    n, dr = grid.n_r, grid.dr
    r, rf = grid.r, grid.r_face
    R = np.fft.fft(rhs, axis=1)
    out = np.empty_like(R)
    lower = rf[:-1] / (r[1:] * dr**2)  # coefficient of f_{i-1} in row i
    upper = rf[:-1] / (r[:-1] * dr**2)  # coefficient of f_{i+1} in row i
    diag0 = -(rf + np.concatenate([[0.0], rf[:-1]])) / (r * dr**2)
    # ghost ring: -f_last (Dirichlet) or f_last (Neumann)
    diag0[-1] += (-1.0 if bc == "dirichlet" else 1.0) * rf[-1] / (r[-1] * dr**2)
    for m in range(grid.n_theta):
        diag = diag0 - grid.lam[m] / r**2
        ab = np.zeros((3, n))
        ab[0, 1:] = upper
        ab[1] = diag
        ab[2, :-1] = lower
        b = R[:, m].copy()
        if bc == "neumann" and m == 0:
            # singular mode: pin the first row, then remove the weighted mean
            ab[1, 0], ab[0, 1] = 1.0, 0.0
            b[0] = 0.0
        out[:, m] = solve_banded((1, 1), ab, b)
    f = np.real(np.fft.ifft(out, axis=1))
    if bc == "neumann":
        f -= np.sum(f * grid.area) / np.sum(grid.area)
    return f


def face_gradient(grid: PolarGrid, f: np.ndarray, bc: str, boundary_flux=None):
    if bc == "dirichlet":
        ghost = -f[-1]
    else:
        ghost = f[-1] + (0.0 if boundary_flux is None else grid.dr * boundary_flux)
    F = np.vstack([f, ghost[None, :]])
    gr = (F[1:] - F[:-1]) / grid.dr
    gt = (np.roll(f, -1, axis=1) - f) / (grid.r[:, None] * grid.dtheta)
    return gr, gt


def stream_function(grid: PolarGrid, rr: np.ndarray, rt: np.ndarray) -> np.ndarray:
    """psi on corners with perp-grad psi = (rr, rt) for a divergence-free face field.

    Integrates the angular faces outward from the origin (psi = 0 there).
    """
    return np.cumsum(rt * grid.dr, axis=0)


def perp_gradient(grid: PolarGrid, psi: np.ndarray):
    """Face components of perp-grad psi = (-(1/r) d_theta psi, d_r psi)."""
    pr = -(psi - np.roll(psi, 1, axis=1)) / (grid.r_face[:, None] * grid.dtheta)
    inner = np.vstack([np.zeros((1, grid.n_theta)), psi[:-1]])
    pt = (psi - inner) / grid.dr
    return pr, pt


def _face_norm(grid: PolarGrid, fr, ft) -> float:
    wr = grid.r_face[:, None] * grid.dr * grid.dtheta
    wt = grid.r[:, None] * grid.dr * grid.dtheta
    return math.sqrt(float(np.sum(wr * fr**2) + np.sum(wt * ft**2)))


def hodge_decompose(grid: PolarGrid, j, bc: str = "dirichlet") -> HodgeResult:
    """Decompose a face field (jr, jt), or a cell-centred (n_r, n_theta, 2) array."""
    if bc not in BC_KINDS:
        raise UsageError(f"unknown bc {bc!r}")
    if isinstance(j, tuple):
        jr, jt = (np.asarray(a, dtype=float) for a in j)
    else:
        jr, jt = cell_to_faces(grid, np.asarray(j, dtype=float))
    if jr.shape != grid.shape or jt.shape != grid.shape:
        raise UsageError("vector field does not match the grid")
    if bc == "dirichlet":
        f1 = poisson(grid, _div(grid, jr, jt), "dirichlet")
        gr, gt = face_gradient(grid, f1, "dirichlet")
    else:
        jr0 = jr.copy()
        jr0[-1] = 0.0
        f1 = poisson(grid, _div(grid, jr0, jt), "neumann")
        gr, gt = face_gradient(grid, f1, "neumann", boundary_flux=jr[-1])
    rr, rt = jr - gr, jt - gt
    psi = stream_function(grid, rr, rt)
    if bc == "neumann":
        psi = psi - np.mean(psi[-1])
    pr, pt = perp_gradient(grid, psi)
    res = _face_norm(grid, jr - gr - pr, jt - gt - pt)
    total = _face_norm(grid, jr, jt)
    norms = {
        "grad_f1": _face_norm(grid, gr, gt),
        "perp_f2": _face_norm(grid, pr, pt),
        "total": total,
        "residual": res,
        "relative_residual": res / total if total > 0 else 0.0,
        "max_divergence_remainder": float(np.max(np.abs(_div(grid, rr, rt)))),
    }
    return HodgeResult(f1, psi, (gr, gt), (pr, pt), norms)


def current_difference(f: Field, ctx: KernelContext, cfg: VortexConfiguration):
    """Face components of j(u) - j(u_star), with j(u_star) sampled analytically on the faces."""
    g = f.grid
    jr, jt = face_currents(f)
    zr = g.r_face[:, None] * np.exp(1j * g.theta)[None, :]
    th = g.theta + 0.5 * g.dtheta
    zt = g.r[:, None] * np.exp(1j * th)[None, :]
    cr = canonical_current(ctx, cfg, zr)
    ct = canonical_current(ctx, cfg, zt)
    sr = np.real(cr * np.exp(-1j * g.theta)[None, :])
    st = np.real(ct * np.conj(1j * np.exp(1j * th))[None, :])
    return jr - sr, jt - st
