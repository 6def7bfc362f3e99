"""Stress-tensor pairing identity for the canonical harmonic map.

With j = j(u_star) and T = j (x) j - |j|^2 / 2 I, the limit of the integrals
of d_km phi T_km outside the disks B_tau(a_j) is

    -sum_j grad phi(a_j) . grad_{a_j} W + (pi/2) sum_j d_j^2 Laplacian phi(a_j).

The second (core) term comes from the 1/tau^2 stress on the excluded circles
and vanishes when phi is affine near every vortex.  The left side is
computed with a smooth partition of unity: a far part integrated in polar
coordinates about the centre of supp D^2 phi, and one near part per vortex in
local polar coordinates outside B_tau(a_j).  The excluded piece is even in
tau, so two Richardson steps in tau^2 remove its tau^2 and tau^4 terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import UsageError
from ..field import canonical_current
from ..kernels import KernelContext, VortexConfiguration, grad_W, rho_a
from .energetics import cutoff


@dataclass(frozen=True)
class BumpTimesAffine:
    """phi(x) = b(x) (c0 + l . x), b = exp(1 - 1 / (1 - |x - centre|^2 / R^2)) on B_R(centre)."""

    centre: tuple = (0.0, 0.0)
    radius: float = 0.5
    linear: tuple = (1.0, 0.0)
    constant: float = 0.0

    def _b(self, x, y):
        X, Y = x - self.centre[0], y - self.centre[1]
        R2 = self.radius**2
        q = (X**2 + Y**2) / R2
        inside = q < 1
        s = np.where(inside, 1 - q, 1.0)
        b = np.where(inside, np.exp(1 - 1 / s), 0.0)
        b1 = -b / s**2  # db/dq
        b2 = b / s**4 - 2 * b / s**3
        return X, Y, R2, b, b1, b2

    def value(self, x, y):
        _, _, _, b, _, _ = self._b(x, y)
        return b * (self.constant + self.linear[0] * x + self.linear[1] * y)

    def grad(self, x, y):
        X, Y, R2, b, b1, _ = self._b(x, y)
        ell = self.constant + self.linear[0] * x + self.linear[1] * y
        bx, by = b1 * 2 * X / R2, b1 * 2 * Y / R2
        return bx * ell + b * self.linear[0], by * ell + b * self.linear[1]

    def hessian(self, x, y):
        X, Y, R2, b, b1, b2 = self._b(x, y)
        ell = self.constant + self.linear[0] * x + self.linear[1] * y
        qx, qy = 2 * X / R2, 2 * Y / R2
        bx, by = b1 * qx, b1 * qy
        bxx = b2 * qx * qx + b1 * 2 / R2
        bxy = b2 * qx * qy
        byy = b2 * qy * qy + b1 * 2 / R2
        l1, l2 = self.linear
        return (bxx * ell + 2 * bx * l1, bxy * ell + bx * l2 + by * l1, byy * ell + 2 * by * l2)

    @property
    def support(self):
        return complex(*self.centre), self.radius


@dataclass(frozen=True)
class AffineTest:
    """phi(x) = c0 + l . x; its Hessian vanishes identically."""

    linear: tuple = (1.0, 0.0)
    constant: float = 0.0

    def value(self, x, y):
        return self.constant + self.linear[0] * x + self.linear[1] * y

    def grad(self, x, y):
        return np.full(np.shape(x), float(self.linear[0])), np.full(np.shape(x), float(self.linear[1]))

    def hessian(self, x, y):
        z = np.zeros(np.shape(x))
        return z, z, z

    support = None


def _pairing(ctx, cfg, phi, z):
    j = canonical_current(ctx, cfg, z)
    h11, h12, h22 = phi.hessian(z.real, z.imag)
    j1, j2 = j.real, j.imag
    return 0.5 * (h11 - h22) * (j1**2 - j2**2) + 2 * h12 * j1 * j2


def _gauss_polar(centre, r0, r1, n_r, n_t, panels):
    x, w = np.polynomial.legendre.leggauss(n_r)
    edges = np.linspace(r0, r1, panels + 1)
    rs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        rs.append(0.5 * (b - a) * x + 0.5 * (b + a))
        ws.append(0.5 * (b - a) * w)
    r = np.concatenate(rs)
    wr = np.concatenate(ws)
    t = np.arange(n_t) * 2 * math.pi / n_t
    Z = centre + r[:, None] * np.exp(1j * t)[None, :]
    W = (wr * r)[:, None] * (2 * math.pi / n_t) * np.ones((1, n_t))
    return Z, W


def stress_identity_check(ctx: KernelContext, cfg: VortexConfiguration, phi,
                          tau: float | None = None, level: int = 2) -> dict:
    """Left and right sides of the stress pairing identity and their difference."""
    if cfg.n == 0:
        raise UsageError("stress identity needs at least one vortex")
    gx, gy = phi.grad(cfg.positions[:, 0], cfg.positions[:, 1])
    G = grad_W(ctx, cfg)
    force = -float(np.sum(gx * G[:, 0] + gy * G[:, 1]))
    h11, _, h22 = phi.hessian(cfg.positions[:, 0], cfg.positions[:, 1])
    core = 0.5 * math.pi * float(np.sum(cfg.degrees**2 * (h11 + h22)))
    rhs = force + core
    if phi.support is None:
        return {"lhs": 0.0, "rhs": rhs, "force_term": force, "core_term": core,
                "residual": -rhs, "relative": abs(rhs)}
    c, R = phi.support
    s = rho_a(cfg, ctx) / 4
    z0 = cfg.z

    def zeta0(z):
        acc = np.zeros(z.shape)
        for a in z0:
            acc += cutoff(np.abs(z - a) / s)
        return 1.0 - acc

    k = 2**level
    Z, W = _gauss_polar(c, 0.0, R, 16, 64 * k, 8 * k)
    far = float(np.sum(W * zeta0(Z) * _pairing(ctx, cfg, phi, Z)))
    tau = s / 8 if tau is None else tau

    def near(t):
        tot = 0.0
        for a in z0:
            if abs(a - c) >= R + 2 * s:
                continue
            Zl, Wl = _gauss_polar(a, t, 2 * s, 16, 64 * k, 4 * k)
            tot += float(np.sum(Wl * cutoff(np.abs(Zl - a) / s) * _pairing(ctx, cfg, phi, Zl)))
        return tot

    n1, n2, n4 = near(tau), near(tau / 2), near(tau / 4)
    r1, r2 = (4 * n2 - n1) / 3, (4 * n4 - n2) / 3
    near0 = (16 * r2 - r1) / 15
    lhs = far + near0
    scale = max(abs(lhs), abs(rhs))
    # both sides vanish (to roundoff) for symmetric inputs; report the absolute residual then
    rel = abs(lhs - rhs) / scale if scale > 1e-12 else abs(lhs - rhs)
    return {"lhs": lhs, "rhs": rhs, "force_term": force, "core_term": core,
            "residual": lhs - rhs, "relative": rel,
            "far": far, "near": near0, "tau": tau, "richardson_change": abs(near0 - r2)}
