import math

import numpy as np
import pytest

from vortexflow.errors import ConfigurationError, ContextError, DomainError
from vortexflow.kernels import (DISK, KernelContext, VortexConfiguration, conformal_kernel,
                                dirichlet_green_G, grad_W, harmonic_part_H, neumann_N, renormalized_W,
                                rho_a, rho_star)


def test_neumann_examples():
    assert neumann_N(DISK, (0.5, 0), (0, 0)) == pytest.approx(-0.693147, abs=1e-6)
    assert neumann_N(DISK, (0.5, 0), (0.25, 0)) == pytest.approx(-1.519826, abs=1e-6)
    assert neumann_N(DISK, (0.25, 0), (0.5, 0)) == neumann_N(DISK, (0.5, 0), (0.25, 0))


def test_neumann_closed_form_bitwise(rng):
    x = 0.9 * rng.random(40) * np.exp(2j * np.pi * rng.random(40))
    y = 0.9 * rng.random(40) * np.exp(2j * np.pi * rng.random(40))
    expect = np.log(np.abs(x - y)) + np.log(np.abs(1 - x * np.conj(y)))
    assert np.array_equal(neumann_N(DISK, x, y), expect)


def test_harmonic_part_examples():
    assert harmonic_part_H(DISK, (0, 0), (0, 0)) == 0.0
    assert harmonic_part_H(DISK, (0.5, 0), (0.5, 0)) == pytest.approx(-0.287682, abs=1e-6)
    assert harmonic_part_H(DISK, (0.5, 0), (-0.5, 0)) == pytest.approx(0.223144, abs=1e-6)


def test_green_examples(rng):
    assert dirichlet_green_G(DISK, (0.5, 0), (0, 0)) == pytest.approx(-0.693147, abs=1e-6)
    assert dirichlet_green_G(DISK, (0.5, 0), (-0.5, 0)) == pytest.approx(-0.223144, abs=1e-6)
    y = 0.95 * rng.random(20) * np.exp(2j * np.pi * rng.random(20))
    b = np.exp(2j * np.pi * rng.random(20))
    assert np.max(np.abs(dirichlet_green_G(DISK, b, y))) <= 1e-12


def test_boundary_flux_two_pi():
    # outward flux of grad_x N through the unit circle
    y = 0.3 + 0.2j
    m = 4096
    th = 2 * np.pi * np.arange(m) / m
    x = np.exp(1j * th)
    h = 1e-6
    # evaluate the normal derivative just inside the boundary with a one-sided stencil
    r1, r2 = 1 - h, 1 - 2 * h
    f0 = np.log(np.abs(x - y)) + np.log(np.abs(1 - x * np.conj(y)))
    f1 = neumann_N(DISK, x * r1, y)
    f2 = neumann_N(DISK, x * r2, y)
    dn = (3 * f0 - 4 * f1 + f2) / (2 * h)
    flux = float(np.sum(dn) * 2 * np.pi / m)
    assert flux == pytest.approx(2 * np.pi, abs=1e-6 * 2 * np.pi + 1e-5)


def test_kernel_errors():
    with pytest.raises(DomainError):
        neumann_N(DISK, (0.1, 0), (0.1, 0))
    with pytest.raises(DomainError):
        neumann_N(DISK, (1.2, 0), (0.1, 0))
    with pytest.raises(DomainError):
        dirichlet_green_G(DISK, (0.3, 0), (0.3, 0))
    with pytest.raises(ContextError):
        KernelContext(kernel_kind="robin")
    with pytest.raises(ContextError):
        KernelContext(phi_star=((0, 1.0, 0.0),))
    with pytest.raises(ContextError):
        conformal_kernel(DISK, (0.1, 0), (0.2, 0))


def test_W_examples():
    assert renormalized_W(DISK, VortexConfiguration.plus([[0, 0]])) == pytest.approx(0.0, abs=1e-15)
    one = VortexConfiguration.plus([[0.5, 0]])
    assert renormalized_W(DISK, one) == pytest.approx(-math.pi * math.log(0.75), rel=1e-14)
    pair = VortexConfiguration.plus([[0.5, 0], [-0.5, 0]])
    expect = -2 * math.pi * math.log(1.25) - 2 * math.pi * math.log(0.75)
    assert renormalized_W(DISK, pair) == pytest.approx(expect, rel=1e-14)
    assert renormalized_W(DISK, pair) == pytest.approx(0.405, abs=1e-3)


def test_W_rejects_bad_configurations():
    with pytest.raises(ConfigurationError):
        VortexConfiguration.plus([[0.2, 0], [0.2, 0]])
    with pytest.raises(ConfigurationError):
        renormalized_W(DISK, VortexConfiguration.plus([[1.0, 0]]))
    with pytest.raises(ConfigurationError):
        VortexConfiguration([[0, 0]], [2])


def test_grad_W_examples():
    assert np.allclose(grad_W(DISK, VortexConfiguration.plus([[0, 0]])), 0.0)
    g = grad_W(DISK, VortexConfiguration.plus([[0.5, 0]]))
    assert g[0] == pytest.approx([2 * math.pi * 0.5 / 0.75, 0.0], abs=1e-12)
    assert g[0, 0] == pytest.approx(4.18879, abs=1e-5)


def test_grad_W_matches_central_differences_mixed_and_green(rng):
    for ctx in (DISK, KernelContext(kernel_kind="dirichlet_green"),
                KernelContext(phi_star=((1, 0.3, -0.2), (3, 0.1, 0.05)), winding=2)):
        cfg = VortexConfiguration([[0.3, 0.1], [-0.2, -0.35], [0.05, 0.5]], [1, -1, 1])
        G = grad_W(ctx, cfg)
        fd = np.zeros_like(G)
        h = 1e-6
        for j in range(cfg.n):
            for k in range(2):
                p = cfg.positions.copy()
                p[j, k] += h
                wp = renormalized_W(ctx, cfg.moved(p))
                p[j, k] -= 2 * h
                wm = renormalized_W(ctx, cfg.moved(p))
                fd[j, k] = (wp - wm) / (2 * h)
        assert np.linalg.norm(G - fd) <= 1e-6 * np.linalg.norm(G)


def test_rho_examples():
    assert rho_a(VortexConfiguration.plus([[0, 0]])) == 1.0
    pair = VortexConfiguration.plus([[0.25, 0], [-0.25, 0]])
    assert rho_a(pair) == pytest.approx(0.5)
    assert rho_star([pair, pair, pair]) == pytest.approx(0.125)


def test_conformal_identity_and_rotation(rng):
    ident = KernelContext(conformal_map=(0, 1))
    x, y = 0.3 + 0.1j, -0.2 + 0.4j
    assert conformal_kernel(ident, (x.real, x.imag), (y.real, y.imag)) == pytest.approx(
        float(neumann_N(DISK, (x.real, x.imag), (y.real, y.imag))), abs=1e-13)
    rot = np.exp(1j * math.pi / 3)
    rctx = KernelContext(conformal_map=(0, rot))
    a = conformal_kernel(rctx, (x.real, x.imag), (y.real, y.imag))
    xr, yr = x * rot, y * rot
    b = conformal_kernel(rctx, (xr.real, xr.imag), (yr.real, yr.imag))
    assert a == pytest.approx(b, abs=1e-12)


def _collocation_oracle(coef, y, K=40, M=800, phi=None, n=1):
    """Harmonic part of the Neumann function on the mapped domain by boundary collocation.

    Solves the Neumann problem for H = N - log|x - y| with a harmonic polynomial
    basis in least squares, independently of the conformal transplantation.
    """
    from scipy.optimize import brentq

    def w(z):
        return np.polyval(coef[::-1], z)

    def dw(z):
        return np.polyval(np.polyder(coef[::-1]), z)

    th = 2 * np.pi * (np.arange(M) + 0.5) / M
    R = np.array([brentq(lambda r: abs(w(r * np.exp(1j * t))) - 1, 0.3, 2) for t in th])
    zb = R * np.exp(1j * th)
    nrm = w(zb) * np.conj(dw(zb))
    nrm /= np.abs(nrm)
    tang = 1j * nrm

    def dot(a, b):
        return (a * np.conj(b)).real

    # prescribed flux d(arg x)/ds (+ phi_star term evaluated at arg x)
    darg = dot(tang, 1j / np.conj(zb))
    g = darg
    if phi is not None:
        ang = np.angle(zb)
        dphi = sum(m * (-a * np.sin(m * ang) + b * np.cos(m * ang)) for (m, a, b) in phi)
        g = g + dphi * darg / n
    g = g - dot(nrm, 1 / np.conj(zb - y))
    cols = []
    for k in range(1, K + 1):
        cols.append(dot(nrm, np.conj(k * zb ** (k - 1))))
        cols.append(dot(nrm, np.conj(-1j * k * zb ** (k - 1))))
    A = np.array(cols).T
    c = np.linalg.lstsq(A, g, rcond=None)[0]

    def H(x):
        return sum(c[2 * (k - 1)] * (x**k).real + c[2 * k - 1] * (x**k).imag for k in range(1, K + 1))
    return H, float(np.max(np.abs(A @ c - g)))


@pytest.mark.parametrize("phi,n", [((), 1), (((1, 0.5, 0.2), (2, 0.1, 0.3)), 2)])
def test_conformal_kernel_against_collocation(phi, n):
    ctx = KernelContext(conformal_map=(0, 1, 0.1), phi_star=phi, winding=n)
    y = 0.2 + 0.15j
    H, res = _collocation_oracle(np.array([0, 1, 0.1]), y, phi=phi or None, n=n)
    assert res < 1e-6
    xs = np.array([0.3 - 0.2j, -0.4 + 0.1j, 0.1 + 0.5j, -0.2 - 0.3j])
    mine = np.array([float(harmonic_part_H(ctx, (x.real, x.imag), (y.real, y.imag))) for x in xs])
    orc = np.array([H(x) for x in xs])
    # the Neumann function is fixed up to an additive constant in x
    assert np.max(np.abs((mine - mine.mean()) - (orc - orc.mean()))) <= 1e-3
