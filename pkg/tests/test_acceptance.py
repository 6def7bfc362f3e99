"""Acceptance criteria 1-10; each test prints one PASS/FAIL line.

Run alone with ``pytest -s tests/test_acceptance.py`` or ``python tests/test_acceptance.py``.
"""

import itertools
import logging
import math
import time

import numpy as np
import pytest
from scipy.optimize import brentq, linprog

from vortexflow import harness
from vortexflow.diagnostics import AtomicSignedMeasure, equipartition_constant, stress_matrix, w_minus_one_one
from vortexflow.field import PolarGrid
from vortexflow.initial_data import bbh_gamma, bbh_gamma_relaxation, build_field, gamma_estimate
from vortexflow.kernels import (DISK, KernelContext, VortexConfiguration, dirichlet_green_G, grad_W,
                                kernel_grad_x, neumann_N, renormalized_W, rho_a)
from vortexflow.point_vortex import integrate
from vortexflow.tdgl import SolverConfig, run

GREEN = KernelContext(kernel_kind="dirichlet_green")


@pytest.fixture
def report(capsys):
    def emit(k, passed, detail):
        with capsys.disabled():
            print(f"\nCRITERION {k}: {'PASS' if passed else 'FAIL'}  {detail}")
    return emit


def _fmt(values, spec=".4f"):
    return "[" + ", ".join(format(v, spec) for v in values) + "]"


def _random_disk(rng, k, r_max=0.9):
    return r_max * np.sqrt(rng.random(k)) * np.exp(2j * np.pi * rng.random(k))


# 1 ---------------------------------------------------------------------------------------

def test_criterion_1_kernel_exactness(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    x, y = _random_disk(rng, 2000), _random_disk(rng, 2000)
    N = neumann_N(DISK, x, y)
    bitwise = np.array_equal(N, np.log(np.abs(x - y)) + np.log(np.abs(1 - x * np.conj(y))))
    sym = float(np.max(np.abs(N - neumann_N(DISK, y, x))))
    # outward flux of grad_x N(., y) through the circle by the trapezoid rule (spectrally exact)
    m = 4096
    nu = np.exp(2j * np.pi * np.arange(m) / m)
    flux_err = 0.0
    for yk in _random_disk(rng, 20, 0.8):
        g = kernel_grad_x(DISK, nu, yk)
        flux = float(np.sum((np.conj(g) * nu).real) * 2 * np.pi / m)
        flux_err = max(flux_err, abs(flux - 2 * np.pi))
    gb = float(np.max(np.abs(dirichlet_green_G(DISK, nu[::16], _random_disk(rng, m // 16)))))
    dt = time.perf_counter() - t0
    ok = bitwise and sym <= 1e-6 and flux_err <= 1e-6 and gb <= 1e-12 and dt < 1.0
    report(1, ok, f"bitwise={bitwise} symmetry={sym:.1e} flux_err={flux_err:.1e} "
                  f"green_boundary={gb:.1e} runtime={dt:.2f}s")
    assert ok


# 2 ---------------------------------------------------------------------------------------

def _fd_grad(ctx, cfg, h=1e-6):
    x0 = cfg.positions.reshape(-1)
    out = np.empty_like(x0)
    for i in range(len(x0)):
        xp, xm = x0.copy(), x0.copy()
        xp[i] += h
        xm[i] -= h
        out[i] = (renormalized_W(ctx, cfg.moved(xp.reshape(-1, 2)))
                  - renormalized_W(ctx, cfg.moved(xm.reshape(-1, 2)))) / (2 * h)
    return out


def test_criterion_2_gradient(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    count = 0
    while count < 100:
        n = int(rng.integers(1, 7))
        z = _random_disk(rng, n)
        cfg = VortexConfiguration(np.stack([z.real, z.imag], 1), rng.choice([-1, 1], size=n))
        if rho_a(cfg) < 0.05:
            continue
        ctx = DISK if count % 2 == 0 else GREEN
        g = grad_W(ctx, cfg).reshape(-1)
        worst = max(worst, float(np.max(np.abs(g - _fd_grad(ctx, cfg))) / np.max(np.abs(g))))
        count += 1
    dt = time.perf_counter() - t0
    ok = worst <= 1e-6 and dt < 10
    report(2, ok, f"max relative error={worst:.2e} over {count} configurations runtime={dt:.2f}s")
    assert ok


# 3 ---------------------------------------------------------------------------------------

def test_criterion_3_ode_energy_identity(report):
    cases = [
        (DISK, VortexConfiguration.plus([[0.5, 0.0]]), 0.1),
        (DISK, VortexConfiguration.plus([[0.3, 0.0], [-0.3, 0.0]]), 0.1),
        (DISK, VortexConfiguration([[0.3, 0.1], [-0.2, -0.3], [0.0, 0.4]], [1, -1, 1]), 0.02),
        (GREEN, VortexConfiguration.plus([[0.3, 0.0], [-0.3, 0.0]]), 0.05),
        (GREEN, VortexConfiguration([[0.2, 0.2], [-0.3, 0.1]], [1, -1]), 0.05),
    ]
    worst = 0.0
    for ctx, cfg, T in cases:
        ode = integrate(ctx, cfg, T, 1e-3, probes=np.linspace(0, T, 21))
        worst = max(worst, float(np.max(np.abs(ode.ledger_residual))) / (1 + abs(ode.W[0])))
    ode = integrate(DISK, VortexConfiguration.plus([[0.5, 0.0]]), 0.1, 1e-3, probes=[0.0, 0.1])
    c = math.log(0.25) - 0.25 - 4 * 0.1
    r_exact = brentq(lambda r: math.log(r * r) - r * r - c, 1e-6, 0.5)
    r_num = float(np.hypot(*ode.positions[-1, 0]))
    ok = worst <= 1e-6 and abs(r_num - r_exact) <= 1e-3
    report(3, ok, f"max scaled ledger residual={worst:.2e} r(0.1)={r_num:.6f} exact={r_exact:.6f}")
    assert ok


# 4 ---------------------------------------------------------------------------------------

def test_criterion_4_pde_dissipation(report):
    eps, T = 0.04, 0.05
    pair = VortexConfiguration.plus([[0.3, 0.0], [-0.3, 0.0]])
    res, mono, runtime = [], [], {}
    for n, dt in [(128, 4e-4), (256, 2e-4), (512, 1e-4)]:
        f0 = build_field(DISK, pair, eps, PolarGrid(n, n))
        t0 = time.perf_counter()
        tr = run(f0, SolverConfig(eps, dt, "dirichlet", T, dt_guard=10.0))
        runtime[n] = time.perf_counter() - t0
        res.append(tr.ledger.max_residual)
        mono.append(tr.ledger.is_monotone())
    ratios = [res[0] / res[1], res[1] / res[2]]
    ok = all(mono) and min(ratios) >= 3.5 and runtime[256] <= 120
    report(4, ok, f"residuals={_fmt(res, '.3g')} ratios={_fmt(ratios, '.1f')} "
                  f"monotone={all(mono)} runtime_256={runtime[256]:.1f}s")
    assert ok


# 5 ---------------------------------------------------------------------------------------

def test_criterion_5_tracking_surrogate(report):
    logging.disable(logging.WARNING)
    t0 = time.perf_counter()
    try:
        out = harness.experiment_pde_vs_ode(harness.parse_config("workers = 3\n"))
    finally:
        logging.disable(logging.NOTSET)
    dt = time.perf_counter() - t0
    rows = out["rows"]
    sup = [r["sup_error"] for r in rows]
    non_incr = all(sup[k + 1] <= sup[k] for k in range(len(sup) - 1))
    eta_ok = all(r["eta_ok"] for r in rows)
    ok = non_incr and eta_ok and dt <= 15 * 60
    report(5, ok, f"eps={[r['epsilon'] for r in rows]} sup_error={_fmt(sup, '.4f')} "
                  f"eta_max={_fmt([r['eta_max'] for r in rows], '.4f')} "
                  f"eta_bound={_fmt([r['eta_bound'] for r in rows], '.4f')} runtime={dt:.0f}s")
    assert ok


# 6 ---------------------------------------------------------------------------------------

def test_criterion_6_kinetic_comparison(report):
    cfg = harness.parse_config("positions = 0.5,0\ndegrees = 1\nn_theta = 512\nworkers = 3\n")
    logging.disable(logging.WARNING)
    try:
        rows = harness.experiment_pde_vs_ode(cfg)["rows"]
    finally:
        logging.disable(logging.NOTSET)
    gaps = [r["kinetic_gap"] for r in rows]
    ok = all(gaps[k + 1] <= gaps[k] for k in range(len(gaps) - 1))
    report(6, ok, f"eps={[r['epsilon'] for r in rows]} gap={_fmt(gaps, '.4f')} "
                  f"ode={_fmt([r['kinetic_ode'] for r in rows], '.4f')} "
                  f"pde={_fmt([r['kinetic_pde'] for r in rows], '.4f')}")
    assert ok


# 7 ---------------------------------------------------------------------------------------

def test_criterion_7_equipartition(report):
    eps = 0.02
    f = build_field(DISK, VortexConfiguration.plus([[0.0, 0.0]]), eps, PolarGrid(256, 256))
    off, dev = 0.0, 0.0
    for ratio in (10, 20, 40):
        sigma = ratio * eps
        M = stress_matrix(f, (0.0, 0.0), sigma)
        target = 0.5 * math.pi * math.log(ratio) + equipartition_constant(ratio)
        off = max(off, abs(M[0, 1]), abs(M[1, 0]))
        dev = max(dev, abs(M[0, 0] - target) / target, abs(M[1, 1] - target) / target)
    ok = off <= 1e-6 and dev <= 0.05
    report(7, ok, f"max off-diagonal={off:.1e} max diagonal deviation={dev:.2%}")
    assert ok


# 8 ---------------------------------------------------------------------------------------

def test_criterion_8_hydrodynamic_surrogate(report):
    t0 = time.perf_counter()
    out = harness.experiment_ode_vs_meanfield(harness.parse_config(
        "experiment = ode_vs_meanfield\nworkers = 3\n", "ode_vs_meanfield"))
    dt = time.perf_counter() - t0
    rows = out["rows"]
    dist = [r["distance_end"] for r in rows]
    wr = [abs(r["weak_residual"]) for r in rows]
    a = all(dist[k + 1] < dist[k] for k in range(len(dist) - 1))
    b = all(wr[k + 1] < wr[k] for k in range(len(wr) - 1))
    fits = out["mr_pooled_fit"]
    c = min(fits["initial"]["r2"], fits["final"]["r2"]) >= 0.9
    ok = a and b and c and dt <= 20 * 60
    per_n = [(r["n_placed"], round(r["mr_r2_initial"], 3), round(r["mr_r2_final"], 3)) for r in rows]
    report(8, ok, f"(a) distance={_fmt(dist, '.4f')} {a}; (b) |weak residual|="
                  f"{_fmt(wr, '.4f')} {b}; (c) pooled R2 initial={fits['initial']['r2']:.3f} "
                  f"final={fits['final']['r2']:.3f} {c} (per-n R2 {per_n}) runtime={dt:.0f}s")
    assert ok


# 9 ---------------------------------------------------------------------------------------

def _matching_oracle(z, s):
    """Exhaustive minimal connection for unit atoms with signs s, boundary disposal allowed."""
    pos = [i for i in range(len(z)) if s[i] > 0]
    neg = [i for i in range(len(z)) if s[i] < 0]
    best = math.inf
    for k in range(min(len(pos), len(neg)) + 1):
        for ps in itertools.combinations(pos, k):
            for ns in itertools.permutations(neg, k):
                used = set(ps) | set(ns)
                cost = sum(abs(z[i] - z[j]) for i, j in zip(ps, ns))
                cost += sum(1 - abs(z[i]) for i in range(len(z)) if i not in used)
                best = min(best, cost)
    return best


def _lp_oracle(z, w, n_boundary=128, spacing=0.2):
    """Dual LP: maximise sum w phi over grid values, 1-Lipschitz on all node pairs, phi = 0 on the circle nodes."""
    g = np.arange(-1 + spacing / 2, 1, spacing)
    grid = (g[:, None] + 1j * g[None, :]).ravel()
    grid = grid[np.abs(grid) < 1 - spacing / 2]
    nodes = np.concatenate([z, grid])
    bnd = np.exp(2j * np.pi * np.arange(n_boundary) / n_boundary)
    m = len(nodes)
    iu, ju = np.triu_indices(m, 1)
    d = np.abs(nodes[iu] - nodes[ju])
    rows = np.arange(len(iu))
    A = np.zeros((2 * len(iu), m))
    A[rows, iu], A[rows, ju] = 1, -1
    A[len(iu) + rows, iu], A[len(iu) + rows, ju] = -1, 1
    cap = np.min(np.abs(nodes[:, None] - bnd[None, :]), axis=1)
    c = -np.concatenate([w, np.zeros(len(grid))])
    sol = linprog(c, A_ub=A, b_ub=np.concatenate([d, d]), bounds=list(zip(-cap, cap)), method="highs")
    assert sol.status == 0
    return -sol.fun, 2 * np.pi / n_boundary


def test_criterion_9_metric_oracles(report):
    rng = np.random.default_rng(9)
    worst_exact = 0.0
    for _ in range(500):
        k_mu, k_nu = rng.integers(0, 4), rng.integers(0, 4)
        zm, zn = _random_disk(rng, k_mu), _random_disk(rng, k_nu)
        sm, sn = rng.choice([-1, 1], size=k_mu), rng.choice([-1, 1], size=k_nu)
        mu = AtomicSignedMeasure(np.stack([zm.real, zm.imag], 1), np.pi * sm)
        nu = AtomicSignedMeasure(np.stack([zn.real, zn.imag], 1), np.pi * sn)
        ref = math.pi * _matching_oracle(np.concatenate([zm, zn]), np.concatenate([sm, -sn]))
        worst_exact = max(worst_exact, abs(w_minus_one_one(mu, nu) - ref) / (1 + ref))
    worst_lp = 0.0
    for _ in range(20):
        k_mu, k_nu = rng.integers(1, 5), rng.integers(1, 5)
        zm, zn = _random_disk(rng, k_mu), _random_disk(rng, k_nu)
        wm = np.pi * rng.uniform(0.5, 2, k_mu) * rng.choice([-1, 1], size=k_mu)
        wn = np.pi * rng.uniform(0.5, 2, k_nu) * rng.choice([-1, 1], size=k_nu)
        mu = AtomicSignedMeasure(np.stack([zm.real, zm.imag], 1), wm)
        nu = AtomicSignedMeasure(np.stack([zn.real, zn.imag], 1), wn)
        val, cell = _lp_oracle(np.concatenate([zm, zn]), np.concatenate([wm, -wn]))
        tv = float(np.sum(np.abs(wm)) + np.sum(np.abs(wn)))
        worst_lp = max(worst_lp, abs(w_minus_one_one(mu, nu) - val) / (cell * tv))
    ok = worst_exact <= 1e-12 and worst_lp <= 2
    report(9, ok, f"exhaustive max rel diff={worst_exact:.1e}; LP max diff={worst_lp:.3f} cells x TV")
    assert ok


# 10 --------------------------------------------------------------------------------------

def test_criterion_10_gamma(report):
    t0 = time.perf_counter()
    bbh_gamma.cache_clear()
    bbh_gamma_relaxation.cache_clear()
    g1, g2 = bbh_gamma(), bbh_gamma_relaxation()
    cauchy = abs(gamma_estimate(50.0) - gamma_estimate(100.0))
    raw = [gamma_estimate(R, tail=False) - g1 for R in (25.0, 50.0, 100.0)]
    decay = [raw[0] / raw[1], raw[1] / raw[2]]
    dt = time.perf_counter() - t0
    ok = abs(g1 - g2) <= 1e-4 and cauchy <= 1e-4 and all(3.5 < q < 4.5 for q in decay) and dt < 5
    report(10, ok, f"shooting={g1:.8f} relaxation={g2:.8f} |R=50 - R=100|={cauchy:.1e} "
                   f"raw-gap ratios={_fmt(decay, '.2f')} runtime={dt:.2f}s")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
