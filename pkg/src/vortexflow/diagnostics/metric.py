"""The dual Lipschitz (minimal-connection) distance between signed atomic measures.

For a signed measure sigma the norm is the sup of int phi d sigma over
1-Lipschitz phi vanishing on the boundary.  Its primal form is a min-cost
transport in which any amount of mass may be sent to, or drawn from, the
boundary at cost equal to the distance to it.  We solve the balanced problem

    sources = positive atoms + one boundary node holding the negative mass
    sinks   = negative atoms + one boundary node holding the positive mass

exactly with a network-simplex solver.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

# POT probes optional deep-learning backends on import; they are not used here
for _var in ("POT_BACKEND_DISABLE_TENSORFLOW", "POT_BACKEND_DISABLE_PYTORCH",
             "POT_BACKEND_DISABLE_JAX", "POT_BACKEND_DISABLE_CUPY"):
    os.environ.setdefault(_var, "1")
import ot  # noqa: E402

from ..errors import UsageError  # noqa: E402
from ..kernels import DISK, KernelContext, VortexConfiguration, boundary_distance  # noqa: E402


@dataclass(frozen=True)
class AtomicSignedMeasure:
    points: np.ndarray  # (k, 2)
    weights: np.ndarray  # (k,)

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float).reshape(-1, 2)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(p) != len(w):
            raise UsageError("points and weights differ in length")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(w))):
            raise UsageError("atoms must be finite")
        if np.any(w == 0):
            raise UsageError("atom weights must be nonzero")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "weights", w)

    @classmethod
    def empty(cls) -> "AtomicSignedMeasure":
        return cls(np.zeros((0, 2)), np.zeros(0))

    @classmethod
    def from_configuration(cls, cfg: VortexConfiguration, scale: float = np.pi) -> "AtomicSignedMeasure":
        """scale * sum_j d_j delta_{a_j}."""
        return cls(cfg.positions, scale * cfg.degrees.astype(float))

    @classmethod
    def from_density(cls, points, masses, tol: float = 0.0) -> "AtomicSignedMeasure":
        """Atomize a grid measure: one atom per cell centre with its cell mass."""
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        m = np.asarray(masses, dtype=float).reshape(-1)
        keep = np.abs(m) > tol
        return cls(p[keep], m[keep])

    @property
    def z(self) -> np.ndarray:
        return self.points[:, 0] + 1j * self.points[:, 1]

    @property
    def total_variation(self) -> float:
        return float(np.sum(np.abs(self.weights)))

    def __neg__(self):
        return AtomicSignedMeasure(self.points, -self.weights)

    def __add__(self, other: "AtomicSignedMeasure") -> "AtomicSignedMeasure":
        return AtomicSignedMeasure(np.vstack([self.points, other.points]),
                                   np.concatenate([self.weights, other.weights]))

    def __sub__(self, other):
        return self + (-other)


def _signed_atoms(mu: AtomicSignedMeasure, nu: AtomicSignedMeasure):
    z = np.concatenate([mu.z, nu.z])
    w = np.concatenate([mu.weights, -nu.weights])
    return z, w


def transport_plan(mu: AtomicSignedMeasure, nu: AtomicSignedMeasure, ctx: KernelContext = DISK):
    """Optimal plan and cost matrix for mu - nu; the last row/column is the boundary."""
    z, w = _signed_atoms(mu, nu)
    pos, neg = w > 0, w < 0
    zs, ps = z[pos], w[pos]
    zt, qt = z[neg], -w[neg]
    P, Q = float(np.sum(ps)), float(np.sum(qt))
    a = np.concatenate([ps, [Q]])
    b = np.concatenate([qt, [P]])
    M = np.zeros((len(a), len(b)))
    M[:-1, :-1] = np.abs(zs[:, None] - zt[None, :])
    if len(zs):
        M[:-1, -1] = np.maximum(boundary_distance(ctx, zs), 0.0)
    if len(zt):
        M[-1, :-1] = np.maximum(boundary_distance(ctx, zt), 0.0)
    if P + Q == 0:
        return np.zeros_like(M), M
    G = ot.emd(a, b, M, numItermax=10_000_000)
    return G, M


def w_minus_one_one(mu: AtomicSignedMeasure, nu: AtomicSignedMeasure,
                    ctx: KernelContext = DISK) -> float:
    """Minimal-connection distance between two atomic signed measures."""
    G, M = transport_plan(mu, nu, ctx)
    return float(np.sum(G * M))
