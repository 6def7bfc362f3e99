"""Vortex detection from plaquette windings and the Jacobian."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from ..errors import UsageError
from ..field import Field, boundary_winding, jacobian_integrals, plaquette_winding
from ..kernels import VortexConfiguration

log = logging.getLogger(__name__)


@dataclass
class TrackingResult:
    positions: np.ndarray  # (k, 2)
    degrees: np.ndarray
    radii: np.ndarray  # |J|-weighted rms spread about each centroid
    ambiguous: list = field(default_factory=list)
    boundary_winding: int = 0

    @property
    def n(self) -> int:
        return len(self.degrees)

    def configuration(self) -> VortexConfiguration:
        """Detected vortices as a configuration (ambiguous clusters keep their total degree)."""
        return VortexConfiguration(self.positions, np.sign(self.degrees).astype(int))

    def as_dict(self) -> dict:
        return {"positions": self.positions.tolist(), "degrees": self.degrees.tolist(),
                "radii": self.radii.tolist(), "ambiguous": self.ambiguous,
                "boundary_winding": self.boundary_winding}


def locate_vortices(f: Field, merge_radius: float | None = None,
                    ball_radius: float | None = None, iterations: int = 2) -> TrackingResult:
    """Cluster nonzero plaquette windings and locate each cluster by a |J|-weighted centroid.

    Windings closer than ``merge_radius`` (default 2 eps) are merged and
    clusters of total degree zero are discarded.  The centroid is iterated
    in a ball of radius ``ball_radius`` (default 1.5 eps but at least three
    cells, capped at half the
    distance to the nearest other cluster).
    """
    if np.min(np.abs(f.values[-1])) <= 0.5:
        raise UsageError("|u| must exceed 1/2 on the outer ring")
    g = f.grid
    eps = f.epsilon
    merge_radius = 2 * max(eps, g.dr) if merge_radius is None else merge_radius
    ball_radius = max(1.5 * eps, 3 * g.dr) if ball_radius is None else ball_radius
    w = plaquette_winding(f)
    idx = np.argwhere(w != 0)
    zc = g.plaquette_z
    zc = zc.copy()
    zc[0, 0] = 0.0  # the central polygon
    bw = boundary_winding(f)
    if len(idx) == 0:
        return TrackingResult(np.zeros((0, 2)), np.zeros(0, dtype=int), np.zeros(0), [], bw)
    pts = zc[idx[:, 0], idx[:, 1]]
    wts = w[idx[:, 0], idx[:, 1]]
    tree = cKDTree(np.stack([pts.real, pts.imag], 1))
    pairs = tree.query_pairs(merge_radius, output_type="ndarray")
    adj = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])) if len(pairs) else
                     (np.zeros(0), (np.zeros(0, int), np.zeros(0, int))), shape=(len(pts), len(pts)))
    ncomp, lab = connected_components(adj, directed=False)
    seeds, degs = [], []
    for c in range(ncomp):
        sel = lab == c
        d = int(np.sum(wts[sel]))
        if d == 0:
            continue
        wt = np.abs(wts[sel])
        seeds.append(np.sum(pts[sel] * wt) / np.sum(wt))
        degs.append(d)
    seeds = np.array(seeds, dtype=complex)
    degs = np.array(degs, dtype=int)
    J = jacobian_integrals(f)
    Jf, zf = np.abs(J).ravel(), zc.ravel()
    cells = cKDTree(np.stack([zf.real, zf.imag], 1))
    pos, radii, ambiguous = [], [], []
    for k, (s, d) in enumerate(zip(seeds, degs)):
        rb = ball_radius
        if len(seeds) > 1:
            others = np.abs(np.delete(seeds, k) - s)
            rb = min(rb, 0.5 * others.min())
        c = s
        spread = 0.0
        for _ in range(iterations):
            near = cells.query_ball_point([c.real, c.imag], rb)
            m = Jf[near]
            if m.sum() <= 0:
                break
            c_new = np.sum(zf[near] * m) / m.sum()
            spread = float(np.sqrt(np.sum(np.abs(zf[near] - c_new) ** 2 * m) / m.sum()))
            if abs(c_new - c) < 1e-12:
                c = c_new
                break
            c = c_new
        pos.append(c)
        radii.append(spread)
        if abs(d) > 1:
            ambiguous.append({"index": k, "degree": d})
            log.info("ambiguous cluster of degree %d near %.4g%+.4gj", d, c.real, c.imag)
    pos = np.array(pos, dtype=complex)
    if int(np.sum(degs)) != bw:
        log.warning("tracked degrees sum to %d, boundary winding is %d", int(np.sum(degs)), bw)
    return TrackingResult(np.stack([pos.real, pos.imag], 1), degs, np.array(radii), ambiguous, bw)
