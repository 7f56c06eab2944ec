"""Radius graph over primitive centers with Gaussian edge weights.

Edges connect centers closer than ``tau``; weight ``exp(-d^2 / (2 sigma^2))``.
Neighbors are found with a uniform grid whose cell size equals the query
radius, so each point only inspects its own and the 26 adjacent cells (13 plus
itself when enumerating unordered pairs).
"""
from __future__ import annotations

import json
import logging
import math
import os
import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, LinearOperator, eigsh
from scipy.spatial import cKDTree

from .errors import CapacityError, DegenerateInputError, ShapeError

log = logging.getLogger(__name__)

DEFAULT_EDGE_CAP = 200_000_000
TAU_FACTOR = 10.0
# int32 + int32 + float64 (distance) while gathering, float64 weight after.
_BYTES_PER_EDGE = 16
_CHUNK = 4_000_000

GRAPH_MAGIC = b"SPGR"


@dataclass(eq=False)
class PrimitiveGraph:
    """Symmetric weighted adjacency stored once per unordered pair ``i < j``.

    ``rows``/``cols``/``weights`` are sorted by ``(i, j)``.
    """

    n: int
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray
    degree: np.ndarray
    tau: float
    sigma: float
    spectral_norm: float
    threshold: str = "distance"
    meta: dict = field(default_factory=dict)

    @property
    def edge_count(self) -> int:
        return len(self.weights)

    @cached_property
    def upper(self) -> sp.csr_matrix:
        """Strict upper triangle of ``W`` in CSR form, built without copying edge order."""
        counts = np.bincount(self.rows, minlength=self.n)
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        if indptr[-1] < 2**31:
            indptr = indptr.astype(np.int32)
        return sp.csr_matrix((self.weights, self.cols, indptr), shape=(self.n, self.n))

    def matvec(self, x) -> np.ndarray:
        """``W x`` for an ``(n,)`` or ``(n, c)`` signal."""
        U = self.upper
        return U @ x + U.T @ x

    def operator(self) -> LinearOperator:
        return LinearOperator((self.n, self.n), matvec=self.matvec, dtype=np.float64)

    def dense(self) -> np.ndarray:
        W = np.zeros((self.n, self.n))
        W[self.rows, self.cols] = self.weights
        W[self.cols, self.rows] = self.weights
        return W

    def metadata(self) -> dict:
        return {
            "tau": self.tau,
            "sigma": self.sigma,
            "spectral_norm": self.spectral_norm,
            "edge_count": self.edge_count,
            "n": self.n,
            "threshold": self.threshold,
            **self.meta,
        }


# --- nearest-neighbor statistics ---------------------------------------------

def _as_points(centers) -> np.ndarray:
    pts = np.asarray(getattr(centers, "centers", centers), dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ShapeError(f"centers must be (N, 3), got {pts.shape}")
    return pts


def min_nn_distance(centers) -> float:
    """Smallest distance from any center to its nearest distinct-index neighbor."""
    pts = _as_points(centers)
    if len(pts) < 2:
        raise DegenerateInputError("need at least 2 centers for a nearest-neighbor distance")
    d, _ = cKDTree(pts).query(pts, k=2)
    return float(d[:, 1].min())


def min_nonzero_nn_distance(centers) -> float:
    """Smallest distance between two centers at different positions."""
    pts = np.unique(_as_points(centers), axis=0)
    if len(pts) < 2:
        raise DegenerateInputError("all centers coincide; no nonzero neighbor distance")
    d, _ = cKDTree(pts).query(pts, k=2)
    return float(d[:, 1].min())


def default_tau(centers) -> float:
    pts = _as_points(centers)
    d = min_nn_distance(pts)
    if d == 0.0:
        d = min_nonzero_nn_distance(pts)
    return TAU_FACTOR * d


# --- construction -------------------------------------------------------------

def _half_shell():
    offs = [(0, 0, 0)]
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dz in (-1, 0, 1):
                if (dx, dy, dz) > (0, 0, 0):
                    offs.append((dx, dy, dz))
    return offs  # 14 offsets


def _expand_pairs(sa, na, sb, nb):
    """All index pairs between sorted ranges ``[sa, sa+na) x [sb, sb+nb)``."""
    tot = na * nb
    pid = np.repeat(np.arange(len(tot)), tot)
    local = np.arange(int(tot.sum()), dtype=np.int64) - np.repeat(np.cumsum(tot) - tot, tot)
    nbp = nb[pid]
    return sa[pid] + local // nbp, sb[pid] + local % nbp


def _chunks(work: np.ndarray, size: int):
    """Slices of a cumulative-work array, each holding roughly ``size`` units."""
    cut = np.searchsorted(work, np.arange(size, work[-1], size), side="right")
    cut = np.unique(np.concatenate([[0], cut, [len(work)]]))
    for a, b in zip(cut[:-1], cut[1:]):
        yield slice(int(a), int(b))


def radius_pairs(pts: np.ndarray, radius: float, squared_threshold: float,
                 edge_cap: int = DEFAULT_EDGE_CAP):
    """Unordered pairs ``i < j`` with squared distance below ``squared_threshold``.

    Returns ``(i, j, d2)`` sorted by ``(i, j)``.  ``radius`` sets the grid cell
    size and must be at least ``sqrt(squared_threshold)``.
    """
    n = len(pts)
    idx_dtype = np.int32 if n < 2**31 - 1 else np.int64
    lo = pts.min(axis=0)
    cells = np.floor((pts - lo) / radius).astype(np.int64) + 1
    dims = cells.max(axis=0) + 2
    if float(dims[0]) * float(dims[1]) * float(dims[2]) > 2**62:
        raise CapacityError("grid too fine for the point extent; increase tau")
    key = (cells[:, 0] * dims[1] + cells[:, 1]) * dims[2] + cells[:, 2]
    del cells
    order = np.argsort(key, kind="stable")
    skey = key[order]
    del key
    spts = pts[order]
    ukeys, starts, counts = np.unique(skey, return_index=True, return_counts=True)
    del skey

    out_i, out_j, out_d = [], [], []
    total = 0
    for ox, oy, oz in _half_shell():
        delta = (ox * dims[1] + oy) * dims[2] + oz
        target = ukeys + delta
        pos = np.searchsorted(ukeys, target)
        pos[pos >= len(ukeys)] = 0
        hit = np.flatnonzero(ukeys[pos] == target)
        if len(hit) == 0:
            continue
        sa, na = starts[hit], counts[hit]
        sb, nb = starts[pos[hit]], counts[pos[hit]]
        for s in _chunks(np.cumsum(na * nb), _CHUNK):
            ia, ib = _expand_pairs(sa[s], na[s], sb[s], nb[s])
            if delta == 0:
                keep = ia < ib
                ia, ib = ia[keep], ib[keep]
            diff = spts[ia] - spts[ib]
            d2 = np.einsum("ij,ij->i", diff, diff)
            keep = d2 < squared_threshold
            ia, ib, d2 = ia[keep], ib[keep], d2[keep]
            total += len(d2)
            if total > edge_cap:
                raise CapacityError(
                    f"edge count exceeds cap of {edge_cap} (~{edge_cap * _BYTES_PER_EDGE / 1e9:.1f} GB); "
                    "use a smaller tau")
            gi, gj = order[ia], order[ib]
            out_i.append(np.minimum(gi, gj).astype(idx_dtype))
            out_j.append(np.maximum(gi, gj).astype(idx_dtype))
            out_d.append(d2)
            del ia, ib, gi, gj, diff
    if not out_i:
        return (np.zeros(0, idx_dtype), np.zeros(0, idx_dtype), np.zeros(0))
    i = np.concatenate(out_i)
    del out_i
    j = np.concatenate(out_j)
    del out_j
    d2 = np.concatenate(out_d)
    del out_d
    perm = np.argsort(i.astype(np.int64) * n + j, kind="stable")
    return i[perm], j[perm], d2[perm]


def _default_sigma(dist: np.ndarray, tau: float) -> float:
    # sigma^2 = variance of the edge lengths present under tau.
    if len(dist) == 0:
        return float(tau)
    var = float(np.var(dist))
    if var > 0:
        return math.sqrt(var)
    mean = float(np.mean(dist))
    return mean if mean > 0 else float(tau)


def build_graph(field, tau: float | None = None, sigma: float | None = None,
                threshold: str = "distance", edge_cap: int = DEFAULT_EDGE_CAP,
                normalize: bool = True) -> PrimitiveGraph:
    """Build the tau-radius graph over the centers of ``field``.

    ``threshold="distance"`` connects pairs with ``|x_i - x_j| < tau``;
    ``"squared"`` compares the squared distance against ``tau`` directly.
    """
    pts = _as_points(field)
    n = len(pts)
    if n == 0:
        raise DegenerateInputError("cannot build a graph over an empty field")
    if tau is None:
        tau = default_tau(pts) if n >= 2 else 1.0
    tau = float(tau)
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if threshold == "distance":
        radius, limit = tau, tau * tau
    elif threshold == "squared":
        radius, limit = math.sqrt(tau), tau
    else:
        raise ValueError(f"unknown threshold convention {threshold!r}")

    rows, cols, d2 = radius_pairs(pts, radius, limit, edge_cap)
    sigma_source = "override"
    if sigma is None:
        sigma = _default_sigma(np.sqrt(d2), tau)
        sigma_source = "edge-distance variance"
    sigma = float(sigma)
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    weights = np.exp(-d2 / (2.0 * sigma * sigma))
    del d2
    # Keep 0 < w: far edges under a tiny sigma would otherwise underflow.
    np.maximum(weights, np.finfo(np.float64).tiny, out=weights)
    degree = np.bincount(rows, weights, minlength=n) + np.bincount(cols, weights, minlength=n)

    g = PrimitiveGraph(n=n, rows=rows, cols=cols, weights=weights, degree=degree,
                       tau=tau, sigma=sigma, spectral_norm=0.0, threshold=threshold,
                       meta={"sigma_source": sigma_source})
    if normalize and g.edge_count:
        g.spectral_norm = spectral_norm_estimate(g)
    return g


# --- spectral normalization ----------------------------------------------------

def _hash_vector(n: int) -> np.ndarray:
    h = (np.arange(n, dtype=np.uint64) * np.uint64(2654435761)) % np.uint64(2**32)
    return 0.5 + h.astype(np.float64) / 2**32


def power_iteration(W, tol: float = 1e-6, max_iter: int = 200, shift: float = 0.5):
    """Shifted power iteration for the largest eigenvalue of a nonnegative symmetric ``W``.

    Iterates on ``W + shift * rho * I`` (``rho`` the running Rayleigh quotient)
    so the ``-lambda_max`` partner of a bipartite component decays instead of
    oscillating.  Stops when the Rayleigh quotient changes by less than
    ``tol`` relative, or the residual drops below ``tol * rho``.
    Returns ``(rho, v, converged)``.
    """
    n = W.shape[0]
    v = np.full(n, 1.0 / math.sqrt(n))
    rho = 0.0
    reseeded = False
    for _ in range(max_iter):
        w = W @ v
        rho_new = float(v @ w)
        if not np.isfinite(rho_new) or rho_new <= 0:
            if reseeded:
                break
            reseeded = True
            v = _hash_vector(n)
            v /= np.linalg.norm(v)
            continue
        resid = float(np.linalg.norm(w - rho_new * v))
        if resid <= tol * rho_new or abs(rho_new - rho) <= tol * rho_new:
            return rho_new, v, True
        rho = rho_new
        v = w + (shift * rho) * v
        v /= np.linalg.norm(v)
    return rho, v, False


REFINE_MAX_N = 5000


def spectral_norm_estimate(g: PrimitiveGraph, tol: float = 1e-6, max_iter: int = 200) -> float:
    """Largest eigenvalue of ``W`` (its spectral norm, since ``W`` is nonnegative).

    Power iteration gives the estimate.  On graphs up to ``REFINE_MAX_N`` nodes
    a Lanczos pass warm-started from the power vector tightens it to near
    machine precision; slowly mixing graphs otherwise stop well short of that
    within the iteration cap.  Both values are Rayleigh quotients, hence lower
    bounds, and the larger is returned.
    """
    if g.edge_count == 0:
        raise DegenerateInputError("graph has no edges; spectral norm undefined")
    W = g.operator()
    rho, v, converged = power_iteration(W, tol, max_iter)
    if 3 <= g.n <= REFINE_MAX_N:
        try:
            _, vec = eigsh(W, k=1, which="LA", v0=v, tol=1e-13, maxiter=max(1000, 10 * g.n))
            u = vec[:, 0]
            rho = max(rho, float(u @ g.matvec(u)) / float(u @ u))
        except (ArpackNoConvergence, ArpackError) as exc:
            log.warning("Lanczos refinement failed (%s); keeping power estimate %g", exc, rho)
    elif not converged:
        log.info("power iteration stopped at the cap of %d iterations (estimate %g)", max_iter, rho)
    return rho


def normalized_shift_apply(g: PrimitiveGraph, x) -> np.ndarray:
    """``A x`` with ``A = W / spectral_norm``; zero on a graph without edges."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != g.n:
        raise ShapeError(f"signal has {x.shape[0]} rows, graph has {g.n} nodes")
    if g.edge_count == 0:
        return np.zeros_like(x)
    if g.spectral_norm <= 0:
        raise ValueError("graph was built without spectral normalization")
    return g.matvec(x) / g.spectral_norm


# --- sidecar dump ------------------------------------------------------------

def save_graph(g: PrimitiveGraph, path) -> None:
    """Write the binary edge list plus ``<path>.json`` metadata.

    Layout (little-endian): magic ``SPGR``, u32 node count, u64 edge count,
    then ``(u32 i, u32 j, f32 w)`` records sorted by ``(i, j)``.
    """
    path = os.fspath(path)
    rec = np.empty(g.edge_count, dtype=[("i", "<u4"), ("j", "<u4"), ("w", "<f4")])
    rec["i"], rec["j"], rec["w"] = g.rows, g.cols, g.weights
    with open(path, "wb") as fh:
        fh.write(GRAPH_MAGIC + struct.pack("<IQ", g.n, g.edge_count))
        fh.write(rec.tobytes())
    with open(path + ".json", "w") as fh:
        json.dump(g.metadata(), fh, indent=2, sort_keys=True)


def load_graph_edges(path):
    """Read a sidecar back as ``(n, rows, cols, weights)``."""
    with open(os.fspath(path), "rb") as fh:
        head = fh.read(16)
        if head[:4] != GRAPH_MAGIC:
            raise ValueError(f"{path}: not a graph sidecar")
        n, m = struct.unpack("<IQ", head[4:])
        rec = np.frombuffer(fh.read(), dtype=[("i", "<u4"), ("j", "<u4"), ("w", "<f4")], count=m)
    return n, rec["i"].astype(np.int64), rec["j"].astype(np.int64), rec["w"].astype(np.float64)
