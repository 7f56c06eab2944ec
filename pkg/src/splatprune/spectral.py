"""Haar-like graph filters, per-node response magnitudes and two-band sampling."""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import EmptySelectionError, ShapeError
from .graph import PrimitiveGraph, normalized_shift_apply

HIGH_PASS = "high_pass"
LOW_PASS = "low_pass"
DEFAULT_GAMMA = 0.5

# A is pre-normalized to unit spectral norm, so the low-pass division by the
# leading eigenvalue is the identity.
LAMBDA0 = 1.0


def _check(g: PrimitiveGraph, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[0] != g.n:
        raise ShapeError(f"signal of shape {x.shape} does not match graph with {g.n} nodes")
    return x


def high_pass(g: PrimitiveGraph, x) -> np.ndarray:
    """``(I - A) x``."""
    x = _check(g, x)
    return x - normalized_shift_apply(g, x)


def low_pass(g: PrimitiveGraph, x) -> np.ndarray:
    """``(I + A / lambda0) x``."""
    x = _check(g, x)
    assert LAMBDA0 == 1.0
    return x + normalized_shift_apply(g, x) / LAMBDA0


@dataclass(frozen=True)
class FilterResponse:
    pi: np.ndarray
    filter_kind: str = HIGH_PASS
    signal_kind: str = "centers"

    def __len__(self):
        return len(self.pi)

    def summary(self) -> dict:
        pi = self.pi
        empty = len(pi) == 0
        return {
            "n": len(pi),
            "kind": self.filter_kind,
            "signal": self.signal_kind,
            "min": None if empty else float(pi.min()),
            "max": None if empty else float(pi.max()),
            "mean": None if empty else float(pi.mean()),
        }


def response_magnitudes(g: PrimitiveGraph, x, kind: str = HIGH_PASS,
                        signal_kind: str = "centers") -> FilterResponse:
    """Squared row norms of the filtered signal."""
    if kind == HIGH_PASS:
        f = high_pass(g, x)
    elif kind == LOW_PASS:
        f = low_pass(g, x)
    else:
        raise ValueError(f"unknown filter kind {kind!r}")
    f = f.reshape(g.n, -1)
    pi = np.einsum("ij,ij->i", f, f)
    return FilterResponse(pi=pi, filter_kind=kind, signal_kind=signal_kind)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def round_half_down(x: float) -> int:
    return int(math.ceil(x - 0.5))


def high_band_count(m: int, gamma: float) -> int:
    """``round(gamma * m)`` with an exact half going to the low band (2.5 -> 2)."""
    return round_half_down(gamma * m)


@dataclass(frozen=True)
class PruneSelection:
    kept: np.ndarray
    high_band: np.ndarray
    low_band: np.ndarray
    k: float
    gamma: float

    def __len__(self):
        return len(self.kept)

    def header(self) -> dict:
        return {
            "k": self.k,
            "gamma": self.gamma,
            "counts": {"kept": len(self.kept), "high_band": len(self.high_band),
                       "low_band": len(self.low_band)},
        }


def select_count(resp: FilterResponse, m: int, gamma: float, k: float | None = None) -> PruneSelection:
    """Keep ``m`` nodes: ``high_band_count(m, gamma)`` largest responses, the rest smallest.

    Ties go to the lower index in both bands, and the low band is drawn only
    from nodes outside the high band, so the two never overlap.
    """
    if resp.filter_kind != HIGH_PASS:
        raise ValueError("band selection ranks by the high-pass response")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    pi = np.asarray(resp.pi)
    n = len(pi)
    if m <= 0:
        raise EmptySelectionError(f"selection of {m} primitives out of {n} is empty; raise k")
    if m > n:
        raise ValueError(f"cannot keep {m} of {n} primitives")
    h = high_band_count(m, gamma)
    idx = np.arange(n)
    by_high = np.lexsort((idx, -pi))
    high = by_high[:h]
    taken = np.zeros(n, dtype=bool)
    taken[high] = True
    by_low = np.lexsort((idx, pi))
    low = by_low[~taken[by_low]][: m - h]
    return PruneSelection(
        kept=np.sort(np.concatenate([high, low])),
        high_band=np.sort(high),
        low_band=np.sort(low),
        k=float(m / n) if k is None else float(k),
        gamma=float(gamma),
    )


def band_limited_select(resp: FilterResponse, k: float, gamma: float = DEFAULT_GAMMA) -> PruneSelection:
    if not 0.0 < k <= 1.0:
        raise ValueError(f"keep fraction k must lie in (0, 1], got {k}")
    return select_count(resp, round_half_up(k * len(resp)), gamma, k=k)


# --- exports ------------------------------------------------------------------

def save_response(resp: FilterResponse, path) -> None:
    """Flat little-endian float32 vector plus ``<path>.json`` summary."""
    path = os.fspath(path)
    resp.pi.astype("<f4").tofile(path)
    with open(path + ".json", "w") as fh:
        json.dump(resp.summary(), fh, indent=2)


def save_selection(sel: PruneSelection, path) -> None:
    """Sorted little-endian uint32 kept indices plus ``<path>.json`` header."""
    path = os.fspath(path)
    sel.kept.astype("<u4").tofile(path)
    with open(path + ".json", "w") as fh:
        json.dump(sel.header(), fh, indent=2)


def load_selection_indices(path) -> np.ndarray:
    return np.fromfile(os.fspath(path), dtype="<u4").astype(np.int64)
