"""One-shot and periodic spectral pruning of Gaussian fields."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateInputError
from .graph import DEFAULT_EDGE_CAP, build_graph
from .spectral import (
    DEFAULT_GAMMA,
    HIGH_PASS,
    FilterResponse,
    PruneSelection,
    response_magnitudes,
    round_half_up,
    select_count,
)
from .splat_model import BYTES_PER_PRIMITIVE, GaussianField, compact, ply_header

ONE_SHOT = "one_shot"
CONTINUOUS = "continuous"


@dataclass
class PruneConfig:
    k: float = 0.1
    gamma: float = DEFAULT_GAMMA
    tau: Optional[float] = None
    sigma: Optional[float] = None
    mode: str = ONE_SHOT
    interval: int = 1
    per_step_keep: float = 0.7
    max_steps: Optional[int] = None
    primitive_cap: Optional[int] = None
    threshold: str = "distance"
    edge_cap: int = DEFAULT_EDGE_CAP

    def __post_init__(self):
        for name in ("k", "per_step_keep"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.mode not in (ONE_SHOT, CONTINUOUS):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == CONTINUOUS and self.interval < 1:
            raise ValueError("interval must be >= 1 in continuous mode")
        if self.primitive_cap is not None and self.primitive_cap < 1:
            raise ValueError("primitive_cap must be positive")


@dataclass
class PruneReport:
    before_count: int
    after_count: int
    bytes_before: int
    bytes_after: int
    peak_count: int = 0
    per_step_counts: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    mode: str = ONE_SHOT
    k: Optional[float] = None
    gamma: Optional[float] = None
    tau: Optional[float] = None
    sigma: Optional[float] = None
    selection: Optional[PruneSelection] = field(default=None, repr=False, compare=False)
    response: Optional[FilterResponse] = field(default=None, repr=False, compare=False)

    @property
    def payload_before(self) -> int:
        return payload_bytes(self.before_count)

    @property
    def payload_after(self) -> int:
        return payload_bytes(self.after_count)

    def to_json(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("selection", "response")}
        d["payload_before"] = self.payload_before
        d["payload_after"] = self.payload_after
        return d


def field_bytes(n: int) -> int:
    return len(ply_header(n)) + n * BYTES_PER_PRIMITIVE


def memory_report(field: GaussianField) -> PruneReport:
    n = len(field)
    b = field_bytes(n)
    return PruneReport(before_count=n, after_count=n, bytes_before=b, bytes_after=b, peak_count=n)


def payload_bytes(n: int) -> int:
    return n * BYTES_PER_PRIMITIVE


def spectral_select(field: GaussianField, m: int, cfg: PruneConfig, timings: dict | None = None,
                    k: float | None = None):
    """Graph -> high-pass response on centers -> two-band selection of ``m`` nodes."""
    timings = {} if timings is None else timings
    t0 = time.perf_counter()
    g = build_graph(field, tau=cfg.tau, sigma=cfg.sigma, threshold=cfg.threshold,
                    edge_cap=cfg.edge_cap)
    t1 = time.perf_counter()
    resp = response_magnitudes(g, field.centers, HIGH_PASS)
    t2 = time.perf_counter()
    sel = select_count(resp, m, cfg.gamma, k=k)
    t3 = time.perf_counter()
    for key, dt in (("graph", t1 - t0), ("response", t2 - t1), ("select", t3 - t2)):
        timings[key] = timings.get(key, 0.0) + dt
    return sel, g, resp


def prune_once(field: GaussianField, cfg: PruneConfig):
    """Training-then-pruning: keep ``round(k n)`` primitives in a single pass.

    The selection and the response it ranked are attached to the report as
    ``report.selection`` and ``report.response``.
    """
    if cfg.mode != ONE_SHOT:
        raise ValueError("prune_once needs mode='one_shot'")
    n = len(field)
    if n == 0:
        raise DegenerateInputError("cannot prune an empty field")
    timings: dict = {}
    m = round_half_up(cfg.k * n)
    sel, g, resp = spectral_select(field, m, cfg, timings, k=cfg.k)
    t0 = time.perf_counter()
    out = compact(field, sel)
    timings["compact"] = time.perf_counter() - t0
    report = PruneReport(
        before_count=n, after_count=len(out),
        bytes_before=field_bytes(n), bytes_after=field_bytes(len(out)),
        peak_count=n, per_step_counts=[n, len(out)], timings=timings,
        mode=ONE_SHOT, k=cfg.k, gamma=cfg.gamma, tau=g.tau, sigma=g.sigma, selection=sel,
        response=resp,
    )
    return out, report


def prune_schedule(snapshots: Sequence[GaussianField], cfg: PruneConfig):
    """Periodic pruning over an externally produced sequence of field snapshots.

    Snapshot ``s`` is what the field would look like at step ``s`` without any
    pruning; index ``i`` names the same primitive across snapshots and growth
    appends new indices.  The live field at each step is the snapshot restricted
    to survivors of earlier prunes plus any newly appended primitives.  Steps
    are numbered from 1 and step ``s`` prunes when ``s % interval == 0``.

    Returns ``(final_field, report)``.  ``per_step_counts`` starts with the first
    snapshot's size and then records the live count after each step.
    """
    if cfg.mode != CONTINUOUS:
        raise ValueError("prune_schedule needs mode='continuous'")
    if len(snapshots) == 0:
        raise DegenerateInputError("no snapshots supplied")
    steps = len(snapshots) if cfg.max_steps is None else min(len(snapshots), cfg.max_steps)
    timings: dict = {}
    alive = np.zeros(0, dtype=np.int64)
    seen = 0
    counts = [len(snapshots[0])]
    peak = 0
    current = None
    taus, sigmas = [], []
    for step in range(1, steps + 1):
        snap = snapshots[step - 1]
        if len(snap) == 0:
            raise DegenerateInputError(f"snapshot {step - 1} is empty")
        if alive.size and alive.max() >= len(snap):
            raise DegenerateInputError(
                f"snapshot {step - 1} has {len(snap)} primitives but index {alive.max()} survived")
        alive = np.concatenate([alive, np.arange(seen, len(snap))]) if len(snap) > seen else alive
        seen = max(seen, len(snap))
        current = compact(snap, alive)
        peak = max(peak, len(current))
        if step % cfg.interval == 0:
            n = len(current)
            m = round_half_up(cfg.per_step_keep * n)
            if cfg.primitive_cap is not None:
                m = min(m, cfg.primitive_cap)
            sel, g, _ = spectral_select(current, m, cfg, timings, k=cfg.per_step_keep)
            taus.append(g.tau)
            sigmas.append(g.sigma)
            alive = alive[sel.kept]
            current = compact(current, sel)
        counts.append(len(current))

    return current, PruneReport(
        before_count=len(snapshots[0]), after_count=len(current),
        bytes_before=field_bytes(len(snapshots[0])), bytes_after=field_bytes(len(current)),
        peak_count=peak, per_step_counts=counts, timings=timings, mode=CONTINUOUS,
        k=cfg.per_step_keep, gamma=cfg.gamma,
        tau=taus[-1] if taus else None, sigma=sigmas[-1] if sigmas else None,
    )
