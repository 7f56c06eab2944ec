"""Deterministic synthetic test scenes: a smooth backdrop plus a fine-detail cluster.

The backdrop is a jittered square grid of flat, dim, slowly varying splats in
the ``z = 0`` plane.  The detail cluster floats in front of it (towards ``-z``)
and is made of short straight segments of tiny, saturated splats.  Points
inside a segment sit closer together than any two backdrop points, so the
scene's minimum nearest-neighbor distance always comes from the cluster, while
the segments themselves are spread out on a lattice so each detail primitive
has only a handful of graph neighbors.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegenerateInputError
from .rasterizer import SH_C0, CameraModel
from .splat_model import GaussianField


@dataclass
class SynthSpec:
    plane: int = 18_000
    cluster: int = 2_000
    extent: float = 4.0  # backdrop side length
    spacing_ratio: float = 3.0  # backdrop spacing / in-segment spacing
    segment_len: int = 2  # detail primitives per segment
    segment_gap: float = 1.2  # lattice spacing between segments, in units of tau
    cluster_depth: float = 2.5  # distance of the cluster center in front of the backdrop
    plane_jitter: float = 0.1  # fraction of backdrop spacing
    plane_scale: float = 2.5  # backdrop splat radius / backdrop spacing
    detail_scale: float = 2.0  # detail splat radius / in-segment spacing
    seed: int = 0

    def __post_init__(self):
        if self.plane < 0 or self.cluster < 0 or self.plane + self.cluster == 0:
            raise DegenerateInputError("synthetic scene needs a positive primitive count")
        if self.spacing_ratio <= 1.0 / (1.0 - 2.0 * self.plane_jitter):
            raise ValueError("spacing_ratio too small: backdrop jitter could undercut the detail spacing")
        if self.segment_len < 1:
            raise ValueError("segment_len must be >= 1")

    @property
    def plane_spacing(self) -> float:
        side = max(1, math.ceil(math.sqrt(self.plane)))
        return self.extent / side

    @property
    def detail_spacing(self) -> float:
        return self.plane_spacing / self.spacing_ratio

    def to_json(self) -> dict:
        return asdict(self)


def _rng(spec: SynthSpec, stream: int) -> np.random.Generator:
    return np.random.default_rng([spec.seed, stream])


def _logit(p):
    return math.log(p / (1.0 - p))


def _dc(rgb):
    return (np.asarray(rgb, dtype=np.float64) - 0.5) / SH_C0


def _backdrop(spec: SynthSpec):
    n = spec.plane
    if n == 0:
        return (np.zeros((0, 3)),) * 3
    side = math.ceil(math.sqrt(n))
    s = spec.plane_spacing
    u = (np.arange(side) + 0.5) * s - spec.extent / 2
    X, Y = np.meshgrid(u, u)
    pts = np.stack([X.ravel(), Y.ravel(), np.zeros(side * side)], axis=1)[:n]
    pts[:, :2] += _rng(spec, 1).uniform(-spec.plane_jitter, spec.plane_jitter, (n, 2)) * s
    # slow, low-contrast color field
    k = 2 * np.pi / spec.extent
    x, y = pts[:, 0], pts[:, 1]
    rgb = np.stack([0.22 + 0.06 * np.sin(k * x),
                    0.20 + 0.06 * np.cos(k * y),
                    0.25 + 0.05 * np.sin(k * (x + y) / 2)], axis=1)
    log_scale = np.tile([math.log(spec.plane_scale * s), math.log(spec.plane_scale * s), math.log(0.05 * s)], (n, 1))
    return pts, rgb, log_scale


def _cluster(spec: SynthSpec):
    n = spec.cluster
    if n == 0:
        return (np.zeros((0, 3)),) * 3
    sc = spec.detail_spacing
    tau = 10.0 * sc
    seg_count = math.ceil(n / spec.segment_len)
    side = math.ceil(seg_count ** (1 / 3))
    gap = spec.segment_gap * tau + (spec.segment_len - 1) * sc
    g = (np.arange(side) - (side - 1) / 2) * gap
    A, B, C = np.meshgrid(g, g, g, indexing="ij")
    anchors = np.stack([A.ravel(), B.ravel(), C.ravel()], axis=1)
    anchors = anchors[np.lexsort((anchors[:, 2], anchors[:, 1], anchors[:, 0], np.linalg.norm(anchors, axis=1)))]
    anchors = anchors[:seg_count] + np.array([0.0, 0.0, -spec.cluster_depth])

    rng = _rng(spec, 2)
    dirs = rng.normal(size=(seg_count, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    steps = np.arange(spec.segment_len) - (spec.segment_len - 1) / 2
    pts = (anchors[:, None, :] + steps[None, :, None] * sc * dirs[:, None, :]).reshape(-1, 3)[:n]

    palette = np.array([[0.95, 0.1, 0.1], [0.1, 0.9, 0.2], [0.15, 0.3, 0.95],
                        [0.95, 0.9, 0.1], [0.9, 0.15, 0.9], [0.1, 0.9, 0.9]])
    rgb = palette[rng.integers(0, len(palette), size=n)]
    r = spec.detail_scale * sc
    log_scale = np.tile([math.log(r)] * 3, (n, 1))
    return pts, rgb, log_scale


def synth_field(spec: SynthSpec | None = None) -> GaussianField:
    """Backdrop primitives first (indices ``0..plane-1``), then the cluster."""
    spec = spec or SynthSpec()
    p_pts, p_rgb, p_ls = _backdrop(spec)
    c_pts, c_rgb, c_ls = _cluster(spec)
    n_p, n_c = len(p_pts), len(c_pts)
    opacity = np.concatenate([np.full(n_p, _logit(0.85)), np.full(n_c, _logit(0.95))])
    sh = np.zeros((n_p + n_c, 48))
    sh[:, :3] = _dc(np.vstack([p_rgb, c_rgb]))
    return GaussianField.from_arrays(
        centers=np.vstack([p_pts, c_pts]),
        log_scales=np.vstack([p_ls, c_ls]),
        opacity_logits=opacity,
        sh=sh,
        sh_degree=0,
    )


def cluster_mask(spec: SynthSpec) -> np.ndarray:
    mask = np.zeros(spec.plane + spec.cluster, dtype=bool)
    mask[spec.plane:] = True
    return mask


def default_camera(spec: SynthSpec | None = None, width: int = 256, height: int = 256) -> CameraModel:
    """Held-out view: slightly off-axis, looking at the cluster and the backdrop behind it."""
    spec = spec or SynthSpec()
    target = np.array([0.0, 0.0, -0.5 * spec.cluster_depth])
    eye = np.array([0.35, -0.25, -spec.cluster_depth - 3.0])
    return CameraModel.look_at(eye, target, up=[0.0, -1.0, 0.0], width=width, height=height,
                               fov_x_deg=40.0)
