"""CPU reference splatting renderer.

Primitives are projected with a pinhole camera, their covariances pushed
through the local Jacobian of the projection, sorted once by depth and
alpha-composited front to back.  Pixel ``(u, v)`` is sampled at continuous
image coordinate ``(u, v)``.
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .splat_model import GaussianField, covariances

log = logging.getLogger(__name__)

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
         -1.0925484305920792, 0.5462742152960396)
SH_C3 = (-0.5900435899266435, 2.890611442640554, -0.4570457994644658, 0.3731763325901154,
         -0.4570457994644658, 1.445305721320277, -0.5900435899266435)


@dataclass
class RenderSettings:
    near: float = 0.01
    cov_floor: float = 0.3  # px^2 added to the 2D covariance diagonal
    beta_max: float = 0.99
    min_contribution: float = 1.0 / 255.0
    min_transmittance: float = 1e-4
    extent_sigmas: float = 3.0
    det_eps: float = 1e-12


@dataclass
class CameraModel:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")
        if not np.allclose(self.rotation @ self.rotation.T, np.eye(3), atol=1e-6):
            raise ValueError("camera rotation is not orthonormal")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def position(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    def to_camera(self, x) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.rotation.T + self.translation

    def to_json(self) -> dict:
        return {
            "width": self.width, "height": self.height,
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "rotation": self.rotation.ravel().tolist(),
            "translation": self.translation.tolist(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "CameraModel":
        return cls(width=int(d["width"]), height=int(d["height"]),
                   fx=float(d["fx"]), fy=float(d["fy"]), cx=float(d["cx"]), cy=float(d["cy"]),
                   rotation=np.asarray(d.get("rotation", np.eye(3).ravel()), dtype=np.float64),
                   translation=np.asarray(d.get("translation", [0, 0, 0]), dtype=np.float64))

    def resized(self, width: int, height: int) -> "CameraModel":
        sx, sy = width / self.width, height / self.height
        return CameraModel(width, height, self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy,
                           self.rotation, self.translation)

    @classmethod
    def look_at(cls, eye, target, up, width: int, height: int, fov_x_deg: float = 60.0):
        eye, target, up = (np.asarray(v, dtype=np.float64) for v in (eye, target, up))
        z = target - eye
        z /= np.linalg.norm(z)
        x = np.cross(z, up)
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        R = np.stack([x, y, z])  # rows: camera axes in world coordinates
        f = 0.5 * width / np.tan(np.radians(fov_x_deg) / 2)
        return cls(width, height, f, f, (width - 1) / 2, (height - 1) / 2, R, -R @ eye)


def load_camera(path) -> CameraModel:
    with open(os.fspath(path)) as fh:
        return CameraModel.from_json(json.load(fh))


def save_camera(cam: CameraModel, path) -> None:
    with open(os.fspath(path), "w") as fh:
        json.dump(cam.to_json(), fh, indent=2)


# --- projection ---------------------------------------------------------------

def project_points(x, cam: CameraModel, near: float = 0.01):
    """Pixel coordinates, depths and an in-front mask for ``(N, 3)`` world points."""
    pc = cam.to_camera(np.atleast_2d(x))
    z = pc[:, 2]
    visible = z > near
    zs = np.where(visible, z, 1.0)
    uv = np.stack([cam.fx * pc[:, 0] / zs + cam.cx, cam.fy * pc[:, 1] / zs + cam.cy], axis=1)
    return uv, z, visible


def project_center(x, cam: CameraModel, near: float = 0.01):
    """``(pixel, depth)`` for one world point, or ``None`` when it is culled."""
    uv, z, vis = project_points(np.asarray(x, dtype=np.float64).reshape(1, 3), cam, near)
    if not vis[0]:
        return None
    return uv[0], float(z[0])


def projection_jacobians(pc, cam: CameraModel) -> np.ndarray:
    """``(N, 2, 3)`` Jacobians of the perspective map at camera-space points."""
    x, y, z = pc[:, 0], pc[:, 1], pc[:, 2]
    J = np.zeros((len(pc), 2, 3))
    J[:, 0, 0] = cam.fx / z
    J[:, 0, 2] = -cam.fx * x / (z * z)
    J[:, 1, 1] = cam.fy / z
    J[:, 1, 2] = -cam.fy * y / (z * z)
    return J


def project_covariances(cov, x, cam: CameraModel, floor: float = 0.3) -> np.ndarray:
    """Image-space covariances ``J R cov R^T J^T`` plus ``floor`` on the diagonal."""
    cov = np.asarray(cov, dtype=np.float64).reshape(-1, 3, 3)
    pc = cam.to_camera(np.asarray(x, dtype=np.float64).reshape(-1, 3))
    M = projection_jacobians(pc, cam) @ cam.rotation
    out = M @ cov @ np.swapaxes(M, -1, -2)
    out = 0.5 * (out + np.swapaxes(out, -1, -2))
    out[:, 0, 0] += floor
    out[:, 1, 1] += floor
    return out


def project_covariance(cov, x, cam: CameraModel, floor: float = 0.3) -> np.ndarray:
    return project_covariances(cov, x, cam, floor)[0]


# --- color --------------------------------------------------------------------

def sh_basis(dirs, degree: int) -> np.ndarray:
    """Real SH basis values ``(N, (degree+1)^2)`` in the usual 3DGS sign convention."""
    d = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    x, y, z = d[:, 0], d[:, 1], d[:, 2]
    cols = [np.full_like(x, SH_C0)]
    if degree > 0:
        cols += [-SH_C1 * y, SH_C1 * z, -SH_C1 * x]
    if degree > 1:
        xx, yy, zz, xy, yz, xz = x * x, y * y, z * z, x * y, y * z, x * z
        cols += [SH_C2[0] * xy, SH_C2[1] * yz, SH_C2[2] * (2 * zz - xx - yy),
                 SH_C2[3] * xz, SH_C2[4] * (xx - yy)]
    if degree > 2:
        cols += [SH_C3[0] * y * (3 * xx - yy), SH_C3[1] * xy * z,
                 SH_C3[2] * y * (4 * zz - xx - yy), SH_C3[3] * z * (2 * zz - 3 * xx - 3 * yy),
                 SH_C3[4] * x * (4 * zz - xx - yy), SH_C3[5] * z * (xx - yy),
                 SH_C3[6] * x * (xx - 3 * yy)]
    return np.stack(cols, axis=1)


def evaluate_sh_batch(coeffs, dirs, degree: int) -> np.ndarray:
    """RGB for ``(N, 3, 16)`` coefficient tensors and ``(N, 3)`` unit directions."""
    nb = (degree + 1) ** 2
    basis = sh_basis(dirs, degree)
    rgb = np.einsum("ncb,nb->nc", np.asarray(coeffs)[:, :, :nb], basis)
    return np.clip(rgb + 0.5, 0.0, 1.0)


def evaluate_sh(sh_coeffs, view_dir, degree: int = 3) -> np.ndarray:
    """RGB from one primitive's 48 stored coefficients (DC first, then channel-major rest)."""
    c = np.asarray(sh_coeffs, dtype=np.float64).ravel()
    tensor = np.empty((1, 3, 16))
    tensor[0, :, 0] = c[:3]
    tensor[0, :, 1:] = c[3:48].reshape(3, 15)
    return evaluate_sh_batch(tensor, np.asarray(view_dir).reshape(1, 3), degree)[0]


# --- rendering ----------------------------------------------------------------

@dataclass
class RenderTarget:
    rgb: np.ndarray  # (H, W, 3)
    alpha: np.ndarray  # (H, W)
    diagnostics: dict = field(default_factory=dict)

    @property
    def width(self) -> int:
        return self.rgb.shape[1]

    @property
    def height(self) -> int:
        return self.rgb.shape[0]


@dataclass
class Fragments:
    """Per-primitive screen-space footprints, already in compositing order."""

    index: np.ndarray
    uv: np.ndarray
    conic: np.ndarray  # inverse 2D covariance, (N, 2, 2)
    depth: np.ndarray
    color: np.ndarray  # (N, C); C=3 for RGB, wider for feature channels
    opacity: np.ndarray
    bbox: np.ndarray  # (N, 4) x0, x1, y0, y1 (half-open)


def make_fragments(field: GaussianField, cam: CameraModel, settings: RenderSettings | None = None,
                   colors=None, diagnostics: dict | None = None) -> Fragments:
    """Project, cull and depth-sort ``field``.

    ``colors`` overrides the SH-evaluated RGB with any ``(N, C)`` per-primitive
    channel block (e.g. learned features).
    """
    s = settings or RenderSettings()
    diag = {} if diagnostics is None else diagnostics
    n = len(field)
    centers = field.centers.astype(np.float64)
    uv, depth, vis = project_points(centers, cam, s.near)
    diag["culled_near"] = int(n - vis.sum())
    idx = np.flatnonzero(vis)

    cov2 = project_covariances(covariances(field)[idx], centers[idx], cam, s.cov_floor)
    det = cov2[:, 0, 0] * cov2[:, 1, 1] - cov2[:, 0, 1] ** 2
    ok = det > s.det_eps
    diag["degenerate"] = int((~ok).sum())
    idx, cov2, det = idx[ok], cov2[ok], det[ok]
    conic = np.empty_like(cov2)
    conic[:, 0, 0] = cov2[:, 1, 1] / det
    conic[:, 1, 1] = cov2[:, 0, 0] / det
    conic[:, 0, 1] = conic[:, 1, 0] = -cov2[:, 0, 1] / det

    mid = 0.5 * (cov2[:, 0, 0] + cov2[:, 1, 1])
    lam = mid + np.sqrt(np.maximum(mid * mid - det, 0.0))
    r = s.extent_sigmas * np.sqrt(lam)
    u, v = uv[idx, 0], uv[idx, 1]
    # pixels whose coordinate lies in [center - r, center + r]
    bbox = np.stack([np.ceil(u - r), np.floor(u + r) + 1,
                     np.ceil(v - r), np.floor(v + r) + 1], axis=1)
    bbox[:, 0:2] = np.clip(bbox[:, 0:2], 0, cam.width)
    bbox[:, 2:4] = np.clip(bbox[:, 2:4], 0, cam.height)
    bbox = bbox.astype(np.int64)
    onscreen = (bbox[:, 1] > bbox[:, 0]) & (bbox[:, 3] > bbox[:, 2])
    diag["offscreen"] = int((~onscreen).sum())
    idx, conic, bbox = idx[onscreen], conic[onscreen], bbox[onscreen]

    if colors is None:
        dirs = centers[idx] - cam.position
        dirs /= np.maximum(np.linalg.norm(dirs, axis=1, keepdims=True), 1e-12)
        color = evaluate_sh_batch(field.sh_tensor()[idx], dirs, field.sh_degree)
    else:
        color = np.asarray(colors, dtype=np.float64).reshape(n, -1)[idx]

    order = np.argsort(depth[idx], kind="stable")  # ties keep the lower index first
    idx = idx[order]
    return Fragments(index=idx, uv=uv[idx], conic=conic[order], depth=depth[idx],
                     color=color[order], opacity=field.opacities[idx], bbox=bbox[order])


def composite(frags: Fragments, width: int, height: int, settings: RenderSettings | None = None,
              diagnostics: dict | None = None):
    """Front-to-back compositing of depth-sorted fragments.

    Per pixel: ``beta = min(beta_max, alpha * exp(-d^T conic d / 2))``; terms
    below ``min_contribution`` are skipped and a pixel stops accumulating once
    the next term would push its transmittance below ``min_transmittance``.
    Returns ``(image, transmittance)``.
    """
    s = settings or RenderSettings()
    channels = frags.color.shape[1] if frags.color.ndim == 2 else 3
    image = np.zeros((height, width, channels))
    T = np.ones((height, width))
    done = np.zeros((height, width), dtype=bool)
    xs = np.arange(width, dtype=np.float64)
    ys = np.arange(height, dtype=np.float64)
    for f in range(len(frags.index)):
        x0, x1, y0, y1 = frags.bbox[f]
        dx = xs[x0:x1] - frags.uv[f, 0]
        dy = ys[y0:y1, None] - frags.uv[f, 1]
        a, b, c = frags.conic[f, 0, 0], frags.conic[f, 0, 1], frags.conic[f, 1, 1]
        power = -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy
        beta = np.minimum(s.beta_max, frags.opacity[f] * np.exp(np.minimum(power, 0.0)))
        Tw = T[y0:y1, x0:x1]
        dw = done[y0:y1, x0:x1]
        active = (beta >= s.min_contribution) & ~dw
        if not active.any():
            continue
        test_T = Tw * (1.0 - beta)
        finish = active & (test_T < s.min_transmittance)
        if finish.any():
            dw[finish] = True
            active &= ~finish
        w = np.where(active, beta * Tw, 0.0)
        image[y0:y1, x0:x1] += w[..., None] * frags.color[f]
        Tw[active] = test_T[active]
    if diagnostics is not None:
        diagnostics["fragments"] = int(len(frags.index))
    return image, T


def render(field: GaussianField, cam: CameraModel, settings: RenderSettings | None = None,
           colors=None) -> RenderTarget:
    diag: dict = {}
    frags = make_fragments(field, cam, settings, colors, diag)
    image, T = composite(frags, cam.width, cam.height, settings, diag)
    if colors is None:
        image = np.clip(image, 0.0, 1.0)
    return RenderTarget(rgb=image, alpha=np.clip(1.0 - T, 0.0, 1.0), diagnostics=diag)


# --- image files --------------------------------------------------------------

def save_png(rgb: np.ndarray, path) -> None:
    from PIL import Image

    img = np.clip(np.round(np.asarray(rgb)[..., :3] * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(img, mode="RGB").save(os.fspath(path), format="PNG")


def save_raw(rgb: np.ndarray, path) -> None:
    """Header-less float32 ``(H, W, 3)`` dump with a ``<path>.json`` shape record."""
    path = os.fspath(path)
    rgb = np.ascontiguousarray(rgb[..., :3], dtype="<f4")
    rgb.tofile(path)
    with open(path + ".json", "w") as fh:
        json.dump({"width": rgb.shape[1], "height": rgb.shape[0], "channels": 3, "dtype": "float32"}, fh)


def load_image(path) -> np.ndarray:
    """Float RGB in ``[0, 1]`` from a PNG or a raw dump (with its JSON sidecar)."""
    path = os.fspath(path)
    if os.path.exists(path + ".json"):
        with open(path + ".json") as fh:
            meta = json.load(fh)
        data = np.fromfile(path, dtype="<f4")
        shape = (meta["height"], meta["width"], meta.get("channels", 3))
        if data.size != np.prod(shape):
            raise ValueError(f"{path}: raw dump size does not match {shape}")
        return data.reshape(shape).astype(np.float64)
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
