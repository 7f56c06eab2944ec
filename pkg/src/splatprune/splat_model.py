"""Gaussian-splat fields and their binary PLY checkpoints.

A field is stored as one ``(N, 62)`` float32 record array laid out exactly like
a vertex of the conventional 3DGS checkpoint, so loading, compacting and saving
never touch the bits of a primitive.  Attribute accessors are views into it.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import (
    PlyFormatError,
    ShapeError,
    TruncatedPayloadError,
    UnsupportedEncodingError,
)

N_REST = 45
SH_COEFFS = 3 + N_REST

PROPERTY_NAMES = (
    ["x", "y", "z", "nx", "ny", "nz"]
    + [f"f_dc_{i}" for i in range(3)]
    + [f"f_rest_{i}" for i in range(N_REST)]
    + ["opacity"]
    + [f"scale_{i}" for i in range(3)]
    + [f"rot_{i}" for i in range(4)]
)
N_PROPS = len(PROPERTY_NAMES)  # 62
BYTES_PER_PRIMITIVE = 4 * N_PROPS  # 248

_COL = {name: i for i, name in enumerate(PROPERTY_NAMES)}
CENTER = slice(0, 3)
NORMAL = slice(3, 6)
SH = slice(6, 6 + SH_COEFFS)
OPACITY = _COL["opacity"]
SCALE = slice(_COL["scale_0"], _COL["scale_0"] + 3)
ROT = slice(_COL["rot_0"], _COL["rot_0"] + 4)

_FLOAT_TYPES = {"float", "float32"}
_QUAT_TOL = 1e-6


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


def quat_to_rotmat(q):
    """Rotation matrices for ``(..., 4)`` quaternions in ``(w, x, y, z)`` order."""
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


@dataclass(frozen=True)
class GaussianPrimitive:
    center: np.ndarray
    rotation: np.ndarray
    log_scale: np.ndarray
    opacity_logit: float
    sh_coeffs: np.ndarray
    normal: np.ndarray

    @property
    def opacity(self) -> float:
        return float(sigmoid(self.opacity_logit))

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale.astype(np.float64))


class GaussianField:
    """Ordered, immutable collection of Gaussian primitives.

    ``data`` holds the raw float32 vertex records.  Index ``i`` refers to the
    same primitive for the lifetime of the object; only :func:`compact`
    produces a field with different indexing.
    """

    def __init__(self, data, sh_degree: int = 3):
        data = np.ascontiguousarray(data, dtype=np.float32)
        if data.ndim != 2 or data.shape[1] != N_PROPS:
            raise ShapeError(f"expected (N, {N_PROPS}) records, got {data.shape}")
        if not 0 <= sh_degree <= 3:
            raise ValueError(f"sh_degree must be in 0..3, got {sh_degree}")
        data.setflags(write=False)
        self.data = data
        self.sh_degree = int(sh_degree)

    @classmethod
    def from_arrays(cls, centers, log_scales=None, rotations=None, opacity_logits=None,
                    sh=None, normals=None, sh_degree: int = 3) -> "GaussianField":
        centers = np.asarray(centers, dtype=np.float32).reshape(-1, 3)
        n = len(centers)
        data = np.zeros((n, N_PROPS), dtype=np.float32)
        data[:, CENTER] = centers
        if normals is not None:
            data[:, NORMAL] = normals
        if sh is not None and n:
            sh = np.asarray(sh, dtype=np.float32).reshape(n, -1)
            data[:, SH.start:SH.start + sh.shape[1]] = sh
        data[:, OPACITY] = 0.0 if opacity_logits is None else opacity_logits
        if log_scales is not None:
            data[:, SCALE] = log_scales
        if rotations is None:
            data[:, ROT.start] = 1.0
        else:
            data[:, ROT] = _normalize_quats(np.asarray(rotations, dtype=np.float32).reshape(n, 4))
        return cls(data, sh_degree)

    @classmethod
    def empty(cls, sh_degree: int = 3) -> "GaussianField":
        return cls(np.zeros((0, N_PROPS), dtype=np.float32), sh_degree)

    def __len__(self) -> int:
        return len(self.data)

    def __getitem__(self, i: int) -> GaussianPrimitive:
        row = self.data[i]
        return GaussianPrimitive(
            center=row[CENTER], rotation=row[ROT], log_scale=row[SCALE],
            opacity_logit=float(row[OPACITY]), sh_coeffs=row[SH], normal=row[NORMAL],
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, GaussianField):
            return NotImplemented
        return (self.sh_degree == other.sh_degree
                and self.data.shape == other.data.shape
                and self.data.tobytes() == other.data.tobytes())

    def __repr__(self) -> str:
        return f"GaussianField(n={len(self)}, sh_degree={self.sh_degree})"

    @property
    def centers(self) -> np.ndarray:
        return self.data[:, CENTER]

    @property
    def normals(self) -> np.ndarray:
        return self.data[:, NORMAL]

    @property
    def sh(self) -> np.ndarray:
        return self.data[:, SH]

    @property
    def opacity_logits(self) -> np.ndarray:
        return self.data[:, OPACITY]

    @property
    def log_scales(self) -> np.ndarray:
        return self.data[:, SCALE]

    @property
    def rotations(self) -> np.ndarray:
        return self.data[:, ROT]

    @property
    def opacities(self) -> np.ndarray:
        return sigmoid(self.opacity_logits)

    @property
    def scales(self) -> np.ndarray:
        return np.exp(self.log_scales.astype(np.float64))

    def sh_tensor(self) -> np.ndarray:
        """SH coefficients as ``(N, 3, 16)``: channel-major, DC at index 0."""
        out = np.empty((len(self), 3, 16), dtype=np.float64)
        out[:, :, 0] = self.sh[:, :3]
        out[:, :, 1:] = self.sh[:, 3:].reshape(-1, 3, 15)
        return out

    def bbox(self):
        if len(self) == 0:
            return None
        c = self.centers
        return c.min(axis=0).tolist(), c.max(axis=0).tolist()


def _normalize_quats(q: np.ndarray) -> np.ndarray:
    # Only rescale quaternions that are off by more than the tolerance, so a
    # load of an already-normalized checkpoint leaves every bit untouched.
    # An all-zero quaternion (e.g. a zero-filled record) reads as identity.
    q64 = q.astype(np.float64)
    norms = np.linalg.norm(q64, axis=1)
    if not np.all(np.isfinite(norms)):
        bad = int(np.flatnonzero(~np.isfinite(norms))[0])
        raise PlyFormatError(f"primitive {bad} has a non-finite rotation quaternion")
    off = np.abs(norms - 1.0) > _QUAT_TOL
    if not off.any():
        return q
    out = q.copy()
    zero = norms == 0
    fix = off & ~zero
    out[fix] = (q64[fix] / norms[fix, None]).astype(np.float32)
    out[zero] = (1.0, 0.0, 0.0, 0.0)
    return out


def rotation_matrices(field: GaussianField) -> np.ndarray:
    return quat_to_rotmat(field.rotations)


def covariances(field: GaussianField) -> np.ndarray:
    """World-space covariances ``R diag(s)^2 R^T`` for every primitive, ``(N, 3, 3)``."""
    R = rotation_matrices(field)
    M = R * field.scales[:, None, :]
    return M @ np.swapaxes(M, -1, -2)


def covariance_of(p: GaussianPrimitive) -> np.ndarray:
    R = quat_to_rotmat(p.rotation)
    M = R * p.scale[None, :]
    cov = M @ M.T
    return 0.5 * (cov + cov.T)


def compact(field: GaussianField, keep) -> GaussianField:
    """Return a new field with only the primitives in ``keep``, in ascending index order.

    ``keep`` is a :class:`~splatprune.spectral.PruneSelection` or any integer
    index sequence.
    """
    idx = np.asarray(getattr(keep, "kept", keep), dtype=np.int64).ravel()
    if len(idx) and (idx.min() < 0 or idx.max() >= len(field)):
        bad = idx[(idx < 0) | (idx >= len(field))][0]
        raise IndexError(f"kept index {bad} out of range for field of size {len(field)}")
    idx = np.sort(idx)
    if len(idx) > 1 and np.any(idx[1:] == idx[:-1]):
        raise ValueError("kept indices must be unique")
    return GaussianField(field.data[idx], field.sh_degree)


# --- PLY I/O -----------------------------------------------------------------

def ply_header(n: int) -> bytes:
    lines = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    lines += [f"property float {name}" for name in PROPERTY_NAMES]
    lines.append("end_header")
    return ("\n".join(lines) + "\n").encode("ascii")


def _parse_header(fh, path):
    first = fh.readline()
    if first.rstrip(b"\r\n") != b"ply":
        raise PlyFormatError(f"{path}: not a PLY file (missing 'ply' magic)")
    fmt = None
    elements = []
    while True:
        line = fh.readline()
        if not line:
            raise PlyFormatError(f"{path}: header has no end_header")
        tokens = line.decode("ascii", errors="replace").split()
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        key = tokens[0]
        if key == "end_header":
            break
        if key == "format":
            fmt = tokens[1] if len(tokens) > 1 else ""
        elif key == "element":
            if len(tokens) != 3:
                raise PlyFormatError(f"{path}: malformed element line {line!r}")
            elements.append((tokens[1], int(tokens[2]), []))
        elif key == "property":
            if not elements:
                raise PlyFormatError(f"{path}: property before any element")
            if tokens[1] == "list":
                elements[-1][2].append((tokens[-1], "list"))
            else:
                elements[-1][2].append((tokens[2], tokens[1]))
        else:
            raise PlyFormatError(f"{path}: unexpected header line {line!r}")
    if fmt != "binary_little_endian":
        raise UnsupportedEncodingError(f"{path}: unsupported encoding {fmt!r}; "
                                       "only binary_little_endian is read")
    if not elements or elements[0][0] != "vertex":
        raise PlyFormatError(f"{path}: first element must be 'vertex'")
    return elements[0][1], elements[0][2], fh.tell()


def _rest_count(names) -> int:
    count = 0
    while f"f_rest_{count}" in names:
        count += 1
    return count


def load_field(path) -> GaussianField:
    path = os.fspath(path)
    with open(path, "rb") as fh:
        n, props, offset = _parse_header(fh, path)
        payload = fh.read()

    names = [name for name, _ in props]
    for name, kind in props:
        if kind not in _FLOAT_TYPES:
            raise PlyFormatError(f"{path}: property {name!r} has type {kind!r}, expected float")

    n_rest = _rest_count(set(names))
    degree = {0: 0, 9: 1, 24: 2, 45: 3}.get(n_rest)
    if degree is None:
        raise PlyFormatError(f"{path}: {n_rest} f_rest properties do not match any SH degree")
    required = [p for p in PROPERTY_NAMES if not p.startswith("f_rest_")]
    for name in required:
        if name not in names:
            raise PlyFormatError(f"{path}: missing vertex property {name!r}")

    stride = 4 * len(props)
    need = n * stride
    if len(payload) < need:
        got = offset + len(payload)
        raise TruncatedPayloadError(
            f"{path}: payload truncated at byte {got}, expected {offset + need} bytes", got)
    raw = np.frombuffer(payload, dtype="<f4", count=n * len(props)).reshape(n, len(props))

    data = np.zeros((n, N_PROPS), dtype=np.float32)
    col = {name: i for i, name in enumerate(names)}
    for name in required:
        data[:, _COL[name]] = raw[:, col[name]]
    # f_rest is channel-major: per channel (K - 1) coefficients, padded to 15.
    per_channel = n_rest // 3
    for c in range(3):
        for k in range(per_channel):
            data[:, _COL[f"f_rest_{c * 15 + k}"]] = raw[:, col[f"f_rest_{c * per_channel + k}"]]
    data[:, ROT] = _normalize_quats(data[:, ROT])
    return GaussianField(data, degree)


def save_field(field: GaussianField, path) -> None:
    path = os.fspath(path)
    try:
        with open(path, "wb") as fh:
            fh.write(ply_header(len(field)))
            fh.write(field.data.astype("<f4", copy=False).tobytes())
    except OSError as exc:
        raise OSError(f"cannot write checkpoint {path}: {exc}") from exc
