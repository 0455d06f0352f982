"""Scene data model: Gaussians, clouds, cameras and parameter activations.

Parameters are stored pre-activation exactly as in 3DGS PLY files
(log-scales, opacity logits, raw (w, x, y, z) quaternions); activation happens
at the use sites.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidParameterError

SH_C0 = 0.28209479177387814


def sh_rest_width(sh_degree: int) -> int:
    """Number of float coefficients in ``sh_rest`` for a given SH degree."""
    return 3 * ((sh_degree + 1) ** 2 - 1)


def _frozen(a, dtype, shape) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True, order="C")
    if arr.size == 0:
        arr = arr.reshape(shape)
    if arr.shape != shape:
        raise InvalidParameterError(f"expected shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Gaussian:
    mean: np.ndarray
    scale_log: np.ndarray
    rotation: np.ndarray
    opacity_logit: float
    sh_dc: np.ndarray
    sh_rest: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("mean", "scale_log", "rotation", "sh_dc"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        object.__setattr__(self, "opacity_logit", float(self.opacity_logit))


@dataclass(frozen=True, eq=False)
class GaussianCloud:
    """Structure-of-arrays Gaussian scene.

    Arrays are float32 and read-only: ``means`` (N, 3), ``scale_log`` (N, 3),
    ``rotation`` (N, 4) as (w, x, y, z), ``opacity_logit`` (N,), ``sh_dc``
    (N, 3) and ``sh_rest`` (N, 3*((d+1)^2-1)) in PLY ``f_rest_*`` order, or
    ``None`` when ``sh_degree`` is 0.
    """

    means: np.ndarray
    scale_log: np.ndarray
    rotation: np.ndarray
    opacity_logit: np.ndarray
    sh_dc: np.ndarray
    sh_rest: Optional[np.ndarray] = None
    sh_degree: int = field(default=0)

    def __post_init__(self):
        if self.sh_degree not in (0, 1, 2, 3):
            raise InvalidParameterError(f"sh_degree must be 0..3, got {self.sh_degree}")
        n = int(np.shape(self.means)[0]) if np.ndim(self.means) else 0
        set_ = object.__setattr__
        set_(self, "means", _frozen(self.means, np.float32, (n, 3)))
        set_(self, "scale_log", _frozen(self.scale_log, np.float32, (n, 3)))
        set_(self, "rotation", _frozen(self.rotation, np.float32, (n, 4)))
        set_(self, "opacity_logit", _frozen(self.opacity_logit, np.float32, (n,)))
        set_(self, "sh_dc", _frozen(self.sh_dc, np.float32, (n, 3)))
        if self.sh_degree == 0:
            if self.sh_rest is not None and np.size(self.sh_rest) != 0:
                raise InvalidParameterError("sh_rest must be absent when sh_degree is 0")
            set_(self, "sh_rest", None)
        else:
            if self.sh_rest is None:
                raise InvalidParameterError("sh_rest required when sh_degree > 0")
            set_(self, "sh_rest", _frozen(self.sh_rest, np.float32, (n, sh_rest_width(self.sh_degree))))

    @property
    def count(self) -> int:
        return self.means.shape[0]

    def __len__(self) -> int:
        return self.count

    def __getitem__(self, i: int) -> Gaussian:
        return Gaussian(
            mean=self.means[i],
            scale_log=self.scale_log[i],
            rotation=self.rotation[i],
            opacity_logit=self.opacity_logit[i],
            sh_dc=self.sh_dc[i],
            sh_rest=None if self.sh_rest is None else self.sh_rest[i],
        )

    def __eq__(self, other):
        if not isinstance(other, GaussianCloud):
            return NotImplemented
        if self.sh_degree != other.sh_degree or self.count != other.count:
            return False
        pairs = [(getattr(self, k), getattr(other, k)) for k in self._array_fields()]
        return all(np.array_equal(a.view(np.uint32), b.view(np.uint32)) for a, b in pairs)

    def _array_fields(self):
        names = ["means", "scale_log", "rotation", "opacity_logit", "sh_dc"]
        if self.sh_rest is not None:
            names.append("sh_rest")
        return names

    @classmethod
    def empty(cls, sh_degree: int = 0) -> "GaussianCloud":
        rest = np.zeros((0, sh_rest_width(sh_degree)), np.float32) if sh_degree else None
        z = np.zeros((0, 3), np.float32)
        return cls(z, z, np.zeros((0, 4)), np.zeros(0), z, rest, sh_degree)

    def subset(self, indices) -> "GaussianCloud":
        """Cloud restricted to ``indices`` (order as given)."""
        idx = np.asarray(indices, dtype=np.int64)
        return GaussianCloud(
            self.means[idx],
            self.scale_log[idx],
            self.rotation[idx],
            self.opacity_logit[idx],
            self.sh_dc[idx],
            None if self.sh_rest is None else self.sh_rest[idx],
            self.sh_degree,
        )

    def replace(self, **changes) -> "GaussianCloud":
        kw = {k: getattr(self, k) for k in self._array_fields()}
        kw["sh_rest"] = self.sh_rest
        kw["sh_degree"] = self.sh_degree
        kw.update(changes)
        return GaussianCloud(**kw)

    def truncate_sh(self) -> "GaussianCloud":
        """Drop degrees 1-3, keeping only the DC color."""
        return self.replace(sh_rest=None, sh_degree=0)

    def validate(self) -> None:
        for k in self._array_fields():
            if not np.all(np.isfinite(getattr(self, k))):
                raise InvalidParameterError(f"non-finite values in {k}")
        if self.count and np.any(np.einsum("ij,ij->i", self.rotation, self.rotation) == 0):
            raise InvalidParameterError("zero-norm rotation quaternion")


@dataclass(frozen=True, eq=False)
class Camera:
    """Pinhole camera. ``world_to_camera`` is a 4x4 rigid transform; camera looks down +z,
    +x right, +y down. Pixel (row r, col c) has its center at image coordinates (c, r)."""

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    world_to_camera: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        m = np.array(self.world_to_camera, dtype=np.float64).reshape(4, 4)
        m.setflags(write=False)
        object.__setattr__(self, "world_to_camera", m)
        if self.width <= 0 or self.height <= 0:
            raise InvalidParameterError("camera width and height must be positive")
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidParameterError("focal lengths must be positive")
        if not np.all(np.isfinite(m)):
            raise InvalidParameterError("non-finite extrinsics")
        r = m[:3, :3]
        if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-4:
            raise InvalidParameterError("rotation block of world_to_camera is not orthonormal")

    @property
    def rotation(self) -> np.ndarray:
        return self.world_to_camera[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.world_to_camera[:3, 3]

    @property
    def position(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    def to_json(self) -> dict:
        return {
            "width": int(self.width),
            "height": int(self.height),
            "fx": float(self.fx),
            "fy": float(self.fy),
            "cx": float(self.cx),
            "cy": float(self.cy),
            "world_to_camera": [float(v) for v in self.world_to_camera.ravel()],
        }

    @classmethod
    def from_json(cls, d: dict) -> "Camera":
        try:
            m = d["world_to_camera"]
            if len(m) != 16:
                raise InvalidParameterError("world_to_camera must have 16 numbers")
            return cls(int(d["width"]), int(d["height"]), float(d["fx"]), float(d["fy"]),
                       float(d["cx"]), float(d["cy"]), np.asarray(m, dtype=np.float64).reshape(4, 4))
        except (KeyError, TypeError) as exc:
            raise InvalidParameterError(f"bad camera entry: {exc}") from exc


def quat_to_rotmat(q) -> np.ndarray:
    """Rotation matrix of a (w, x, y, z) quaternion, normalised first."""
    q = np.asarray(q, dtype=np.float64)
    norm = math.sqrt(float(q @ q))
    if norm == 0.0:
        raise InvalidParameterError("zero-norm quaternion")
    w, x, y, z = q / norm
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def activate_covariance(g: Gaussian) -> np.ndarray:
    """World-space covariance R S S^T R^T with S = diag(exp(scale_log))."""
    for v in (g.rotation, g.scale_log):
        if not np.all(np.isfinite(v)):
            raise InvalidParameterError("non-finite Gaussian parameters")
    r = quat_to_rotmat(g.rotation)
    m = r * np.exp(g.scale_log)[None, :]
    cov = m @ m.T
    return 0.5 * (cov + cov.T)


def activate_covariances(scale_log: np.ndarray, rotation: np.ndarray) -> np.ndarray:
    """Vectorised ``activate_covariance`` over (N, 3) log-scales and (N, 4) quaternions."""
    q = np.asarray(rotation, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q.T
    r = np.empty((q.shape[0], 3, 3))
    r[:, 0, 0] = 1 - 2 * (y * y + z * z)
    r[:, 0, 1] = 2 * (x * y - w * z)
    r[:, 0, 2] = 2 * (x * z + w * y)
    r[:, 1, 0] = 2 * (x * y + w * z)
    r[:, 1, 1] = 1 - 2 * (x * x + z * z)
    r[:, 1, 2] = 2 * (y * z - w * x)
    r[:, 2, 0] = 2 * (x * z - w * y)
    r[:, 2, 1] = 2 * (y * z + w * x)
    r[:, 2, 2] = 1 - 2 * (x * x + y * y)
    m = r * np.exp(np.asarray(scale_log, dtype=np.float64))[:, None, :]
    return m @ m.transpose(0, 2, 1)


def activate_opacity(logit):
    """Sigmoid; works on scalars and arrays."""
    logit = np.asarray(logit, dtype=np.float64)
    out = np.empty_like(logit)
    pos = logit >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-logit[pos]))
    e = np.exp(logit[~pos])
    out[~pos] = e / (1.0 + e)
    return float(out) if out.ndim == 0 else out


def opacity_to_logit(sigma):
    sigma = np.asarray(sigma, dtype=np.float64)
    return np.log(sigma) - np.log1p(-sigma)


def sh_to_color(sh_dc) -> np.ndarray:
    """Degree-0 SH color, clamped to [0, 1]."""
    return np.clip(SH_C0 * np.asarray(sh_dc, dtype=np.float64) + 0.5, 0.0, 1.0)
