"""Deterministic synthetic scenes and orbit camera rigs.

Randomness comes from SplitMix64 in counter mode: draw ``i`` of a generator
seeded with ``s`` is ``mix(s + (i + 1) * 0x9E3779B97F4A7C15)`` with

    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z =  z ^ (z >> 31)

all modulo 2**64. Uniform doubles take the top 53 bits: ``(z >> 11) * 2**-53``.
Normals use Box-Muller on consecutive uniform pairs. Any language with 64-bit
unsigned wraparound reproduces the same scenes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .model import SH_C0, Camera, GaussianCloud, opacity_to_logit, sh_rest_width

KINDS = ("textured-room", "random-blob", "planar-grid")
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


class SplitMix64:
    def __init__(self, seed: int):
        self.seed = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        self.counter = 0

    def next_u64(self, n: int) -> np.ndarray:
        i = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            z = self.seed + i * _GOLDEN
            z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))

    def uniform(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
        return low + (high - low) * u

    def normal(self, n: int) -> np.ndarray:
        m = (n + 1) // 2
        u = self.uniform(2 * m)
        u1 = 1.0 - u[0::2]  # (0, 1], keeps log finite
        r = np.sqrt(-2.0 * np.log(u1))
        th = 2.0 * math.pi * u[1::2]
        return np.concatenate([r * np.cos(th), r * np.sin(th)])[:n] if n else np.zeros(0)


@dataclass(frozen=True)
class SynthSpec:
    kind: str
    gaussian_count: int
    seed: int = 0
    extent: float = 1.0
    sh_degree: int = 3

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameterError(f"unknown scene kind {self.kind!r}")
        if self.gaussian_count <= 0:
            raise InvalidParameterError("gaussian_count must be positive")
        if not self.extent > 0:
            raise InvalidParameterError("extent must be positive")


def _quat_from_normals(rng: SplitMix64, n: int, jitter: float) -> np.ndarray:
    q = np.zeros((n, 4))
    q[:, 0] = 1.0
    q += jitter * rng.normal(4 * n).reshape(n, 4)
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def _room(spec: SynthSpec, rng: SplitMix64):
    n = spec.gaussian_count
    half = spec.extent / 2.0
    face = np.minimum((rng.uniform(n) * 6).astype(np.int64), 5)
    uv = rng.uniform(2 * n, -half, half).reshape(n, 2)
    axis = face // 2
    sign = np.where(face % 2 == 0, -1.0, 1.0)
    means = np.empty((n, 3))
    for ax in range(3):
        sel = axis == ax
        other = [a for a in range(3) if a != ax]
        means[sel, ax] = sign[sel] * half
        means[sel, other[0]] = uv[sel, 0]
        means[sel, other[1]] = uv[sel, 1]
    spacing = math.sqrt(6.0 * spec.extent ** 2 / n)
    base = math.log(0.6 * spacing)
    scale = base + 0.25 * rng.normal(3 * n).reshape(n, 3)
    # flatten along the wall normal
    scale[np.arange(n), axis] = base - 2.0 + 0.25 * rng.normal(n)
    rot = _quat_from_normals(rng, n, 0.05)
    p = means / spec.extent
    color = np.stack([
        0.55 + 0.35 * np.sin(2.1 * math.pi * p[:, 0] + 1.3 * face),
        0.50 + 0.30 * np.cos(1.7 * math.pi * p[:, 1] - 0.4 * face),
        0.45 + 0.30 * np.sin(1.3 * math.pi * (p[:, 2] + p[:, 0])),
    ], axis=1)
    stripes = (np.floor(8.0 * (p[:, 0] + p[:, 1] + p[:, 2] + 1.5)) % 2)[:, None]
    color = np.clip(color * (0.8 + 0.2 * stripes) + 0.04 * rng.normal(3 * n).reshape(n, 3), 0.0, 1.0)
    opacity = np.clip(0.55 + 0.35 * rng.uniform(n), 0.02, 0.98)
    return means, scale, rot, opacity, color


def _blob(spec: SynthSpec, rng: SplitMix64):
    n = spec.gaussian_count
    d = rng.normal(3 * n).reshape(n, 3)
    d /= np.maximum(np.linalg.norm(d, axis=1, keepdims=True), 1e-12)
    r = (spec.extent / 2.0) * np.cbrt(rng.uniform(n))
    means = d * r[:, None]
    spacing = spec.extent / max(1.0, n ** (1.0 / 3.0))
    scale = math.log(0.5 * spacing) + 0.3 * rng.normal(3 * n).reshape(n, 3)
    rot = _quat_from_normals(rng, n, 1.0)
    color = rng.uniform(3 * n).reshape(n, 3)
    opacity = rng.uniform(n, 0.1, 0.95)
    return means, scale, rot, opacity, color


def _grid(spec: SynthSpec, rng: SplitMix64):
    n = spec.gaussian_count
    side = math.ceil(math.sqrt(n))
    step = spec.extent / (side - 1) if side > 1 else 0.0
    i = np.arange(n)
    means = np.stack([(i % side) * step - spec.extent / 2.0, (i // side) * step - spec.extent / 2.0, np.zeros(n)], axis=1)
    s = math.log(0.5 * step) if step > 0 else math.log(0.1 * spec.extent)
    scale = np.full((n, 3), s)
    scale[:, 2] = s - 2.0
    rot = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
    color = np.stack([(i % side) / max(1, side - 1), (i // side) / max(1, side - 1), np.full(n, 0.5)], axis=1)
    opacity = np.full(n, 0.9)
    return means, scale, rot, opacity, color


def make_scene(spec: SynthSpec) -> GaussianCloud:
    """Deterministic scene for ``spec`` (same spec -> bit-identical cloud)."""
    rng = SplitMix64(spec.seed)
    means, scale, rot, opacity, color = {"textured-room": _room, "random-blob": _blob, "planar-grid": _grid}[spec.kind](spec, rng)
    n = spec.gaussian_count
    rest = None
    if spec.sh_degree:
        rest = 0.05 * rng.normal(n * sh_rest_width(spec.sh_degree)).reshape(n, -1)
    return GaussianCloud(
        means=means,
        scale_log=scale,
        rotation=rot,
        opacity_logit=opacity_to_logit(opacity),
        sh_dc=(color - 0.5) / SH_C0,
        sh_rest=rest,
        sh_degree=spec.sh_degree,
    )


def look_at(position, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """World-to-camera matrix for a camera at ``position`` facing ``target``
    (camera +x right, +y down, +z forward)."""
    pos = np.asarray(position, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - pos
    fwd /= np.linalg.norm(fwd)
    up = np.asarray(up, dtype=np.float64)
    right = np.cross(fwd, up)
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(fwd, [0.0, 1.0, 0.0])
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    m = np.eye(4)
    m[0, :3], m[1, :3], m[2, :3] = right, down, fwd
    m[:3, 3] = -m[:3, :3] @ pos
    return m


def make_orbit_cameras(n: int, radius: float, target=(0.0, 0.0, 0.0), width: int = 64, height: int = 64,
                       fx: float = None, fy: float = None, cx: float = None, cy: float = None,
                       elevation: float = 0.0) -> list:
    """``n`` cameras evenly spaced on a horizontal (z-up) circle around ``target``,
    the first at angle 0 (+x side), all looking at ``target``."""
    if n < 1:
        raise InvalidParameterError("need at least one camera")
    if not radius > 0:
        raise InvalidParameterError("radius must be positive")
    fx = fx if fx is not None else 0.8 * width
    fy = fy if fy is not None else fx
    cx = cx if cx is not None else width / 2.0
    cy = cy if cy is not None else height / 2.0
    tgt = np.asarray(target, dtype=np.float64)
    cams = []
    for k in range(n):
        th = 2.0 * math.pi * k / n
        pos = tgt + np.array([radius * math.cos(th), radius * math.sin(th), elevation])
        cams.append(Camera(width, height, fx, fy, cx, cy, look_at(pos, tgt)))
    return cams
