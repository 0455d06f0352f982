"""CPU splat rasterizer: projection, tiled front-to-back alpha blending,
accumulated-opacity masks and per-Gaussian hit tallies.

Pixel (row r, col c) is sampled at image coordinates (c, r); a camera with
``cx = 32`` puts the principal point on the center of column 32.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _accel, _kernels
from .errors import InvalidParameterError
from .model import Camera, Gaussian, GaussianCloud, activate_covariance, activate_covariances, activate_opacity, sh_to_color

_TALLY_MODES = {None: _kernels.TALLY_OFF, "literal": _kernels.TALLY_LITERAL, "contribution": _kernels.TALLY_CONTRIBUTION}


@dataclass(frozen=True)
class RenderConfig:
    """Rasterization knobs.

    ``t_min`` is the early-termination transmittance: a pixel stops blending once
    T drops below it, so the truncated remainder is strictly below ``t_min``.
    """

    tile_size: int = 16
    alpha_min: float = 1.0 / 255.0
    alpha_max: float = 0.99
    t_min: float = 1e-5
    near: float = 0.01
    dilation: float = 0.3
    max_size: int = 4096
    tally: Optional[str] = None
    backend: Optional[str] = None  # "numba" | "numpy" | None (environment default)

    def __post_init__(self):
        if self.tally not in _TALLY_MODES:
            raise InvalidParameterError(f"unknown tally mode {self.tally!r}")
        if self.tile_size < 1:
            raise InvalidParameterError("tile_size must be positive")
        if self.backend not in (None, "numba", "numpy"):
            raise InvalidParameterError(f"unknown backend {self.backend!r}")


@dataclass(frozen=True)
class Splat2D:
    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: float
    gaussian_index: int


@dataclass
class RenderOutput:
    color: np.ndarray
    accum_opacity: np.ndarray
    hit_count: Optional[np.ndarray] = None
    score: Optional[np.ndarray] = None

    @property
    def per_gaussian_tally(self):
        if self.hit_count is None:
            return None
        return self.hit_count, self.score


def _clamp_tangents(x, y, z, cam: Camera):
    """Limit x/z, y/z to 1.3x the half field of view before linearising the
    projection; splats near the camera plane otherwise get unbounded footprints."""
    lim_x = 1.3 * 0.5 * cam.width / cam.fx
    lim_y = 1.3 * 0.5 * cam.height / cam.fy
    return np.clip(x / z, -lim_x, lim_x) * z, np.clip(y / z, -lim_y, lim_y) * z


def project_gaussian(g: Gaussian, cam: Camera, index: int = 0, near: float = 0.01,
                     dilation: float = 0.3) -> Optional[Splat2D]:
    """Project one Gaussian; ``None`` when it lies at or behind the near plane."""
    w = cam.rotation
    p = w @ np.asarray(g.mean, dtype=np.float64) + cam.translation
    x, y, z = p
    if z <= near:
        return None
    mean2d = np.array([cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy])
    x, y = _clamp_tangents(x, y, z, cam)
    jac = np.array([[cam.fx / z, 0.0, -cam.fx * x / (z * z)],
                    [0.0, cam.fy / z, -cam.fy * y / (z * z)]])
    t = jac @ w
    cov2d = t @ activate_covariance(g) @ t.T
    cov2d = 0.5 * (cov2d + cov2d.T) + dilation * np.eye(2)
    return Splat2D(mean2d, cov2d, float(z), index)


@dataclass
class _Projected:
    index: np.ndarray
    mean2d: np.ndarray
    conic: np.ndarray
    depth: np.ndarray
    opacity: np.ndarray
    color: np.ndarray
    x0: np.ndarray
    x1: np.ndarray
    y0: np.ndarray
    y1: np.ndarray


def _project_all(cloud: GaussianCloud, cam: Camera, cfg: RenderConfig) -> _Projected:
    """Vectorised projection, culling, depth sort and tile extents."""
    ts = cfg.tile_size
    tiles_x = -(-cam.width // ts)
    tiles_y = -(-cam.height // ts)
    means = cloud.means.astype(np.float64)
    pc = means @ cam.rotation.T + cam.translation
    opac = activate_opacity(cloud.opacity_logit) if cloud.count else np.zeros(0)
    # alpha <= opacity, so splats below the alpha floor never contribute
    keep = (pc[:, 2] > cfg.near) & (opac >= cfg.alpha_min)
    idx = np.nonzero(keep)[0]
    pc = pc[idx]
    x, y, z = pc[:, 0], pc[:, 1], pc[:, 2]
    mx = cam.fx * x / z + cam.cx
    my = cam.fy * y / z + cam.cy
    x, y = _clamp_tangents(x, y, z, cam)
    cov3 = activate_covariances(cloud.scale_log[idx], cloud.rotation[idx])
    jac = np.zeros((idx.size, 2, 3))
    jac[:, 0, 0] = cam.fx / z
    jac[:, 0, 2] = -cam.fx * x / (z * z)
    jac[:, 1, 1] = cam.fy / z
    jac[:, 1, 2] = -cam.fy * y / (z * z)
    t = jac @ cam.rotation
    cov2 = t @ cov3 @ t.transpose(0, 2, 1)
    a = cov2[:, 0, 0] + cfg.dilation
    b = 0.5 * (cov2[:, 0, 1] + cov2[:, 1, 0])
    c = cov2[:, 1, 1] + cfg.dilation
    det = a * c - b * b
    conic = np.stack([c / det, -b / det, a / det], axis=1)
    # alpha >= alpha_min needs d^T cov^-1 d <= 2 ln(opacity / alpha_min);
    # d^T cov^-1 d >= |d|^2 / lambda_max bounds the reach by a circle
    lam_max = 0.5 * (a + c) + np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b * b, 0.0))
    reach = np.sqrt(lam_max * 2.0 * np.log(np.maximum(opac[idx] / cfg.alpha_min, 1.0))) + 1.0
    x0 = np.floor((mx - reach) / ts)
    x1 = np.floor((mx + reach) / ts)
    y0 = np.floor((my - reach) / ts)
    y1 = np.floor((my + reach) / ts)
    vis = (x1 >= 0) & (x0 <= tiles_x - 1) & (y1 >= 0) & (y0 <= tiles_y - 1) & (det > 0) & np.isfinite(det)
    order = np.nonzero(vis)[0]
    order = order[np.lexsort((idx[order], z[order]))]
    return _Projected(
        index=idx[order],
        mean2d=np.ascontiguousarray(np.stack([mx, my], axis=1)[order]),
        conic=np.ascontiguousarray(conic[order]),
        depth=z[order],
        opacity=np.ascontiguousarray(opac[idx][order]),
        color=np.ascontiguousarray(sh_to_color(cloud.sh_dc[idx[order]])),
        x0=np.clip(x0[order], 0, tiles_x - 1).astype(np.int64),
        x1=np.clip(x1[order], 0, tiles_x - 1).astype(np.int64),
        y0=np.clip(y0[order], 0, tiles_y - 1).astype(np.int64),
        y1=np.clip(y1[order], 0, tiles_y - 1).astype(np.int64),
    )


def _check_camera(cam: Camera, cfg: RenderConfig) -> None:
    if cam.width <= 0 or cam.height <= 0:
        raise InvalidParameterError("zero-area image")
    if cam.width > cfg.max_size or cam.height > cfg.max_size:
        raise InvalidParameterError(f"image {cam.width}x{cam.height} exceeds max size {cfg.max_size}")


def _use_numba(cfg: RenderConfig) -> bool:
    if cfg.backend is None:
        return _accel.USE_NUMBA
    if cfg.backend == "numba" and not _accel.HAVE_NUMBA:
        raise InvalidParameterError("numba backend requested but numba is not installed")
    return cfg.backend == "numba"


def render(cloud: GaussianCloud, cam: Camera, cfg: RenderConfig = RenderConfig(),
           workers: Optional[int] = None) -> RenderOutput:
    """Tiled front-to-back render over a black background.

    With ``cfg.tally`` set, the tile loop runs single-threaded so that the
    per-Gaussian accumulators are summed in a fixed order; otherwise tile rows
    are spread over ``workers`` threads (default ``EXGS_THREADS``), each
    writing disjoint pixels.
    """
    _check_camera(cam, cfg)
    h, w = cam.height, cam.width
    ts = cfg.tile_size
    tiles_x = -(-w // ts)
    tiles_y = -(-h // ts)
    n_tiles = tiles_x * tiles_y
    mode = _TALLY_MODES[cfg.tally]
    proj = _project_all(cloud, cam, cfg)
    numba_path = _use_numba(cfg)
    binner = _kernels.bin_splats_nb if numba_path else _kernels.bin_splats_np
    raster = _kernels.raster_tiles_nb if numba_path else _kernels.raster_tiles_np
    offsets, ids = binner(proj.x0, proj.x1, proj.y0, proj.y1, tiles_x, n_tiles)

    out_color = np.zeros((h, w, 3))
    out_t = np.ones((h, w))
    k = proj.index.size
    hits = np.zeros(k if mode else 0, np.int64)
    acc = np.zeros(k if mode else 0, np.float64)

    def run(t0, t1):
        raster(t0, t1, tiles_x, ts, w, h, offsets, ids, proj.mean2d, proj.conic, proj.opacity,
               proj.color, cfg.alpha_min, cfg.alpha_max, cfg.t_min, mode, out_color, out_t, hits, acc)

    nworkers = _accel.worker_count() if workers is None else max(1, int(workers))
    if mode or nworkers == 1 or tiles_y == 1 or k == 0:
        run(0, n_tiles)
    else:
        bounds = np.linspace(0, tiles_y, min(nworkers * 4, tiles_y) + 1).astype(int)
        with ThreadPoolExecutor(nworkers) as pool:
            list(pool.map(lambda r: run(r[0] * tiles_x, r[1] * tiles_x), zip(bounds[:-1], bounds[1:])))

    out = RenderOutput(color=out_color, accum_opacity=1.0 - out_t)
    if mode:
        out.hit_count = np.zeros(cloud.count, np.int64)
        out.score = np.zeros(cloud.count, np.float64)
        out.hit_count[proj.index] = hits
        out.score[proj.index] = acc
    return out


def render_reference(cloud: GaussianCloud, cam: Camera, cfg: RenderConfig = RenderConfig()) -> RenderOutput:
    """Naive oracle: every depth-sorted splat evaluated at every pixel, no tiling,
    no extent culling, no early termination. Tallies follow ``cfg.tally``."""
    _check_camera(cam, cfg)
    h, w = cam.height, cam.width
    splats = []
    for i in range(cloud.count):
        s = project_gaussian(cloud[i], cam, i, cfg.near, cfg.dilation)
        if s is not None:
            splats.append(s)
    splats.sort(key=lambda s: (s.depth, s.gaussian_index))
    py, px = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    T = np.ones((h, w))
    color = np.zeros((h, w, 3))
    hits = np.zeros(cloud.count, np.int64)
    score = np.zeros(cloud.count)
    for s in splats:
        g = cloud[s.gaussian_index]
        sigma = activate_opacity(g.opacity_logit)
        inv = np.linalg.inv(s.cov2d)
        dx = px - s.mean2d[0]
        dy = py - s.mean2d[1]
        q = inv[0, 0] * dx * dx + (inv[0, 1] + inv[1, 0]) * dx * dy + inv[1, 1] * dy * dy
        a = np.minimum(sigma * np.exp(-0.5 * q), cfg.alpha_max)
        a = np.where(a >= cfg.alpha_min, a, 0.0)
        wgt = a * T
        color += wgt[..., None] * sh_to_color(g.sh_dc)[None, None, :]
        hit = a > 0
        hits[s.gaussian_index] += int(hit.sum())
        if cfg.tally == "literal":
            score[s.gaussian_index] += float((sigma * T)[hit].sum())
        elif cfg.tally == "contribution":
            score[s.gaussian_index] += float(wgt[hit].sum())
        T = T * (1.0 - a)
    out = RenderOutput(color=color, accum_opacity=1.0 - T)
    if cfg.tally:
        out.hit_count, out.score = hits, score
    return out


def render_visibility_mask(cloud: GaussianCloud, cam: Camera, cfg: RenderConfig = RenderConfig()) -> np.ndarray:
    """Accumulated-opacity mask in [0, 1]; high = well covered, low = needs completion."""
    acc = render(cloud, cam, cfg).accum_opacity
    peak = float(acc.max()) if acc.size else 0.0
    if peak <= 0.0:
        return np.zeros_like(acc)
    return np.clip(acc, 0.0, 1.0)


def image_to_uint8(img: np.ndarray) -> np.ndarray:
    """Quantize [0, 1] floats to 8 bits, rounding half away from zero."""
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
