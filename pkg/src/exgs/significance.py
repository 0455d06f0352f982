"""Global significance scores: per-Gaussian importance summed over every ray of
every view.

A ray credits Gaussian j when j's evaluated alpha at that pixel reaches the
blending floor (1/255) and the ray has not already terminated (T < 1e-4). The
credit is ``opacity_j * T`` in ``literal`` mode and ``alpha_ij * T`` in
``contribution`` mode, where T is the transmittance left by nearer splats.
"""

from __future__ import annotations

import csv
import io
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import _accel
from .errors import FormatError, InvalidParameterError
from .model import Camera, GaussianCloud, activate_opacity
from .rasterizer import RenderConfig, project_gaussian, render

MODES = ("literal", "contribution")
SCORING_CONFIG = RenderConfig(t_min=1e-4)


@dataclass
class SignificanceVector:
    scores: np.ndarray
    views_used: int
    scoring_mode: str = "literal"
    hit_count: Optional[np.ndarray] = None

    def __len__(self):
        return self.scores.shape[0]


def _check(cameras, mode):
    if mode not in MODES:
        raise InvalidParameterError(f"unknown scoring mode {mode!r}")
    if len(cameras) == 0:
        raise InvalidParameterError("at least one camera is required")


def compute_significance(cloud: GaussianCloud, cameras: Sequence[Camera], mode: str = "literal",
                         cfg: RenderConfig = SCORING_CONFIG, workers: Optional[int] = None) -> SignificanceVector:
    """Score every Gaussian over all pixels of all ``cameras``.

    Views run concurrently; per-view float64 vectors are summed in view order,
    so the result does not depend on the worker count.
    """
    _check(cameras, mode)
    cfg = replace(cfg, tally=mode)
    nworkers = _accel.worker_count() if workers is None else max(1, int(workers))

    def one(cam):
        out = render(cloud, cam, cfg, workers=1)
        return out.score, out.hit_count

    if nworkers == 1 or len(cameras) == 1:
        per_view = [one(c) for c in cameras]
    else:
        with ThreadPoolExecutor(min(nworkers, len(cameras))) as pool:
            per_view = list(pool.map(one, cameras))
    total = np.zeros(cloud.count)
    hits = np.zeros(cloud.count, np.int64)
    for s, h in per_view:
        total += s
        hits += h
    return SignificanceVector(total.astype(np.float32), len(cameras), mode, hits)


def compute_significance_oracle(cloud: GaussianCloud, cameras: Sequence[Camera], mode: str = "literal",
                                cfg: RenderConfig = SCORING_CONFIG) -> SignificanceVector:
    """Exhaustive (view, pixel, splat) enumeration in plain Python. Test oracle."""
    _check(cameras, mode)
    total = [0.0] * cloud.count
    hits = [0] * cloud.count
    for cam in cameras:
        splats = []
        for j in range(cloud.count):
            g = cloud[j]
            s = project_gaussian(g, cam, j, cfg.near, cfg.dilation)
            if s is None:
                continue
            inv = np.linalg.inv(s.cov2d)
            splats.append((s.depth, j, float(s.mean2d[0]), float(s.mean2d[1]), float(inv[0, 0]),
                           float(inv[0, 1] + inv[1, 0]), float(inv[1, 1]), float(activate_opacity(g.opacity_logit))))
        splats.sort(key=lambda t: (t[0], t[1]))
        for py in range(cam.height):
            for px in range(cam.width):
                T = 1.0
                terminated = False
                for _, j, mx, my, ia, ib, ic, sigma in splats:
                    dx = px - mx
                    dy = py - my
                    a = min(cfg.alpha_max, sigma * math.exp(-0.5 * (ia * dx * dx + ib * dx * dy + ic * dy * dy)))
                    if a < cfg.alpha_min or terminated:
                        continue
                    total[j] += (sigma if mode == "literal" else a) * T
                    hits[j] += 1
                    T *= 1.0 - a
                    if T < cfg.t_min:
                        terminated = True
    return SignificanceVector(np.asarray(total, np.float64).astype(np.float32), len(cameras), mode,
                              np.asarray(hits, np.int64))


def scores_to_bytes(sv: SignificanceVector) -> bytes:
    """u32 LE count followed by count float32 LE scores."""
    s = np.asarray(sv.scores, dtype="<f4")
    return struct.pack("<I", s.shape[0]) + s.tobytes()


def scores_from_bytes(data: bytes, mode: str = "literal") -> SignificanceVector:
    if len(data) < 4:
        raise FormatError("score file shorter than its 4-byte header")
    (n,) = struct.unpack_from("<I", data)
    if len(data) != 4 + 4 * n:
        raise FormatError(f"score file declares {n} scores but has {len(data) - 4} payload bytes")
    return SignificanceVector(np.frombuffer(data, "<f4", n, 4).astype(np.float32), 0, mode)


def scores_to_csv(sv: SignificanceVector) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "score"])
    for i, s in enumerate(sv.scores.tolist()):
        w.writerow([i, repr(float(np.float32(s)))])
    return buf.getvalue()
