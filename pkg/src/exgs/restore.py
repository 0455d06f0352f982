"""Mask-guided harmonic hole filling (classical stand-in for a learned restorer).

Pixels whose mask value reaches ``fill_threshold`` are kept verbatim and act
as Dirichlet boundary; the others relax toward the mean of their in-image
4-neighbours by Jacobi sweeps.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import _accel
from ._accel import njit
from .errors import InvalidParameterError


class NoBoundaryWarning(UserWarning):
    pass


@dataclass(frozen=True)
class RestoreRequest:
    degraded: np.ndarray
    mask: np.ndarray
    fill_threshold: float = 0.5
    iterations: int = 200

    def __post_init__(self):
        d = np.asarray(self.degraded)
        m = np.asarray(self.mask)
        if d.ndim != 3 or d.shape[2] != 3:
            raise InvalidParameterError("degraded image must be H x W x 3")
        if m.shape != d.shape[:2]:
            raise InvalidParameterError(f"mask shape {m.shape} does not match image {d.shape[:2]}")
        if not (0.0 < self.fill_threshold < 1.0):
            raise InvalidParameterError("fill_threshold must lie in (0, 1)")
        if self.iterations < 1:
            raise InvalidParameterError("iterations must be positive")


def _neighbour_count(h: int, w: int) -> np.ndarray:
    n = np.full((h, w), 4.0)
    n[0, :] -= 1
    n[-1, :] -= 1
    n[:, 0] -= 1
    n[:, -1] -= 1
    return n


def _jacobi_np(img, hole, iterations):
    h, w, _ = img.shape
    inv_n = (1.0 / _neighbour_count(h, w))[..., None]
    cur = img
    for _ in range(iterations):
        s = np.zeros_like(cur)
        s[1:] += cur[:-1]
        s[:-1] += cur[1:]
        s[:, 1:] += cur[:, :-1]
        s[:, :-1] += cur[:, 1:]
        cur = np.where(hole[..., None], s * inv_n, cur)
    return cur


@njit
def _jacobi_nb(img, hole, iterations):
    h, w, ch = img.shape
    cur = img.copy()
    nxt = img.copy()
    ys, xs = np.nonzero(hole)
    for _ in range(iterations):
        for k in range(ys.shape[0]):
            y = ys[k]
            x = xs[k]
            for c in range(ch):
                s = 0.0
                n = 0.0
                if y > 0:
                    s += cur[y - 1, x, c]
                    n += 1.0
                if y < h - 1:
                    s += cur[y + 1, x, c]
                    n += 1.0
                if x > 0:
                    s += cur[y, x - 1, c]
                    n += 1.0
                if x < w - 1:
                    s += cur[y, x + 1, c]
                    n += 1.0
                nxt[y, x, c] = s / n
        cur, nxt = nxt, cur
    return cur


def inpaint_baseline(req: RestoreRequest, backend=None) -> np.ndarray:
    """Fill untrusted pixels harmonically; trusted pixels are returned bit-identical."""
    degraded = np.asarray(req.degraded, dtype=np.float64)
    trusted = np.asarray(req.mask, dtype=np.float64) >= req.fill_threshold
    hole = ~trusted
    if not hole.any():
        return degraded.copy()
    if not trusted.any():
        warnings.warn("no trusted pixels to fill from; image returned unchanged", NoBoundaryWarning, stacklevel=2)
        return degraded.copy()
    # start holes at the per-channel mean of trusted pixels
    start = degraded.copy()
    start[hole] = degraded[trusted].mean(axis=0)
    use_nb = _accel.USE_NUMBA if backend is None else backend == "numba"
    filled = _jacobi_nb(start, hole, int(req.iterations)) if use_nb else _jacobi_np(start, hole, int(req.iterations))
    out = np.where(hole[..., None], np.clip(filled, 0.0, 1.0), degraded)
    return out
