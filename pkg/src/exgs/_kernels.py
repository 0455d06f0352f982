"""Hot loops of the tiled rasterizer: tile binning and per-tile blending.

Each kernel exists twice: a loop version compiled by numba (``*_nb``) and a
vectorised numpy version (``*_np``). :mod:`exgs.rasterizer` picks one through
:data:`exgs._accel.USE_NUMBA`. Splat arrays passed in are already sorted
front-to-back, so splat id order is blend order.

Tally modes: 0 = off, 1 = literal (opacity * transmittance), 2 = contribution
(alpha * transmittance).
"""

import math

import numpy as np

from ._accel import njit

TALLY_OFF, TALLY_LITERAL, TALLY_CONTRIBUTION = 0, 1, 2


# -- binning ----------------------------------------------------------------


@njit
def bin_splats_nb(x0, x1, y0, y1, tiles_x, n_tiles):
    counts = np.zeros(n_tiles + 1, np.int64)
    k = x0.shape[0]
    for s in range(k):
        for ty in range(y0[s], y1[s] + 1):
            for tx in range(x0[s], x1[s] + 1):
                counts[ty * tiles_x + tx + 1] += 1
    offsets = np.cumsum(counts)
    fill = offsets[:-1].copy()
    ids = np.empty(offsets[-1], np.int64)
    for s in range(k):
        for ty in range(y0[s], y1[s] + 1):
            for tx in range(x0[s], x1[s] + 1):
                t = ty * tiles_x + tx
                ids[fill[t]] = s
                fill[t] += 1
    return offsets, ids


def bin_splats_np(x0, x1, y0, y1, tiles_x, n_tiles):
    w = (x1 - x0 + 1).astype(np.int64)
    h = (y1 - y0 + 1).astype(np.int64)
    per = w * h
    total = int(per.sum())
    splat = np.repeat(np.arange(x0.shape[0], dtype=np.int64), per)
    start = np.cumsum(per) - per
    local = np.arange(total, dtype=np.int64) - np.repeat(start, per)
    ww = w[splat]
    tile = (y0[splat] + local // ww) * tiles_x + (x0[splat] + local % ww)
    # stable sort keeps depth order within each tile
    order = np.argsort(tile, kind="stable")
    offsets = np.zeros(n_tiles + 1, np.int64)
    offsets[1:] = np.cumsum(np.bincount(tile, minlength=n_tiles))
    return offsets, splat[order]


# -- blending ---------------------------------------------------------------


@njit
def raster_tiles_nb(tile_begin, tile_end, tiles_x, tile, width, height, offsets, ids,
                    mean2d, conic, opac, color, alpha_min, alpha_max, t_min, mode,
                    out_color, out_t, hits, acc):
    for t in range(tile_begin, tile_end):
        tx = t % tiles_x
        ty = t // tiles_x
        s0 = offsets[t]
        s1 = offsets[t + 1]
        for py in range(ty * tile, min((ty + 1) * tile, height)):
            for px in range(tx * tile, min((tx + 1) * tile, width)):
                T = 1.0
                cr = 0.0
                cg = 0.0
                cb = 0.0
                for q in range(s0, s1):
                    s = ids[q]
                    dx = px - mean2d[s, 0]
                    dy = py - mean2d[s, 1]
                    power = -0.5 * (conic[s, 0] * dx * dx + conic[s, 2] * dy * dy) - conic[s, 1] * dx * dy
                    a = opac[s] * math.exp(power)
                    if a > alpha_max:
                        a = alpha_max
                    if a < alpha_min:
                        continue
                    w = a * T
                    cr += color[s, 0] * w
                    cg += color[s, 1] * w
                    cb += color[s, 2] * w
                    if mode == 1:
                        acc[s] += opac[s] * T
                        hits[s] += 1
                    elif mode == 2:
                        acc[s] += w
                        hits[s] += 1
                    T = T * (1.0 - a)
                    if T < t_min:
                        break
                out_color[py, px, 0] = cr
                out_color[py, px, 1] = cg
                out_color[py, px, 2] = cb
                out_t[py, px] = T


_CHUNK = 256


def raster_tiles_np(tile_begin, tile_end, tiles_x, tile, width, height, offsets, ids,
                    mean2d, conic, opac, color, alpha_min, alpha_max, t_min, mode,
                    out_color, out_t, hits, acc):
    for t in range(tile_begin, tile_end):
        tx = t % tiles_x
        ty = t // tiles_x
        ys = np.arange(ty * tile, min((ty + 1) * tile, height))
        xs = np.arange(tx * tile, min((tx + 1) * tile, width))
        py, px = np.meshgrid(ys, xs, indexing="ij")
        py = py.ravel().astype(np.float64)
        px = px.ravel().astype(np.float64)
        T = np.ones(py.shape[0])
        rgb = np.zeros((py.shape[0], 3))
        sel = ids[offsets[t]:offsets[t + 1]]
        for c0 in range(0, sel.shape[0], _CHUNK):
            if not np.any(T >= t_min):
                break
            s = sel[c0:c0 + _CHUNK]
            dx = px[:, None] - mean2d[s, 0][None, :]
            dy = py[:, None] - mean2d[s, 1][None, :]
            power = -0.5 * (conic[s, 0] * dx * dx + conic[s, 2] * dy * dy) - conic[s, 1] * dx * dy
            a = np.minimum(opac[s] * np.exp(power), alpha_max)
            valid = a >= alpha_min
            factor = np.where(valid, 1.0 - a, 1.0)
            cp = np.cumprod(factor, axis=1)
            t_before = np.empty_like(cp)
            t_before[:, 0] = T
            t_before[:, 1:] = T[:, None] * cp[:, :-1]
            live = valid & (t_before >= t_min)
            w = np.where(live, a * t_before, 0.0)
            rgb += w @ color[s]
            T = T * np.prod(np.where(live, factor, 1.0), axis=1)
            if mode == 1:
                np.add.at(acc, s, (live * t_before).sum(axis=0) * opac[s])
                np.add.at(hits, s, live.sum(axis=0))
            elif mode == 2:
                np.add.at(acc, s, w.sum(axis=0))
                np.add.at(hits, s, live.sum(axis=0))
        out_color[ys[0]:ys[-1] + 1, xs[0]:xs[-1] + 1] = rgb.reshape(len(ys), len(xs), 3)
        out_t[ys[0]:ys[-1] + 1, xs[0]:xs[-1] + 1] = T.reshape(len(ys), len(xs))
