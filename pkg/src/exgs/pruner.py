"""Voxel-guaranteed pruning and opacity amplification of the survivors."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import FormatError, InvalidParameterError
from .model import GaussianCloud, activate_opacity
from .significance import SignificanceVector

BUDGET_MODES = ("exact", "guaranteed-over")


@dataclass
class VoxelIndex:
    voxel_size: float
    origin: np.ndarray
    coords: np.ndarray  # (N, 3) int64 voxel coordinate per Gaussian
    labels: np.ndarray  # (N,) dense voxel id per Gaussian, ids ordered lexicographically by coordinate
    _buckets: Optional[Dict[Tuple[int, int, int], List[int]]] = field(default=None, repr=False)

    @property
    def n_voxels(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def buckets(self) -> Dict[Tuple[int, int, int], List[int]]:
        if self._buckets is None:
            b: Dict[Tuple[int, int, int], List[int]] = {}
            for i, key in enumerate(map(tuple, self.coords.tolist())):
                b.setdefault(key, []).append(i)
            self._buckets = b
        return self._buckets


@dataclass(frozen=True)
class PruneConfig:
    ratio: float
    voxel_size: Optional[float] = None  # None = auto
    min_count: int = 4
    budget_mode: str = "exact"
    auto_divisions: int = 64

    def __post_init__(self):
        if not (0.0 < self.ratio <= 1.0):
            raise InvalidParameterError(f"ratio must lie in (0, 1], got {self.ratio}")
        if self.voxel_size is not None and not self.voxel_size > 0:
            raise InvalidParameterError("voxel_size must be positive")
        if self.min_count < 1:
            raise InvalidParameterError("min_count must be >= 1")
        if self.budget_mode not in BUDGET_MODES:
            raise InvalidParameterError(f"unknown budget mode {self.budget_mode!r}")


def auto_voxel_size(cloud: GaussianCloud, divisions: int = 64) -> float:
    """Longest bounding-box edge / ``divisions`` (1.0 for degenerate extents)."""
    if cloud.count == 0:
        return 1.0
    ext = cloud.means.astype(np.float64).max(axis=0) - cloud.means.astype(np.float64).min(axis=0)
    longest = float(ext.max())
    return longest / divisions if longest > 0 else 1.0


def voxelize(cloud: GaussianCloud, v: float) -> VoxelIndex:
    if not v > 0:
        raise InvalidParameterError(f"voxel size must be positive, got {v}")
    if cloud.count == 0:
        raise InvalidParameterError("cannot voxelize an empty cloud")
    means = cloud.means.astype(np.float64)
    origin = means.min(axis=0)
    coords = np.floor((means - origin) / v).astype(np.int64)
    _, labels = np.unique(coords, axis=0, return_inverse=True)
    return VoxelIndex(float(v), origin, coords, labels.reshape(-1).astype(np.int64))


def _rank_order(scores: np.ndarray) -> np.ndarray:
    """Indices by descending score, ties to the lower index."""
    return np.lexsort((np.arange(scores.shape[0]), -scores.astype(np.float64)))


def select(scores: np.ndarray, labels: np.ndarray, ratio: float, min_count: int, budget_mode: str):
    """Core selection on precomputed voxel labels. Returns (kept mask, guaranteed mask)."""
    n = scores.shape[0]
    order = _rank_order(scores)
    lab = labels[order]
    # position of each Gaussian inside its voxel's descending-score list
    grp = np.argsort(lab, kind="stable")
    sizes = np.bincount(labels, minlength=int(labels.max()) + 1 if n else 0)
    starts = np.cumsum(sizes) - sizes
    rank_in_voxel = np.empty(n, np.int64)
    rank_in_voxel[grp] = np.arange(n) - starts[lab[grp]]
    k = np.floor(sizes * ratio).astype(np.int64)
    sufficient = sizes >= min_count
    k = np.where(sufficient, np.maximum(k, 1), k)

    kept = np.zeros(n, bool)
    guaranteed = np.zeros(n, bool)
    kept[order] = rank_in_voxel < k[lab]
    guaranteed[order] = (rank_in_voxel == 0) & sufficient[lab]

    budget = int(np.floor(ratio * n))
    count = int(kept.sum())
    if count < budget:
        fill = order[~kept[order]][: budget - count]
        kept[fill] = True
    elif count > budget and budget_mode == "exact":
        removable = order[kept[order] & ~guaranteed[order]][::-1]
        excess = count - max(budget, int(guaranteed.sum()))
        kept[removable[:excess]] = False
    return kept, guaranteed


def prune(cloud: GaussianCloud, scores, cfg: PruneConfig, index: Optional[VoxelIndex] = None):
    """Keep globally important Gaussians while every populated voxel keeps one.

    Returns ``(pruned_cloud, kept_indices)`` with indices sorted ascending.
    """
    s = np.asarray(scores.scores if isinstance(scores, SignificanceVector) else scores, dtype=np.float64)
    if s.shape != (cloud.count,):
        raise InvalidParameterError(f"{s.shape[0] if s.ndim else 0} scores for {cloud.count} Gaussians")
    if cloud.count == 0:
        return cloud, np.zeros(0, np.int64)
    if index is None:
        v = cfg.voxel_size if cfg.voxel_size is not None else auto_voxel_size(cloud, cfg.auto_divisions)
        index = voxelize(cloud, v)
    kept, _ = select(s, index.labels, cfg.ratio, cfg.min_count, cfg.budget_mode)
    kept_idx = np.nonzero(kept)[0].astype(np.int64)
    return cloud.subset(kept_idx), kept_idx


# logit above which float64 sigmoid still stays strictly below 1
_LOGIT_CEIL = 30.0


def _removed_ratio(kept_idx, index: VoxelIndex) -> np.ndarray:
    """removed/max(1, kept) in each kept Gaussian's voxel."""
    labels = index.labels
    nv = index.n_voxels
    total = np.bincount(labels, minlength=nv)
    kept_per = np.bincount(labels[kept_idx], minlength=nv)
    r = (total - kept_per) / np.maximum(1, kept_per)
    return r[labels[kept_idx]]


def amplify(cloud: GaussianCloud, kept, index: VoxelIndex, lam: float) -> GaussianCloud:
    """Raise the opacity of retained Gaussians to cover removed neighbours.

    ``cloud`` is the pruned cloud (aligned with ``kept``), ``index`` the voxel
    index of the original cloud. New opacity is ``1 - (1 - o)**e`` with
    ``e = 1 + lam * removed/kept`` in the Gaussian's voxel, evaluated in log
    space and stored back as a logit.
    """
    if lam < 0:
        raise InvalidParameterError("amplification lambda must be non-negative")
    kept = np.asarray(kept, dtype=np.int64)
    if kept.size == 0:
        raise InvalidParameterError("nothing retained to amplify")
    if kept.size != cloud.count:
        raise InvalidParameterError("kept indices do not match the pruned cloud")
    if lam == 0:
        return cloud
    boost = lam * _removed_ratio(kept, index)
    up = boost > 0
    logit = cloud.opacity_logit.astype(np.float64)
    log_keep = (1.0 + boost) * -np.logaddexp(0.0, logit)  # e * log(1 - sigma)
    with np.errstate(divide="ignore"):
        new_logit = np.log(-np.expm1(log_keep)) - log_keep
    new_logit = np.where(up, np.minimum(new_logit, np.maximum(_LOGIT_CEIL, logit)), logit)
    out = new_logit.astype(np.float32)
    # float32 storage can round a tiny increase away; nudge until the activated opacity moves
    before = activate_opacity(cloud.opacity_logit.astype(np.float64))
    for i in np.nonzero(up & (activate_opacity(out.astype(np.float64)) <= before))[0]:
        step = max(float(np.spacing(np.float32(logit[i]))), 1e-15)
        while activate_opacity(float(np.float32(logit[i] + step))) <= before[i] and step < 1.0:
            step *= 2.0
        out[i] = np.float32(logit[i] + step)
    return cloud.replace(opacity_logit=out)


def kept_to_bytes(kept) -> bytes:
    k = np.asarray(kept, dtype="<u4")
    return struct.pack("<I", k.shape[0]) + k.tobytes()


def kept_from_bytes(data: bytes) -> np.ndarray:
    if len(data) < 4:
        raise FormatError("kept-index file shorter than its header")
    (n,) = struct.unpack_from("<I", data)
    if len(data) != 4 + 4 * n:
        raise FormatError("kept-index file length does not match its count")
    return np.frombuffer(data, "<u4", n, 4).astype(np.int64)
