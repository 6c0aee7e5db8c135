"""Descriptor-space neighbour search and g2NN matching."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .features import DescriptorSet

log = logging.getLogger(__name__)

_CHUNK = 256


@dataclass
class NeighborLists:
    """Per-keypoint nearest neighbours, padded with index -1 / distance inf."""

    indices: np.ndarray  # N x k int
    distances: np.ndarray  # N x k float

    def row(self, i: int):
        ok = self.indices[i] >= 0
        return self.indices[i][ok], self.distances[i][ok]


@dataclass
class MatchSet:
    """Matched points with their K-slot neighbour lists and matching weights.

    Row ``r`` describes keypoint ``matched_indices[r]``. Slots past the end of a
    short neighbour list hold index -1, distance inf and alpha 0.
    """

    matched_indices: np.ndarray  # Np
    neighbors: np.ndarray  # Np x K
    distances: np.ndarray  # Np x K, Euclidean descriptor distance
    alpha: np.ndarray  # Np x K
    accepted: np.ndarray  # Np, number of neighbours accepted by g2NN

    def __len__(self) -> int:
        return len(self.matched_indices)

    @property
    def valid(self) -> np.ndarray:
        return self.neighbors >= 0

    @property
    def dd(self) -> np.ndarray:
        """Squared descriptor distances, 0 in padded slots."""
        return np.where(self.valid, self.distances, 0.0) ** 2

    @property
    def k(self) -> int:
        return self.neighbors.shape[1]

    def to_json(self) -> list:
        out = []
        for r, src in enumerate(self.matched_indices):
            ok = self.valid[r]
            out.append({
                "source_index": int(src),
                "neighbor_indices": [int(v) for v in self.neighbors[r][ok]],
                "descriptor_distances": [float(v) for v in self.distances[r][ok]],
                "alpha_row": [float(v) for v in self.alpha[r][ok]],
            })
        return out

    def dump_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))


def empty_matchset(k: int) -> MatchSet:
    return MatchSet(
        matched_indices=np.zeros(0, dtype=int),
        neighbors=np.zeros((0, k), dtype=int),
        distances=np.zeros((0, k)),
        alpha=np.zeros((0, k)),
        accepted=np.zeros(0, dtype=int),
    )


def _search_rows(des, pos, rows, k, min_spatial_dist):
    d = cdist(des[rows], des)
    sp = cdist(pos[rows], pos)
    d[sp < min_spatial_dist] = np.inf
    d[np.arange(len(rows)), rows] = np.inf
    # stable sort: equal distances keep ascending index order
    order = np.argsort(d, axis=1, kind="stable")[:, :k]
    dist = np.take_along_axis(d, order, axis=1)
    order = np.where(np.isfinite(dist), order, -1)
    return order, dist


def knn_descriptor_search(ds: DescriptorSet, k: int, min_spatial_dist: float = 10.0,
                          threads: int = 1) -> NeighborLists:
    """Exact k nearest descriptor neighbours, skipping spatially close points.

    Neighbours with image-space distance strictly below ``min_spatial_dist``
    (and the point itself) are not eligible. Lists shorter than ``k`` are padded.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    n = len(ds)
    if n == 0:
        return NeighborLists(np.zeros((0, k), dtype=int), np.zeros((0, k)))
    des, pos = ds.descriptors, ds.positions
    kk = min(k, n)
    chunks = [np.arange(s, min(s + _CHUNK, n)) for s in range(0, n, _CHUNK)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda r: _search_rows(des, pos, r, kk, min_spatial_dist), chunks))
    else:
        parts = [_search_rows(des, pos, r, kk, min_spatial_dist) for r in chunks]
    idx = np.vstack([p[0] for p in parts])
    dist = np.vstack([p[1] for p in parts])
    if kk < k:
        idx = np.hstack([idx, -np.ones((n, k - kk), dtype=int)])
        dist = np.hstack([dist, np.full((n, k - kk), np.inf)])
    return NeighborLists(idx, dist)


def g2nn_accept_count(distances: np.ndarray, threshold: float) -> int:
    """Number of leading neighbours accepted by the generalized 2NN ratio test.

    Neighbour ``i`` is accepted while ``d_i / d_{i+1} < threshold``; the walk
    stops at the first violation or when ``d_{i+1}`` is unavailable. A zero
    ``d_{i+1}`` counts as ratio 0.
    """
    d = distances[np.isfinite(distances)]
    n = 0
    for i in range(len(d) - 1):
        if d[i + 1] == 0.0:
            log.debug("zero descriptor distance at neighbour %d, ratio taken as 0", i + 2)
            ratio = 0.0
        else:
            ratio = d[i] / d[i + 1]
        if ratio < threshold:
            n += 1
        else:
            break
    return n


def g2nn_match(ds: DescriptorSet, threshold: float = 0.7, k: int = 3,
               min_spatial_dist: float = 10.0, threads: int = 1) -> MatchSet:
    """Match keypoints with g2NN and initialise one-hot matching weights.

    A keypoint becomes a matched point when at least its first neighbour is
    accepted. Its row keeps the ``k`` nearest descriptor neighbours, with
    alpha 1 on the nearest and 0 elsewhere.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"g2NN threshold must lie in (0, 1), got {threshold}")
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(ds) < 2:
        return empty_matchset(k)
    # one extra neighbour so the ratio test can reach slot k
    nb = knn_descriptor_search(ds, k + 1, min_spatial_dist, threads)
    rows, counts = [], []
    for i in range(len(ds)):
        n_acc = g2nn_accept_count(nb.distances[i], threshold)
        if n_acc >= 1:
            rows.append(i)
            counts.append(min(n_acc, k))
    if not rows:
        return empty_matchset(k)
    rows = np.array(rows, dtype=int)
    neighbors = nb.indices[rows, :k]
    distances = nb.distances[rows, :k]
    alpha = np.zeros(neighbors.shape)
    alpha[:, 0] = 1.0
    return MatchSet(rows, neighbors.copy(), distances.copy(), alpha, np.array(counts, dtype=int))
