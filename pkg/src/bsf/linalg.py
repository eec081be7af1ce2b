"""Weighted graph Laplacians and stable log-determinants.

The clustering posterior is a product of determinants ``|L_V + J/|V||``
over cluster blocks, where ``L_V`` is the Laplacian of the complete graph
on the block with kernel edge weights.  Under bandwidth schedules the raw
weights span hundreds of orders of magnitude, so every Laplacian here is
built from weights rescaled by the block maximum (entries in ``(0, 1]``)
and the exact scale is restored additively in the log domain: multiplying
all weights by ``c`` multiplies any spanning-tree sum, and hence
``|L[i]|`` and ``|L + J/n|``, by ``c^(n-1)``.

The matrix-tree identity ``|L + J/n| = n |L[i]| = n * (sum over spanning
trees of edge-weight products)`` is the correctness anchor; a vectorized
Prufer-sequence enumerator provides the brute-force leg for small n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

BRUTE_FORCE_CAP = 9  # n^(n-2) labeled trees; 9 -> 4.8e6

# all-spanning-trees edge tables, keyed by node count (data independent)
_TREE_CACHE: dict[int, np.ndarray] = {}
# anchored submask-pair tables for subset DPs, keyed by n
_SUBSET_PAIR_CACHE: dict[int, list] = {}


@dataclass(frozen=True)
class WeightedLaplacian:
    """Laplacian of a complete weighted graph, stored at unit scale.

    ``scaled`` is the Laplacian of the weights ``exp(logw - log_scale)``;
    ``log_scale`` is the factored-out maximum log weight, so determinant
    results of (n-1)-degree in the weights are corrected by adding
    ``(n - 1) * log_scale``.
    """

    scaled: np.ndarray
    log_scale: float

    def __post_init__(self):
        mat = np.asarray(self.scaled, dtype=float)
        object.__setattr__(self, "scaled", mat)

    @property
    def n(self) -> int:
        return self.scaled.shape[0]

    def dense(self) -> np.ndarray:
        """Laplacian in the original weights; overflows for extreme scales."""
        return self.scaled * math.exp(self.log_scale)


def laplacian_from_log_weights(logw: np.ndarray) -> WeightedLaplacian:
    """Build a scaled Laplacian from a symmetric matrix of log edge weights."""
    logw = np.asarray(logw, dtype=float)
    m = logw.shape[0]
    if m == 1:
        return WeightedLaplacian(np.zeros((1, 1)), 0.0)
    iu = np.triu_indices(m, 1)
    scale = float(logw[iu].max())
    w = np.exp(logw - scale)
    np.fill_diagonal(w, 0.0)
    lap = -w
    np.fill_diagonal(lap, w.sum(axis=1))
    return WeightedLaplacian(lap, scale)


def build_laplacian(data, subset, kernel) -> WeightedLaplacian:
    """Laplacian of the complete weighted graph on ``subset`` of the dataset."""
    from .kernels import log_weight_matrix

    subset = list(subset)
    if not subset:
        raise ValueError("empty subset")
    sub = data.subset(subset)
    return laplacian_from_log_weights(log_weight_matrix(sub, kernel))


def log_det_L_plus_J(lap: WeightedLaplacian) -> float:
    """``log |L + J/n|`` in the original weights.

    ``L + J/n`` is symmetric positive definite for strictly positive
    weights, so a Cholesky factorization of the scaled matrix succeeds;
    failure signals a numerically indefinite input.
    """
    m = lap.n
    if m == 1:
        return 0.0
    a = lap.scaled + 1.0 / m
    chol, _ = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
    return 2.0 * float(np.log(np.diag(chol)).sum()) + (m - 1) * lap.log_scale


def log_det_minor(lap: WeightedLaplacian, drop: int = 0) -> float:
    """``log |L[drop]|`` in the original weights; independent of ``drop``."""
    m = lap.n
    if m < 2:
        raise ValueError("principal minor needs at least 2 nodes")
    if not 0 <= drop < m:
        raise ValueError(f"drop index {drop} out of range for n={m}")
    keep = [i for i in range(m) if i != drop]
    minor = lap.scaled[np.ix_(keep, keep)]
    chol, _ = scipy.linalg.cho_factor(minor, lower=True, check_finite=False)
    return 2.0 * float(np.log(np.diag(chol)).sum()) + (m - 1) * lap.log_scale


def shifted_spectrum(lap: WeightedLaplacian, a: float, b: float) -> np.ndarray:
    """Predicted eigenvalues of ``L + aI + bJ`` from the spectrum of ``L``.

    The constant vector is an eigenvector of both ``L`` (eigenvalue 0) and
    ``J`` (eigenvalue n), so the predicted multiset is ``{lambda_i + a}``
    over the n-1 non-constant eigendirections plus ``n b + a``.  Returned
    sorted; intended for diagnostics at moderate weight scales.
    """
    dense = lap.dense()
    ev = np.linalg.eigvalsh(dense)
    predicted = np.concatenate([ev[1:] + a, [lap.n * b + a]])
    return np.sort(predicted)


def _all_tree_edges(n: int) -> np.ndarray:
    """Edge lists of all n^(n-2) labeled spanning trees on [n].

    Decodes every Prufer sequence at once with vectorized bookkeeping.
    Returns an int array of shape ``(n^(n-2), n-1, 2)``.
    """
    if n == 2:
        return np.array([[[0, 1]]], dtype=np.int8)
    count = n ** (n - 2)
    seqs = np.indices((n,) * (n - 2), dtype=np.int8).reshape(n - 2, count).T
    degree = np.ones((count, n), dtype=np.int16)
    np.add.at(degree, (np.arange(count)[:, None], seqs.astype(np.intp)), 1)
    edges = np.empty((count, n - 1, 2), dtype=np.int8)
    rows = np.arange(count)
    for k in range(n - 2):
        leaf = np.argmax(degree == 1, axis=1)
        other = seqs[:, k].astype(np.intp)
        edges[:, k, 0] = leaf
        edges[:, k, 1] = other
        degree[rows, leaf] -= 1
        degree[rows, other] -= 1
    first = np.argmax(degree == 1, axis=1)
    degree[rows, first] -= 1
    second = np.argmax(degree == 1, axis=1)
    edges[:, n - 2, 0] = first
    edges[:, n - 2, 1] = second
    return edges


def all_spanning_tree_edges(n: int) -> np.ndarray:
    if n < 2:
        raise ValueError("spanning trees need at least 2 nodes")
    if n > BRUTE_FORCE_CAP:
        raise ValueError(f"brute-force enumeration capped at n <= {BRUTE_FORCE_CAP}")
    if n not in _TREE_CACHE:
        _TREE_CACHE[n] = _all_tree_edges(n)
    return _TREE_CACHE[n]


def spanning_tree_log_weights(logw: np.ndarray) -> np.ndarray:
    """Log weight (sum of log edge weights) of every labeled spanning tree."""
    logw = np.asarray(logw, dtype=float)
    n = logw.shape[0]
    edges = all_spanning_tree_edges(n)
    vals = logw[edges[..., 0].astype(np.intp), edges[..., 1].astype(np.intp)]
    return vals.sum(axis=1)


def spanning_tree_weight_bruteforce(logw: np.ndarray) -> float:
    """Log of the sum over all labeled spanning trees of edge-weight products.

    Independent oracle for ``log |L[i]|``; capped at small n by the
    n^(n-2) enumeration.
    """
    tree_logs = spanning_tree_log_weights(logw)
    peak = float(tree_logs.max())
    return peak + math.log(float(np.exp(tree_logs - peak).sum()))


def coarsened_laplacian(logw: np.ndarray, partition) -> WeightedLaplacian:
    """Laplacian on the K blocks with aggregated cross weights.

    Edge weight between blocks s and t is the sum of all kernel values
    over cross pairs, accumulated in the log domain.
    """
    logw = np.asarray(logw, dtype=float)
    blocks = partition.blocks()
    k = len(blocks)
    if k == 1:
        return WeightedLaplacian(np.zeros((1, 1)), 0.0)
    log_tau = np.zeros((k, k))
    for s in range(k):
        for t in range(s + 1, k):
            vals = logw[np.ix_(blocks[s], blocks[t])].ravel()
            peak = float(vals.max())
            log_tau[s, t] = peak + math.log(float(np.exp(vals - peak).sum()))
            log_tau[t, s] = log_tau[s, t]
    return laplacian_from_log_weights(log_tau)


# Weight ranges (in nats) beyond this make the smallest eigenvalue of the
# scaled L + J/m invisible to float Cholesky: the factorization can fail or,
# worse, succeed on rounding noise and overstate the determinant by many
# orders of magnitude.  Such blocks take the star-mesh route instead.
CHOLESKY_RANGE_NATS = 30.0


def _star_mesh_batch(sub: np.ndarray) -> np.ndarray:
    """``log |L[last]|`` for a stack of log-weight matrices ``(B, m, m)``."""
    b, m, _ = sub.shape
    cur = np.array(sub, dtype=float)
    idx = np.arange(m)
    cur[:, idx, idx] = -np.inf
    total = np.zeros(b)
    for _ in range(m - 1):
        row = cur[:, 0, 1:]
        peak = row.max(axis=1)
        pivot = peak + np.log(np.exp(row - peak[:, None]).sum(axis=1))
        total += pivot
        cur = np.logaddexp(
            cur[:, 1:, 1:], row[:, :, None] + row[:, None, :] - pivot[:, None, None]
        )
        k = cur.shape[1]
        cur[:, np.arange(k), np.arange(k)] = -np.inf
    return total


def log_minor_star_mesh(logw: np.ndarray) -> float:
    """``log |L[last]|`` by node elimination, entirely in the log domain.

    Eliminating a node from a graph Laplacian is a star-mesh transform: the
    pivot is the node's current degree and every remaining weight gains
    ``w_ik * w_jk / d_k``.  All updates accumulate positive quantities, so
    unlike a Cholesky of the assembled matrix this never cancels and stays
    exact-to-rounding even when weights span thousands of nats.
    """
    logw = np.asarray(logw, dtype=float)
    m = logw.shape[0]
    if m == 1:
        return 0.0
    cur = logw.copy()
    np.fill_diagonal(cur, -np.inf)
    total = 0.0
    for _ in range(m - 1):
        row = cur[0, 1:]
        peak = row.max()
        pivot = peak + math.log(float(np.exp(row - peak).sum()))
        total += pivot
        cur = np.logaddexp(cur[1:, 1:], row[:, None] + row[None, :] - pivot)
        np.fill_diagonal(cur, -np.inf)
    return total


def subset_log_det(logw: np.ndarray, indices) -> float:
    """``log |L_T + J/|T||`` for the block on ``indices`` (original weights).

    Well-conditioned blocks go through Cholesky; blocks whose weights span
    more than ``CHOLESKY_RANGE_NATS`` take the star-mesh elimination, which
    stays accurate for any range."""
    indices = list(indices)
    if not indices:
        raise ValueError("empty subset")
    m = len(indices)
    if m == 1:
        return 0.0
    sub = logw[np.ix_(indices, indices)]
    iu = np.triu_indices(m, 1)
    pair_vals = sub[iu]
    if float(pair_vals.max() - pair_vals.min()) > CHOLESKY_RANGE_NATS:
        return math.log(m) + log_minor_star_mesh(sub)
    try:
        return log_det_L_plus_J(laplacian_from_log_weights(sub))
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError):
        return math.log(m) + log_minor_star_mesh(sub)


def _masks_by_size(n: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """All bitmasks of popcount m over n bits, plus their member indices."""
    from itertools import combinations

    combos = list(combinations(range(n), m))
    masks = np.array([sum(1 << i for i in combo) for combo in combos], dtype=np.int64)
    idx = np.array(combos, dtype=np.intp)
    return masks, idx


def all_block_log_dets(logw: np.ndarray) -> np.ndarray:
    """``log |L_T + J/|T||`` for every subset mask T of [n], batched by size.

    Entry 0 and all singleton masks are 0 (the one-point Laplacian is the
    1x1 zero matrix and ``|0 + 1| = 1``).  Intended for n up to ~13.
    """
    logw = np.asarray(logw, dtype=float)
    n = logw.shape[0]
    out = np.zeros(1 << n)
    for m in range(2, n + 1):
        masks, idx = _masks_by_size(n, m)
        sub = logw[idx[:, :, None], idx[:, None, :]]
        diag = np.arange(m)
        sub[:, diag, diag] = -np.inf  # diagonal is unused
        iu = np.triu_indices(m, 1)
        pair_vals = sub[:, iu[0], iu[1]]
        scale = pair_vals.max(axis=1)
        wide = (scale - pair_vals.min(axis=1)) > CHOLESKY_RANGE_NATS
        if wide.any():
            out[masks[wide]] = math.log(m) + _star_mesh_batch(sub[wide])
        narrow = ~wide
        if not narrow.any():
            continue
        w = np.exp(sub[narrow] - scale[narrow, None, None])
        w[:, diag, diag] = 0.0
        lap = -w
        lap[:, diag, diag] = w.sum(axis=2)
        try:
            chol = np.linalg.cholesky(lap + 1.0 / m)
            logdets = 2.0 * np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
            out[masks[narrow]] = logdets + (m - 1) * scale[narrow]
        except np.linalg.LinAlgError:
            out[masks[narrow]] = math.log(m) + _star_mesh_batch(sub[narrow])
    return out


class LogDetCache:
    """Lazy per-subset ``log |L_T + J/|T||`` values keyed by bitmask.

    Shared by the exact-posterior machinery and the MCMC sampler so both
    price blocks identically.  ``precompute_all`` fills the full table for
    small n in one batched pass.
    """

    def __init__(self, logw: np.ndarray):
        self.logw = np.asarray(logw, dtype=float)
        self.n = self.logw.shape[0]
        self._cache: dict[int, float] = {0: 0.0}

    def precompute_all(self) -> np.ndarray:
        table = all_block_log_dets(self.logw)
        self._cache = {mask: float(table[mask]) for mask in range(1 << self.n)}
        return table

    def get(self, mask: int) -> float:
        val = self._cache.get(mask)
        if val is None:
            indices = [i for i in range(self.n) if mask >> i & 1]
            val = subset_log_det(self.logw, indices)
            self._cache[mask] = val
        return val

    def fresh(self, mask: int) -> float:
        """Recompute without the cache (self-audit hook)."""
        indices = [i for i in range(self.n) if mask >> i & 1]
        return subset_log_det(self.logw, indices)


def anchored_subset_pairs(n: int) -> list:
    """Per-popcount tables of (S, T, S \\ T) with min(S) in T.

    Used by set-partition dynamic programs: for every non-empty mask S the
    candidate first blocks T are exactly the submasks containing S's lowest
    bit, which visits every unordered partition once.  Layer c holds flat
    arrays (segment starts, S per segment, T array, remainder array) for
    all S of popcount c, in increasing mask order.
    """
    if n in _SUBSET_PAIR_CACHE:
        return _SUBSET_PAIR_CACHE[n]
    by_size: list[list] = [[] for _ in range(n + 1)]
    for s_mask in range(1, 1 << n):
        c = s_mask.bit_count()
        anchor = s_mask & -s_mask
        rest = s_mask ^ anchor
        t_list = []
        sub = rest
        while True:
            t_list.append(anchor | sub)
            if sub == 0:
                break
            sub = (sub - 1) & rest
        by_size[c].append((s_mask, t_list))
    layers = []
    for c in range(n + 1):
        entries = by_size[c]
        if not entries:
            layers.append(None)
            continue
        starts = np.empty(len(entries), dtype=np.intp)
        s_arr = np.empty(len(entries), dtype=np.int64)
        t_flat: list[int] = []
        pos = 0
        for row, (s_mask, t_list) in enumerate(entries):
            starts[row] = pos
            s_arr[row] = s_mask
            t_flat.extend(t_list)
            pos += len(t_list)
        t_arr = np.array(t_flat, dtype=np.int64)
        r_arr = s_arr.repeat(np.diff(np.append(starts, pos))) ^ t_arr
        layers.append((starts, s_arr, t_arr, r_arr))
    _SUBSET_PAIR_CACHE[n] = layers
    return layers
