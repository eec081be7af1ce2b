"""Canonical set partitions, enumeration, refinement cells, and the
permutation-invariant Hamming distance.

A partition of ``[n]`` is stored as a restricted growth string (RGS): the
first label is 0 and each new label is one plus the maximum of the labels
before it.  Every equivalence class of partitions under relabeling has
exactly one RGS representative, so partition equality is class equality and
the K! labeled copies never appear explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.optimize import linear_sum_assignment

ENUM_CAP = 13  # Bell(13) ~ 2.8e7


@dataclass(frozen=True)
class Partition:
    """A set partition of [n] in restricted growth form."""

    labels: tuple[int, ...]

    def __post_init__(self):
        labels = tuple(int(x) for x in self.labels)
        if not labels:
            raise ValueError("empty partition")
        peak = -1
        for lab in labels:
            if lab > peak + 1 or lab < 0:
                raise ValueError(f"labels {labels} are not a restricted growth string")
            peak = max(peak, lab)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def K(self) -> int:
        return max(self.labels) + 1

    @property
    def sizes(self) -> tuple[int, ...]:
        counts = [0] * self.K
        for lab in self.labels:
            counts[lab] += 1
        return tuple(counts)

    def blocks(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.K)]
        for i, lab in enumerate(self.labels):
            out[lab].append(i)
        return out

    def block_masks(self) -> list[int]:
        """Blocks as bitmasks over [n]."""
        masks = [0] * self.K
        for i, lab in enumerate(self.labels):
            masks[lab] |= 1 << i
        return masks

    def to_string(self) -> str:
        return ",".join(str(lab) for lab in self.labels)

    @staticmethod
    def from_string(text: str) -> "Partition":
        return canonicalize([int(tok) for tok in text.split(",")])


def canonicalize(raw_labels) -> Partition:
    """Relabel to restricted growth form; invariant under label bijections."""
    raw = list(raw_labels)
    if not raw:
        raise ValueError("empty label array")
    seen: dict = {}
    out = []
    for lab in raw:
        if lab not in seen:
            seen[lab] = len(seen)
        out.append(seen[lab])
    return Partition(tuple(out))


def singletons(n: int) -> Partition:
    return Partition(tuple(range(n)))


def one_block(n: int) -> Partition:
    return Partition((0,) * n)


def enumerate_partitions(n: int, max_K: int | None = None) -> Iterator[Partition]:
    """Yield every equivalence class exactly once, in RGS lexicographic order.

    With ``max_K`` the stream is restricted to partitions with at most that
    many blocks (Stirling counts summed up to the bound).
    """
    if n < 1:
        raise ValueError("n must be positive")
    if n > ENUM_CAP:
        raise ValueError(f"enumeration capped at n <= {ENUM_CAP}")
    cap = n if max_K is None else min(max_K, n)
    if cap < 1:
        raise ValueError("max_K must be at least 1")
    labels = [0] * n
    peaks = [1] * n  # peaks[i] = 1 + max(labels[:i+1])
    while True:
        yield Partition(tuple(labels))
        # find rightmost position that can still be incremented
        i = n - 1
        while i > 0 and not (labels[i] < peaks[i - 1] and labels[i] + 1 < cap):
            i -= 1
        if i == 0:
            return
        labels[i] += 1
        peaks[i] = max(peaks[i - 1], labels[i] + 1)
        for j in range(i + 1, n):
            labels[j] = 0
            peaks[j] = peaks[i]


@dataclass(frozen=True)
class RefinementCells:
    """Pairwise block intersections of two partitions of the same ground set.

    ``cells[i][j]`` lists the indices in block i of the first partition and
    block j of the second; row unions recover the first partition's blocks,
    column unions the second's.
    """

    cells: tuple[tuple[tuple[int, ...], ...], ...]
    nonempty_count: int

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.cells), len(self.cells[0])


def refinement_cells(p1: Partition, p2: Partition) -> RefinementCells:
    if p1.n != p2.n:
        raise ValueError(f"length mismatch {p1.n} vs {p2.n}")
    grid: list[list[list[int]]] = [[[] for _ in range(p2.K)] for _ in range(p1.K)]
    for i, (a, b) in enumerate(zip(p1.labels, p2.labels)):
        grid[a][b].append(i)
    cells = tuple(tuple(tuple(cell) for cell in row) for row in grid)
    nonempty = sum(1 for row in cells for cell in row if cell)
    return RefinementCells(cells, nonempty)


def is_refinement(p1: Partition, p2: Partition) -> bool:
    """True when every block of ``p1`` sits inside a block of ``p2``."""
    return refinement_cells(p1, p2).nonempty_count == p1.K


def confusion_matrix(p1: Partition, p2: Partition) -> np.ndarray:
    if p1.n != p2.n:
        raise ValueError(f"length mismatch {p1.n} vs {p2.n}")
    mat = np.zeros((p1.K, p2.K), dtype=np.int64)
    for a, b in zip(p1.labels, p2.labels):
        mat[a, b] += 1
    return mat


def hamming_distance(p1: Partition, p2: Partition) -> int:
    """Minimum label disagreements over bijections of cluster labels.

    Solved exactly as ``n`` minus a maximum-weight assignment on the
    confusion matrix; when the block counts differ the smaller label set is
    padded with empty blocks so the distance stays well defined.
    """
    mat = confusion_matrix(p1, p2)
    k = max(mat.shape)
    if mat.shape != (k, k):
        padded = np.zeros((k, k), dtype=np.int64)
        padded[: mat.shape[0], : mat.shape[1]] = mat
        mat = padded
    rows, cols = linear_sum_assignment(mat, maximize=True)
    return int(p1.n - mat[rows, cols].sum())
