"""Keypoint graph: binary adjacency with self-loops and its symmetric normalization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidEdgeError, InvalidInputError


def build_adjacency(n: int, edges) -> np.ndarray:
    if n < 1:
        raise InvalidInputError(f"need at least one node, got n={n}")
    A = np.eye(n)
    for i, j in edges:
        if not (0 <= i < n and 0 <= j < n):
            raise InvalidEdgeError(f"edge ({i}, {j}) out of range for n={n}")
        A[i, j] = A[j, i] = 1.0
    return A


def normalize_adjacency(A) -> np.ndarray:
    """``D^-1/2 A D^-1/2`` where ``D`` holds the row sums of ``A``."""
    A = np.asarray(A, dtype=float)
    d = A.sum(axis=1)
    assert np.all(d > 0), "zero-degree node; adjacency must carry self-loops"
    s = 1.0 / np.sqrt(d)
    return A * s[:, None] * s[None, :]


@dataclass(frozen=True)
class KeypointGraph:
    n: int
    edges: tuple

    @classmethod
    def from_edges(cls, n: int, edges) -> "KeypointGraph":
        canon = sorted({(min(i, j), max(i, j)) for i, j in edges if i != j})
        build_adjacency(n, canon)  # validates indices
        return cls(n, tuple(canon))

    @property
    def A(self) -> np.ndarray:
        return build_adjacency(self.n, self.edges)

    @property
    def A_norm(self) -> np.ndarray:
        return normalize_adjacency(self.A)
