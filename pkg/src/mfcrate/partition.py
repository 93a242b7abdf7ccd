"""Grouping particles by their feedback values on a grid covering of the ball B_R."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import HamiltonianModel


@dataclass(frozen=True)
class ControlPartition:
    delta: float
    radius_R: float
    cell_side: float
    representatives: np.ndarray  # (J, d) cell centres
    cells: tuple  # tuple of index tuples (0-based particle indices)

    @property
    def J(self) -> int:
        return len(self.cells)

    def labels(self, n: int) -> np.ndarray:
        out = np.full(n, -1)
        for j, cell in enumerate(self.cells):
            out[list(cell)] = j
        return out

    def to_json(self) -> dict:
        return {"delta": self.delta, "radius_R": self.radius_R, "cell_side": self.cell_side,
                "representatives": self.representatives.tolist(), "cells": [list(c) for c in self.cells]}


def covering_bound(R: float, delta: float, d: int) -> int:
    """Number of grid cells of side ``2 delta / sqrt(d)`` needed to cover ``[-R, R]^d``."""
    side = 2 * delta / math.sqrt(d)
    return int(math.ceil(2 * R / side)) ** d


def covering_constant(R: float, d: int) -> float:
    """``C`` with ``J <= C * delta^{-d}`` whenever ``delta <= R sqrt(d)``.

    The grid uses ``ceil(R sqrt(d) / delta)`` cells per axis, and
    ``ceil(z) <= 2 z`` for ``z >= 1``, so ``C = (2 R sqrt(d))^d``.
    """
    return (2 * R * math.sqrt(d)) ** d


def build_partition(feedback_values, R: float, delta: float) -> ControlPartition:
    """Cells ``prod_c [-R + s i_c, -R + s (i_c + 1))`` with ``s = 2 delta / sqrt(d)``.

    A value on a shared face belongs to the upper cell (half-open cells), the
    topmost cell is closed, and cells are listed in lexicographic index order.
    """
    a = np.asarray(feedback_values, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if not delta > 0:
        raise ValueError("delta must be positive")
    norms = np.linalg.norm(a, axis=1)
    if np.any(norms > R * (1 + 1e-12)):
        k = int(np.argmax(norms))
        raise ValueError(f"feedback value {a[k].tolist()} lies outside the ball of radius {R}")
    n, d = a.shape
    side = 2 * delta / math.sqrt(d)
    per_axis = max(1, int(math.ceil(2 * R / side - 1e-12)))
    idx = np.clip(np.floor((a + R) / side).astype(np.int64), 0, per_axis - 1)
    # np.unique over rows sorts lexicographically
    keys, inverse = np.unique(idx, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    cells = tuple(tuple(int(i) for i in np.flatnonzero(inverse == j)) for j in range(len(keys)))
    reps = -R + side * (keys + 0.5)
    return ControlPartition(float(delta), float(R), side, reps, cells)


def residual_check(partition: ControlPartition, states, gradients, model: HamiltonianModel) -> dict:
    """``|H(x_k, p_k) + abar_j . p_k + L(x_k, abar_j)|`` with ``abar_j`` the representative
    of particle k's cell; zero exactly when ``abar_j`` is the optimal control at ``p_k``."""
    x = np.asarray(states, dtype=float)
    p = np.asarray(gradients, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if p.ndim == 1:
        p = p[:, None]
    labels = partition.labels(x.shape[0])
    if np.any(labels < 0):
        raise ValueError("partition does not cover every particle")
    abar = partition.representatives[labels]
    res = np.abs(model.eval_h(x, p) + np.sum(abar * p, axis=-1) + model.eval_l(x, abar))
    return {"max": float(res.max()), "per_particle": res, "max_over_delta": float(res.max() / partition.delta)}
