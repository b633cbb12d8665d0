"""Task-specific subspaces of the low-rank adaptation space.

Each task owns an orthonormal basis of the r-dimensional factor space;
the induced projector confines that task's updates. Cross-task alignment
is measured in both Frobenius and spectral norms and can be driven down
with a penalized descent step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, DegenerateBasisError, DimensionError
from .linalg import orthonormalize


@dataclass(frozen=True)
class TaskSubspace:
    task_id: int
    basis: np.ndarray  # r x s, orthonormal columns

    @property
    def rank(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T


def init_subspaces(
    n_tasks: int, rank: int, dim: int, mode: str = "disjoint-blocks", seed: int = 0
) -> list[TaskSubspace]:
    """Per-task bases; disjoint standard-basis blocks or independent random draws."""
    if not 1 <= dim <= rank:
        raise DimensionError(f"need 1 <= dim <= rank, got dim={dim}, rank={rank}")
    if mode == "disjoint-blocks":
        if n_tasks * dim > rank:
            raise CapacityError(
                f"{n_tasks} blocks of width {dim} do not fit in rank {rank}"
            )
        eye = np.eye(rank)
        return [
            TaskSubspace(t, eye[:, t * dim : (t + 1) * dim].copy())
            for t in range(n_tasks)
        ]
    if mode == "random":
        rng = np.random.default_rng(seed)
        return [
            TaskSubspace(t, orthonormalize(rng.standard_normal((rank, dim))))
            for t in range(n_tasks)
        ]
    raise ValueError(f"unknown subspace mode {mode!r}")


def default_subspace_dim(rank: int, n_tasks: int) -> int:
    return max(1, rank // n_tasks)


def alignment(u: TaskSubspace, v: TaskSubspace) -> tuple[float, float]:
    """(squared Frobenius, spectral) norms of the basis cross-product.

    The spectral value is the operational cross-task alignment bound used
    by the projected-gradient inner-product guarantee.
    """
    if u.rank != v.rank:
        raise DimensionError("subspaces live in different ambient ranks")
    cross = u.basis.T @ v.basis
    frob_sq = float(np.sum(cross * cross))
    spectral = float(np.linalg.norm(cross, 2)) if cross.size else 0.0
    return frob_sq, spectral


def total_alignment(subspaces) -> float:
    """Sum of pairwise squared-Frobenius alignments over ordered pairs t != t'."""
    total = 0.0
    for i, u in enumerate(subspaces):
        for j, v in enumerate(subspaces):
            if i != j:
                total += alignment(u, v)[0]
    return total


def regularize_step(
    subspaces, reg_weight: float, step_size: float
) -> list[TaskSubspace]:
    """One descent step on the pairwise alignment penalty, then re-orthonormalize.

    Gradient w.r.t. each basis U_t is 2 * sum_{t' != t} P_{t'} U_t. A zero
    penalty weight is an exact identity.
    """
    if reg_weight < 0:
        raise ValueError("reg_weight must be >= 0")
    if reg_weight == 0 or step_size == 0:
        return list(subspaces)
    projectors = [s.projector() for s in subspaces]
    out = []
    for i, s in enumerate(subspaces):
        grad = np.zeros_like(s.basis)
        for j, p in enumerate(projectors):
            if j != i:
                grad += 2.0 * p @ s.basis
        stepped = s.basis - step_size * reg_weight * grad
        try:
            basis = orthonormalize(stepped)
        except DegenerateBasisError as exc:
            raise DegenerateBasisError(
                f"task {s.task_id} basis collapsed during regularization"
            ) from exc
        out.append(TaskSubspace(s.task_id, basis))
    return out
