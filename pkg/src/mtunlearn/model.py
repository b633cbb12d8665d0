"""Shared-parameter multi-task model with a trainable low-rank edit.

The shared layer is W = w_star + b @ a.T with w_star frozen; per-task
linear heads are fixed. Squared loss throughout, which keeps gradients
and the flattened Hessian exactly computable.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import MultiTaskDataset, SyntheticProblem
from .errors import DimensionError, EmptySubsetError, SizeGuardError, StepSizeError

HESSIAN_PARAM_GUARD = 400


@dataclass(frozen=True)
class LowRankEdit:
    """Frozen base weight plus trainable rank-r factors (d x k layer)."""

    w_star: np.ndarray  # d x k, never modified
    a: np.ndarray  # k x r
    b: np.ndarray  # d x r

    def __post_init__(self):
        d, k = self.w_star.shape
        if self.a.shape[0] != k or self.b.shape[0] != d:
            raise DimensionError("factor shapes inconsistent with w_star")
        if self.a.shape[1] != self.b.shape[1]:
            raise DimensionError("a and b must share the same rank")

    @property
    def rank(self) -> int:
        return self.a.shape[1]

    def effective_weight(self) -> np.ndarray:
        return self.w_star + self.b @ self.a.T


@dataclass(frozen=True)
class MultiTaskModel:
    edit: LowRankEdit
    heads: tuple[np.ndarray, ...]  # fixed per-task maps, m_t x k

    @property
    def n_tasks(self) -> int:
        return len(self.heads)

    def with_edit(self, edit: LowRankEdit) -> "MultiTaskModel":
        return replace(self, edit=edit)

    def predict(self, x: np.ndarray, task: int) -> np.ndarray:
        """Batch prediction for one task; x is (n, d) or (d,)."""
        single = x.ndim == 1
        xb = np.atleast_2d(x)
        out = xb @ self.edit.effective_weight() @ self.heads[task].T
        return out[0] if single else out


def zero_init_edit(w_star: np.ndarray, rank: int, seed: int, a_scale: float = 1.0):
    """Fresh edit: random a, zero b, so the initial delta weight is zero."""
    rng = np.random.default_rng(seed)
    d, k = w_star.shape
    a = a_scale * rng.standard_normal((k, rank)) / np.sqrt(k)
    b = np.zeros((d, rank))
    return LowRankEdit(w_star=w_star, a=a, b=b)


def balanced_init_edit(w_star: np.ndarray, rank: int, seed: int, scale: float = 0.1):
    """Small balanced random factors; used for reference training from scratch."""
    rng = np.random.default_rng(seed)
    d, k = w_star.shape
    a = scale * rng.standard_normal((k, rank))
    b = scale * rng.standard_normal((d, rank))
    return LowRankEdit(w_star=w_star, a=a, b=b)


def pair_loss(model: MultiTaskModel, ds: MultiTaskDataset, pair) -> float:
    """Squared loss 0.5 * |f_t(x_i) - y_i|^2 for one (instance, task) pair."""
    i, t = pair
    err = model.predict(ds.inputs[i], t) - ds.targets[t][i]
    return 0.5 * float(err @ err)


def _group_by_task(pairs):
    groups: dict[int, list[int]] = {}
    for i, t in pairs:
        groups.setdefault(t, []).append(i)
    return groups


def subset_loss(model: MultiTaskModel, ds: MultiTaskDataset, pairs, weighted=False):
    """Mean per-pair loss over ``pairs``; optionally task-weighted."""
    if len(pairs) == 0:
        raise EmptySubsetError("subset_loss over empty subset")
    w_eff = model.edit.effective_weight()
    total = 0.0
    for t, idx in _group_by_task(pairs).items():
        e = ds.inputs[idx] @ w_eff @ model.heads[t].T - ds.targets[t][idx]
        lam = ds.task_weights[t] if weighted else 1.0
        total += 0.5 * lam * float(np.sum(e * e))
    return total / len(pairs)


def subset_gradient(model: MultiTaskModel, ds: MultiTaskDataset, pairs, weighted=False):
    """Analytic gradients of the subset-mean loss w.r.t. (a, b), w_star frozen."""
    if len(pairs) == 0:
        raise EmptySubsetError("subset_gradient over empty subset")
    w_eff = model.edit.effective_weight()
    d, k = model.edit.w_star.shape
    grad_w = np.zeros((d, k))
    for t, idx in _group_by_task(pairs).items():
        x = ds.inputs[idx]
        e = x @ w_eff @ model.heads[t].T - ds.targets[t][idx]
        lam = ds.task_weights[t] if weighted else 1.0
        grad_w += lam * x.T @ (e @ model.heads[t])
    grad_w /= len(pairs)
    return grad_w.T @ model.edit.b, grad_w @ model.edit.a


def flatten_params(edit: LowRankEdit) -> np.ndarray:
    return np.concatenate([edit.a.ravel(), edit.b.ravel()])


def unflatten_params(edit: LowRankEdit, theta: np.ndarray) -> LowRankEdit:
    k, r = edit.a.shape
    d = edit.b.shape[0]
    a = theta[: k * r].reshape(k, r)
    b = theta[k * r :].reshape(d, r)
    return LowRankEdit(w_star=edit.w_star, a=a, b=b)


def flattened_hessian(model: MultiTaskModel, ds: MultiTaskDataset, pairs) -> np.ndarray:
    """Exact Hessian of the subset-mean loss w.r.t. flattened (a, b).

    Parameter order matches :func:`flatten_params`: a.ravel() then
    b.ravel() (row-major). Guarded to r*(k+d) <= 400 parameters.
    """
    if len(pairs) == 0:
        raise EmptySubsetError("flattened_hessian over empty subset")
    edit = model.edit
    d, k = edit.w_star.shape
    r = edit.rank
    p_a, p_b = k * r, d * r
    if p_a + p_b > HESSIAN_PARAM_GUARD:
        raise SizeGuardError(
            f"r*(k+d) = {p_a + p_b} exceeds guard {HESSIAN_PARAM_GUARD}; "
            "shrink the problem"
        )
    h = np.zeros((p_a + p_b, p_a + p_b))
    w_eff = edit.effective_weight()
    for t, idx in _group_by_task(pairs).items():
        x = ds.inputs[idx]  # n x d
        m = model.heads[t]  # m_t x k
        u = x @ edit.b  # n x r
        ma = m @ edit.a  # m_t x r
        e = x @ w_eff @ m.T - ds.targets[t][idx]  # n x m_t
        mtm = m.T @ m
        # a-a block: kron over (row index of a) x (column index of a)
        h[:p_a, :p_a] += np.kron(mtm, u.T @ u)
        # b-b block
        h[p_a:, p_a:] += np.kron(x.T @ x, ma.T @ ma)
        # a-b block, Gauss-Newton part: C[i,p] * sum_n u_j x_l
        c = mtm @ edit.a  # k x r (index i, p)
        s = u.T @ x  # r x d (index j, l)
        t_ab = np.einsum("ip,jl->ijlp", c, s)
        # a-b block, residual curvature part: delta_{jp} * (X^T E M)[l, i]
        dmat = x.T @ (e @ m)  # d x k (index l, i)
        t_ab += np.einsum("li,jp->ijlp", dmat, np.eye(r))
        ab = t_ab.reshape(p_a, p_b)
        h[:p_a, p_a:] += ab
        h[p_a:, :p_a] += ab.T
    h /= len(pairs)
    return 0.5 * (h + h.T)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    step_size: float
    seed: int
    rank: int | None = None  # defaults to the generator's teacher rank
    init_scale: float = 0.1
    grad_tol: float = 1e-7


def train_reference(
    problem: SyntheticProblem,
    pairs,
    config: TrainConfig,
    ds: MultiTaskDataset | None = None,
) -> MultiTaskModel:
    """Full-batch gradient descent on the task-weighted mean loss over ``pairs``.

    Trains (a, b) from a small seeded init over a zero base weight; stops at
    the epoch budget or when the gradient norm drops below ``grad_tol``.
    """
    if len(pairs) == 0:
        raise EmptySubsetError("cannot train on an empty subset")
    ds = ds if ds is not None else problem.dataset
    d, k = problem.config.input_dim, problem.shared_dim
    rank = config.rank if config.rank is not None else problem.config.teacher_rank
    edit = balanced_init_edit(
        np.zeros((d, k)), rank, config.seed, scale=config.init_scale
    )
    model = MultiTaskModel(edit=edit, heads=tuple(problem.heads))
    for _ in range(config.epochs):
        ga, gb = subset_gradient(model, ds, pairs, weighted=True)
        gnorm = np.sqrt(np.sum(ga * ga) + np.sum(gb * gb))
        if gnorm < config.grad_tol:
            break
        edit = LowRankEdit(
            w_star=edit.w_star,
            a=edit.a - config.step_size * ga,
            b=edit.b - config.step_size * gb,
        )
        model = model.with_edit(edit)
        loss = subset_loss(model, ds, pairs, weighted=True)
        if not np.isfinite(loss) or loss > 1e12:
            raise StepSizeError(f"training diverged (loss={loss!r})")
    return model
