"""Unlearning loop: projected, retain-orthogonalized ascent on a fresh edit.

The original model's merged weight becomes the frozen base; a fresh
low-rank edit is optimized for up to ``max_epochs`` full-batch epochs.
Each epoch builds per-source gradients (forget / clean / inst / task),
projects them into task subspaces, sequentially orthogonalizes the forget
direction, and applies retain descent plus forget ascent. The returned
model is the epoch whose membership-inference AUC lands closest to the
retrained reference's.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import MultiTaskDataset, PartitionSpec, SyntheticProblem
from .errors import ConfigError, EmptySubsetError, StepSizeError
from .evaluation import mia_auc, per_instance_losses
from .model import MultiTaskModel, subset_gradient, subset_loss, zero_init_edit
from .subspace import TaskSubspace, regularize_step
from .surgery import (
    GradientBundle,
    GradientPair,
    apply_update,
    project_pair,
    sequential_orthogonalize,
)

STRATEGIES = (
    "ours",
    "neggrad_plus",
    "wo_projection",
    "wo_task",
    "wo_inst",
    "wo_clean",
)

# Ablation names follow the constraint they remove, so "wo_task" drops the
# same-task retention signal (retained instances on forgotten tasks) and
# "wo_inst" drops the same-instance cross-task signal (forgotten instances
# on retained tasks).
_ABLATION_SKIP = {
    "wo_task": ("inst",),
    "wo_inst": ("task",),
    "wo_clean": ("clean",),
}


@dataclass(frozen=True)
class UnlearnConfig:
    setting: str  # "full" or "partial"
    eta1: float = 1.0
    eta2: float = 0.1
    eps: float = 1e-8
    max_epochs: int = 20
    reg_weight: float = 1.0
    reg_step_size: float = 1e-3
    strategy: str = "ours"
    anchor_fraction: float = 0.10
    seed: int = 0

    def __post_init__(self):
        if self.setting not in ("full", "partial"):
            raise ConfigError(f"unknown setting {self.setting!r}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if min(self.eta1, self.eta2, self.eps, self.reg_weight) < 0:
            raise ConfigError("eta1, eta2, eps, reg_weight must be >= 0")
        if not 0 < self.anchor_fraction <= 1:
            raise ConfigError("anchor_fraction must be in (0, 1]")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    forget_loss: float
    clean_loss: float | None
    inst_loss: float | None
    task_loss: float | None
    mia_auc: float


@dataclass
class UnlearnTrace:
    records: list[EpochRecord] = field(default_factory=list)
    reference_auc: float = 0.5
    selected_epoch: int = 0

    def record_for(self, epoch: int) -> EpochRecord:
        return self.records[epoch]


def _group_pairs_by_task(pairs):
    groups: dict[int, list[tuple[int, int]]] = {}
    for pair in pairs:
        groups.setdefault(pair[1], []).append(pair)
    return groups


def _source_gradient(model, ds, pairs, subspaces, project) -> GradientPair | None:
    """Sum of per-task (optionally projected) subset-mean gradients."""
    if not pairs:
        return None
    total = None
    for t, task_pairs in sorted(_group_pairs_by_task(pairs).items()):
        ga, gb = subset_gradient(model, ds, task_pairs)
        pair = GradientPair(ga, gb)
        if project:
            pair = project_pair(pair, subspaces[t])
        total = pair if total is None else total + pair
    return total


def _forget_task_auc(model, ds, part, val_ds) -> float:
    """Mean unlearn-vs-val membership AUC over the forgotten tasks."""
    unl_idx = sorted(part.forget_instances)
    aucs = [
        mia_auc(
            per_instance_losses(model, ds, t, unl_idx),
            per_instance_losses(model, val_ds, t),
        )
        for t in sorted(part.forget_tasks)
    ]
    return float(np.mean(aucs))


def _loss_or_none(model, ds, pairs):
    return subset_loss(model, ds, pairs) if pairs else None


def run_unlearning(
    original: MultiTaskModel,
    problem: SyntheticProblem,
    part: PartitionSpec,
    subspaces: list[TaskSubspace],
    cfg: UnlearnConfig,
    retrain_ref: MultiTaskModel,
    val_ds: MultiTaskDataset | None = None,
) -> tuple[MultiTaskModel, UnlearnTrace]:
    """Run the unlearning loop and return the early-stopped merged-edit model."""
    ds = problem.dataset
    val = val_ds if val_ds is not None else problem.val_dataset
    if val is None:
        raise ConfigError("a validation dataset is required for early stopping")
    if not part.forget:
        raise EmptySubsetError("forget set is empty")
    full = len(part.forget_tasks) == ds.n_tasks
    if cfg.setting == "full" and not full:
        raise ConfigError("setting=full requires all tasks forgotten")
    if cfg.setting == "partial" and full:
        raise ConfigError("setting=partial requires a proper task subset")

    rank = subspaces[0].rank
    edit = zero_init_edit(original.edit.effective_weight(), rank, cfg.seed)
    model = MultiTaskModel(edit=edit, heads=original.heads)

    # Anchor subsample of the clean retain pairs, fixed for the whole run.
    rng = np.random.default_rng(cfg.seed)
    clean_pairs = list(part.retain_clean)
    if clean_pairs:
        n_anchor = max(1, int(round(cfg.anchor_fraction * len(clean_pairs))))
        chosen = rng.choice(len(clean_pairs), size=n_anchor, replace=False)
        anchor = [clean_pairs[i] for i in sorted(chosen)]
    else:
        anchor = []

    project = cfg.strategy not in ("neggrad_plus", "wo_projection")
    skip = _ABLATION_SKIP.get(cfg.strategy, ())

    trace = UnlearnTrace(
        reference_auc=_forget_task_auc(retrain_ref, ds, part, val)
    )

    def record(epoch):
        rec = EpochRecord(
            epoch=epoch,
            forget_loss=subset_loss(model, ds, part.forget),
            clean_loss=_loss_or_none(model, ds, part.retain_clean),
            inst_loss=_loss_or_none(model, ds, part.retain_inst),
            task_loss=_loss_or_none(model, ds, part.retain_task),
            mia_auc=_forget_task_auc(model, ds, part, val),
        )
        if not np.isfinite(rec.forget_loss):
            raise StepSizeError("unlearning diverged (forget loss not finite)")
        trace.records.append(rec)

    record(0)
    snapshots = [edit]
    current_subspaces = list(subspaces)
    for epoch in range(1, cfg.max_epochs + 1):
        bundle = GradientBundle(
            forget=_source_gradient(model, ds, part.forget, current_subspaces, project),
            clean=_source_gradient(model, ds, anchor, current_subspaces, project),
            inst=_source_gradient(
                model, ds, part.retain_inst, current_subspaces, project
            ),
            task=_source_gradient(
                model, ds, part.retain_task, current_subspaces, project
            ),
        )
        if cfg.strategy == "neggrad_plus":
            forget_dir = bundle.forget
        else:
            forget_dir = sequential_orthogonalize(bundle, cfg.eps, skip_sources=skip)
        # Weight each source by its share of the retain pairs so the descent
        # direction tracks the gradient of the overall retain-mean loss; the
        # anchor stands in for the whole clean subset.
        counts = {
            "clean": len(part.retain_clean),
            "inst": len(part.retain_inst),
            "task": len(part.retain_task),
        }
        total_retain = sum(c for name, c in counts.items() if bundle.source(name))
        descent = None
        for name, count in counts.items():
            g = bundle.source(name)
            if g is None:
                continue
            weighted = GradientPair(g.a * (count / total_retain), g.b * (count / total_retain))
            descent = weighted if descent is None else descent + weighted
        edit = apply_update(edit, descent, forget_dir, cfg.eta1, cfg.eta2)
        model = model.with_edit(edit)
        if cfg.strategy != "neggrad_plus":
            current_subspaces = regularize_step(
                current_subspaces, cfg.reg_weight, cfg.reg_step_size
            )
        record(epoch)
        snapshots.append(edit)

    post = [abs(r.mia_auc - trace.reference_auc) for r in trace.records[1:]]
    trace.selected_epoch = 1 + int(np.argmin(post))
    return model.with_edit(snapshots[trace.selected_epoch]), trace
