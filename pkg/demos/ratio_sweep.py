"""Sweep the forget ratio and watch the forgetting/retention trade-off.

For each ratio the full pipeline runs: train Original and Retrain, unlearn
with the projected sequential-orthogonalization strategy, then report the
forget loss, clean-retain drift, and impact score.
"""

import argparse

import numpy as np

from mtunlearn import (
    GenConfig,
    TrainConfig,
    UISInput,
    UnlearnConfig,
    default_forget_split,
    evaluate,
    generate_synthetic,
    init_subspaces,
    run_unlearning,
    subset_loss,
    train_reference,
    uis,
)


def run_ratio(ratio, seed):
    cfg = GenConfig(
        n_instances=200, input_dim=16, n_tasks=3, task_dims=(2, 2, 2),
        shared_dim=12, teacher_rank=6, noise_std=0.3, seed=seed, n_val=100,
    )
    problem = generate_synthetic(cfg)
    ds = problem.dataset
    part = default_forget_split(ds, ratio, [0], seed)
    tc = TrainConfig(epochs=400, step_size=0.3, seed=seed)
    original = train_reference(problem, ds.all_pairs(), tc)
    retrain = train_reference(problem, list(part.retain), tc)
    subspaces = init_subspaces(3, rank=6, dim=2, mode="random", seed=seed)
    ucfg = UnlearnConfig(
        setting="partial", eta1=0.3, eta2=0.05, max_epochs=20,
        anchor_fraction=1.0, seed=seed,
    )
    model, trace = run_unlearning(original, problem, part, subspaces, ucfg, retrain)
    reports = {
        name: evaluate(m, ds, part, problem.val_dataset)
        for name, m in (("orig", original), ("ret", retrain), ("unl", model))
    }
    score = uis(UISInput(
        evaluated=reports["unl"], original_ref=reports["orig"],
        retrain_ref=reports["ret"], setting="partial", forget_tasks=frozenset({0}),
    ))
    clean_drift = abs(
        subset_loss(model, ds, part.retain_clean)
        - subset_loss(original, ds, part.retain_clean)
    ) / subset_loss(original, ds, part.retain_clean)
    return {
        "forget_loss": subset_loss(model, ds, part.forget),
        "clean_drift": clean_drift,
        "uis": score,
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--ratios", default="0.1,0.2,0.3,0.4,0.5")
    parser.add_argument("--seeds", type=int, default=3)
    args = parser.parse_args()
    ratios = [float(r) for r in args.ratios.split(",")]

    print(f"{'ratio':>6s} {'forget loss':>12s} {'clean drift':>12s} {'impact':>8s}")
    for ratio in ratios:
        rows = [run_ratio(ratio, seed) for seed in range(args.seeds)]
        fl = np.mean([r["forget_loss"] for r in rows])
        cd = np.mean([r["clean_drift"] for r in rows])
        sc = np.mean([r["uis"] for r in rows])
        print(f"{ratio:6.2f} {fl:12.4f} {100 * cd:11.1f}% {100 * sc:7.1f}%")


if __name__ == "__main__":
    main()
