"""Plasticity interventions on a diminishing label-noise stream.

Compares a bare ReLU network against L2-to-init, spectral regularization,
shrink-and-perturb, and dormant-unit recycling, reporting clean test accuracy
at the end of the (clean) final task.

Run: python demos/05_interventions.py
"""

import numpy as np

from plastica import ExperimentConfig, run_experiment

INTERVENTIONS = ["none", "l2_init:0.01", "spectral:0.01", "shrink_perturb", "redo:0.03"]


def recipe(intervention):
    return ExperimentConfig(
        name=f"noise_{intervention.split(':')[0]}",
        seeds=(0, 1, 2),
        data_source="synthetic", synthetic_n=2048, synthetic_dim=32,
        synthetic_classes=10, synthetic_noise=0.20, data_seed=5,
        stream_kind="label_noise", num_tasks=10, epochs_per_task=25,
        initial_noise=0.5, batch_size=256,
        depth=3, width=64, activation="relu",
        optimizer="adam", step_size=0.001,
        intervention=intervention, shrink=0.8, noise_std=0.01,
        eval_every=25,
    )


if __name__ == "__main__":
    for intervention in INTERVENTIONS:
        log = run_experiment(recipe(intervention), workers=2)
        final = [r.test_acc for r in log.rows if r.task_end and r.task == 9]
        mid = [r.test_acc for r in log.rows if r.task_end and r.task == 4]
        print(f"{intervention:16s} test acc: mid-stream {np.mean(mid):.3f}  "
              f"final (clean) {np.mean(final):.3f}")
