"""Mini trainability study: deep linear vs ReLU on a separable subset with
random labels, a desk-scale sketch of the full acceptance run.

Deep linear networks plateau at their capacity and hold it task after task;
ReLU networks fit far better at first, then lose trainability. Writes CSVs
and SVG plots under demos/out/linear_vs_relu/.

Run: python demos/03_linear_vs_relu.py   (about two minutes)
"""

import numpy as np

from plastica import ExperimentConfig, aggregate, emit_plots, run_experiment
from plastica.runner import write_run_outputs

OUT = "demos/out/linear_vs_relu"


def recipe(activation, depth):
    return ExperimentConfig(
        name=f"{activation}_depth{depth}",
        out_dir=OUT,
        seeds=(0, 1, 2),
        data_source="synthetic", synthetic_n=3000, synthetic_dim=32,
        synthetic_classes=10, synthetic_noise=0.25, data_seed=99,
        separable_subset=512,
        stream_kind="random_labels", num_tasks=12, epochs_per_task=150,
        batch_size=256,
        depth=depth, width=64, activation=activation,
        optimizer="adam", step_size=0.0005,
        eval_every=150,
    )


def end_accs(log):
    by = {}
    for r in log.rows:
        if r.task_end:
            by.setdefault(r.task, []).append(r.train_acc)
    return [float(np.mean(by[t])) for t in sorted(by)]


if __name__ == "__main__":
    summaries = []
    for activation, depth in [("identity", 1), ("identity", 4), ("relu", 4)]:
        cfg = recipe(activation, depth)
        log = run_experiment(cfg, workers=2)
        write_run_outputs(log, f"{OUT}/{cfg.name}")
        accs = end_accs(log)
        print(f"{cfg.name:16s} task accuracies: "
              + " ".join(f"{a:.2f}" for a in accs))
        summaries.append(aggregate([log]))
    files = emit_plots(summaries, OUT)
    print("plots:", *files, sep="\n  ")
