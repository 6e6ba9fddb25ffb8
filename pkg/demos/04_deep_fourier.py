"""Deep Fourier features on the hard memorization stream.

Every example gets a fresh random label each task; nothing is linearly
fittable. ReLU networks decay to chance; a network with sin/cos pairs in
every hidden layer keeps improving its per-task memorization. Writes SVG
curves under demos/out/deep_fourier/.

Run: python demos/04_deep_fourier.py   (a few minutes)
"""

from plastica import ExperimentConfig, aggregate, emit_plots, run_experiment

OUT = "demos/out/deep_fourier"


def recipe(activation):
    return ExperimentConfig(
        name=activation, out_dir=OUT, seeds=(0, 1),
        data_source="synthetic_uniform", synthetic_n=12800, synthetic_dim=64,
        synthetic_classes=10, data_seed=77,
        stream_kind="random_labels", num_tasks=12, epochs_per_task=8,
        batch_size=256, depth=3, width=256, activation=activation,
        optimizer="adam", step_size=0.003, eval_every=8,
    )


if __name__ == "__main__":
    summaries = []
    for activation in ("fourier", "relu", "sin"):
        log = run_experiment(recipe(activation), workers=2)
        ends = [r.train_acc for r in log.rows if r.task_end and r.seed == 0]
        print(f"{activation:8s} per-task train accuracy: "
              + " ".join(f"{a:.2f}" for a in ends))
        summaries.append(aggregate([log]))
    print("plots:", *emit_plots(summaries, OUT), sep="\n  ")
