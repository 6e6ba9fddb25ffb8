"""Experiment driver: train/evaluate loops over task streams, multi-seed
orchestration, CSV logging.

A run is deterministic in (config, seed): datasets derive from the config's
data_seed, streams and networks from the run seed, and boundary interventions
from (seed, task). Seeds can execute sequentially or in a process pool; the
per-seed rows are identical either way.
"""

from __future__ import annotations

import io
import multiprocessing as mp
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .config import ExperimentConfig, OptimizerConfigOf, parse_activation, parse_norm, parse_intervention
from .metrics import (
    MetricsRecord, min_singular_value, param_l2,
    positive_fraction, spectral_norm, unit_sign_entropy,
)
from .nn import (
    EngineError, Fourier, Identity, ReLU, build_mlp, forward, init_network,
    backward, loss_and_grad, product_matrix, SOFTMAX_CROSS_ENTROPY,
)
from .optim import (
    NoIntervention, OptimizerState, ReDO, ShrinkPerturb, Spectral,
    optimizer_step, regularizer_grad, redo_reset, shrink_and_perturb,
)
from . import streams as streams_mod
from .streams import (
    batches, class_incremental_stream, label_noise_stream, load_idx,
    make_blob_dataset, make_linearly_separable_subset, make_uniform_dataset,
    pixel_permutation_stream, random_label_stream,
)

EVAL_CHUNK = 2048


def _child_seed(seed: int, tag: int) -> int:
    return int(np.random.SeedSequence((seed, tag)).generate_state(1, np.uint64)[0])


@dataclass
class RunLog:
    config: dict
    rows: list = field(default_factory=list)
    code_version: str = __version__
    aborted_seeds: tuple = ()

    def sorted_rows(self):
        return sorted(self.rows, key=lambda r: (r.seed, r.iteration, r.task, r.epoch))


# ---------------------------------------------------------------------------
# Dataset / stream / network construction
# ---------------------------------------------------------------------------

def build_dataset(cfg: ExperimentConfig):
    """Base (train) dataset plus optional held-out test dataset."""
    if cfg.data_source == "synthetic":
        ds = make_blob_dataset(cfg.synthetic_n, cfg.synthetic_dim,
                               cfg.synthetic_classes, cfg.data_seed,
                               noise=cfg.synthetic_noise)
        test = None
    elif cfg.data_source == "synthetic_uniform":
        ds = make_uniform_dataset(cfg.synthetic_n, cfg.synthetic_dim,
                                  cfg.synthetic_classes, cfg.data_seed)
        test = None
    elif cfg.data_source == "idx":
        ds = load_idx(cfg.images_path, cfg.labels_path, name="train")
        test = None
        if cfg.test_images_path:
            test = load_idx(cfg.test_images_path, cfg.test_labels_path, name="test")
    else:
        raise EngineError(f"unknown data_source: {cfg.data_source!r}")
    if cfg.subsample and cfg.subsample < ds.size:
        rng = np.random.Generator(np.random.PCG64((cfg.data_seed, 0x5B)))
        idx = rng.choice(ds.size, size=cfg.subsample, replace=False)
        ds = streams_mod.Dataset(ds.images[idx], ds.labels[idx], ds.num_classes,
                                 name=ds.name + "-sub")
    if cfg.separable_subset:
        ds = make_linearly_separable_subset(ds, cfg.separable_subset, cfg.data_seed)
    return ds, test


def build_stream(cfg: ExperimentConfig, ds, test, seed: int):
    kind = cfg.stream_kind
    if kind == streams_mod.RANDOM_LABELS:
        return random_label_stream(ds, cfg.num_tasks, seed)
    if kind == streams_mod.LABEL_NOISE:
        return label_noise_stream(ds, seed, num_tasks=cfg.num_tasks,
                                  initial_noise=cfg.initial_noise, test=test)
    if kind == streams_mod.CLASS_INCREMENTAL:
        return class_incremental_stream(ds, seed, classes_per_task=cfg.classes_per_task,
                                        num_tasks=cfg.num_tasks, test=test)
    if kind == streams_mod.PIXEL_PERMUTATION:
        return pixel_permutation_stream(ds, cfg.num_tasks, seed, test=test)
    raise EngineError(f"unknown stream kind: {kind!r}")


def build_network(cfg: ExperimentConfig, input_dim: int, output_dim: int, seed: int):
    act = parse_activation(cfg.activation)
    norm = parse_norm(cfg.norm)
    if act == "fourier_then_relu":
        spec = build_mlp(input_dim, output_dim, cfg.depth, cfg.width,
                         hidden_activation=ReLU(), norm=norm,
                         first_layer_activation=Fourier(), use_bias=cfg.use_bias)
    else:
        spec = build_mlp(input_dim, output_dim, cfg.depth, cfg.width,
                         hidden_activation=act, norm=norm, use_bias=cfg.use_bias)
    return init_network(spec, seed)


# ---------------------------------------------------------------------------
# Evaluation helpers
# ---------------------------------------------------------------------------

def _batched_accuracy(net, x, y) -> float:
    hits = 0
    for start in range(0, x.shape[0], EVAL_CHUNK):
        logits = forward(net, x[start:start + EVAL_CHUNK]).logits
        hits += int((logits.argmax(axis=1) == y[start:start + EVAL_CHUNK]).sum())
    return hits / x.shape[0]


def _is_deep_linear(net) -> bool:
    return all(isinstance(l.activation, Identity) and l.norm is None for l in net.layers)


def _probe_batch(stream, task: int, batch_size: int):
    return next(iter(batches(stream, task, 0, batch_size)))


def _metrics_row(cfg, net, stream, seed, task, epoch, iteration, train_loss,
                 probe, task_end) -> MetricsRecord:
    x_tr, y_tr = stream.train_data(task)
    train_acc = _batched_accuracy(net, x_tr, y_tr)
    x_ev, y_ev = stream.eval_data(task)
    test_acc = _batched_accuracy(net, x_ev, y_ev)
    trace = forward(net, probe.x)
    entropies, pos_fracs = [], []
    for l in range(net.num_layers - 1):
        entropies.append(float(unit_sign_entropy(trace.outputs[l]).mean()))
        pos_fracs.append(float(positive_fraction(trace.outputs[l]).mean()))
    min_sv = None
    if _is_deep_linear(net):
        min_sv = min_singular_value(product_matrix(net))
    return MetricsRecord(
        seed=seed, task=task, epoch=epoch, iteration=iteration,
        train_loss=train_loss, train_acc=train_acc, test_acc=test_acc,
        mean_sign_entropy=entropies, mean_pos_frac=pos_fracs,
        spectral_norms=[spectral_norm(w) for w in net.weights],
        min_sv=min_sv, param_l2=param_l2(net), task_end=task_end,
    )


# ---------------------------------------------------------------------------
# The per-seed training loop
# ---------------------------------------------------------------------------

def run_single_seed(cfg: ExperimentConfig, seed: int):
    """Train one seed through the whole stream. Returns (rows, aborted)."""
    try:
        import threadpoolctl
    except ImportError:
        return _run_single_seed_inner(cfg, seed)
    # one BLAS thread, always: oversubscribed threads lose an order of
    # magnitude on these small matmuls, and sequential vs pooled execution
    # must round identically for the bitwise-equivalence contract
    with threadpoolctl.threadpool_limits(1):
        return _run_single_seed_inner(cfg, seed)


def _run_single_seed_inner(cfg: ExperimentConfig, seed: int):
    ds, test = build_dataset(cfg)
    stream = build_stream(cfg, ds, test, seed)
    net = build_network(cfg, ds.dim, ds.num_classes, _child_seed(seed, 0x11))
    opt_cfg = OptimizerConfigOf(cfg)
    opt_state = OptimizerState(net)
    intervention = parse_intervention(cfg.intervention, power_iters=cfg.power_iters,
                                      every_n_tasks=cfg.every_n_tasks,
                                      shrink=cfg.shrink, noise_std=cfg.noise_std)
    is_regularizer = not isinstance(intervention, (ShrinkPerturb, ReDO))
    power_state = {} if isinstance(intervention, Spectral) else None

    rows = []
    iteration = 0
    try:
        for task in range(cfg.num_tasks):
            if task > 0 and cfg.epochs_per_task > 0:
                _apply_boundary_intervention(cfg, net, stream, intervention, seed, task)
            probe = _probe_batch(stream, task, cfg.batch_size) if cfg.epochs_per_task else None
            for epoch in range(cfg.epochs_per_task):
                loss_sum, loss_count = 0.0, 0
                for batch in batches(stream, task, epoch, cfg.batch_size):
                    trace = forward(net, batch.x)
                    loss, dlogits = loss_and_grad(trace.logits, batch.y,
                                                  SOFTMAX_CROSS_ENTROPY)
                    grads = backward(net, trace, dlogits)
                    if is_regularizer and not isinstance(intervention, NoIntervention):
                        grads.add_(regularizer_grad(net, intervention, power_state))
                    optimizer_step(net, opt_state, grads, opt_cfg)
                    iteration += 1
                    loss_sum += loss
                    loss_count += 1
                task_end = epoch == cfg.epochs_per_task - 1
                if task_end or (epoch + 1) % cfg.eval_every == 0:
                    rows.append(_metrics_row(cfg, net, stream, seed, task, epoch,
                                             iteration, loss_sum / max(1, loss_count),
                                             probe, task_end))
    except EngineError as exc:
        rows.append(MetricsRecord(seed=seed, task=-1, epoch=-1, iteration=iteration,
                                  aborted=True))
        return rows, str(exc)
    return rows, None


def _apply_boundary_intervention(cfg, net, stream, intervention, seed, task):
    if isinstance(intervention, ShrinkPerturb):
        if task % intervention.every_n_tasks == 0:
            shrink_and_perturb(net, intervention.shrink, intervention.noise_std,
                               _child_seed(seed, 0x5000 + task))
    elif isinstance(intervention, ReDO):
        if task % intervention.every_n_tasks == 0:
            probe = _probe_batch(stream, task, cfg.batch_size)
            trace = forward(net, probe.x)
            redo_reset(net, trace, intervention.threshold,
                       _child_seed(seed, 0x6000 + task))


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> RunLog:
    """Run every seed; seed-level parallelism only, merged in seed order."""
    log = RunLog(config=cfg.resolved())
    aborted = []
    if workers > 1 and len(cfg.seeds) > 1:
        # fork where available: workers inherit the loaded package and skip
        # the __main__ re-import that spawn imposes on caller scripts
        method = "fork" if "fork" in mp.get_all_start_methods() else "spawn"
        ctx = mp.get_context(method)
        with ctx.Pool(min(workers, len(cfg.seeds))) as pool:
            results = pool.starmap(run_single_seed, [(cfg, s) for s in cfg.seeds])
    else:
        results = [run_single_seed(cfg, s) for s in cfg.seeds]
    for seed, (rows, error) in zip(cfg.seeds, results):
        log.rows.extend(rows)
        if error is not None:
            aborted.append((seed, error))
    log.aborted_seeds = tuple(aborted)
    log.rows = log.sorted_rows()
    return log


# ---------------------------------------------------------------------------
# CSV serialization
# ---------------------------------------------------------------------------

def csv_header(depth: int) -> list:
    hidden = depth - 1
    cols = ["seed", "task", "epoch", "iteration", "train_loss", "train_acc", "test_acc"]
    cols += [f"mean_sign_entropy_l{l + 1}" for l in range(hidden)]
    cols += ["min_sv", "param_l2"]
    cols += [f"spectral_norm_l{l + 1}" for l in range(depth)]
    cols += [f"mean_pos_frac_l{l + 1}" for l in range(hidden)]
    cols += ["task_end", "aborted"]
    return cols


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def log_to_csv(log: RunLog) -> str:
    depth = int(log.config["depth"])
    header = csv_header(depth)
    hidden = depth - 1
    out = io.StringIO()
    out.write(",".join(header) + "\n")
    for r in log.rows:
        ent = list(r.mean_sign_entropy) + [None] * (hidden - len(r.mean_sign_entropy))
        pos = list(r.mean_pos_frac) + [None] * (hidden - len(r.mean_pos_frac))
        spec = list(r.spectral_norms) + [None] * (depth - len(r.spectral_norms))
        cells = [r.seed, r.task, r.epoch, r.iteration, r.train_loss, r.train_acc,
                 r.test_acc, *ent, r.min_sv, r.param_l2, *spec, *pos,
                 r.task_end, r.aborted]
        out.write(",".join(_fmt(c) for c in cells) + "\n")
    return out.getvalue()


def write_run_outputs(log: RunLog, run_dir) -> None:
    import os

    os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(run_dir, "run.csv"), "w", encoding="utf-8", newline="\n") as f:
        f.write(log_to_csv(log))
    with open(os.path.join(run_dir, "config.resolved"), "w", encoding="utf-8", newline="\n") as f:
        f.write(f"code_version={log.code_version}\n")
        for key in sorted(log.config):
            f.write(f"{key}={log.config[key]!r}\n")


# ---------------------------------------------------------------------------
# Aggregation across seeds
# ---------------------------------------------------------------------------

_AGG_SCALARS = ("train_loss", "train_acc", "test_acc", "min_sv", "param_l2")


@dataclass
class Summary:
    label: str
    rows: list          # dicts: task, epoch, iteration, task_end, metrics{name: (mean, sem)}
    num_seeds: int


def _mean_sem(values) -> tuple:
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    sem = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
    return mean, sem


def aggregate(logs) -> Summary:
    """Per-(task, epoch) mean and standard error across seeds.

    All logs must share a config up to their seed lists."""
    logs = list(logs)
    if not logs:
        raise EngineError("aggregate needs at least one RunLog")
    ref = {k: v for k, v in logs[0].config.items() if k != "seeds"}
    for log in logs[1:]:
        other = {k: v for k, v in log.config.items() if k != "seeds"}
        if other != ref:
            raise EngineError("aggregate requires configs identical up to seeds")
    rows = [r for log in logs for r in log.rows if not r.aborted]
    seeds = sorted({r.seed for r in rows})
    groups = {}
    for r in rows:
        groups.setdefault((r.task, r.epoch), []).append(r)
    out = []
    for (task, epoch) in sorted(groups):
        members = groups[(task, epoch)]
        metrics = {}
        for name in _AGG_SCALARS:
            vals = [getattr(r, name) for r in members if getattr(r, name) is not None]
            if vals:
                metrics[name] = _mean_sem(vals)
        ent = [float(np.mean(r.mean_sign_entropy)) for r in members if r.mean_sign_entropy]
        if ent:
            metrics["mean_sign_entropy"] = _mean_sem(ent)
        out.append({
            "task": task, "epoch": epoch,
            "iteration": members[0].iteration,
            "task_end": all(r.task_end for r in members),
            "metrics": metrics,
        })
    return Summary(label=str(logs[0].config.get("name", "run")), rows=out,
                   num_seeds=len(seeds))
