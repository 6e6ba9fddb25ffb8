"""Numerical verification of the trainability results against independent oracles.

Three checks:

* warm-started gradient descent on sequences of strongly convex quadratic
  tasks, measured suboptimality gap vs the closed-form per-task bound
  2 D (1 - a mu)^T / (a T (1 - (1 - a mu)^T));
* gradient-descent dynamics of deep diagonal linear networks: coordinates
  initialized equal stay equal, coordinates initialized apart never meet,
  and the product-matrix diagonal never sits at zero on two consecutive
  steps unless two layer components are zeroed by hand;
* the sin/cos pair's local-linearity sweep: for every anchor on a grid,
  the better of the two units' first-order Taylor lines is compared against
  a least-squares line fit (the oracle) and the advertised error constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .nn import EngineError

FOURIER_LINEARITY_CONSTANT = math.sqrt(2.0) * math.pi ** 2 / 256.0


@dataclass
class VerificationReport:
    name: str
    passed: bool
    summary: dict = field(default_factory=dict)
    per_task: list = field(default_factory=list)

    def lines(self):
        out = [f"check={self.name}", f"passed={self.passed}"]
        for k, v in self.summary.items():
            out.append(f"{k}={v}")
        for i, rec in enumerate(self.per_task):
            for k, v in rec.items():
                out.append(f"task{i}.{k}={v}")
        return out

    def text(self) -> str:
        return "\n".join(self.lines()) + "\n"


# ---------------------------------------------------------------------------
# Strongly convex task sequences
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Thm1Config:
    dim: int = 10
    num_tasks: int = 10
    iters_per_task: int = 100
    step_size: float = 0.1
    mu: float = 1.0
    param_bound: float = 1.0
    seed: int = 0
    samples_per_dim: int = 4

    def __post_init__(self):
        if self.step_size * self.mu >= 1.0:
            raise EngineError("need step_size * mu < 1 for a nontrivial bound")
        if self.param_bound <= 0:
            raise EngineError("param_bound must be positive")
        if min(self.dim, self.num_tasks, self.iters_per_task) < 1:
            raise EngineError("dim, num_tasks and iters_per_task must be >= 1")


def _log_gap_bound(cfg: Thm1Config) -> float:
    """log of 2 D (1-a mu)^T / (a T (1 - (1-a mu)^T)), evaluated in log space."""
    a, mu, T, D = cfg.step_size, cfg.mu, cfg.iters_per_task, cfg.param_bound
    log_rho_T = T * math.log1p(-a * mu)
    # log(1 - rho^T) via log1p; rho^T may underflow, in which case it is 0.
    rho_T = math.exp(log_rho_T) if log_rho_T > -745 else 0.0
    return math.log(2 * D) + log_rho_T - math.log(a * T) - math.log1p(-rho_T)


def gap_bound(cfg: Thm1Config) -> float:
    return math.exp(_log_gap_bound(cfg))


def _sample_in_ball(rng, dim: int, radius: float) -> np.ndarray:
    v = rng.normal(size=dim)
    v /= np.linalg.norm(v)
    return v * radius * rng.uniform() ** (1.0 / dim)


def verify_theorem1(cfg: Thm1Config) -> VerificationReport:
    """Warm-started GD over random quadratic regression tasks vs the analytic bound.

    The objective is J(theta) = ||X (theta - theta*)||^2 / N with X built so
    the eigenvalues of X^T X / N lie in [mu, 2 mu]; its strong-convexity
    modulus is then 2 mu >= mu and the minimum is exactly 0. Task optima are
    drawn inside the D-ball with consecutive squared distances below 2 D,
    matching the bounded-drift assumption the telescoped bound relies on.
    Comparisons run in log space so tiny gaps and bounds never underflow.
    """
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    d, N = cfg.dim, cfg.samples_per_dim * cfg.dim
    basis = np.linalg.qr(rng.normal(size=(N, d)))[0]
    rot = np.linalg.qr(rng.normal(size=(d, d)))[0]
    eigs = cfg.mu * (1.0 + rng.uniform(0.0, 1.0, size=d))
    eigs[0] = cfg.mu
    X = basis * np.sqrt(N * eigs) @ rot.T
    A = X.T @ X / N
    lam_min = float(np.linalg.eigvalsh(A)[0])
    if lam_min < cfg.mu - 1e-8:
        raise EngineError(
            f"constructed Hessian has lambda_min(X^T X)/N = {lam_min} < mu = {cfg.mu}"
        )

    log_bound = _log_gap_bound(cfg)
    theta = np.zeros(d)
    prev_opt = np.zeros(d)
    per_task, worst_margin = [], math.inf
    all_ok = True
    for _ in range(cfg.num_tasks):
        while True:
            opt = _sample_in_ball(rng, d, cfg.param_bound)
            if float(np.sum((opt - prev_opt) ** 2)) < 2 * cfg.param_bound:
                break
        prev_opt = opt
        # GD on the difference vector: theta - a*grad  <=>  diff <- diff - 2aA diff.
        # Iterating diff directly avoids the float cancellation floor of
        # (theta - opt) once the iterate is within machine epsilon of opt, so
        # tiny gaps stay measurable down to genuine underflow.
        diff = theta - opt
        for _ in range(cfg.iters_per_task):
            diff = diff - cfg.step_size * 2.0 * (A @ diff)
        theta = opt + diff
        gap = float(diff @ A @ diff)
        log_gap = math.log(gap) if gap > 0 else -math.inf
        margin = log_bound - log_gap
        worst_margin = min(worst_margin, margin)
        ok = bool(log_gap < log_bound)
        all_ok = all_ok and ok
        per_task.append({"gap": gap, "bound": math.exp(log_bound), "ok": ok})
    return VerificationReport(
        name="theorem1",
        passed=all_ok,
        summary={
            "dim": d, "num_tasks": cfg.num_tasks, "iters_per_task": cfg.iters_per_task,
            "step_size": cfg.step_size, "mu": cfg.mu, "param_bound": cfg.param_bound,
            "seed": cfg.seed, "bound": math.exp(log_bound),
            "worst_log_margin": worst_margin,
            "max_gap": max(r["gap"] for r in per_task),
        },
        per_task=per_task,
    )


def single_task_gap(dim: int, iters: int, step_size: float, mu: float,
                    param_bound: float, seed: int) -> tuple:
    """Plain GD from zero on one task; returns (gap, D^2 / (a T)) for the
    classic convex suboptimality bound."""
    cfg = Thm1Config(dim=dim, num_tasks=1, iters_per_task=iters,
                     step_size=step_size, mu=mu, param_bound=param_bound, seed=seed)
    report = verify_theorem1(cfg)
    eq1_bound = param_bound ** 2 / (step_size * iters)
    return report.per_task[0]["gap"], eq1_bound


# ---------------------------------------------------------------------------
# Deep diagonal linear dynamics
# ---------------------------------------------------------------------------

def _diag_grad_step(theta: np.ndarray, target: np.ndarray, step_size: float) -> np.ndarray:
    """One GD step on J = sum_i (prod_l theta[l, i] - s_i)^2.

    theta has shape (..., L, d); leave-one-out products come from prefix and
    suffix cumulative products so duplicated layers see bitwise-equal updates.
    """
    L = theta.shape[-2]
    prefix = np.ones_like(theta)
    suffix = np.ones_like(theta)
    if L > 1:
        prefix[..., 1:, :] = np.cumprod(theta[..., :-1, :], axis=-2)
        rev = np.cumprod(theta[..., ::-1, :][..., :-1, :], axis=-2)
        suffix[..., :-1, :] = rev[..., ::-1, :]
    prod = prefix[..., -1, :] * theta[..., -1, :]
    g = 2.0 * (prod - target)
    return theta - step_size * g[..., None, :] * prefix * suffix


def _diag_product(theta: np.ndarray) -> np.ndarray:
    return np.prod(theta, axis=-2)


def _spread_init(rng, depth: int, dim: int, low: float = 0.35, high: float = 1.05):
    """Positive init values with per-coordinate cross-layer gaps of at least
    ~0.05 in value and in square, so the conserved pairwise gaps stay visible."""
    base = np.linspace(low, high - 0.1, depth)[:, None]
    jitter = rng.uniform(0.0, 0.08, size=(depth, dim))
    theta = base + jitter
    for i in range(dim):
        theta[:, i] = rng.permutation(theta[:, i])
    return theta


def verify_lemma_equality(depth: int, dim: int, steps: int, seed: int,
                          step_size: float = 0.01, task_switches: int = 1,
                          rel_tol: float = 1e-10, dist_floor: float = 1e-8) -> VerificationReport:
    """Equality preservation in deep diagonal linear nets.

    Coordinates duplicated across two layers at init must stay equal (within
    rel_tol); coordinates initialized apart must never come within dist_floor
    of each other, across gradient descent on a sequence of squared-error
    tasks with positive diagonal targets.
    """
    if depth < 1 or dim < 1 or steps < 1:
        raise EngineError("depth, dim, steps must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    theta = _spread_init(rng, depth, dim)
    dup_pairs = []
    if depth >= 2:
        for i in range(max(1, dim // 4)):
            l1, l2 = rng.choice(depth, size=2, replace=False)
            theta[l2, i] = theta[l1, i]
            dup_pairs.append((int(l1), int(l2), i))
    report = _run_equality_dynamics(theta[None], [dup_pairs], depth, dim, steps,
                                    task_switches, step_size, rel_tol, dist_floor, rng)
    report.summary.update(depth=depth, dim=dim, steps=steps, seed=seed)
    return report


def _run_equality_dynamics(theta, dup_pairs_per_run, depth, dim, steps, task_switches,
                           step_size, rel_tol, dist_floor, rng) -> VerificationReport:
    """Shared engine for single-seed and stacked multi-seed equality checks.

    theta: (runs, L, d). dup_pairs_per_run: per run, list of (l, l', i).
    Distinct pairs are every cross-layer pair not marked as duplicated.
    """
    runs = theta.shape[0]
    pair_idx = [(a, b) for a in range(depth) for b in range(a + 1, depth)]
    dup_mask = np.zeros((runs, len(pair_idx), dim), dtype=bool)
    for r, pairs in enumerate(dup_pairs_per_run):
        for (l1, l2, i) in pairs:
            a, b = min(l1, l2), max(l1, l2)
            dup_mask[r, pair_idx.index((a, b)), i] = True

    steps_per_task = max(1, steps // max(1, task_switches))
    max_dup_rel = 0.0
    min_distinct = math.inf
    violations = 0
    t = 0
    for task in range(max(1, task_switches)):
        target = rng.uniform(0.25, 1.75, size=(runs, dim))
        for _ in range(steps_per_task):
            theta = _diag_grad_step(theta, target, step_size)
            t += 1
            if pair_idx:
                diffs = np.abs(theta[:, [a for a, _ in pair_idx], :]
                               - theta[:, [b for _, b in pair_idx], :])
                scale = np.maximum(np.abs(theta[:, [a for a, _ in pair_idx], :]), 1e-30)
                rel = diffs / scale
                if dup_mask.any():
                    max_dup_rel = max(max_dup_rel, float(rel[dup_mask].max()))
                distinct = diffs[~dup_mask]
                if distinct.size:
                    min_distinct = min(min_distinct, float(distinct.min()))
        if t >= steps:
            break
    if max_dup_rel > rel_tol:
        violations += 1
    if min_distinct < dist_floor:
        violations += 1
    return VerificationReport(
        name="lemma_equality",
        passed=(violations == 0),
        summary={
            "max_duplicated_rel_diff": max_dup_rel,
            "min_distinct_distance": min_distinct,
            "rel_tol": rel_tol, "dist_floor": dist_floor,
            "task_switches": task_switches, "violations": violations,
        },
    )


def verify_lemma_nonzero(depth: int, dim: int, steps: int, seed: int,
                         task_switches: int = 10, step_size: float = 0.01,
                         zero_tol: float = 1e-12, sv_floor: float = 1e-8) -> VerificationReport:
    """No product-matrix coordinate sits at zero on two consecutive steps.

    Runs a random-target task sequence (signed targets force sign crossings),
    tracking diag(theta_bar). Also runs the two hand-constructed cases: with
    two layer components of one coordinate zeroed the product stays exactly
    zero forever; with a single component zeroed the next update revives it.
    """
    if depth < 1 or dim < 1 or steps < 1:
        raise EngineError("depth, dim, steps must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    theta = _signed_distinct_init(rng, depth, dim)
    report = _run_nonzero_dynamics(theta[None], depth, dim, steps, task_switches,
                                   step_size, zero_tol, sv_floor, rng)
    report.summary.update(depth=depth, dim=dim, steps=steps, seed=seed)

    # Adversarial case A: two components zeroed -> product pinned at 0 exactly.
    if depth >= 2:
        theta_a = _signed_distinct_init(rng, depth, dim)
        theta_a[0, 0] = 0.0
        theta_a[1, 0] = 0.0
        target = rng.uniform(0.25, 1.75, size=dim) * rng.choice([-1.0, 1.0], size=dim)
        stuck = True
        th = theta_a.copy()
        for _ in range(min(steps, 200)):
            th = _diag_grad_step(th, target, step_size)
            if _diag_product(th)[0] != 0.0:
                stuck = False
                break
        report.summary["double_zero_stays_zero"] = stuck
        report.passed = report.passed and stuck

    # Adversarial case B: one component zeroed -> gradient revives the product.
    theta_b = _signed_distinct_init(rng, depth, dim)
    theta_b[0, 0] = 0.0
    target = rng.uniform(0.25, 1.75, size=dim) * rng.choice([-1.0, 1.0], size=dim)
    th = _diag_grad_step(theta_b, target, step_size)
    revived = bool(_diag_product(th)[0] != 0.0)
    report.summary["single_zero_revives"] = revived
    report.passed = report.passed and revived
    return report


def _signed_distinct_init(rng, depth: int, dim: int) -> np.ndarray:
    theta = _spread_init(rng, depth, dim, low=0.3, high=0.8)
    return theta * rng.choice([-1.0, 1.0], size=(depth, dim))


def _run_nonzero_dynamics(theta, depth, dim, steps, task_switches, step_size,
                          zero_tol, sv_floor, rng) -> VerificationReport:
    runs = theta.shape[0]
    steps_per_task = max(1, steps // max(1, task_switches))
    prev_zero = np.abs(_diag_product(theta)) <= zero_tol
    consecutive_zero_events = 0
    min_end_sv = math.inf
    t = 0
    for task in range(max(1, task_switches)):
        target = (rng.uniform(0.25, 1.75, size=(runs, dim))
                  * rng.choice([-1.0, 1.0], size=(runs, dim)))
        for _ in range(steps_per_task):
            theta = _diag_grad_step(theta, target, step_size)
            t += 1
            prod = _diag_product(theta)
            zero = np.abs(prod) <= zero_tol
            consecutive_zero_events += int(np.count_nonzero(zero & prev_zero))
            prev_zero = zero
        # sigma_min of a diagonal matrix is the smallest absolute diagonal.
        end_sv = float(np.abs(_diag_product(theta)).min())
        min_end_sv = min(min_end_sv, end_sv)
        if t >= steps:
            break
    passed = consecutive_zero_events == 0 and min_end_sv > sv_floor
    return VerificationReport(
        name="lemma_nonzero",
        passed=passed,
        summary={
            "consecutive_zero_events": consecutive_zero_events,
            "min_end_of_task_sv": min_end_sv,
            "zero_tol": zero_tol, "sv_floor": sv_floor,
            "task_switches": task_switches,
        },
    )


# ---------------------------------------------------------------------------
# Fourier pair local linearity
# ---------------------------------------------------------------------------

def _max_abs_line_error(f_vals: np.ndarray, offsets: np.ndarray,
                        intercept: np.ndarray, slope: np.ndarray) -> np.ndarray:
    return np.abs(f_vals - (intercept[:, None] + slope[:, None] * offsets)).max(axis=1)


def fourier_pair_line_errors(z: np.ndarray, half_width: float = math.pi / 4,
                             inner_step: float = 1e-3):
    """Per-anchor max-abs errors of the sin and cos first-order Taylor lines
    and of least-squares line fits, over [z - half_width, z + half_width].

    Returns (sin_taylor, cos_taylor, sin_ls, cos_ls) arrays matching z.
    """
    offsets = np.concatenate([np.arange(-half_width, half_width, inner_step),
                              [half_width]])
    x = z[:, None] + offsets[None, :]
    sin_vals, cos_vals = np.sin(x), np.cos(x)
    sin_taylor = _max_abs_line_error(sin_vals, offsets, np.sin(z), np.cos(z))
    cos_taylor = _max_abs_line_error(cos_vals, offsets, np.cos(z), -np.sin(z))
    # Least-squares fit over the symmetric offset grid: slope from the odd
    # moment, intercept from the mean.
    denom = float(np.sum(offsets * offsets))
    sin_ls = _max_abs_line_error(sin_vals, offsets, sin_vals.mean(axis=1),
                                 (sin_vals * offsets).sum(axis=1) / denom)
    cos_ls = _max_abs_line_error(cos_vals, offsets, cos_vals.mean(axis=1),
                                 (cos_vals * offsets).sum(axis=1) / denom)
    return sin_taylor, cos_taylor, sin_ls, cos_ls


def verify_fourier_linearity(grid_step: float = 0.01, half_width: float = math.pi / 4,
                             inner_step: float = 1e-3,
                             tolerance: float = 1e-6) -> VerificationReport:
    """Sweep anchors z over [-pi, pi]; at each, compare sin's and cos's
    first-order Taylor lines at z against the values on [z - w, z + w], and
    against least-squares line fits as the oracle.

    Asserted quantity: min over the {sin, cos} pair of the Taylor line's max
    absolute error, at every anchor, against the advertised constant
    sqrt(2) pi^2 / 2^8 (+ tolerance). The report also carries the oracle
    (least-squares) errors, which here are never worse than the Taylor lines,
    and the worst anchor.
    """
    if grid_step <= 0 or inner_step <= 0:
        raise EngineError("grid_step and inner_step must be positive")
    z = np.arange(-math.pi, math.pi + grid_step / 2, grid_step)
    sin_taylor, cos_taylor, sin_ls, cos_ls = fourier_pair_line_errors(
        z, half_width, inner_step)
    pair_taylor = np.minimum(sin_taylor, cos_taylor)
    pair_ls = np.minimum(sin_ls, cos_ls)
    worst = int(np.argmax(pair_taylor))
    bound = FOURIER_LINEARITY_CONSTANT + tolerance
    oracle_consistent = bool(np.all(pair_ls <= pair_taylor + 1e-9))
    return VerificationReport(
        name="fourier_linearity",
        passed=bool(pair_taylor.max() <= bound) and oracle_consistent,
        summary={
            "constant": FOURIER_LINEARITY_CONSTANT,
            "bound": bound,
            "max_pair_taylor_error": float(pair_taylor.max()),
            "max_pair_leastsquares_error": float(pair_ls.max()),
            "worst_anchor": float(z[worst]),
            "oracle_never_worse_than_taylor": oracle_consistent,
            "grid_points": int(z.size),
        },
    )


# ---------------------------------------------------------------------------
# Batched lemma sweeps (used by the acceptance gate; same dynamics engine)
# ---------------------------------------------------------------------------

def sweep_lemma_checks(seeds, depths, dims, steps: int, task_switches: int,
                       step_size: float = 0.01) -> VerificationReport:
    """Run both lemma checks for every (seed, depth, dim) combination, with
    seeds stacked into one vectorized simulation per combination."""
    total_violations = 0
    worst = {"max_duplicated_rel_diff": 0.0, "min_distinct_distance": math.inf,
             "consecutive_zero_events": 0, "min_end_of_task_sv": math.inf}
    for depth in depths:
        for dim in dims:
            inits, dup_lists = [], []
            for seed in seeds:
                rng = np.random.Generator(np.random.PCG64(seed))
                theta = _spread_init(rng, depth, dim)
                pairs = []
                if depth >= 2:
                    for i in range(max(1, dim // 4)):
                        l1, l2 = rng.choice(depth, size=2, replace=False)
                        theta[l2, i] = theta[l1, i]
                        pairs.append((int(l1), int(l2), i))
                inits.append(theta)
                dup_lists.append(pairs)
            rng = np.random.Generator(np.random.PCG64((depth, dim, 0xE0)))
            rep_eq = _run_equality_dynamics(np.stack(inits), dup_lists, depth, dim,
                                            steps, task_switches, step_size,
                                            1e-10, 1e-8, rng)
            inits = []
            for seed in seeds:
                rng_s = np.random.Generator(np.random.PCG64((seed, 0xA5)))
                inits.append(_signed_distinct_init(rng_s, depth, dim))
            rng = np.random.Generator(np.random.PCG64((depth, dim, 0xE1)))
            rep_nz = _run_nonzero_dynamics(np.stack(inits), depth, dim, steps,
                                           task_switches, step_size, 1e-12, 1e-8, rng)
            total_violations += rep_eq.summary["violations"]
            total_violations += 0 if rep_nz.passed else 1
            worst["max_duplicated_rel_diff"] = max(
                worst["max_duplicated_rel_diff"], rep_eq.summary["max_duplicated_rel_diff"])
            worst["min_distinct_distance"] = min(
                worst["min_distinct_distance"], rep_eq.summary["min_distinct_distance"])
            worst["consecutive_zero_events"] += rep_nz.summary["consecutive_zero_events"]
            worst["min_end_of_task_sv"] = min(
                worst["min_end_of_task_sv"], rep_nz.summary["min_end_of_task_sv"])
    return VerificationReport(
        name="lemma_sweep",
        passed=(total_violations == 0),
        summary={"violations": total_violations, **worst,
                 "seeds": len(list(seeds)), "depths": list(depths), "dims": list(dims),
                 "steps": steps, "task_switches": task_switches},
    )
