"""Experiment orchestration: image pairs, epsilon sweeps, CSV and SVG emission.

Each trial draws a fresh image pair from the selected dataset; each epsilon
in the sweep is interpreted relative to the largest cost entry (so a value of
0.1 asks for a tenth of the cost diameter) and expanded through the solver's
parameter rule. The per-trial exact optimum is computed once and shared
across the sweep.

Two CSV files are the contract: a summary table with one row per
(trial, epsilon) cell and a curve table with the rounded-cost error at
sampled iterations (every iteration for the alternating solver, every n for
the greedy one, plus the final iterate). Identical spec and seed produce
byte-identical CSVs; the SVG plots are a convenience rendering of the same
data.

The per-iteration invariant audit covers the reference-free inequalities
(ascent, gain identities, improvement floors, oscillation bounds, iteration
bounds, cache coherence). The checks that need a high-precision reference
optimum are exercised by the test suite instead: at the tiny regularization
the epsilon rule picks, computing that reference is far more expensive than
the benchmark run itself.
"""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import greenkhorn as gk
from . import sinkhorn as sk
from .core import Problem, plan_from_potentials
from .datasets import load_mnist, pixel_cost, synthetic_images
from .greenkhorn import GreenkhornAuditor, greenkhorn_solve
from .oracle import exact_ot
from .rounding import certified_cost, round_to_polytope
from .sinkhorn import LIFTED, VANILLA, SinkhornAuditor, SinkhornConfig, lift_marginals, sinkhorn_solve

DATASETS = ("mnist", "synthetic")
ALGORITHMS = ("sinkhorn", "sinkhorn-lifted", "greenkhorn", "greenkhorn-lifted")

SUMMARY_COLUMNS = [
    "dataset", "algo", "trial", "epsilon", "gamma", "delta", "n", "iterations",
    "rounded_cost", "exact_cost", "gap", "theorem_bound", "invariant_violations",
]
CURVE_COLUMNS = ["dataset", "algo", "trial", "epsilon", "iteration", "cost_error"]


@dataclass(frozen=True)
class ExperimentSpec:
    """Benchmark protocol: dataset, algorithm, epsilon sweep, trials, seed, size."""

    dataset: str
    algorithm: str
    epsilons: tuple
    trials: int
    seed: int
    side: int
    foreground_fraction: float = 0.2

    def __post_init__(self):
        if self.dataset not in DATASETS:
            raise ValueError(f"unknown dataset {self.dataset!r}")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        eps = tuple(float(e) for e in self.epsilons)
        if not eps or any(e <= 0 for e in eps):
            raise ValueError("epsilons must be a nonempty list of positive reals")
        object.__setattr__(self, "epsilons", eps)
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.side < 2:
            raise ValueError("side must be at least 2")


@dataclass
class RunReport:
    """One (trial, epsilon) cell of the experiment."""

    trial: int
    epsilon: float
    gamma: float
    delta: float
    iterations: int
    converged: bool
    rounded_cost: float
    exact_cost: float
    gap: float
    theorem_bound: int
    violations: list = field(default_factory=list)
    curve: list = field(default_factory=list)


@dataclass
class ExperimentSummary:
    spec: ExperimentSpec
    reports: list
    summary_csv: Path
    curves_csv: Path
    error_svg: Path
    scaling_svg: Path
    report_path: Path
    invariants_checked: bool

    @property
    def total_violations(self):
        return sum(len(r.violations) for r in self.reports)


def _image_pairs(spec, mnist_path):
    if spec.dataset == "synthetic":
        images = synthetic_images(2 * spec.trials, spec.side,
                                  foreground_fraction=spec.foreground_fraction,
                                  seed=spec.seed)
    else:
        if mnist_path is None:
            raise ValueError("the mnist dataset needs --mnist-path")
        images = load_mnist(mnist_path, 2 * spec.trials, spec.seed, side=spec.side)
    return [(images[2 * t].pixels, images[2 * t + 1].pixels) for t in range(spec.trials)]


class _CurveRecorder:
    """Samples the rounded-plan cost error along a run."""

    def __init__(self, problem, original_a, original_b, exact_cost, stride):
        self.problem = problem
        self.a = original_a
        self.b = original_b
        self.exact_cost = exact_cost
        self.stride = stride
        self.points = []

    def __call__(self, record, pot):
        if record.k % self.stride != 0:
            return
        plan = plan_from_potentials(self.problem, pot)
        rounded = round_to_polytope(plan, self.a, self.b)
        # Plain pairwise summation is plenty for plot data; the summary row
        # prices the final plan with compensated summation.
        cost = float(np.tensordot(self.problem.C, rounded.P))
        self.points.append((record.k, cost - self.exact_cost))


def _chain(*callbacks):
    callbacks = [c for c in callbacks if c is not None]
    if not callbacks:
        return None

    def chained(record, pot):
        for c in callbacks:
            c(record, pot)

    return chained


def _run_cell(spec, trial, a, b, C, epsilon, exact_cost, check_invariants, record_curve):
    greedy = spec.algorithm.startswith("greenkhorn")
    lifted = spec.algorithm.endswith("lifted")
    n = a.size
    cost_sup = float(np.max(C))

    if greedy:
        gamma, delta = gk.epsilon_parameters(n, cost_sup, epsilon)
        bound = gk.iteration_bound(n, cost_sup, gamma, delta)
    else:
        gamma, delta = sk.epsilon_parameters(n, cost_sup, epsilon)
        bound = sk.iteration_bound(cost_sup, gamma, delta)

    if lifted:
        run_a, run_b = lift_marginals(a, b, min(delta, 1.0))
        run_delta = delta / 2.0
    else:
        run_a, run_b = a, b
        run_delta = delta
    problem = Problem(run_a, run_b, C, gamma)
    config = SinkhornConfig(delta=run_delta)

    auditor = None
    if check_invariants:
        auditor = (GreenkhornAuditor if greedy else SinkhornAuditor)(problem, config)
    recorder = None
    if record_curve and exact_cost is not None:
        recorder = _CurveRecorder(problem, a, b, exact_cost, stride=n if greedy else 1)
    callback = _chain(auditor, recorder)

    if greedy:
        # Without the audit, telemetry is only needed at the curve samples.
        stride = 1 if check_invariants else n
        result = greenkhorn_solve(problem, config, callback=callback, callback_stride=stride)
    else:
        result = sinkhorn_solve(problem, config, callback=callback)

    violations = auditor.finish(result) if auditor is not None else []
    rounded = round_to_polytope(result.plan, a, b)
    rounded_cost = certified_cost(rounded, Problem(a, b, C, gamma))
    gap = rounded_cost - exact_cost if exact_cost is not None else math.nan
    curve = list(recorder.points) if recorder is not None else []
    if recorder is not None and (not curve or curve[-1][0] != result.iterations):
        curve.append((result.iterations, rounded_cost - exact_cost))

    return RunReport(
        trial=trial,
        epsilon=epsilon,
        gamma=gamma,
        delta=delta,
        iterations=result.iterations,
        converged=result.converged,
        rounded_cost=rounded_cost,
        exact_cost=exact_cost if exact_cost is not None else math.nan,
        gap=gap,
        theorem_bound=bound,
        violations=[(trial, epsilon) + v for v in violations],
        curve=curve,
    )


def _fmt(value):
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return repr(value)
    return str(value)


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _plot_error_curves(spec, reports, path):
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    for epsilon in sorted({r.epsilon for r in reports}):
        curves = [r.curve for r in reports if r.epsilon == epsilon and r.curve]
        if not curves:
            continue
        length = max(len(c) for c in curves)
        padded = np.full((len(curves), length), np.nan)
        for i, c in enumerate(curves):
            values = [v for _, v in c]
            padded[i, : len(values)] = values
            padded[i, len(values):] = values[-1]
        grid = max(curves, key=len)
        ax.plot([k for k, _ in grid], padded.mean(axis=0), label=f"eps={epsilon:g}")
    ax.set_xlabel("iteration")
    ax.set_ylabel("rounded cost error")
    positive = [v for r in reports for _, v in r.curve if v > 0]
    if positive and max(positive) / max(min(positive), 1e-300) > 1e3:
        ax.set_yscale("log")
    ax.set_title(f"{spec.dataset} / {spec.algorithm}: cost error vs iteration")
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _plot_scaling(spec, reports, path):
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    epsilons = sorted({r.epsilon for r in reports})
    xs = [1.0 / (e * e) for e in epsilons]
    ys = [np.mean([r.iterations for r in reports if r.epsilon == e]) for e in epsilons]
    ax.plot(xs, ys, marker="o")
    ax.set_xlabel("1 / epsilon^2")
    ax.set_ylabel("iterations to termination")
    ax.set_title(f"{spec.dataset} / {spec.algorithm}: iterations vs 1/eps^2")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def run_experiment(spec, out_dir, mnist_path=None, check_invariants=True, use_oracle=True,
                   record_curves=True):
    """Execute the experiment protocol and write CSV, SVG, and the audit report.

    Cells are executed in (trial, epsilon) order and written in that order, so
    output is deterministic for a fixed spec and seed. The exact optimum is
    computed once per trial; ``use_oracle=False`` skips it (mandatory above
    the exact solver's size limit) and leaves the cost columns empty.
    ``record_curves=False`` skips the per-iteration error sampling when only
    the summary table is wanted.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pairs = _image_pairs(spec, mnist_path)
    C = pixel_cost(spec.side)
    cost_sup = float(np.max(C))
    n = spec.side * spec.side

    reports = []
    for trial, (a, b) in enumerate(pairs):
        exact_cost = None
        if use_oracle:
            _, exact_cost = exact_ot(a, b, C)
        for eps_rel in spec.epsilons:
            epsilon = eps_rel * cost_sup
            reports.append(
                _run_cell(spec, trial, a, b, C, epsilon, exact_cost,
                          check_invariants, record_curve=use_oracle and record_curves)
            )

    summary_rows = [
        [spec.dataset, spec.algorithm, r.trial, r.epsilon, r.gamma, r.delta, n,
         r.iterations, r.rounded_cost, r.exact_cost, r.gap, r.theorem_bound,
         len(r.violations) if check_invariants else ""]
        for r in reports
    ]
    curve_rows = [
        [spec.dataset, spec.algorithm, r.trial, r.epsilon, k, err]
        for r in reports
        for k, err in r.curve
    ]

    summary_csv = out_dir / "summary.csv"
    curves_csv = out_dir / "curves.csv"
    error_svg = out_dir / "error_vs_iteration.svg"
    scaling_svg = out_dir / "iterations_vs_inv_eps2.svg"
    report_path = out_dir / "invariants.txt"

    _write_csv(summary_csv, SUMMARY_COLUMNS, summary_rows)
    _write_csv(curves_csv, CURVE_COLUMNS, curve_rows)
    _plot_error_curves(spec, reports, error_svg)
    _plot_scaling(spec, reports, scaling_svg)

    with open(report_path, "w") as handle:
        if not check_invariants:
            handle.write("invariant checks disabled\n")
        else:
            total = sum(len(r.violations) for r in reports)
            handle.write(f"violations: {total}\n")
            for r in reports:
                for trial, epsilon, k, name, detail in r.violations:
                    handle.write(f"trial={trial} epsilon={epsilon!r} k={k} {name}: {detail}\n")

    return ExperimentSummary(
        spec=spec,
        reports=reports,
        summary_csv=summary_csv,
        curves_csv=curves_csv,
        error_svg=error_svg,
        scaling_svg=scaling_svg,
        report_path=report_path,
        invariants_checked=check_invariants,
    )
