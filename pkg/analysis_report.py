"""
Load/runtime analysis: Pearson correlation of the load proxies, a linear fine-stage
runtime model on G_vis, the end-to-end runtime bookkeeping and report emission.
"""
import csv
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from config_loader import config
from errors import InvalidInputError, UndefinedCorrelationError
from scene_model import block_regions
from utils import warn
from visibility import BlockLoadStats

PROXIES = ("area", "camera_count", "g_blk", "g_vis", "g_avgvis")
CSV_COLUMNS = ("block_id", "area", "camera_count", "g_blk", "g_vis", "g_avgvis", "t_fine_pred")
ABLATION_COLUMNS = ("component", "with_max_load", "with_max_t_fine", "without_max_load", "without_max_t_fine")


def pearson_r(x, y):
    """Sample Pearson correlation; zero variance in either input is an error."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape != y.shape or x.shape[0] < 2:
        raise InvalidInputError(f"pearson_r needs two aligned samples of length >= 2, got {x.shape} / {y.shape}")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelationError("Correlation is undefined when an input has zero variance")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


@dataclass(frozen=True)
class RuntimeModel:
    """t_fine ~ slope * G_vis + intercept, in minutes."""
    slope: float
    intercept: float
    fit_r: float = 0.0

    def predict(self, g_vis):
        pred = self.slope * np.asarray(g_vis, dtype=np.float64) + self.intercept
        return np.maximum(pred, 0.0)

    def to_dict(self):
        return {"slope": float(self.slope), "intercept": float(self.intercept), "fit_r": float(self.fit_r)}

    @classmethod
    def from_dict(cls, data):
        slope = float(data["slope"])
        if slope < 0:
            raise InvalidInputError(f"Runtime model slope must be >= 0, got {slope}")
        return cls(slope, float(data["intercept"]), float(data.get("fit_r", 0.0)))


def fit_runtime_model(g_vis, t_fine, verbose=None):
    """
    Ordinary least squares of t_fine on g_vis.

    A negative slope is clamped to 0 (intercept becomes the mean runtime) with a warning.
    Constant runtimes give slope 0 and fit_r 0; constant g_vis raises.
    """
    verbose = config.VERBOSE if verbose is None else verbose
    g = np.asarray(g_vis, dtype=np.float64).reshape(-1)
    t = np.asarray(t_fine, dtype=np.float64).reshape(-1)
    if g.shape != t.shape or g.shape[0] < 2:
        raise InvalidInputError("fit_runtime_model needs at least 2 aligned samples")
    dg = g - g.mean()
    sgg = float(dg @ dg)
    if sgg == 0:
        raise UndefinedCorrelationError("Cannot fit a runtime model when every block has the same G_vis")
    if np.all(t == t[0]):
        return RuntimeModel(0.0, float(t[0]), 0.0)

    slope = float(dg @ (t - t.mean())) / sgg
    intercept = float(t.mean() - slope * g.mean())
    r = pearson_r(g, t)
    if slope < 0:
        warn(f"Fitted runtime slope {slope:.3g} is negative; clamping to 0", verbose)
        slope, intercept = 0.0, float(t.mean())
    return RuntimeModel(slope, intercept, r)


def _seconds(minutes):
    if minutes < 0 or not math.isfinite(minutes):
        raise InvalidInputError(f"Runtimes must be finite and non-negative, got {minutes}")
    return int(round(minutes * 60))


def e2e_runtime(t_coarse, t_partition, t_fine):
    """T_E2E = T_coarse + T_partition + max_b T_fine, summed in whole seconds."""
    t_fine = list(t_fine)
    if not t_fine:
        raise InvalidInputError("e2e_runtime needs at least one block runtime")
    seconds = _seconds(t_coarse) + _seconds(t_partition) + max(_seconds(t) for t in t_fine)
    return seconds / 60.0


def format_hhmm(minutes):
    total = int(round(minutes))
    hours, mins = divmod(total, 60)
    return f"{hours:02d}:{mins:02d}"


@dataclass
class E2EReport:
    t_coarse: float
    t_partition: float
    t_fine: list
    t_e2e: float
    stats: list = field(default_factory=list)
    correlation: dict = None  # load proxy -> Pearson r against measured runtimes

    def to_dict(self):
        data = {
            "t_coarse": float(self.t_coarse),
            "t_partition": float(self.t_partition),
            "t_fine": [float(t) for t in self.t_fine],
            "t_e2e": float(self.t_e2e),
            "t_e2e_hhmm": format_hhmm(self.t_e2e),
            "stats": [s.to_dict() for s in self.stats],
        }
        if self.correlation is not None:
            data["correlation"] = dict(self.correlation)
        return data

    @classmethod
    def from_dict(cls, data):
        return cls(float(data["t_coarse"]), float(data["t_partition"]), [float(t) for t in data["t_fine"]],
                   float(data["t_e2e"]), [BlockLoadStats.from_dict(s) for s in data.get("stats", [])],
                   data.get("correlation"))


def _whole_seconds(minutes):
    return _seconds(minutes) / 60.0


def build_e2e_report(stats, model, t_coarse=0.0, t_partition=0.0):
    """
    Predicted per-block fine runtimes and the resulting end-to-end time.

    Every stored runtime is rounded to whole seconds so t_coarse + t_partition + max(t_fine) == t_e2e.
    """
    t_fine = [_whole_seconds(t) for t in model.predict([s.g_vis for s in stats])]
    t_coarse, t_partition = _whole_seconds(t_coarse), _whole_seconds(t_partition)
    return E2EReport(t_coarse, t_partition, t_fine, e2e_runtime(t_coarse, t_partition, t_fine), list(stats))


def correlation_study(stats, t_fine):
    """Pearson r between each load proxy and the per-block runtimes (None where undefined)."""
    result = {}
    for proxy in PROXIES:
        values = [getattr(s, proxy) for s in stats]
        try:
            result[proxy] = pearson_r(values, t_fine)
        except UndefinedCorrelationError:
            result[proxy] = None
    return result


def measured_runtimes(measured, block_ids):
    """Runtimes of a recorded E2EReport, reordered to block_ids."""
    if len(measured.stats) != len(measured.t_fine):
        raise InvalidInputError("Measured runtimes need one stats record per block runtime")
    by_block = {s.block_id: t for s, t in zip(measured.stats, measured.t_fine)}
    missing = [b for b in block_ids if b not in by_block]
    if missing:
        raise InvalidInputError(f"No measured runtime for blocks {missing}")
    return [by_block[b] for b in block_ids]


def simulate_fine_runtimes(g_vis, minutes_per_gaussian=None, overhead=None, noise=None, rng=None):
    """Proxy runtimes t = a * G_vis + b with multiplicative Gaussian noise, clamped at 0."""
    a = config.SIM_MINUTES_PER_GAUSSIAN if minutes_per_gaussian is None else minutes_per_gaussian
    b = config.SIM_OVERHEAD_MINUTES if overhead is None else overhead
    noise = config.SIM_RUNTIME_NOISE if noise is None else noise
    rng = rng if rng is not None else np.random.default_rng(0)
    g = np.asarray(g_vis, dtype=np.float64).reshape(-1)
    t = (a * g + b) * (1.0 + noise * rng.standard_normal(g.shape[0]))
    return np.maximum(t, 0.0)


@dataclass
class StrategyResult:
    name: str
    cuts: object
    stats: list
    t_fine_pred: list
    max_g_vis: int
    max_t_fine: float
    t_e2e: float


@dataclass
class ComparisonReport:
    results: list
    winner: str


def compare_partitions(scene, cameras, strategies, model, m=2, n=2, delta=None, tau=None, t_coarse=0.0,
                       t_partition=0.0, seed=0, iterations=None, problem=None, verbose=None):
    """
    Partition with every strategy on one prepared problem and predict runtimes.

    The winner has the smallest predicted max t_fine; ties go to the strategy listed later
    (so "optimized" wins ties when listed last).
    """
    from partition_manager import PartitionManager
    from partition_opt import PartitionProblem

    verbose = config.VERBOSE if verbose is None else verbose
    if problem is None:
        problem = PartitionProblem(scene, cameras, delta, tau, verbose=verbose)
    results = []
    for name in strategies:
        kwargs = {"seed": seed, "iterations": iterations} if name.replace("-", "_") == "optimized" else {}
        manager = PartitionManager(name, verbose=verbose, **kwargs)
        cuts = manager.partition(problem, m, n)
        _, stats, _ = problem.evaluate(cuts)
        report = build_e2e_report(stats, model, t_coarse, t_partition)
        results.append(StrategyResult(manager.strategy, cuts, stats, report.t_fine, max(s.g_vis for s in stats),
                                      max(report.t_fine), report.t_e2e))
    if not results:
        raise InvalidInputError("compare_partitions needs at least one strategy")

    winner = results[0]
    for result in results[1:]:
        if result.max_t_fine <= winner.max_t_fine:
            winner = result
    return ComparisonReport(results, winner.name)


@dataclass
class AblationRow:
    """Largest per-block load and predicted t_fine with one component on and off."""
    component: str
    with_load: int
    with_t_fine: float
    without_load: int
    without_t_fine: float


def _densified_loads(problem, cuts, assignment, steps, seed, everywhere):
    from block_pipeline import gradient_proxy, simulate_densify_step, visibility_crop

    loads = []
    for cell in block_regions(cuts):
        sub = visibility_crop(problem.scene, problem.matrix, assignment.get(cell.block_id, []), cell, verbose=False)
        rng = np.random.default_rng([seed, cell.block_id])
        for _ in range(steps):
            if everywhere:
                every = np.ones(len(sub), dtype=bool)
                sub = replace(sub, in_block=every, densify_eligible=every)
            sub = simulate_densify_step(sub, gradient_proxy(sub, rng), rng=rng)
        loads.append(len(sub))
    return loads


def ablation_study(problem, model, m=2, n=2, cuts=None, seed=0, iterations=None, densify_steps=2, verbose=None):
    """
    Switch each part of the pipeline off in turn and predict the slowest block.

    The full pipeline is optimized cuts, depth back-projection camera selection,
    visibility cropping and selective densification. Each row keeps the rest of the
    pipeline and replaces one part with its naive counterpart: uniform cuts, the
    render-and-compare selector, training every block on the whole scene, and letting
    every primitive densify. The densification rows count primitives after
    densify_steps simulated steps; the other rows use G_vis.

    Returns:
        list: AblationRow per component.
    """
    from partition_manager import PartitionManager
    from partition_opt import PartitionProblem, init_uniform_cuts
    from selection_manager import CameraSelectionManager

    verbose = config.VERBOSE if verbose is None else verbose
    if cuts is None:
        cuts = PartitionManager("optimized", verbose=verbose, seed=seed, iterations=iterations).partition(problem, m, n)
    delta = problem.delta_for(cuts)

    def slowest(loads):
        loads = [int(load) for load in loads]
        return max(loads), float(np.max(model.predict(loads)))

    problems = {problem.selection.selector_name: problem}
    for name in ("depth_backproject", "render_compare"):
        if name not in problems:
            selection = CameraSelectionManager(name, verbose=verbose)
            selection.prepare(problem.scene, problem.cameras)
            problems[name] = PartitionProblem(problem.scene, problem.cameras, delta, problem.tau, matrix=problem.matrix,
                                              selection=selection, verbose=verbose)
    by_selector = {name: p.evaluate(cuts, delta)[1] for name, p in problems.items()}

    _, stats, assignment = problem.evaluate(cuts, delta)
    _, uniform_stats, _ = problem.evaluate(init_uniform_cuts(cuts.m, cuts.n))
    whole_scene = [len(problem.scene) if s.camera_count > 0 else 0 for s in stats]
    rows = [
        AblationRow("optimized_cuts", *slowest(s.g_vis for s in stats), *slowest(s.g_vis for s in uniform_stats)),
        AblationRow("depth_backproject_selection", *slowest(s.g_vis for s in by_selector["depth_backproject"]),
                    *slowest(s.g_vis for s in by_selector["render_compare"])),
        AblationRow("visibility_crop", *slowest(s.g_vis for s in stats), *slowest(whole_scene)),
        AblationRow("selective_densification",
                    *slowest(_densified_loads(problem, cuts, assignment, densify_steps, seed, everywhere=False)),
                    *slowest(_densified_loads(problem, cuts, assignment, densify_steps, seed, everywhere=True))),
    ]
    if verbose:
        for row in rows:
            print(f"{row.component}: max t_fine {row.with_t_fine:.1f} min with, {row.without_t_fine:.1f} min without")
    return rows


def emit_ablation(rows, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(ABLATION_COLUMNS)
        for row in rows:
            writer.writerow([row.component, row.with_load, repr(float(row.with_t_fine)), row.without_load,
                             repr(float(row.without_t_fine))])


def emit_report(report, path, format="json"):
    """Write an E2EReport as JSON (mirrors the report) or CSV (one row per block)."""
    if format == "json":
        with open(path, "w") as f:
            json.dump(report.to_dict(), f, sort_keys=True, indent=2)
            f.write("\n")
    elif format == "csv":
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(CSV_COLUMNS)
            for s, t in zip(report.stats, report.t_fine):
                writer.writerow([s.block_id, repr(float(s.area)), s.camera_count, s.g_blk, s.g_vis,
                                 repr(float(s.g_avgvis)), repr(float(t))])
    else:
        raise InvalidInputError(f"Unsupported report format: {format}")


def load_report_json(path):
    with open(path, "r") as f:
        return E2EReport.from_dict(json.load(f))


def emit_comparison(comparison, path):
    """CSV with one row per (strategy, block) and the strategy-level predictions."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("strategy",) + CSV_COLUMNS + ("max_t_fine", "t_e2e", "winner"))
        for result in comparison.results:
            for s, t in zip(result.stats, result.t_fine_pred):
                writer.writerow([result.name, s.block_id, repr(float(s.area)), s.camera_count, s.g_blk, s.g_vis,
                                 repr(float(s.g_avgvis)), repr(float(t)), repr(float(result.max_t_fine)),
                                 repr(float(result.t_e2e)), int(result.name == comparison.winner)])
