"""
Load-balance-aware grid partitioning.

The decision variables are the interior cut positions (v, h). Each cut may move at most
halfway towards its uniform neighbours, and the objective is the largest per-block
visible-Gaussian count. Bayesian optimization with a GP surrogate searches the cuts,
starting from the uniform grid.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm, qmc

from config_loader import config
from errors import ConditioningError, InvalidInputError
from gp_surrogate import GPSurrogate, gp_fit  # noqa: F401  (re-exported)
from ingest_io import build_manifest
from scene_model import GridCuts
from selection_manager import CameraSelectionManager
from utils import progress, warn
from visibility import block_stats, visibility_matrix

BOUND_MARGIN = 1e-9


def init_uniform_cuts(m, n):
    if m < 1 or n < 1:
        raise InvalidInputError(f"Grid must be at least 1x1, got {m}x{n}")
    return GridCuts(m, n, np.arange(1, m) / m, np.arange(1, n) / n)


def default_delta(m, n, scale=None):
    scale = config.DELTA_SCALE if scale is None else scale
    return (scale / m, scale / n)


class CutBounds:
    """Closed box [lo_k, hi_k] per decision variable, v cuts first, then h cuts."""

    def __init__(self, lo, hi, m, n):
        self.lo = np.asarray(lo, dtype=np.float64).reshape(-1)
        self.hi = np.asarray(hi, dtype=np.float64).reshape(-1)
        self.m, self.n = m, n
        if self.lo.shape != self.hi.shape or self.lo.shape[0] != (m - 1) + (n - 1):
            raise InvalidInputError("CutBounds needs one interval per interior cut")
        if np.any(self.lo > self.hi):
            raise InvalidInputError("CutBounds needs lo <= hi")

    @classmethod
    def for_grid(cls, m, n):
        """Each uniform cut may move halfway to its neighbours; adjacent intervals keep a tiny gap."""
        lo, hi = [], []
        for count in (m, n):
            uniform = np.arange(count + 1) / count
            for i in range(1, count):
                lo.append(0.5 * (uniform[i - 1] + uniform[i]) + (BOUND_MARGIN if i > 1 else 0.0))
                hi.append(0.5 * (uniform[i] + uniform[i + 1]) - (BOUND_MARGIN if i < count - 1 else 0.0))
        return cls(lo, hi, m, n)

    @property
    def dim(self):
        return self.lo.shape[0]

    @property
    def collapsed(self):
        return bool(np.all(self.hi == self.lo))

    def to_unit(self, x):
        x = np.asarray(x, dtype=np.float64)
        span = self.hi - self.lo
        safe = np.where(span > 0, span, 1.0)
        return np.where(span > 0, (x - self.lo) / safe, 0.0)

    def from_unit(self, u):
        return self.clip(self.lo + np.asarray(u, dtype=np.float64) * (self.hi - self.lo))

    def clip(self, x):
        return np.clip(np.asarray(x, dtype=np.float64), self.lo, self.hi)

    def contains(self, x):
        x = np.asarray(x, dtype=np.float64)
        return bool(np.all((x >= self.lo) & (x <= self.hi)))

    def cuts(self, x):
        return GridCuts.from_vector(self.m, self.n, self.clip(x))


@dataclass
class BOState:
    seed: int
    X: list = field(default_factory=list)
    y: list = field(default_factory=list)
    best_x: np.ndarray = None
    best_y: float = math.inf
    iteration: int = 0
    incumbent_history: list = field(default_factory=list)
    cache_hits: int = 0

    def record(self, x, value):
        self.X.append(np.asarray(x, dtype=np.float64))
        self.y.append(float(value))
        if value < self.best_y:
            self.best_x, self.best_y = np.asarray(x, dtype=np.float64), float(value)
        self.incumbent_history.append(self.best_y)
        self.iteration += 1


def objective(cuts, scene, clouds, delta, tau, matrix):
    """
    max_b G_vis for the given cuts, plus the per-block statistics.

    Cameras are assigned from the precomputed clouds; blocks without cameras contribute 0.
    """
    from camera_select import assign_cameras

    if not isinstance(cuts, GridCuts):
        raise InvalidInputError("objective expects GridCuts")
    assignment = assign_cameras(clouds, cuts, delta, tau)
    stats = block_stats(scene, matrix, cuts, delta, assignment)
    return max(s.g_vis for s in stats), stats


class PartitionProblem:
    """Everything a partition strategy needs, prepared once: visibility rows and camera selection."""

    def __init__(self, scene, cameras, delta=None, tau=None, matrix=None, selection=None, verbose=None):
        self.scene = scene
        self.cameras = list(cameras)
        self.delta = delta
        self.tau = config.TAU if tau is None else tau
        self.verbose = config.VERBOSE if verbose is None else verbose
        self.matrix = matrix if matrix is not None else visibility_matrix(scene, self.cameras)
        if selection is None:
            selection = CameraSelectionManager(verbose=self.verbose)
            selection.prepare(scene, self.cameras)
        self.selection = selection

    def delta_for_grid(self, m, n):
        return tuple(self.delta) if self.delta is not None else default_delta(m, n)

    def delta_for(self, cuts):
        return self.delta_for_grid(cuts.m, cuts.n)

    def evaluate(self, cuts, delta=None, tau=None):
        """(max G_vis, stats, assignment) for cuts; delta and tau default to the problem's."""
        delta = self.delta_for(cuts) if delta is None else tuple(delta)
        tau = self.tau if tau is None else tau
        assignment = self.selection.assign(cuts, delta, tau)
        stats = block_stats(self.scene, self.matrix, cuts, delta, assignment)
        return max(s.g_vis for s in stats), stats, assignment


def acquisition_ei(surrogate, x, best_y):
    """Expected improvement below best_y (minimization); scalar for one point, array for many."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    mean, variance = surrogate.predict(np.atleast_2d(x))
    sigma = np.sqrt(variance)
    improvement = best_y - mean
    ei = np.maximum(improvement, 0.0)
    positive = sigma > 1e-12
    z = improvement[positive] / sigma[positive]
    ei[positive] = improvement[positive] * norm.cdf(z) + sigma[positive] * norm.pdf(z)
    ei = np.maximum(ei, 0.0)
    return float(ei[0]) if single else ei


def _sobol(dim, count, rng):
    sampler = qmc.Sobol(d=dim, scramble=True, seed=rng)
    return sampler.random_base2(max(0, math.ceil(math.log2(max(count, 1)))))[:count]


def _compass_search(surrogate, bounds, best_y, u, ei, steps):
    step = 0.125
    for _ in range(steps):
        trials = []
        for k in range(bounds.dim):
            for direction in (1.0, -1.0):
                trial = u.copy()
                trial[k] = np.clip(trial[k] + direction * step, 0.0, 1.0)
                trials.append(trial)
        trials = np.array(trials)
        values = acquisition_ei(surrogate, bounds.from_unit(trials), best_y)
        k = int(np.argmax(values))
        if values[k] > ei:
            u, ei = trials[k], float(values[k])
        else:
            step /= 2.0
    return u, ei


def propose_candidate(surrogate, bounds, best_y, rng, candidates=None, steps=None, incumbent=None):
    """
    Argmax of EI over scrambled Sobol candidates in bounds, refined by compass search.

    The compass search restarts from the EI_RESTARTS best candidates and, given an
    incumbent, from the best of EI_RESTARTS perturbations around it. The result always
    lies inside bounds, so the cuts stay strictly increasing.
    """
    candidates = config.EI_CANDIDATES if candidates is None else candidates
    steps = config.PATTERN_SEARCH_STEPS if steps is None else steps
    if bounds.dim == 0 or bounds.collapsed:
        return bounds.lo.copy()

    unit = _sobol(bounds.dim, candidates, rng)
    scores = acquisition_ei(surrogate, bounds.from_unit(unit), best_y)
    starts = [(unit[k].copy(), float(scores[k])) for k in np.argsort(-scores, kind="stable")[:config.EI_RESTARTS]]
    if incumbent is not None:
        center = bounds.to_unit(incumbent)
        local = np.clip(center + config.EI_LOCAL_SCALE * rng.standard_normal((config.EI_RESTARTS, bounds.dim)),
                        0.0, 1.0)
        local_scores = acquisition_ei(surrogate, bounds.from_unit(local), best_y)
        k = int(np.argmax(local_scores))
        starts.append((local[k], float(local_scores[k])))

    best_u, best_ei = starts[0]
    for u, ei in starts:
        u, ei = _compass_search(surrogate, bounds, best_y, u, ei, steps)
        if ei > best_ei:
            best_u, best_ei = u, ei
    return bounds.from_unit(best_u)


def _cache_key(x, quantum):
    return tuple(int(q) for q in np.round(np.asarray(x) / quantum))


def optimize_partition(scene, cameras, m, n, L=None, delta=None, tau=None, seed=0, problem=None, verbose=None):
    """
    Search the cut positions that minimize the largest per-block visible-Gaussian count.

    The uniform cuts are evaluated first, then scrambled Sobol points, then GP/EI proposals
    until L evaluations in total. Repeated cut vectors are served from a cache but still
    count as evaluations.

    Returns:
        tuple: (best GridCuts, BOState, PartitionManifest)
    """
    L = config.BO_ITERATIONS if L is None else L
    verbose = config.VERBOSE if verbose is None else verbose
    if L < 1:
        raise InvalidInputError(f"L must be at least 1, got {L}")
    if problem is None:
        problem = PartitionProblem(scene, cameras, delta, tau, verbose=verbose)
    delta = tuple(float(d) for d in (problem.delta_for_grid(m, n) if delta is None else delta))
    tau = problem.tau if tau is None else tau

    rng = np.random.default_rng(seed)
    bounds = CutBounds.for_grid(m, n)
    state = BOState(seed=seed)
    cache = {}

    def evaluate(x):
        key = _cache_key(x, config.OBJECTIVE_CACHE_QUANTUM)
        if key in cache:
            state.cache_hits += 1
        else:
            cache[key] = problem.evaluate(bounds.cuts(x), delta, tau)
        state.record(x, cache[key][0])

    evaluate(init_uniform_cuts(m, n).vector())
    if bounds.dim > 0:
        initial = min(config.BO_INITIAL_SAMPLES, L - state.iteration)
        if initial > 0:
            for u in _sobol(bounds.dim, initial, rng):
                evaluate(bounds.from_unit(u))

        for _ in progress(range(L - state.iteration), desc="Partition search"):
            try:
                surrogate = gp_fit(np.array(state.X), np.array(state.y), bounds, rng)
                x = propose_candidate(surrogate, bounds, state.best_y, rng, incumbent=state.best_x)
            except ConditioningError as e:
                warn(f"GP fit failed ({e}); sampling a random cut vector instead", verbose)
                x = bounds.from_unit(rng.random(bounds.dim))
            evaluate(x)
            if verbose:
                print(f"Evaluation {state.iteration}: max G_vis {state.y[-1]:.0f}, best {state.best_y:.0f}")
    else:
        # a 1x1 grid has nothing to search; repeat the only evaluation
        for _ in range(L - state.iteration):
            evaluate(state.X[0])

    best_cuts = bounds.cuts(state.best_x)
    _, stats, assignment = cache[_cache_key(state.best_x, config.OBJECTIVE_CACHE_QUANTUM)]
    clouds = problem.selection.clouds
    provenance = {
        "seed": int(seed),
        "iterations": int(L),
        "objective_history": [float(v) for v in state.y],
        "incumbent_history": [float(v) for v in state.incumbent_history],
        "cache_hits": int(state.cache_hits),
        "frame": scene.frame.to_dict() if scene.frame is not None else None,
        "points_per_camera": {str(c.camera_id): int(c.K) for c in clouds} if clouds else None,
        "tunables": dict(problem.selection.tunables(), opacity_floor=config.OPACITY_FLOOR,
                         delta_scale=config.DELTA_SCALE, tau=float(tau)),
    }
    manifest = build_manifest(best_cuts, delta, tau, stats, assignment, provenance)
    return best_cuts, state, manifest
