from config_loader import config
from partition_opt import optimize_partition


class OptimizedPartitioner:
    """Bayesian-optimized cuts; the last search state and manifest are kept for inspection."""

    def __init__(self, iterations=None, seed=0, verbose=False):
        self.iterations = config.BO_ITERATIONS if iterations is None else iterations
        self.seed = seed
        self.verbose = verbose
        self.state = None
        self.manifest = None

    def partition(self, problem, m, n):
        cuts, self.state, self.manifest = optimize_partition(
            problem.scene, problem.cameras, m, n, L=self.iterations, delta=problem.delta_for_grid(m, n),
            tau=problem.tau, seed=self.seed, problem=problem, verbose=self.verbose)
        if self.verbose:
            print(f"Optimized cuts after {self.state.iteration} evaluations: best max G_vis {self.state.best_y:.0f}")
        return cuts
