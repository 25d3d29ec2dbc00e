from config_loader import config

STRATEGIES = ("uniform", "equal_camera", "optimized")


def normalize_strategy(name):
    """Accept the hyphenated spelling used on the command line."""
    return name.strip().replace("-", "_")


class PartitionManager:
    def __init__(self, strategy, verbose=None, **kwargs):
        self.strategy = normalize_strategy(strategy)
        self.verbose = config.VERBOSE if verbose is None else verbose
        self.partitioner = None
        self._setup_partitioner(**kwargs)

    def _setup_partitioner(self, **kwargs):
        """Instantiates the partition strategy by name."""
        if self.strategy == "uniform":
            from partition_apis.uniform_partitioner import UniformPartitioner
            self.partitioner = UniformPartitioner(verbose=self.verbose)
        elif self.strategy == "equal_camera":
            from partition_apis.equal_camera_partitioner import EqualCameraPartitioner
            self.partitioner = EqualCameraPartitioner(verbose=self.verbose)
        elif self.strategy == "optimized":
            from partition_apis.optimized_partitioner import OptimizedPartitioner
            self.partitioner = OptimizedPartitioner(verbose=self.verbose, **kwargs)
        else:
            raise ValueError("Unsupported partition strategy configured")

    def partition(self, problem, m, n):
        """
        Cut the m x n grid for a prepared problem.

        Args:
            problem (PartitionProblem): Scene, cameras and a prepared camera selection.
            m (int): Rows.
            n (int): Columns.

        Returns:
            GridCuts: The strategy's cuts.
        """
        if self.verbose:
            print(f"Partitioning {m}x{n} grid with strategy '{self.strategy}'")
        return self.partitioner.partition(problem, m, n)
