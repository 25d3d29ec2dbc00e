from partition_opt import init_uniform_cuts


class UniformPartitioner:
    """Equal-area grid."""

    def __init__(self, verbose=False):
        self.verbose = verbose

    def partition(self, problem, m, n):
        return init_uniform_cuts(m, n)
