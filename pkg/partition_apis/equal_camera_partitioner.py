import numpy as np

from partition_opt import init_uniform_cuts
from scene_model import GridCuts

EDGE_GAP = 1e-6


def _quantile_cuts(coords, count):
    """count-1 cuts at the i/count quantiles, pushed apart until strictly increasing inside (0,1)."""
    if count == 1:
        return np.zeros(0)
    cuts = np.clip(np.quantile(coords, np.arange(1, count) / count), EDGE_GAP, 1.0 - EDGE_GAP)
    for k in range(1, cuts.shape[0]):
        cuts[k] = max(cuts[k], cuts[k - 1] + EDGE_GAP)
    if cuts[-1] >= 1.0:
        return None
    return cuts


class EqualCameraPartitioner:
    """Cuts that give every row and every column the same number of camera centres."""

    def __init__(self, verbose=False):
        self.verbose = verbose

    def partition(self, problem, m, n):
        centers = np.stack([cam.center for cam in problem.cameras])
        xy = problem.scene.frame.to_grid(centers, clamp=True)
        v = _quantile_cuts(xy[:, 0], m)
        h = _quantile_cuts(xy[:, 1], n)
        uniform = init_uniform_cuts(m, n)
        if v is None or h is None:
            if self.verbose:
                print("Camera centres too concentrated for equal-camera cuts; using uniform cuts on that axis")
            v = uniform.v if v is None else v
            h = uniform.h if h is None else h
        return GridCuts(m, n, v, h)
