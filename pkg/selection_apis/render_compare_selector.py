import numpy as np

from config_loader import config
from camera_select import render_depth
from scene_model import block_regions
from utils import parallel_map


class RenderCompareSelector:
    """
    Brute-force reference assigner.

    Every assignment renders each camera once on the full scene and once per block on the
    scene restricted to that block's enlarged region; the visibility ratio is the share of
    covered pixels that survive the restriction. Costs (B+1)*N renders per assignment.
    """

    def __init__(self, downscale=None, weight_floor=None, verbose=False):
        self.downscale = config.DEPTH_DOWNSCALE if downscale is None else downscale
        self.weight_floor = config.WEIGHT_FLOOR if weight_floor is None else weight_floor
        self.verbose = verbose
        self.scene = None
        self.cameras = None
        self.clouds = None

        if self.verbose:
            print(f"Using render comparison: downscale {self.downscale}, weight floor {self.weight_floor}")

    def prepare(self, scene, cameras):
        self.scene = scene
        self.cameras = list(cameras)

    def _covered(self, cam, scene):
        return int(np.count_nonzero(render_depth(cam, scene, self.downscale).weight >= self.weight_floor))

    def assign(self, cuts, delta, tau):
        full = parallel_map(lambda cam: self._covered(cam, self.scene), self.cameras, desc="Full renders")
        assignment = {}
        for region in block_regions(cuts, delta):
            block_scene = self.scene.subset(region.contains(self.scene.contracted_xy))
            covered = parallel_map(lambda cam: self._covered(cam, block_scene), self.cameras,
                                   desc=f"Block {region.block_id} renders")
            assignment[region.block_id] = sorted(
                cam.id for cam, total, inside in zip(self.cameras, full, covered)
                if total > 0 and inside / total >= tau)
        return assignment

    def tunables(self):
        return {"downscale": self.downscale, "weight_floor": self.weight_floor}
