from config_loader import config
from camera_select import CloudStack, assign_cameras, compute_clouds


class DepthBackprojectSelector:
    """One depth render per camera; the back-projected clouds serve every later assignment."""

    def __init__(self, downscale=None, stride=None, weight_floor=None, verbose=False):
        self.downscale = config.DEPTH_DOWNSCALE if downscale is None else downscale
        self.stride = config.BACKPROJECT_STRIDE if stride is None else stride
        self.weight_floor = config.WEIGHT_FLOOR if weight_floor is None else weight_floor
        self.verbose = verbose
        self.clouds = None
        self.stack = None

        if self.verbose:
            print(f"Using depth back-projection: downscale {self.downscale}, stride {self.stride}, "
                  f"weight floor {self.weight_floor}")

    def prepare(self, scene, cameras):
        self.clouds = compute_clouds(scene, cameras, self.downscale, self.stride, self.weight_floor,
                                     verbose=self.verbose)
        self.stack = CloudStack(self.clouds)
        if self.verbose:
            print(f"Back-projected {int(self.stack.counts.sum())} points from {len(self.clouds)} cameras")

    def assign(self, cuts, delta, tau):
        return assign_cameras(self.stack, cuts, delta, tau)

    def tunables(self):
        return {"downscale": self.downscale, "stride": self.stride, "weight_floor": self.weight_floor}
