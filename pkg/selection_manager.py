from config_loader import config
from camera_select import RENDER_COUNTER
from utils import report_exception


class CameraSelectionManager:
    def __init__(self, selector=None, verbose=None, **kwargs):
        self.selector_name = selector or config.CAMERA_SELECTOR
        self.verbose = config.VERBOSE if verbose is None else verbose
        self.selector = None
        self.render_count = 0
        self._setup_selector(**kwargs)

    def _setup_selector(self, **kwargs):
        """Instantiates the camera selector named in the configuration."""
        if self.selector_name == "depth_backproject":
            from selection_apis.depth_backproject_selector import DepthBackprojectSelector
            self.selector = DepthBackprojectSelector(verbose=self.verbose, **kwargs)
        elif self.selector_name == "render_compare":
            from selection_apis.render_compare_selector import RenderCompareSelector
            self.selector = RenderCompareSelector(verbose=self.verbose, **kwargs)
        else:
            raise ValueError("Unsupported camera selector configured")

    def _counted(self, fn, *args):
        before = RENDER_COUNTER.value
        try:
            return fn(*args)
        finally:
            self.render_count += RENDER_COUNTER.value - before

    def prepare(self, scene, cameras):
        """
        Precompute whatever the selector reuses across assignments.

        Args:
            scene (GaussianScene): Scene with a frame attached.
            cameras (list): CameraView objects.
        """
        try:
            self._counted(self.selector.prepare, scene, cameras)
        except Exception as e:
            report_exception(e, "while preparing camera selection", self.verbose)
            raise

    def assign(self, cuts, delta, tau=None):
        """
        Camera sets for every block of cuts.

        Returns:
            dict: block_id -> sorted list of camera ids.
        """
        tau = config.TAU if tau is None else tau
        return self._counted(self.selector.assign, cuts, delta, tau)

    @property
    def clouds(self):
        return self.selector.clouds

    def tunables(self):
        return dict(self.selector.tunables(), selector=self.selector_name)
