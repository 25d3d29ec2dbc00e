## MAKE A COPY OF THIS CALLED config.py (or run scripts/rebuild_config.py)
VERBOSE = False
SHOW_PROGRESS = False  # tqdm bars for per-camera rendering and BO iterations
THREADS = None  # Worker threads for per-camera / per-block work. None = logical cores. LOBE_THREADS overrides this.

### CAMERA SELECTION ###
# "depth_backproject": render every camera once, back-project, reuse the clouds for every BO iteration
# "render_compare": brute-force oracle, renders every camera once per block on every assignment
CAMERA_SELECTOR = "depth_backproject"
TAU = 0.15  # Minimum visibility ratio for a camera to be assigned to a block
DEPTH_DOWNSCALE = 4  # Depth maps are rendered at 1/DEPTH_DOWNSCALE resolution
BACKPROJECT_STRIDE = 2  # Pixel stride when sampling the depth map for back-projection
WEIGHT_FLOOR = 0.1  # Pixels with less accumulated blending weight are treated as background

### VISIBILITY / RENDERING ###
OPACITY_FLOOR = 0.005  # Gaussians below this opacity are never visible
FOOTPRINT_SIGMAS = 3.0  # Screen-space footprint used for culling and rasterization
TRANSMITTANCE_FLOOR = 1e-4  # Compositing stops once transmittance drops below this
COV2D_DILATION = 0.3  # px^2 added to the projected covariance diagonal
Z_NEAR = 0.01  # Near plane for cameras loaded from COLMAP files
Z_FAR = 1e4  # Far plane for cameras loaded from COLMAP files

### PARTITION OPTIMIZATION ###
BO_ITERATIONS = 100  # Total objective evaluations (L), including the uniform cuts
BO_INITIAL_SAMPLES = 16  # Scrambled Sobol points evaluated after the uniform cuts
DELTA_SCALE = 0.1  # Block enlargement is (DELTA_SCALE/m, DELTA_SCALE/n)
EI_CANDIDATES = 1024  # Quasi-random candidates scored per proposal
PATTERN_SEARCH_STEPS = 20  # Compass-search refinement steps after the candidate scan
EI_RESTARTS = 4  # Compass searches start from this many top candidates, plus one near the incumbent
EI_LOCAL_SCALE = 0.05  # Spread of the incumbent perturbations, in units of the cut bounds
GP_JITTER = 1e-6  # Noise floor on the kernel diagonal (standardized units)
GP_MAX_JITTER = 1e-2  # Jitter is escalated x10 up to this before giving up
GP_RESTARTS = 4  # Random starts for the L-BFGS-B marginal-likelihood fit
OBJECTIVE_CACHE_QUANTUM = 1e-6  # Cut vectors closer than this share one objective evaluation

### DENSIFICATION SIMULATOR ###
GRAD_THRESHOLD = 0.0002  # Gradient-proxy threshold for clone/split
SCALE_SPLIT = 0.05  # Gaussians with max(scale) at or above this are split instead of cloned
CLONE_JITTER = 0.1  # Clone offset in units of the parent scale
SPLIT_FACTOR = 1.6  # Child scale = parent scale / SPLIT_FACTOR
SPLIT_CHILDREN = 2

### RUNTIME PROXY ###
SIM_MINUTES_PER_GAUSSIAN = 2e-5  # Slope of the simulated fine-stage runtime
SIM_OVERHEAD_MINUTES = 2.0  # Intercept of the simulated fine-stage runtime
SIM_RUNTIME_NOISE = 0.05  # Relative noise of the simulated fine-stage runtime

### FILES ###
PLY_FLOAT_TYPE = "f8"  # "f8" keeps world coordinates exact on round trips, "f4" matches most splat viewers
MANIFEST_VERSION = 1
