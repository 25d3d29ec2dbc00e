"""
Fast camera-to-block assignment.

Every camera renders one alpha-blended depth map, the covered pixels are back-projected
into grid coordinates, and a camera joins block b when at least tau of its points fall in
the block's enlarged region. The clouds are computed once and reused for every
assignment, so a whole partition search costs one render per camera.
"""
import threading
from dataclasses import dataclass

import numpy as np

from config_loader import config
from errors import InvalidInputError
from scene_model import block_regions, covariance_3d, unproject_pixels
from utils import parallel_map, warn
from visibility import visible_mask

# Upper bound on the fragments rasterized at once; depth-ordered chunks composite sequentially.
MAX_FRAGMENTS = 1 << 22


class RenderCounter:
    """Thread-safe count of depth renders."""

    def __init__(self):
        self._lock = threading.Lock()
        self._value = 0

    def increment(self):
        with self._lock:
            self._value += 1

    def reset(self):
        with self._lock:
            self._value = 0

    @property
    def value(self):
        with self._lock:
            return self._value


RENDER_COUNTER = RenderCounter()


def reset_render_counter():
    RENDER_COUNTER.reset()


@dataclass(frozen=True, eq=False)
class DepthMap:
    """depth holds D = sum d_i w_i (0 without coverage); weight holds sum w_i in [0,1]."""
    width: int
    height: int
    depth: np.ndarray
    weight: np.ndarray
    downscale: int = 1


@dataclass(frozen=True, eq=False)
class BackprojectedCloud:
    camera_id: int
    points: np.ndarray  # (K, 2) grid coordinates

    @property
    def K(self):
        return int(self.points.shape[0])


def _camera_covariance(rotation, cov):
    """W Sigma W^T for every primitive, expanded term by term."""
    out = np.zeros_like(cov)
    for a in range(3):
        for b in range(a, 3):
            acc = np.zeros(cov.shape[0])
            for k in range(3):
                for l in range(3):
                    coeff = rotation[a, k] * rotation[b, l]
                    if coeff != 0.0:
                        acc = acc + coeff * cov[:, k, l]
            out[:, a, b] = acc
            out[:, b, a] = acc
    return out


def _splat_parameters(cam, small, scene, culled):
    """Projected centre, inverse 2-D covariance and 3-sigma bounding box per culled primitive."""
    positions = scene.positions[culled]
    pc = cam.to_camera(positions)
    x, y, z = pc[:, 0], pc[:, 1], pc[:, 2]
    u = small.fx * x / z + small.cx
    v = small.fy * y / z + small.cy

    cov = _camera_covariance(cam.rotation, covariance_3d(scene.scales[culled], scene.rotations[culled]))
    j00 = small.fx / z
    j02 = -small.fx * x / (z * z)
    j11 = small.fy / z
    j12 = -small.fy * y / (z * z)
    a = j00 * j00 * cov[:, 0, 0] + 2 * j00 * j02 * cov[:, 0, 2] + j02 * j02 * cov[:, 2, 2]
    b = j00 * j11 * cov[:, 0, 1] + j00 * j12 * cov[:, 0, 2] + j02 * j11 * cov[:, 2, 1] + j02 * j12 * cov[:, 2, 2]
    c = j11 * j11 * cov[:, 1, 1] + 2 * j11 * j12 * cov[:, 1, 2] + j12 * j12 * cov[:, 2, 2]
    a = a + config.COV2D_DILATION
    c = c + config.COV2D_DILATION
    det = a * c - b * b
    conic = (c / det, -b / det, a / det)

    sigmas = config.FOOTPRINT_SIGMAS
    rx, ry = sigmas * np.sqrt(a), sigmas * np.sqrt(c)
    x0 = np.maximum(np.ceil(u - rx), 0).astype(np.int64)
    x1 = np.minimum(np.floor(u + rx), small.width - 1).astype(np.int64)
    y0 = np.maximum(np.ceil(v - ry), 0).astype(np.int64)
    y1 = np.minimum(np.floor(v + ry), small.height - 1).astype(np.int64)
    return z, u, v, conic, (x0, x1, y0, y1)


def _composite(width, height, z, u, v, conic, box, opacities, depth, weight, transmittance):
    """Blend one depth-ordered chunk of primitives into the running buffers."""
    x0, x1, y0, y1 = box
    widths = np.maximum(x1 - x0 + 1, 0)
    counts = widths * np.maximum(y1 - y0 + 1, 0)
    total = int(counts.sum())
    if total == 0:
        return

    owner = np.repeat(np.arange(counts.shape[0]), counts)
    starts = np.cumsum(counts) - counts
    local = np.arange(total) - starts[owner]
    px = x0[owner] + local % widths[owner]
    py = y0[owner] + local // widths[owner]

    dx = px - u[owner]
    dy = py - v[owner]
    A, B, C = conic
    power = -0.5 * (A[owner] * dx * dx + 2.0 * B[owner] * dx * dy + C[owner] * dy * dy)
    alpha = opacities[owner] * np.exp(power)
    frag_depth = z[owner]

    pixel = py * width + px
    # fragments are generated in depth order, so a stable sort by pixel keeps that order per pixel
    order = np.argsort(pixel, kind="stable")
    pixel, alpha, frag_depth = pixel[order], alpha[order], frag_depth[order]
    first = np.flatnonzero(np.r_[True, pixel[1:] != pixel[:-1]])
    run = np.diff(np.r_[first, pixel.shape[0]])
    layer = np.arange(pixel.shape[0]) - np.repeat(first, run)

    by_layer = np.argsort(layer, kind="stable")
    bounds = np.r_[0, np.cumsum(np.bincount(layer))]
    floor = config.TRANSMITTANCE_FLOOR
    for l in range(bounds.shape[0] - 1):
        sel = by_layer[bounds[l]:bounds[l + 1]]
        p = pixel[sel]
        t = transmittance[p]
        live = t >= floor
        if not live.any():
            continue
        p, t, a = p[live], t[live], alpha[sel][live]
        w = a * t
        depth[p] += frag_depth[sel][live] * w
        weight[p] += w
        transmittance[p] = t * (1.0 - a)


def render_depth(cam, scene, downscale=None):
    """
    Alpha-blended expected depth of scene seen from cam at 1/downscale resolution.

    Primitives are culled with the full-resolution visibility predicate, sorted front to
    back by centre depth (stable), splatted with the EWA-projected covariance and
    composited until transmittance drops below the floor.
    """
    downscale = config.DEPTH_DOWNSCALE if downscale is None else downscale
    if int(downscale) != downscale or downscale < 1:
        raise InvalidInputError(f"downscale must be a positive integer, got {downscale}")
    downscale = int(downscale)
    RENDER_COUNTER.increment()

    small = cam.scaled(downscale)
    width, height = small.width, small.height
    depth = np.zeros(width * height)
    weight = np.zeros(width * height)

    if len(scene):
        culled = np.flatnonzero(visible_mask(cam, scene.positions, scene.scales, scene.opacities))
        if culled.size:
            z_cam = cam.to_camera(scene.positions[culled])[:, 2]
            culled = culled[np.argsort(z_cam, kind="stable")]
            z, u, v, conic, box = _splat_parameters(cam, small, scene, culled)
            opacities = scene.opacities[culled]
            transmittance = np.ones(width * height)

            x0, x1, y0, y1 = box
            counts = np.maximum(x1 - x0 + 1, 0) * np.maximum(y1 - y0 + 1, 0)
            edges = np.cumsum(counts)
            start = 0
            while start < culled.size:
                base = edges[start - 1] if start else 0
                stop = int(np.searchsorted(edges, base + MAX_FRAGMENTS, side="right"))
                stop = max(stop, start + 1)
                chunk = slice(start, stop)
                _composite(width, height, z[chunk], u[chunk], v[chunk],
                           tuple(c[chunk] for c in conic), tuple(e[chunk] for e in box),
                           opacities[chunk], depth, weight, transmittance)
                start = stop

    np.minimum(weight, 1.0, out=weight)
    return DepthMap(width, height, depth.reshape(height, width), weight.reshape(height, width), downscale)


def backproject(cam, dmap, frame, stride=None, weight_floor=None):
    """
    Back-project the covered pixels of dmap into grid coordinates.

    Pixels are sampled every `stride` rows and columns; those with weight >= weight_floor
    are unprojected at the coverage-normalized depth D / weight, contracted, mapped to the
    grid and clamped to [0,1]^2.
    """
    stride = config.BACKPROJECT_STRIDE if stride is None else stride
    weight_floor = config.WEIGHT_FLOOR if weight_floor is None else weight_floor
    if int(stride) != stride or stride < 1:
        raise InvalidInputError(f"stride must be a positive integer, got {stride}")
    stride = int(stride)

    rows = np.arange(0, dmap.height, stride)
    cols = np.arange(0, dmap.width, stride)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    rr, cc = rr.reshape(-1), cc.reshape(-1)
    w = dmap.weight[rr, cc]
    keep = (w >= weight_floor) & (w > 0)
    if not keep.any():
        return BackprojectedCloud(cam.id, np.zeros((0, 2)))

    rr, cc, w = rr[keep], cc[keep], w[keep]
    d = dmap.depth[rr, cc] / w
    small = cam.scaled(dmap.downscale)
    world = unproject_pixels(small, np.stack([cc, rr], axis=1).astype(np.float64), d)
    return BackprojectedCloud(cam.id, frame.to_grid(world, clamp=True))


def visibility_ratio(cloud, region):
    """Fraction of the cloud inside region; 0 for an empty cloud."""
    if cloud.K == 0:
        return 0.0
    return int(region.contains(cloud.points).sum()) / cloud.K


class CloudStack:
    """All clouds concatenated with owner indices, so one containment pass serves every camera."""

    def __init__(self, clouds):
        clouds = list(clouds)
        self.camera_ids = [int(c.camera_id) for c in clouds]
        self.counts = np.array([c.K for c in clouds], dtype=np.int64)
        self.points = np.concatenate([c.points for c in clouds]) if clouds else np.zeros((0, 2))
        self.owner = np.repeat(np.arange(len(clouds)), self.counts)

    def __len__(self):
        return len(self.camera_ids)

    def ratios(self, region):
        """visibility_ratio of every camera for region; 0 where K = 0."""
        inside = np.bincount(self.owner[region.contains(self.points)], minlength=len(self.camera_ids))
        ratios = np.zeros(len(self.camera_ids))
        nonempty = self.counts > 0
        ratios[nonempty] = inside[nonempty] / self.counts[nonempty]
        return ratios


def assign_cameras(clouds, cuts, delta, tau=None):
    """
    Camera sets per block: {block_id: sorted camera ids with ratio >= tau}.

    Cameras with empty clouds are never assigned. No rendering happens here.
    """
    tau = config.TAU if tau is None else tau
    stack = clouds if isinstance(clouds, CloudStack) else CloudStack(clouds)
    ids = np.array(stack.camera_ids, dtype=np.int64)
    nonempty = stack.counts > 0
    assignment = {}
    for region in block_regions(cuts, delta):
        chosen = (stack.ratios(region) >= tau) & nonempty
        assignment[region.block_id] = sorted(int(c) for c in ids[chosen])
    return assignment


def compute_clouds(scene, cameras, downscale=None, stride=None, weight_floor=None, workers=None, verbose=None):
    """Render and back-project every camera once (in parallel); returns clouds in camera order."""
    verbose = config.VERBOSE if verbose is None else verbose
    if scene.frame is None:
        raise InvalidInputError("compute_clouds needs a scene with a frame")

    def one(cam):
        dmap = render_depth(cam, scene, downscale)
        return backproject(cam, dmap, scene.frame, stride, weight_floor)

    clouds = parallel_map(one, list(cameras), workers=workers, desc="Depth renders")
    empty = [c.camera_id for c in clouds if c.K == 0]
    if empty:
        warn(f"Cameras {empty} back-project no points and will not be assigned to any block", verbose)
    return clouds
