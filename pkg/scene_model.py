"""
Geometric core: Gaussian primitives, cameras, the contracted ground-plane frame and
the block grid laid over it.

Conventions:
    - Quaternions are (w, x, y, z).
    - Cameras use the OpenCV frame (x right, y down, z forward). world_to_cam maps a
      world point p to R p + t. Pixel k is centred at coordinate k.
    - Grid coordinates live in [0,1]^2. The first axis is cut by v (m rows), the
      second by h (n columns). Block ids are 1-based, b = (i-1)*n + j.
    - Block regions are half-open [lo, hi); an upper bound that reaches 1 is closed.

Per-element arithmetic is written out component by component rather than with
matrix products so that a primitive maps to the same bits whatever array it sits in.
"""
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from config_loader import config
from errors import (
    DegenerateSceneError,
    InvalidConfigError,
    InvalidCutsError,
    InvalidIndexError,
    InvalidInputError,
)

WORLD_X = np.array([1.0, 0.0, 0.0])
WORLD_Y = np.array([0.0, 1.0, 0.0])
WORLD_Z = np.array([0.0, 0.0, 1.0])


def _readonly(array, dtype=np.float64):
    array = np.array(array, dtype=dtype, copy=True)
    array.flags.writeable = False
    return array


def _affine(rotation, translation, points):
    """rotation @ p + translation for every row of points, one component at a time."""
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    out = np.empty_like(points, dtype=np.float64)
    for r in range(3):
        out[:, r] = rotation[r, 0] * x + rotation[r, 1] * y + rotation[r, 2] * z + translation[r]
    return out


# ---------------------------------------------------------------------------
# Gaussians
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Gaussian3D:
    """One splat primitive: centre, per-axis standard deviations, orientation, opacity."""
    position: np.ndarray
    scale: np.ndarray
    rotation: np.ndarray
    opacity: float

    def __post_init__(self):
        position = _readonly(self.position)
        scale = _readonly(self.scale)
        rotation = _readonly(self.rotation)
        if position.shape != (3,) or not np.all(np.isfinite(position)):
            raise InvalidInputError(f"Gaussian position must be a finite 3-vector, got {position}")
        if scale.shape != (3,) or not np.all(np.isfinite(scale)) or np.any(scale <= 0):
            raise InvalidInputError(f"Gaussian scale must be strictly positive and finite, got {scale}")
        if rotation.shape != (4,) or abs(np.linalg.norm(rotation) - 1.0) > 1e-6:
            raise InvalidInputError(f"Gaussian rotation must be a unit quaternion, got {rotation}")
        if not 0.0 <= float(self.opacity) <= 1.0:
            raise InvalidInputError(f"Gaussian opacity must lie in [0,1], got {self.opacity}")
        object.__setattr__(self, "position", position)
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "opacity", float(self.opacity))


def quaternion_to_rotation(quaternions):
    """(N,4) unit quaternions (w,x,y,z) -> (N,3,3) rotation matrices."""
    q = np.asarray(quaternions, dtype=np.float64).reshape(-1, 4)
    norm = np.sqrt(q[:, 0] * q[:, 0] + q[:, 1] * q[:, 1] + q[:, 2] * q[:, 2] + q[:, 3] * q[:, 3])
    w, x, y, z = (q[:, k] / norm for k in range(4))
    R = np.empty((q.shape[0], 3, 3))
    R[:, 0, 0] = 1 - 2 * (y * y + z * z)
    R[:, 0, 1] = 2 * (x * y - w * z)
    R[:, 0, 2] = 2 * (x * z + w * y)
    R[:, 1, 0] = 2 * (x * y + w * z)
    R[:, 1, 1] = 1 - 2 * (x * x + z * z)
    R[:, 1, 2] = 2 * (y * z - w * x)
    R[:, 2, 0] = 2 * (x * z - w * y)
    R[:, 2, 1] = 2 * (y * z + w * x)
    R[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def rotation_to_quaternion(rotation):
    """3x3 rotation matrix -> unit quaternion (w,x,y,z) with w >= 0."""
    R = np.asarray(rotation, dtype=np.float64)
    trace = R[0, 0] + R[1, 1] + R[2, 2]
    if trace > 0:
        s = math.sqrt(trace + 1.0) * 2
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    q /= np.linalg.norm(q)
    return -q if q[0] < 0 else q


def covariance_3d(scales, rotations):
    """Sigma = R S S^T R^T for every primitive, returned as (N,3,3)."""
    R = quaternion_to_rotation(rotations)
    s = np.asarray(scales, dtype=np.float64).reshape(-1, 3)
    M = R * s[:, None, :]
    cov = np.zeros_like(M)
    for k in range(3):
        cov += M[:, :, None, k] * M[:, None, :, k]
    return cov


@dataclass(frozen=True, eq=False)
class GaussianScene:
    """
    Struct-of-arrays scene. Index i refers to the same primitive in every array and
    through every read-only operation.

    `frame` fixes the contraction and the ground-plane projection. Sub-scenes keep
    their parent's frame so that grid coordinates stay comparable.
    """
    positions: np.ndarray
    scales: np.ndarray
    rotations: np.ndarray
    opacities: np.ndarray
    frame: "SceneFrame | None" = None

    def __post_init__(self):
        positions = _readonly(self.positions).reshape(-1, 3)
        n = positions.shape[0]
        scales = _readonly(self.scales).reshape(-1, 3)
        rotations = _readonly(self.rotations).reshape(-1, 4)
        opacities = _readonly(self.opacities).reshape(-1)
        if not (scales.shape[0] == rotations.shape[0] == opacities.shape[0] == n):
            raise InvalidInputError(
                f"Scene arrays disagree in length: positions {n}, scales {scales.shape[0]}, "
                f"rotations {rotations.shape[0]}, opacities {opacities.shape[0]}")
        if not np.all(np.isfinite(positions)):
            raise InvalidInputError("Scene positions must be finite")
        if np.any(~np.isfinite(scales)) or np.any(scales <= 0):
            raise InvalidInputError("Scene scales must be strictly positive and finite")
        if n and np.max(np.abs(np.linalg.norm(rotations, axis=1) - 1.0)) > 1e-6:
            raise InvalidInputError("Scene rotations must be unit quaternions")
        if np.any(~np.isfinite(opacities)) or np.any((opacities < 0) | (opacities > 1)):
            raise InvalidInputError("Scene opacities must lie in [0,1]")
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "rotations", rotations)
        object.__setattr__(self, "opacities", opacities)

    def __len__(self):
        return self.positions.shape[0]

    @classmethod
    def empty(cls, frame=None):
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 4)), np.zeros(0), frame)

    def gaussian(self, i):
        return Gaussian3D(self.positions[i], self.scales[i], self.rotations[i], self.opacities[i])

    @property
    def gaussians(self):
        return [self.gaussian(i) for i in range(len(self))]

    @property
    def ground_axes(self):
        return None if self.frame is None else self.frame.ground_axes

    @cached_property
    def contracted_xy(self):
        """Grid coordinates of every centre under the scene frame (cached)."""
        if self.frame is None:
            raise InvalidInputError("Scene has no frame; attach one with with_frame() first")
        xy = self.frame.to_grid(self.positions, clamp=True)
        xy.flags.writeable = False
        return xy

    def with_frame(self, frame):
        return GaussianScene(self.positions, self.scales, self.rotations, self.opacities, frame)

    def subset(self, indices):
        """Sub-scene of the given indices (or boolean mask), in the given order, sharing the frame."""
        indices = np.asarray(indices)
        if indices.dtype == bool:
            indices = np.flatnonzero(indices)
        sub = GaussianScene(self.positions[indices], self.scales[indices], self.rotations[indices],
                            self.opacities[indices], self.frame)
        if "contracted_xy" in self.__dict__:
            xy = self.contracted_xy[indices]
            xy.flags.writeable = False
            sub.__dict__["contracted_xy"] = xy
        return sub

    @staticmethod
    def concat(scenes, frame=None):
        scenes = list(scenes)
        if frame is None and scenes:
            frame = scenes[0].frame
        if not scenes:
            return GaussianScene.empty(frame)
        return GaussianScene(
            np.concatenate([s.positions for s in scenes]),
            np.concatenate([s.scales for s in scenes]),
            np.concatenate([s.rotations for s in scenes]),
            np.concatenate([s.opacities for s in scenes]),
            frame,
        )


# ---------------------------------------------------------------------------
# Contraction and the ground-plane frame
# ---------------------------------------------------------------------------

def contract(x):
    """Spherical contraction of normalized points: identity in the unit ball, (2 - 1/|x|) x/|x| outside."""
    x = np.asarray(x, dtype=np.float64)
    flat = x.reshape(-1, 3)
    norm = np.sqrt(flat[:, 0] * flat[:, 0] + flat[:, 1] * flat[:, 1] + flat[:, 2] * flat[:, 2])
    factor = np.ones_like(norm)
    outside = norm > 1.0
    factor[outside] = (2.0 - 1.0 / norm[outside]) / norm[outside]
    return (flat * factor[:, None]).reshape(x.shape)


def _orthonormal_axes(axes):
    axes = np.asarray(axes, dtype=np.float64).reshape(2, 3)
    a0 = axes[0] / np.linalg.norm(axes[0])
    a1 = axes[1] - np.dot(axes[1], a0) * a0
    norm = np.linalg.norm(a1)
    if norm < 1e-9:
        raise InvalidInputError("Ground axes must not be parallel")
    return np.stack([a0, a1 / norm])


def _camera_plane_axes(centers):
    """In-plane axes of the best-fit plane through camera centres, anchored to world x."""
    if centers.shape[0] < 3:
        return None
    spread = centers - centers.mean(axis=0)
    eigvals, eigvecs = np.linalg.eigh(spread.T @ spread)
    if eigvals[1] <= 1e-12 * max(eigvals[2], 1e-300):
        return None  # collinear (or coincident) cameras do not define a plane
    normal = eigvecs[:, 0]
    if normal[2] < 0 or (normal[2] == 0 and normal.sum() < 0):
        normal = -normal
    a0 = WORLD_X - np.dot(WORLD_X, normal) * normal
    if np.linalg.norm(a0) < 0.1:
        a0 = WORLD_Y - np.dot(WORLD_Y, normal) * normal
    a0 /= np.linalg.norm(a0)
    a1 = np.cross(normal, a0)
    return np.stack([a0, a1 / np.linalg.norm(a1)])


@dataclass(frozen=True, eq=False)
class SceneFrame:
    """Normalization (centre, radius), the two partition axes and the ground extent that maps to [0,1]^2."""
    center: np.ndarray
    radius: float
    ground_axes: np.ndarray
    grid_lo: np.ndarray
    grid_hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", _readonly(self.center).reshape(3))
        object.__setattr__(self, "ground_axes", _readonly(self.ground_axes).reshape(2, 3))
        object.__setattr__(self, "grid_lo", _readonly(self.grid_lo).reshape(2))
        object.__setattr__(self, "grid_hi", _readonly(self.grid_hi).reshape(2))
        object.__setattr__(self, "radius", float(self.radius))
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise InvalidInputError(f"Frame radius must be positive and finite, got {self.radius}")
        gram = self.ground_axes @ self.ground_axes.T
        if np.max(np.abs(gram - np.eye(2))) > 1e-6:
            raise InvalidInputError("Frame ground axes must be orthonormal")
        if np.any(self.grid_hi < self.grid_lo):
            raise InvalidInputError("Frame grid extent must satisfy lo <= hi")

    @classmethod
    def fit(cls, positions, cameras=None, ground_axes=None):
        """
        Fit a frame to a point set.

        centre = per-axis median of the positions; radius = 90th percentile of the
        camera-to-centre distances (of the point-to-centre distances without cameras);
        ground axes = the given override, else the plane of the camera centres, else
        world x/y. The grid extent is the tight bounding box of the contracted ground
        projection of the positions.
        """
        positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        if positions.shape[0] == 0:
            raise DegenerateSceneError("Cannot fit a frame to an empty scene")
        center = np.median(positions, axis=0)

        centers = None
        if cameras:
            centers = np.stack([cam.center for cam in cameras])
            radius = float(np.percentile(np.linalg.norm(centers - center, axis=1), 90))
        else:
            radius = float(np.percentile(np.linalg.norm(positions - center, axis=1), 90))
        if not radius > 0:
            radius = float(np.max(np.linalg.norm(positions - center, axis=1)))
        if not radius > 0:
            radius = 1.0

        if ground_axes is not None:
            axes = _orthonormal_axes(ground_axes)
        else:
            axes = _camera_plane_axes(centers) if centers is not None else None
            if axes is None:
                axes = np.stack([WORLD_X, WORLD_Y])

        frame = cls(center, radius, axes, np.zeros(2), np.zeros(2))
        return frame.refit_extent(positions)

    def refit_extent(self, positions):
        """Same centre, radius and axes with the grid extent fit tightly to positions."""
        ground = self.ground(positions)
        if ground.shape[0] == 0:
            raise DegenerateSceneError("Cannot fit a grid extent to an empty scene")
        lo, hi = ground.min(axis=0), ground.max(axis=0)
        if np.all(hi - lo <= 0):
            raise DegenerateSceneError("All Gaussians project to the same ground point")
        return SceneFrame(self.center, self.radius, self.ground_axes, lo, hi)

    def normalize(self, points):
        points = np.asarray(points, dtype=np.float64)
        return (points - self.center) / self.radius

    def contract(self, points):
        return contract(self.normalize(points))

    def ground(self, points):
        """Contracted points projected on the two ground axes."""
        c = self.contract(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        out = np.empty((c.shape[0], 2))
        for k in range(2):
            a = self.ground_axes[k]
            out[:, k] = c[:, 0] * a[0] + c[:, 1] * a[1] + c[:, 2] * a[2]
        return out

    def to_grid(self, points, clamp=True):
        """World points -> grid coordinates; an axis with zero extent maps to 0.5."""
        ground = self.ground(points)
        extent = self.grid_hi - self.grid_lo
        out = np.full_like(ground, 0.5)
        for k in range(2):
            if extent[k] > 0:
                out[:, k] = (ground[:, k] - self.grid_lo[k]) / extent[k]
        if clamp:
            np.clip(out, 0.0, 1.0, out=out)
        return out

    def to_dict(self):
        return {
            "center": [float(x) for x in self.center],
            "radius": float(self.radius),
            "ground_axes": [[float(x) for x in axis] for axis in self.ground_axes],
            "grid_lo": [float(x) for x in self.grid_lo],
            "grid_hi": [float(x) for x in self.grid_hi],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(np.array(data["center"]), data["radius"], np.array(data["ground_axes"]),
                   np.array(data["grid_lo"]), np.array(data["grid_hi"]))


def contract_point(p, frame):
    """
    Contract one world point under the frame's normalization.

    Returns the contracted 3-vector in the normalized frame: |result| <= 2, identity on
    the unit ball, continuous and injective.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (3,) or not np.all(np.isfinite(p)):
        raise InvalidInputError(f"contract_point needs a finite 3-vector, got {p}")
    return frame.contract(p[None, :])[0]


def to_grid_coords(scene):
    """
    Tight [0,1]^2 grid coordinates of every Gaussian centre.

    Uses the scene's frame for centre/radius/axes (fitting one if absent) and fits the
    affine extent to this scene, so each non-degenerate axis spans exactly [0,1].
    """
    if len(scene) == 0:
        raise InvalidInputError("to_grid_coords needs a non-empty scene")
    if scene.frame is None:
        frame = SceneFrame.fit(scene.positions)
    else:
        frame = scene.frame.refit_extent(scene.positions)
    return frame.to_grid(scene.positions, clamp=True)


# ---------------------------------------------------------------------------
# Grid cuts and block regions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GridCuts:
    """m x n grid: v holds the m-1 cuts of the first grid axis, h the n-1 cuts of the second."""
    m: int
    n: int
    v: np.ndarray = field(default_factory=lambda: np.zeros(0))
    h: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if int(self.m) != self.m or int(self.n) != self.n or self.m < 1 or self.n < 1:
            raise InvalidCutsError(f"Grid must be at least 1x1, got {self.m}x{self.n}")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "n", int(self.n))
        v = _readonly(self.v).reshape(-1)
        h = _readonly(self.h).reshape(-1)
        for name, cuts, count in (("v", v, self.m - 1), ("h", h, self.n - 1)):
            if cuts.shape[0] != count:
                raise InvalidCutsError(f"{name} must hold {count} cuts, got {cuts.shape[0]}")
            if not np.all(np.isfinite(cuts)) or np.any((cuts <= 0) | (cuts >= 1)):
                raise InvalidCutsError(f"{name} cuts must lie in the open interval (0,1): {cuts}")
            if np.any(np.diff(cuts) <= 0):
                raise InvalidCutsError(f"{name} cuts must be strictly increasing: {cuts}")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "h", h)

    @classmethod
    def from_vector(cls, m, n, x):
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        return cls(m, n, x[:m - 1], x[m - 1:])

    def vector(self):
        return np.concatenate([self.v, self.h])

    @property
    def block_count(self):
        return self.m * self.n

    @property
    def v_edges(self):
        return np.concatenate([[0.0], self.v, [1.0]])

    @property
    def h_edges(self):
        return np.concatenate([[0.0], self.h, [1.0]])

    def block_id(self, i, j):
        return (i - 1) * self.n + j

    def block_position(self, block_id):
        if not 1 <= block_id <= self.block_count:
            raise InvalidIndexError(f"Block id {block_id} outside 1..{self.block_count}")
        return (block_id - 1) // self.n + 1, (block_id - 1) % self.n + 1

    def block_ids(self):
        return list(range(1, self.block_count + 1))

    def __eq__(self, other):
        return (isinstance(other, GridCuts) and self.m == other.m and self.n == other.n
                and np.array_equal(self.v, other.v) and np.array_equal(self.h, other.h))

    def __hash__(self):
        return hash((self.m, self.n, self.v.tobytes(), self.h.tobytes()))


@dataclass(frozen=True, eq=False)
class BlockRegion:
    """Axis-aligned box in grid coordinates, half-open except where hi reaches 1."""
    lo: np.ndarray
    hi: np.ndarray
    block_id: int
    row: int
    col: int

    def __post_init__(self):
        lo = _readonly(self.lo).reshape(2)
        hi = _readonly(self.hi).reshape(2)
        if np.any(lo >= hi):
            raise InvalidInputError(f"Block region needs lo < hi, got {lo} / {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def area(self):
        return float((self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1]))

    def contains(self, xy):
        """Boolean mask of which 2-D points fall in the region."""
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        mask = np.ones(xy.shape[0], dtype=bool)
        for k in range(2):
            mask &= xy[:, k] >= self.lo[k]
            if self.hi[k] >= 1.0:
                mask &= xy[:, k] <= self.hi[k]
            else:
                mask &= xy[:, k] < self.hi[k]
        return mask


def block_region(cuts, i, j, delta=(0.0, 0.0)):
    """
    Block (i, j) of the grid enlarged by delta = (delta_v, delta_h) and clamped to [0,1]^2.

    i and j are 1-based; delta = 0 gives regions that tile [0,1]^2 exactly.
    """
    if not (1 <= i <= cuts.m and 1 <= j <= cuts.n):
        raise InvalidIndexError(f"Block ({i}, {j}) outside a {cuts.m}x{cuts.n} grid")
    dv, dh = (float(d) for d in delta)
    if dv < 0 or dh < 0:
        raise InvalidInputError(f"Block enlargement must be non-negative, got {delta}")
    v, h = cuts.v_edges, cuts.h_edges
    lo = np.array([max(0.0, v[i - 1] - dv), max(0.0, h[j - 1] - dh)])
    hi = np.array([min(1.0, v[i] + dv), min(1.0, h[j] + dh)])
    return BlockRegion(lo, hi, cuts.block_id(i, j), i, j)


def block_regions(cuts, delta=(0.0, 0.0)):
    """All block regions in block-id order."""
    return [block_region(cuts, i, j, delta) for i in range(1, cuts.m + 1) for j in range(1, cuts.n + 1)]


# ---------------------------------------------------------------------------
# Cameras
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CameraView:
    id: int
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray
    translation: np.ndarray
    z_near: float = config.Z_NEAR
    z_far: float = config.Z_FAR

    def __post_init__(self):
        rotation = _readonly(self.rotation).reshape(3, 3)
        translation = _readonly(self.translation).reshape(3)
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidInputError(f"Camera {self.id}: focal lengths must be positive")
        if not (0 < self.z_near < self.z_far):
            raise InvalidInputError(f"Camera {self.id}: need 0 < z_near < z_far")
        if int(self.width) < 1 or int(self.height) < 1:
            raise InvalidInputError(f"Camera {self.id}: image size must be positive")
        if np.max(np.abs(rotation @ rotation.T - np.eye(3))) > 1e-5:
            raise InvalidInputError(f"Camera {self.id}: rotation is not orthonormal")
        if not np.all(np.isfinite(translation)):
            raise InvalidInputError(f"Camera {self.id}: translation must be finite")
        object.__setattr__(self, "id", int(self.id))
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        for name in ("fx", "fy", "cx", "cy", "z_near", "z_far"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @property
    def center(self):
        return -self.rotation.T @ self.translation

    def scaled(self, downscale):
        """Same pose at 1/downscale resolution; pixel centres stay at integer coordinates."""
        if downscale == 1:
            return self
        s = float(downscale)
        return CameraView(self.id, self.fx / s, self.fy / s, (self.cx + 0.5) / s - 0.5, (self.cy + 0.5) / s - 0.5,
                          max(1, self.width // int(downscale)), max(1, self.height // int(downscale)),
                          self.rotation, self.translation, self.z_near, self.z_far)

    def to_camera(self, points):
        return _affine(self.rotation, self.translation, np.asarray(points, dtype=np.float64).reshape(-1, 3))

    def project(self, points):
        """(N,3) world points -> (pixels (N,2), depth (N,)); pixels are only meaningful where depth > z_near."""
        pc = self.to_camera(points)
        z = pc[:, 2]
        safe = np.where(z > self.z_near, z, 1.0)
        pixels = np.empty((pc.shape[0], 2))
        pixels[:, 0] = self.fx * pc[:, 0] / safe + self.cx
        pixels[:, 1] = self.fy * pc[:, 1] / safe + self.cy
        return pixels, z


def project_point(cam, p):
    """Pinhole projection of one world point; None when it is not in front of the near plane."""
    pixels, depth = cam.project(np.asarray(p, dtype=np.float64).reshape(1, 3))
    if not depth[0] > cam.z_near:
        return None
    return pixels[0], float(depth[0])


def unproject_pixels(cam, pixels, depth):
    """Inverse of project(): pixel coordinates plus camera-frame depth -> world points."""
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    depth = np.asarray(depth, dtype=np.float64).reshape(-1)
    pc = np.empty((pixels.shape[0], 3))
    pc[:, 0] = (pixels[:, 0] - cam.cx) / cam.fx * depth
    pc[:, 1] = (pixels[:, 1] - cam.cy) / cam.fy * depth
    pc[:, 2] = depth
    RT = cam.rotation.T
    return _affine(RT, -(RT @ cam.translation), pc)


def look_at(eye, target, up=(0.0, 0.0, 1.0)):
    """World-to-camera (rotation, translation) for a camera at eye looking at target."""
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    norm = np.linalg.norm(forward)
    if norm == 0:
        raise InvalidInputError("look_at needs distinct eye and target")
    forward /= norm
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    if np.linalg.norm(right) < 1e-8:
        right = np.cross(forward, WORLD_Y)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward])
    return rotation, -rotation @ eye


# ---------------------------------------------------------------------------
# Synthetic scenes
# ---------------------------------------------------------------------------

FOOTPRINT_OVERLAP = 1.5  # grid footprint width in camera spacings
DISTRICT_OFFSET = 0.3  # downtown centre, per axis, in half extents from the capture centre
DISTRICT_RADIUS = 0.2  # cluster centres scatter this far (half extents) around the downtown centre


@dataclass
class SyntheticSceneConfig:
    """Knobs for the clustered, city-like test scenes."""
    gaussian_count: int = 5000
    cluster_count: int = 4
    cluster_skew: float = 1.0  # log-normal sigma of the cluster masses; 0 gives equal masses
    cluster_masses: list = None  # explicit masses, overrides cluster_skew
    camera_count: int = 144
    trajectory: str = "grid"  # "grid" (nadir sweep) or "orbit"
    layout: str = "downtown"  # "downtown" packs the clusters into one off-centre district, "scattered" spreads them
    extent: float = 100.0
    altitude: float = None  # grid rigs default to footprints FOOTPRINT_OVERLAP camera spacings wide
    cluster_spread: float = 10.0
    background_fraction: float = 0.1
    width: int = 320
    height: int = 240
    focal: float = None  # pixels; defaults to a 60 degree horizontal field of view
    min_scale: float = 0.05
    max_scale: float = 0.5

    def validate(self):
        if self.gaussian_count < 1 or self.cluster_count < 1 or self.camera_count < 1:
            raise InvalidConfigError("Synthetic scenes need at least one Gaussian, cluster and camera")
        if self.cluster_skew < 0:
            raise InvalidConfigError(f"cluster_skew must be >= 0, got {self.cluster_skew}")
        if self.cluster_masses is not None:
            if len(self.cluster_masses) != self.cluster_count or min(self.cluster_masses) <= 0:
                raise InvalidConfigError("cluster_masses needs one positive mass per cluster")
        if self.trajectory not in ("grid", "orbit"):
            raise InvalidConfigError(f"Unsupported trajectory: {self.trajectory}")
        if self.layout not in ("downtown", "scattered"):
            raise InvalidConfigError(f"Unsupported layout: {self.layout}")
        if not 0 <= self.background_fraction < 1:
            raise InvalidConfigError("background_fraction must lie in [0,1)")
        if self.width < 1 or self.height < 1 or self.extent <= 0 or (self.altitude is not None and self.altitude <= 0):
            raise InvalidConfigError("Image size, extent and altitude must be positive")
        if not 0 < self.min_scale <= self.max_scale:
            raise InvalidConfigError("Need 0 < min_scale <= max_scale")


def camera_altitude(cfg, focal):
    """Configured altitude, else one at which neighbouring grid footprints overlap (orbits fly at 0.6 extent)."""
    if cfg.altitude is not None:
        return cfg.altitude
    if cfg.trajectory == "orbit":
        return 0.6 * cfg.extent
    side = math.ceil(math.sqrt(cfg.camera_count))
    spacing = 0.8 * cfg.extent / (side - 1) if side > 1 else cfg.extent
    # a nadir footprint is altitude * width / focal wide
    return FOOTPRINT_OVERLAP * spacing * focal / cfg.width


def _synthetic_cameras(cfg, rng):
    focal = cfg.focal or cfg.width / (2.0 * math.tan(math.radians(30.0)))
    altitude = camera_altitude(cfg, focal)
    half = 0.4 * cfg.extent
    eyes, targets = [], []
    if cfg.trajectory == "grid":
        side = math.ceil(math.sqrt(cfg.camera_count))
        ticks = np.linspace(-half, half, side) if side > 1 else np.zeros(1)
        for k in range(cfg.camera_count):
            x, y = ticks[k % side], ticks[k // side]
            eyes.append((x, y, altitude))
            targets.append((x, y, 0.0))
    else:
        radius = 0.6 * cfg.extent
        for k in range(cfg.camera_count):
            theta = 2 * math.pi * k / cfg.camera_count
            eye = (radius * math.cos(theta), radius * math.sin(theta), altitude)
            eyes.append(eye)
            targets.append((0.2 * eye[0], 0.2 * eye[1], 0.0))
    cameras = []
    for k, (eye, target) in enumerate(zip(eyes, targets)):
        rotation, translation = look_at(eye, target)
        cameras.append(CameraView(k + 1, focal, focal, (cfg.width - 1) / 2.0, (cfg.height - 1) / 2.0,
                                  cfg.width, cfg.height, rotation, translation))
    return cameras


def generate_synthetic_scene(cfg, seed):
    """
    Clustered scene plus an aerial camera rig, deterministic for a given seed.

    Cluster masses are log-normal (or explicit). The "downtown" layout packs every
    cluster into a district offset from the capture centre but within reach of the
    movable cuts, so a uniform grid ends up with uneven per-block load. A thin uniform ground layer gives every camera something
    to look at; a camera that still sees nothing is re-aimed at the nearest Gaussian.
    """
    from visibility import visible_mask

    cfg.validate()
    rng = np.random.default_rng(seed)
    n = cfg.gaussian_count
    k = cfg.cluster_count
    half = cfg.extent / 2.0

    if cfg.cluster_masses is not None:
        masses = np.asarray(cfg.cluster_masses, dtype=np.float64)
    else:
        masses = np.exp(cfg.cluster_skew * rng.standard_normal(k))
    probabilities = masses / masses.sum()

    if cfg.layout == "downtown":
        district = rng.choice([-1.0, 1.0], size=2) * DISTRICT_OFFSET * half
        centers = district + rng.uniform(-DISTRICT_RADIUS * half, DISTRICT_RADIUS * half, size=(k, 2))
    else:
        centers = rng.uniform(-0.8 * half, 0.8 * half, size=(k, 2))
    n_background = int(round(cfg.background_fraction * n))
    counts = rng.multinomial(n - n_background, probabilities)

    chunks = []
    for c in range(k):
        xy = centers[c] + rng.normal(0.0, cfg.cluster_spread, size=(counts[c], 2))
        z = rng.normal(0.0, 2.0, size=(counts[c], 1))
        chunks.append(np.hstack([xy, z]))
    background = np.hstack([rng.uniform(-half, half, size=(n_background, 2)),
                            rng.normal(0.0, 0.5, size=(n_background, 1))])
    positions = np.vstack(chunks + [background])

    scales = np.exp(rng.uniform(math.log(cfg.min_scale), math.log(cfg.max_scale), size=(n, 3)))
    rotations = rng.standard_normal((n, 4))
    rotations /= np.linalg.norm(rotations, axis=1, keepdims=True)
    opacities = rng.uniform(0.2, 1.0, size=n)

    cameras = _synthetic_cameras(cfg, rng)
    for idx, cam in enumerate(cameras):
        if visible_mask(cam, positions, scales, opacities).any():
            continue
        eye = cam.center
        nearest = positions[np.argmin(np.linalg.norm(positions[:, :2] - eye[:2], axis=1))]
        rotation, translation = look_at(eye, nearest)
        cameras[idx] = CameraView(cam.id, cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height,
                                  rotation, translation, cam.z_near, cam.z_far)
        if not visible_mask(cameras[idx], positions, scales, opacities).any():
            raise RuntimeError(f"Synthetic camera {cam.id} sees no Gaussian even after re-aiming")

    scene = GaussianScene(positions, scales, rotations, opacities)
    return scene.with_frame(SceneFrame.fit(positions, cameras)), cameras
