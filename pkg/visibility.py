"""
Per-camera visible sets, the camera x Gaussian visibility matrix and per-block load statistics.

Visibility is frustum-plus-footprint culling: depth inside (z_near, z_far), the projected
centre inside the image rectangle dilated by an isotropic 3-sigma footprint, and opacity at
or above the floor. The depth renderer culls with the same predicate.
"""
from dataclasses import dataclass, field

import numpy as np

from config_loader import config
from errors import InvalidInputError, UnknownCameraError
from scene_model import block_region
from utils import parallel_map

_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.int64)


class Bitset:
    """Fixed-size set of Gaussian indices stored as packed little-endian bits."""

    __slots__ = ("size", "bits")

    def __init__(self, size, bits=None):
        self.size = int(size)
        nbytes = (self.size + 7) // 8
        if bits is None:
            bits = np.zeros(nbytes, dtype=np.uint8)
        bits = np.asarray(bits, dtype=np.uint8)
        if bits.shape != (nbytes,):
            raise InvalidInputError(f"Bitset of size {self.size} needs {nbytes} bytes, got {bits.shape}")
        bits.flags.writeable = False
        self.bits = bits

    @classmethod
    def from_mask(cls, mask):
        mask = np.asarray(mask, dtype=bool).reshape(-1)
        return cls(mask.shape[0], np.packbits(mask, bitorder="little"))

    @classmethod
    def from_indices(cls, size, indices):
        mask = np.zeros(int(size), dtype=bool)
        indices = np.asarray(list(indices) if not isinstance(indices, np.ndarray) else indices, dtype=np.int64)
        if indices.size and (indices.min() < 0 or indices.max() >= size):
            raise InvalidInputError(f"Bitset indices must lie in [0, {size})")
        mask[indices] = True
        return cls.from_mask(mask)

    def mask(self):
        return np.unpackbits(self.bits, count=self.size, bitorder="little").astype(bool)

    def indices(self):
        return np.flatnonzero(self.mask())

    def count(self):
        return int(_POPCOUNT[self.bits].sum())

    def _check(self, other):
        if self.size != other.size:
            raise InvalidInputError(f"Bitset sizes differ: {self.size} vs {other.size}")

    def __or__(self, other):
        self._check(other)
        return Bitset(self.size, self.bits | other.bits)

    def __and__(self, other):
        self._check(other)
        return Bitset(self.size, self.bits & other.bits)

    def issubset(self, other):
        self._check(other)
        return bool(np.all((self.bits & ~other.bits) == 0))

    def __contains__(self, index):
        if not 0 <= index < self.size:
            return False
        return bool(self.bits[index >> 3] >> (index & 7) & 1)

    def __eq__(self, other):
        return isinstance(other, Bitset) and self.size == other.size and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash((self.size, self.bits.tobytes()))

    def __repr__(self):
        return f"Bitset(size={self.size}, count={self.count()})"


def visible_mask(cam, positions, scales, opacities, opacity_floor=None, sigmas=None):
    """Vectorized culling predicate over arrays of centres, scales and opacities."""
    opacity_floor = config.OPACITY_FLOOR if opacity_floor is None else opacity_floor
    sigmas = config.FOOTPRINT_SIGMAS if sigmas is None else sigmas
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    if positions.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    scales = np.asarray(scales, dtype=np.float64).reshape(-1, 3)
    opacities = np.asarray(opacities, dtype=np.float64).reshape(-1)

    pixels, depth = cam.project(positions)
    in_depth = (depth > cam.z_near) & (depth < cam.z_far)
    safe = np.where(in_depth, depth, 1.0)
    largest = np.maximum(np.maximum(scales[:, 0], scales[:, 1]), scales[:, 2])
    radius = sigmas * largest / safe * max(cam.fx, cam.fy)
    u, v = pixels[:, 0], pixels[:, 1]
    inside = ((u >= -0.5 - radius) & (u <= cam.width - 0.5 + radius)
              & (v >= -0.5 - radius) & (v <= cam.height - 0.5 + radius))
    return in_depth & inside & (opacities >= opacity_floor)


def visible_set(cam, scene):
    """Indices of the Gaussians of scene that camera cam sees, as a Bitset."""
    return Bitset.from_mask(visible_mask(cam, scene.positions, scene.scales, scene.opacities))


@dataclass(frozen=True, eq=False)
class VisibilityMatrix:
    rows: tuple
    camera_ids: tuple
    gaussian_count: int
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        object.__setattr__(self, "camera_ids", tuple(int(c) for c in self.camera_ids))
        if len(self.rows) != len(self.camera_ids):
            raise InvalidInputError("Visibility matrix needs one row per camera")
        for row in self.rows:
            if row.size != self.gaussian_count:
                raise InvalidInputError(f"Visibility row has {row.size} bits, expected {self.gaussian_count}")
        index = {}
        for k, camera_id in enumerate(self.camera_ids):
            index.setdefault(camera_id, k)
        object.__setattr__(self, "_index", index)

    def row(self, camera_id):
        try:
            return self.rows[self._index[int(camera_id)]]
        except KeyError:
            raise UnknownCameraError(f"Camera {camera_id} is not part of the visibility matrix") from None

    def rows_for(self, camera_ids):
        return [self.row(c) for c in camera_ids]

    def counts(self):
        return {c: row.count() for c, row in zip(self.camera_ids, self.rows)}


def visibility_matrix(scene, cameras, workers=None):
    """One visible_set row per camera, in camera order."""
    cameras = list(cameras)
    if not cameras:
        raise InvalidInputError("visibility_matrix needs at least one camera")
    rows = parallel_map(lambda cam: visible_set(cam, scene), cameras, workers=workers, desc="Visibility")
    return VisibilityMatrix(rows, [cam.id for cam in cameras], len(scene))


def gaussians_in_block(scene, region):
    """Gaussians whose grid coordinates fall in region (half-open bounds)."""
    return Bitset.from_mask(region.contains(scene.contracted_xy))


def visible_gaussians_for_block(matrix, cams):
    """Union of the visibility rows of cams."""
    rows = matrix.rows_for(sorted(set(int(c) for c in cams)))
    if not rows:
        return Bitset(matrix.gaussian_count)
    bits = np.bitwise_or.reduce(np.stack([row.bits for row in rows]), axis=0)
    return Bitset(matrix.gaussian_count, bits)


@dataclass(frozen=True)
class BlockLoadStats:
    block_id: int
    area: float
    camera_count: int
    g_blk: int
    g_vis: int
    g_avgvis: float

    def to_dict(self):
        return {
            "block_id": int(self.block_id),
            "area": float(self.area),
            "camera_count": int(self.camera_count),
            "g_blk": int(self.g_blk),
            "g_vis": int(self.g_vis),
            "g_avgvis": float(self.g_avgvis),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(int(data["block_id"]), float(data["area"]), int(data["camera_count"]),
                   int(data["g_blk"]), int(data["g_vis"]), float(data["g_avgvis"]))


def camera_sets(assignment, cuts):
    """Normalize an assignment (mapping block_id -> ids, or a list in block order) to {block_id: sorted ids}."""
    if isinstance(assignment, dict):
        sets = {int(b): sorted(set(int(c) for c in ids)) for b, ids in assignment.items()}
    else:
        sets = {b: sorted(set(int(c) for c in ids)) for b, ids in enumerate(assignment, start=1)}
    missing = [b for b in cuts.block_ids() if b not in sets]
    if missing:
        raise InvalidInputError(f"Assignment does not cover blocks {missing}")
    return sets


def block_stats(scene, matrix, cuts, delta, assignment):
    """
    Load statistics for every block, in block-id order.

    area uses the un-enlarged cell; g_blk counts centres in the delta-enlarged region, so
    with delta = 0 the g_blk values add up to the scene size; g_vis is the union of the
    assigned cameras' rows and g_avgvis = g_vis / camera_count (0 without cameras).
    """
    sets = camera_sets(assignment, cuts)
    stats = []
    for i in range(1, cuts.m + 1):
        for j in range(1, cuts.n + 1):
            region = block_region(cuts, i, j, delta)
            cell = block_region(cuts, i, j)
            b = region.block_id
            cams = sets[b]
            g_vis = visible_gaussians_for_block(matrix, cams).count()
            stats.append(BlockLoadStats(
                block_id=b,
                area=cell.area,
                camera_count=len(cams),
                g_blk=gaussians_in_block(scene, region).count(),
                g_vis=g_vis,
                g_avgvis=g_vis / len(cams) if cams else 0.0,
            ))
    return stats
