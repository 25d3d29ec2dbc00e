"""
Per-block preparation and post-processing: visibility cropping, the selective
densification mask, a split/clone simulator, pruning to the block cell and merging.
"""
from dataclasses import dataclass, replace

import numpy as np

from config_loader import config
from errors import InvalidInputError, MergeIntegrityError
from scene_model import GaussianScene, block_region, quaternion_to_rotation
from utils import parallel_map, warn
from visibility import visible_gaussians_for_block


@dataclass(frozen=True, eq=False)
class BlockSubScene:
    """
    Working set of one block.

    origin_index is the index in the source scene (-1 for primitives created by
    densification); in_block is centre-in-cell at creation; parent_eligible marks
    primitives created from an eligible parent.
    """
    block_id: int
    gaussians: GaussianScene
    origin_index: np.ndarray
    in_block: np.ndarray
    densify_eligible: np.ndarray
    parent_eligible: np.ndarray
    cell: object

    def __post_init__(self):
        n = len(self.gaussians)
        arrays = {
            "origin_index": np.asarray(self.origin_index, dtype=np.int64).reshape(-1),
            "in_block": np.asarray(self.in_block, dtype=bool).reshape(-1),
            "densify_eligible": np.asarray(self.densify_eligible, dtype=bool).reshape(-1),
            "parent_eligible": np.asarray(self.parent_eligible, dtype=bool).reshape(-1),
        }
        for name, array in arrays.items():
            if array.shape[0] != n:
                raise InvalidInputError(f"Block {self.block_id}: {name} has {array.shape[0]} entries for {n} Gaussians")
            array.flags.writeable = False
            object.__setattr__(self, name, array)
        if np.any(arrays["densify_eligible"] & ~arrays["in_block"]):
            raise InvalidInputError(f"Block {self.block_id}: densify_eligible set outside the block")
        originals = arrays["origin_index"][arrays["origin_index"] >= 0]
        if np.unique(originals).shape[0] != originals.shape[0]:
            raise InvalidInputError(f"Block {self.block_id}: duplicate origin indices")

    def __len__(self):
        return len(self.gaussians)

    def select(self, keep):
        """Sub-scene restricted to the primitives where keep is true, order preserved."""
        keep = np.asarray(keep, dtype=bool)
        return BlockSubScene(self.block_id, self.gaussians.subset(keep), self.origin_index[keep],
                             self.in_block[keep], self.densify_eligible[keep], self.parent_eligible[keep],
                             self.cell)


def visibility_crop(scene, matrix, cams, region, verbose=None):
    """
    The Gaussians visible from any camera in cams, flagged by whether their centre lies in
    the block cell `region` (the delta = 0 region of the block).
    """
    verbose = config.VERBOSE if verbose is None else verbose
    cams = sorted(set(int(c) for c in cams))
    if not cams:
        warn(f"Block {region.block_id} has no cameras; its sub-scene is empty", verbose)
        indices = np.zeros(0, dtype=np.int64)
    else:
        indices = visible_gaussians_for_block(matrix, cams).indices()
    sub = scene.subset(indices)
    in_block = region.contains(sub.contracted_xy) if len(sub) else np.zeros(0, dtype=bool)
    return BlockSubScene(region.block_id, sub, indices, in_block, in_block.copy(),
                         np.zeros(len(sub), dtype=bool), region)


def selective_densify_mask(sub):
    """Only primitives inside the block cell may densify."""
    return sub.in_block.copy()


def gradient_proxy(sub, rng):
    """Stand-in view-space gradient magnitudes, exponential with mean GRAD_THRESHOLD."""
    return rng.exponential(config.GRAD_THRESHOLD, size=len(sub))


def simulate_densify_step(sub, grad_mag, grad_threshold=None, scale_split=None, rng=None):
    """
    One vanilla clone/split pass restricted to the selective mask.

    Selected primitives with max(scale) < scale_split are cloned: the parent and its copy are
    each jittered by N(0, (CLONE_JITTER * scale)^2) along the parent's axes. Larger
    ones are split into SPLIT_CHILDREN samples of the parent Gaussian with scale divided
    by SPLIT_FACTOR, and the parent is removed. Children are appended after the survivors.
    """
    grad_threshold = config.GRAD_THRESHOLD if grad_threshold is None else grad_threshold
    scale_split = config.SCALE_SPLIT if scale_split is None else scale_split
    rng = rng if rng is not None else np.random.default_rng(0)
    grad_mag = np.asarray(grad_mag, dtype=np.float64).reshape(-1)
    if grad_mag.shape[0] != len(sub):
        raise InvalidInputError(f"grad_mag has {grad_mag.shape[0]} entries for {len(sub)} Gaussians")

    scene = sub.gaussians
    selected = selective_densify_mask(sub) & (grad_mag >= grad_threshold)
    if not selected.any():
        return sub
    largest = scene.scales.max(axis=1) if len(scene) else np.zeros(0)
    clone = selected & (largest < scale_split)
    split = selected & ~clone

    rotation = quaternion_to_rotation(scene.rotations) if len(scene) else np.zeros((0, 3, 3))
    positions, scales, rotations, opacities = [], [], [], []

    clone_idx = np.flatnonzero(clone)
    if clone_idx.size:
        local = rng.normal(size=(clone_idx.size, 2, 3)) * config.CLONE_JITTER * scene.scales[clone_idx][:, None, :]
        offsets = np.einsum("nij,nkj->nki", rotation[clone_idx], local)
        moved = scene.positions.copy()
        moved[clone_idx] += offsets[:, 0]
        positions.append(scene.positions[clone_idx] + offsets[:, 1])
        scales.append(scene.scales[clone_idx])
        rotations.append(scene.rotations[clone_idx])
        opacities.append(scene.opacities[clone_idx])
        sub = replace(sub, gaussians=GaussianScene(moved, scene.scales, scene.rotations, scene.opacities,
                                                   scene.frame))

    split_idx = np.flatnonzero(split)
    if split_idx.size:
        parents = np.repeat(split_idx, config.SPLIT_CHILDREN)
        local = rng.normal(size=(parents.size, 3)) * scene.scales[parents]
        positions.append(scene.positions[parents] + np.einsum("nij,nj->ni", rotation[parents], local))
        scales.append(scene.scales[parents] / config.SPLIT_FACTOR)
        rotations.append(scene.rotations[parents])
        opacities.append(scene.opacities[parents])

    children = GaussianScene(np.concatenate(positions), np.concatenate(scales), np.concatenate(rotations),
                             np.concatenate(opacities), scene.frame)
    child_in_block = sub.cell.contains(scene.frame.to_grid(children.positions, clamp=True))
    count = len(children)

    survivors = sub.select(~split)
    return BlockSubScene(
        sub.block_id,
        GaussianScene.concat([survivors.gaussians, children], scene.frame),
        np.concatenate([survivors.origin_index, np.full(count, -1, dtype=np.int64)]),
        np.concatenate([survivors.in_block, child_in_block]),
        np.concatenate([survivors.densify_eligible, child_in_block]),
        np.concatenate([survivors.parent_eligible, np.ones(count, dtype=bool)]),
        sub.cell,
    )


def prune_outside(sub, region=None):
    """Keep only primitives whose centre lies in the block cell (half-open, delta = 0)."""
    region = sub.cell if region is None else region
    if len(sub) == 0:
        return sub
    return sub.select(region.contains(sub.gaussians.contracted_xy))


def merge_blocks(subs):
    """Concatenate pruned sub-scenes in block order; an original index may appear only once."""
    subs = sorted(subs, key=lambda s: s.block_id)
    origins = np.concatenate([s.origin_index for s in subs]) if subs else np.zeros(0, dtype=np.int64)
    originals = origins[origins >= 0]
    unique, counts = np.unique(originals, return_counts=True)
    if np.any(counts > 1):
        raise MergeIntegrityError(
            f"Original Gaussians {unique[counts > 1][:10].tolist()} appear in several blocks; "
            "were the sub-scenes pruned with delta = 0?")
    frame = next((s.gaussians.frame for s in subs if s.gaussians.frame is not None), None)
    return GaussianScene.concat([s.gaussians for s in subs], frame)


def merge_origin_index(subs):
    subs = sorted(subs, key=lambda s: s.block_id)
    return np.concatenate([s.origin_index for s in subs]) if subs else np.zeros(0, dtype=np.int64)


def run_block_pipelines(scene, matrix, cuts, assignment, steps=0, grad_fn=None, seed=0, workers=None, verbose=None):
    """
    crop -> densify x steps -> prune for every block in parallel, then merge.

    grad_fn(sub, rng) returns the gradient proxy for a sub-scene; steps are skipped without it.

    Returns:
        tuple: (merged GaussianScene, list of pruned BlockSubScene)
    """
    verbose = config.VERBOSE if verbose is None else verbose

    def one(position):
        i, j = position
        cell = block_region(cuts, i, j)
        rng = np.random.default_rng([seed, cell.block_id])
        sub = visibility_crop(scene, matrix, assignment.get(cell.block_id, []), cell, verbose)
        if grad_fn is not None:
            for _ in range(steps):
                sub = simulate_densify_step(sub, grad_fn(sub, rng), rng=rng)
        pruned = prune_outside(sub)
        if verbose:
            print(f"Block {cell.block_id}: cropped {len(sub)}, kept {len(pruned)}")
        return pruned

    positions = [(i, j) for i in range(1, cuts.m + 1) for j in range(1, cuts.n + 1)]
    subs = parallel_map(one, positions, workers=workers, desc="Blocks")
    return merge_blocks(subs), subs
