import numpy as np
import pytest

from block_pipeline import (
    BlockSubScene,
    merge_blocks,
    merge_origin_index,
    prune_outside,
    run_block_pipelines,
    selective_densify_mask,
    simulate_densify_step,
    visibility_crop,
)
from camera_select import render_depth
from conftest import make_scene
from errors import InvalidInputError, MergeIntegrityError
from scene_model import GridCuts, SceneFrame, block_region, block_regions
from selection_manager import CameraSelectionManager
from visibility import visibility_matrix


@pytest.fixture(scope="module")
def partitioned(small_world):
    scene, cameras = small_world
    cuts = GridCuts(2, 2, [0.45], [0.55])
    selection = CameraSelectionManager("depth_backproject")
    selection.prepare(scene, cameras)
    assignment = selection.assign(cuts, (0.05, 0.05), 0.15)
    return scene, cameras, visibility_matrix(scene, cameras), cuts, assignment


def test_crop_holds_the_visible_union(partitioned):
    scene, _, matrix, cuts, assignment = partitioned
    for cell in block_regions(cuts):
        cams = assignment[cell.block_id]
        sub = visibility_crop(scene, matrix, cams, cell)
        expected = sorted({int(i) for c in cams for i in matrix.row(c).indices()})
        assert sub.origin_index.tolist() == expected
        in_cell = [bool(cell.contains(scene.contracted_xy[i:i + 1])[0]) for i in expected]
        assert sub.in_block.tolist() == in_cell
        np.testing.assert_array_equal(sub.densify_eligible, sub.in_block)
        assert not sub.parent_eligible.any()


def test_cropped_renders_are_bit_identical(partitioned):
    scene, cameras, matrix, cuts, assignment = partitioned
    by_id = {cam.id: cam for cam in cameras}
    checked = 0
    for cell in block_regions(cuts):
        sub = visibility_crop(scene, matrix, assignment[cell.block_id], cell)
        for camera_id in assignment[cell.block_id]:
            cam = by_id[camera_id]
            full = render_depth(cam, scene)
            cropped = render_depth(cam, sub.gaussians)
            assert np.array_equal(full.depth, cropped.depth)
            assert np.array_equal(full.weight, cropped.weight)
            checked += 1
    assert checked > 0


def test_block_without_cameras_gives_empty_sub_scene(partitioned):
    scene, _, matrix, cuts, _ = partitioned
    with pytest.warns(UserWarning):
        sub = visibility_crop(scene, matrix, [], block_region(cuts, 1, 1))
    assert len(sub) == 0


def test_selective_densification_leaves_outside_untouched(partitioned):
    scene, _, matrix, cuts, assignment = partitioned
    cell = block_region(cuts, 2, 2)
    sub = visibility_crop(scene, matrix, assignment[cell.block_id], cell)
    outside = ~sub.in_block
    before = {int(o): (sub.gaussians.positions[k].copy(), sub.gaussians.scales[k].copy(),
                       sub.gaussians.rotations[k].copy(), float(sub.gaussians.opacities[k]))
              for k, o in enumerate(sub.origin_index) if outside[k]}
    rng = np.random.default_rng(0)
    current = sub
    for _ in range(5):
        # every primitive gets a gradient far above the threshold
        grad = np.full(len(current), 1e3)
        created_before = int((current.origin_index < 0).sum())
        current = simulate_densify_step(current, grad, scale_split=0.2, rng=rng)
        assert int((current.origin_index < 0).sum()) >= created_before

    created = current.origin_index < 0
    assert created.any()
    assert current.parent_eligible[created].all()
    np.testing.assert_array_equal(current.densify_eligible, current.in_block)
    after = {int(o): k for k, o in enumerate(current.origin_index) if o >= 0 and not current.in_block[k]}
    assert set(after) == set(before)
    for origin, (position, scale, rotation, opacity) in before.items():
        k = after[origin]
        np.testing.assert_array_equal(current.gaussians.positions[k], position)
        np.testing.assert_array_equal(current.gaussians.scales[k], scale)
        np.testing.assert_array_equal(current.gaussians.rotations[k], rotation)
        assert current.gaussians.opacities[k] == opacity


def test_clone_and_split_counts(small_world):
    scene, _ = small_world
    positions = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 0.0], [2.0, 0.0, 0.0]])
    scales = np.array([[0.01, 0.01, 0.01], [1.0, 0.5, 0.5], [0.01, 0.01, 0.01]])
    cell = block_region(GridCuts(1, 1), 1, 1)
    sub = BlockSubScene(1, make_scene(positions, scales=scales, frame=scene.frame), [0, 1, 2],
                        [True, True, False], [True, True, False], [False] * 3, cell)
    assert selective_densify_mask(sub).tolist() == [True, True, False]
    result = simulate_densify_step(sub, np.ones(3), scale_split=0.1, rng=np.random.default_rng(1))
    # 0 is cloned, 1 is split into two children, 2 is outside the block
    assert result.origin_index.tolist() == [0, 2, -1, -1, -1]
    np.testing.assert_array_equal(result.gaussians.scales[2], scales[0])
    # the cloned parent and its copy both move, by a small multiple of the parent scale
    parent, copy = result.gaussians.positions[0], result.gaussians.positions[2]
    assert not np.array_equal(parent, positions[0]) and not np.array_equal(copy, positions[0])
    assert not np.array_equal(parent, copy)
    assert np.abs(np.stack([parent, copy]) - positions[0]).max() < 10 * 0.1 * 0.01
    np.testing.assert_array_equal(result.gaussians.positions[1], positions[2])
    np.testing.assert_allclose(result.gaussians.scales[3:], np.tile(scales[1] / 1.6, (2, 1)))
    assert result.parent_eligible.tolist() == [False, False, True, True, True]
    with pytest.raises(InvalidInputError):
        simulate_densify_step(sub, np.ones(2))


def test_prune_keeps_cell_members():
    positions = np.array([[-4.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [4.0, 1.0, 0.0]])
    frame = SceneFrame(np.zeros(3), 10.0, np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]), [-0.4, 0.0], [0.4, 0.1])
    scene = make_scene(positions, frame=frame)
    cell = block_region(GridCuts(2, 1, [0.5], []), 1, 1)
    sub = BlockSubScene(1, scene, [0, 1, 2, 3], [True] * 4, [False] * 4, [False] * 4, cell)
    assert prune_outside(sub).origin_index.tolist() == [0, 1]


def test_three_by_three_merge_recovers_visible_cells(small_world):
    scene, cameras = small_world
    cuts = GridCuts(3, 3, [0.3, 0.6], [0.35, 0.7])
    selection = CameraSelectionManager("depth_backproject")
    selection.prepare(scene, cameras)
    assignment = selection.assign(cuts, (0.1 / 3, 0.1 / 3), 0.15)
    matrix = visibility_matrix(scene, cameras)
    merged, subs = run_block_pipelines(scene, matrix, cuts, assignment)

    expected = set()
    for cell in block_regions(cuts):
        visible = {int(i) for c in assignment[cell.block_id] for i in matrix.row(c).indices()}
        expected |= {i for i in visible if cell.contains(scene.contracted_xy[i:i + 1])[0]}
    origins = merge_origin_index(subs)
    assert len(origins) == len(set(origins.tolist()))
    assert set(origins.tolist()) == expected
    assert len(merged) == len(expected)
    np.testing.assert_array_equal(merged.positions, scene.positions[origins])


def test_merge_rejects_duplicates(small_world):
    scene, _ = small_world
    cuts = GridCuts(1, 2, [], [0.5])
    left, right = block_regions(cuts)
    a = BlockSubScene(1, scene.subset([0, 1]), [0, 1], [True, True], [True, True], [False, False], left)
    b = BlockSubScene(2, scene.subset([1, 2]), [1, 2], [True, True], [True, True], [False, False], right)
    with pytest.raises(MergeIntegrityError):
        merge_blocks([a, b])


def test_sub_scene_validation(small_world):
    scene, _ = small_world
    cell = block_region(GridCuts(1, 1), 1, 1)
    with pytest.raises(InvalidInputError):
        BlockSubScene(1, scene.subset([0, 1]), [0, 0], [True, True], [True, True], [False, False], cell)
    with pytest.raises(InvalidInputError):
        BlockSubScene(1, scene.subset([0, 1]), [0, 1], [False, True], [True, True], [False, False], cell)
    with pytest.raises(InvalidInputError):
        BlockSubScene(1, scene.subset([0, 1]), [0], [True], [True], [False], cell)
