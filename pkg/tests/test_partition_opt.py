import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from camera_select import RENDER_COUNTER, reset_render_counter
from errors import ConditioningError, InvalidInputError
from gp_surrogate import _factor, gp_fit, matern52
from ingest_io import write_manifest
from partition_manager import PartitionManager
from partition_opt import (
    CutBounds,
    PartitionProblem,
    acquisition_ei,
    default_delta,
    init_uniform_cuts,
    objective,
    optimize_partition,
    propose_candidate,
)
from scene_model import GridCuts, SyntheticSceneConfig, generate_synthetic_scene


def test_uniform_cuts():
    np.testing.assert_allclose(init_uniform_cuts(4, 1).v, [0.25, 0.5, 0.75])
    assert init_uniform_cuts(1, 1).vector().shape == (0,)
    with pytest.raises(InvalidInputError):
        init_uniform_cuts(0, 2)
    assert default_delta(2, 4, 0.1) == (0.05, 0.025)


def test_bounds_move_cuts_halfway_to_neighbours():
    bounds = CutBounds.for_grid(4, 1)
    assert bounds.lo[0] == 0.125 and bounds.hi[-1] == 0.875
    assert bounds.hi[0] < bounds.lo[1]
    assert bounds.contains(init_uniform_cuts(4, 1).vector())


@settings(max_examples=50)
@given(st.integers(1, 4), st.integers(1, 4), st.data())
def test_every_point_in_bounds_gives_valid_cuts(m, n, data):
    bounds = CutBounds.for_grid(m, n)
    u = data.draw(st.lists(st.floats(0, 1), min_size=bounds.dim, max_size=bounds.dim))
    x = bounds.from_unit(np.array(u))
    assert bounds.contains(x)
    cuts = bounds.cuts(x)
    assert (cuts.m, cuts.n) == (m, n)


def test_matern_kernel_properties():
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(6, 2))
    K = matern52(X, X, np.array([0.3, 0.5]), 2.0)
    np.testing.assert_allclose(np.diag(K), 2.0)
    np.testing.assert_allclose(K, K.T)
    assert np.all(np.linalg.eigvalsh(K) > -1e-10)


def test_cholesky_jitter_gives_up():
    with pytest.raises(ConditioningError):
        _factor(-np.eye(3))
    L, jitter = _factor(np.ones((3, 3)))
    assert jitter > 0
    np.testing.assert_allclose(L @ L.T, np.ones((3, 3)) + jitter * np.eye(3), atol=1e-12)


def test_gp_interpolates_observations():
    X = np.linspace(0, 1, 8)[:, None]
    y = np.sin(4 * X[:, 0]) * 100 + 500
    gp = gp_fit(X, y, rng=np.random.default_rng(1))
    mean, variance = gp.predict(X)
    np.testing.assert_allclose(mean, y, atol=2.0)
    assert np.all(variance < 1.0)
    _, far = gp.predict(np.array([[3.0]]))
    assert far[0] > variance.max()
    with pytest.raises(InvalidInputError):
        gp_fit(X[:1], y[:1])


def test_expected_improvement():
    X = np.linspace(0, 1, 5)[:, None]
    y = (X[:, 0] - 0.6) ** 2
    gp = gp_fit(X, y, rng=np.random.default_rng(2))
    grid = np.linspace(0, 1, 41)[:, None]
    ei = acquisition_ei(gp, grid, y.min())
    assert ei.shape == (41,) and np.all(ei >= 0)
    assert isinstance(acquisition_ei(gp, np.array([0.5]), y.min()), float)
    bounds = CutBounds(np.zeros(1), np.ones(1), 1, 2)
    x = propose_candidate(gp, bounds, y.min(), np.random.default_rng(3))
    assert bounds.contains(x)
    near = propose_candidate(gp, bounds, y.min(), np.random.default_rng(3), incumbent=X[3])
    assert bounds.contains(near)
    again = propose_candidate(gp, bounds, y.min(), np.random.default_rng(3), incumbent=X[3])
    np.testing.assert_array_equal(near, again)


def test_objective_is_max_block_load(small_world):
    scene, cameras = small_world
    problem = PartitionProblem(scene, cameras, delta=(0.05, 0.05))
    cuts = GridCuts(2, 2, [0.5], [0.5])
    value, stats, assignment = problem.evaluate(cuts)
    assert value == max(s.g_vis for s in stats)
    again, _ = objective(cuts, scene, problem.selection.clouds, (0.05, 0.05), problem.tau, problem.matrix)
    assert again == value
    with pytest.raises(InvalidInputError):
        objective(cuts.vector(), scene, problem.selection.clouds, (0.05, 0.05), problem.tau, problem.matrix)


def test_search_never_worse_than_uniform(small_world):
    scene, cameras = small_world
    problem = PartitionProblem(scene, cameras, delta=(0.05, 0.05))
    cuts, state, manifest = optimize_partition(scene, cameras, 2, 2, L=15, delta=(0.05, 0.05), seed=4,
                                               problem=problem)
    assert state.iteration == 15
    assert state.best_y <= state.y[0]
    assert state.incumbent_history == sorted(state.incumbent_history, reverse=True)
    assert state.y[0] == problem.evaluate(init_uniform_cuts(2, 2))[0]
    assert manifest.provenance["objective_history"] == state.y
    assert CutBounds.for_grid(2, 2).contains(cuts.vector())


def test_single_block_grid_reuses_the_only_evaluation(small_world):
    scene, cameras = small_world
    cuts, state, _ = optimize_partition(scene, cameras, 1, 1, L=3)
    assert cuts == GridCuts(1, 1)
    assert state.iteration == 3 and state.cache_hits == 2


def test_whole_search_costs_one_render_per_camera(small_world):
    scene, cameras = small_world
    reset_render_counter()
    optimize_partition(scene, cameras, 2, 2, L=12, seed=0)
    assert RENDER_COUNTER.value == len(cameras)


def test_close_to_exhaustive_scan_on_two_blocks(skewed_world):
    scene, cameras = skewed_world
    problem = PartitionProblem(scene, cameras)
    bounds = CutBounds.for_grid(1, 2)
    scan = min(problem.evaluate(bounds.cuts(x))[0] for x in np.linspace(bounds.lo, bounds.hi, 101))
    for seed in range(10):
        _, state, _ = optimize_partition(scene, cameras, 1, 2, L=30, seed=seed, problem=problem)
        assert state.best_y <= state.y[0]
        assert state.best_y <= 1.05 * scan, f"seed {seed}: {state.best_y} vs scan {scan}"


SKEWED_CITY = dict(gaussian_count=4000, cluster_count=4, cluster_masses=[6.0, 2.0, 1.0, 1.0], camera_count=144,
                   width=160, height=120)


def test_optimized_cuts_beat_uniform_on_skewed_cities():
    wins = 0
    for seed in range(10):
        scene, cameras = generate_synthetic_scene(SyntheticSceneConfig(**SKEWED_CITY), seed=seed)
        _, state, _ = optimize_partition(scene, cameras, 2, 2, L=50, tau=0.15, seed=seed)
        uniform = state.y[0]
        assert state.best_y <= uniform
        wins += state.best_y <= 0.9 * uniform
    assert wins >= 8


def test_identical_runs_write_identical_manifests(small_world, tmp_path):
    scene, cameras = small_world
    paths = []
    for k in range(2):
        _, _, manifest = optimize_partition(scene, cameras, 2, 2, L=10, seed=9)
        path = tmp_path / f"manifest_{k}.json"
        write_manifest(manifest, path)
        paths.append(path)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_strategies(small_world):
    scene, cameras = small_world
    problem = PartitionProblem(scene, cameras)
    uniform = PartitionManager("uniform").partition(problem, 2, 3)
    assert uniform == init_uniform_cuts(2, 3)
    equal = PartitionManager("equal-camera").partition(problem, 2, 2)
    assert (equal.m, equal.n) == (2, 2)
    optimized = PartitionManager("optimized", iterations=8, seed=1).partition(problem, 2, 2)
    assert problem.evaluate(optimized)[0] <= problem.evaluate(init_uniform_cuts(2, 2))[0]
    with pytest.raises(ValueError):
        PartitionManager("kmeans")
