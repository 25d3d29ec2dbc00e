import csv

import numpy as np
import pytest

from analysis_report import (
    ABLATION_COLUMNS,
    CSV_COLUMNS,
    PROXIES,
    RuntimeModel,
    ablation_study,
    build_e2e_report,
    compare_partitions,
    correlation_study,
    e2e_runtime,
    emit_ablation,
    emit_comparison,
    emit_report,
    fit_runtime_model,
    format_hhmm,
    load_report_json,
    measured_runtimes,
    pearson_r,
    simulate_fine_runtimes,
)
from errors import InvalidInputError, UndefinedCorrelationError
from visibility import BlockLoadStats


@pytest.mark.parametrize("t_coarse, t_partition, t_fine, minutes, hhmm", [
    (38, 16, [30, 22.5, 12], 84.0, "01:24"),
    (26, 8, [30, 29.99], 64.0, "01:04"),
    (0, 0, [0.5], 0.5, "00:00"),
])
def test_end_to_end_runtime(t_coarse, t_partition, t_fine, minutes, hhmm):
    total = e2e_runtime(t_coarse, t_partition, t_fine)
    assert total == pytest.approx(minutes)
    assert format_hhmm(total) == hhmm


def test_end_to_end_rejects_bad_runtimes():
    with pytest.raises(InvalidInputError):
        e2e_runtime(1, 1, [])
    with pytest.raises(InvalidInputError):
        e2e_runtime(-1, 1, [2])


def test_pearson_matches_numpy():
    rng = np.random.default_rng(5)
    for _ in range(100):
        x = rng.normal(size=20)
        y = 0.3 * x + rng.normal(size=20)
        assert pearson_r(x, y) == pytest.approx(np.corrcoef(x, y)[0, 1], abs=1e-12)
    with pytest.raises(UndefinedCorrelationError):
        pearson_r([1, 1, 1], [1, 2, 3])
    with pytest.raises(InvalidInputError):
        pearson_r([1, 2], [1, 2, 3])


def test_least_squares_matches_polyfit():
    g = np.array([1e4, 3e4, 5e4, 8e4, 1.2e5])
    t = np.array([3.1, 2.9, 4.4, 5.0, 6.3])
    model = fit_runtime_model(g, t)
    slope, intercept = np.polyfit(g, t, 1)
    assert model.slope == pytest.approx(slope, abs=1e-9)
    assert model.intercept == pytest.approx(intercept, abs=1e-9)
    assert model.fit_r == pytest.approx(np.corrcoef(g, t)[0, 1], abs=1e-12)


def test_negative_slope_is_clamped():
    t = np.array([3.0, 2.0, 1.5])
    with pytest.warns(UserWarning, match="negative"):
        model = fit_runtime_model([1.0, 2.0, 3.0], t)
    assert model.slope == 0.0
    assert model.intercept == pytest.approx(t.mean())


def test_degenerate_fits():
    model = fit_runtime_model([1.0, 2.0, 3.0], [4.0, 4.0, 4.0])
    assert (model.slope, model.intercept, model.fit_r) == (0.0, 4.0, 0.0)
    with pytest.raises(UndefinedCorrelationError):
        fit_runtime_model([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])


def test_fit_recovers_simulated_slope():
    rng = np.random.default_rng(17)
    g = rng.uniform(1e4, 1e6, size=50)
    t = simulate_fine_runtimes(g, minutes_per_gaussian=2e-5, overhead=2.0, noise=0.05, rng=rng)
    model = fit_runtime_model(g, t)
    assert model.fit_r > 0.95
    assert model.slope == pytest.approx(2e-5, rel=0.1)


def test_runtime_model_serialization():
    model = RuntimeModel(1e-5, 3.0, 0.9)
    assert RuntimeModel.from_dict(model.to_dict()) == model
    np.testing.assert_allclose(model.predict([1e5, 0]), [4.0, 3.0])
    assert RuntimeModel(1.0, -10.0).predict(2.0) == 0.0
    with pytest.raises(InvalidInputError):
        RuntimeModel.from_dict({"slope": -1.0, "intercept": 0.0})


def make_stats():
    return [
        BlockLoadStats(1, 0.25, 4, 100, 400, 100.0),
        BlockLoadStats(2, 0.25, 6, 300, 900, 150.0),
        BlockLoadStats(3, 0.30, 5, 200, 700, 140.0),
        BlockLoadStats(4, 0.20, 5, 200, 500, 100.0),
    ]


def test_correlation_study():
    stats = make_stats()
    t = [10.0, 21.0, 17.0, 12.0]
    result = correlation_study(stats, t)
    assert sorted(result) == sorted(PROXIES)
    assert result["g_vis"] == pytest.approx(np.corrcoef([400, 900, 700, 500], t)[0, 1])
    assert all(r is None or -1.0 <= r <= 1.0 for r in result.values())
    flat = correlation_study([BlockLoadStats(k, 0.5, 3, 10, 20 * k, 5.0) for k in (1, 2)], [1.0, 2.0])
    assert flat["area"] is None and flat["g_vis"] == pytest.approx(1.0)


def test_emit_report(tmp_path):
    report = build_e2e_report(make_stats(), RuntimeModel(0.02, 1.0), t_coarse=38, t_partition=16)
    assert report.t_fine == pytest.approx([9.0, 19.0, 15.0, 11.0])
    assert report.t_e2e == pytest.approx(38 + 16 + 19)

    json_path = tmp_path / "report.json"
    emit_report(report, json_path)
    loaded = load_report_json(json_path)
    assert loaded.t_e2e == report.t_e2e and loaded.stats == report.stats

    csv_path = tmp_path / "report.csv"
    emit_report(report, csv_path, format="csv")
    with open(csv_path, newline="") as f:
        rows = list(csv.reader(f))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert [int(r[0]) for r in rows[1:]] == [1, 2, 3, 4]
    assert float(rows[2][-1]) == pytest.approx(19.0)

    with pytest.raises(InvalidInputError):
        emit_report(report, tmp_path / "report.xml", format="xml")


def test_report_fields_add_up_to_the_end_to_end_time():
    stats = [BlockLoadStats(1, 0.5, 3, 50, 100, 40.0), BlockLoadStats(2, 0.5, 4, 400, 1000, 300.0)]
    report = build_e2e_report(stats, RuntimeModel(0.0012345, 0.0), t_coarse=1.0, t_partition=0.5)
    assert report.t_fine == pytest.approx([7 / 60, 74 / 60])
    assert report.t_coarse + report.t_partition + max(report.t_fine) == pytest.approx(report.t_e2e, abs=1e-12)
    for minutes in [report.t_coarse, report.t_partition, report.t_e2e, *report.t_fine]:
        assert minutes * 60 == pytest.approx(round(minutes * 60), abs=1e-9)


def test_optimized_partition_wins_comparison(small_world, tmp_path):
    scene, cameras = small_world
    model = RuntimeModel(1e-2, 5.0)
    comparison = compare_partitions(scene, cameras, ["uniform", "optimized"], model, m=2, n=2,
                                    t_coarse=30, t_partition=5, seed=2, iterations=8)
    uniform, optimized = comparison.results
    assert (uniform.name, optimized.name) == ("uniform", "optimized")
    assert optimized.max_g_vis <= uniform.max_g_vis
    assert optimized.t_e2e <= uniform.t_e2e
    assert comparison.winner == "optimized"

    path = tmp_path / "comparison.csv"
    emit_comparison(comparison, path)
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 8
    assert {r["winner"] for r in rows if r["strategy"] == "optimized"} == {"1"}


def test_measured_runtimes_follow_block_order(tmp_path):
    stats = make_stats()
    recorded = build_e2e_report(stats[::-1], RuntimeModel(0.02, 1.0))
    assert measured_runtimes(recorded, [1, 2, 3, 4]) == pytest.approx([9.0, 19.0, 15.0, 11.0])
    with pytest.raises(InvalidInputError):
        measured_runtimes(recorded, [1, 5])

    recorded.correlation = correlation_study(stats, [9.0, 19.0, 15.0, 11.0])
    path = tmp_path / "measured.json"
    emit_report(recorded, path)
    assert load_report_json(path).correlation == pytest.approx(recorded.correlation)


def test_ablation_switches_one_component_off_at_a_time(small_world, tmp_path):
    from partition_opt import PartitionProblem

    scene, cameras = small_world
    problem = PartitionProblem(scene, cameras)
    model = RuntimeModel(1e-2, 5.0)
    rows = ablation_study(problem, model, 2, 2, seed=1, iterations=6, densify_steps=1)
    by_name = {row.component: row for row in rows}
    assert list(by_name) == ["optimized_cuts", "depth_backproject_selection", "visibility_crop",
                             "selective_densification"]
    for row in rows:
        assert row.with_t_fine == pytest.approx(float(model.predict(row.with_load)))
        assert row.without_t_fine == pytest.approx(float(model.predict(row.without_load)))

    assert by_name["optimized_cuts"].with_load <= by_name["optimized_cuts"].without_load
    assert by_name["visibility_crop"].without_load == len(scene)
    assert by_name["visibility_crop"].with_load == by_name["optimized_cuts"].with_load
    assert by_name["depth_backproject_selection"].with_load == by_name["optimized_cuts"].with_load
    densify = by_name["selective_densification"]
    assert densify.with_load <= densify.without_load

    path = tmp_path / "ablation.csv"
    emit_ablation(rows, path)
    with open(path, newline="") as f:
        written = list(csv.reader(f))
    assert tuple(written[0]) == ABLATION_COLUMNS and len(written) == 5
