import csv
import json

import pytest

from conftest import SMALL_CONFIG
from ingest_io import load_block, load_manifest, load_splat_ply
from main import EXIT_ERROR, EXIT_INTEGRITY, EXIT_OK, main, parse_grid


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("lobe")
    config_path = root / "scene.json"
    config_path.write_text(json.dumps(SMALL_CONFIG))
    scene, cams = root / "scene.ply", root / "cams"
    assert main(["gen-scene", "--config", str(config_path), "--seed", "3",
                 "--out-scene", str(scene), "--out-cams", str(cams)]) == EXIT_OK
    manifest = root / "manifest.json"
    assert main(["partition", "--scene", str(scene), "--cams", str(cams), "--grid", "1x2", "--iters", "4",
                 "--seed", "1", "--out", str(manifest)]) == EXIT_OK
    (root / "model.json").write_text(json.dumps({"slope": 0.01, "intercept": 2.0}))
    return root, scene, cams, manifest


def test_partition_writes_a_valid_manifest(workspace):
    _, _, _, manifest_path = workspace
    manifest = load_manifest(manifest_path)
    assert (manifest.m, manifest.n) == (1, 2)
    assert manifest.provenance["iterations"] == 4
    assert manifest.provenance["tunables"]["delta_scale"] == 0.1


def test_assign_reproduces_the_manifest(workspace, capsys):
    _, scene, cams, manifest = workspace
    assert main(["assign", "--scene", str(scene), "--cams", str(cams), "--manifest", str(manifest)]) == EXIT_OK
    assert "match the manifest" in capsys.readouterr().out


def test_assign_reports_a_tampered_manifest(workspace, tmp_path):
    _, scene, cams, manifest = workspace
    data = json.loads(manifest.read_text())
    ids = data["blocks"][0]["camera_ids"]
    data["blocks"][0]["camera_ids"] = ids[:-1] if ids else [1]
    data["blocks"][0]["camera_count"] = len(data["blocks"][0]["camera_ids"])
    tampered = tmp_path / "tampered.json"
    tampered.write_text(json.dumps(data))
    assert main(["assign", "--scene", str(scene), "--cams", str(cams), "--manifest", str(tampered)]) \
        == EXIT_INTEGRITY


def crop_all(workspace, blocks_dir):
    _, scene, cams, manifest = workspace
    blocks_dir.mkdir(exist_ok=True)
    for block in (1, 2):
        out = blocks_dir / f"block_{block}.ply"
        assert main(["crop", "--scene", str(scene), "--cams", str(cams), "--manifest", str(manifest),
                     "--block", str(block), "--out", str(out)]) == EXIT_OK


def test_crop_densify_and_merge(workspace, tmp_path):
    _, _, _, manifest = workspace
    blocks_dir = tmp_path / "blocks"
    crop_all(workspace, blocks_dir)
    sizes = {}
    for block in (1, 2):
        sub = load_block(str(blocks_dir / f"block_{block}.ply"))
        assert sub.block_id == block
        sizes[block] = int(sub.in_block.sum())

    densified = tmp_path / "densified"
    densified.mkdir()
    assert main(["densify-sim", "--block", str(blocks_dir / "block_1.ply"), "--steps", "2",
                 "--out", str(densified / "block_1.ply")]) == EXIT_OK
    assert len(load_block(str(densified / "block_1.ply"))) >= len(load_block(str(blocks_dir / "block_1.ply")))

    merged = tmp_path / "merged.ply"
    assert main(["merge", "--manifest", str(manifest), "--blocks-dir", str(blocks_dir),
                 "--out", str(merged)]) == EXIT_OK
    assert len(load_splat_ply(merged)) == sizes[1] + sizes[2]


def test_merge_rejects_repeated_blocks(workspace, tmp_path):
    _, scene, cams, manifest = workspace
    blocks_dir = tmp_path / "blocks"
    crop_all(workspace, blocks_dir)
    assert main(["crop", "--scene", str(scene), "--cams", str(cams), "--manifest", str(manifest),
                 "--block", "1", "--out", str(blocks_dir / "block_1_again.ply")]) == EXIT_OK
    assert main(["merge", "--manifest", str(manifest), "--blocks-dir", str(blocks_dir),
                 "--out", str(tmp_path / "merged.ply")]) == EXIT_INTEGRITY


def test_report(workspace, tmp_path):
    root, _, _, manifest = workspace
    model = root / "model.json"
    out = tmp_path / "report.json"
    assert main(["report", "--manifest", str(manifest), "--runtime-model", str(model),
                 "--t-coarse", "38", "--t-partition", "16", "--out", str(out)]) == EXIT_OK
    report = json.loads(out.read_text())
    g_vis = [record.g_vis for record in load_manifest(manifest).blocks]
    assert report["t_fine"] == pytest.approx([round(60 * (0.01 * g + 2.0)) / 60 for g in g_vis])
    assert report["t_e2e"] >= 54

    out_csv = tmp_path / "report.csv"
    assert main(["report", "--manifest", str(manifest), "--format", "csv", "--runtime-model", str(model),
                 "--out", str(out_csv)]) == EXIT_OK
    with open(out_csv, newline="") as f:
        assert len(list(csv.reader(f))) == 3


def test_report_correlates_measured_runtimes(workspace, tmp_path, capsys):
    from analysis_report import RuntimeModel, build_e2e_report, emit_report
    from visibility import BlockLoadStats

    root, _, _, manifest = workspace
    stats = [BlockLoadStats(r.block_id, r.area, r.camera_count, r.g_blk, r.g_vis, r.g_avgvis)
             for r in load_manifest(manifest).blocks]
    measured = tmp_path / "measured.json"
    emit_report(build_e2e_report(stats[::-1], RuntimeModel(0.02, 3.0)), measured)

    out = tmp_path / "report.json"
    assert main(["report", "--manifest", str(manifest), "--runtime-model", str(root / "model.json"),
                 "--runtimes", str(measured), "--out", str(out)]) == EXIT_OK
    correlation = json.loads(out.read_text())["correlation"]
    assert set(correlation) == {"area", "camera_count", "g_blk", "g_vis", "g_avgvis"}
    assert all(r is None or -1.0 <= r <= 1.0 for r in correlation.values())
    assert "measured t_fine" in capsys.readouterr().out

    partial = tmp_path / "partial.json"
    emit_report(build_e2e_report(stats[:1], RuntimeModel(0.02, 3.0)), partial)
    assert main(["report", "--manifest", str(manifest), "--runtimes", str(partial),
                 "--out", str(tmp_path / "r.json")]) == EXIT_ERROR


def test_pipeline_agrees_with_crop_and_merge(workspace, tmp_path, capsys):
    _, scene, cams, manifest = workspace
    blocks_dir = tmp_path / "blocks"
    crop_all(workspace, blocks_dir)
    in_block = sum(int(load_block(str(blocks_dir / f"block_{b}.ply")).in_block.sum()) for b in (1, 2))

    merged = tmp_path / "merged.ply"
    assert main(["pipeline", "--scene", str(scene), "--cams", str(cams), "--manifest", str(manifest),
                 "--out", str(merged), "--blocks-dir", str(tmp_path / "pruned")]) == EXIT_OK
    assert len(load_splat_ply(merged)) == in_block
    assert f"({in_block} original, 0 from densification)" in capsys.readouterr().out
    assert sorted(p.name for p in (tmp_path / "pruned").glob("*.ply")) == ["block_1.ply", "block_2.ply"]

    densified = tmp_path / "densified.ply"
    assert main(["pipeline", "--scene", str(scene), "--cams", str(cams), "--manifest", str(manifest),
                 "--steps", "2", "--out", str(densified)]) == EXIT_OK
    assert len(load_splat_ply(densified)) >= in_block


def test_compare(workspace, tmp_path, capsys):
    root, scene, cams, _ = workspace
    out = tmp_path / "comparison.csv"
    ablation = tmp_path / "ablation.csv"
    assert main(["compare", "--scene", str(scene), "--cams", str(cams), "--grid", "1x2", "--iters", "4",
                 "--strategies", "uniform,equal-camera,optimized", "--runtime-model", str(root / "model.json"),
                 "--out", str(out), "--ablation", str(ablation), "--densify-steps", "1"]) == EXIT_OK
    assert "Winner:" in capsys.readouterr().out
    with open(out, newline="") as f:
        rows = list(csv.DictReader(f))
    assert {r["strategy"] for r in rows} == {"uniform", "equal_camera", "optimized"}
    with open(ablation, newline="") as f:
        rows = list(csv.DictReader(f))
    assert [r["component"] for r in rows] == ["optimized_cuts", "depth_backproject_selection", "visibility_crop",
                                              "selective_densification"]
    for r in rows:
        if r["component"] != "depth_backproject_selection":
            assert int(r["with_max_load"]) <= int(r["without_max_load"])


def test_errors_exit_with_code_two(tmp_path, capsys):
    assert main(["partition", "--scene", str(tmp_path / "missing.ply"), "--cams", str(tmp_path),
                 "--out", str(tmp_path / "m.json")]) == EXIT_ERROR
    assert "Failed to run partition" in capsys.readouterr().out
    assert main(["--threads", "0", "report", "--manifest", "x", "--out", "y"]) == EXIT_ERROR


def test_parse_grid():
    assert parse_grid("3x4") == (3, 4)
    with pytest.raises(SystemExit):
        main(["partition", "--scene", "s", "--cams", "c", "--grid", "0x2", "--out", "o"])
