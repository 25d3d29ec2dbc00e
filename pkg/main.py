import argparse
import glob
import os
import sys

import numpy as np

from config_loader import config
from errors import MergeIntegrityError

EXIT_OK = 0
EXIT_INTEGRITY = 1
EXIT_ERROR = 2


def parse_grid(text):
    try:
        m, n = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like MxN, got {text!r}")
    if m < 1 or n < 1:
        raise argparse.ArgumentTypeError(f"grid must be at least 1x1, got {text!r}")
    return m, n


class LobeCLI:
    """Command-line front end; every subcommand returns a process exit code."""

    def __init__(self, verbose=None):
        self.verbose = config.VERBOSE if verbose is None else verbose

    # -- helpers ----------------------------------------------------------

    def _load_scene(self, scene_path, cams_dir, frame=None):
        from ingest_io import load_colmap_cameras, load_splat_ply
        from scene_model import SceneFrame

        scene = load_splat_ply(scene_path)
        cameras = load_colmap_cameras(cams_dir)
        if frame is None:
            frame = SceneFrame.fit(scene.positions, cameras)
        if self.verbose:
            print(f"Loaded {len(scene)} Gaussians and {len(cameras)} cameras")
        return scene.with_frame(frame), cameras

    def _selection(self, args, tunables=None):
        """Camera selection from the command line, falling back to the tunables a manifest was built with."""
        from selection_manager import CameraSelectionManager

        tunables = tunables or {}
        selector = getattr(args, "selector", None) or tunables.get("selector") or config.CAMERA_SELECTOR
        kwargs = {
            "downscale": getattr(args, "depth_downscale", None) or tunables.get("downscale"),
            "weight_floor": tunables.get("weight_floor"),
        }
        if selector == "depth_backproject":
            kwargs["stride"] = getattr(args, "stride", None) or tunables.get("stride")
        return CameraSelectionManager(selector, verbose=self.verbose, **kwargs)

    def _runtime_model(self, source, g_vis, seed):
        import json
        from analysis_report import RuntimeModel, fit_runtime_model, simulate_fine_runtimes

        if source == "fit":
            t_fine = simulate_fine_runtimes(g_vis, rng=np.random.default_rng(seed))
            model = fit_runtime_model(g_vis, t_fine, verbose=self.verbose)
            if self.verbose:
                print(f"Fitted runtime model: slope {model.slope:.3g}, intercept {model.intercept:.3g}, r {model.fit_r:.3f}")
            return model
        with open(source, "r") as f:
            return RuntimeModel.from_dict(json.load(f))

    def _merge_summary(self, subs, merged, out):
        from block_pipeline import merge_origin_index

        origins = merge_origin_index(subs)
        print(f"Merged {len(subs)} blocks into {len(merged)} Gaussians at {out} "
              f"({int((origins >= 0).sum())} original, {int((origins < 0).sum())} from densification)")

    # -- subcommands ------------------------------------------------------

    def gen_scene(self, args):
        from ingest_io import load_synthetic_config, save_splat_ply, write_colmap_cameras
        from scene_model import SyntheticSceneConfig, generate_synthetic_scene

        cfg = load_synthetic_config(args.config) if args.config else SyntheticSceneConfig()
        scene, cameras = generate_synthetic_scene(cfg, args.seed)
        save_splat_ply(scene, args.out_scene)
        write_colmap_cameras(cameras, args.out_cams)
        print(f"Wrote {len(scene)} Gaussians to {args.out_scene} and {len(cameras)} cameras to {args.out_cams}")
        return EXIT_OK

    def partition(self, args):
        from camera_select import RENDER_COUNTER
        from ingest_io import write_manifest
        from partition_opt import PartitionProblem, default_delta, optimize_partition

        m, n = args.grid
        scene, cameras = self._load_scene(args.scene, args.cams)
        delta = default_delta(m, n, args.delta_scale)
        selection = self._selection(args)
        selection.prepare(scene, cameras)
        problem = PartitionProblem(scene, cameras, delta, args.tau, selection=selection, verbose=self.verbose)
        cuts, state, manifest = optimize_partition(scene, cameras, m, n, L=args.iters, delta=delta, tau=args.tau,
                                                   seed=args.seed, problem=problem, verbose=self.verbose)
        manifest.provenance["tunables"]["delta_scale"] = float(args.delta_scale)
        write_manifest(manifest, args.out)
        print(f"Best max G_vis {state.best_y:.0f} (uniform {state.y[0]:.0f}) after {state.iteration} evaluations, "
              f"{selection.render_count} depth renders; manifest written to {args.out}")
        if self.verbose:
            print(f"Render counter: {RENDER_COUNTER.value}")
        return EXIT_OK

    def assign(self, args):
        from ingest_io import load_manifest

        manifest = load_manifest(args.manifest)
        scene, cameras = self._load_scene(args.scene, args.cams, manifest.frame)
        selection = self._selection(args, manifest.provenance.get("tunables"))
        selection.prepare(scene, cameras)
        recomputed = selection.assign(manifest.cuts, manifest.delta, manifest.tau)
        mismatched = [b for b, ids in manifest.assignment.items() if recomputed.get(b, []) != ids]
        if mismatched:
            for b in mismatched:
                print(f"Block {b}: manifest {manifest.assignment[b]} vs recomputed {recomputed.get(b, [])}")
            return EXIT_INTEGRITY
        print(f"All {len(recomputed)} block camera sets match the manifest")
        return EXIT_OK

    def crop(self, args):
        from block_pipeline import visibility_crop
        from ingest_io import load_manifest, save_block
        from scene_model import block_region
        from visibility import visibility_matrix

        manifest = load_manifest(args.manifest)
        scene, cameras = self._load_scene(args.scene, args.cams, manifest.frame)
        record = manifest.block(args.block)
        cuts = manifest.cuts
        cell = block_region(cuts, *cuts.block_position(args.block))
        used = [cam for cam in cameras if cam.id in set(record.camera_ids)]
        matrix = visibility_matrix(scene, used or cameras)
        sub = visibility_crop(scene, matrix, record.camera_ids, cell, verbose=self.verbose)
        save_block(sub, args.out)
        print(f"Block {args.block}: {len(sub)} Gaussians ({int(sub.in_block.sum())} in block) written to {args.out}")
        return EXIT_OK

    def densify_sim(self, args):
        from block_pipeline import gradient_proxy, simulate_densify_step
        from ingest_io import load_block, save_block

        sub = load_block(args.block)
        rng = np.random.default_rng(args.seed)
        for step in range(args.steps):
            sub = simulate_densify_step(sub, gradient_proxy(sub, rng), rng=rng)
            if self.verbose:
                print(f"Step {step + 1}: {len(sub)} Gaussians")
        save_block(sub, args.out)
        print(f"Block {sub.block_id}: {len(sub)} Gaussians after {args.steps} steps written to {args.out}")
        return EXIT_OK

    def merge(self, args):
        from block_pipeline import merge_blocks, prune_outside
        from ingest_io import block_sidecar_path, load_block, load_manifest, save_splat_ply
        from utils import warn

        manifest = load_manifest(args.manifest)
        paths = sorted(p for p in glob.glob(os.path.join(args.blocks_dir, "*.ply"))
                       if os.path.exists(block_sidecar_path(p)))
        subs = [prune_outside(load_block(p)) for p in paths]
        found = sorted(s.block_id for s in subs)
        expected = [record.block_id for record in manifest.blocks]
        if len(set(found)) != len(found):
            print(f"Block files in {args.blocks_dir} repeat block ids: {found}")
            return EXIT_INTEGRITY
        missing = sorted(set(expected) - set(found))
        if missing:
            warn(f"No block files for blocks {missing}", self.verbose)
        try:
            merged = merge_blocks(subs)
        except MergeIntegrityError as e:
            print(f"Merge integrity check failed: {e}")
            return EXIT_INTEGRITY
        save_splat_ply(merged, args.out)
        self._merge_summary(subs, merged, args.out)
        return EXIT_OK

    def pipeline(self, args):
        from block_pipeline import gradient_proxy, run_block_pipelines
        from ingest_io import load_manifest, save_block, save_splat_ply
        from visibility import visibility_matrix

        manifest = load_manifest(args.manifest)
        scene, cameras = self._load_scene(args.scene, args.cams, manifest.frame)
        matrix = visibility_matrix(scene, cameras)
        merged, subs = run_block_pipelines(scene, matrix, manifest.cuts, manifest.assignment, steps=args.steps,
                                           grad_fn=gradient_proxy, seed=args.seed, verbose=self.verbose)
        if args.blocks_dir:
            os.makedirs(args.blocks_dir, exist_ok=True)
            for sub in subs:
                save_block(sub, os.path.join(args.blocks_dir, f"block_{sub.block_id}.ply"))
        save_splat_ply(merged, args.out)
        self._merge_summary(subs, merged, args.out)
        return EXIT_OK

    def report(self, args):
        from analysis_report import (
            build_e2e_report,
            correlation_study,
            emit_report,
            fit_runtime_model,
            format_hhmm,
            load_report_json,
            measured_runtimes,
        )
        from ingest_io import load_manifest
        from visibility import BlockLoadStats

        manifest = load_manifest(args.manifest)
        stats = [BlockLoadStats(r.block_id, r.area, r.camera_count, r.g_blk, r.g_vis, r.g_avgvis)
                 for r in manifest.blocks]
        g_vis = [s.g_vis for s in stats]
        measured = None
        if args.runtimes:
            measured = measured_runtimes(load_report_json(args.runtimes), [s.block_id for s in stats])
        if measured is not None and args.runtime_model == "fit":
            model = fit_runtime_model(g_vis, measured, verbose=self.verbose)
        else:
            model = self._runtime_model(args.runtime_model, g_vis, args.seed)
        report = build_e2e_report(stats, model, args.t_coarse, args.t_partition)
        if measured is not None:
            report.correlation = correlation_study(stats, measured)
            for proxy, r in report.correlation.items():
                print(f"r({proxy}, measured t_fine) = " + ("undefined" if r is None else f"{r:.3f}"))
        emit_report(report, args.out, args.format)
        print(f"T_E2E {format_hhmm(report.t_e2e)} (max t_fine {max(report.t_fine):.1f} min); report written to {args.out}")
        return EXIT_OK

    def compare(self, args):
        from analysis_report import ablation_study, compare_partitions, emit_ablation, emit_comparison
        from partition_opt import PartitionProblem, default_delta, init_uniform_cuts

        m, n = args.grid
        scene, cameras = self._load_scene(args.scene, args.cams)
        delta = default_delta(m, n, args.delta_scale)
        selection = self._selection(args)
        selection.prepare(scene, cameras)
        problem = PartitionProblem(scene, cameras, delta, args.tau, selection=selection, verbose=self.verbose)
        uniform_g_vis = [s.g_vis for s in problem.evaluate(init_uniform_cuts(m, n))[1]]
        model = self._runtime_model(args.runtime_model, uniform_g_vis, args.seed)
        strategies = [s for s in args.strategies.split(",") if s.strip()]
        comparison = compare_partitions(scene, cameras, strategies, model, m, n, delta, args.tau, seed=args.seed,
                                        iterations=args.iters, problem=problem, verbose=self.verbose)
        emit_comparison(comparison, args.out)
        for result in comparison.results:
            print(f"{result.name:>13}: max G_vis {result.max_g_vis}, max t_fine {result.max_t_fine:.1f} min")
        print(f"Winner: {comparison.winner}; comparison written to {args.out}")
        if args.ablation:
            optimized = next((r.cuts for r in comparison.results if r.name == "optimized"), None)
            rows = ablation_study(problem, model, m, n, cuts=optimized, seed=args.seed, iterations=args.iters,
                                  densify_steps=args.densify_steps, verbose=self.verbose)
            emit_ablation(rows, args.ablation)
            for row in rows:
                print(f"{row.component:>27}: max t_fine {row.with_t_fine:.1f} min on, {row.without_t_fine:.1f} min off")
            print(f"Ablation written to {args.ablation}")
        return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="lobe", description="Load-balanced scene partitioning for block-parallel splat training")
    parser.add_argument("--verbose", dest="verbose", action="store_true", default=None)
    parser.add_argument("--quiet", dest="verbose", action="store_false")
    parser.add_argument("--threads", type=int, default=None, help="worker threads (overrides LOBE_THREADS)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-scene", help="generate a clustered synthetic scene and camera rig")
    p.add_argument("--config", default=None, help="synthetic scene JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-scene", required=True)
    p.add_argument("--out-cams", required=True)

    def selection_flags(p):
        p.add_argument("--selector", choices=("depth_backproject", "render_compare"), default=None)
        p.add_argument("--depth-downscale", type=int, default=None)
        p.add_argument("--stride", type=int, default=None)

    p = sub.add_parser("partition", help="optimize the grid cuts and write a manifest")
    p.add_argument("--scene", required=True)
    p.add_argument("--cams", required=True)
    p.add_argument("--grid", type=parse_grid, default=(2, 2))
    p.add_argument("--iters", type=int, default=config.BO_ITERATIONS)
    p.add_argument("--tau", type=float, default=config.TAU)
    p.add_argument("--delta-scale", type=float, default=config.DELTA_SCALE)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    selection_flags(p)

    p = sub.add_parser("assign", help="recompute the camera sets of a manifest and compare")
    p.add_argument("--scene", required=True)
    p.add_argument("--cams", required=True)
    p.add_argument("--manifest", required=True)
    selection_flags(p)

    p = sub.add_parser("crop", help="write the visibility-cropped sub-scene of one block")
    p.add_argument("--scene", required=True)
    p.add_argument("--cams", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--block", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("densify-sim", help="run simulated selective densification on a block")
    p.add_argument("--block", required=True)
    p.add_argument("--steps", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("merge", help="prune and merge block sub-scenes")
    p.add_argument("--manifest", required=True)
    p.add_argument("--blocks-dir", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("pipeline", help="crop, densify, prune and merge every block of a manifest")
    p.add_argument("--scene", required=True)
    p.add_argument("--cams", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--steps", type=int, default=0, help="simulated densification steps per block")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--blocks-dir", default=None, help="also write the pruned block sub-scenes here")
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="predict per-block and end-to-end runtimes")
    p.add_argument("--manifest", required=True)
    p.add_argument("--runtime-model", default="fit", help="runtime model JSON, or 'fit'")
    p.add_argument("--runtimes", default=None,
                   help="report JSON of measured block runtimes; correlated with the load proxies and fit by 'fit'")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--t-coarse", type=float, default=0.0)
    p.add_argument("--t-partition", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("compare", help="compare partition strategies")
    p.add_argument("--scene", required=True)
    p.add_argument("--cams", required=True)
    p.add_argument("--grid", type=parse_grid, default=(2, 2))
    p.add_argument("--strategies", default="uniform,equal-camera,optimized")
    p.add_argument("--iters", type=int, default=config.BO_ITERATIONS)
    p.add_argument("--tau", type=float, default=config.TAU)
    p.add_argument("--delta-scale", type=float, default=config.DELTA_SCALE)
    p.add_argument("--runtime-model", default="fit", help="runtime model JSON, or 'fit'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--ablation", default=None, help="also write a component ablation CSV here")
    p.add_argument("--densify-steps", type=int, default=2, help="simulated densification steps in the ablation")
    selection_flags(p)
    return parser


COMMANDS = {
    "gen-scene": LobeCLI.gen_scene,
    "partition": LobeCLI.partition,
    "assign": LobeCLI.assign,
    "crop": LobeCLI.crop,
    "densify-sim": LobeCLI.densify_sim,
    "merge": LobeCLI.merge,
    "pipeline": LobeCLI.pipeline,
    "report": LobeCLI.report,
    "compare": LobeCLI.compare,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("--threads must be a positive integer")
            return EXIT_ERROR
        config.THREADS = args.threads
    cli = LobeCLI(verbose=args.verbose)
    try:
        return COMMANDS[args.command](cli, args)
    except MergeIntegrityError as e:
        print(f"Integrity check failed: {e}")
        return EXIT_INTEGRITY
    except Exception as e:
        if cli.verbose:
            import traceback
            traceback.print_exc()
        else:
            print(f"Failed to run {args.command}: {e}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
