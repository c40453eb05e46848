"""Command-line front end: solve, build-basis, track, bench, export-matrices.

Heavy numeric imports happen inside main() so the --threads cap can be
exported to the BLAS runtime before anything loads it.  Exit codes:
0 success, 2 usage or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import (RunConfig, config_to_dict, default_config, load_config,
                     with_overrides)
from .errors import ConfigError, NumericsError
from .io_utils import (remove_if_exists, write_csv, write_json,
                       write_matrix_market)

log = logging.getLogger("maxwell_rb")

_THREAD_ENV_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def _apply_thread_cap(argv) -> None:
    """Export --threads to the BLAS environment before numpy is imported."""
    threads = None
    for i, arg in enumerate(argv):
        if arg == "--threads" and i + 1 < len(argv):
            threads = argv[i + 1]
        elif arg.startswith("--threads="):
            threads = arg.split("=", 1)[1]
    if threads is None:
        return
    if not threads.isdigit() or int(threads) < 1:
        return   # argparse will reject it with a usage error later
    for name in _THREAD_ENV_VARS:
        os.environ[name] = threads


def _configure_logging() -> None:
    level_name = os.environ.get("MAXWELL_RB_LOG", "info").lower()
    levels = {"quiet": logging.WARNING, "info": logging.INFO,
              "debug": logging.DEBUG}
    level = levels.get(level_name)
    if level is None:
        level = logging.INFO
    logging.basicConfig(stream=sys.stderr, level=level,
                        format="%(levelname)s %(message)s")
    if level_name not in levels:
        log.warning("unknown MAXWELL_RB_LOG value %r; using info", level_name)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maxwell-rb",
        description="Tree-cotree gauged reduced-basis solver for the "
                    "parametrized Maxwell cavity eigenvalue problem.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, gauge=True):
        p.add_argument("--config", metavar="PATH",
                       help="configuration file (flat key = value lines)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int, metavar="N",
                       help="cap BLAS/OpenMP worker threads")
        p.add_argument("--output", metavar="DIR",
                       help="override the output directory")
        if gauge:
            p.add_argument("--gauge", choices=("classical", "mixed"),
                           help="override the gauge pipeline")

    p_solve = sub.add_parser("solve", help="solve the K physical modes at one t")
    common(p_solve)
    p_solve.add_argument("--t", type=float, default=0.0,
                         help="deformation parameter in [0, 1] (default 0)")
    p_solve.add_argument("--export", action="store_true",
                         help="write matrices, modes, and results to --output")

    p_build = sub.add_parser("build-basis",
                             help="snapshots, POD, and greedy enrichment")
    common(p_build)

    p_track = sub.add_parser("track", help="track eigenvalues over t in [0, 1]")
    common(p_track)
    path = p_track.add_mutually_exclusive_group()
    path.add_argument("--reduced", dest="reduced", action="store_true",
                      default=True, help="track on the reduced system (default)")
    path.add_argument("--full", dest="reduced", action="store_false",
                      help="track on the full sparse system")

    p_bench = sub.add_parser("bench",
                             help="phase-timed comparison of both pipelines")
    common(p_bench)

    p_export = sub.add_parser("export-matrices",
                              help="write assembled endpoint systems")
    common(p_export, gauge=False)
    p_export.add_argument("--t", type=float, default=None,
                          help="also export the interpolated pair at this t")

    return parser


def _load_run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else default_config()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.output is not None:
        overrides["output"] = args.output
    if getattr(args, "gauge", None) is not None:
        overrides["gauge_mode"] = args.gauge
    if overrides:
        cfg = with_overrides(cfg, **overrides)
    return cfg


def _out_path(cfg: RunConfig, name: str) -> str:
    return os.path.join(cfg.output, name)


def cmd_solve(cfg: RunConfig, t: float, export: bool) -> int:
    import numpy as np

    from .bench import setup_problem
    from .eigen import solve_dense_gevp, solve_sparse_gevp
    from .gauge import build_cotree_system, upscale
    from .rb import _salt_from_t

    problem = setup_problem(cfg)
    pair = problem.psys.interpolate(t)
    log.info("assembled %s: N=%d free edges, |C|=%d cotree DoFs",
             pair.geometry_tag, problem.mesh0.n_free_edges,
             problem.gauge.cotree.size)

    if cfg.gauge_mode == "mixed":
        sol = solve_sparse_gevp(pair.A, pair.B, cfg.K, problem.policy,
                                salt=_salt_from_t(t))
        values = sol.values
        vectors = sol.vectors
        residuals = sol.residual_norms
    else:
        cs = build_cotree_system(pair, problem.gauge)
        dense = solve_dense_gevp(cs.A_hat, cs.B_hat)
        keep = dense.values > problem.policy.lambda_cut
        values = dense.values[keep][: cfg.K]
        vectors_hat = dense.vectors[:, keep][:, : cfg.K]
        vectors = upscale(problem.gauge, pair, vectors_hat)
        R = pair.A @ vectors - (pair.B @ vectors) * values[None, :]
        residuals = np.linalg.norm(R, axis=0)

    if values.size < cfg.K:
        raise NumericsError(
            "found only %d physical modes above the spectral cutoff, need %d"
            % (values.size, cfg.K)
        )

    print("t = %r  gauge = %s" % (t, cfg.gauge_mode))
    print("%-6s %-22s %s" % ("mode", "eigenvalue", "residual"))
    for i in range(cfg.K):
        print("%-6d %-22r %.3e" % (i + 1, float(values[i]), residuals[i]))

    if export:
        paths = [_out_path(cfg, name) for name in
                 ("A_t.mtx", "B_t.mtx", "modes.mtx", "solve.json")]
        try:
            os.makedirs(cfg.output, exist_ok=True)
            write_matrix_market(paths[0], pair.A, symmetric=True)
            write_matrix_market(paths[1], pair.B, symmetric=True)
            write_matrix_market(paths[2], np.asarray(vectors[:, : cfg.K]))
            write_json(paths[3], {
                "schema_version": 1,
                "config": config_to_dict(cfg),
                "t": t,
                "gauge_mode": cfg.gauge_mode,
                "eigenvalues": [float(v) for v in values[: cfg.K]],
                "residual_norms": [float(r) for r in residuals[: cfg.K]],
            })
        except BaseException:
            remove_if_exists(paths)
            raise
        log.info("exported matrices and modes to %s", cfg.output)
    return 0


def cmd_build_basis(cfg: RunConfig) -> int:
    from .bench import setup_problem
    from .rb import build_basis, classical_pipeline

    problem = setup_problem(cfg)
    pipeline = build_basis if cfg.gauge_mode == "mixed" else classical_pipeline
    result = pipeline(problem.psys, problem.gauge, problem.training, cfg.K,
                      cfg.N_init, cfg.tol, cfg.N_max, problem.policy)

    final_max_eta = result.log[-1]["max_eta"] if result.log else None
    paths = [_out_path(cfg, name) for name in
             ("basis.mtx", "provenance.json", "convergence_log.csv")]
    try:
        os.makedirs(cfg.output, exist_ok=True)
        write_matrix_market(paths[0], result.basis.Z)
        write_json(paths[1], {
            "schema_version": 1,
            "config": config_to_dict(cfg),
            "gauge_mode": result.basis.gauge_mode,
            "n_red": result.basis.n_red,
            "n_cotree": int(problem.gauge.cotree.size),
            "n_free_edges": int(problem.mesh0.n_free_edges),
            "final_max_eta": final_max_eta,
            "flags": list(result.basis.flags),
            "columns": list(result.basis.provenance),
        })
        write_csv(paths[2],
                  ["iteration", "t", "mode", "max_eta", "n_red"],
                  [[row["iteration"], row["t"], row["mode"], row["max_eta"],
                    row["n_red"]] for row in result.log])
    except BaseException:
        remove_if_exists(paths)
        raise

    print("gauge = %s  N_red = %d  final max eta = %r"
          % (result.basis.gauge_mode, result.basis.n_red, final_max_eta))
    print("phase seconds: projection %.3f  pod %.3f  greedy %.3f"
          % (result.phase_seconds["projection"], result.phase_seconds["pod"],
             result.phase_seconds["greedy"]))
    print("peak dense entries: %d" % result.peak_dense_entries)
    log.info("wrote %s, %s, %s", *paths)
    return 0


def cmd_track(cfg: RunConfig, reduced: bool) -> int:
    from .bench import setup_problem
    from .rb import build_basis, classical_pipeline
    from .tracking import track_full, track_reduced

    problem = setup_problem(cfg)
    if reduced:
        pipeline = (build_basis if cfg.gauge_mode == "mixed"
                    else classical_pipeline)
        built = pipeline(problem.psys, problem.gauge, problem.training, cfg.K,
                         cfg.N_init, cfg.tol, cfg.N_max, problem.policy)
        run = track_reduced(problem.psys, problem.gauge, built.basis, cfg.K,
                            threshold=cfg.threshold,
                            initial_steps=cfg.initial_steps,
                            max_depth=cfg.max_depth, matching=cfg.matching,
                            buffer=cfg.track_buffer, policy=problem.policy)
        stem = "reduced"
    else:
        run = track_full(problem.psys, cfg.K, problem.policy,
                         threshold=cfg.threshold,
                         initial_steps=cfg.initial_steps,
                         max_depth=cfg.max_depth, matching=cfg.matching,
                         buffer=cfg.track_buffer)
        stem = "full"

    header = (["t"]
              + ["lambda_%d" % (i + 1) for i in range(cfg.K)]
              + ["corr_%d" % (i + 1) for i in range(cfg.K)])
    csv_path = _out_path(cfg, "trajectory_%s.csv" % stem)
    meta_path = _out_path(cfg, "track_%s.json" % stem)
    try:
        os.makedirs(cfg.output, exist_ok=True)
        write_csv(csv_path, header, run.to_rows())
        write_json(meta_path, {
            "schema_version": 1,
            "config": config_to_dict(cfg),
            "path": stem,
            "grid_points": int(run.grid.size),
            "bisection_count": int(run.stats["bisection_count"]),
            "degenerate_steps": int(run.stats["degenerate_steps"]),
            "min_step": float(run.stats["min_step"]),
            "permutations": [[int(j) for j in perm] for perm in run.permutations],
            "timing": {"wall_seconds": float(run.stats["wall_seconds"])},
        })
    except BaseException:
        remove_if_exists([csv_path, meta_path])
        raise

    print("tracked %d modes over %d grid points (%s path); %d bisections"
          % (cfg.K, run.grid.size, stem, run.stats["bisection_count"]))
    log.info("wrote %s and %s", csv_path, meta_path)
    return 0


def cmd_bench(cfg: RunConfig) -> int:
    from .bench import run_bench, render_report_table

    report = run_bench(cfg)
    report_path = _out_path(cfg, "bench_report.json")
    sweep_path = _out_path(cfg, "error_sweep.csv")
    try:
        os.makedirs(cfg.output, exist_ok=True)
        write_json(report_path, report)
        _write_sweep_csv(sweep_path, report["error_sweep"])
    except BaseException:
        remove_if_exists([report_path, sweep_path])
        raise
    print(render_report_table(report), end="")
    log.info("wrote %s and %s", report_path, sweep_path)
    return 0 if not report["phase_errors"] else 3


def _write_sweep_csv(path: str, sweep: dict) -> None:
    sizes = sorted({n for data in sweep.values() for n in data["sizes"]})
    header = ["size"]
    for mode in ("mixed", "classical"):
        if mode in sweep:
            header += ["%s_error_av" % mode, "%s_trailing" % mode]
    rows = []
    for n in sizes:
        row = [n]
        for mode in ("mixed", "classical"):
            if mode not in sweep:
                continue
            data = sweep[mode]
            if n in data["sizes"]:
                i = data["sizes"].index(n)
                row += [data["error_av"][i], data["trailing"][i]]
            else:
                row += [None, None]
        rows.append(row)
    write_csv(path, header, rows)


def cmd_export_matrices(cfg: RunConfig, t) -> int:
    from .bench import setup_problem

    problem = setup_problem(cfg)
    names = ["A0.mtx", "B0.mtx", "A1.mtx", "B1.mtx"]
    systems = [problem.psys.endpoint0, problem.psys.endpoint1]
    paths = [_out_path(cfg, name) for name in names]
    meta_path = _out_path(cfg, "matrices.json")
    extra = []
    if t is not None:
        extra = [_out_path(cfg, "A_t.mtx"), _out_path(cfg, "B_t.mtx")]
    try:
        os.makedirs(cfg.output, exist_ok=True)
        for pair, (a_path, b_path) in zip(systems,
                                          [paths[0:2], paths[2:4]]):
            write_matrix_market(a_path, pair.A, symmetric=True)
            write_matrix_market(b_path, pair.B, symmetric=True)
        if t is not None:
            pair_t = problem.psys.interpolate(t)
            write_matrix_market(extra[0], pair_t.A, symmetric=True)
            write_matrix_market(extra[1], pair_t.B, symmetric=True)
        write_json(meta_path, {
            "schema_version": 1,
            "config": config_to_dict(cfg),
            "n_free_edges": int(problem.mesh0.n_free_edges),
            "n_cotree": int(problem.gauge.cotree.size),
            "n_interior_vertices": int(problem.mesh0.n_interior_vertices),
            "nnz_A0": int(problem.psys.endpoint0.A.nnz),
            "nnz_B0": int(problem.psys.endpoint0.B.nnz),
            "t": t,
        })
    except BaseException:
        remove_if_exists(paths + extra + [meta_path])
        raise
    log.info("wrote endpoint systems and %s", meta_path)
    print("exported %d matrix files to %s"
          % (len(paths) + len(extra), cfg.output))
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _apply_thread_cap(argv)
    _configure_logging()
    parser = _build_parser()
    args = parser.parse_args(argv)

    try:
        cfg = _load_run_config(args)
        if args.command == "solve":
            return cmd_solve(cfg, args.t, args.export)
        if args.command == "build-basis":
            return cmd_build_basis(cfg)
        if args.command == "track":
            return cmd_track(cfg, args.reduced)
        if args.command == "bench":
            return cmd_bench(cfg)
        if args.command == "export-matrices":
            return cmd_export_matrices(cfg, args.t)
        parser.error("unknown command %r" % args.command)
    except ConfigError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except NumericsError as exc:
        print("numerical failure: %s" % exc, file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
