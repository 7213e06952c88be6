"""Command-line interface: validate, run, diagnose, bench-gravity, gradcheck.

Exit codes: 0 success, 1 validation failure (rejected material/mesh or a
failed check), 2 runtime error (bad files, bad arguments, infeasible input).
"""

import argparse
import os
import sys
import time

import numpy as np

from . import _kernels
from .admissible import A1Spec
from .config import ConfigError, load_config
from .diagnostics import format_report, full_report
from .gravity import (MassCloud, build_octree, gravity_gradient_direct,
                      gravity_gradient_tree, potential_energy_direct,
                      potential_energy_tree)
from .material import OgdenMaterial, check_w4, validate_exponents
from .meshio import (MeshFormatError, load_solution_csv, save_density_csv,
                     save_history_csv, save_solution_csv, save_stress_csv)
from .minimize import (SolverConfig, default_init, gradient_check, minimize,
                       total_energy)
from .refbody import DeformationState, build_box_mesh, validate_reference


def _cmd_validate(args):
    cfg = load_config(args.config)
    failed = False

    mesh_report = validate_reference(cfg.body)
    print("mesh: %d nodes, %d elements, total mass %.17g"
          % (mesh_report.n_nodes, mesh_report.n_elements,
             mesh_report.total_mass))
    if mesh_report.passed:
        print("mesh checks: PASS (rho in [%g, %g], min volume %g)"
              % (mesh_report.rho_min, mesh_report.rho_max,
                 mesh_report.min_volume))
    else:
        failed = True
        print("mesh checks: FAIL")
        for issue in mesh_report.issues:
            print("  - %s" % issue)

    space = cfg.spec.space
    report = validate_exponents(cfg.material, space)
    print("exponents (%s): p = %g, q = %g, s = %g, r = %g"
          % (space, report.p, report.q, report.s, report.r))
    for name, ok, detail in report.conditions:
        print("  %-18s %s  (%s)" % (name, "ok" if ok else "FAILED", detail))
    if report.accepted:
        print("material admissibility: ACCEPT")
    else:
        failed = True
        print("material admissibility: REJECT")
        for failure in report.failures:
            print("  - %s" % failure)

    w4 = check_w4(cfg.material, sample_count=50, seed=cfg.seed)
    print("stress-control sample: empirical K = %.6g, barrier slope c2 = %.6g,"
          " min sampled w = %.6g" % (w4.empirical_K, w4.empirical_c2, w4.min_w))
    return 1 if failed else 0


def _cmd_run(args):
    cfg = load_config(args.config)
    os.makedirs(args.out, exist_ok=True)

    solution = minimize(cfg.body, cfg.material, cfg.spec, cfg.solver)
    report = full_report(cfg.body, cfg.material, solution.state, cfg.spec,
                         cfg.solver, voxel_resolution=cfg.voxel_resolution)

    save_solution_csv(os.path.join(args.out, "solution.csv"),
                      solution.state.positions)
    save_history_csv(os.path.join(args.out, "history.csv"), solution.history)
    with open(os.path.join(args.out, "report.txt"), "w") as fh:
        fh.write(format_report(report, solution=solution, config=cfg.solver))
    with open(os.path.join(args.out, "config.resolved"), "w") as fh:
        fh.write(cfg.resolved_text())

    print("termination=%s iterations=%d total=%.17g out=%s"
          % (solution.termination, solution.iterations,
             solution.breakdown.total, args.out))
    return 0


def _cmd_diagnose(args):
    cfg = load_config(args.config)
    positions = load_solution_csv(args.solution, n_nodes=cfg.body.n_nodes)
    state = DeformationState(positions)
    report = full_report(cfg.body, cfg.material, state, cfg.spec, cfg.solver,
                         voxel_resolution=cfg.voxel_resolution)

    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "report.txt"), "w") as fh:
        fh.write(format_report(report, config=cfg.solver))
    if report.feasible:
        save_density_csv(os.path.join(args.out, "density.csv"), report.density)
        save_stress_csv(os.path.join(args.out, "stress.csv"), report.stress)
    print("diagnostics written to %s" % args.out)
    return 0


def _uniform_ball_cloud(n, rng):
    direction = rng.standard_normal((n, 3))
    direction /= np.linalg.norm(direction, axis=1)[:, None]
    radius = rng.uniform(0.0, 1.0, n) ** (1.0 / 3.0)
    masses = rng.uniform(0.5, 1.5, n)
    return MassCloud(direction * radius[:, None], masses)


def bench_gravity_rows(ns, thetas, seed=0):
    """Benchmark rows (n, theta, energy_err, grad_err, t_direct, t_tree)."""
    rng = np.random.default_rng(seed)
    rows = []
    for n in ns:
        cloud = _uniform_ball_cloud(int(n), rng)
        t0 = time.perf_counter()
        e_direct = potential_energy_direct(cloud, 1.0)
        g_direct = gravity_gradient_direct(cloud, 1.0)
        t_direct = time.perf_counter() - t0
        g_scale = float(np.linalg.norm(g_direct))
        for theta in thetas:
            t0 = time.perf_counter()
            tree = build_octree(cloud)
            e_tree = potential_energy_tree(cloud, tree, theta, 1.0)
            g_tree = gravity_gradient_tree(cloud, tree, theta, 1.0)
            t_tree = time.perf_counter() - t0
            rows.append((
                int(n), theta,
                abs(e_tree - e_direct) / abs(e_direct),
                float(np.linalg.norm(g_tree - g_direct)) / g_scale,
                t_direct, t_tree,
            ))
    return rows


def _cmd_bench_gravity(args):
    ns = [int(v) for v in args.n.split(",")]
    thetas = [float(v) for v in args.theta.split(",")]
    if any(v < 2 for v in ns):
        raise ValueError("point counts must be >= 2")
    if any(not 0.0 < t < 1.0 for t in thetas):
        raise ValueError("theta values must lie in (0, 1)")

    if args.backend == "auto":
        rows = bench_gravity_rows(ns, thetas, args.seed)
    else:
        with _kernels.use(args.backend):
            rows = bench_gravity_rows(ns, thetas, args.seed)

    out = sys.stdout if args.out == "-" else open(args.out, "w")
    try:
        out.write("n,theta,energy_error_rel,grad_error_rel,"
                  "time_direct_s,time_tree_s\n")
        for n, theta, e_err, g_err, t_d, t_t in rows:
            out.write("%d,%.17g,%.17g,%.17g,%.17g,%.17g\n"
                      % (n, theta, e_err, g_err, t_d, t_t))
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _default_gradcheck_scenario(seed):
    body = build_box_mesh((1.0, 1.0, 1.0), (2, 2, 2), 1.0)
    material = OgdenMaterial.stress_free([(1.0, 8.0)], [(1.0, 2.0)], 9.0)
    spec = A1Spec(body.reference_weighted_com())
    config = SolverConfig(G=1.0, theta=0.0)
    rng = np.random.default_rng(seed)
    positions = body.nodes + 0.01 * rng.standard_normal(body.nodes.shape)
    return body, material, spec, config, DeformationState(positions)


def _cmd_gradcheck(args):
    if args.config is not None:
        cfg = load_config(args.config)
        body, material, spec, config = (cfg.body, cfg.material, cfg.spec,
                                        cfg.solver)
        rng = np.random.default_rng(args.seed)
        positions = (body.nodes
                     + 0.01 * body.bbox_diag
                     * rng.standard_normal(body.nodes.shape))
        state = DeformationState(positions)
    else:
        body, material, spec, config, state = _default_gradcheck_scenario(
            args.seed)

    if not np.isfinite(
            total_energy(body, material, state, spec, config).total):
        raise ValueError("perturbed state is infeasible; lower the amplitude")
    err = gradient_check(body, material, state, spec, step=args.step,
                         config=config)
    threshold = 1e-5
    status = "PASS" if err <= threshold else "FAIL"
    print("gradcheck: max relative error %.3g (threshold %.0e) %s"
          % (err, threshold, status))
    return 0 if err <= threshold else 1


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="gravelast",
        description="Equilibrium solver for static self-gravitating "
                    "nonlinear-elastic bodies.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate",
                       help="check mesh and material admissibility")
    p.add_argument("--config", required=True, help="run configuration file")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("run", help="minimize the energy and write artifacts")
    p.add_argument("--config", required=True, help="run configuration file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("diagnose",
                       help="recompute minimizer checks for a saved solution")
    p.add_argument("--config", required=True, help="run configuration file")
    p.add_argument("--solution", required=True, help="solution.csv to audit")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("bench-gravity",
                       help="compare direct and treecode gravity kernels")
    p.add_argument("--n", default="1000",
                   help="comma-separated point counts (default 1000)")
    p.add_argument("--theta", default="0.4",
                   help="comma-separated opening angles (default 0.4)")
    p.add_argument("--seed", type=int, default=0, help="cloud seed")
    p.add_argument("--backend", choices=("auto", "python", "compiled"),
                   default="auto",
                   help="kernel backend to benchmark (default: active)")
    p.add_argument("--out", default="-",
                   help="CSV output path, '-' for stdout")
    p.set_defaults(func=_cmd_bench_gravity)

    p = sub.add_parser("gradcheck",
                       help="finite-difference audit of the energy gradient")
    p.add_argument("--config", default=None,
                   help="optional run configuration (default: built-in "
                        "box scenario)")
    p.add_argument("--step", type=float, default=1e-6,
                   help="finite-difference step (default 1e-6)")
    p.add_argument("--seed", type=int, default=0,
                   help="perturbation seed (default 0)")
    p.set_defaults(func=_cmd_gradcheck)

    return parser


def main(argv=None):
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        return args.func(args)
    except (ConfigError, MeshFormatError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
