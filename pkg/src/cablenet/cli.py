"""Command-line interface.

Subcommands::

    cablenet solve          --scenario F --out R.json
    cablenet control        --scenario F --trace T.csv --out R.json
    cablenet sparse-control --scenario F --gamma G --trace T.csv --out R.json
    cablenet gen-grid       --nx A --ny B --spacing S --sag H --out F
    cablenet batch          --scenario-dir D --out-dir O --mode control --jobs N
    cablenet report         --result R.json --scenario F --plot P.svg --hist H.svg

Exit codes: 0 success, 2 usage error, 3 validation error, 4 non-convergence
(a partial result with ``"converged": false`` is still written).
"""

import argparse
import json
import sys
import warnings

import numpy as np

from . import io as cnio
from .control import ControlRunError, run_control
from .equilibrium import ConvergenceError, solve_equilibrium
from .model import RestLengthError
from .scenario import (
    build_grid_net,
    compute_metrics,
    initial_configuration,
    make_exact_recovery_scenario,
)
from .sparse import cardinality, run_sparse_control

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_NONCONVERGED = 4


def _add_common(p):
    p.add_argument("--seed", type=int, default=None,
                   help="override the scenario seed")
    p.add_argument("--tol-force", type=float, default=None,
                   help="override the equilibrium force tolerance [N]")
    p.add_argument("--max-iter", type=int, default=None,
                   help="override the iteration cap of the command's solver")
    p.add_argument("--quiet", action="store_true", help="suppress progress output")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cablenet",
        description="Equilibrium and form control of pre-stressed cable nets.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve the equilibrium at the scenario's u0")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True, help="result JSON path")
    _add_common(p)

    p = sub.add_parser("control", help="run the dense form controller")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True, help="result JSON path")
    p.add_argument("--trace", default=None, help="iteration trace CSV path")
    p.add_argument("--trace-json", default=None, help="iteration trace JSON path")
    _add_common(p)

    p = sub.add_parser("sparse-control", help="run the sparse (reweighted l1) controller")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True, help="result JSON path")
    p.add_argument("--gamma", type=float, default=None,
                   help="override the scenario's l1 weight")
    p.add_argument("--trace", default=None,
                   help="trace CSV path (final reweight pass)")
    p.add_argument("--trace-json", default=None)
    _add_common(p)

    p = sub.add_parser("gen-grid", help="generate a saddle-grid scenario file")
    p.add_argument("--nx", type=int, required=True)
    p.add_argument("--ny", type=int, required=True)
    p.add_argument("--spacing", type=float, default=0.25, help="grid pitch [m]")
    p.add_argument("--sag", type=float, default=0.1,
                   help="vertical frame offset inducing double curvature [m]")
    p.add_argument("--out", required=True, help="scenario JSON path")
    p.add_argument("--ea", type=float, default=5000.0, help="axial stiffness [N]")
    p.add_argument("--prestrain", type=float, default=0.01)
    p.add_argument("--support", type=int, default=7,
                   help="number of actuated edges in the generated target "
                        "(0 = dense random target)")
    p.add_argument("--magnitude", type=float, default=None,
                   help="largest rest-length change of the target [m]")
    _add_common(p)

    p = sub.add_parser("batch",
                       help="run one mode over every scenario in a directory")
    p.add_argument("--scenario-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--mode", choices=("solve", "control", "sparse-control"),
                   default="control")
    p.add_argument("--jobs", type=int, default=1,
                   help="number of scenarios processed concurrently")
    _add_common(p)

    p = sub.add_parser("report", help="metrics table and report figures for a result")
    p.add_argument("--result", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--plot", default=None, help="overview figure path (SVG)")
    p.add_argument("--hist", default=None, help="error histogram path (SVG)")
    p.add_argument("--json", action="store_true", dest="as_json",
                   help="print metrics as JSON instead of a table")
    p.add_argument("--scale", type=float, default=5.0,
                   help="displacement exaggeration in the overlay")
    _add_common(p)
    return parser


def _load_scenario(args):
    scenario = cnio.parse_scenario(args.scenario)
    if args.seed is not None:
        scenario.seed = args.seed
    if args.tol_force is not None:
        scenario.equilibrium.tol_force = args.tol_force
    return scenario


def _say(args, text):
    if not args.quiet:
        print(text)


def cmd_solve(args):
    scenario = _load_scenario(args)
    if args.max_iter is not None:
        scenario.equilibrium.max_iters = args.max_iter
    try:
        res = solve_equilibrium(scenario.net, scenario.u0, scenario.r_des,
                                scenario.equilibrium)
        converged = True
    except ConvergenceError as exc:
        res = exc.best
        converged = False
    doc = {
        "kind": "equilibrium",
        "converged": converged,
        "u": scenario.u0.tolist(),
        "r_f": res.cfg.tolist(),
        "energy": res.energy,
        "residual_norm": res.residual_norm,
        "iterations": res.iterations,
        "slack_edges": np.asarray(res.slack_edges).tolist(),
    }
    cnio.write_result(doc, args.out)
    _say(args, f"equilibrium residual {res.residual_norm:.3e} N "
               f"in {res.iterations} iterations -> {args.out}")
    return EXIT_OK if converged else EXIT_NONCONVERGED


def _control_result_doc(kind, u, cfg, cost, trace, scenario, extra=None):
    doc = {
        "kind": kind,
        "converged": bool(trace.converged),
        "u": np.asarray(u).tolist(),
        "r_f": np.asarray(cfg).tolist(),
        "cost": float(cost),
        "kkt_measure": trace.rows[-1].kkt_measure if trace.rows else None,
        "residual_norm": trace.rows[-1].residual_norm if trace.rows else None,
        "iterations": max(len(trace.rows) - 1, 0),
        "cardinality": cardinality(u, scenario.sparse.zero_threshold),
        "message": trace.message,
    }
    if extra:
        doc.update(extra)
    return doc


def _write_traces(args, trace):
    if getattr(args, "trace", None):
        cnio.write_trace_csv(trace, args.trace)
    if getattr(args, "trace_json", None):
        cnio.write_trace_json(trace, args.trace_json)


def cmd_control(args):
    scenario = _load_scenario(args)
    if args.max_iter is not None:
        scenario.control.max_outer = args.max_iter
    try:
        iterate, trace = run_control(scenario.net, scenario.u0,
                                     scenario.control, scenario.equilibrium)
    except ControlRunError as exc:
        _say(args, f"control run aborted: {exc}")
        if exc.iterate is not None:
            doc = _control_result_doc("control", exc.iterate.u,
                                      exc.iterate.cfg, exc.iterate.cost,
                                      exc.trace, scenario)
            cnio.write_result(doc, args.out)
            _write_traces(args, exc.trace)
        return EXIT_NONCONVERGED
    doc = _control_result_doc("control", iterate.u, iterate.cfg, iterate.cost,
                              trace, scenario)
    cnio.write_result(doc, args.out)
    _write_traces(args, trace)
    _say(args, f"final cost {iterate.cost:.6e} after "
               f"{doc['iterations']} iterations (converged={trace.converged}) "
               f"-> {args.out}")
    return EXIT_OK if trace.converged else EXIT_NONCONVERGED


def cmd_sparse_control(args):
    scenario = _load_scenario(args)
    if args.max_iter is not None:
        scenario.control.max_outer = args.max_iter
    if args.gamma is not None:
        scenario.sparse.gamma = args.gamma
    try:
        result = run_sparse_control(scenario.net, scenario.u0,
                                    scenario.control, scenario.sparse,
                                    scenario.equilibrium)
    except ControlRunError as exc:
        _say(args, f"sparse control run aborted: {exc}")
        if exc.iterate is not None:
            doc = _control_result_doc("sparse-control", exc.iterate.u,
                                      exc.iterate.cfg, exc.iterate.cost,
                                      exc.trace, scenario,
                                      extra={"converged": False,
                                             "gamma": scenario.sparse.gamma})
            cnio.write_result(doc, args.out)
            _write_traces(args, exc.trace)
        return EXIT_NONCONVERGED
    trace = result.traces[-1]
    doc = _control_result_doc(
        "sparse-control", result.u, result.cfg, result.cost, trace, scenario,
        extra={"converged": result.converged,
               "cost_l1": result.cost_l1,
               "gamma": scenario.sparse.gamma,
               "reweights": result.reweights,
               "cardinality": result.cardinality})
    cnio.write_result(doc, args.out)
    _write_traces(args, trace)
    _say(args, f"sparse cost {result.cost:.6e}, cardinality "
               f"{result.cardinality} after {result.reweights} reweights "
               f"-> {args.out}")
    return EXIT_OK if result.converged else EXIT_NONCONVERGED


def cmd_gen_grid(args):
    from .model import elongations
    from .scenario import grid_layout

    seed = args.seed if args.seed is not None else 0
    net = build_grid_net(args.nx, args.ny, args.spacing, args.sag, args.ea,
                         args.prestrain)
    rng = np.random.default_rng(seed)
    mag = args.magnitude if args.magnitude is not None else 0.02 * args.spacing
    if args.support == 0:
        support = np.arange(net.m_boundary)
    else:
        support = rng.choice(net.m_boundary, size=min(args.support,
                                                      net.m_boundary),
                             replace=False)
    magnitudes = rng.uniform(0.25 * mag, mag, size=support.size)
    magnitudes *= rng.choice([-1.0, 1.0], size=support.size)
    warm = grid_layout(args.nx, args.ny, args.spacing)
    # shrink the actuation until the target stays fully tensioned, so the
    # scenario respects the constant-tensioned-set assumption end to end
    for _ in range(12):
        scenario = make_exact_recovery_scenario(net, support, magnitudes,
                                                seed=seed, warm_start=warm)
        if elongations(scenario.r_des, net, scenario.u_true).min() > 0:
            break
        magnitudes = 0.7 * magnitudes
    else:
        print("error: could not generate a fully tensioned target; lower "
              "--magnitude or raise --prestrain", file=sys.stderr)
        return EXIT_VALIDATION
    if args.tol_force is not None:
        scenario.equilibrium.tol_force = args.tol_force
    cnio.write_scenario(scenario, args.out)
    _say(args, f"wrote {args.nx}x{args.ny} grid scenario "
               f"({net.n_free} free nodes, {net.m_boundary} boundary edges) "
               f"-> {args.out}")
    return EXIT_OK


def cmd_batch(args):
    import concurrent.futures
    from pathlib import Path

    scenarios = sorted(Path(args.scenario_dir).glob("*.json"))
    if not scenarios:
        print(f"error: no scenario files in {args.scenario_dir}",
              file=sys.stderr)
        return EXIT_VALIDATION
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def one(path):
        argv = [args.mode, "--scenario", str(path),
                "--out", str(out_dir / f"{path.stem}.result.json"), "--quiet"]
        if args.mode in ("control", "sparse-control"):
            argv += ["--trace", str(out_dir / f"{path.stem}.trace.csv")]
        if args.tol_force is not None:
            argv += ["--tol-force", str(args.tol_force)]
        if args.max_iter is not None:
            argv += ["--max-iter", str(args.max_iter)]
        if args.seed is not None:
            argv += ["--seed", str(args.seed)]
        return path.name, main(argv)

    worst = EXIT_OK
    with concurrent.futures.ThreadPoolExecutor(max_workers=max(args.jobs, 1)) \
            as pool:
        for name, code in pool.map(one, scenarios):
            worst = max(worst, code)
            _say(args, f"{name}: exit {code}")
    return worst


def _metrics_rows(metrics, result):
    rows = [
        ("weighted_err [m^2]", metrics.weighted_err),
        ("l2_err [m^2]", metrics.l2_err),
        ("rms [m]", metrics.rms),
        ("max_node_err [m]", float(metrics.per_node_err.max())),
        ("reduction_pct [%]", metrics.reduction_pct),
    ]
    if "cost" in result:
        rows.append(("cost [m^2]", result["cost"]))
    if "cardinality" in result:
        rows.append(("cardinality", result["cardinality"]))
    return rows


def cmd_report(args):
    scenario = _load_scenario(args)
    result = cnio.read_result(args.result)
    r_controlled = np.asarray(result["r_f"], dtype=float)
    if r_controlled.shape != (scenario.net.n_free, 3):
        raise cnio.ScenarioFormatError(
            "result configuration does not match the scenario's net")
    r_initial = initial_configuration(scenario)
    metrics = compute_metrics(r_controlled, scenario, r_initial=r_initial)
    rows = _metrics_rows(metrics, result)
    if args.as_json:
        print(json.dumps({name: value for name, value in rows}, indent=1))
    else:
        width = max(len(name) for name, _ in rows)
        for name, value in rows:
            if isinstance(value, float):
                print(f"{name:<{width}}  {value:.6e}")
            else:
                print(f"{name:<{width}}  {value}")
    from .plots import emit_plots
    written = emit_plots(scenario, r_initial, r_controlled,
                         np.asarray(result["u"], dtype=float),
                         plot_path=args.plot, hist_path=args.hist,
                         scale=args.scale,
                         zero_threshold=scenario.sparse.zero_threshold)
    for path in written:
        _say(args, f"wrote {path}")
    return EXIT_OK


_COMMANDS = {
    "solve": cmd_solve,
    "control": cmd_control,
    "sparse-control": cmd_sparse_control,
    "gen-grid": cmd_gen_grid,
    "batch": cmd_batch,
    "report": cmd_report,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    try:
        with warnings.catch_warnings():
            if args.quiet:
                warnings.simplefilter("ignore")
            return _COMMANDS[args.command](args)
    except (cnio.ScenarioFormatError, RestLengthError, ValueError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
