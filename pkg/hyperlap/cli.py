"""
Command-line interface for hyperlap.
"""

import argparse
import logging
import math
import sys
import time
import warnings
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np
from colorama import Fore, Style
from tqdm import tqdm

from hyperlap.config import Config
from hyperlap.control import cost_J, optimize, sweep_to_original
from hyperlap.dynamics import constraint_violation, energy_history, solve_constrained, solve_free, solve_penalized
from hyperlap.energy import EnergyParams, grad_phi_pq, phi_p, phi_pq, subdiff_face
from hyperlap.errors import BadInput, HyperlapError, InvalidSweep, InvariantViolated
from hyperlap.hypergraph import diameter, is_connected, load_hypergraph, nu_E, to_dict
from hyperlap.problem_io import load_problem, load_vector, parse_q
from hyperlap.reporters import Reporter, dumps_json
from hyperlap.spectral import spectral_report
from hyperlap.utils import calculate_sha256
from hyperlap.verify import FAIL, PASS, run_suite

logger = logging.getLogger(__name__)


class TqdmLoggingHandler(logging.StreamHandler):
    def emit(self, record):
        try:
            msg = self.format(record)
            tqdm.write(msg, file=sys.stderr)  # respeta la barra de progreso
            self.flush()
        except Exception:
            self.handleError(record)


def format_duration(seconds: float) -> str:
    if seconds < 10:
        return f"{seconds:.1f}s"
    total = int(round(seconds))
    m, s = divmod(total, 60)
    h, m = divmod(m, 60)
    if h > 0:
        return f"{h}h {m}m {s}s"
    if m > 0:
        return f"{m}m {s}s"
    return f"{s}s"


@contextmanager
def timed_section(logger, title: str, sep: str = "-"):
    line = sep * 80
    logger.info(line)
    logger.info(title)
    logger.info(line)
    start = time.perf_counter()
    try:
        yield
    finally:
        elapsed = time.perf_counter() - start
        logger.info(f"FIN: {title}  |  Tiempo: {format_duration(elapsed)}")


def setup_logging(log_dir: Optional[Path], verbose: bool = False) -> None:
    """File log under ``log_dir`` (if given) plus a tqdm-safe console handler on stderr."""
    root_logger = logging.getLogger()
    for handler in list(root_logger.handlers):
        handler.close()
        root_logger.removeHandler(handler)
    root_logger.setLevel(logging.DEBUG)

    if log_dir is not None:
        log_dir.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_dir / "run.log", encoding="utf-8")
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s"))
        root_logger.addHandler(file_handler)

    console_handler = TqdmLoggingHandler(sys.stderr)
    console_handler.setLevel(logging.INFO if verbose else logging.WARNING)
    console_handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    root_logger.addHandler(console_handler)

    # numpy / scipy warnings al log
    logging.captureWarnings(True)
    warnings.simplefilter("default")

    if log_dir is not None:
        logger.info(f"Logging initialized. Log file: {log_dir / 'run.log'}")


def log_config_pretty(config: Config) -> None:
    logger.info("-" * 80)
    logger.info("CONFIGURACIÓN")
    logger.info("-" * 80)
    for line in repr(config).splitlines():
        logger.info(line)
    logger.info("-" * 80)


# -----------------------------
# Argument parsing
# -----------------------------
def _q_arg(value: str) -> float:
    try:
        return parse_q(value)
    except BadInput as e:
        raise argparse.ArgumentTypeError(str(e))


def _common(parser: argparse.ArgumentParser, outputs: bool = True) -> None:
    parser.add_argument("--config", type=str, help="Path to YAML configuration file")
    if outputs:
        parser.add_argument("--out-dir", type=str, help="Output directory (default: config out_dir)")
    parser.add_argument("--seed", type=int, help="Seed for every randomized choice")
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable verbose logging")


def _problem_overrides(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--p", type=float, help="Override p")
    parser.add_argument("--q", type=_q_arg, help="Override q (number or 'inf')")
    parser.add_argument("--lambda", dest="lam", type=float, help="Override lambda")
    parser.add_argument("--T", type=float, help="Override the horizon T")
    parser.add_argument("--steps", type=int, help="Override the number of time steps")
    parser.add_argument("--M", type=float, help="Override the control budget M")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hyperlap",
        description="Hypergraph p-Laplacian: energies, evolution equations, optimal control and spectral quantities",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python -m hyperlap validate G.json
  python -m hyperlap energy G.json --p 4 --q 8 --x "[1, 0, 0]"
  python -m hyperlap simulate problem.json --scheme constrained --out-dir out
  python -m hyperlap control problem.json --config config.yaml
  python -m hyperlap sweep problem.json --q-list 4 8 16 --lambda-list 1e-2 1e-3 1e-4
  python -m hyperlap spectral G.json --p 2 --q 8 --lambda 0.1
  python -m hyperlap verify G.json --p 4 --q 4 --seed 7
        """,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="Validate a hypergraph file")
    p.add_argument("graph", help="Hypergraph JSON")
    _common(p, outputs=False)

    p = sub.add_parser("energy", help="Evaluate energies and (sub)gradients at a vector")
    p.add_argument("graph", help="Hypergraph JSON")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--q", type=_q_arg, default=math.inf)
    p.add_argument("--x", required=True, help="Vector as inline JSON list or path to a JSON file")
    _common(p, outputs=False)

    p = sub.add_parser("simulate", help="Integrate the evolution equation of a problem")
    p.add_argument("problem", help="Problem JSON")
    p.add_argument("--scheme", choices=["penalized", "constrained", "free"], default="penalized")
    _problem_overrides(p)
    _common(p)

    p = sub.add_parser("control", help="Optimal control by projected gradient")
    p.add_argument("problem", help="Problem JSON (with x_target, z_target, M)")
    _problem_overrides(p)
    p.add_argument("--tol", type=float, help="Optimizer stopping tolerance")
    _common(p)

    p = sub.add_parser("sweep", help="Optimal controls along (q, lambda) towards the original problem")
    p.add_argument("problem", help="Problem JSON (with x_target, z_target, M)")
    p.add_argument("--q-list", type=_q_arg, nargs="+", required=True)
    p.add_argument("--lambda-list", type=float, nargs="+", required=True)
    _problem_overrides(p)
    p.add_argument("--tol", type=float, help="Optimizer stopping tolerance")
    _common(p)

    p = sub.add_parser("spectral", help="Poincare constants, eigenvalues and resolvent gaps")
    p.add_argument("graph", help="Hypergraph JSON")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--q", type=_q_arg, default=math.inf)
    p.add_argument("--lambda", dest="lam", type=float, default=0.1)
    p.add_argument("--restarts", type=int, help="Eigenvalue restarts")
    _common(p)

    p = sub.add_parser("verify", help="Run the invariant suite on a hypergraph")
    p.add_argument("graph", help="Hypergraph JSON")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--q", type=_q_arg, default=math.inf)
    p.add_argument("--samples", type=int, help="Random samples per check")
    _common(p)

    return parser


# -----------------------------
# Commands
# -----------------------------
def _overrides(args) -> Dict[str, object]:
    return {
        "p": getattr(args, "p", None),
        "q": getattr(args, "q", None),
        "lambda": getattr(args, "lam", None),
        "T": getattr(args, "T", None),
        "steps": getattr(args, "steps", None),
        "M": getattr(args, "M", None),
    }


def _q_label(q: float) -> str:
    return "inf" if math.isinf(q) else f"{q:g}"


def cmd_validate(args, config: Config) -> int:
    graph = load_hypergraph(args.graph)
    connected = is_connected(graph)
    info = {
        "graph": to_dict(graph),
        "N": graph.N,
        "num_edges": graph.num_edges,
        "connected": connected,
        "diameter": diameter(graph) if connected else None,
        "nu_E": nu_E(graph),
    }
    sys.stdout.write(dumps_json(info))
    return 0


def cmd_energy(args, config: Config) -> int:
    graph = load_hypergraph(args.graph)
    params = EnergyParams(args.p, args.q)
    x = load_vector(args.x)
    out = {
        "p": params.p,
        "q": _q_label(params.q),
        "phi_p": phi_p(graph, params, x),
        "phi_pq": phi_pq(graph, params, x),
        "subgradient": subdiff_face(graph, params, x).eta,
    }
    if params.smooth and params.p > 1 and params.q > 1:
        out["grad_phi_pq"] = grad_phi_pq(graph, params, x)
    sys.stdout.write(dumps_json(out))
    return 0


def cmd_simulate(args, config: Config) -> int:
    out_dir = Path(config.out_dir)
    with timed_section(logger, "STEP 1/3 - Carga del problema"):
        problem = load_problem(args.problem, _overrides(args))
    graph, params = problem.graph, problem.params

    with timed_section(logger, f"STEP 2/3 - Integración ({args.scheme})"):
        if args.scheme == "penalized":
            problem.require_finite_q("the penalized scheme")
            traj = solve_penalized(graph, params, problem.lam, problem.a, problem.h, problem.x0, problem.grid)
        elif args.scheme == "constrained":
            traj = solve_constrained(graph, params.p, problem.a, problem.h, problem.x0, problem.grid, config.prox_options())
        else:
            traj = solve_free(graph, params, problem.x0, problem.grid, config.prox_options())

    with timed_section(logger, "STEP 3/3 - Generación de reportes"):
        reporter = Reporter(str(out_dir))
        reporter.write_trajectory_csv("trajectory.csv", traj.times, traj.states)
        energies = energy_history(traj, graph, params)
        report = {
            "scheme": args.scheme,
            "input_sha256": calculate_sha256(args.problem),
            "p": params.p,
            "q": _q_label(params.q),
            "lambda": problem.lam,
            "T": problem.grid.T,
            "steps": problem.grid.K,
            "final_state": traj.final,
            "energy_initial": float(energies[0]),
            "energy_final": float(energies[-1]),
            "mean_drift": float(abs(traj.final.mean() - traj.states[0].mean())),
        }
        if args.scheme != "free":
            report["constraint_violation"] = constraint_violation(traj, problem.a)
        reporter.write_json("simulate.json", report)
        reporter.write_summary(
            "HYPERLAP SIMULATE SUMMARY",
            {"PROBLEM": {"file": args.problem, "scheme": args.scheme, "N": graph.N, "K": problem.grid.K},
             "RESULTS": {k: report[k] for k in ("energy_initial", "energy_final", "mean_drift")}},
        )
    return 0


def _result_dict(result, problem_cp) -> Dict[str, object]:
    return {
        "cost_Jql": result.cost,
        "cost_J": cost_J(problem_cp, result.control, result.trajectory),
        "cost_history": result.cost_history,
        "residual": result.residual,
        "budget": result.budget,
        "budget_usage": result.budget_usage,
        "gradient_norm": result.gradient_norm,
        "iterations": result.iterations,
        "converged": result.converged,
        "certificate_checked": result.certificate_checked,
        "free_adjoint_sup": result.free_adjoint_sup,
        "lambda_adjoint_sup": result.lambda_adjoint_sup,
    }


def _write_run(reporter: Reporter, result, times) -> None:
    reporter.write_trajectory_csv("control.csv", times, result.control, prefix="a")
    reporter.write_trajectory_csv("trajectory.csv", times, result.trajectory.states)
    reporter.write_trajectory_csv("adjoint.csv", times, result.adjoint.values, prefix="gamma")


def cmd_control(args, config: Config) -> int:
    out_dir = Path(config.out_dir)
    with timed_section(logger, "STEP 1/3 - Carga del problema"):
        problem = load_problem(args.problem, _overrides(args))
        problem.require_finite_q("optimal control")
        cp = problem.control_problem()
        opts = problem.optimizer_options(config.optimizer_options())
        if args.tol is not None:
            opts = replace(opts, tol=args.tol)

    with timed_section(logger, "STEP 2/3 - Optimización"):
        result = optimize(cp, problem.a, opts)

    with timed_section(logger, "STEP 3/3 - Generación de reportes"):
        reporter = Reporter(str(out_dir))
        _write_run(reporter, result, problem.grid.nodes)
        report = _result_dict(result, cp)
        report["input_sha256"] = calculate_sha256(args.problem)
        reporter.write_json("result.json", report)
        reporter.write_summary(
            "HYPERLAP CONTROL SUMMARY",
            {"PROBLEM": {"file": args.problem, "N": cp.graph.N, "K": cp.grid.K, "M": cp.M},
             "RESULTS": {k: report[k] for k in ("cost_Jql", "residual", "budget_usage", "iterations", "converged")}},
        )
    return 0


def cmd_sweep(args, config: Config) -> int:
    out_dir = Path(config.out_dir)
    if len(args.q_list) != len(args.lambda_list):
        raise InvalidSweep(f"--q-list has {len(args.q_list)} values but --lambda-list has {len(args.lambda_list)}")

    with timed_section(logger, "STEP 1/3 - Carga del problema"):
        problem = load_problem(args.problem, _overrides(args))
        cp = problem.control_problem()
        opts = problem.optimizer_options(config.optimizer_options())
        if args.tol is not None:
            opts = replace(opts, tol=args.tol)

    with timed_section(logger, "STEP 2/3 - Barrido (q, lambda)"):
        stages = list(zip(args.q_list, args.lambda_list))
        report = sweep_to_original(cp, stages, problem.a, opts, config.prox_options(), progress=args.verbose)

    with timed_section(logger, "STEP 3/3 - Generación de reportes"):
        reporter = Reporter(str(out_dir))
        summary_rows: List[Dict[str, object]] = []
        stage_rows: Dict[str, List[Dict[str, object]]] = {}
        for stage in report.stages:
            name = f"q{_q_label(stage.q)}_lambda{stage.lam:g}"
            stage_reporter = Reporter(str(out_dir / name))
            _write_run(stage_reporter, stage.result, problem.grid.nodes)
            stage_cp = cp.with_params(q=stage.q, lam=stage.lam)
            stage_reporter.write_json("result.json", {**_result_dict(stage.result, stage_cp), "cost_original": stage.cost_original})
            row = {
                "stage": name,
                "q": stage.q,
                "lambda": stage.lam,
                "cost_Jql": stage.result.cost,
                "cost_original": stage.cost_original,
                "distance_to_previous": stage.distance_to_previous,
                "residual": stage.result.residual,
                "budget_usage": stage.result.budget_usage,
                "certificate_checked": stage.result.certificate_checked,
                "iterations": stage.result.iterations,
                "free_adjoint_sup": stage.result.free_adjoint_sup,
                "lambda_adjoint_sup": stage.result.lambda_adjoint_sup,
            }
            summary_rows.append(row)
            stage_rows[name] = [
                {"t": float(t), "control_norm": float(np.linalg.norm(a)), "state_norm": float(np.linalg.norm(x))}
                for t, a, x in zip(problem.grid.nodes, stage.result.control, stage.result.trajectory.states)
            ]

        reporter.write_json(
            "summary.json",
            {
                "input_sha256": calculate_sha256(args.problem),
                "stages": summary_rows,
                "distances": report.distances,
                "residuals": report.residuals,
                "original_costs": report.original_costs,
            },
        )
        if config.reports_xlsx:
            reporter.write_sweep_xlsx(summary_rows, stage_rows)
    return 0


def cmd_spectral(args, config: Config) -> int:
    graph = load_hypergraph(args.graph)
    with timed_section(logger, "STEP 1/2 - Cálculo espectral"):
        report = spectral_report(graph, args.p, args.q, args.lam, samples=8, eigen_opts=config.eigen_options())
    with timed_section(logger, "STEP 2/2 - Generación de reportes"):
        data = report.to_dict()
        data["input_sha256"] = calculate_sha256(args.graph)
        Reporter(config.out_dir).write_json("spectral.json", data)
    return 0


def _print_table(results) -> None:
    color = sys.stdout.isatty()
    for r in results:
        tag = r.status
        if color:
            tint = Fore.GREEN if r.status == PASS else (Fore.RED if r.status == FAIL else Fore.YELLOW)
            tag = f"{tint}{r.status}{Style.RESET_ALL}"
        measured = "" if r.measured is None else f"{r.measured:.3e}"
        print(f"{tag:<4}  {r.name:<48} {measured:>12}  {r.detail}")


def cmd_verify(args, config: Config) -> int:
    graph = load_hypergraph(args.graph)
    params = EnergyParams(args.p, args.q)
    with timed_section(logger, "STEP 1/2 - Suite de invariantes"):
        results = run_suite(graph, params, seed=config.seed, samples=config.verify_samples, progress=args.verbose)
    with timed_section(logger, "STEP 2/2 - Generación de reportes"):
        reporter = Reporter(config.out_dir)
        reporter.write_json(
            "verify.json",
            {
                "input_sha256": calculate_sha256(args.graph),
                "p": params.p,
                "q": _q_label(params.q),
                "seed": config.seed,
                "samples": config.verify_samples,
                "checks": [r.to_dict() for r in results],
            },
        )
        reporter.write_summary(
            "HYPERLAP VERIFY SUMMARY",
            {"CHECKS": {r.name: r.status for r in results}},
        )
    _print_table(results)
    failed = [r.name for r in results if r.status == FAIL]
    if failed:
        raise InvariantViolated(f"{len(failed)} check(s) failed: {', '.join(failed)}")
    return 0


COMMANDS: Dict[str, Callable[[argparse.Namespace, Config], int]] = {
    "validate": cmd_validate,
    "energy": cmd_energy,
    "simulate": cmd_simulate,
    "control": cmd_control,
    "sweep": cmd_sweep,
    "spectral": cmd_spectral,
    "verify": cmd_verify,
}

WRITES_OUTPUTS = {"simulate", "control", "sweep", "spectral", "verify"}


def _single_line(text: str) -> str:
    return " ".join(str(text).split())


def run(argv: Optional[List[str]] = None) -> int:
    """Entry point returning the exit code: 0 ok, 1 domain error, 2 usage error."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    try:
        config = Config()
        if args.config:
            config.load_from_file(args.config)
        config.merge_args(args)
        config.validate()
    except (OSError, TypeError, ValueError) as e:
        print(f"cli/BadInput: {_single_line(e)}", file=sys.stderr)
        return 1

    log_dir = Path(config.out_dir) / "LOGS" if args.command in WRITES_OUTPUTS else None
    setup_logging(log_dir, args.verbose)
    log_config_pretty(config)

    start_total = time.perf_counter()
    try:
        code = COMMANDS[args.command](args, config)
    except HyperlapError as e:
        logger.debug(f"{e.tag}: {e}", exc_info=True)
        print(f"{e.tag}: {_single_line(e)}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"cli/BadInput: {_single_line(e)}", file=sys.stderr)
        return 1
    logger.info(f"Tiempo total: {format_duration(time.perf_counter() - start_total)}")
    return code


def main():
    """Main entry point for the CLI."""
    sys.exit(run())


if __name__ == "__main__":
    main()
