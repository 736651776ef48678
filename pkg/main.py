"""Batch driver: mlnhardy <command> --config <path> [--output <dir>] [--threads <k>]."""
import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from analysis import (
    gaussian_profile,
    hardy_inf_estimate,
    integrability_sweep,
    mixed_hardy_p_probe,
    nonexistence_scan,
    scaling_study,
)
from config import COMMANDS, load_config
from data_io import build_source, write_report, write_solution, write_table
from errors import ConfigError, DomainError, MlnHardyError
from grid import build_mesh
from operators import assemble_operators
from schemes import (
    bounded_solution_check,
    l1_case_bounds,
    monotone_iteration,
    sola_uniqueness_check,
    solvability_probe,
    w1m_star_bounds,
)
from solver import coercivity_threshold, solve_linear
from special import exponent_table, regime
from verification import run_suite

logger = logging.getLogger("mlnhardy")

USAGE = f"usage: mlnhardy {{{','.join(COMMANDS)}}} --config <path> [--output <dir>] [--threads <k>]"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def parse_args(argv):
    parser = _Parser(prog="mlnhardy", description="Mixed local/nonlocal Hardy experiments.")
    parser.add_argument("command", help=f"one of: {', '.join(COMMANDS)}")
    parser.add_argument("--config", type=Path, default=None, help="JSON experiment description")
    parser.add_argument("--output", default=None, help="output directory (default: $MLNHARDY_OUTPUT or ./output)")
    parser.add_argument("--threads", type=int, default=None, help="worker cap (default: $MLNHARDY_THREADS or 1)")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    return parser.parse_args(argv)


def _setup_logging(verbose):
    logging.basicConfig(format="[%(levelname)s] %(name)s: %(message)s",
                        level=logging.DEBUG if verbose else logging.WARNING, force=True)
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)


def _operators(cfg, domain=None, N=None):
    mesh = build_mesh(domain or cfg.build_domain(), N or cfg.N, cfg.box_halfwidth)
    return assemble_operators(mesh, cfg.s, fractional_weight=cfg.fractional_weight,
                              threads=cfg.threads)


def run_solve(cfg, out):
    ops = _operators(cfg)
    f = build_source(cfg.f, ops.mesh)
    m2 = exponent_table(cfg.n, cfg.s, cfg.m).m_double_star if cfg.m else None
    report = solve_linear(ops, cfg.gamma, f, tol=cfg.tol, m_double_star=m2)
    write_solution(report.solution, out / "solution.csv")
    result = report.to_dict()
    result["mesh"] = ops.mesh.to_header()
    summary = f"residual={report.residual_norm:.2e} iterations={report.iterations} max={report.max_value:.6g}"
    return result, summary


def run_iterate(cfg, out):
    ops = _operators(cfg)
    f = build_source(cfg.f, ops.mesh)
    trace = monotone_iteration(ops, cfg.gamma, f, cfg.K, tol=cfg.tol,
                               regularization=cfg.regularization)
    write_table(trace.to_frame(), out / "trace.csv")
    write_solution(trace.final, out / "solution.csv")
    result = {"trace": trace.summary(), "mesh": ops.mesh.to_header()}
    # limits are compared in L^{m**} when m is given
    m2 = exponent_table(cfg.n, cfg.s, cfg.m).m_double_star if cfg.m is not None else None
    result["sola_exponent"] = m2 or 2.0
    result["sola_distance"] = sola_uniqueness_check(
        ops, cfg.gamma, f, "truncation", cfg.schedule_b, cfg.K, exponent=result["sola_exponent"],
        regularization=cfg.regularization, tol=cfg.tol,
    )
    if cfg.p is not None:
        bounds = l1_case_bounds(ops, cfg.gamma, f, cfg.K, cfg.k_levels, cfg.p, tol=cfg.tol,
                                regularization=cfg.regularization)
        write_table(bounds.tk_energies, out / "tk_energies.csv")
        write_table(bounds.grad_lp_norms.frame, out / "grad_norms.csv")
        result["l1_bounds"] = bounds.summary()
    if cfg.m is not None:
        kind = regime(cfg.n, cfg.m)
        checker = {"nonvariational": w1m_star_bounds, "bounded": bounded_solution_check}.get(kind)
        result["regime"] = kind
        if checker is not None:
            bounds = checker(ops, cfg.gamma, f, cfg.K, cfg.m, tol=cfg.tol,
                             regularization=cfg.regularization)
            write_table(bounds.frame, out / "iterate_bounds.csv")
            result["iterate_bounds"] = bounds.summary()
    summary = (f"steps={trace.steps} distance={trace.final_distance:.2e} "
               f"max_defect={trace.max_monotonicity_defect:.2e}")
    return result, summary


def run_constant(cfg, out):
    domains = [cfg.build_domain(spec) for spec in cfg.domains]
    estimate = hardy_inf_estimate(domains, cfg.s, cfg.N, cfg.box_halfwidth, threads=cfg.threads)
    write_table(estimate.frame, out / "constant.csv")
    result = estimate.summary()
    if cfg.p is not None:
        result["mixed_hardy_p"] = mixed_hardy_p_probe(_operators(cfg, domains[0]), cfg.p,
                                                      num_probes=cfg.num_probes, seed=cfg.seed)
    return result, f"lambda_min={', '.join(f'{v:.6f}' for v in estimate.values)} spread={estimate.spread:.3f}"


def run_scaling(cfg, out):
    study = scaling_study(gaussian_profile(cfg.profile_width), cfg.s, cfg.lambdas,
                          cfg.build_domain(), cfg.N, cfg.box_halfwidth, threads=cfg.threads)
    write_table(study.to_frame(), out / "scaling.csv")
    return study.summary(), f"slope={study.slope:.4f} expected={2 * cfg.s - 2:.4f}"


def run_probe(cfg, out):
    if cfg.f["kind"] == "constant":
        beta, scale = 0.0, float(cfg.f.get("value", 1.0))
    elif cfg.f["kind"] == "power":
        beta, scale = float(cfg.f["beta"]), float(cfg.f.get("scale", 1.0))
    else:
        raise ConfigError("probe-solvability needs a constant or power source")
    probe = solvability_probe(cfg.build_domain(), cfg.s, cfg.gamma, beta, cfg.ladder,
                              profile=lambda x: np.full(x.shape[0], scale),
                              box_halfwidth=cfg.box_halfwidth, threads=cfg.threads, tol=cfg.tol)
    write_table(probe.to_frame(), out / "probe.csv")
    return probe.summary(), f"verdict={probe.verdict} ratios={', '.join(f'{r:.3f}' for r in probe.ratios)}"


def run_sweep(cfg, out):
    ops = _operators(cfg)
    f = build_source(cfg.f, ops.mesh)
    sweep = integrability_sweep(ops, cfg.m, f, cfg.gammas, tol=cfg.tol, threads=cfg.threads)
    write_table(sweep.frame, out / "sweep.csv")
    return sweep.summary(), f"band={sweep.band:.3f} increasing={sweep.increasing}"


def run_threshold(cfg, out):
    ops = _operators(cfg)
    lam = coercivity_threshold(ops)
    gammas = cfg.gammas or [factor * lam for factor in (0.5, 0.9, 0.99, 1.01, 1.5, 2.0)]
    scan = nonexistence_scan(ops, gammas, tol=cfg.tol)
    write_table(scan, out / "threshold.csv")
    return {"discrete_threshold": lam, "statuses": scan["status"].tolist()}, f"threshold={lam:.6f}"


def run_verify(cfg, out):
    table = run_suite(s=cfg.s, gamma=cfg.gamma, N=cfg.N, domain=cfg.build_domain(), tol=cfg.tol,
                      seed=cfg.seed, threads=cfg.threads)
    write_table(table, out / "verify.csv")
    failed = table.loc[~table["passed"], "check"].tolist()
    if failed:
        raise _SuiteFailure(failed, table)
    return {"checks": table["check"].tolist(), "failed": []}, f"{len(table)} checks passed"


class _SuiteFailure(MlnHardyError):
    def __init__(self, failed, table):
        super().__init__(f"property checks failed: {', '.join(failed)}")
        self.table = table


RUNNERS = {
    "solve": run_solve,
    "iterate": run_iterate,
    "constant": run_constant,
    "scaling": run_scaling,
    "probe-solvability": run_probe,
    "sweep": run_sweep,
    "verify": run_verify,
    "threshold": run_threshold,
}


def run(command, config_path=None, output=None, threads=None):
    """Execute one experiment; returns the process exit code."""
    try:
        if command not in RUNNERS:
            raise ConfigError(f"unknown command '{command}'\n{USAGE}")
        cfg = load_config(command, config_path, output=output, threads=threads)
    except (ConfigError, DomainError) as exc:
        print(f"[error] {exc}", file=sys.stderr)
        return 1

    out = Path(cfg.output)
    started = time.perf_counter()
    payload = {"command": command, "config": cfg.to_dict(), "tolerances": cfg.tolerances}
    try:
        result, summary = RUNNERS[command](cfg, out)
    except (ConfigError, DomainError) as exc:
        print(f"[error] {exc}", file=sys.stderr)
        return 1
    except MlnHardyError as exc:
        payload.update(status="failed", error=str(exc), error_type=type(exc).__name__,
                       wall_time=time.perf_counter() - started)
        write_report(payload, out / "report.json")
        print(f"[{command}] FAIL {exc}", file=sys.stderr)
        return 2

    payload.update(status="ok", result=result, wall_time=time.perf_counter() - started)
    write_report(payload, out / "report.json")
    print(f"[{command}] OK {summary}")
    return 0


def cli(argv=None):
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
    except ConfigError as exc:
        print(f"[error] {exc}\n{USAGE}", file=sys.stderr)
        return 1
    _setup_logging(args.verbose)
    return run(args.command, args.config, output=args.output, threads=args.threads)


if __name__ == "__main__":
    sys.exit(cli())
