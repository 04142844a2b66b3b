# spinglass_lab/cli.py

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence
import argparse
import csv
import io
import json
import logging
import math
import sys
import typing

import numpy as np
from pydantic import ValidationError

from . import __version__
from .cascade import cascade_quasi_stationarity_test, two_replica_overlap_law
from .core import superadditive_limit_check
from .exceptions import InvalidInput, LabError, NumericalFailure
from .gaussian import GaussianFamily, differentiation_identity_quadrature, differentiation_identity_residual, lse_psi
from .laws import get_increment_law, get_psi_function
from .params import SUBCOMMAND_PARAMS, RunConfig, parse_covariance, parse_order_parameter
from .parisi import SolverSettings, parisi_functional, solve_recursive
from .plotting import PlotSeries, emit_plot
from .rem import quasi_stationarity_test, tilted_increment_test
from .rost import CascadeSource, SKGibbsSource, g_functional_estimate, guerra_gap
from .sk_model import (
    ground_state_experiment,
    incremental_pressure,
    quenched_pressure,
    superadditivity_by_interpolation,
    superadditivity_experiment,
)
from .utils import LN2, SeedSpec, log_cosh
from .variational import optimize

logger = logging.getLogger(__name__)


@dataclass
class Report:
    result: Dict[str, Any]
    rows: List[Dict[str, Any]]
    series: List[PlotSeries] = field(default_factory=list)
    xlabel: str = ""
    ylabel: str = ""


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------


def _ground_state(p, seed: SeedSpec, threads: int) -> Report:
    est = ground_state_experiment(p.algo, p.N, p.samples, seed, threads)
    row = {"algo": p.algo, "N": p.N, "mean": est.value, "stderr": est.stderr, "samples": est.samples}
    return Report({"energy_density": est.to_dict(), "algo": p.algo, "N": p.N}, [row],
                  [PlotSeries(p.algo, [p.N], [est.value], "scatter")], "N", "H/N")


def _pressure(p, seed, threads) -> Report:
    est = quenched_pressure(p.N, p.beta, p.h, p.variant, p.samples, seed, threads)
    annealed = LN2 + float(log_cosh(p.beta * p.h)) + p.beta * p.beta / 4.0
    row = {"N": p.N, "beta": p.beta, "h": p.h, "P": est.value, "stderr": est.stderr, "annealed": annealed}
    return Report({"P": est.value, "stderr": est.stderr, "samples": est.samples, "annealed": annealed}, [row],
                  [PlotSeries("P_N", [p.beta], [est.value], "scatter")], "beta", "P_N")


def _superadd(p, seed, threads) -> Report:
    if p.method == "interpolation":
        gap = superadditivity_by_interpolation(p.N, p.M, p.beta, p.h, p.samples, seed, threads=threads)
        result = {"gap": gap.value, "stderr": gap.stderr, "method": p.method}
    else:
        result = {**superadditivity_experiment(p.N, p.M, p.beta, p.h, p.samples, seed, threads).to_dict(), "method": p.method}
    row = {"N": p.N, "M": p.M, "beta": p.beta, "gap": result["gap"], "stderr": result["stderr"]}
    return Report(result, [row], [PlotSeries("gap", [p.beta], [result["gap"]], "scatter")], "beta", "gap")


def _increment(p, seed, threads) -> Report:
    est = incremental_pressure(p.N, p.M, p.beta, p.h, p.samples, seed, p.variant, threads)
    row = {"N": p.N, "M": p.M, "beta": p.beta, "increment": est.value, "stderr": est.stderr}
    return Report({"increment": est.to_dict()}, [row],
                  [PlotSeries("increment", [p.N], [est.value], "scatter")], "N", "(1/M) E ln Z_{N+M}/Z_N")


def _rem_qs(p, seed, threads) -> Report:
    law = get_increment_law(p.law)
    if p.test == "tilt":
        report = tilted_increment_test(p.x, law, p.epsilon, p.top_n, p.trials, seed, threads)
        result = report.to_dict()
        return Report(result, [result], [PlotSeries("p-value", [0], [report.p_value], "scatter")], "", "p")
    report = quasi_stationarity_test(p.x, law, p.epsilon, p.top_n, p.trials, seed, p.mode, threads)
    result = report.to_dict()
    rows = [{"rank": r, "statistic": s, "p_value": v} for r, s, v in zip(result["rank"], result["statistic"], result["p_value"])]
    return Report(result, rows, [PlotSeries("per-rank p-value", result["rank"], result["p_value"], "scatter")], "rank", "p")


def _cascade_overlap(p, seed, threads) -> Report:
    params = parse_order_parameter(p.x)
    report = two_replica_overlap_law(params, p.m, p.cascades, p.pairs, seed, threads)
    result = report.to_dict()
    q = [0.0] + list(params.q) + [1.0]
    rows = [{"q": qj, "x": xj, "cdf": cj} for qj, xj, cj in zip(params.q, report.expected, report.sampled)]
    series = [
        PlotSeries("x(q)", q, [0.0] + list(report.expected) + [1.0], "step"),
        PlotSeries("empirical P(q12 <= q)", q, [report.below_first] + list(report.sampled) + [1.0], "step"),
    ]
    return Report(result, rows, series, "q", "P(q12 <= q)")


def _cascade_qs(p, seed, threads) -> Report:
    params = parse_order_parameter(p.x)
    reference = parse_order_parameter(p.reference_x) if p.reference_x else None
    report = cascade_quasi_stationarity_test(params, p.m, get_psi_function(p.psi), p.top_n, p.trials, seed, reference, threads)
    result = report.to_dict()
    rows = [{"rank": r, "statistic": s, "p_value": v} for r, s, v in zip(result["rank"], result["statistic"], result["p_value"])]
    return Report(result, rows, [PlotSeries("per-rank p-value", result["rank"], result["p_value"], "scatter")], "rank", "p")


def _parisi(p, seed, threads) -> Report:
    params = parse_order_parameter(p.x)
    covariance = parse_covariance(p.covariance)
    settings = SolverSettings(p.quad_order, p.grid_step)
    solution = solve_recursive(params, p.beta, p.h, settings, covariance)
    value = parisi_functional(params, p.beta, p.h, settings, covariance)
    result = {
        "P": value,
        "f00": solution.value,
        "penalty": 0.5 * p.beta * p.beta * params.phi_integral(covariance),
        "params": params.to_dict(),
        "lipschitz": solution.lipschitz_profile(),
    }
    rows = [{"q": q, "y": y, "f": f} for q, y, f in solution.to_rows()]
    series = [PlotSeries(f"f({q:g}, y)", solution.grid.tolist(), table.tolist()) for q, table in zip(solution.points, solution.tables)]
    return Report(result, rows, series, "y", "f(q, y)")


def _g_functional(p, seed, threads) -> Report:
    if p.source == "cascade":
        params = parse_order_parameter(p.x)
        source = CascadeSource(params, p.m)
    else:
        params = None
        source = SKGibbsSource(p.N, p.beta, p.h)
    report = g_functional_estimate(source, p.M, p.beta, p.h, None, p.samples, seed, threads)
    result = report.to_dict()
    result["G1_stderr"] = report.G1.stderr
    result["G2_stderr"] = report.G2.stderr
    if params is not None:
        result["parisi_G1"] = LN2 + solve_recursive(params, p.beta, p.h).value
        result["parisi_G2"] = 0.5 * p.beta * p.beta * params.q_integral()
    row = {k: result[k] for k in ("G", "G1", "G2", "stderr", "G1_stderr", "G2_stderr")}
    return Report(result, [row], [PlotSeries("G_M", [p.M], [report.G.value], "scatter")], "M", "G_M")


def _guerra(p, seed, threads) -> Report:
    params = parse_order_parameter(p.x)
    report = guerra_gap(p.N, params, p.beta, p.h, p.samples, seed, p.variant, threads=threads)
    result = report.to_dict()
    return Report(result, [result], [PlotSeries("gap", [p.beta], [report.gap.value], "scatter")], "beta", "P[x] − P_N")


def _variational(p, seed, threads) -> Report:
    result = optimize(p.k, p.beta, p.h, SolverSettings(p.quad_order, p.grid_step), p.restarts, seed, threads)
    rows = [
        {"restart": e.restart, "iteration": e.iteration, "value": e.value,
         "x": json.dumps(list(e.params.x)), "q": json.dumps(list(e.params.q))}
        for e in result.trace
    ]
    series = [PlotSeries("P[x]", list(range(len(result.trace))), [e.value for e in result.trace])]
    return Report(result.to_dict(), rows, series, "evaluation", "P[x]")


def _diff_identity(p, seed, threads) -> Report:
    end = (1.0 - p.rho) * np.eye(p.n) + p.rho * np.ones((p.n, p.n))
    family = GaussianFamily.linear(np.eye(p.n), end)
    psi, hessian = lse_psi(np.ones(p.n), p.beta)
    if p.method == "quadrature":
        check = differentiation_identity_quadrature(family, psi, p.t, hessian=hessian)
    else:
        check = differentiation_identity_residual(family, psi, p.t, seed.generator(0), p.samples, hessian=hessian)
    result = check.to_dict()
    return Report(result, [result], [PlotSeries("residual", [p.t], [check.residual], "scatter")], "t", "residual")


def _appendix_b(p, seed, threads) -> Report:
    n = np.arange(1, p.length + 1, dtype=float)
    if p.sequence == "linear":
        values = p.slope * n
    elif p.sequence == "sqrt":
        values = n - np.sqrt(n)
    else:
        values = n + (-1.0) ** n
    report = superadditive_limit_check(values.tolist(), p.window)
    result = report.to_dict()
    rows = [{"N": i + 1, "Q_N": v, "ratio": r, "running_sup": s}
            for i, (v, r, s) in enumerate(zip(values.tolist(), report.ratios, report.running_sup))]
    series = [
        PlotSeries("Q_N/N", n.tolist(), list(report.ratios)),
        PlotSeries("running sup", n.tolist(), list(report.running_sup), "step"),
    ]
    return Report(result, rows, series, "N", "Q_N/N")


HANDLERS: Dict[str, Callable[[Any, SeedSpec, int], Report]] = {
    "ground-state": _ground_state,
    "pressure": _pressure,
    "superadd": _superadd,
    "increment": _increment,
    "rem-qs": _rem_qs,
    "cascade-overlap": _cascade_overlap,
    "cascade-qs": _cascade_qs,
    "parisi": _parisi,
    "g-functional": _g_functional,
    "guerra": _guerra,
    "variational": _variational,
    "diff-identity": _diff_identity,
    "appendix-b": _appendix_b,
}


# ---------------------------------------------------------------------------
# Argument parsing and config resolution
# ---------------------------------------------------------------------------


def _flag_type(annotation) -> Callable[[str], Any]:
    args = [a for a in typing.get_args(annotation) if a is not type(None)]
    base = args[0] if typing.get_origin(annotation) is typing.Union and args else annotation
    if base is int:
        return int
    if base is float:
        return float
    return str


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config (schema 1).")
    common.add_argument("--seed", type=int, help="Root seed (64-bit).")
    common.add_argument("--threads", type=int, help="Worker threads (default: logical cores).")
    common.add_argument("--output", help="Output path (default: stdout).")
    common.add_argument("--format", choices=("json", "csv", "svg"), help="Output format.")
    common.add_argument("--log-level", default="WARNING", help="Logging level for stderr diagnostics.")

    parser = argparse.ArgumentParser(prog="spinglass-lab", description="Mean-field spin-glass experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, model in SUBCOMMAND_PARAMS.items():
        p = sub.add_parser(name, parents=[common], help=f"run the {name} experiment")
        for field_name, info in model.model_fields.items():
            flag = "--" + field_name.replace("_", "-")
            options: Dict[str, Any] = {"dest": f"param_{field_name}", "default": None, "help": info.description}
            choices = typing.get_args(info.annotation) if typing.get_origin(info.annotation) is typing.Literal else None
            if choices:
                options["choices"] = choices
            else:
                options["type"] = _flag_type(info.annotation)
            p.add_argument(flag, **options)
    return parser


def _load_config_file(path: str) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except OSError as e:
        raise InvalidInput(f"cannot read config file '{path}': {e}")
    except json.JSONDecodeError as e:
        raise InvalidInput(f"config file '{path}' is not valid JSON: {e}")
    if not isinstance(data, dict):
        raise InvalidInput("config file must hold a JSON object")
    return data


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Flags override the config file, which overrides model defaults."""
    data: Dict[str, Any] = _load_config_file(args.config) if args.config else {}
    if data.get("subcommand", args.subcommand) != args.subcommand:
        raise InvalidInput(f"config file is for '{data['subcommand']}', command line asks for '{args.subcommand}'")
    data["subcommand"] = args.subcommand
    params = dict(data.get("params") or {})
    for key, value in vars(args).items():
        if key.startswith("param_") and value is not None:
            params[key[len("param_"):]] = value
    data["params"] = params
    for key in ("seed", "threads", "output", "format"):
        value = getattr(args, key)
        if value is not None:
            data[key] = value
    return RunConfig.model_validate(data)


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value


def header(config: RunConfig) -> Dict[str, Any]:
    return {
        "program": "spinglass-lab",
        "version": __version__,
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "config": config.canonical(),
    }


def render(report: Report, config: RunConfig) -> bytes:
    head = header(config)
    if config.format == "json":
        text = json.dumps(_jsonable({"header": head, "result": report.result}), indent=2, sort_keys=True)
        return (text + "\n").encode("utf-8")
    if config.format == "csv":
        buffer = io.StringIO()
        buffer.write(f"# spinglass-lab {__version__} config_hash={head['config_hash']} seed={config.seed}\n")
        if report.rows:
            writer = csv.DictWriter(buffer, fieldnames=list(report.rows[0]), lineterminator="\n")
            writer.writeheader()
            for row in report.rows:
                writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in _jsonable(row).items()})
        return buffer.getvalue().encode("utf-8")
    description = json.dumps(_jsonable(head), sort_keys=True)
    return emit_plot(report.series, report.xlabel, report.ylabel, title=config.subcommand, description=description)


def run_subcommand(config: RunConfig) -> Report:
    handler = HANDLERS[config.subcommand]
    try:
        return handler(config.typed_params(), SeedSpec(config.seed), config.threads)
    except LabError:
        raise
    except Exception as e:
        raise NumericalFailure(f"{config.subcommand} failed: {e}")


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse, run and write one experiment; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = resolve_config(args)
        logger.info("running %s with config hash %s", config.subcommand, config.config_hash())
        payload = render(run_subcommand(config), config)
        if config.output:
            with open(config.output, "wb") as handle:
                handle.write(payload)
        else:
            sys.stdout.buffer.write(payload)
            sys.stdout.flush()
        return 0
    except ValidationError as e:
        print(json.dumps({"error": "ValidationError", "detail": str(e)}), file=sys.stderr)
        return InvalidInput.status_code
    except LabError as e:
        print(json.dumps(e.to_dict()), file=sys.stderr)
        return e.status_code
    except OSError as e:
        print(json.dumps({"error": "OSError", "detail": str(e)}), file=sys.stderr)
        return LabError.status_code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
