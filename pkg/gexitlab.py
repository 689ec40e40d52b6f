import argparse
import csv
import io
import json
import logging
import sys
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from lib.bounds import fixed_point_battacharyya_curve, fixed_point_rectangles
from lib.channels import ChannelFamily
from lib.codes import EnumerationError, Mode, bp_correctness_bound_check, dual_gexit_curve, exit_curve, gexit_curve, parse_code
from lib.config import RunConfig, resolve_config
from lib.curve import Curve
from lib.de import ConvergenceError, DegreeDistribution, bp_curves, bp_threshold, de_fixed_point, matching_chart, stability_threshold
from lib.density import entropy
from lib.ebp import conditional_entropy_curve, curve_cuts, ebp_area, ebp_curve, map_threshold_upper_bound, maxwell_construction, maxwell_threshold
from lib.kernels import kernel_absD

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_CONVERGENCE = 3
EXIT_IO = 4


@dataclass
class Result:
    """What a command produces: a table for CSV, a summary for JSON, and whether everything converged."""

    header: list[str] = field(default_factory=list)
    rows: list[list[float]] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)
    converged: bool = True

    @classmethod
    def from_curve(cls, curve: Curve, x_name: str, y_name: str, **summary: Any) -> "Result":
        return cls(curve.header(x_name, y_name), curve.rows(), summary)


def _require_h(config: RunConfig) -> tuple[ChannelFamily, float]:
    family, h = config.family()
    if h is None:
        raise ValueError(f"Command {config.command} needs a channel entropy: use --h or a channel spec like bsc:h=0.5")
    return family, h


def _hs(config: RunConfig) -> np.ndarray:
    return np.linspace(0.0, 1.0, config.h_points)


def _mode(config: RunConfig) -> Mode | None:
    # None lets the code module pick exact enumeration for BEC/BSC and sampling for BAWGN
    return Mode(config.mode) if config.mode else None


def cmd_kernel(config: RunConfig) -> Result:
    family, h = _require_h(config)
    s = np.linspace(0.0, 1.0, config.h_points)
    kappa = kernel_absD(family, h, s)
    return Result(["s", "kappa"], [[float(a), float(b)] for a, b in zip(s, kappa)], {"h": h})


def cmd_exit(config: RunConfig) -> Result:
    family, _ = config.family()
    code = parse_code(config.code)
    curve = exit_curve(code, family, _hs(config), _mode(config), config.samples, config.seed)
    return Result.from_curve(curve, "h", "exit", area=curve.area(), rate=code.rate)


def cmd_gexit(config: RunConfig) -> Result:
    family, _ = config.family()
    code = parse_code(config.code)
    curve = gexit_curve(code, family, _hs(config), _mode(config), config.samples, config.seed)
    result = Result.from_curve(curve, "h", "gexit", area=curve.area(), rate=code.rate)
    if family.kind != ChannelFamily.Kind.BAWGN:
        dual = dual_gexit_curve(code, family, _hs(config))
        result.summary["dual_area"] = dual.sorted_by_x().area()
    return result


def cmd_de(config: RunConfig) -> Result:
    """DE trace at one channel entropy, or the BP GEXIT and EXIT curves over the h grid when none is given."""
    family, h = config.family()
    ddp = DegreeDistribution.parse(config.ensemble)
    if h is None:
        gexit, exit = bp_curves(ddp, family, _hs(config), config.workers, config.max_iter)
        converged = gexit.columns["converged"]
        rows = [[float(a), float(b), float(c), float(d), float(e)] for a, b, c, d, e in zip(gexit.x, gexit.y, exit.y, gexit.columns["iterations"], converged)]
        summary = {"design_rate": ddp.design_rate, "gexit_area": gexit.area(), "converged": bool(np.all(converged == 1.0))}
        return Result(["h", "gexit", "exit", "iterations", "converged"], rows, summary, summary["converged"])
    state = de_fixed_point(ddp, family, h, tol=config.tol, max_iter=config.max_iter)
    rows = [[float(i), t.entropy, t.battacharyya, t.error_prob] for i, t in enumerate(state.trace)]
    summary = {
        "h": h,
        "iterations": state.iterations,
        "converged": state.converged,
        "oscillating": state.oscillating,
        "entropy": entropy(state.density),
        "design_rate": ddp.design_rate,
    }
    return Result(["iteration", "entropy", "battacharyya", "error_prob"], rows, summary, state.converged)


def cmd_ebp(config: RunConfig) -> Result:
    family, _ = config.family()
    ddp = DegreeDistribution.parse(config.ensemble)
    curve = ebp_curve(ddp, family, n_points=config.x_points, threads=config.workers)
    rows = [[p.x, p.h, p.gexit_value, p.residual, float(p.converged)] for p in curve.points]
    summary = {"area": ebp_area(curve), "design_rate": ddp.design_rate, "s_regions": len(curve.s_regions), "diagnostics": curve.diagnostics}
    return Result(["x", "h", "gexit", "entropy_residual", "converged"], rows, summary, all(p.converged for p in curve.points))


def cmd_maxwell(config: RunConfig) -> Result:
    family, _ = config.family()
    ddp = DegreeDistribution.parse(config.ensemble)
    curve = ebp_curve(ddp, family, n_points=config.x_points, threads=config.workers)
    map_curve = maxwell_construction(curve)
    cuts = curve_cuts(curve)
    conditional = conditional_entropy_curve(map_curve)
    result = Result(["h", "gexit", "conditional_entropy"], [[a, b, c] for a, b, c in zip(map_curve.x, map_curve.y, conditional.y)])
    result.summary = {"h_map": maxwell_threshold(curve), "cuts": [c.h for c in cuts], "design_rate": ddp.design_rate}
    return result


def cmd_threshold(config: RunConfig) -> Result:
    family, _ = config.family()
    ddp = DegreeDistribution.parse(config.ensemble)
    h_bp = bp_threshold(ddp, family, max_iter=config.max_iter)
    bound = map_threshold_upper_bound(ddp, family, n_points=config.h_points, max_iter=config.max_iter)
    summary = {
        "h_bp": h_bp,
        "h_bar": bound.h_bar,
        "h_stability": stability_threshold(ddp, family),
        "h_shannon": 1.0 - ddp.design_rate,
        "design_rate": ddp.design_rate,
    }
    result = Result.from_curve(bound.entropy_bound, "h", "entropy_lower_bound", **summary)
    return result


def cmd_match(config: RunConfig) -> Result:
    family, h = _require_h(config)
    ddp = DegreeDistribution.parse(config.ensemble)
    chart = matching_chart(ddp, family, h, resolution=config.alpha_resolution)
    alpha = chart.check.columns["alpha"]
    rows = [[float(a), float(x), float(c), float(v)] for a, x, c, v in zip(alpha, chart.check.x, chart.check.y, chart.variable.y)]
    summary = {
        "check_area": chart.check_area,
        "variable_left_area": chart.variable_left_area,
        "crosses": chart.crosses,
        "capacity_ok": chart.capacity_ok,
    }
    return Result(["alpha", "x", "check", "variable"], rows, summary)


def cmd_bpmap(config: RunConfig) -> Result:
    family, h = _require_h(config)
    code = parse_code(config.code)
    exact = config.mode != "montecarlo" and family.kind != ChannelFamily.Kind.BAWGN
    samples = None if exact else config.samples
    report = bp_correctness_bound_check(code, family, h, config.ell, samples, config.seed)
    rows = [[float(i), g_bp, g_map, float(t)] for i, (g_bp, g_map, t) in enumerate(zip(report.g_bp_bits, report.g_map_bits, report.tree_like))]
    summary = {
        "delta": report.delta,
        "delta_full": report.delta_full,
        "distortion_constant": report.distortion_constant,
        "concavity": report.concavity,
        "g_bp": report.g_bp,
        "g_map": report.g_map,
        "nontree_fraction": report.nontree_fraction,
        "girth_fraction": report.girth_fraction,
        "bound": report.bound,
        "holds": report.holds,
    }
    return Result(["bit", "g_bp", "g_map", "tree_like"], rows, summary)


def cmd_bounds(config: RunConfig) -> Result:
    family, _ = config.family()
    ddp = DegreeDistribution.parse(config.ensemble)
    xs = np.linspace(0.0, 1.0, config.x_points)
    region = fixed_point_rectangles(ddp, xs, config.workers)
    result = Result(["x", "h_lo", "h_hi", "g_lo", "g_hi"], region.rows())
    if family.kind == ChannelFamily.Kind.BSC:
        eps = np.linspace(0.0, 0.5, config.h_points)[1:]
        curve = fixed_point_battacharyya_curve(ddp, eps, family, threads=config.workers, max_iter=config.max_iter)
        result.summary["battacharyya"] = {
            "eps": curve.x.tolist(),
            "fixed_point": curve.y.tolist(),
            "fp_lower": curve.columns["fp_lower"].tolist(),
            "uniqueness": curve.columns["uniqueness"].tolist(),
        }
    return result


COMMANDS: dict[str, Callable[[RunConfig], Result]] = {
    "kernel": cmd_kernel,
    "exit": cmd_exit,
    "gexit": cmd_gexit,
    "de": cmd_de,
    "ebp": cmd_ebp,
    "maxwell": cmd_maxwell,
    "threshold": cmd_threshold,
    "match": cmd_match,
    "bpmap": cmd_bpmap,
    "bounds": cmd_bounds,
}


def _partial_result(e: ConvergenceError) -> Result:
    """What is known when a computation gives up, written out with the non-convergence status."""
    if e.partial is None:
        return Result(summary={"error": str(e)}, converged=False)
    result = Result.from_curve(e.partial, "h", e.partial.role.value, error=str(e))
    result.converged = False
    return result


def render(result: Result, config: RunConfig) -> str:
    if config.format == "json":
        document = {"config": config.to_dict(), "converged": result.converged, **result.summary, "header": result.header, "rows": result.rows}
        return json.dumps(document, indent=2, default=float) + "\n"
    stream = io.StringIO()
    stream.write(f"# {json.dumps({'config': config.to_dict(), 'converged': result.converged, **result.summary}, default=float)}\n")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(result.header)
    for row in result.rows:
        writer.writerow([repr(float(v)) for v in row])
    return stream.getvalue()


def write_output(text: str, path: str) -> None:
    if not path:
        sys.stdout.write(text)
        return
    with open(path, "w") as f:
        f.write(text)
    logger.info(f"Wrote {path}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file; flags win over its values")
    common.add_argument("--channel", help="bec, bsc, bawgn, optionally with :h=, :eps= or :sigma=")
    common.add_argument("--ensemble", help='degree distribution, e.g. "l=x^2,r=x^5"')
    common.add_argument("--code", help="rep:n, spc:n, hamming74, simplex73, code:5_4_2, generator:PATH or parity:PATH")
    common.add_argument("--h", type=float, help="channel entropy")
    common.add_argument("--h-points", type=int)
    common.add_argument("--x-points", type=int)
    common.add_argument("--alpha-resolution", type=float)
    common.add_argument("--n-bins", type=int)
    common.add_argument("--l-max", type=float)
    common.add_argument("--tol", type=float)
    common.add_argument("--max-iter", type=int)
    common.add_argument("--ell", type=int, help="BP iterations")
    common.add_argument("--mode", choices=["exact", "montecarlo"])
    common.add_argument("--samples", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--output", "-o")
    common.add_argument("--format", choices=["csv", "json"])
    common.add_argument("--verbose", "-v", action="store_true")

    parser = argparse.ArgumentParser(prog="gexitlab", description="EXIT, GEXIT, density evolution and MAP threshold computations for BMS channels")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=fn.__name__.removeprefix("cmd_"))
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    flags = {k: v for k, v in vars(args).items() if k not in ("config", "verbose")}
    try:
        config = resolve_config(flags, args.config)
    except OSError as e:
        logger.error(f"Cannot read config: {e}")
        return EXIT_IO
    except ValueError as e:
        logger.error(str(e))
        return EXIT_PARSE

    logger.info(f"Running {config.command} ..")
    try:
        result = COMMANDS[config.command](config)
    except ConvergenceError as e:
        logger.error(str(e))
        result = _partial_result(e)
    except (ValueError, EnumerationError) as e:
        logger.error(str(e))
        return EXIT_PARSE
    except OSError as e:
        logger.error(str(e))
        return EXIT_IO

    try:
        write_output(render(result, config), config.output)
    except OSError as e:
        logger.error(f"Cannot write output: {e}")
        return EXIT_IO
    logger.info(f"Running {config.command} .. [done]")
    if not result.converged:
        logger.warning("Some computations did not converge")
        return EXIT_CONVERGENCE
    return EXIT_OK


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO)

    sys.exit(main())
