"""Command-line front end: ``concavex <command> --config <path> [options]``.

Exit status is 0 on success, 1 on invalid configs or solver failures and
2 when a counterexample cannot be certified.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from concavex.config import COMMANDS, ConfigError, ExperimentConfig, validate
from concavex.euler import (
    GridError,
    SolverError,
    concavity_scan,
    consumption_rule,
    mpc,
    second_differences,
    solve_finite_horizon,
    solve_one_period,
    stage_mpc,
)
from concavex.hlp import (
    GContext,
    default_ratio_grid,
    g_eval,
    g_second_derivative_sign,
    lb3_check,
    phi_capital,
)
from concavex.pipeline import (
    CertificationError,
    CounterexampleCertificate,
    HARAVerdict,
    PipelineConfig,
    PreconditionError,
    run_pipeline,
    verify_certificate,
)
from concavex.shocks import ShockDistribution, shocks_to_hlp
from concavex.utility import DomainError, hara_residual

logger = logging.getLogger("concavex")

EXIT_OK, EXIT_ERROR, EXIT_UNCERTIFIED = 0, 1, 2


def fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    write_atomic(path, buf.getvalue())
    logger.info("wrote %s", path)


def write_json(path: Path, obj) -> None:
    write_atomic(path, json.dumps(obj, indent=2) + "\n")
    logger.info("wrote %s", path)


def _padded(d2):
    return [None, *d2.tolist(), None]


def _warn_beta(dist: ShockDistribution) -> None:
    if np.any(dist.beta > 1):
        logger.warning("discount factors above one: %s", [float(b) for b in dist.beta])


def cmd_solve(cfg: ExperimentConfig, out: Path) -> int:
    u, dist, grid = cfg.utility(), cfg.shocks(), cfg.grid()
    _warn_beta(dist)
    tol = cfg.tolerances["solver"]
    c, s = solve_one_period(u, dist, grid, tol)
    m = mpc(u, dist, grid, tol)
    d2, _ = second_differences(grid, c)
    write_csv(out / "policy.csv", ["w", "c", "s", "mpc", "second_difference"],
              zip(grid, c, s, m, _padded(d2)))
    return EXIT_OK


def cmd_scan(cfg: ExperimentConfig, out: Path) -> int:
    u, dist, grid = cfg.utility(), cfg.shocks(), cfg.grid()
    _warn_beta(dist)
    report = concavity_scan(consumption_rule(u, dist, cfg.tolerances["solver"]), grid, cfg.tolerances["concavity"])
    viol = set(report.violation_indices)
    rows = [(i, grid[i], report.second_differences[i - 1], i in viol) for i in range(1, grid.size - 1)]
    write_csv(out / "concavity.csv", ["grid_index", "w", "second_difference", "is_violation"], rows)
    logger.info("max second difference %.3e, %d violations", report.max_second_difference, len(viol))
    return EXIT_OK


def cmd_horizon(cfg: ExperimentConfig, out: Path) -> int:
    u, dist, grid = cfg.utility(), cfg.shocks(), cfg.grid()
    _warn_beta(dist)
    policies = solve_finite_horizon(u, dist, cfg.horizon, grid, cfg.tolerances["solver"])
    for t, pol in enumerate(policies):
        c = pol.consumption_values
        m = stage_mpc(u, dist, pol, policies[t + 1]) if t + 1 < len(policies) else np.ones_like(c)
        d2, _ = second_differences(grid, c)
        write_csv(out / f"policy_t{t}.csv", ["w", "c", "s", "mpc", "second_difference"],
                  zip(grid, c, grid - c, m, _padded(d2)))
    return EXIT_OK


def cmd_classify(cfg: ExperimentConfig, out: Path) -> int:
    u = cfg.utility()
    grid = cfg.grid()
    if grid is None:
        grid = np.sort(np.asarray(u.inverse_up(default_ratio_grid(u))))
    fit = hara_residual(u, grid)
    tol = cfg.tolerances["hara"]
    report = {
        "utility": u.to_spec(),
        "residual": fit.residual,
        "a": fit.a,
        "b": fit.b,
        "hara_tol": tol,
        "is_hara": fit.is_hara(tol),
        "grid": {"lo": float(grid[0]), "hi": float(grid[-1]), "points": int(grid.size)},
    }
    write_json(out / "classify.json", report)
    logger.info("HARA residual %.3e (a = %.6g, b = %.6g)", fit.residual, fit.a, fit.b)
    return EXIT_OK


def cmd_counterexample(cfg: ExperimentConfig, out: Path) -> int:
    u = cfg.utility()
    pipe = cfg.pipeline
    config = PipelineConfig(
        tol=cfg.tolerances["solver"],
        ratio_margin=cfg.tolerances["ratio_margin"],
        window_ratio=pipe.get("window_ratio", 1.2),
        scan_points=pipe.get("scan_points", 101),
        k=pipe.get("k", -1.0),
        shifted_domain=pipe.get("shifted_domain", False),
    )
    try:
        result = run_pipeline(u, config)
    except CertificationError as exc:
        logger.error("certification failed: %s", exc)
        return EXIT_UNCERTIFIED
    if isinstance(result, HARAVerdict):
        write_json(out / "verdict.json", {"utility": u.to_spec(), **result.to_dict()})
        logger.info("no counterexample: utility is HARA with a = %.6g, b = %.6g", result.a, result.b)
        return EXIT_OK
    _warn_beta(result.shocks)
    text = result.to_json()
    write_atomic(out / "certificate.json", text)
    write_csv(out / "scan.csv", ["w", "c", "second_difference"],
              zip(result.scan_w, result.scan_c, _padded(result.second_differences)))
    if not verify_certificate(CounterexampleCertificate.from_json((out / "certificate.json").read_text())):
        logger.error("emitted certificate failed re-verification")
        return EXIT_UNCERTIFIED
    logger.info("certified non-concavity at w* = %.6g", result.w_star)
    return EXIT_OK


def _s_grid(ctx: GContext, points: int = 101) -> np.ndarray:
    lo, hi = ctx.s_domain
    half = min(1.0, -lo, hi) * 0.5
    return np.linspace(-half, half, points)


def cmd_gcheck(cfg: ExperimentConfig, out: Path) -> int:
    u = cfg.utility()
    params = cfg.hlp()
    if params is None:
        dist = cfg.shocks()
        _warn_beta(dist)
        params = shocks_to_hlp(dist)
    ctx = GContext(u, params)
    s = _s_grid(ctx)
    g = np.asarray(g_eval(ctx, s))
    rows = []
    for si, gi in zip(s, g):
        sign = g_second_derivative_sign(ctx, si)
        rows.append((si, gi, sign.expression, "+-0"[[1, -1, 0].index(sign.sign)]))
    write_csv(out / "g_scan.csv", ["s", "g", "g_second_derivative_expression", "sign"], rows)

    y = default_ratio_grid(u, points=16)
    phi = np.asarray(phi_capital(u, y))
    write_csv(out / "ratio_scan.csv", ["y", "phi_capital", "ratio"], zip(y, phi, phi / y))
    lb3_rows = []
    for i, y1 in enumerate(y):
        for j, y2 in enumerate(y):
            if i != j:
                p = (y2 / (2 * y1), 0.5)
                res = lb3_check(u, p, (y1, y2))
                lb3_rows.append((y1, y2, p[0], p[1], res.gap, res.holds))
    write_csv(out / "lb3_scan.csv", ["y1", "y2", "p1", "p2", "gap", "holds"], lb3_rows)
    return EXIT_OK


HANDLERS = {
    "solve": cmd_solve,
    "scan": cmd_scan,
    "horizon": cmd_horizon,
    "classify": cmd_classify,
    "counterexample": cmd_counterexample,
    "gcheck": cmd_gcheck,
}


def run(cfg: ExperimentConfig) -> int:
    out = Path(cfg.output)
    try:
        return HANDLERS[cfg.command](cfg, out)
    except (SolverError, GridError, DomainError, PreconditionError) as exc:
        logger.error("%s failed: %s", cfg.command, exc)
        return EXIT_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="concavex", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=[*COMMANDS, "validate"])
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--out", help="output directory (default: config 'output' or '.')")
    parser.add_argument("--seed", type=int, help="seed for randomized shock specs")
    parser.add_argument("--tol", type=float, help="solver tolerance")
    parser.add_argument("--quiet", action="store_true", help="only report warnings and errors")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.command == "validate":
        try:
            problems = validate(args.config)
        except OSError as exc:
            logger.error("cannot read %s: %s", args.config, exc)
            return EXIT_ERROR
        for p in problems:
            print(p)
        return EXIT_ERROR if problems else EXIT_OK
    try:
        cfg = ExperimentConfig.load(args.config, command=args.command, seed=args.seed, tol=args.tol,
                                    output=args.out)
    except ConfigError as exc:
        for p in exc.problems:
            logger.error("%s", p)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        logger.error("cannot load config: %s", exc)
        return EXIT_ERROR
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
