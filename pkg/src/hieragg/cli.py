"""Command-line driver.

    hieragg --config experiment.json [--mode MODE] [--seed S] [--out PATH] [--threads N]

Exit codes: 0 success, 2 configuration error, 3 numeric or validation
failure, 4 resource cap exceeded. Data goes to ``--out`` (or standard
output when no path is configured); logs go to standard error.
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
from pathlib import Path

from . import analytic, config, covariance, hierarchy
from .config import ExperimentConfig
from .copulas import CopulaSpec
from .errors import ConfigError, HieraggError, ResourceLimitError
from .riskmetrics import empirical_xtvar, risk_report, xtvar_standard_error

log = logging.getLogger("hieragg")

THREADS_ENV = "HIERAGG_THREADS"
CI_TOLERANCE = 1e-10

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_RESOURCE = 0, 2, 3, 4

ANALYTIC_COLUMNS = ["k", "m", "rho", "S0", "SZ", "S1", "eta", "DB"]
MC_COLUMNS = ["k", "m", "copula", "param", "param_used", "S0", "S0_se", "SZ", "SZ_se", "S1", "eta", "eta_se", "DB", "DB_se"]
EXACT_COLUMNS = ["exact_S0", "exact_SZ", "exact_S1", "exact_eta", "exact_DB"]
SHAPE_COLUMNS = ["N", "k", "m", "rho", "DB", "eta"]


class CommandFailed(HieraggError):
    """Outputs were written but a verification step failed."""


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isinf(v):
            return "inf"
        return f"{v:.17g}"
    return str(v)


def _csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def cmd_analytic(cfg: ExperimentConfig) -> str:
    rows = []
    for k, m in cfg.shapes:
        for rho in cfg.grid:
            sums = analytic.sums_at_risk(analytic.GaussianTreeParams(k, m, rho, cfg.sd, cfg.alpha))
            rows.append([k, m, rho, sums.s0, sums.sz, sums.s1, analytic.eta_gaussian(k, m, rho), analytic.db_gaussian(k, m, rho)])
    return _csv(ANALYTIC_COLUMNS, rows)


def cmd_compare_shapes(cfg: ExperimentConfig) -> str:
    n = cfg.shapes[0][0] ** cfg.shapes[0][1]
    rows = []
    for rho in cfg.grid:
        for r in analytic.compare_shapes(n, cfg.shapes, rho):
            rows.append([n, r.k, r.m, rho, r.db, r.eta])
    return _csv(SHAPE_COLUMNS, rows)


def cmd_simulate(cfg: ExperimentConfig, workers: int = 1, exact: bool = False) -> tuple[str, dict]:
    """Monte-Carlo sweep over every shape and grid value.

    Returns the CSV text and a JSON-ready report. The independent baseline
    is simulated once per shape and shared by its grid points.
    """
    leaf = cfg.marginal()
    header = MC_COLUMNS + (EXACT_COLUMNS if exact else [])
    rows, reports, substituted = [], [], []
    for k, m in cfg.shapes:
        base_tree = hierarchy.TreeSpec(k, m, leaf, CopulaSpec.independence(k))
        hierarchy.log_runtime_estimate(base_tree, cfg.n_sims)
        log.info("baseline k=%d m=%d n_sims=%d", k, m, cfg.n_sims)
        root = hierarchy.independent_baseline(base_tree, cfg.n_sims, cfg.seed, workers=workers).root
        baseline = (empirical_xtvar(root, cfg.alpha), xtvar_standard_error(root, cfg.alpha))
        del root
        for value in cfg.grid:
            cop, used = config.copula_for(cfg.copula_kind, k, value, True)
            if used != value:
                substituted.append({"k": k, "m": m, "param": _fmt(value), "param_used": used})
            tree = base_tree.with_copula(cop)
            hierarchy.log_runtime_estimate(tree, cfg.n_sims)
            log.info("k=%d m=%d %s=%s", k, m, cfg.copula_kind.value, _fmt(used))
            rep = risk_report(tree, cfg.alpha, cfg.n_sims, cfg.seed, workers=workers, baseline=baseline)
            row = [k, m, cfg.copula_kind.value, value, used, rep.s0, rep.s0_se, rep.sz, rep.sz_se, rep.s1,
                   rep.eta, rep.eta_se, rep.db, rep.db_se]
            if exact:
                ex = analytic.sums_at_risk(analytic.GaussianTreeParams(k, m, min(value, 1.0), cfg.sd, cfg.alpha))
                row += [ex.s0, ex.sz, ex.s1, analytic.eta_gaussian(k, m, min(value, 1.0)),
                        analytic.db_gaussian(k, m, min(value, 1.0))]
            rows.append(row)
            d = rep.to_dict()
            d.update(k=k, m=m, copula=cfg.copula_kind.value, param=_fmt(value), param_used=used)
            reports.append(d)
    meta = {
        "config": cfg.to_dict(),
        "endpoint_substitutions": substituted,
        "rho_one_mc": config.RHO_ONE_MC,
        "theta_inf_mc": config.THETA_INF_MC,
        "reports": reports,
    }
    return _csv(header, rows), meta


def cmd_covariance(cfg: ExperimentConfig) -> tuple[str, dict]:
    (k, m), rho = cfg.shapes[0], cfg.grid[0]
    cov = covariance.build_ci_covariance(k, m, rho, cfg.sd)
    ci = covariance.verify_ci(cov)
    lo, hi = cov.eigen_range()
    buf = io.StringIO()
    cov.to_csv(buf)
    report = {
        "k": k,
        "m": m,
        "rho": rho,
        "sigma": cfg.sd,
        "max_violation": ci.max_violation,
        "checks": ci.checks,
        "min_eigenvalue": lo,
        "max_eigenvalue": hi,
        "total_variance": cov.total_variance,
        "sigma_Z_squared": cov.sigma_z_squared(),
    }
    return buf.getvalue(), report


def _sidecar(out: str | None) -> Path | None:
    if out is None or out == "-":
        return None
    p = Path(out)
    return p.with_suffix(".json") if p.suffix != ".json" else p.with_name(p.stem + ".report.json")


def _emit(text: str, out: str | None, report: dict | None = None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
        if report is not None:
            log.info("report: %s", json.dumps(report, sort_keys=True))
        return
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    if report is not None:
        with open(_sidecar(out), "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")


def run(cfg: ExperimentConfig, workers: int = 1) -> None:
    if cfg.mode == "analytic":
        _emit(cmd_analytic(cfg), cfg.output)
    elif cfg.mode == "compare-shapes":
        _emit(cmd_compare_shapes(cfg), cfg.output)
    elif cfg.mode in ("mc", "both"):
        text, meta = cmd_simulate(cfg, workers, exact=cfg.mode == "both")
        _emit(text, cfg.output, meta)
    elif cfg.mode == "covariance":
        if cfg.shapes[0][0] ** cfg.shapes[0][1] > covariance.DEFAULT_SIZE_CAP:
            raise ResourceLimitError(f"covariance mode is capped at {covariance.DEFAULT_SIZE_CAP} leaves")
        text, report = cmd_covariance(cfg)
        _emit(text, cfg.output, report)
        if not report["max_violation"] < CI_TOLERANCE * cfg.sd**2:
            raise CommandFailed(f"CI verification failed: max violation {report['max_violation']:.3g}")
        if report["min_eigenvalue"] < -covariance.PSD_RTOL * report["max_eigenvalue"]:
            raise CommandFailed(f"matrix is not PSD: min eigenvalue {report['min_eigenvalue']:.3g}")


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hieragg", description="Hierarchical copula aggregation of risks.")
    p.add_argument("--config", required=True, help="experiment configuration (JSON)")
    p.add_argument("--mode", choices=config.MODES, help="override the configured mode")
    p.add_argument("--seed", type=int, help="override the master seed (unsigned 64-bit)")
    p.add_argument("--out", help="output path ('-' for standard output)")
    p.add_argument("--threads", type=int, help=f"worker threads (default: ${THREADS_ENV} or 1)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = config.load(args.config).with_overrides(mode=args.mode, seed=args.seed, output=args.out)
        threads = args.threads if args.threads is not None else default_threads()
        if threads < 1:
            raise ConfigError("must be >= 1", field="--threads")
        run(cfg, threads)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except ResourceLimitError as exc:
        log.error("resource limit: %s", exc)
        return EXIT_RESOURCE
    except (HieraggError, ArithmeticError) as exc:
        log.error("%s", exc)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
