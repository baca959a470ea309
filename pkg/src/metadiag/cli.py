"""Command-line front end: ``metadiag fit|priors|simulate|sroc``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .data import Dataset, DatasetError, parse_dataset_csv, telomerase_dataset
from .inference.laplace import LaplaceError
from .inference.marginals import PosteriorSummary, SummaryError, posterior_marginals
from .inference.mcmc import DEFAULT_SEED, MCMCConfig, mcmc_oracle
from .model import PriorBundle
from .priors import (
    CorrelationPCPrior, FixedCorrelation, InverseGammaPrior, NormalZPrior, PriorSpecError, VariancePCPrior,
    check_contrasts, distance_correlation, distance_derivative, parse_prior, rho_to_z,
)
from .simulation import (
    PRIOR_CONFIG_NAMES, ScenarioMetrics, builtin_scenarios, metrics_csv, named_prior_config,
    parse_scenario_selection, run_scenario,
)
from .sroc import SrocError, SrocInputs, marginal_extent, region_mass, sroc_geometry
from .svg import PALETTE, Figure

logger = logging.getLogger("metadiag")

EXIT_OK, EXIT_USAGE, EXIT_INFERENCE = 0, 2, 3
INFERENCE_ERRORS = (LaplaceError, SrocError, SummaryError, np.linalg.LinAlgError, FloatingPointError)


class UsageError(Exception):
    """Bad input detected after argument parsing; maps to exit code 2."""


# ---------------------------------------------------------------------------
# shared helpers


def _load_dataset(spec: str) -> Dataset:
    if spec.lower() == "telomerase":
        return telomerase_dataset()
    path = Path(spec)
    if not path.is_file():
        raise UsageError(f"dataset file not found: {spec}")
    try:
        return parse_dataset_csv(path.read_text(encoding="utf-8"), name=path.stem)
    except DatasetError as exc:
        raise UsageError(f"{spec}: {exc}") from None


def _prior(text: str, kind: str):
    try:
        p = parse_prior(text)
    except PriorSpecError as exc:
        raise UsageError(str(exc)) from None
    cor_types = (CorrelationPCPrior, NormalZPrior, FixedCorrelation)
    var_types = (VariancePCPrior, InverseGammaPrior)
    if kind == "cor" and not isinstance(p, cor_types):
        raise UsageError(f"{text!r} is not a correlation prior")
    if kind == "var" and not isinstance(p, var_types):
        raise UsageError(f"{text!r} is not a variance prior")
    return p


def _prior_bundle(args) -> PriorBundle:
    v1 = _prior(args.prior_var, "var")
    v2 = _prior(args.prior_var2 or args.prior_var, "var")
    c = _prior(args.prior_cor, "cor")
    if not args.intercept_var > 0:
        raise UsageError("--intercept-var must be positive")
    return PriorBundle(var_phi_prior=v1, var_psi_prior=v2, cor_prior=c, intercept_prior_variance=args.intercept_var)


def _mcmc_config(args) -> MCMCConfig:
    iters = args.mcmc_iters
    burn = max(iters // 10, 1)
    try:
        return MCMCConfig(iterations=iters, burn_in=burn, thin=args.mcmc_thin, seed=args.seed)
    except ValueError as exc:
        raise UsageError(f"--mcmc-iters: {exc}") from None


def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {path}: {exc}") from None
    return out


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")
    logger.info("wrote %s", path)


def _write_metadata(out: Path, args, started: float, extra: dict | None = None) -> None:
    meta = {
        "command": args.command,
        "argv": sys.argv[1:],
        "started": datetime.fromtimestamp(started, timezone.utc).isoformat(),
        "finished": datetime.now(timezone.utc).isoformat(),
        "elapsed_seconds": time.time() - started,
    }
    meta.update(extra or {})
    _write(out / "metadata.json", json.dumps(meta, indent=2) + "\n")


def _config_echo(args) -> dict:
    keep = ("data", "prior_var", "prior_var2", "prior_cor", "engine", "seed", "intercept_var", "mcmc_iters",
            "mcmc_thin", "level")
    return {k: getattr(args, k) for k in keep if hasattr(args, k)}


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _r(x) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# fit


def _marginal_rows(summary: PosteriorSummary):
    for name, m in summary.marginals.items():
        for x, d in zip(m.x, m.density):
            yield [summary.engine, name, _r(x), _r(d)]


def _comparison_rows(a: PosteriorSummary, b: PosteriorSummary):
    for name in a.marginals:
        if name not in b.marginals:
            continue
        ma, mb = a[name], b[name]
        delta = ma.mean - mb.mean
        yield [name, _r(ma.mean), _r(mb.mean), _r(ma.sd), _r(mb.sd), _r(delta),
               _r(abs(delta) / mb.sd) if mb.sd > 0 else "nan"]


def cmd_fit(args) -> int:
    started = time.time()
    dataset = _load_dataset(args.data)
    priors = _prior_bundle(args)
    out = _out_dir(args.out)
    mcmc_cfg = _mcmc_config(args) if args.engine in ("mcmc", "both") else None
    summaries: list[PosteriorSummary] = []
    try:
        if args.engine in ("laplace", "both"):
            summaries.append(posterior_marginals(dataset, priors))
        if mcmc_cfg is not None:
            summaries.append(mcmc_oracle(dataset, priors, mcmc_cfg).summary)
    except INFERENCE_ERRORS as exc:
        print(f"metadiag fit: inference failed: {exc}", file=sys.stderr)
        return EXIT_INFERENCE

    echo = _config_echo(args)
    echo["priors"] = priors.describe()
    if len(summaries) == 1:
        _write(out / "summary.json", summaries[0].to_json(echo) + "\n")
    else:
        doc = {s.engine: json.loads(s.to_json()) for s in summaries}
        primary = doc["laplace"]
        primary = {**primary, "config_echo": echo, "engines": doc}
        _write(out / "summary.json", json.dumps(primary, indent=2) + "\n")
        rows = list(_comparison_rows(summaries[0], summaries[1]))
        _write(out / "comparison.csv", _csv(rows, ["quantity", "laplace_mean", "mcmc_mean", "laplace_sd",
                                                    "mcmc_sd", "delta_mean", "delta_over_mcmc_sd"]))
    rows = [r for s in summaries for r in _marginal_rows(s)]
    _write(out / "marginals.csv", _csv(rows, ["engine", "quantity", "x", "density"]))
    _write_metadata(out, args, started, {"timings": {s.engine: s.timings for s in summaries}})
    for s in summaries:
        for w in s.warnings:
            print(f"warning ({s.engine}): {w}", file=sys.stderr)
    _print_fit(summaries)
    return EXIT_OK


def _print_fit(summaries: list[PosteriorSummary]) -> None:
    for s in summaries:
        print(f"[{s.engine}]")
        print(f"  {'quantity':<12}{'mean':>10}{'sd':>10}{'2.5%':>10}{'50%':>10}{'97.5%':>10}")
        for name, m in s.marginals.items():
            print(f"  {name:<12}{m.mean:>10.4f}{m.sd:>10.4f}{m.lower:>10.4f}{m.median:>10.4f}{m.upper:>10.4f}")
        if s.fixed_rho is not None:
            print(f"  cor fixed at {s.fixed_rho:g}")
        if s.marginal_log_likelihood is not None:
            print(f"  log marginal likelihood {s.marginal_log_likelihood:.4f}")


# ---------------------------------------------------------------------------
# priors


def _cor_tables(prior, rho):
    """Densities of a correlation prior on the rho, z and signed-distance scales."""
    rho0 = prior.rho0 if isinstance(prior, CorrelationPCPrior) else 0.0
    pdf = np.asarray(prior.pdf(rho), dtype=float)
    z = rho_to_z(rho)
    dens_z = pdf * (1 - rho) * (1 + rho) / 2.0
    d = np.sign(rho - rho0) * distance_correlation(rho, rho0)
    dens_d = pdf / distance_derivative(rho, rho0)
    return z, dens_z, d, dens_d


def _var_tables(prior, v):
    pdf = np.asarray(prior.pdf(v), dtype=float)
    sigma = np.sqrt(v)
    return sigma, pdf * 2.0 * sigma


def _curve_panel(fig, row, col, series, title, xlabel, xlim=None, ylim_cap=None, marks=()):
    xs = np.concatenate([s[1] for s in series])
    ys = np.concatenate([s[2] for s in series])
    ok = np.isfinite(ys)
    ymax = float(np.max(ys[ok])) if ok.any() else 1.0
    if ylim_cap is not None:
        ymax = min(ymax, ylim_cap)
    p = fig.panel(row, col, xlim or (float(xs.min()), float(xs.max())), (0.0, 1.05 * ymax),
                  title=title, xlabel=xlabel, ylabel="density")
    for i, (_, x, y) in enumerate(series):
        p.line(x, y, color=PALETTE[(i + 2) % len(PALETTE)])
    for m in marks:
        p.line([m, m], [0, 1.05 * ymax], color=PALETTE[1], dash="4,3", width=1)
    return p


def cmd_priors(args) -> int:
    started = time.time()
    cor_specs = args.prior_cor_list or ["pc0", "pc1", "pc2", "pc3", "paul"]
    var_specs = args.prior_var_list or ["pcvar", "invgamma"]
    cors = [(s, _prior(s, "cor")) for s in cor_specs]
    vars_ = [(s, _prior(s, "var")) for s in var_specs]
    if any(isinstance(p, FixedCorrelation) for _, p in cors):
        raise UsageError("a fixed correlation has no density to tabulate")
    out = _out_dir(args.out)

    report = {}
    t0 = time.perf_counter()
    for spec, p in cors + vars_:
        report[spec] = {"spec": p.spec_string(), **check_contrasts(p)}
    quad_seconds = time.perf_counter() - t0

    # correlation scale grid: dense near the endpoints
    u = np.linspace(-1, 1, 2001)[1:-1]
    rho = np.sin(0.5 * np.pi * u)
    rows, series = [], {"rho": [], "z": [], "d": []}
    for spec, p in cors:
        z, dz, d, dd = _cor_tables(p, rho)
        pdf = np.asarray(p.pdf(rho), dtype=float)
        rows += [[spec, _r(a), _r(b), _r(c), _r(e), _r(f), _r(g)] for a, b, c, e, f, g in zip(rho, z, d, pdf, dz, dd)]
        series["rho"].append((spec, rho, pdf))
        series["z"].append((spec, z, dz))
        series["d"].append((spec, d, dd))
    _write(out / "cor_prior_density.csv",
           _csv(rows, ["prior", "rho", "z", "signed_distance", "density_rho", "density_z", "density_distance"]))
    fig = Figure(1, 3, title="Correlation priors")
    _curve_panel(fig, 0, 0, series["rho"], "correlation scale", "rho", (-1, 1), ylim_cap=4.0)
    _curve_panel(fig, 0, 1, series["z"], "Fisher z scale", "z = logit((rho+1)/2)", (-8, 8))
    _curve_panel(fig, 0, 2, series["d"], "distance scale", "signed distance from base", (-3, 3), ylim_cap=4.0)
    for i, (spec, _) in enumerate(cors):
        fig.legend(spec, PALETTE[(i + 2) % len(PALETTE)])
    fig.save(out / "cor_priors.svg")

    v = np.geomspace(1e-4, 50.0, 1500)
    rows, sv, ss = [], [], []
    for spec, p in vars_:
        pdf = np.asarray(p.pdf(v), dtype=float)
        sigma, ds = _var_tables(p, v)
        rows += [[spec, _r(a), _r(b), _r(c), _r(e)] for a, b, c, e in zip(v, sigma, pdf, ds)]
        sv.append((spec, v, pdf))
        ss.append((spec, sigma, ds))
    _write(out / "var_prior_density.csv", _csv(rows, ["prior", "variance", "sigma", "density_variance",
                                                      "density_sigma"]))
    fig = Figure(1, 2, title="Variance priors")
    marks = [p.u for _, p in vars_ if isinstance(p, VariancePCPrior)]
    _curve_panel(fig, 0, 0, sv, "variance scale", "variance", (0, 10), ylim_cap=3.0,
                 marks=[m * m for m in marks])
    _curve_panel(fig, 0, 1, ss, "distance scale", "sigma", (0, 5), ylim_cap=3.0, marks=marks)
    for i, (spec, _) in enumerate(vars_):
        fig.legend(spec, PALETTE[(i + 2) % len(PALETTE)])
    fig.save(out / "var_priors.svg")

    _write(out / "prior_parameters.json", json.dumps(report, indent=2) + "\n")
    _write_metadata(out, args, started, {"quadrature_seconds": quad_seconds})
    for spec, vals in report.items():
        print(spec)
        for k, val in vals.items():
            print(f"  {k:<14} {val:.10g}" if isinstance(val, float) else f"  {k:<14} {val}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate

_SIM_PLOT_PARAMS = ("cor", "var_phi", "var_psi")


def _block_records_csv(results: list[ScenarioMetrics]) -> str:
    rows = []
    for res in results:
        body = res.records_csv().splitlines()[1:]
        rows += [[res.scenario.scenario_id, res.prior, *line.split(",")] for line in body]
    return _csv(rows, ["scenario", "prior", *ScenarioMetrics.RECORD_COLUMNS])


def _block_figures(results: list[ScenarioMetrics], prior_names: list[str], title: str):
    """Error box plots plus bias, MSE and coverage bars against true rho."""
    rhos = sorted({r.scenario.rho for r in results})
    n_p = len(prior_names)
    width = 0.8 / n_p
    figs = {}
    for metric in ("errors", "bias", "mse", "coverage"):
        fig = Figure(1, len(_SIM_PLOT_PARAMS), panel_width=300, title=f"{title}: {metric}")
        for col, param in enumerate(_SIM_PLOT_PARAMS):
            cells = {}
            for r in results:
                if param not in r.parameters:
                    continue
                if metric == "errors":
                    vals = np.array([rec.error for rec in r.records if rec.parameter == param])
                else:
                    m = r.parameters[param]
                    vals = {"bias": m.bias, "mse": m.mse, "coverage": m.coverage95}[metric]
                cells[(r.scenario.rho, r.prior)] = vals
            if metric == "errors":
                allv = np.concatenate([v for v in cells.values() if len(v)] or [np.zeros(1)])
                lo, hi = float(np.min(allv)), float(np.max(allv))
            else:
                allv = np.array(list(cells.values()) or [0.0])
                lo, hi = min(0.0, float(allv.min())), max(0.0, float(allv.max()))
                if metric == "coverage":
                    lo, hi = min(lo, 0.8), 1.0
            pad = 0.05 * (hi - lo or 1.0)
            ticks = [(i, f"{r:g}") for i, r in enumerate(rhos)]
            p = fig.panel(0, col, (-0.6, len(rhos) - 0.4), (lo - pad, hi + pad), title=param,
                          xlabel="true correlation", ylabel=metric, xticks=ticks)
            if metric in ("errors", "bias"):
                p.hline(0.0, color=PALETTE[1])
            if metric == "coverage":
                p.hline(0.95, color=PALETTE[1])
            for i, rho in enumerate(rhos):
                for j, prior in enumerate(prior_names):
                    if (rho, prior) not in cells:
                        continue
                    x = i - 0.4 + width * (j + 0.5)
                    color = PALETTE[(j + 2) % len(PALETTE)]
                    v = cells[(rho, prior)]
                    if metric == "errors":
                        if len(v) == 0:
                            continue
                        q1, med, q3 = np.quantile(v, (0.25, 0.5, 0.75))
                        lo_w, hi_w = np.quantile(v, (0.025, 0.975))
                        p.line([x, x], [lo_w, hi_w], color=color, width=1)
                        p.rect(x - 0.4 * width, q1, x + 0.4 * width, q3, color=color)
                        p.line([x - 0.4 * width, x + 0.4 * width], [med, med], width=1.5)
                    else:
                        base = lo - pad if metric == "coverage" else 0.0
                        p.rect(x - 0.45 * width, base, x + 0.45 * width, v, color=color)
        for j, prior in enumerate(prior_names):
            fig.legend(prior, PALETTE[(j + 2) % len(PALETTE)])
        figs[metric] = fig
    return figs


def cmd_simulate(args) -> int:
    started = time.time()
    scenarios = builtin_scenarios()
    try:
        ids = parse_scenario_selection(args.scenarios, len(scenarios))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    prior_names = [p.strip() for p in args.priors.split(",") if p.strip()]
    for name in prior_names:
        if name not in PRIOR_CONFIG_NAMES:
            raise UsageError(f"unknown prior configuration {name!r} (choose from {', '.join(PRIOR_CONFIG_NAMES)})")
    if not prior_names:
        raise UsageError("--priors is empty")
    if args.replicates < 1:
        raise UsageError("--replicates must be at least 1")
    if args.engine not in ("laplace", "mcmc", "oracle"):
        raise UsageError("simulate supports --engine laplace, mcmc or oracle")
    mcmc_cfg = _mcmc_config(args) if args.engine == "mcmc" else None
    out = _out_dir(args.out)

    all_results: list[ScenarioMetrics] = []
    failed = []
    for sid in ids:
        sc = scenarios[sid - 1]
        t0 = time.perf_counter()
        res = run_scenario(sc, prior_names, engine=args.engine, n_replicates=args.replicates, seed=args.seed,
                           workers=args.workers, mcmc_config=mcmc_cfg)
        logger.info("scenario %d done in %.1fs", sid, time.perf_counter() - t0)
        for name in prior_names:
            all_results.append(res[name])
            if res[name].n_failures == res[name].n_replicates:
                failed.append((sid, name))

    _write(out / "metrics.csv", metrics_csv(all_results))
    blocks: dict[int, list[ScenarioMetrics]] = {}
    for r in all_results:
        blocks.setdefault((r.scenario.scenario_id - 1) // 9 + 1, []).append(r)
    for b, res in blocks.items():
        sc = res[0].scenario
        stem = f"block{b:02d}"
        _write(out / f"{stem}_metrics.csv", metrics_csv(res))
        _write(out / f"{stem}_records.csv", _block_records_csv(res))
        title = f"I={sc.n_studies}, Se={sc.true_se:g}, Sp={sc.true_sp:g}"
        for metric, fig in _block_figures(res, prior_names, title).items():
            fig.save(out / f"{stem}_{metric}.svg")
    _write_metadata(out, args, started, {"scenarios": ids, "priors": prior_names})
    if failed:
        for sid, name in failed:
            print(f"metadiag simulate: every replicate failed for scenario {sid}, prior {name}", file=sys.stderr)
        return EXIT_INFERENCE
    print(metrics_csv(all_results), end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sroc


def _sroc_figure(geom, title: str) -> Figure:
    fig = Figure(1, 1, panel_width=420, panel_height=420, title=title)
    p = fig.panel(0, 0, (0, 1), (0, 1), xlabel="1 - specificity", ylabel="sensitivity")
    n = np.array([s[2] for s in geom.study_points], dtype=float)
    radius = 3 + 9 * np.sqrt(n / n.max())
    for (x, y, _), r in zip(geom.study_points, radius):
        p.circle(x, y, r=float(r), color=PALETTE[1], opacity=0.45, stroke=PALETTE[0])
    p.line(geom.curve[:, 0], geom.curve[:, 1], color=PALETTE[0], width=1.8)
    p.line(geom.credible_region[:, 0], geom.credible_region[:, 1], color=PALETTE[2], dash="5,3", closed=True)
    p.line(geom.prediction_region[:, 0], geom.prediction_region[:, 1], color=PALETTE[3], dash="2,2",
           closed=True)
    p.circle(*geom.summary_point, r=4, color=PALETTE[5])
    fig.legend("SROC line", PALETTE[0])
    fig.legend("credible region", PALETTE[2], "5,3")
    fig.legend("prediction region", PALETTE[3], "2,2")
    return fig


def cmd_sroc(args) -> int:
    started = time.time()
    dataset = _load_dataset(args.data)
    priors = _prior_bundle(args)
    if dataset.has_covariates:
        raise UsageError("SROC output needs a covariate-free dataset")
    if not 0 < args.level < 1:
        raise UsageError("--level must lie in (0, 1)")
    if args.engine not in ("laplace", "mcmc"):
        raise UsageError("sroc supports --engine laplace or mcmc")
    out = _out_dir(args.out)
    try:
        if args.engine == "laplace":
            inputs = SrocInputs.from_laplace(posterior_marginals(dataset, priors), seed=args.seed)
        else:
            inputs = SrocInputs.from_mcmc(mcmc_oracle(dataset, priors, _mcmc_config(args)), seed=args.seed)
        geom = sroc_geometry(inputs, dataset, args.level)
    except INFERENCE_ERRORS as exc:
        print(f"metadiag sroc: inference failed: {exc}", file=sys.stderr)
        return EXIT_INFERENCE

    _write(out / "sroc.csv", geom.to_csv())
    _sroc_figure(geom, f"SROC: {dataset.name}").save(out / "sroc.svg")
    info = {
        "summary_point": {"fpr": geom.summary_point[0], "tpr": geom.summary_point[1]},
        "slope_logit": geom.slope,
        "level": args.level,
        "nesting_ok": geom.nesting_ok(),
        "credible_mass": region_mass(geom.credible, inputs.latent_draws),
        "prediction_mass": region_mass(geom.prediction, inputs.predictive_draws),
        "credible_extent": marginal_extent(geom.credible),
        "prediction_extent": marginal_extent(geom.prediction),
        "config_echo": _config_echo(args),
    }
    _write(out / "sroc_summary.json", json.dumps(info, indent=2) + "\n")
    _write_metadata(out, args, started)
    print(json.dumps({k: v for k, v in info.items() if k != "config_echo"}, indent=2))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _add_prior_flags(p):
    p.add_argument("--prior-var", default="pc-var(u=3, a=0.05)", help="prior for var_phi (and var_psi by default)")
    p.add_argument("--prior-var2", default=None, help="prior for var_psi; defaults to --prior-var")
    p.add_argument("--prior-cor", default="pc1", help="correlation prior spec or preset name")
    p.add_argument("--intercept-var", type=float, default=1000.0,
                   help="prior variance of the mean logits mu and nu (default 1000)")


def _add_mcmc_flags(p):
    p.add_argument("--mcmc-iters", type=int, default=200_000, help="MCMC iterations including burn-in (10%%)")
    p.add_argument("--mcmc-thin", type=int, default=10)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metadiag", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit the bivariate model to a study table")
    p.add_argument("--data", required=True, help="CSV with study,TP,FP,FN,TN columns, or 'telomerase'")
    _add_prior_flags(p)
    p.add_argument("--engine", choices=("laplace", "mcmc", "both"), default="laplace")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", default="metadiag-fit")
    _add_mcmc_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("priors", help="tabulate and plot priors, report solved parameters")
    p.add_argument("--prior-cor", dest="prior_cor_list", action="append",
                   help="correlation prior (repeatable; default pc0..pc3 and paul)")
    p.add_argument("--prior-var", dest="prior_var_list", action="append",
                   help="variance prior (repeatable; default pcvar and invgamma)")
    p.add_argument("--out", default="metadiag-priors")
    p.set_defaults(func=cmd_priors)

    p = sub.add_parser("simulate", help="run simulation scenarios")
    p.add_argument("--scenarios", default="1-9", help="ids such as '1-9,28' (1-81)")
    p.add_argument("--priors", default="pc0,paul", help=f"comma list from {', '.join(PRIOR_CONFIG_NAMES)}")
    p.add_argument("--replicates", type=int, default=100)
    p.add_argument("--engine", default="laplace", choices=("laplace", "mcmc", "oracle"))
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--workers", type=int, default=1, help="worker processes for replicates")
    p.add_argument("--out", default="metadiag-sim")
    _add_mcmc_flags(p)
    p.set_defaults(func=cmd_simulate, mcmc_iters=20_000, mcmc_thin=5)

    p = sub.add_parser("sroc", help="SROC curve with credible and prediction regions")
    p.add_argument("--data", required=True)
    _add_prior_flags(p)
    p.add_argument("--engine", choices=("laplace", "mcmc"), default="laplace")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", default="metadiag-sroc")
    _add_mcmc_flags(p)
    p.set_defaults(func=cmd_sroc)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"metadiag {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except INFERENCE_ERRORS as exc:
        print(f"metadiag {args.command}: inference failed: {exc}", file=sys.stderr)
        return EXIT_INFERENCE


if __name__ == "__main__":
    sys.exit(main())
