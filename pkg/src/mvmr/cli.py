"""Command-line front end: simulate, estimate, loci, figures.

Every subcommand is side-effect-free outside its output directory and
deterministic for a fixed seed and thread count (thread counts do not
change results, only wall time).  Exit codes: 0 success, 2 usage or file
format error, 3 non-identifiable model, 4 numerical failure.

The default output directory is taken from the MVMR_OUTPUT_DIR
environment variable when set, else ``./mvmr_out``.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import graph
from .errors import MvmrError, ScenarioError, SummaryFormatError, UnderdeterminedError
from .estimators import (
    ESTIMATORS,
    SummaryStatistics,
    estimate,
    identifiability_diagnostics,
    p_values,
    standard_errors,
)
from .loci import PipelineConfig, run_pipeline
from .simulate import (
    empirical_pc1_share,
    expand_scenario_config,
    load_scenario_file,
    pc1_explained_variance,
    pleiotropy_experiment,
    run_replicates,
    scenario_from_dict,
    two_sample_experiment,
    type1_power,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NON_IDENTIFIABLE = 3
EXIT_NUMERICAL = 4

REPLICATE_FIELDS = ["replicate", "estimator", "exposure", "true_effect", "estimate", "se", "p_value"]


def _default_out():
    return os.environ.get("MVMR_OUTPUT_DIR", "mvmr_out")


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return int(value)
    return value


def _write_rows(path, fieldnames, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _parse_estimators(text):
    names = [n.strip() for n in text.split(",") if n.strip()]
    for n in names:
        if n not in ESTIMATORS:
            raise ScenarioError(f"unknown estimator {n!r}; choose from {sorted(ESTIMATORS)}")
    return tuple(names)


# ---------------------------------------------------------------------------
# simulate


def _seed_for(config, args):
    seed = args.seed if args.seed is not None else config.get("seed")
    if seed is None:
        raise ScenarioError(
            "a seed is required: pass --seed or set 'seed' in the scenario file"
        )
    return int(seed)


def _run_replicates_kind(config, args, out_dir, estimators, seed):
    cells = expand_scenario_config(config)
    collect_f = bool(config.get("conditional_f", False))
    rows = []
    summaries = []
    for index, (labels, scenario) in enumerate(cells):
        summary = run_replicates(
            scenario,
            estimators=estimators,
            replicates=args.replicates,
            seed=seed + index,
            threads=args.threads,
            collect_conditional_f=collect_f,
        )
        rows.extend(summary.iter_rows(labels))
        summaries.append({"labels": labels, **summary.summary_dict()})
    label_fields = sorted({k for cell in summaries for k in cell["labels"]})
    _write_rows(
        os.path.join(out_dir, "replicates.csv"),
        label_fields + REPLICATE_FIELDS,
        rows,
    )
    _write_json(os.path.join(out_dir, "summary.json"), {"cells": summaries, "seed": seed})
    return summaries


def _run_pleiotropy_kind(config, args, out_dir, estimators, seed):
    scenario = scenario_from_dict(config)
    result = pleiotropy_experiment(
        scenario,
        estimators=estimators,
        replicates=args.replicates,
        seed=seed,
        threads=args.threads,
    )
    rows = []
    cells = []
    for value, correct, missp in zip(
        result.hidden_effect_grid, result.correct, result.misspecified
    ):
        for tag, summary in (("full", correct), ("misspecified", missp)):
            rows.extend(summary.iter_rows({"hidden_effect": value, "model": tag}))
            cells.append(
                {"labels": {"hidden_effect": value, "model": tag}, **summary.summary_dict()}
            )
    _write_rows(
        os.path.join(out_dir, "replicates.csv"),
        ["hidden_effect", "model"] + REPLICATE_FIELDS,
        rows,
    )
    _write_json(os.path.join(out_dir, "summary.json"), {"cells": cells, "seed": seed})
    return cells


def _run_two_sample_kind(config, args, out_dir, estimators, seed):
    config = dict(config)
    n_exposure_grid = config.pop("n_samples")
    n_outcome_grid = config.pop("n_outcome")
    if not isinstance(n_exposure_grid, (list, tuple)):
        n_exposure_grid = [n_exposure_grid]
    if not isinstance(n_outcome_grid, (list, tuple)):
        n_outcome_grid = [n_outcome_grid]
    scenario = scenario_from_dict({**config, "n_samples": int(n_exposure_grid[0])})
    results = two_sample_experiment(
        scenario,
        n_exposure_grid,
        n_outcome_grid,
        estimators=estimators,
        replicates=args.replicates,
        seed=seed,
        threads=args.threads,
    )
    rows = []
    cells = []
    for (ne, no), summary in results.items():
        labels = {"n_exposure": ne, "n_outcome": no}
        rows.extend(summary.iter_rows(labels))
        cells.append({"labels": labels, **summary.summary_dict()})
    _write_rows(
        os.path.join(out_dir, "replicates.csv"),
        ["n_exposure", "n_outcome"] + REPLICATE_FIELDS,
        rows,
    )
    _write_json(os.path.join(out_dir, "summary.json"), {"cells": cells, "seed": seed})
    return cells


def _run_type1_power_kind(config, args, out_dir, estimators, seed):
    config = dict(config)
    alpha = float(config.pop("alpha", 0.05))
    null_effects = config.pop("null_effects", None)
    if null_effects is None:
        raise ScenarioError("type1_power scenarios need 'null_effects'")
    alt = scenario_from_dict(config)
    null = scenario_from_dict({**config, "true_effects": null_effects})
    replicates = args.replicates or alt.replicates
    outcome = type1_power(
        null,
        alt,
        replicates=replicates,
        alpha=alpha,
        seed=seed,
        estimators=estimators,
        threads=args.threads,
    )
    rows = []
    for tag, summary in (("null", outcome["null"]), ("alternative", outcome["alternative"])):
        rows.extend(summary.iter_rows({"scenario": tag}))
    _write_rows(
        os.path.join(out_dir, "replicates.csv"), ["scenario"] + REPLICATE_FIELDS, rows
    )
    payload = {
        "alpha": alpha,
        "tested_exposure": outcome["exposure"],
        "replicates": outcome["replicates"],
        "rates": outcome["rates"],
        "seed": seed,
    }
    _write_json(os.path.join(out_dir, "summary.json"), payload)
    return [payload]


def _run_pca_kind(config, args, out_dir, estimators, seed):
    config = dict(config)
    correlations = config.pop("correlations", None)
    if correlations is None:
        raise ScenarioError("pca scenarios need 'correlations'")
    repetitions = int(config.pop("pca_repetitions", 2000))
    n = int(config.get("n_samples", 2000))
    if args.replicates:
        repetitions = args.replicates
    rows = []
    for i, r in enumerate(correlations):
        expected = pc1_explained_variance(float(r))
        observed = empirical_pc1_share(
            float(r), n=n, repetitions=repetitions, seed=seed + i
        )
        rows.append(
            {
                "correlation": float(r),
                "expected_share": expected,
                "empirical_share": observed,
                "n": n,
                "repetitions": repetitions,
            }
        )
    _write_rows(
        os.path.join(out_dir, "pc1_explained_variance.csv"),
        ["correlation", "expected_share", "empirical_share", "n", "repetitions"],
        rows,
    )
    _write_json(os.path.join(out_dir, "summary.json"), {"cells": rows, "seed": seed})
    return rows


_KIND_RUNNERS = {
    "replicates": _run_replicates_kind,
    "pleiotropy": _run_pleiotropy_kind,
    "two_sample": _run_two_sample_kind,
    "type1_power": _run_type1_power_kind,
    "pca": _run_pca_kind,
}


def cmd_simulate(args):
    try:
        kind, config = load_scenario_file(args.scenario)
        seed = _seed_for(config, args)
        estimators = _parse_estimators(args.estimators)
        if config.get("estimators") and args.estimators == "ls,gmm":
            estimators = _parse_estimators(",".join(config["estimators"]))
    except (ScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    out_dir = args.out or _default_out()
    os.makedirs(out_dir, exist_ok=True)
    try:
        cells = _KIND_RUNNERS[kind](config, args, out_dir, estimators, seed)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MvmrError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    worst = 0.0
    for cell in cells:
        for est, stats_block in cell.get("estimators", {}).items():
            worst = max(worst, stats_block["failure_rate"])
            bias = ", ".join(f"{b:+.4f}" for b in stats_block["bias"])
            label = cell.get("labels", {})
            print(
                f"{est} {label}: bias [{bias}] "
                f"failure rate {stats_block['failure_rate']:.3f}"
            )
    if kind in ("type1_power", "pca"):
        print(f"wrote {out_dir}")
    if worst > args.max_failure_rate:
        print(
            f"failure rate {worst:.3f} exceeds cap {args.max_failure_rate}",
            file=sys.stderr,
        )
        return EXIT_NUMERICAL
    return EXIT_OK


# ---------------------------------------------------------------------------
# estimate


def _stats_from_json(path):
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    allowed = {"sigma_EX", "sigma_EY", "sigma_EE", "n_exposure", "n_outcome", "exposure_names", "instrument_names"}
    unknown = set(payload) - allowed
    if unknown:
        raise ScenarioError(f"unknown statistics keys: {sorted(unknown)}")
    return SummaryStatistics(
        np.asarray(payload["sigma_EX"], dtype=float),
        np.asarray(payload["sigma_EY"], dtype=float),
        np.asarray(payload["sigma_EE"], dtype=float),
        n_exposure=payload.get("n_exposure"),
        n_outcome=payload.get("n_outcome"),
        exposure_names=tuple(payload["exposure_names"]) if payload.get("exposure_names") else None,
        instrument_names=tuple(payload["instrument_names"]) if payload.get("instrument_names") else None,
    )


def _stats_from_diagram(path, instruments, exposures, outcome):
    with open(path, encoding="utf-8") as fh:
        diagram, sem = graph.parse_diagram_text(fh.read())
    sigma = graph.implied_covariance(sem)
    d = np.sqrt(np.diag(sigma))
    corr = sigma / np.outer(d, d)  # population mode works on the standardized scale
    iE = [diagram.index(e) for e in instruments]
    iX = [diagram.index(x) for x in exposures]
    iY = diagram.index(outcome)
    stats = SummaryStatistics(
        corr[np.ix_(iE, iX)],
        corr[iE, iY],
        corr[np.ix_(iE, iE)],
        exposure_names=tuple(exposures),
        instrument_names=tuple(instruments),
    )
    check = None
    if len(instruments) == len(exposures):
        check = graph.check_instrumental_set(diagram, instruments, exposures, outcome)
    else:
        subset, check = graph.find_instrumental_subset(
            diagram, instruments, exposures, outcome
        )
    return stats, check


def cmd_estimate(args):
    try:
        estimators = _parse_estimators(args.estimators)
        check = None
        if args.stats:
            stats = _stats_from_json(args.stats)
        elif args.diagram:
            if not (args.instruments and args.exposures and args.outcome):
                print(
                    "error: --diagram needs --instruments, --exposures and --outcome",
                    file=sys.stderr,
                )
                return EXIT_USAGE
            stats, check = _stats_from_diagram(
                args.diagram,
                [s for s in args.instruments.split(",") if s],
                [s for s in args.exposures.split(",") if s],
                args.outcome,
            )
        else:
            print("error: provide --stats or --diagram", file=sys.stderr)
            return EXIT_USAGE
    except (OSError, ScenarioError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MvmrError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    report = identifiability_diagnostics(stats)
    payload = {
        "diagnostics": report.as_dict(),
        "estimates": {},
        "exposures": list(stats.exposure_names or (f"X{k+1}" for k in range(stats.n_exposures))),
    }
    if check is not None:
        payload["instrumental_set"] = {
            "satisfied": check.satisfied,
            "failed_condition": check.failed_condition,
            "detail": check.detail,
        }
    try:
        for name in estimators:
            result = estimate(stats, name)
            block = {"effects": [float(v) for v in result.effects]}
            if stats.n_outcome is not None:
                standard_errors(result, stats)
                p_values(result)
                block["standard_errors"] = [float(v) for v in result.standard_errors]
                block["p_values"] = [float(v) for v in result.p_values]
                block["bonferroni_significant"] = [
                    bool(v) for v in result.bonferroni_significant
                ]
            payload["estimates"][name] = block
    except UnderdeterminedError as exc:
        payload["error"] = str(exc)
        print(json.dumps(payload, sort_keys=True, indent=2))
        print(f"non-identifiable: {exc}", file=sys.stderr)
        return EXIT_NON_IDENTIFIABLE
    except (MvmrError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    text = json.dumps(payload, sort_keys=True, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text + "\n")
    print(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# loci


def cmd_loci(args):
    config = PipelineConfig(
        radius=args.radius,
        gwas_p=args.gwas_p,
        nonzero_ld=args.nonzero_ld,
        perfect_ld_r2=args.perfect_ld_r2,
        prune_r2=args.prune_r2,
        causal_threshold=args.causal_threshold,
        bonferroni=args.bonferroni,
        estimator=args.estimator,
    )
    out_dir = args.out or _default_out()
    try:
        summary = run_pipeline(
            args.eqtl, args.gwas, args.ld, out_dir, config, threads=args.threads
        )
    except SummaryFormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MvmrError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for warning in summary["warnings"]:
        print(f"warning: {warning}", file=sys.stderr)
    print(
        f"analysed {summary['n_loci']} loci, {summary['n_calls']} gene-tissue calls -> {out_dir}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# figures


def bundled_scenarios():
    import importlib.resources as resources

    root = resources.files("mvmr").joinpath("data", "scenarios")
    return sorted(
        (entry.name[: -len(".json")], entry)
        for entry in root.iterdir()
        if entry.name.endswith(".json")
    )


def cmd_figures(args):
    only = {n.strip() for n in args.only.split(",")} if args.only else None
    out_root = args.out or _default_out()
    ran = []
    for name, entry in bundled_scenarios():
        if only is not None and name not in only:
            continue
        out_dir = os.path.join(out_root, name)
        os.makedirs(out_dir, exist_ok=True)
        scenario_path = os.path.join(out_dir, "scenario.json")
        with open(scenario_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(entry.read_text(encoding="utf-8"))
        sub_args = argparse.Namespace(
            scenario=scenario_path,
            seed=args.seed,
            replicates=args.replicates,
            threads=args.threads,
            out=out_dir,
            estimators=args.estimators,
            max_failure_rate=args.max_failure_rate,
        )
        print(f"== scenario {name} ==")
        code = cmd_simulate(sub_args)
        if code != EXIT_OK:
            return code
        ran.append(name)
    if only is not None and not ran:
        print(f"error: no bundled scenario matches {sorted(only)}", file=sys.stderr)
        return EXIT_USAGE
    print(f"completed {len(ran)} scenario(s) -> {out_root}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mvmr",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser(
        "simulate", help="run a scenario file and write replicate CSV + summary JSON"
    )
    sim.add_argument("--scenario", required=True, help="scenario JSON file")
    sim.add_argument("--seed", type=int, default=None, help="master RNG seed (required unless the scenario file carries one)")
    sim.add_argument("--replicates", type=int, default=None, help="override the scenario replicate count")
    sim.add_argument("--threads", type=int, default=1, help="worker threads; results are identical for any value")
    sim.add_argument("--out", default=None, help="output directory (default $MVMR_OUTPUT_DIR or ./mvmr_out)")
    sim.add_argument("--estimators", default="ls,gmm", help="comma list from: ls, gmm, twmr")
    sim.add_argument("--max-failure-rate", type=float, default=0.2, help="exit 4 when any cell's replicate failure rate exceeds this")
    sim.set_defaults(func=cmd_simulate)

    est = sub.add_parser("estimate", help="estimate causal effects from summary statistics or a diagram file")
    est.add_argument("--stats", default=None, help="summary statistics JSON (sigma_EX, sigma_EY, sigma_EE, n_outcome...)")
    est.add_argument("--diagram", default=None, help="diagram text file (population mode)")
    est.add_argument("--instruments", default=None, help="comma list of instrument nodes (diagram mode)")
    est.add_argument("--exposures", default=None, help="comma list of exposure nodes (diagram mode)")
    est.add_argument("--outcome", default=None, help="outcome node (diagram mode)")
    est.add_argument("--estimators", default="ls,gmm", help="comma list from: ls, gmm, twmr")
    est.add_argument("--out", default=None, help="also write the JSON result to this file")
    est.set_defaults(func=cmd_estimate)

    loc = sub.add_parser("loci", help="run the locus pipeline on eQTL/GWAS/LD summary files")
    loc.add_argument("--eqtl", required=True, help="eQTL TSV (snp chrom pos gene tissue beta se maf fdr)")
    loc.add_argument("--gwas", required=True, help="GWAS TSV (snp chrom pos beta se pval n)")
    loc.add_argument("--ld", required=True, help="LD file: SNP id line + square r matrix")
    loc.add_argument("--out", default=None, help="output directory (default $MVMR_OUTPUT_DIR or ./mvmr_out)")
    loc.add_argument("--threads", type=int, default=1, help="per-locus worker threads")
    loc.add_argument("--radius", type=int, default=500_000, help="locus radius around the lead SNP in bp")
    loc.add_argument("--gwas-p", type=float, default=5e-8, help="genome-wide significance threshold")
    loc.add_argument("--nonzero-ld", type=float, default=0.01, help="|r| above this counts as linked to the lead")
    loc.add_argument("--perfect-ld-r2", type=float, default=0.99, help="r^2 at or above this counts as perfect LD with the lead")
    loc.add_argument("--prune-r2", type=float, default=0.95, help="near-duplicate pruning r^2 threshold")
    loc.add_argument("--causal-threshold", type=float, default=0.1, help="|effect| at or above this is called causal")
    loc.add_argument("--bonferroni", type=float, default=3e-4, help="p-value threshold for the multiple-testing flag")
    loc.add_argument("--estimator", default="ls", choices=sorted(ESTIMATORS), help="estimator for locus analyses")
    loc.set_defaults(func=cmd_loci)

    fig = sub.add_parser("figures", help="batch-run every bundled scenario (figure-ready CSV per scenario)")
    fig.add_argument("--out", default=None, help="output root (default $MVMR_OUTPUT_DIR or ./mvmr_out)")
    fig.add_argument("--seed", type=int, default=None, help="master seed applied to every scenario")
    fig.add_argument("--replicates", type=int, default=None, help="override replicate counts (quick runs)")
    fig.add_argument("--threads", type=int, default=1)
    fig.add_argument("--estimators", default="ls,gmm")
    fig.add_argument("--only", default=None, help="comma list of scenario names to run")
    fig.add_argument("--max-failure-rate", type=float, default=0.2)
    fig.set_defaults(func=cmd_figures)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
