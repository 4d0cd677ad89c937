"""Command-line experiment runner.

Reproduces the benchmark protocol: for every tolerance and every realization,
run plain MLMC (fixing the finest level), MC at that level reusing the MLMC
samples, smoothed MLMC with both kernels, and stratified MLMC with and
without KDE smoothing for each configured stratum count; then aggregate the
costs into comparison tables.
"""

import argparse
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import cdf as cdf_mod
from .config import ExperimentConfig, load_config, preset
from .cost import aggregate, comparison_table, plot_data, plot_data_to_csv, table_to_csv
from .estimators import RunConfig, run_mc, run_mlmc, run_smlmc
from .smoothing import build_giles_polynomial


def _run_config(exp: ExperimentConfig, method: str, r: int, eps: float,
                run_idx: int) -> RunConfig:
    smoother = "none"
    if method.endswith("_giles"):
        smoother = "giles"
    elif method.endswith("_kde"):
        smoother = "kde"
    return RunConfig(
        eps=eps,
        l_star=exp.l_star,
        warmup=exp.warmup_for(method),
        smoother=smoother,
        giles_degree=exp.giles_degree,
        strata=r,
        seed=exp.seed + run_idx,
        work_model=exp.work_model,
        sampling_safety=exp.sampling_safety,
        calibration_fraction=exp.calibration_fraction,
        min_stratum_samples=exp.min_stratum_samples,
        batch_size=exp.batch_size,
    )


def _method_tag(method: str, r: int) -> str:
    if method in ("smlmc", "smlmc_kde"):
        return f"{method}_r{r}"
    return method


def cmd_run(args) -> int:
    exp = _load_experiment(args)
    out = Path(args.out or exp.out)
    plan = exp.run_plan()
    if args.dry_run:
        print(f"model={exp.model} work_model={exp.work_model} seed={exp.seed}")
        for eps in exp.eps_values:
            for k in range(exp.n_real):
                tags = ", ".join(_method_tag(m, r) for m, r in plan)
                print(f"eps={eps} run={k} seed={exp.seed + k}: {tags}")
        return 0
    out.mkdir(parents=True, exist_ok=True)
    (out / "reports").mkdir(exist_ok=True)
    model = exp.model_spec()
    dist = exp.distribution()
    grid = exp.node_grid()
    hierarchy = exp.hierarchy()
    failures = []
    costs: dict = {}
    for eps in exp.eps_values:
        ledgers: dict = {}
        for k in range(exp.n_real):
            mlmc_result = None
            for method, r in plan:
                tag = _method_tag(method, r)
                cfg = _run_config(exp, method, r, eps, k)
                try:
                    if method == "mc":
                        if mlmc_result is None:
                            raise RuntimeError("mc requires the plain mlmc run")
                        res = run_mc(model, dist, grid, hierarchy, cfg, mlmc_result)
                    elif method in ("smlmc", "smlmc_kde"):
                        strat = exp.stratification(r)
                        res = run_smlmc(model, dist, strat, grid, hierarchy, cfg)
                    else:
                        res = run_mlmc(model, dist, grid, hierarchy, cfg)
                        if method == "mlmc":
                            mlmc_result = res
                except Exception as exc:  # keep the remaining runs alive
                    failures.append(f"eps={eps} run={k} {tag}: {exc}")
                    print(f"FAILED eps={eps} run={k} {tag}: {exc}", file=sys.stderr)
                    continue
                ledgers.setdefault(tag, []).append(res.ledger)
                report = res.report()
                report["run"] = k
                rpath = out / "reports" / f"eps{eps:g}_run{k}_{tag}.json"
                with open(rpath, "w", newline="\n") as fh:
                    json.dump(report, fh, indent=2, sort_keys=True)
                    fh.write("\n")
                cdf_mod.cdf_to_csv(res.estimate, out / "reports" /
                                   f"eps{eps:g}_run{k}_{tag}_cdf.csv")
        costs[eps] = {tag: aggregate(lgs) for tag, lgs in ledgers.items()}
        print(f"eps={eps}: " + "  ".join(
            f"{m}={c:.4g}" for m, c in sorted(costs[eps].items())
        ))
    table = comparison_table(costs)
    table_to_csv(table, out / "costs.csv")
    with open(out / "summary.json", "w", newline="\n") as fh:
        json.dump({"model": exp.model, "work_model": exp.work_model,
                   "n_real": exp.n_real, "seed": exp.seed,
                   "table": table, "failures": failures},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    if args.plot_data:
        plot_data_to_csv(plot_data(costs), out / "plot_data.csv")
    if failures:
        print(f"{len(failures)} run(s) failed", file=sys.stderr)
        return 1
    return 0


def _reference_cache_key(exp: ExperimentConfig) -> str:
    payload = json.dumps([
        exp.model, exp.m0, exp.refinement, exp.l_star, exp.final_time,
        exp.domain_length, exp.qoi_scale, exp.cfl,
        exp.mu, exp.sigma, exp.w_lo, exp.w_hi,
        exp.grid_a, exp.grid_b, exp.grid_s,
        exp.ref_mesh_refine, exp.ref_quad_cells, exp.ref_quad_points,
        exp.ref_time_coarsen,
    ], sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def compute_reference(exp: ExperimentConfig, out: Path, verbose: bool = True,
                      convergence_report: bool = True):
    """Reference CDF for a configuration, cached on disk by parameter digest."""
    out.mkdir(parents=True, exist_ok=True)
    key = _reference_cache_key(exp)
    path = out / f"reference_{exp.model}_{key}.json"
    if path.exists():
        if verbose:
            print(f"reference cache hit: {path}")
        return cdf_mod.load_cdf_json(path), path
    ref = cdf_mod.reference_cdf(
        exp.model_spec(), exp.distribution(), exp.node_grid(), exp.hierarchy(),
        mesh_refine=exp.ref_mesh_refine, quad_cells=exp.ref_quad_cells,
        quad_points=exp.ref_quad_points, time_coarsen=exp.ref_time_coarsen,
    )
    if convergence_report:
        # self-convergence: delta against a half-density input grid
        half = cdf_mod.reference_cdf(
            exp.model_spec(), exp.distribution(), exp.node_grid(), exp.hierarchy(),
            mesh_refine=exp.ref_mesh_refine,
            quad_cells=max(exp.ref_quad_cells // 2, 1),
            quad_points=exp.ref_quad_points, time_coarsen=exp.ref_time_coarsen,
        )
        delta = float(np.abs(ref.raw - half.raw).max())
        ref.metadata["halving_delta"] = delta
        if verbose:
            print(f"input-grid halving delta: {delta:.3e}")
    cdf_mod.cdf_to_json(ref, path)
    if verbose:
        print(f"reference written: {path}")
    return ref, path


def cmd_reference(args) -> int:
    exp = _load_experiment(args)
    out = Path(args.out or exp.out)
    compute_reference(exp, out)
    return 0


def cmd_inspect(args) -> int:
    if args.subject == "giles-poly":
        poly = build_giles_polynomial(args.degree)
        payload = {"degree_d": poly.degree_d, "coeffs": poly.coeffs.tolist()}
        print(json.dumps(payload, indent=2, sort_keys=True))
        return 0
    exp = _load_experiment(args)
    if args.subject == "strata":
        strat = exp.stratification(args.r)
        print("stratum,lower,upper,prob")
        for i in range(strat.r):
            print(f"{i + 1},{strat.boundaries[i]:.12g},"
                  f"{strat.boundaries[i + 1]:.12g},{strat.probs[i]:.12g}")
        return 0
    if args.subject == "solver-field":
        model = exp.model_spec()
        field = model.solve_field(args.w, args.cells)
        if model.name == "diffusion":
            xs = np.linspace(0.0, model.domain_length, args.cells + 1)
        else:
            xs = (np.arange(args.cells) + 0.5) * model.domain_length / args.cells
        print("x,u")
        for x, u in zip(xs, field):
            print(f"{x:.12g},{u:.12g}")
        return 0
    print(f"unknown inspect subject {args.subject!r}", file=sys.stderr)
    return 2


def _load_experiment(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        exp = load_config(args.config)
    elif getattr(args, "preset", None):
        exp = preset(args.preset)
    else:
        raise SystemExit("need --preset or --config")
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "work_model", None):
        overrides["work_model"] = args.work_model
    if overrides:
        exp = replace(exp, **overrides)
    return exp


def _add_common(sub):
    sub.add_argument("--preset", choices=("diffusion", "burgers"))
    sub.add_argument("--config")
    sub.add_argument("--out")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--work-model", dest="work_model",
                     choices=("wallclock", "deterministic"))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="smlmc",
        description="CDF estimation benchmarks: MC vs multilevel and "
                    "stratified multilevel Monte Carlo",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    p_run = subs.add_parser("run", help="execute the benchmark protocol")
    _add_common(p_run)
    p_run.add_argument("--dry-run", action="store_true")
    p_run.add_argument("--plot-data", action="store_true")
    p_ref = subs.add_parser("reference", help="compute and cache the reference CDF")
    _add_common(p_ref)
    p_ins = subs.add_parser("inspect", help="dump internals for debugging")
    p_ins.add_argument("subject", choices=("giles-poly", "solver-field", "strata"))
    _add_common(p_ins)
    p_ins.add_argument("--degree", type=int, default=3)
    p_ins.add_argument("--r", type=int, default=8)
    p_ins.add_argument("--w", type=float, default=2.0)
    p_ins.add_argument("--cells", type=int, default=128)
    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    if args.command == "reference":
        return cmd_reference(args)
    return cmd_inspect(args)


if __name__ == "__main__":
    sys.exit(main())
