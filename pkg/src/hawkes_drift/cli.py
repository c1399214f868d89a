"""Batch front end: JSON config ingestion, replicated experiment
orchestration with deterministic RNG provenance, and plot-ready tables."""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .asymptotics import clt_marginal_check, lln_check
from .infer import OptimizerConfig, fisher_hessian, fisher_outer, fit_mle
from .model import (HawkesParams, ThetaBox, branching_matrix,
                    family_from_descriptor, spectral_radius)
from .sde import CovariatePath, model_from_descriptor, simulate_path
from .simulate import EventSequence, thin_simulate
from .stattest import (SUBSAMPLE_EXPONENT, corrected_residuals,
                       gof_corrected_ks, wald_equal, wald_one_coef)
from .streams import substream, substream_key

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

TASKS = ("simulate", "fit", "test-coef", "test-equal", "gof", "lln", "clt")

_TOP_KEYS = {
    "schema_version", "name", "model", "xi", "x0", "baseline", "true_params",
    "box", "horizon", "grid_step", "replicates", "master_seed", "tasks",
    "test", "output_dir", "allow_unstable", "lln_clt",
}
_MODEL_KEYS = {"model", "dim"}
_BASELINE_KEYS = {"family", "center", "scale", "x_range"}
_PARAM_KEYS = {"mu", "alpha", "beta"}
_BOX_KEYS = {"mu", "alpha", "beta"}
_TEST_KEYS = {"alpha", "fisher", "pairs", "coef_index", "theta0",
              "subsample_exponent", "side"}
_LLN_CLT_KEYS = {"T", "replicates", "stationary_draws", "k", "clt_T",
                 "clt_replicates"}


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# Config validation
# ---------------------------------------------------------------------------


def _check_keys(obj: dict, allowed: set, where: str, errors: list) -> None:
    unknown = sorted(set(obj) - allowed)
    if unknown:
        errors.append(f"unknown keys in {where}: {', '.join(unknown)}")


def validate_config(cfg: dict) -> list:
    """Full schema, stability and envelope validation; returns error strings."""
    errors: list = []
    if not isinstance(cfg, dict):
        return ["config must be a JSON object"]
    _check_keys(cfg, _TOP_KEYS, "config", errors)
    if cfg.get("schema_version") != 1:
        errors.append("schema_version must be 1")
    for key in ("name", "model", "baseline", "true_params", "box", "horizon",
                "grid_step", "replicates", "master_seed", "tasks", "output_dir",
                "xi"):
        if key not in cfg:
            errors.append(f"missing required key: {key}")
    if errors:
        return errors
    _check_keys(cfg["model"], _MODEL_KEYS, "model", errors)
    _check_keys(cfg["baseline"], _BASELINE_KEYS, "baseline", errors)
    _check_keys(cfg["true_params"], _PARAM_KEYS, "true_params", errors)
    _check_keys(cfg["box"], _BOX_KEYS, "box", errors)
    if "test" in cfg:
        _check_keys(cfg["test"], _TEST_KEYS, "test", errors)
    if "lln_clt" in cfg:
        _check_keys(cfg["lln_clt"], _LLN_CLT_KEYS, "lln_clt", errors)
    if not isinstance(cfg["horizon"], (int, float)) or cfg["horizon"] <= 0:
        errors.append("horizon must be a positive number")
    if not isinstance(cfg["grid_step"], (int, float)) or cfg["grid_step"] <= 0:
        errors.append("grid_step must be a positive number")
    if not isinstance(cfg["replicates"], int) or cfg["replicates"] < 1:
        errors.append("replicates must be a positive integer")
    if not isinstance(cfg["master_seed"], int):
        errors.append("master_seed must be an integer")
    bad = [t for t in cfg["tasks"] if t not in TASKS]
    if bad:
        errors.append(f"unknown tasks: {', '.join(bad)}")
    if errors:
        return errors
    try:
        exp = build_experiment(cfg)
    except Exception as exc:
        errors.append(f"config does not assemble: {exc}")
        return errors
    rho = spectral_radius(branching_matrix(exp.params))
    if rho >= 1.0 and not cfg.get("allow_unstable", False):
        errors.append(
            f"true parameters violate the stability condition: spectral "
            f"radius of alpha/beta is {rho:.6f} >= 1 (set allow_unstable to "
            "override)"
        )
    if exp.family.g_minus is not None and exp.family.g_minus <= 0:
        errors.append("baseline envelope lower bound over the box is not positive")
    if not exp.box.contains(exp.params.flatten()):
        errors.append("true parameters fall outside the declared box")
    return errors


@dataclass
class Experiment:
    model: object
    xi: object
    x0: np.ndarray
    family: object
    params: HawkesParams
    box: ThetaBox
    horizon: float
    h: float


def build_experiment(cfg: dict) -> Experiment:
    model = model_from_descriptor(cfg["model"])
    mu_box = np.asarray(cfg["box"]["mu"], dtype=float)
    family = family_from_descriptor(cfg["baseline"], mu_box=mu_box)
    tp = cfg["true_params"]
    params = HawkesParams(tp["mu"], np.asarray(tp["alpha"], dtype=float),
                          np.asarray(tp["beta"], dtype=float))
    box = ThetaBox.from_blocks(mu_box, cfg["box"]["alpha"], cfg["box"]["beta"],
                               params.d, params.block_dims)
    x0 = np.asarray(cfg.get("x0", np.zeros(model.m)), dtype=float)
    return Experiment(model=model, xi=cfg["xi"], x0=x0, family=family,
                      params=params, box=box, horizon=float(cfg["horizon"]),
                      h=float(cfg["grid_step"]))


# ---------------------------------------------------------------------------
# Replicate pipeline
# ---------------------------------------------------------------------------


def run_replicate(cfg: dict, rep: int) -> dict:
    """Simulate one replicate and run every per-replicate task on it."""
    exp = build_experiment(cfg)
    master = cfg["master_seed"]
    tasks = cfg["tasks"]
    test_cfg = cfg.get("test", {})
    rng_sim = substream(master, rep, "simulate")
    path = simulate_path(exp.model, exp.xi, exp.x0, exp.horizon, exp.h, rng_sim)
    events = thin_simulate(exp.params, exp.family, path, rng_sim,
                           require_stable=not cfg.get("allow_unstable", False))
    out: dict = {"replicate": rep, "n_events": events.n_events}
    if "simulate" in tasks:
        out["events"] = {"times": events.times.tolist(),
                         "marks": (events.marks + 1).tolist()}
        out["path"] = {"t0": path.t0, "h": path.h,
                       "values": path.values.tolist()}
    needs_fit = any(t in tasks for t in ("fit", "test-coef", "test-equal", "gof"))
    if not needs_fit:
        return out
    fit = fit_mle(exp.family, path, events, exp.box, d=exp.params.d,
                  optimizer_cfg=OptimizerConfig(seed=master & 0x7FFFFFFF))
    out["fit"] = fit.to_dict()
    out["theta_hat"] = fit.theta_hat.flatten().tolist()
    if any(t in tasks for t in ("test-coef", "test-equal")):
        variant = test_cfg.get("fisher", "outer")
        fisher = (fisher_outer if variant == "outer" else fisher_hessian)(
            fit.theta_hat, exp.family, path, events)
        alpha = test_cfg.get("alpha", 0.05)
        side = test_cfg.get("side", "two-sided")
        if "test-coef" in tasks:
            report = wald_one_coef(fit, fisher, events.T,
                                   int(test_cfg["coef_index"]),
                                   float(test_cfg["theta0"]), alpha=alpha,
                                   side=side)
            out["test_coef"] = report.to_dict()
        if "test-equal" in tasks:
            reports = []
            for (i, j) in test_cfg.get("pairs", []):
                reports.append(wald_equal(fit, fisher, events.T, int(i), int(j),
                                          alpha=alpha, side=side).to_dict())
            out["test_equal"] = reports
    if "gof" in tasks:
        rng_gof = substream(master, rep, "gof")
        res = corrected_residuals(fit, exp.family, path, events, rng=rng_gof)
        alpha = test_cfg.get("alpha", 0.05)
        exponent = test_cfg.get("subsample_exponent", SUBSAMPLE_EXPONENT)
        full = gof_corrected_ks(res, subsample="full", alpha=alpha)
        sub = gof_corrected_ks(res, subsample="power", rng=rng_gof, alpha=alpha,
                               exponent=exponent)
        out["gof"] = {"full": full.to_dict(), "subsampled": sub.to_dict(),
                      "n_residuals": len(res)}
    return out


def _replicate_star(args):
    return run_replicate(*args)


# ---------------------------------------------------------------------------
# Collector
# ---------------------------------------------------------------------------


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, header: list, rows: list) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _collect(cfg: dict, results: list, out_dir: Path) -> list:
    """Write per-replicate artifacts and the aggregate tables, in replicate
    order so reruns are byte-identical."""
    outputs = []
    tasks = cfg["tasks"]
    agg = out_dir / "aggregate"
    if "simulate" in tasks:
        for res in results:
            rep = res["replicate"]
            ev = res["events"]
            ev_path = out_dir / "simulate" / f"rep{rep:04d}_events.csv"
            _write_csv(ev_path, ["t", "mark"],
                       [[repr(float(t)), str(int(m))]
                        for t, m in zip(ev["times"], ev["marks"])])
            pa = res["path"]
            vals = np.asarray(pa["values"])
            cov_path = out_dir / "simulate" / f"rep{rep:04d}_covariate.csv"
            _write_csv(cov_path,
                       ["t"] + [f"x{i+1}" for i in range(vals.shape[1])],
                       [[repr(float(pa["t0"] + k * pa["h"]))]
                        + [repr(float(v)) for v in vals[k]]
                        for k in range(vals.shape[0])])
            outputs += [str(ev_path), str(cov_path)]
    if "fit" in tasks:
        rows = []
        for res in results:
            rep = res["replicate"]
            fit_path = out_dir / "fit" / f"rep{rep:04d}_fit.json"
            _write_json(fit_path, res["fit"])
            outputs.append(str(fit_path))
            rows.append([str(rep), str(res["n_events"])]
                        + [_fmt(v) for v in res["theta_hat"]]
                        + [_fmt(res["fit"]["loglik"]),
                           str(int(res["fit"]["converged"]))])
        p = len(results[0]["theta_hat"]) if results else 0
        header = (["replicate", "n_events"] + [f"theta_{k}" for k in range(p)]
                  + ["loglik", "converged"])
        path = agg / "estimates.csv"
        _write_csv(path, header, rows)
        outputs.append(str(path))
    if "test-coef" in tasks:
        rows = []
        for res in results:
            rep = res["replicate"]
            rp = out_dir / "test_coef" / f"rep{rep:04d}_report.json"
            _write_json(rp, res["test_coef"])
            outputs.append(str(rp))
            r = res["test_coef"]
            rows.append([str(rep), _fmt(r["statistic"]), _fmt(r["p_value"]),
                         str(int(r["reject_at_alpha"]))])
        path = agg / "test_coef_stats.csv"
        _write_csv(path, ["replicate", "z", "p_value", "reject"], rows)
        outputs.append(str(path))
    if "test-equal" in tasks:
        rows = []
        for res in results:
            rep = res["replicate"]
            rp = out_dir / "test_equal" / f"rep{rep:04d}_reports.json"
            _write_json(rp, res["test_equal"])
            outputs.append(str(rp))
            for r in res["test_equal"]:
                rows.append([str(rep), str(r["metadata"]["index_i"]),
                             str(r["metadata"]["index_j"]),
                             _fmt(r["statistic"]), _fmt(r["p_value"]),
                             str(int(r["reject_at_alpha"]))])
        path = agg / "test_equal_stats.csv"
        _write_csv(path, ["replicate", "index_i", "index_j", "z", "p_value",
                          "reject"], rows)
        outputs.append(str(path))
    if "gof" in tasks:
        rows = []
        for res in results:
            rep = res["replicate"]
            rp = out_dir / "gof" / f"rep{rep:04d}_reports.json"
            _write_json(rp, res["gof"])
            outputs.append(str(rp))
            g = res["gof"]
            rows.append([str(rep), str(g["n_residuals"]),
                         str(g["subsampled"]["metadata"]["n_used"]),
                         _fmt(g["full"]["p_value"]),
                         _fmt(g["subsampled"]["p_value"])])
        path = agg / "gof_pvalues.csv"
        _write_csv(path, ["replicate", "n_residuals", "n_subsample",
                          "p_full", "p_subsampled"], rows)
        outputs.append(str(path))
    return outputs


def _run_global_tasks(cfg: dict, out_dir: Path) -> list:
    """lln / clt checks run once over their own replicate loop."""
    outputs = []
    tasks = cfg["tasks"]
    if not any(t in tasks for t in ("lln", "clt")):
        return outputs
    exp = build_experiment(cfg)
    opts = cfg.get("lln_clt", {})
    master = cfg["master_seed"]
    if "lln" in tasks:
        rng = substream(master, 0, "lln")
        check = lln_check(exp.params, exp.family, exp.model, exp.xi,
                          T=float(opts.get("T", cfg["horizon"])),
                          replicates=int(opts.get("replicates", 30)),
                          rng=rng, k=float(opts.get("k", 3.0)),
                          n_draws=int(opts.get("stationary_draws", 4000)),
                          h=exp.h, x0=exp.x0)
        path = out_dir / "lln" / "limit_check.json"
        _write_json(path, check.to_dict())
        outputs.append(str(path))
    if "clt" in tasks:
        rng = substream(master, 0, "clt")
        report = clt_marginal_check(
            exp.params, exp.family, exp.model, exp.xi,
            T=float(opts.get("clt_T", cfg["horizon"])),
            replicates=int(opts.get("clt_replicates", 100)),
            rng=rng, n_draws=int(opts.get("stationary_draws", 4000)),
            h=exp.h, x0=exp.x0)
        path = out_dir / "clt" / "marginal_check.json"
        _write_json(path, report.to_dict())
        outputs.append(str(path))
        devs = np.asarray(report.metadata["scaled_deviations"])
        rows = [[str(r)] + [_fmt(v) for v in devs[r]]
                for r in range(devs.shape[0])]
        csv_path = out_dir / "aggregate" / "clt_deviations.csv"
        _write_csv(csv_path,
                   ["replicate"] + [f"dev_{i+1}" for i in range(devs.shape[1])],
                   rows)
        outputs.append(str(csv_path))
    return outputs


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _config_sha(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def cmd_validate(config_path: str) -> int:
    with open(config_path) as fh:
        cfg = json.load(fh)
    errors = validate_config(cfg)
    report = {"ok": not errors, "errors": errors}
    if not errors:
        exp = build_experiment(cfg)
        rho = spectral_radius(branching_matrix(exp.params))
        report["stability"] = {"spectral_radius": rho, "margin": 1.0 - rho}
        report["envelope"] = {"g_minus": exp.family.g_minus,
                              "g_plus": exp.family.g_plus}
    json.dump(report, sys.stdout, indent=1, sort_keys=True)
    sys.stdout.write("\n")
    return EXIT_OK if not errors else EXIT_VALIDATION


def cmd_run(config_path: str, jobs: int = 1,
            out_override: Optional[str] = None) -> int:
    with open(config_path) as fh:
        cfg = json.load(fh)
    errors = validate_config(cfg)
    if errors:
        json.dump({"ok": False, "errors": errors}, sys.stderr, indent=1)
        sys.stderr.write("\n")
        return EXIT_VALIDATION
    out_dir = Path(out_override or cfg["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    failed_marker = out_dir / ".failed"
    if failed_marker.exists():
        failed_marker.unlink()
    n = cfg["replicates"]
    per_rep = [t for t in cfg["tasks"] if t not in ("lln", "clt")]
    try:
        results = []
        if per_rep:
            if jobs > 1:
                with ProcessPoolExecutor(max_workers=jobs) as pool:
                    results = list(pool.map(_replicate_star,
                                            [(cfg, r) for r in range(n)]))
            else:
                results = [run_replicate(cfg, r) for r in range(n)]
        outputs = _collect(cfg, results, out_dir)
        outputs += _run_global_tasks(cfg, out_dir)
    except Exception as exc:
        report = {"error": type(exc).__name__, "message": str(exc),
                  "traceback": traceback.format_exc()}
        _write_json(out_dir / "error_report.json", report)
        failed_marker.touch()
        sys.stderr.write(f"run failed: {exc}\n")
        return EXIT_NUMERICAL
    manifest = {
        "name": cfg["name"],
        "version": __version__,
        "config": cfg,
        "config_sha256": _config_sha(cfg),
        "seed_rule": ("default_rng(SeedSequence(master_seed, "
                      "spawn_key=(replicate, crc32(task))))"),
        "replicate_seeds": [
            {"replicate": r,
             "spawn_keys": {t: list(substream_key(r, t))
                            for t in ("simulate", "gof")}}
            for r in range(n)
        ],
        "outputs": sorted(outputs),
    }
    _write_json(out_dir / "manifest.json", manifest)
    return EXIT_OK


def _load_dataset(events_csv: str, covariate_csv: str):
    path = CovariatePath.from_csv(covariate_csv)
    events = EventSequence.from_csv(events_csv, T=path.T)
    return path, events


def _load_model_spec(model_json: str):
    with open(model_json) as fh:
        spec = json.load(fh)
    mu_box = np.asarray(spec["box"]["mu"], dtype=float)
    family = family_from_descriptor(spec["baseline"], mu_box=mu_box)
    d = int(spec["d"])
    box = ThetaBox.from_blocks(mu_box, spec["box"]["alpha"], spec["box"]["beta"],
                               d, [family.block_dim] * d)
    return family, d, box


def cmd_fit(events_csv: str, covariate_csv: str, model_json: str,
            out: Optional[str] = None, seed: int = 0) -> int:
    try:
        path, events = _load_dataset(events_csv, covariate_csv)
        family, d, box = _load_model_spec(model_json)
        fit = fit_mle(family, path, events, box, d=d,
                      optimizer_cfg=OptimizerConfig(seed=seed))
    except Exception as exc:
        sys.stderr.write(f"fit failed: {exc}\n")
        return EXIT_NUMERICAL
    payload = fit.to_dict()
    if out:
        _write_json(Path(out), payload)
    else:
        json.dump(payload, sys.stdout, indent=1, sort_keys=True)
        sys.stdout.write("\n")
    return EXIT_OK


def cmd_gof(events_csv: str, covariate_csv: str, model_json: str,
            alpha: float = 0.05, seed: int = 0,
            exponent: float = SUBSAMPLE_EXPONENT,
            out: Optional[str] = None,
            residuals_out: Optional[str] = None) -> int:
    try:
        path, events = _load_dataset(events_csv, covariate_csv)
        family, d, box = _load_model_spec(model_json)
        fit = fit_mle(family, path, events, box, d=d,
                      optimizer_cfg=OptimizerConfig(seed=seed))
        rng = np.random.default_rng(seed)
        res = corrected_residuals(fit, family, path, events, rng=rng)
        full = gof_corrected_ks(res, subsample="full", alpha=alpha)
        sub = gof_corrected_ks(res, subsample="power", rng=rng, alpha=alpha,
                               exponent=exponent)
    except Exception as exc:
        sys.stderr.write(f"gof failed: {exc}\n")
        return EXIT_NUMERICAL
    payload = {"fit": fit.to_dict(), "full": full.to_dict(),
               "subsampled": sub.to_dict()}
    if residuals_out:
        _write_csv(Path(residuals_out), ["i", "e_raw", "e_corrected"],
                   [[str(i + 1), _fmt(res.raw[i]), _fmt(res.values[i])]
                    for i in range(len(res))])
    if out:
        _write_json(Path(out), payload)
    else:
        json.dump(payload, sys.stdout, indent=1, sort_keys=True)
        sys.stdout.write("\n")
    return EXIT_OK


def main(argv: Optional[list] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="hawkes-drift",
        description="Simulation and inference for Hawkes processes with a "
                    "diffusion-modulated baseline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a batch experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.add_argument("--out", default=None)

    p_val = sub.add_parser("validate", help="validate a config without running")
    p_val.add_argument("config")

    p_fit = sub.add_parser("fit", help="fit one dataset")
    p_fit.add_argument("events_csv")
    p_fit.add_argument("covariate_csv")
    p_fit.add_argument("model_json")
    p_fit.add_argument("--out", default=None)
    p_fit.add_argument("--seed", type=int, default=0)

    p_gof = sub.add_parser("gof", help="corrected goodness-of-fit on one dataset")
    p_gof.add_argument("events_csv")
    p_gof.add_argument("covariate_csv")
    p_gof.add_argument("model_json")
    p_gof.add_argument("--alpha", type=float, default=0.05)
    p_gof.add_argument("--seed", type=int, default=0)
    p_gof.add_argument("--exponent", type=float, default=SUBSAMPLE_EXPONENT)
    p_gof.add_argument("--out", default=None)
    p_gof.add_argument("--residuals-out", default=None)

    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, jobs=args.jobs, out_override=args.out)
    if args.command == "validate":
        return cmd_validate(args.config)
    if args.command == "fit":
        return cmd_fit(args.events_csv, args.covariate_csv, args.model_json,
                       out=args.out, seed=args.seed)
    if args.command == "gof":
        return cmd_gof(args.events_csv, args.covariate_csv, args.model_json,
                       alpha=args.alpha, seed=args.seed, exponent=args.exponent,
                       out=args.out, residuals_out=args.residuals_out)
    return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
