"""Config-driven experiment runner.

Every experiment is a subcommand writing ``<out>/<subcommand>.csv`` (plus
auxiliary CSVs), ``<out>/summary.json`` with the headline scalars and the
tolerances applied, and ``<out>/manifest.json`` with the fully resolved
configuration.  Outputs are a pure function of (config, seed): floats are
serialized with 17 significant digits, and reductions are ordered by task
index regardless of the worker count.

Exit codes: 0 ok, 1 invalid config, 2 hypothesis-failure flag (non-decay,
non-convergence, degenerate variance), 3 cross-check disagreement.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .clt import (
    clt_empirical,
    sigma2,
    sigma2_derivative,
    sigma2_derivative_fd,
)
from .cocycle import (
    MatrixCache,
    estimate_decay,
    lyapunov_top,
    sample_path,
)
from .config import Config, load_config
from .equivariant import pullback_density, stability_curve
from .errors import (
    ConfigError,
    CrossCheckError,
    DegenerateVarianceError,
    HypothesisFailureError,
)
from .response import (
    annealed_response,
    fd_response,
    quenched_response,
    remainder_curve,
)
from .spectral import grid_eval

SUBCOMMANDS = (
    "density",
    "stability",
    "response",
    "annealed",
    "variance",
    "clt",
    "spectrum",
)

DENSITY_GRID = 512

CSV_SCHEMAS = {
    "density.csv": ["eps", "path_id", "x", "density"],
    "stability.csv": ["eps", "path_id", "diff_w", "diff_h1", "residual", "n_used"],
    "response.csv": [
        "path_id",
        "observable",
        "value_series",
        "value_observable_side",
        "value_fd",
        "tail_bound",
        "n_terms",
    ],
    "annealed.csv": ["path_id", "symbol", "value_series", "value_fd"],
    "variance.csv": [
        "eps",
        "sigma2",
        "stderr",
        "dsigma2_formula",
        "dsigma2_fd",
        "ks_stat",
    ],
    "variance_terms.csv": ["eps", "n", "value"],
    "clt.csv": ["eps", "sigma2", "stderr", "dsigma2_formula", "dsigma2_fd", "ks_stat"],
    "clt_samples.csv": ["trial", "value", "sigma2"],
    "spectrum.csv": ["eps", "n", "value", "fit"],
}


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def write_csv(path: Path, name: str, rows) -> None:
    header = CSV_SCHEMAS[name]
    with open(path / name, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def _jsonable(obj):
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def write_json(path: Path, obj: dict) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


@contextmanager
def make_mapper(workers: int):
    if workers <= 1:
        yield map
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:

            def mapper(fn, items):
                return pool.map(fn, items)

            yield mapper


def _cache(cfg: Config) -> MatrixCache:
    return MatrixCache(cfg.family, cfg.numerics["modes"], cfg.numerics["oversample"])


def _decay(cfg: Config, cache: MatrixCache):
    return estimate_decay(
        cache,
        cfg.driving,
        0.0,
        cfg.numerics["decay_samples"],
        cfg.numerics["decay_steps"],
    )


def _n_terms_or_none(cfg: Config) -> int | None:
    n = int(cfg.numerics["n_terms"])
    return n if n > 0 else None


def _say(quiet: bool, msg: str) -> None:
    if not quiet:
        print(msg, file=sys.stderr)


# -- runners ---------------------------------------------------------------


def run_density(cfg: Config, mapper, quiet: bool):
    num, exp = cfg.numerics, cfg.experiment
    cache = _cache(cfg)
    eps = float(exp["eps"])
    depth, tol = num["pullback_depth"], num["pullback_tol"]
    samples = num["samples"]

    def one(draw: int):
        path = sample_path(cfg.driving, depth + 1, draw)
        return pullback_density(cache, path, eps, depth, tol)

    densities = list(mapper(one, range(samples)))
    rows = []
    xs = np.arange(DENSITY_GRID) / DENSITY_GRID
    for draw, dens in enumerate(densities):
        vals = grid_eval(dens.vec, DENSITY_GRID).real
        for x, v in zip(xs, vals):
            rows.append((eps, draw, x, v))
    all_converged = all(d.converged for d in densities)
    summary = {
        "eps": eps,
        "samples": samples,
        "max_residual": max(d.residual for d in densities),
        "max_n_used": max(d.n_used for d in densities),
        "min_density": min(d.grid_min for d in densities),
        "all_converged": all_converged,
        "tolerances": {"pullback_tol": tol},
    }
    code = 0 if all_converged else 2
    if not all_converged:
        summary["hypothesis_failure"] = "pullback did not converge on some paths"
    return {"density.csv": rows}, summary, code


def run_stability(cfg: Config, mapper, quiet: bool):
    num, exp = cfg.numerics, cfg.experiment
    cache = _cache(cfg)
    depth, tol = num["pullback_depth"], num["pullback_tol"]
    eps_list = [float(e) for e in exp["eps_list"]]
    res = stability_curve(
        cache, cfg.driving, eps_list, num["samples"], depth, tol, mapper
    )
    rows = [
        (r.eps, r.path_id, r.diff_w, r.diff_h1, r.residual, r.n_used)
        for r in res.rows
    ]
    summary = {
        "eps_list": eps_list,
        "samples": num["samples"],
        "sup_diff": {_fmt(e): res.sup_diff[e] for e in eps_list},
        "beta_vs_eps_log_eps": "degenerate" if res.degenerate else res.beta,
        "fitted_constant": res.fitted_constant(),
        "r2_vs_eps_log_eps": res.r2,
        "slope_vs_eps": "degenerate" if res.degenerate else res.slope_logeps,
        "r2_vs_eps": res.r2_logeps,
        "tolerances": {"pullback_tol": tol, "degenerate_diff": 1e-12},
    }
    flagged = any(r.residual > tol for r in res.rows)
    if flagged:
        summary["hypothesis_failure"] = "pullback did not converge on some rows"
    return {"stability.csv": rows}, summary, 2 if flagged else 0


def run_response(cfg: Config, mapper, quiet: bool):
    num, exp = cfg.numerics, cfg.experiment
    cache = _cache(cfg)
    depth, tol = num["pullback_depth"], num["pullback_tol"]
    decay = _decay(cfg, cache)
    n_terms = _n_terms_or_none(cfg)
    observables = cfg.observables()
    labels = cfg.observable_labels()
    samples = num["samples"]
    eps_fd = float(exp["eps_fd"])
    cross_error = None
    rows = []

    obs_side_paths = int(exp.get("observable_side_paths", 8))

    def one(task):
        draw, iobs = task
        phi = observables[iobs]
        window = depth + (n_terms or 120) + 2
        path = sample_path(cfg.driving, window, draw)
        with_obs = draw < obs_side_paths
        try:
            res = quenched_response(
                cache, path, phi, decay, n_terms, depth, tol,
                observable_side=with_obs,
            )
            err = None
        except CrossCheckError as exc:
            res = quenched_response(
                cache, path, phi, decay, n_terms, depth, tol, observable_side=False
            )
            res.value_observable = math.nan
            err = str(exc)
        fd = fd_response(cache, path, phi, eps_fd, depth, tol)
        return draw, iobs, res, fd, err

    tasks = [(d, i) for i in range(len(observables)) for d in range(samples)]
    rel_errs = []
    for draw, iobs, res, fd, err in mapper(one, tasks):
        rows.append(
            (
                draw,
                labels[iobs],
                res.value,
                res.value_observable,
                fd,
                res.tail_bound,
                res.n_terms,
            )
        )
        if err and cross_error is None:
            cross_error = err
        rel_errs.append(abs(res.value - fd) / max(abs(fd), 1e-300))
    _say(quiet, f"response: {len(rows)} rows")

    rem_eps = [float(e) for e in exp["remainder_eps"]]
    rem_sup, _ = remainder_curve(
        cache, cfg.driving, rem_eps, samples, decay, n_terms, depth, tol, mapper
    )
    summary = {
        "samples": samples,
        "observables": labels,
        "value_series_mean": float(np.mean([r[2] for r in rows])),
        "value_fd_mean": float(np.mean([r[4] for r in rows])),
        "max_rel_err_vs_fd": float(np.max(rel_errs)),
        "remainder_sup": {_fmt(e): rem_sup[e] for e in rem_eps},
        "decay": {
            "dprime": decay.dprime,
            "lambdaprime": decay.lambdaprime,
            "fit_residual": decay.fit_residual,
        },
        "tolerances": {
            "pullback_tol": tol,
            "eps_fd": eps_fd,
            "tail_target": num["tail_target"],
            "cross_check_factor": 10.0,
        },
    }
    if cross_error:
        summary["cross_check_error"] = cross_error
        return {"response.csv": rows}, summary, 3
    return {"response.csv": rows}, summary, 0


def run_annealed(cfg: Config, mapper, quiet: bool):
    num, exp = cfg.numerics, cfg.experiment
    cache = _cache(cfg)
    depth, tol = num["pullback_depth"], num["pullback_tol"]
    decay = _decay(cfg, cache)
    ann = annealed_response(
        cache,
        cfg.driving,
        cfg.observables(),
        num["samples"],
        decay,
        _n_terms_or_none(cfg),
        depth,
        tol,
        float(exp["eps_fd"]),
        with_fd=True,
        mapper=mapper,
    )
    rows = [(draw, sym, va, fd) for draw, sym, va, fd in ann.rows]
    combined = math.hypot(ann.stderr, ann.fd_stderr)
    summary = {
        "samples": num["samples"],
        "value": ann.value,
        "stderr": ann.stderr,
        "value_fd": ann.fd_value,
        "fd_stderr": ann.fd_stderr,
        "paired_se": ann.paired_se,
        "diff": ann.value - ann.fd_value,
        "diff_se_units_fd": abs(ann.value - ann.fd_value) / max(ann.fd_stderr, 1e-300),
        "diff_se_units_combined": abs(ann.value - ann.fd_value) / max(combined, 1e-300),
        "n_terms": ann.n_terms,
        "tail_bound": ann.tail_bound,
        "tolerances": {
            "pullback_tol": tol,
            "eps_fd": float(exp["eps_fd"]),
            "se_factor": 3.0,
        },
    }
    return {"annealed.csv": rows}, summary, 0


def run_variance(cfg: Config, mapper, quiet: bool):
    num, exp = cfg.numerics, cfg.experiment
    cache = _cache(cfg)
    depth, tol = num["pullback_depth"], num["pullback_tol"]
    eps = float(exp["eps"])
    n_corr = num["n_corr"]
    observables = cfg.observables()
    try:
        var = sigma2(
            cache, cfg.driving, observables, eps, num["samples"], n_corr, depth, tol,
            mapper,
        )
    except HypothesisFailureError as exc:
        summary = {"hypothesis_failure": str(exc), "eps": eps}
        return {"variance.csv": [], "variance_terms.csv": []}, summary, 2
    dformula = math.nan
    dfd = math.nan
    extra = {}
    if eps == 0.0:
        decay = _decay(cfg, cache)
        dres = sigma2_derivative(
            cache, cfg.driving, observables, num["samples"], decay, n_corr,
            _n_terms_or_none(cfg), depth, tol, mapper,
        )
        dformula = dres.value
        dfd = sigma2_derivative_fd(
            cache, cfg.driving, observables, num["samples"],
            float(exp["eps_fd_variance"]), n_corr, depth, tol, mapper,
        )
        extra = {
            "dsigma2_stderr": dres.stderr,
            "max_abs_term_I": dres.max_abs_I,
            "dsigma2_rel_err_vs_fd": abs(dformula - dfd) / max(abs(dfd), 1e-300),
            "n_terms": dres.n_terms,
        }
    rows = [(eps, var.sigma2, var.stderr, dformula, dfd, math.nan)]
    term_rows = [(eps, n + 1, abs(t)) for n, t in enumerate(var.terms)]
    summary = {
        "eps": eps,
        "sigma2": var.sigma2,
        "stderr": var.stderr,
        "zeroth_term": var.zeroth,
        "n_corr": n_corr,
        "samples": num["samples"],
        "dsigma2_formula": dformula,
        "dsigma2_fd": dfd,
        **extra,
        "tolerances": {
            "pullback_tol": tol,
            "negative_tol": 1e-8,
            "eps_fd_variance": float(exp["eps_fd_variance"]),
        },
    }
    return {"variance.csv": rows, "variance_terms.csv": term_rows}, summary, 0


def run_clt(cfg: Config, mapper, quiet: bool):
    num, exp = cfg.numerics, cfg.experiment
    cache = _cache(cfg)
    depth, tol = num["pullback_depth"], num["pullback_tol"]
    eps = float(exp["eps"])
    n = int(exp["orbit_length"])
    trials = int(exp["trials"])
    observables = cfg.observables()
    try:
        var = sigma2(
            cache, cfg.driving, observables, eps, num["samples"], num["n_corr"],
            depth, tol, mapper,
        )
        path = sample_path(cfg.driving, n + depth + 1, 0)
        res = clt_empirical(
            cache, cfg.driving, observables, eps, path, n, trials,
            sigma2_value=var.sigma2, depth=depth, tol=tol,
        )
    except (DegenerateVarianceError, HypothesisFailureError) as exc:
        summary = {"hypothesis_failure": str(exc), "eps": eps}
        return {"clt.csv": [], "clt_samples.csv": []}, summary, 2
    rows = [(eps, var.sigma2, var.stderr, math.nan, math.nan, res.ks_stat)]
    sample_rows = [(i, v, res.sigma2_used) for i, v in enumerate(res.samples)]
    summary = {
        "eps": eps,
        "sigma2": res.sigma2_used,
        "sigma2_stderr": var.stderr,
        "ks_stat": res.ks_stat,
        "orbit_length": n,
        "trials": trials,
        "tolerances": {"pullback_tol": tol, "degenerate_sigma2": 1e-6},
    }
    return {"clt.csv": rows, "clt_samples.csv": sample_rows}, summary, 0


def run_spectrum(cfg: Config, mapper, quiet: bool):
    num, exp = cfg.numerics, cfg.experiment
    cache = _cache(cfg)
    rows = []
    per_eps = {}
    code = 0
    for eps in [float(e) for e in exp["lyapunov_eps"]]:
        try:
            dec = estimate_decay(
                cache, cfg.driving, eps, num["decay_samples"], num["decay_steps"]
            )
        except HypothesisFailureError as exc:
            per_eps[_fmt(eps)] = {"hypothesis_failure": str(exc)}
            code = 2
            continue
        steps = int(exp["lyapunov_steps"])
        path = sample_path(cfg.driving, steps, 0)
        lam = lyapunov_top(cache, path, eps, steps)
        for nstep, rate in enumerate(dec.rates):
            fit = dec.dprime * math.exp(-dec.lambdaprime * nstep)
            rows.append((eps, nstep, rate, fit))
        per_eps[_fmt(eps)] = {
            "lambdaprime": dec.lambdaprime,
            "dprime": dec.dprime,
            "fit_residual": dec.fit_residual,
            "lyapunov": lam,
        }
    summary = {
        "per_eps": per_eps,
        "lyapunov_steps": int(exp["lyapunov_steps"]),
        "tolerances": {"decay_floor": 1e-15, "fit_floor": 1e-13},
    }
    return {"spectrum.csv": rows}, summary, code


RUNNERS = {
    "density": run_density,
    "stability": run_stability,
    "response": run_response,
    "annealed": run_annealed,
    "variance": run_variance,
    "clt": run_clt,
    "spectrum": run_spectrum,
}


def build_manifest(cfg: Config, subcommand: str, files: list[str]) -> dict:
    return {
        "subcommand": subcommand,
        "seed": cfg.driving.seed,
        "config": cfg.resolved,
        "csv_schemas": {name: CSV_SCHEMAS[name] for name in files},
        "versions": {
            "rdslab": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": ".".join(str(v) for v in sys.version_info[:3]),
        },
        "rotation_quantum": 65536,
        "float_format": ".17g",
    }


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="rdslab",
        description="Experiments on transfer-operator cocycles of random "
        "expanding circle maps.",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="TOML config path")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override driving seed")
    parser.add_argument(
        "--samples", type=int, default=None, help="override MC sample count"
    )
    parser.add_argument(
        "--workers", type=int, default=None, help="worker thread count"
    )
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = _override(cfg, seed=args.seed)
        if args.samples is not None:
            cfg.numerics["samples"] = args.samples
            cfg.resolved["numerics"]["samples"] = args.samples
        if args.workers is not None:
            cfg.numerics["workers"] = args.workers
            cfg.resolved["numerics"]["workers"] = args.workers
        if args.out is not None:
            cfg.experiment["out_dir"] = args.out
            cfg.resolved["experiment"]["out_dir"] = args.out
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runner = RUNNERS[args.subcommand]
    try:
        with make_mapper(int(cfg.numerics["workers"])) as mapper:
            files, summary, code = runner(cfg, mapper, args.quiet)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except HypothesisFailureError as exc:
        print(f"hypothesis failure: {exc}", file=sys.stderr)
        return 2
    except CrossCheckError as exc:
        print(f"cross-check failure: {exc}", file=sys.stderr)
        return 3

    for name, rows in files.items():
        write_csv(out, name, rows)
    write_json(out / "summary.json", summary)
    write_json(out / "manifest.json", build_manifest(cfg, args.subcommand, list(files)))
    _say(args.quiet, f"{args.subcommand}: wrote {', '.join(files)} in {out}")
    return code


def _override(cfg: Config, seed: int) -> Config:
    from .config import build_config

    raw = cfg.resolved
    raw["driving"]["seed"] = seed
    return build_config(raw)


if __name__ == "__main__":
    sys.exit(main())
