"""Command-line interface: validation, experiment orchestration, artifacts.

Subcommands: sample-fbm, simulate, poisson, rate, limit-study, mc, validate.
Exit codes: 0 success, 2 validation failure, 3 numerical failure.  The
default output directory is the environment variable FRACRATE_OUT (falling
back to the working directory).  Every run writes a machine-readable
manifest (config digest, seed, versions, timestamp) beside its outputs;
re-running a config with the same seed reproduces every output byte except
the manifest timestamp.
"""
from __future__ import annotations

import argparse
import datetime
import json
import os
import sys

import numpy as np

from . import __version__
from .cameron_martin import HurstContext
from .config import hard_failures, load_config, validate
from .errors import FracrateError, InvalidInputError, ValidationFailure
from .fbm_gen import sample_fbm, sample_noise_bundle
from .gridpath import GridPath
from .ldp_harness import (
    HFunctional,
    LaplaceExperiment,
    estimate_laplace,
    estimate_rare_event,
    linear_case_prediction,
    stabilization_diagnostic,
)
from .multiscale_sim import default_substeps, simulate
from .poisson_cell import (
    domain_halfwidth,
    effective_q,
    invariant_density_1d,
    solve_poisson_1d,
)
from .rate_fn import (
    build_limit_drift,
    eval_rate_explicit,
    eval_rate_fw_half,
    eval_rate_general,
    eval_rate_tilde_half,
    h_limit_study,
)


def _out_dir(args):
    base = args.out_dir if getattr(args, "out_dir", None) else os.environ.get("FRACRATE_OUT", ".")
    os.makedirs(base, exist_ok=True)
    return base


def _ensure_parent(path):
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    return path


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2, default=float)
        fh.write("\n")


def _write_manifest(out_dir, config, extra=None):
    payload = {
        "config_sha256": config.digest() if config else None,
        "config_path": config.path if config else None,
        "seed": config.seed if config else None,
        "versions": {
            "fracrate": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    if extra:
        payload.update(extra)
    _write_json(os.path.join(out_dir, "manifest.json"), payload)


def _write_rows_csv(path, rows, columns):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            cells = []
            for col in columns:
                val = row.get(col, "")
                cells.append(repr(float(val)) if isinstance(val, (int, float)) and not isinstance(val, bool) else str(val))
            fh.write(",".join(cells) + "\n")


def _validated_config(args):
    config = load_config(args.config)
    checks = validate(config)
    failures = hard_failures(checks)
    for chk in checks:
        print(f"[{chk.status}] {chk.name}: {chk.detail}")
    if failures and not getattr(args, "force", False):
        raise ValidationFailure(
            f"{len(failures)} hard validation failure(s); rerun with --force to override"
        )
    return config


def _measure_and_drift(config):
    spec = config.make_spec(*config.schedule[-1])
    tol = config.tol
    L = config.poisson["L"] or domain_halfwidth(spec.f, spec.tau, sigmas=tol["default_domain_sigmas"])
    mu = invariant_density_1d(spec.f, spec.tau, L, config.poisson["n"], tail_ratio=tol["tail_mass_ratio"])
    psol = solve_poisson_1d(spec.b, spec.f, spec.tau, mu, centering_tol=tol["centering_tol"])
    drift = build_limit_drift(spec, psol, mu, nbins=int(tol["u2_bins"]))
    return spec, mu, psol, drift


def _load_or_default_path(config, drift):
    csv = config.experiment["path_csv"]
    if csv:
        return GridPath.from_csv(csv)
    # documented default: the admissible cubic with normalized displacement t^2
    n = config.grid["n"]
    horizon = config.grid["horizon"]
    dt = horizon / (n - 1)
    t = dt * np.arange(n)
    x0 = np.atleast_1d(config.model["x0"])[0]
    s1 = float(np.atleast_2d(drift.sigma1_bar(np.atleast_1d(config.model["x0"])))[0, 0])
    return GridPath(0.0, dt, x0 + s1 * t**3 / 3.0)


def cmd_sample_fbm(args):
    path = sample_fbm(args.hurst, args.n, args.horizon, dim=args.dim, seed=args.seed)
    path.to_csv(args.out)
    print(f"wrote {args.out}: fBm H={args.hurst}, n={args.n}, dim={args.dim}")
    return 0


def cmd_simulate(args):
    config = _validated_config(args)
    out_dir = _out_dir(args)
    spec_tmpl = config.make_spec(*config.schedule[-1])
    _, mu, psol, drift = _measure_and_drift(config)
    n = config.grid["n"]
    horizon = config.grid["horizon"]
    dt = horizon / (n - 1)
    trials = getattr(args, "trials", None) or config.experiment["trials"]
    seed = config.seed if getattr(args, "seed", None) is None else args.seed

    # homogenized reference by Euler on the averaged drift
    ref = np.empty((n, spec_tmpl.m))
    ref[0] = spec_tmpl.x0
    for i in range(n - 1):
        ref[i + 1] = ref[i] + dt * (drift.cbar(ref[i]) + np.atleast_1d(drift.grad_psi_g_bar(ref[i])))

    summary = {"schedule": [], "trials": trials, "reference": "homogenized Euler"}
    for idx, (eps, eta) in enumerate(config.schedule):
        spec = config.make_spec(eps, eta)
        sub = config.grid["substeps"] or default_substeps(dt, eta, factor=config.tol["substep_factor"], cap=int(config.tol["max_substeps"]))
        n_fine = (n - 1) * sub + 1
        sup_errs = []
        aborted = 0
        terminals = []
        for trial in range(trials):
            noise = sample_noise_bundle(spec.hurst, n_fine, horizon, k=spec.k, ell=spec.ell, seed=seed, stream=(idx, trial))
            try:
                xp, yp = simulate(spec, noise, substeps=sub)
            except FracrateError:
                aborted += 1
                continue
            sup_errs.append(float(np.max(np.abs(xp.values - ref))))
            terminals.append(float(xp.values[-1, 0]))
            xp.to_csv(os.path.join(out_dir, f"trajectory_eps{idx}_trial{trial}.csv"))
        summary["schedule"].append(
            {
                "eps": eps,
                "eta": eta,
                "substeps": sub,
                "aborted": aborted,
                "mean_sup_error": float(np.mean(sup_errs)) if sup_errs else None,
                "terminal_mean": float(np.mean(terminals)) if terminals else None,
                "terminal_std": float(np.std(terminals)) if terminals else None,
            }
        )
    _write_json(os.path.join(out_dir, "simulate_summary.json"), summary)
    _write_manifest(out_dir, config, {"command": "simulate"})
    print(f"wrote {out_dir}/simulate_summary.json")
    return 0


def cmd_poisson(args):
    config = _validated_config(args)
    out = _ensure_parent(args.out) if args.out else os.path.join(_out_dir(args), "poisson.json")
    spec, mu, psol, _ = _measure_and_drift(config)
    eq = effective_q(spec, psol, mu, spec.x0)
    payload = {
        "grid": mu.grid.tolist(),
        "density": mu.density.tolist(),
        "psi": psol.psi.tolist(),
        "grad_psi": psol.grad.tolist(),
        "qqt_bar": eq["qqt_bar"].tolist(),
        "min_eigenvalue": eq["min_eigenvalue"],
        "degenerate": eq["degenerate"],
    }
    _write_json(out, payload)
    _write_manifest(os.path.dirname(out) or ".", config, {"command": "poisson"})
    print(f"wrote {out}")
    return 0


def cmd_rate(args):
    config = _validated_config(args)
    out = _ensure_parent(args.out) if args.out else os.path.join(_out_dir(args), "rate.json")
    _, mu, psol, drift = _measure_and_drift(config)
    phi = GridPath.from_csv(args.path) if args.path else _load_or_default_path(config, drift)
    method = args.method or config.experiment["method"]
    hurst = args.hurst or config.model["hurst"]
    if method == "explicit":
        res = eval_rate_explicit(phi, drift, HurstContext(hurst, phi.n, phi.dt))
    elif method == "general":
        res = eval_rate_general(phi, drift, HurstContext(hurst, phi.n, phi.dt))
    elif method == "fw-half":
        res = eval_rate_fw_half(phi, drift)
    elif method == "tilde-half":
        res = eval_rate_tilde_half(phi, drift)
    else:
        raise InvalidInputError(f"unknown method {method!r}")
    payload = {"value": res.value, "method": res.method, "hurst": hurst, "diagnostics": res.diagnostics}
    _write_json(out, payload)
    _write_manifest(os.path.dirname(out) or ".", config, {"command": "rate"})
    print(f"S = {res.value:.6g} ({method}); wrote {out}")
    return 0


def cmd_limit_study(args):
    config = _validated_config(args)
    out = _ensure_parent(args.out) if args.out else os.path.join(_out_dir(args), "limit_study.csv")
    _, mu, psol, drift = _measure_and_drift(config)
    phi = GridPath.from_csv(args.path) if args.path else _load_or_default_path(config, drift)
    h_list = [float(h) for h in args.hurst_list.split(",")] if args.hurst_list else config.experiment["hurst_list"]
    study = h_limit_study(phi, drift, h_list)
    rows = []
    for row, gap_t, gap_f in zip(study["rows"], study["gap_to_tilde"], study["gap_to_fw"]):
        rows.append(
            {
                "hurst": row["hurst"],
                "value": row["value"],
                "tilde_half": study["tilde_half"],
                "fw_half": study["fw_half"],
                "gap_to_tilde": gap_t,
                "gap_to_fw": gap_f,
            }
        )
    _write_rows_csv(out, rows, ["hurst", "value", "tilde_half", "fw_half", "gap_to_tilde", "gap_to_fw"])
    _write_manifest(os.path.dirname(out) or ".", config, {"command": "limit-study"})
    print(f"wrote {out}")
    return 0


def cmd_mc(args):
    config = _validated_config(args)
    out = _ensure_parent(args.out) if args.out else os.path.join(_out_dir(args), f"mc_{args.mode}.csv")
    exp_cfg = config.experiment
    if args.mode == "laplace":
        h = HFunctional(
            kind=exp_cfg["h_kind"],
            target=exp_cfg["h_target"],
            rho=exp_cfg["h_rho"],
            cap=exp_cfg["h_cap"],
            height=exp_cfg["h_height"],
            width=exp_cfg["h_width"],
        )
        exp = LaplaceExperiment(
            make_spec=config.make_spec,
            eps_schedule=config.schedule,
            h=h,
            trials=exp_cfg["trials"],
            seed=config.seed,
            n_grid=config.grid["n"],
            horizon=config.grid["horizon"],
            substeps=config.grid["substeps"] or None,
            engine=exp_cfg["engine"],
        )
        rows = estimate_laplace(exp)
        _write_rows_csv(out, rows, ["eps", "eta", "estimate", "std_error", "trials", "aborted", "engine"])
    else:
        spec0 = config.make_spec(*config.schedule[0])
        pred = None
        try:
            sigma_bar = None
            if spec0.sigma1_depends_on_y():
                _, mu, psol, drift = _measure_and_drift(config)
                sigma_bar = float(np.atleast_2d(drift.sigma1_bar(spec0.x0))[0, 0])
            pred = linear_case_prediction(
                spec0, exp_cfg["threshold"], config.grid["horizon"], sigma_bar=sigma_bar
            )
        except FracrateError:
            pred = None
        rows = estimate_rare_event(
            config.make_spec,
            exp_cfg["threshold"],
            config.schedule,
            exp_cfg["trials"],
            seed=config.seed,
            n_grid=config.grid["n"],
            horizon=config.grid["horizon"],
            substeps=config.grid["substeps"] or None,
            engine=exp_cfg["engine"],
            prediction=pred,
        )
        cols = [
            "eps", "eta", "trials", "aborted", "hits", "p_hat", "bound_only",
            "wilson_low", "wilson_high", "neg_eps_log_p", "p_upper",
            "neg_eps_log_p_lower", "prediction", "engine", "note",
        ]
        _write_rows_csv(out, rows, cols)
        ok, diffs = stabilization_diagnostic(rows)
        print(f"stabilization diagnostic: {'pass' if ok else 'warn'} (diffs {diffs})")
    _write_manifest(os.path.dirname(out) or ".", config, {"command": f"mc {args.mode}"})
    print(f"wrote {out}")
    return 0


def cmd_run(args):
    """Dispatch on the experiment kind declared in the config."""
    config = load_config(args.config)
    kind = config.kind
    if kind == "none":
        out_dir = _out_dir(args)
        _write_manifest(out_dir, config, {"command": "run (no experiment)"})
        print(f"no experiment declared; wrote {out_dir}/manifest.json")
        return 0
    dispatch = {
        "simulate": cmd_simulate,
        "poisson": cmd_poisson,
        "rate": cmd_rate,
        "limit-study": cmd_limit_study,
    }
    if kind in dispatch:
        return dispatch[kind](args)
    if kind in ("laplace", "rare-event"):
        args.mode = kind
        return cmd_mc(args)
    raise InvalidInputError(f"cannot dispatch experiment kind {kind!r}")


def cmd_validate(args):
    config = load_config(args.config)
    checks = validate(config)
    for chk in checks:
        print(f"[{chk.status}] {chk.name}: {chk.detail}")
    if args.json:
        _write_json(args.json, {"checks": [c.as_dict() for c in checks]})
    if hard_failures(checks):
        return 2
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fracrate",
        description="Fractional slow-fast simulation and large-deviations toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample-fbm", help="sample one fractional Brownian path to CSV")
    p.add_argument("--hurst", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample_fbm)

    p = sub.add_parser("simulate", help="slow-fast trajectories along the schedule")
    p.add_argument("--config", "--spec", dest="config", required=True)
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--trials", type=int, help="override the config trial count")
    p.add_argument("--out-dir")
    p.add_argument("--force", action="store_true", help="run despite validation failures")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("poisson", help="invariant density, corrector and effective Gram")
    p.add_argument("--config", "--spec", dest="config", required=True)
    p.add_argument("--out")
    p.add_argument("--out-dir")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_poisson)

    p = sub.add_parser("rate", help="evaluate a rate functional on a path")
    p.add_argument("--config", "--spec", dest="config", required=True)
    p.add_argument("--path", help="GridPath CSV; defaults to the built-in admissible cubic")
    p.add_argument("--method", choices=["explicit", "general", "fw-half", "tilde-half"])
    p.add_argument("--hurst", type=float)
    p.add_argument("--out")
    p.add_argument("--out-dir")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("limit-study", help="rate values along a Hurst schedule")
    p.add_argument("--config", "--spec", dest="config", required=True)
    p.add_argument("--path")
    p.add_argument("--hurst-list", help="comma list, e.g. 0.6,0.55,0.52")
    p.add_argument("--out")
    p.add_argument("--out-dir")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_limit_study)

    p = sub.add_parser("mc", help="Monte Carlo Laplace / rare-event experiments")
    p.add_argument("mode", choices=["laplace", "rare-event"])
    p.add_argument("--config", "--spec", dest="config", required=True)
    p.add_argument("--out")
    p.add_argument("--out-dir")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("run", help="dispatch on the experiment kind in the config")
    p.add_argument("--config", "--spec", dest="config", required=True)
    p.add_argument("--path")
    p.add_argument("--method", choices=["explicit", "general", "fw-half", "tilde-half"])
    p.add_argument("--hurst", type=float)
    p.add_argument("--hurst-list")
    p.add_argument("--out")
    p.add_argument("--out-dir")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="numeric spot checks of the standing conditions")
    p.add_argument("--config", "--spec", dest="config", required=True)
    p.add_argument("--json", help="also write the report to this JSON file")
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationFailure as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return 2
    except FracrateError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

