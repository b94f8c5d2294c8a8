"""Command-line surface: power, simulate, threshold, estimate, goi-oracle.

Every command reads a JSON config (--config), applies flag overrides, and
writes delimited output plus a JSON sidecar echoing the fully resolved
config, so any run can be reproduced byte-for-byte from its sidecar.
Floats are written with 17 significant digits.  Machine-readable errors go
to stderr as JSON; the exit code is 0 only if all computations converged.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import emu, randfield
from .bundle import read_bundle
from .errors import (BundleFormatError, ConfigError, ParameterError,
                     PeakPowerError)
from .estimate import (covariance_from_kernel_estimate, estimate_kernel,
                       fit_quadratic_mean, standardize)
from .model import (NEG_INF, CovarianceModel, DomainSpec, GridSpec, MeanModel,
                    PowerQuery, quadratic_approx)

log = logging.getLogger("peakpower")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_COMPUTE = 3


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _require_keys(cfg: dict, allowed: set[str], required: set[str], where: str) -> None:
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    missing = required - set(cfg)
    if missing:
        raise ConfigError(f"missing keys in {where}: {sorted(missing)}")


def _parse_cov(cfg: dict) -> CovarianceModel:
    allowed = {"rho_prime", "rho_double_prime", "kernel_bandwidth",
               "convolution_kernel_sd"}
    _require_keys(cfg, allowed, set(), "cov")
    if "convolution_kernel_sd" in cfg:
        if len(cfg) != 1:
            raise ConfigError("convolution_kernel_sd excludes other cov keys")
        return CovarianceModel.from_convolution_kernel(float(cfg["convolution_kernel_sd"]))
    if "kernel_bandwidth" in cfg and "rho_prime" not in cfg:
        return CovarianceModel.from_kernel_bandwidth(float(cfg["kernel_bandwidth"]))
    _require_keys(cfg, allowed, {"rho_prime", "rho_double_prime"}, "cov")
    return CovarianceModel.from_dict(cfg)


def _parse_mean(cfg: dict) -> MeanModel:
    _require_keys(cfg, {"variant", "theta0", "theta_pp", "xi", "center"},
                  {"variant", "theta0"}, "mean")
    return MeanModel.from_dict(cfg)


def _parse_domain(cfg: dict) -> DomainSpec:
    _require_keys(cfg, {"dim", "radius", "grid"}, {"dim", "radius"}, "domain")
    return DomainSpec.from_dict(cfg)


def _parse_grid(cfg: dict) -> GridSpec:
    _require_keys(cfg, {"dims", "spacing"}, {"dims"}, "grid")
    return GridSpec.from_dict(cfg)


def _u_grid(cfg: dict) -> list[float]:
    if "u_values" in cfg:
        if any(k in cfg for k in ("u_min", "u_max", "u_step")):
            raise ConfigError("give either u_values or u_min/u_max/u_step")
        us = [emu.NEG_INF if v == "-inf" else float(v) for v in cfg["u_values"]]
        if not us:
            raise ConfigError("u_values is empty")
        return us
    for k in ("u_min", "u_max", "u_step"):
        if k not in cfg:
            raise ConfigError(f"missing threshold grid key {k}")
    lo, hi, step = float(cfg["u_min"]), float(cfg["u_max"]), float(cfg["u_step"])
    if step <= 0 or hi < lo:
        raise ConfigError("need u_step > 0 and u_max >= u_min")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [lo + i * step for i in range(n)]


def _load_config(args) -> dict:
    try:
        cfg = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    if args.out is not None:
        cfg["out"] = args.out
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        cfg["threads"] = args.threads
    for k in ("u_min", "u_max", "u_step"):
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
            cfg.pop("u_values", None)
    return cfg


def _write_sidecar(out: Path, resolved: dict) -> None:
    sidecar = out.with_suffix(out.suffix + ".config.json")
    sidecar.write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n")


def _out_path(cfg: dict) -> Path:
    if "out" not in cfg:
        raise ConfigError("missing output path (config key 'out' or --out)")
    return Path(cfg["out"])


def cmd_power(args) -> int:
    cfg = _load_config(args)
    allowed = {"cov", "mean", "domain", "u_values", "u_min", "u_max", "u_step", "out"}
    _require_keys(cfg, allowed, {"cov", "mean", "domain"}, "power config")
    cov = _parse_cov(cfg["cov"])
    mean = _parse_mean(cfg["mean"])
    domain = _parse_domain(cfg["domain"])
    us = _u_grid(cfg)
    out = _out_path(cfg)

    result = emu.power_curve(cov, mean, domain, us)
    with open(out, "w", newline="\n") as fh:
        fh.write("u,e_mu,e_mu_adj,sharp_approx,quad_err\n")
        for i, u in enumerate(result.u_grid):
            sharp = "" if result.sharp_approx is None else _fmt(result.sharp_approx[i])
            fh.write(f"{_fmt(u)},{_fmt(result.e_mu[i])},{_fmt(result.e_mu_adj[i])},"
                     f"{sharp},{_fmt(result.quadrature_err[i])}\n")
    resolved = {
        "command": "power",
        "cov": cov.to_dict(),
        "mean": mean.to_dict(),
        "domain": domain.to_dict(),
        "u_values": ["-inf" if u == NEG_INF else u for u in us],
        "e_m_total": result.e_m_total,
        "quadratic_approximation": result.quadratic_approximation,
        "out": str(out),
    }
    _write_sidecar(out, resolved)
    log.info("power curve with %d thresholds written to %s", len(us), out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    allowed = {"kernel_sd", "trunc_radius", "grid", "mean", "domain", "B",
               "seed", "threads", "empirical_normalization",
               "u_values", "u_min", "u_max", "u_step", "out"}
    _require_keys(cfg, allowed, {"kernel_sd", "grid", "mean", "domain", "B", "seed"},
                  "simulate config")
    B = int(cfg["B"])
    if B < 1:
        raise ConfigError(f"B must be >= 1, got {B}")
    seed = int(cfg["seed"])
    grid = _parse_grid(cfg["grid"])
    mean = _parse_mean(cfg["mean"])
    domain = _parse_domain(cfg["domain"])
    nu = float(cfg["kernel_sd"])
    trunc = float(cfg.get("trunc_radius", 4.0 * nu))
    threads = int(cfg.get("threads", os.cpu_count() or 1))
    empirical = bool(cfg.get("empirical_normalization", False))
    us = _u_grid(cfg)
    if any(u == NEG_INF for u in us):
        raise ConfigError("simulate needs finite thresholds")
    out = _out_path(cfg)

    if mean.variant == "gaussian_bump":
        theory_mean = quadratic_approx(mean)
    else:
        theory_mean = mean
    cov = CovarianceModel.from_convolution_kernel(nu)
    kernel = randfield.gaussian_kernel(nu, trunc, grid)
    summaries = randfield.mc_power_and_emu(B, us, grid, kernel, mean, domain,
                                           seed, threads=threads,
                                           empirical_normalization=empirical)
    theory, theory_adj = [], []
    total, _ = emu.expected_peaks(PowerQuery(u=NEG_INF, cov=cov, mean=theory_mean,
                                             domain=domain))
    for u in us:
        v, _ = emu.expected_peaks(PowerQuery(u=u, cov=cov, mean=theory_mean,
                                             domain=domain))
        theory.append(v)
        theory_adj.append(emu.adjusted_expected_peaks(min(v, total), total))
    with open(out, "w", newline="\n") as fh:
        randfield.write_mc_csv(summaries, seed, fh,
                               extra_columns={"e_mu_theory": theory,
                                              "e_mu_adj_theory": theory_adj})
    resolved = {
        "command": "simulate",
        "kernel_sd": nu,
        "trunc_radius": trunc,
        "grid": grid.to_dict(),
        "mean": mean.to_dict(),
        "domain": domain.to_dict(),
        "cov_implied": cov.to_dict(),
        "B": B,
        "seed": seed,
        "threads": threads,
        "empirical_normalization": empirical,
        "u_values": us,
        "e_m_total_theory": total,
        "out": str(out),
    }
    _write_sidecar(out, resolved)
    log.info("simulation (B=%d) written to %s", B, out)
    return EXIT_OK


def cmd_threshold(args) -> int:
    cfg = _load_config(args)
    _require_keys(cfg, {"cov", "dim", "alpha", "out"}, {"cov", "dim", "alpha"},
                  "threshold config")
    cov = _parse_cov(cfg["cov"])
    dim = int(cfg["dim"])
    alpha = float(cfg["alpha"])
    u = emu.threshold_for_alpha(cov, dim, alpha)
    achieved = emu.null_overshoot_survival(cov, dim, u)
    payload = {"u": u, "achieved_alpha": achieved, "alpha": alpha, "dim": dim,
               "cov": cov.to_dict()}
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if "out" in cfg:
        out = Path(cfg["out"])
        out.write_text(text)
        _write_sidecar(out, {"command": "threshold", **payload, "out": str(out)})
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_estimate(args) -> int:
    cfg = _load_config(args)
    allowed = {"bundle", "peak", "kernel_half_width", "mean_half_width",
               "domain_radius", "out"}
    _require_keys(cfg, allowed, {"bundle", "peak"}, "estimate config")
    stack = read_bundle(cfg["bundle"])
    peak = tuple(int(c) for c in cfg["peak"])
    kw = int(cfg.get("kernel_half_width", 7))
    mw = int(cfg.get("mean_half_width", 3))
    out = _out_path(cfg)

    x = standardize(stack)
    kest = estimate_kernel(stack, peak, half_width=kw)
    fit = fit_quadratic_mean(x, peak, mw, spacing=stack.grid.spacing)
    cov = covariance_from_kernel_estimate(kest)

    radius = float(cfg.get("domain_radius", kw))
    mean = MeanModel.paraboloid(theta0=fit.theta0, theta_pp=fit.theta_pp,
                                center=fit.center_hat)
    ready = {
        "cov": cov.to_dict(),
        "mean": mean.to_dict(),
        "domain": DomainSpec(dim=stack.grid.ndim, radius=radius).to_dict(),
        "u_min": 0.0, "u_max": 6.0, "u_step": 0.1,
    }
    payload = {
        "kernel_estimate": kest.to_dict(),
        "quadratic_mean_fit": fit.to_dict(),
        "implied_cov": cov.to_dict(),
        "power_config": ready,
    }
    out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    _write_sidecar(out, {
        "command": "estimate", "bundle": str(cfg["bundle"]), "peak": list(peak),
        "kernel_half_width": kw, "mean_half_width": mw, "domain_radius": radius,
        "out": str(out),
    })
    log.info("estimation artifacts written to %s", out)
    return EXIT_OK


def cmd_goi_oracle(args) -> int:
    cfg = _load_config(args)
    allowed = {"dim", "kappa", "x_tilde", "n_samples", "seed", "out"}
    _require_keys(cfg, allowed, {"dim", "kappa", "x_tilde", "n_samples", "seed"},
                  "goi-oracle config")
    dim = int(cfg["dim"])
    kappa = float(cfg["kappa"])
    xs = [float(v) for v in cfg["x_tilde"]]
    n = int(cfg["n_samples"])
    if n < 2:
        raise ConfigError(f"n_samples must be >= 2, got {n}")
    seed = int(cfg["seed"])
    out = _out_path(cfg)

    closed = [emu.h_nd(x, kappa, dim) for x in xs]
    mc = randfield.mc_H_many(xs, kappa, dim, n, seed)
    with open(out, "w", newline="\n") as fh:
        fh.write("x_tilde,h_closed_form,h_mc,se,z_score\n")
        for x, cf, (est, se) in zip(xs, closed, mc):
            z = (cf - est) / se if se > 0 else 0.0
            fh.write(f"{_fmt(x)},{_fmt(cf)},{_fmt(est)},{_fmt(se)},{_fmt(z)}\n")
    _write_sidecar(out, {
        "command": "goi-oracle", "dim": dim, "kappa": kappa, "x_tilde": xs,
        "n_samples": n, "seed": seed, "out": str(out),
    })
    return EXIT_OK


_COMMANDS = {
    "power": cmd_power,
    "simulate": cmd_simulate,
    "threshold": cmd_threshold,
    "estimate": cmd_estimate,
    "goi-oracle": cmd_goi_oracle,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="peakpower",
        description="Peak detection power for smooth isotropic Gaussian fields")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--out", default=None, help="output path override")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads for simulation")
        p.add_argument("--u-min", dest="u_min", type=float, default=None)
        p.add_argument("--u-max", dest="u_max", type=float, default=None)
        p.add_argument("--u-step", dest="u_step", type=float, default=None)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("PEAKPOWER_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, BundleFormatError, ParameterError) as exc:
        json.dump({"error": {"type": type(exc).__name__, "message": str(exc)}},
                  sys.stderr)
        sys.stderr.write("\n")
        return EXIT_CONFIG
    except PeakPowerError as exc:
        json.dump({"error": {"type": type(exc).__name__, "message": str(exc)}},
                  sys.stderr)
        sys.stderr.write("\n")
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
