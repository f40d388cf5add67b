"""Command-line front end: ``l1inverse {estimate,figure,rates,verify}``.

Configuration comes from an optional JSON file, overridden by flags.  Every
output is comma-separated text starting with ``#`` comment lines that record
the resolved configuration, so a run can be repeated from its header alone.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from . import analysis as an
from . import estimators as est
from . import simulation as sim
from .svd_operator import OperatorError, build_polynomial_operator, synthesize, synthesize_psi

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2

TARGET_KINDS = ("sine", "besov", "rho_sparse", "file")
SNR_CONVENTION = "snr = ||F x0||_n / sigma"


class ConfigError(ValueError):
    pass


class NumericalFailure(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    t: list[float] = field(default_factory=lambda: [0.2])
    n: int = 200
    n_grid: list[int] | None = None
    target: str = "sine"
    s: float | None = None
    rho: float | None = None
    target_path: str | None = None
    noise: str = "gaussian"
    snr: float | None = 2.0
    sigma: float | None = None
    model: str = "sequence"
    estimators: list[str] = field(default_factory=lambda: ["adapted"])
    c: float | str = "auto"
    reps: int = 50
    seed: int = 0
    out: str = "out"
    strict: bool = False

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        data = dict(data)
        if "t" in data and not isinstance(data["t"], list):
            data["t"] = [data["t"]]
        return cls(**data)

    def validate(self) -> "ExperimentConfig":
        if not self.t or any(not isinstance(v, (int, float)) or v < 0 for v in self.t):
            raise ConfigError("t must be one or more non-negative numbers")
        if (self.snr is None) == (self.sigma is None):
            raise ConfigError("exactly one of snr / sigma must be given")
        if self.snr is not None and not self.snr > 0:
            raise ConfigError("snr must be positive")
        if self.sigma is not None and not self.sigma >= 0:
            raise ConfigError("sigma must be non-negative")
        if not isinstance(self.n, int) or self.n < 2:
            raise ConfigError("n must be an integer >= 2")
        if self.n_grid is not None:
            if len(self.n_grid) < 3 or any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
                raise ConfigError("n_grid needs at least three strictly increasing sizes")
            if self.n_grid[0] < 2:
                raise ConfigError("n_grid sizes must be >= 2")
        if not isinstance(self.reps, int) or self.reps < 1:
            raise ConfigError("reps must be an integer >= 1")
        if not self.estimators:
            raise ConfigError("at least one estimator is required")
        bad = [e for e in self.estimators if e not in sim.ESTIMATOR_TAGS]
        if bad:
            raise ConfigError(f"unknown estimators {bad}; choose from {sim.ESTIMATOR_TAGS}")
        if self.target not in TARGET_KINDS:
            raise ConfigError(f"target must be one of {TARGET_KINDS}")
        if self.target == "besov" and self.s is None:
            raise ConfigError("besov target needs s")
        if self.target == "rho_sparse" and self.rho is None:
            raise ConfigError("rho_sparse target needs rho")
        if self.target == "file" and not self.target_path:
            raise ConfigError("file target needs target_path")
        if self.noise not in sim.NOISE_KINDS:
            raise ConfigError(f"noise must be one of {sim.NOISE_KINDS}")
        if self.model not in sim.OBSERVATION_MODELS:
            raise ConfigError(f"model must be one of {sim.OBSERVATION_MODELS}")
        if self.c != "auto" and not (isinstance(self.c, (int, float)) and self.c > 0):
            raise ConfigError("c must be 'auto' or a positive number")
        return self

    def single_t(self) -> float:
        if len(self.t) != 1:
            raise ConfigError("this command takes a single t")
        return float(self.t[0])


def header_lines(cfg: ExperimentConfig, command: str, extra: dict | None = None) -> list[str]:
    lines = [
        f"l1inverse {__version__} {command}",
        "config: " + json.dumps(asdict(cfg), sort_keys=True),
        f"seed: {cfg.seed}",
        f"rng: {sim.RNG_NAME}",
        f"snr convention: {SNR_CONVENTION}",
    ]
    for k, v in (extra or {}).items():
        lines.append(f"{k}: {json.dumps(v) if not isinstance(v, str) else v}")
    return lines


def write_table(path: Path, header: list[str], columns: list[str], rows) -> None:
    with path.open("w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    return v


def make_target(cfg: ExperimentConfig, n: int, n_ref: int | None = None, t: float = 0.0) -> np.ndarray:
    if cfg.target == "sine":
        return sim.target_sine(n)
    if cfg.target == "besov":
        return sim.besov_member(cfg.s, t, n, n_ref)
    if cfg.target == "rho_sparse":
        return sim.rho_sparse_member(cfg.rho, n, n_ref)
    x = sim.read_coefficients(cfg.target_path)
    if x.size < n:
        raise ConfigError(f"target file has {x.size} coefficients, need {n}")
    return x[:n]


def resolve_sigma(cfg: ExperimentConfig, op, x0) -> float:
    if cfg.sigma is not None:
        return float(cfg.sigma)
    return sim.sigma_from_snr(op, x0, cfg.snr)


def resolve_c(cfg: ExperimentConfig, sigma: float) -> float:
    if cfg.c == "auto":
        c = sigma * math.sqrt(2.0)
        if c <= 0:
            raise ConfigError("c='auto' (sigma*sqrt(2)) is zero for sigma=0; give c explicitly")
        return c
    return float(cfg.c)


def _check_convergence(cfg: ExperimentConfig, records) -> None:
    if cfg.strict and any(not r.converged for r in records):
        raise NumericalFailure("ISTA did not converge in at least one replication")


# -- commands ---------------------------------------------------------------


def run_estimate(cfg: ExperimentConfig, observations: str | Path) -> dict:
    """Estimate from a spectral-coefficient file and write ``estimate_<tag>.csv``."""
    t = cfg.single_t()
    try:
        w = sim.read_coefficients(observations)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"could not read observations: {exc}") from None
    if w.size != cfg.n:
        raise ConfigError(f"observation file has {w.size} coefficients but n={cfg.n}")
    op = build_polynomial_operator(t, cfg.n)
    if cfg.c == "auto":
        sigma = resolve_sigma(cfg, op, make_target(cfg, cfg.n, t=t))
        c = resolve_c(cfg, sigma)
    else:
        c = float(cfg.c)
    sched = est.threshold_schedule(op, c)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    summaries = {}
    for tag in cfg.estimators:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", est.ConvergenceWarning)
            res = sim.run_estimator(tag, op, w, sched, None)
        if cfg.strict and not res.converged:
            raise NumericalFailure(f"{tag}: ISTA did not converge")
        hdr = header_lines(cfg, "estimate", {"estimator": tag, "c": c, "observations": str(observations)})
        write_table(out / f"estimate_{tag}.csv", hdr, ["index", "value"],
                    [(j, v) for j, v in enumerate(res.estimate, 1)])
        summary = {
            "estimator": tag,
            "objective": res.objective_value,
            "active_set_size": int(res.active_set.size),
            "iterations": res.iterations,
            "converged": res.converged,
            "c": c,
        }
        write_table(out / f"summary_{tag}.csv", hdr, ["key", "value"], summary.items())
        summaries[tag] = dict(summary, estimate=res.estimate)
    return summaries


def run_figure(cfg: ExperimentConfig) -> dict:
    """Simulate the replication batch for each ``t`` and write plot data.

    The representative replication is the one with the (lower) median error of
    the first listed estimator.
    """
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    results = {}
    for t in cfg.t:
        op = build_polynomial_operator(t, cfg.n)
        x0 = make_target(cfg, cfg.n, t=t)
        sigma = resolve_sigma(cfg, op, x0)
        c = resolve_c(cfg, sigma)
        noise = sim.NoiseModel(cfg.noise, sigma)
        records = sim.run_replications(op, x0, noise, cfg.estimators, c, cfg.reps, cfg.seed,
                                       model=cfg.model, keep_estimates=True)
        _check_convergence(cfg, records)
        lead = cfg.estimators[0]
        lead_recs = [r for r in records if r.estimator_tag == lead]
        order = np.argsort([r.error_sq for r in lead_recs], kind="stable")
        rep = lead_recs[int(order[(len(order) - 1) // 2])]
        obs = sim.generate_observations(op, x0, noise, cfg.model, rng=sim.replication_rng(cfg.seed, rep.replication))
        observed = obs.samples if obs.samples is not None else synthesize(op, obs.coefficients)
        truth = synthesize_psi(op, x0)
        estimate = synthesize_psi(op, rep.estimate)
        medians = {tag: an.median_errors(records, tag) for tag in cfg.estimators}

        extra = {"t": t, "sigma": sigma, "c": c, "representative_replication": rep.replication,
                 "representative_estimator": lead, "representative_error_sq": rep.error_sq}
        hdr = header_lines(cfg, "figure", extra)
        tag = f"{t:g}"
        write_table(out / f"figure_t{tag}.csv", hdr, ["t", "truth", "estimate", "observation"],
                    zip(op.grid.points, truth, estimate, observed))
        write_table(out / f"figure_t{tag}_summary.csv", hdr, ["estimator", "median_error_sq"], medians.items())
        write_table(out / f"figure_t{tag}_records.csv", hdr,
                    list(records[0].to_row()), (r.to_row().values() for r in records))
        results[t] = {"medians": medians, "representative": rep, "truth": truth, "estimate": estimate,
                      "observation": observed, "sigma": sigma, "c": c, "x0": x0}
    return results


def _theory_exponent(cfg: ExperimentConfig, tag: str, t: float) -> float:
    if tag in ("adapted",) and cfg.s is not None:
        return an.exponent_adapted(cfg.s, t)
    if tag in ("lse_closed", "lse_ista") and cfg.rho is not None:
        return an.exponent_lse(cfg.rho, t)[0]
    return math.nan


def _monotone_label(values) -> str:
    d = np.diff(values)
    if np.all(d < 0):
        return "decreasing"
    if np.all(d[1:] >= 0):
        return "non-decreasing-from-second"
    return "mixed"


def run_rates(cfg: ExperimentConfig, synthetic_exponent: float | None = None) -> dict:
    """Median error per ``n`` for each estimator plus a log-log fit.

    The target is normalized at the largest grid size and truncated, and
    ``sigma`` is resolved once at that size, so every ``n`` sees the same
    signal and noise level.
    """
    if cfg.n_grid is None:
        raise ConfigError("rates needs n_grid")
    t = cfg.single_t()
    grid = list(cfg.n_grid)
    n_ref = grid[-1]
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    medians = {tag: [] for tag in cfg.estimators}
    sigma = c = None
    if synthetic_exponent is None:
        op_ref = build_polynomial_operator(t, n_ref)
        sigma = resolve_sigma(cfg, op_ref, make_target(cfg, n_ref, n_ref, t))
        c = resolve_c(cfg, sigma)
        noise = sim.NoiseModel(cfg.noise, sigma)
        for n in grid:
            op = build_polynomial_operator(t, n)
            x0 = make_target(cfg, n, n_ref, t)
            records = sim.run_replications(op, x0, noise, cfg.estimators, c, cfg.reps, cfg.seed, model=cfg.model)
            _check_convergence(cfg, records)
            for tag in cfg.estimators:
                medians[tag].append(an.median_errors(records, tag))
    else:
        xs = np.asarray(grid, dtype=float)
        for tag in cfg.estimators:
            medians[tag] = list((xs / np.log(xs)) ** (-synthetic_exponent))

    fits = {}
    extra = {"t": t, "sigma": sigma, "c": c, "n_ref": n_ref, "synthetic_exponent": synthetic_exponent}
    hdr = header_lines(cfg, "rates", extra)
    for tag in cfg.estimators:
        theory = synthetic_exponent if synthetic_exponent is not None else _theory_exponent(cfg, tag, t)
        fit = an.fit_rate(grid, medians[tag], theory)
        fits[tag] = fit
        curve = _theory_curve(grid, medians[tag][0], theory, tag, cfg.rho, t, synthetic_exponent is not None)
        write_table(out / f"rates_{tag}.csv", hdr, ["n", "median_error_sq", "theory_error_sq"],
                    zip(grid, medians[tag], curve))
    write_table(
        out / "rates_fit.csv",
        hdr,
        ["estimator", "slope", "intercept", "theoretical_exponent", "slope_error", "max_abs_residual", "trend"],
        [(tag, f.slope, f.intercept, f.theoretical_exponent, f.slope_error, f.max_abs_residual,
          _monotone_label(medians[tag])) for tag, f in fits.items()],
    )
    return {"medians": medians, "fits": fits, "sigma": sigma, "c": c}


def _theory_curve(grid, first, exponent, tag, rho, t, synthetic):
    n = np.asarray(grid, dtype=float)
    if math.isnan(exponent):
        return [math.nan] * n.size
    if tag.startswith("lse") and not synthetic:
        shape = np.log(n) ** (1 - rho / 2) * n ** (-exponent)
    else:
        shape = (n / np.log(n)) ** (-exponent)
    return list(first * shape / shape[0])


def run_verify(cfg: ExperimentConfig) -> dict:
    if "adapted" not in cfg.estimators:
        raise ConfigError("verify needs the adapted estimator")
    t = cfg.single_t()
    op = build_polynomial_operator(t, cfg.n)
    x0 = make_target(cfg, cfg.n, t=t)
    sigma = resolve_sigma(cfg, op, x0)
    c = resolve_c(cfg, sigma)
    noise = sim.NoiseModel(cfg.noise, sigma)
    sched = est.threshold_schedule(op, c)
    records = sim.run_replications(op, x0, noise, ["adapted"], c, cfg.reps, cfg.seed,
                                   model=cfg.model, keep_estimates=True)
    report = an.verify_oracle_inequality(records, x0, op, sched, c)
    grid = cfg.n_grid or [cfg.n]
    curve = an.bn_failure_curve(grid, noise, c, reps=max(cfg.reps, 100), seed=cfg.seed, model=cfg.model, t=t)

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    hdr = header_lines(cfg, "verify", {"t": t, "sigma": sigma, "c": c})
    write_table(out / "verify_report.csv", hdr, ["key", "value"], [
        ("replications_checked", report.replications_checked),
        ("bn_count", report.bn_count),
        ("bn_fraction", report.bn_fraction),
        ("violations", report.violations),
        ("worst_slack", report.worst_slack),
    ])
    write_table(out / "bn_failure.csv", hdr, ["n", "failure_prob", "tail_bound"],
                zip(curve.n_grid, curve.failure_prob, curve.tail_bound))
    return {"report": report, "curve": curve, "sigma": sigma, "c": c}


# -- argument parsing ------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="l1inverse", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--n", type=int)
    common.add_argument("--n-grid", type=int, nargs="+", dest="n_grid")
    common.add_argument("--t", type=float, nargs="+")
    common.add_argument("--target", choices=TARGET_KINDS)
    common.add_argument("--s", type=float)
    common.add_argument("--rho", type=float)
    common.add_argument("--target-path", dest="target_path")
    common.add_argument("--noise", choices=sim.NOISE_KINDS)
    common.add_argument("--model", choices=sim.OBSERVATION_MODELS)
    noise_level = common.add_mutually_exclusive_group()
    noise_level.add_argument("--snr", type=float)
    noise_level.add_argument("--sigma", type=float)
    common.add_argument("--c", help="noise-scale constant or 'auto' (sigma*sqrt(2))")
    common.add_argument("--reps", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--out")
    common.add_argument("--estimator", action="append", dest="estimators", choices=sim.ESTIMATOR_TAGS,
                        help="repeat to run several estimators")
    common.add_argument("--strict", action="store_true", default=None,
                        help="treat ISTA non-convergence as a failure (exit 2)")

    p = sub.add_parser("estimate", parents=[common], help="estimate from spectral coefficients")
    p.add_argument("observations", help="two-column (index, value) file of w_j = <y, phi_j>_n")
    sub.add_parser("figure", parents=[common], help="plot data for the reconstruction figures")
    p = sub.add_parser("rates", parents=[common], help="convergence-rate study over n_grid")
    p.add_argument("--synthetic-exponent", type=float,
                   help="self-test: inject exact power-law errors instead of simulating")
    sub.add_parser("verify", parents=[common], help="oracle inequality and tail-event check")
    return parser


OVERRIDES = ("n", "n_grid", "t", "target", "s", "rho", "target_path", "noise", "model",
             "c", "reps", "seed", "out", "estimators", "strict")


def config_from_args(args) -> ExperimentConfig:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"could not read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    cfg = ExperimentConfig.from_dict(data)
    updates = {k: getattr(args, k) for k in OVERRIDES if getattr(args, k, None) is not None}
    if "c" in updates and updates["c"] != "auto":
        try:
            updates["c"] = float(updates["c"])
        except ValueError:
            raise ConfigError(f"c must be a number or 'auto', got {updates['c']!r}") from None
    if args.snr is not None:
        updates.update(snr=args.snr, sigma=None)
    if args.sigma is not None:
        updates.update(sigma=args.sigma, snr=None)
    try:
        cfg = replace(cfg, **updates)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        if args.command == "estimate":
            res = run_estimate(cfg, args.observations)
            for tag, s in res.items():
                print(f"{tag}: objective={s['objective']:.6g} active_set_size={s['active_set_size']} "
                      f"iterations={s['iterations']}")
        elif args.command == "figure":
            res = run_figure(cfg)
            for t, r in res.items():
                meds = " ".join(f"{k}={v:.6g}" for k, v in r["medians"].items())
                print(f"t={t:g}: median error^2 {meds} (representative replication "
                      f"{r['representative'].replication})")
        elif args.command == "rates":
            res = run_rates(cfg, args.synthetic_exponent)
            for tag, f in res["fits"].items():
                print(f"{tag}: slope={f.slope:.4f} theory={-f.theoretical_exponent:.4f} "
                      f"intercept={f.intercept:.4f} max_residual={f.max_abs_residual:.3g}")
        else:
            res = run_verify(cfg)
            rep, curve = res["report"], res["curve"]
            print(f"violations: {rep.violations}")
            print(f"worst slack: {rep.worst_slack:.6g}")
            print(f"B_n held in {rep.bn_count}/{rep.replications_checked} replications")
            for n, p in curve.rows():
                print(f"P(B_n^c) n={n}: {p:.4f}")
            if rep.violations:
                return EXIT_NUMERICAL
    except (ConfigError, OperatorError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
