"""Command-line front end: ten experiment runners with delimited outputs.

Every run writes results.csv, summary.json, and manifest.json into --out,
plus one PNG figure unless --no-figures is given. Flag values resolve in
the order: explicit flag, config-file entry, RDL_<NAME> environment
variable, built-in default. The manifest records the fully resolved
invocation, so replaying its argv reproduces results.csv byte for byte.

Exit codes: 0 success, 2 precondition or configuration failure, 3 the
--assert comparison came out false, 64 unknown flag or malformed usage,
74 the output location cannot be written.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import re
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from . import __version__
from ._rng import derive_key
from .drifts import parse_drift
from .errors import DriftLabError
from .flow import NoiseSpec, composition_residual, dyadic_times, flow_tables, holder_fit
from .functionals import Box, OpenSetSpec, TimeWindow, covariation_decomposition, occupation_time
from .lipnets import EpsNet, chain_sweep, covering_gap
from .mc import (
    TrialPlan,
    derivative_kernel,
    exp_moment_report,
    fit_concentration,
    run_trials,
    shifted_difference_kernel,
    tail_curve,
)
from .paths import sample_path
from .uniqueness import candidate_family, certificate, drift_integral_continuity
from .zvonkin import default_grid, find_lambda

__all__ = ["main", "build_parser"]

RunResult = tuple[list[dict[str, Any]], dict[str, Any], Any]


class _UsageExit(Exception):
    """Raised instead of SystemExit so usage problems map to exit 64."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise _UsageExit(message)


def _floats_csv(text: str) -> tuple[float, ...]:
    parts = [p for p in text.split(",") if p.strip()]
    if not parts:
        raise ValueError("expected a comma-separated list of numbers")
    return tuple(float(p) for p in parts)


def _ints_csv(text: str) -> tuple[int, ...]:
    parts = [p for p in text.split(",") if p.strip()]
    if not parts:
        raise ValueError("expected a comma-separated list of integers")
    return tuple(int(p) for p in parts)


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class Flag:
    name: str
    parse: Callable[[str], Any]
    default: Any
    help: str


@dataclass(frozen=True)
class Command:
    name: str
    anchor: str
    flags: tuple[Flag, ...]
    runner: Callable[[dict[str, Any]], RunResult]


COMMON_FLAGS = (
    Flag("out", str, "runs", "output directory for this run"),
    Flag("seed", int, 0, "base seed for every stream the run touches"),
    Flag("threads", int, 1, "worker threads for batched trial loops"),
)


def _prov(seed: int, trial_lo: int, trial_hi: int, level: int) -> dict[str, Any]:
    return {"seed": seed, "trial_lo": trial_lo, "trial_hi": trial_hi, "level": level}


def _run_exp_moment(cfg: dict[str, Any]) -> RunResult:
    spec = parse_drift(cfg["drift"])
    plan = TrialPlan(cfg["trials"], cfg["seed"], cfg["level"], threads=cfg["threads"])
    kernel = derivative_kernel(spec, cfg["level"], cfg["seed"])
    values = run_trials(plan, kernel)
    rep = exp_moment_report(values, cfg["alpha"], plan.base_seed)
    row = _prov(cfg["seed"], 0, cfg["trials"] - 1, cfg["level"]) | {
        "alpha": rep.alpha,
        "n_trials": rep.n_trials,
        "n_excluded": rep.n_excluded,
        "estimate": rep.mean,
        "trimmed_mean": rep.trimmed_mean,
        "boot_se": rep.boot_se,
        "ci_low": rep.ci_low,
        "ci_high": rep.ci_high,
    }
    summary = {
        "estimate": rep.mean,
        "trimmed_mean": rep.trimmed_mean,
        "boot_se": rep.boot_se,
        "ci_low": rep.ci_low,
        "ci_high": rep.ci_high,
        "n_excluded": rep.n_excluded,
        "alpha": rep.alpha,
        "mean_value": float(values.mean()),
    }
    return [row], summary, values


def _run_tail_fit(cfg: dict[str, Any]) -> RunResult:
    spec = parse_drift(cfg["drift"])
    plan = TrialPlan(cfg["trials"], cfg["seed"], cfg["level"], threads=cfg["threads"])
    window = TimeWindow(cfg["t0"], cfg["t1"])
    kernel = shifted_difference_kernel(spec, cfg["level"], cfg["seed"], cfg["shift"], None, window)
    # normalizer 0 means the natural scale of a bounded drift's response
    normalizer = cfg["normalizer"] or math.sqrt(window.length) * abs(cfg["shift"])
    curve = tail_curve(plan, kernel, normalizer, cfg["lambdas"])
    fit = fit_concentration(curve)
    rows = []
    for j, lam in enumerate(curve.lambdas):
        rows.append(
            _prov(cfg["seed"], 0, cfg["trials"] - 1, cfg["level"])
            | {
                "lambda": float(lam),
                "count": int(curve.counts[j]),
                "p_hat": float(curve.p_hat[j]),
                "ci_low": float(curve.ci_low[j]),
                "ci_high": float(curve.ci_high[j]),
            }
        )
    summary = {
        "alpha_hat": fit.alpha_hat,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "n_bins_used": fit.n_bins_used,
        "non_decaying": fit.non_decaying,
        "normalizer": normalizer,
        "n_trials": cfg["trials"],
    }
    return rows, summary, None


def _run_covariation(cfg: dict[str, Any]) -> RunResult:
    spec = parse_drift(cfg["drift"])
    rows = []
    gaps, residuals = [], []
    for trial in range(cfg["trials"]):
        path = sample_path(cfg["level"], 1, 1.0, cfg["seed"], trial)
        rep = covariation_decomposition(spec, path)
        gap = abs(rep.derivative_integral - rep.partition_sum)
        gaps.append(gap)
        residuals.append(abs(rep.residual))
        rows.append(
            _prov(cfg["seed"], trial, trial, cfg["level"])
            | {
                "derivative_route": rep.derivative_integral,
                "partition_route": rep.partition_sum,
                "route_gap": gap,
                "residual": rep.residual,
                "singular_bound": rep.singular_cell_bound,
            }
        )
    summary = {
        "median_gap": float(np.median(gaps)),
        "max_gap": float(np.max(gaps)),
        "median_residual": float(np.median(residuals)),
        "n_trials": cfg["trials"],
    }
    return rows, summary, None


def _run_zvonkin(cfg: dict[str, Any]) -> RunResult:
    spec = parse_drift(cfg["drift"])
    grid = default_grid(spec, nx=cfg["nx"], nt=cfg["nt"])
    transform = find_lambda(spec, grid, target=cfg["target"], tol=cfg["tol"])
    row = _prov(cfg["seed"], 0, 0, int(round(math.log2(cfg["nt"])))) | {
        "lam": transform.lam,
        "grad_sup": transform.grad_sup,
        "sup": transform.sup,
        "radius": grid.radius,
        "nx": cfg["nx"],
        "nt": cfg["nt"],
    }
    summary = {
        "lam": transform.lam,
        "grad_sup": transform.grad_sup,
        "sup": transform.sup,
        "target": cfg["target"],
    }
    return [row], summary, transform


def _run_flow_holder(cfg: dict[str, Any]) -> RunResult:
    spec = parse_drift(cfg["drift"])
    noise = NoiseSpec(cfg["seed"], cfg["level"], cfg["noises"])
    x_grid = np.linspace(-2.0, 2.0, cfg["points"])
    tables = flow_tables(
        spec, noise, s_grid=dyadic_times(3), t_grid=dyadic_times(4), x_grid=x_grid, dt=cfg["dt"]
    )
    fit = holder_fit(tables, n_radius=cfg["n_radius"])
    rows = []
    residuals = []
    for j, table in enumerate(tables):
        res = composition_residual(table)
        residuals.append(res)
        rows.append(
            _prov(cfg["seed"], j, j, cfg["level"])
            | {
                "composition_residual": res,
                "escaped": int(table.escaped.sum()),
                "dt": table.dt,
            }
        )
    summary = {
        "alpha_hat": fit.alpha_hat,
        "c_hat": fit.c_hat,
        "r_squared": fit.r_squared,
        "pair_count": fit.pair_count,
        "median_composition_residual": float(np.median(residuals)),
    }
    return rows, summary, fit


def _lipschitz_probe(rng: np.random.Generator, bound: float, length: float, cells: int = 64):
    """A random 1-Lipschitz target as an interpolation closure."""
    t = np.linspace(0.0, length, cells + 1)
    steps = rng.uniform(-1.0, 1.0, cells) * (length / cells)
    vals = np.empty(cells + 1)
    vals[0] = rng.uniform(-bound, bound)
    for j in range(cells):
        vals[j + 1] = min(max(vals[j] + steps[j], -bound), bound)

    def target(s: np.ndarray) -> np.ndarray:
        return np.interp(np.asarray(s, dtype=float), t, vals)

    return target


def _run_net_count(cfg: dict[str, Any]) -> RunResult:
    rng = np.random.Generator(np.random.Philox(key=derive_key(cfg["seed"], "net-probe")))
    targets = [_lipschitz_probe(rng, cfg["bound"], cfg["length"]) for _ in range(cfg["probes"])]
    rows = []
    worst_excess = -math.inf
    worst_ratio = 0.0
    for eps in cfg["eps"]:
        net = EpsNet(eps, cfg["bound"], cfg["length"])
        max_gap = max(covering_gap(net, f) for f in targets) if targets else 0.0
        excess = net.log_cardinality - net.count_bound_log()
        worst_excess = max(worst_excess, excess)
        if targets:
            worst_ratio = max(worst_ratio, max_gap / eps)
        rows.append(
            _prov(cfg["seed"], 0, max(cfg["probes"] - 1, 0), 0)
            | {
                "epsilon": eps,
                "knot_count": len(net.knots),
                "cardinality": net.cardinality,
                "log_cardinality": net.log_cardinality,
                "bound_log": net.count_bound_log(),
                "max_probe_gap": max_gap,
                "n_probes": cfg["probes"],
            }
        )
    summary = {
        "max_log_excess": worst_excess,
        "max_probe_gap_ratio": worst_ratio,
        "n_eps": len(cfg["eps"]),
        "bound": cfg["bound"],
        "length": cfg["length"],
    }
    return rows, summary, None


def _run_chain(cfg: dict[str, Any]) -> RunResult:
    spec = parse_drift(cfg["drift"])
    lengths = [cfg["l"] / 2**j for j in range(cfg["N"] + 1)]
    sweep = chain_sweep(
        spec,
        lengths,
        cfg["alpha"],
        cfg["gamma"],
        cfg["seed"],
        elements_per_scale=cfg["elements"],
        max_pairs=cfg["trials"],
        n_noise=cfg["noises"],
    )
    rows = []
    for rep in sweep.reports:
        for sr in rep.scales:
            rows.append(
                _prov(cfg["seed"], 0, cfg["noises"] - 1, 9)
                | {
                    "window_length": rep.window_length,
                    "epsilon": sr.epsilon,
                    "threshold_rate": sr.threshold_rate,
                    "n_elements": sr.n_elements,
                    "n_pairs": sr.n_pairs,
                    "n_events": sr.n_events,
                    "n_failures": sr.n_failures,
                    "max_diff": sr.max_diff,
                    "modulus": rep.modulus,
                    "failure_freq": rep.failure_freq,
                }
            )
    summary = {
        "slope": sweep.modulus_slope,
        "zeta_hat": sweep.zeta_hat,
        "n_windows": len(sweep.reports),
        "max_failure_freq": max(rep.failure_freq for rep in sweep.reports),
        "alpha": cfg["alpha"],
        "gamma": cfg["gamma"],
    }
    return rows, summary, sweep


def _run_occupation(cfg: dict[str, Any]) -> RunResult:
    if not (cfg["t0"] < cfg["t1"] and cfg["lo"] < cfg["hi"]):
        raise ValueError("need t0 < t1 and lo < hi")
    open_set = OpenSetSpec((Box(cfg["t0"], cfg["t1"], (cfg["lo"],), (cfg["hi"],)),))
    rows = []
    values = []
    for trial in range(cfg["trials"]):
        path = sample_path(cfg["level"], 1, 1.0, cfg["seed"], trial)
        val = occupation_time(path, open_set)
        values.append(val)
        rows.append(_prov(cfg["seed"], trial, trial, cfg["level"]) | {"occupation": val})
    summary = {
        "mean_occupation": float(np.mean(values)),
        "median_occupation": float(np.median(values)),
        "max_occupation": float(np.max(values)),
        "box_measure": (cfg["t1"] - cfg["t0"]) * (cfg["hi"] - cfg["lo"]),
        "n_trials": cfg["trials"],
    }
    return rows, summary, None


def _run_uniqueness(cfg: dict[str, Any]) -> RunResult:
    spec = parse_drift(cfg["drift"])
    noise = NoiseSpec(cfg["seed"], cfg["level"], 1, trial_offset=cfg["trial"])
    cand = candidate_family(spec, noise, cfg["x0"], cfg["dt"], cfg["variant"])[0]
    cert = certificate(spec, cand, r=cfg["r"], levels=cfg["levels"], oracle_refine=cfg["refine"])
    rows = []
    for k, level in enumerate(cert.levels):
        rows.append(
            _prov(cfg["seed"], cfg["trial"], cfg["trial"], cfg["level"])
            | {
                "span_level": level,
                "level": level,
                "step_sup": float(cert.step_sups[k]),
                "endpoint_abs": float(cert.endpoint_abs[k]),
                "terminal_gap": float(cert.terminal_gaps[k]),
                "holder_const": float(cert.holder_consts[k]),
            }
        )
    summary = {
        "decay_slope": cert.decay_slope,
        "endpoint_first": float(cert.endpoint_abs[0]),
        "endpoint_last": float(cert.endpoint_abs[-1]),
        "variant": cfg["variant"],
        "oracle_scheme": cert.scheme,
    }
    return rows, summary, None


def _run_continuity(cfg: dict[str, Any]) -> RunResult:
    spec = parse_drift(cfg["drift"])
    report = drift_integral_continuity(
        spec,
        None,
        cfg["scales"],
        cfg["seed"],
        trials=cfg["trials"],
        level=cfg["level"],
        widths=cfg["widths"],
    )
    rows = []
    for i, scale in enumerate(report.scales):
        row = _prov(cfg["seed"], 0, cfg["trials"] - 1, cfg["level"]) | {
            "scale": scale,
            "median_gap": float(report.scale_gaps[i]),
            "max_gap": float(report.scale_gap_maxima[i]),
        }
        for j, width in enumerate(report.widths):
            row[f"smoothed_{width:g}"] = float(report.width_gaps[j, i])
        rows.append(row)
    first, last = float(report.scale_gaps[0]), float(report.scale_gaps[-1])
    summary = {
        "gap_first": first,
        "gap_last": last,
        "last_over_first": (last / first) if first > 0 else None,
        "max_exceed_fraction": float(np.max(report.exceed_fractions)),
        "decreasing": bool(np.all(np.diff(report.scale_gaps) < 0)),
        "n_trials": cfg["trials"],
    }
    return rows, summary, report


DRIFT_HELP = "drift expression, e.g. zero, sine, checkerboard, tanh"

COMMANDS: tuple[Command, ...] = (
    Command(
        "exp-moment",
        "estimate the exponential moment of a squared drift-gradient integral",
        (
            Flag("drift", str, "zero", DRIFT_HELP),
            Flag("alpha", float, 0.05, "exponential tilt applied to the squared integral"),
            Flag("trials", int, 1000, "number of independent paths"),
            Flag("level", int, 12, "dyadic resolution of each path"),
        ),
        _run_exp_moment,
    ),
    Command(
        "tail-fit",
        "fit a concentration exponent to the tail of normalized integrals",
        (
            Flag("drift", str, "checkerboard", DRIFT_HELP),
            Flag("trials", int, 20000, "number of independent paths"),
            Flag("level", int, 12, "dyadic resolution of each path"),
            Flag("lambdas", _floats_csv, tuple(0.25 * k for k in range(1, 7)), "thresholds to scan"),
            Flag("shift", float, 0.25, "constant path shift defining the integral difference"),
            Flag("t0", float, 0.0, "window start"),
            Flag("t1", float, 1.0, "window end"),
            Flag("normalizer", float, 0.0, "scale dividing each value; 0 picks sqrt(length) * shift"),
        ),
        _run_tail_fit,
    ),
    Command(
        "covariation",
        "compare the two integration routes for the drift covariation",
        (
            Flag("drift", str, "sine", DRIFT_HELP),
            Flag("trials", int, 200, "number of independent paths"),
            Flag("level", int, 12, "dyadic resolution of each path"),
        ),
        _run_covariation,
    ),
    Command(
        "zvonkin",
        "solve the resolvent field and report the straightening gradient",
        (
            Flag("drift", str, "sine", DRIFT_HELP),
            Flag("nx", int, 512, "spatial cells"),
            Flag("nt", int, 1024, "time steps"),
            Flag("target", float, 0.5, "largest acceptable gradient sup"),
            Flag("tol", float, 0.05, "overshoot allowed below the target"),
        ),
        _run_zvonkin,
    ),
    Command(
        "flow-holder",
        "fit the spatial modulus of the solution map across start points",
        (
            Flag("drift", str, "sine", DRIFT_HELP),
            Flag("noises", int, 8, "independent driving paths"),
            Flag("level", int, 11, "dyadic resolution of the driving paths"),
            Flag("dt", float, 2.0**-8, "integration step"),
            Flag("points", int, 33, "start points across [-2, 2]"),
            Flag("n_radius", float, 1.5, "restrict fitted starts to this radius"),
        ),
        _run_flow_holder,
    ),
    Command(
        "net-count",
        "count net members against the closed-form bound and probe covering",
        (
            Flag("eps", _floats_csv, (0.5, 0.25, 0.125), "net spacings to scan"),
            Flag("bound", float, 1.0, "value range of net members"),
            Flag("length", float, 1.0, "domain length"),
            Flag("probes", int, 200, "random targets for the covering check"),
        ),
        _run_net_count,
    ),
    Command(
        "chain",
        "measure multiscale increment thresholds over shrinking windows",
        (
            Flag("drift", str, "checkerboard", DRIFT_HELP),
            Flag("l", float, 0.125, "base window length"),
            Flag("N", int, 1, "number of halvings below the base length"),
            Flag("alpha", float, 1.0, "spatial exponent in the threshold rate"),
            Flag("gamma", float, 1.0, "scale exponent in the threshold rate"),
            Flag("trials", int, 10000, "pair samples per scale"),
            Flag("noises", int, 20, "independent driving paths"),
            Flag("elements", int, 150, "net members sampled per scale"),
        ),
        _run_chain,
    ),
    Command(
        "occupation",
        "measure time spent by sampled paths inside an open box",
        (
            Flag("t0", float, 0.25, "box start time"),
            Flag("t1", float, 0.75, "box end time"),
            Flag("lo", float, -0.5, "box lower edge"),
            Flag("hi", float, 0.5, "box upper edge"),
            Flag("trials", int, 256, "number of independent paths"),
            Flag("level", int, 12, "dyadic resolution of each path"),
        ),
        _run_occupation,
    ),
    Command(
        "uniqueness",
        "audit a candidate solution with per-level defect certificates",
        (
            Flag("drift", str, "checkerboard", DRIFT_HELP),
            Flag("variant", str, "restart-perturbed:1.5", "candidate construction scheme"),
            Flag("dt", float, 2.0**-10, "candidate integration step"),
            Flag("level", int, 10, "dyadic resolution of the driving path"),
            Flag("trial", int, 0, "index of the driving path"),
            Flag("x0", float, 0.0, "initial value"),
            Flag("r", float, 1.0, "audit horizon"),
            Flag("refine", int, 1, "oracle step refinement factor"),
            Flag("levels", _ints_csv, (16, 32, 64, 128, 256, 512, 1024), "span counts to audit"),
        ),
        _run_uniqueness,
    ),
    Command(
        "continuity",
        "track shifted-integral gaps as the shift perturbation vanishes",
        (
            Flag("drift", str, "checkerboard", DRIFT_HELP),
            Flag("scales", _floats_csv, (0.08, 0.04, 0.02, 0.01), "perturbation scales, decreasing"),
            Flag("widths", _floats_csv, tuple(2.0**-k for k in range(4, 9)), "smoothing widths"),
            Flag("trials", int, 64, "number of independent paths"),
            Flag("level", int, 10, "dyadic resolution of each path"),
        ),
        _run_continuity,
    ),
)

_BY_NAME = {cmd.name: cmd for cmd in COMMANDS}


def build_parser() -> _Parser:
    parser = _Parser(prog="driftlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"driftlab {__version__}")
    subs = parser.add_subparsers(dest="cmd", required=True, parser_class=_Parser, metavar="subcommand")
    for cmd in COMMANDS:
        sub = subs.add_parser(cmd.name, help=cmd.anchor, description=cmd.anchor)
        for flag in cmd.flags + COMMON_FLAGS:
            sub.add_argument(f"--{flag.name.replace('_', '-')}", dest=flag.name,
                             type=flag.parse, default=None, help=flag.help)
        sub.add_argument("--figures", dest="figures", action=argparse.BooleanOptionalAction,
                         default=None, help="render the run figure (default: on)")
        sub.add_argument("--config", dest="config", default=None,
                         help="flat key = value file supplying flag defaults")
        sub.add_argument("--assert", dest="assert_", default=None, metavar="EXPR",
                         help="summary check such as slope>=1.18; exit 3 when false")
    return parser


def _load_config(path: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        entries[key.strip().replace("-", "_")] = value.strip()
    return entries


def _resolve(cmd: Command, ns: argparse.Namespace) -> dict[str, Any]:
    """Merge flag, config-file, environment, and default values."""
    config_path = ns.config or os.environ.get("RDL_CONFIG")
    file_cfg = _load_config(config_path) if config_path else {}
    flags = cmd.flags + COMMON_FLAGS + (Flag("figures", _bool, True, ""),)
    known = {flag.name for flag in flags}
    unknown = set(file_cfg) - known
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    cfg: dict[str, Any] = {}
    for flag in flags:
        given = getattr(ns, flag.name)
        if given is not None:
            cfg[flag.name] = given
        elif flag.name in file_cfg:
            cfg[flag.name] = flag.parse(file_cfg[flag.name])
        else:
            env = os.environ.get(f"RDL_{flag.name.upper()}")
            cfg[flag.name] = flag.parse(env) if env is not None else flag.default
    cfg["assert"] = ns.assert_
    return cfg


def _format_value(value: Any) -> str:
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _resolved_argv(cmd: Command, cfg: Mapping[str, Any]) -> list[str]:
    argv = [cmd.name]
    for flag in cmd.flags + COMMON_FLAGS:
        argv += [f"--{flag.name.replace('_', '-')}", _format_value(cfg[flag.name])]
    argv.append("--figures" if cfg["figures"] else "--no-figures")
    return argv


def _csv_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (np.floating, float)):
        return repr(float(value))
    if isinstance(value, (np.integer, int)):
        return str(int(value))
    return str(value)


def _write_csv(path: Path, rows: Sequence[Mapping[str, Any]]) -> None:
    import csv

    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        if not rows:
            return
        header = list(rows[0].keys())
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_cell(row[key]) for key in header])


def _pyify(value: Any) -> Any:
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    return value


def _sanitize_summary(summary: Mapping[str, Any]) -> dict[str, Any]:
    """Flatten to JSON-safe scalars; NaN and inf become null plus a flag."""
    clean: dict[str, Any] = {}
    for key, value in summary.items():
        value = _pyify(value)
        if isinstance(value, float) and not math.isfinite(value):
            clean[key] = None
            clean[f"{key}_missing"] = True
        else:
            clean[key] = value
    return clean


_ASSERT_RE = re.compile(r"^\s*([A-Za-z0-9_]+)\s*(>=|<=|==|>|<)\s*(-?[0-9][0-9.eE+-]*)\s*$")
_OPS: dict[str, Callable[[float, float], bool]] = {
    ">=": lambda a, b: a >= b,
    "<=": lambda a, b: a <= b,
    "==": lambda a, b: a == b,
    ">": lambda a, b: a > b,
    "<": lambda a, b: a < b,
}


def _parse_assert(expr: str) -> tuple[str, str, float]:
    match = _ASSERT_RE.match(expr)
    if not match:
        raise ValueError(f"malformed assert expression: {expr!r}")
    return match.group(1), match.group(2), float(match.group(3))


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def main(argv: Sequence[str] | None = None) -> int:
    try:
        ns = build_parser().parse_args(argv)
    except _UsageExit:
        return 64
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    cmd = _BY_NAME[ns.cmd]

    try:
        cfg = _resolve(cmd, ns)
        check = _parse_assert(cfg["assert"]) if cfg["assert"] else None
    except (ValueError, OSError) as exc:
        print(f"driftlab {cmd.name}: {exc}", file=sys.stderr)
        return 2

    started = _now()
    try:
        rows, summary, payload = cmd.runner(cfg)
    except (DriftLabError, ValueError) as exc:
        print(f"driftlab {cmd.name}: {exc}", file=sys.stderr)
        return 2

    out_dir = Path(cfg["out"])
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_csv(out_dir / "results.csv", rows)
        clean = _sanitize_summary(summary)
        with open(out_dir / "summary.json", "w") as handle:
            json.dump(clean, handle, indent=2, sort_keys=True, allow_nan=False)
            handle.write("\n")
        outputs = ["results.csv", "summary.json"]
        if cfg["figures"]:
            from .report import render_figure

            outputs.append(render_figure(cmd.name, rows, summary, payload, out_dir))
        manifest = {
            "subcommand": cmd.name,
            "argv": _resolved_argv(cmd, cfg),
            "flags": {k: _pyify(v) if not isinstance(v, tuple) else list(v)
                      for k, v in cfg.items() if k != "assert"},
            "base_seed": cfg["seed"],
            "version": __version__,
            "started": started,
            "finished": _now(),
            "digests": {name: _digest(out_dir / name) for name in outputs},
        }
        with open(out_dir / "manifest.json", "w") as handle:
            json.dump(manifest, handle, indent=2, sort_keys=True)
            handle.write("\n")
    except OSError as exc:
        print(f"driftlab {cmd.name}: cannot write output: {exc}", file=sys.stderr)
        return 74

    print(f"wrote {out_dir / 'results.csv'} ({len(rows)} rows)")
    if check is not None:
        key, op, target = check
        observed = clean.get(key)
        if not isinstance(observed, (int, float)) or isinstance(observed, bool):
            print(f"driftlab {cmd.name}: assert metric {key!r} is unavailable", file=sys.stderr)
            return 2
        passed = _OPS[op](float(observed), target)
        print(f"assert {key} {op} {target}: {'PASS' if passed else 'FAIL'} (observed {observed!r})")
        if not passed:
            return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
