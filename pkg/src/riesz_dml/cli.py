"""Command-line front end: ``riesz-dml estimate|tune|simulate|verify``.

Configuration is a TOML file. CSV inputs need a header; the outcome column
is ``y`` and kernel components refer to feature columns by name. Exit codes:
0 success, 1 failed verification, 2 configuration error, 3 data error,
4 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .dml import TuningResult, critical_value, fit_dml, tune
from .errors import ConfigError, HarnessError, InputError, NumericalError, RieszDMLError
from .functionals import ATE, ATEDS, ATT, CATE, Evaluation, GaussianDensity, Incremental, TabulatedDensity
from .kernels import DiscreteIdentity, Gaussian, KernelSpec, median_bandwidth
from .krr import DEFAULT_FOLDS, DEFAULT_GRID
from .sim import EstimationConfig, RateSchedule, make_dgp, reports_to_csv, run_coverage

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3, 4
SIG_DIGITS = 12
OUTCOME = "y"


# JSON formatting


def round_sig(x, digits=SIG_DIGITS):
    """Round to ``digits`` significant digits; the result prints in shortest round-trip form."""
    x = float(x)
    if not math.isfinite(x):
        raise NumericalError(f"non-finite value {x} in output")
    return float(f"{x:.{digits}g}")


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    return round_sig(obj)


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2) + "\n"


# configuration


def _section(cfg, name):
    value = cfg.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"[{name}] must be a table")
    return value


def _number(value, key, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number, got {value!r}")
    value = float(value)
    if positive and not value > 0:
        raise ConfigError(f"{key} must be positive, got {value}")
    return value


def _integer(value, key, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{key} must be at least {minimum}, got {value}")
    return value


def _lambda(value, key):
    if value == "cv":
        return "cv"
    if isinstance(value, dict):
        unknown = set(value) - {"scale", "power"}
        if unknown:
            raise ConfigError(f"{key}: unknown schedule keys {sorted(unknown)}")
        return RateSchedule(_number(value.get("scale", 1.0), f"{key}.scale", True),
                            _number(value.get("power", 0.5), f"{key}.power", True))
    if isinstance(value, str):
        raise ConfigError(f"{key} must be a positive number, 'cv' or a rate table, got {value!r}")
    return _number(value, key, positive=True)


def _grid(value, key):
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{key} must be a non-empty list of numbers")
    return tuple(_number(v, f"{key}[{i}]", positive=True) for i, v in enumerate(value))


@dataclass
class RunConfig:
    """Validated contents of a configuration file."""

    raw: dict
    seed: int = 0
    threads: int = 1
    components: list = field(default_factory=list)
    functional: dict = field(default_factory=dict)
    folds: int = DEFAULT_FOLDS
    level: float = 0.95
    lam_gamma: object = "cv"
    lam_alpha: object = "cv"
    trim: float | None = None
    strict: bool = False
    grid_gamma: tuple = DEFAULT_GRID
    grid_alpha: tuple = DEFAULT_GRID
    tune_folds: int = DEFAULT_FOLDS
    io: dict = field(default_factory=dict)
    base: Path = Path(".")

    @property
    def feature_columns(self):
        return [c for comp in self.components for c in comp["columns"]]


KNOWN_TOP = {"seed", "threads", "kernel", "functional", "dml", "tuning", "io", "simulate"}


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}") from exc
    return parse_config(raw, base=path.parent)


def parse_config(raw, base=Path(".")) -> RunConfig:
    unknown = set(raw) - KNOWN_TOP
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {sorted(unknown)}")
    cfg = RunConfig(raw=raw, base=Path(base))
    cfg.seed = _integer(raw.get("seed", 0), "seed", minimum=0)
    cfg.threads = _integer(raw.get("threads", 1), "threads", minimum=0)

    kernel = _section(raw, "kernel")
    comps = kernel.get("components", [])
    if not isinstance(comps, list):
        raise ConfigError("kernel.components must be an array of tables")
    for i, comp in enumerate(comps):
        key = f"kernel.components[{i}]"
        if not isinstance(comp, dict):
            raise ConfigError(f"{key} must be a table")
        kind = comp.get("kind")
        if kind not in ("gaussian", "discrete"):
            raise ConfigError(f"{key}.kind must be 'gaussian' or 'discrete', got {kind!r}")
        cols = comp.get("columns")
        if isinstance(cols, str):
            cols = [cols]
        if not isinstance(cols, list) or not cols or not all(isinstance(c, str) for c in cols):
            raise ConfigError(f"{key}.columns must be a non-empty list of column names")
        if OUTCOME in cols:
            raise ConfigError(f"{key}.columns may not include the outcome column '{OUTCOME}'")
        entry = {"kind": kind, "columns": cols}
        if kind == "gaussian":
            bw = comp.get("bandwidth", "median")
            entry["bandwidth"] = "median" if bw == "median" else _number(bw, f"{key}.bandwidth", True)
        else:
            if len(cols) != 1:
                raise ConfigError(f"{key}: a discrete component covers exactly one column")
            if "levels" in comp:
                levels = comp["levels"]
                if not isinstance(levels, list) or not levels:
                    raise ConfigError(f"{key}.levels must be a non-empty list")
                entry["levels"] = [_number(v, f"{key}.levels[{j}]") for j, v in enumerate(levels)]
        cfg.components.append(entry)
    seen = [c for comp in cfg.components for c in comp["columns"]]
    if len(set(seen)) != len(seen):
        raise ConfigError("kernel.components: a column appears in two components")

    cfg.functional = dict(_section(raw, "functional"))
    dml = _section(raw, "dml")
    cfg.folds = _integer(dml.get("folds", DEFAULT_FOLDS), "dml.folds", minimum=2)
    cfg.level = _number(dml.get("level", 0.95), "dml.level")
    try:
        critical_value(cfg.level)
    except ConfigError as exc:
        raise ConfigError(f"dml.level: {exc}") from exc
    cfg.lam_gamma = _lambda(dml.get("lambda_gamma", "cv"), "dml.lambda_gamma")
    cfg.lam_alpha = _lambda(dml.get("lambda_alpha", "cv"), "dml.lambda_alpha")
    if "trim" in dml:
        cfg.trim = _number(dml["trim"], "dml.trim", positive=True)
    strict = dml.get("strict", False)
    if not isinstance(strict, bool):
        raise ConfigError("dml.strict must be true or false")
    cfg.strict = strict

    tuning = _section(raw, "tuning")
    if "grid" in tuning:
        cfg.grid_gamma = cfg.grid_alpha = _grid(tuning["grid"], "tuning.grid")
    if "grid_gamma" in tuning:
        cfg.grid_gamma = _grid(tuning["grid_gamma"], "tuning.grid_gamma")
    if "grid_alpha" in tuning:
        cfg.grid_alpha = _grid(tuning["grid_alpha"], "tuning.grid_alpha")
    cfg.tune_folds = _integer(tuning.get("folds", DEFAULT_FOLDS), "tuning.folds", minimum=2)
    cfg.io = dict(_section(raw, "io"))
    return cfg


# data


def read_csv(path):
    """Header plus float columns; errors name the file, row and column."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError as exc:
        raise InputError(f"data file not found: {path}") from exc
    if not rows:
        raise InputError(f"{path}: empty file (a header row is required)")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise InputError(f"{path}: duplicate column names in header")
    body = [r for r in rows[1:] if any(cell.strip() for cell in r)]
    table = np.empty((len(body), len(header)))
    for i, r in enumerate(body):
        if len(r) != len(header):
            raise InputError(f"{path}: row {i + 2} has {len(r)} fields, header has {len(header)}")
        for j, cell in enumerate(r):
            try:
                table[i, j] = float(cell)
            except ValueError as exc:
                raise InputError(f"{path}: row {i + 2}, column '{header[j]}': not a number: {cell!r}") from exc
    if not np.all(np.isfinite(table)):
        raise InputError(f"{path}: non-finite values")
    return header, table


def _columns(header, table, names, path):
    out = []
    for name in names:
        if name not in header:
            raise InputError(f"{path}: missing column '{name}' (columns: {', '.join(header)})")
        out.append(table[:, header.index(name)])
    return np.column_stack(out) if out else np.empty((table.shape[0], 0))


@dataclass
class Problem:
    W: np.ndarray
    Y: np.ndarray
    spec: KernelSpec
    functional: object
    columns: list


def _resolve_path(cfg, value):
    p = Path(value)
    return p if p.is_absolute() else cfg.base / p


def _value(fcfg, key, default=None, required=False):
    if key in fcfg:
        return _number(fcfg[key], f"functional.{key}")
    if required:
        raise ConfigError(f"functional.{key} is required")
    return default


def _column_index(columns, name, key):
    if not isinstance(name, str):
        raise ConfigError(f"{key} must be a column name")
    if name not in columns:
        raise ConfigError(f"{key} = '{name}' is not a kernel column")
    return columns.index(name)


def build_problem(cfg: RunConfig, data_path=None) -> Problem:
    if not cfg.components:
        raise ConfigError("kernel.components is empty")
    if data_path is None:
        if "data" not in cfg.io:
            raise ConfigError("no data file: pass --data or set io.data")
        data_path = _resolve_path(cfg, cfg.io["data"])
    header, table = read_csv(data_path)
    columns = cfg.feature_columns
    W = _columns(header, table, columns, data_path)
    Y = _columns(header, table, [OUTCOME], data_path)[:, 0]
    comps = []
    for comp in cfg.components:
        idx = [columns.index(c) for c in comp["columns"]]
        if comp["kind"] == "gaussian":
            h = comp["bandwidth"]
            if h == "median":
                h = median_bandwidth(W[:, idx])
            comps.append(Gaussian(tuple(idx), h))
        else:
            levels = comp.get("levels")
            if levels is None:
                levels = sorted(set(W[:, idx[0]].tolist()))
            comps.append(DiscreteIdentity(idx[0], tuple(levels)))
    spec = KernelSpec(comps)
    f = build_functional(cfg, columns, spec)
    spec.check(W)
    return Problem(W=W, Y=Y, spec=spec, functional=f, columns=columns)


FUNCTIONAL_KEYS = {
    "evaluation": {"kind", "point"},
    "ate": {"kind", "level", "treatment"},
    "ate_ds": {"kind", "level", "treatment"},
    "att": {"kind", "level", "condition", "treatment"},
    "cate": {"kind", "level", "sublevel", "treatment", "subcovariate"},
    "incremental": {"kind", "treatment", "density", "draws", "mc_seed"},
}


def build_functional(cfg: RunConfig, columns, spec):
    fcfg = cfg.functional
    kind = fcfg.get("kind")
    if kind not in FUNCTIONAL_KEYS:
        raise ConfigError(f"functional.kind must be one of {sorted(FUNCTIONAL_KEYS)}, got {kind!r}")
    unknown = set(fcfg) - FUNCTIONAL_KEYS[kind]
    if unknown:
        raise ConfigError(f"functional: unknown key(s) {sorted(unknown)} for kind '{kind}'")
    if kind == "evaluation":
        point = fcfg.get("point")
        if not isinstance(point, dict):
            raise ConfigError("functional.point must be a table {column = value}")
        missing = [c for c in columns if c not in point]
        if missing:
            raise ConfigError(f"functional.point is missing column(s) {missing}")
        extra = [c for c in point if c not in columns]
        if extra:
            raise ConfigError(f"functional.point names unknown column(s) {extra}")
        f = Evaluation(tuple(_number(point[c], f"functional.point.{c}") for c in columns))
    else:
        t = _column_index(columns, fcfg.get("treatment", "d"), "functional.treatment")
        if kind == "ate":
            f = ATE(_value(fcfg, "level", required=True), treatment=t)
        elif kind == "ate_ds":
            alt_path = cfg.io.get("alternative")
            if alt_path is None:
                raise ConfigError("functional 'ate_ds' needs io.alternative (CSV of the alternative population)")
            alt_path = _resolve_path(cfg, alt_path)
            header, table = read_csv(alt_path)
            cov = [c for c in columns if c != columns[t]]
            alt = np.zeros((table.shape[0], len(columns)))
            alt[:, [columns.index(c) for c in cov]] = _columns(header, table, cov, alt_path)
            level = _value(fcfg, "level", required=True)
            alt[:, t] = level
            spec.check(alt)
            f = ATEDS(level, treatment=t, alternative=alt)
        elif kind == "att":
            f = ATT(_value(fcfg, "level", required=True), _value(fcfg, "condition", required=True), treatment=t)
        elif kind == "cate":
            v = _column_index(columns, fcfg.get("subcovariate", "v"), "functional.subcovariate")
            f = CATE(_value(fcfg, "level", required=True), _value(fcfg, "sublevel", required=True),
                     treatment=t, subcovariate=v)
        else:
            f = Incremental(_density(fcfg.get("density", {})),
                            draws=_integer(fcfg.get("draws", 100), "functional.draws", minimum=1),
                            seed=_integer(fcfg.get("mc_seed", cfg.seed), "functional.mc_seed", minimum=0),
                            treatment=t)
    f.validate(spec)
    return f


def _density(dcfg):
    if not isinstance(dcfg, dict):
        raise ConfigError("functional.density must be a table")
    family = dcfg.get("family", "gaussian")
    if family == "gaussian":
        return GaussianDensity(_number(dcfg.get("mean", 0.0), "functional.density.mean"),
                               _number(dcfg.get("sd", 1.0), "functional.density.sd", positive=True))
    if family == "tabulated":
        try:
            return TabulatedDensity(tuple(dcfg["u"]), tuple(dcfg["omega"]), tuple(dcfg["domega"]))
        except KeyError as exc:
            raise ConfigError(f"functional.density: tabulated density needs key {exc}") from exc
    raise ConfigError(f"functional.density.family must be 'gaussian' or 'tabulated', got {family!r}")


# commands


def cmd_estimate(cfg: RunConfig, data_path=None) -> dict:
    prob = build_problem(cfg, data_path)
    lam_g = cfg.lam_gamma(prob.W.shape[0]) if isinstance(cfg.lam_gamma, RateSchedule) else cfg.lam_gamma
    lam_a = cfg.lam_alpha(prob.W.shape[0]) if isinstance(cfg.lam_alpha, RateSchedule) else cfg.lam_alpha
    if prob.W.shape[0] < cfg.folds:
        raise ConfigError(f"dml.folds = {cfg.folds} exceeds the sample size {prob.W.shape[0]}")
    res = fit_dml(prob.W, prob.Y, prob.functional, prob.spec, folds=cfg.folds, seed=cfg.seed,
                  lam_gamma=lam_g, lam_alpha=lam_a, level=cfg.level, trim=cfg.trim,
                  grid_gamma=cfg.grid_gamma, grid_alpha=cfg.grid_alpha, tune_folds=cfg.tune_folds,
                  strict=cfg.strict)
    out = {
        "theta_hat": res.theta_hat, "sigma_hat": res.sigma_hat, "ci": [res.ci_lower, res.ci_upper],
        "level": res.level, "n": res.n, "folds": res.folds,
        "lambda_gamma": res.lambda_gamma, "lambda_alpha": res.lambda_alpha,
    }
    if res.ratio is not None:
        r = res.ratio
        out["ratio"] = {"beta_hat": r.beta_hat, "se": r.se, "ci": [r.ci_lower, r.ci_upper], "p_hat": r.p_hat}
    return out


def cmd_tune(cfg: RunConfig, data_path=None) -> dict:
    prob = build_problem(cfg, data_path)
    if prob.W.shape[0] < cfg.tune_folds:
        raise ConfigError(f"tuning.folds = {cfg.tune_folds} exceeds the sample size {prob.W.shape[0]}")
    t: TuningResult = tune(prob.W, prob.Y, prob.functional, prob.spec, cfg.grid_gamma, cfg.grid_alpha,
                           folds=cfg.tune_folds, seed=cfg.seed)
    return {
        "lambda_gamma": t.lambda_gamma, "lambda_alpha": t.lambda_alpha,
        "cv": {
            "gamma": [{"lambda": g, "loss": l} for g, l in zip(t.grid_gamma, t.loss_gamma)],
            "alpha": [{"lambda": g, "loss": l} for g, l in zip(t.grid_alpha, t.loss_alpha)],
        },
    }


SIM_KEYS = {"dgp", "params", "n", "replications", "oracle", "out", "functional"}


def cmd_simulate(cfg: RunConfig, out_path=None):
    scfg = _section(cfg.raw, "simulate")
    unknown = set(scfg) - SIM_KEYS
    if unknown:
        raise ConfigError(f"simulate: unknown key(s) {sorted(unknown)}")
    params = scfg.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("simulate.params must be a table")
    params = {k: tuple(v) if isinstance(v, list) else v for k, v in params.items()}
    dgp = make_dgp(scfg.get("dgp", "binary_ate"), **params)
    sizes = scfg.get("n", [200])
    sizes = sizes if isinstance(sizes, list) else [sizes]
    sizes = [_integer(s, "simulate.n", minimum=cfg.folds) for s in sizes]
    R = _integer(scfg.get("replications", 100), "simulate.replications", minimum=1)
    oracle = scfg.get("oracle", False)
    if not isinstance(oracle, bool):
        raise ConfigError("simulate.oracle must be true or false")
    est_cfg = EstimationConfig(folds=cfg.folds, level=cfg.level, lam_gamma=cfg.lam_gamma,
                               lam_alpha=cfg.lam_alpha, grid_gamma=cfg.grid_gamma,
                               grid_alpha=cfg.grid_alpha, trim=cfg.trim, strict=cfg.strict, oracle=oracle)
    reports = [run_coverage(dgp, None, n, R, est_cfg, workers=cfg.threads, seed=cfg.seed) for n in sizes]
    if out_path is None:
        configured = scfg.get("out") or cfg.io.get("out")
        if configured is None:
            raise ConfigError("simulate needs an output path: --out or simulate.out")
        out_path = _resolve_path(cfg, configured)
    reports_to_csv(reports, out_path)
    return {"csv": str(out_path), "reports": [r.summary() for r in reports]}


def _print_table(rows, stream):
    width = max(len(name) for name, _, _ in rows)
    for name, ok, detail in rows:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}", file=stream)


def cmd_verify(perturb_rho=0.0, stream=None) -> bool:
    from ._verify import run_checks

    stream = stream or sys.stdout
    rows = run_checks(perturb_rho=perturb_rho)
    _print_table(rows, stream)
    ok = all(ok for _, ok, _ in rows)
    print(f"{sum(ok for _, ok, _ in rows)}/{len(rows)} checks passed", file=stream)
    return ok


def build_parser():
    parser = argparse.ArgumentParser(prog="riesz-dml", description="Debiased kernel estimation of linear functionals.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("estimate", "cross-fitted estimate with a confidence interval"),
                           ("tune", "cross-validate the ridge penalties")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True)
        p.add_argument("--data")
        p.add_argument("--out", help="write JSON here instead of standard output")
    p = sub.add_parser("simulate", help="Monte Carlo coverage study")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="CSV report path")
    p = sub.add_parser("verify", help="run the built-in oracle checks")
    p.add_argument("--config", help="ignored; accepted for a uniform interface")
    p.add_argument("--perturb-rho", type=float, default=0.0,
                   help="add this constant to every fitted Riesz coefficient (sensitivity check)")
    return parser


def _emit(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            return EXIT_OK if cmd_verify(args.perturb_rho) else EXIT_FAIL
        cfg = load_config(args.config)
        if args.command == "estimate":
            _emit(dumps(cmd_estimate(cfg, args.data)), args.out)
        elif args.command == "tune":
            _emit(dumps(cmd_tune(cfg, args.data)), args.out)
        else:
            sys.stdout.write(dumps(cmd_simulate(cfg, args.out)))
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InputError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except HarnessError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except RieszDMLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
