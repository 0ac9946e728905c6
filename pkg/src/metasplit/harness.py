"""Experiment runners for the estimation-error figures and the counterexample, plus CSV/SVG output.

Every runner takes an ``ExperimentConfig`` and returns ``ResultRow``s sorted
by ``(coordinate, method)``. Random streams are derived from the seed, the
experiment and the grid / replicate indices, so results do not depend on the
thread count.

Method tags: ``trtr`` is the non-split ERM, ``sp_n1_<k>`` the split ERM with
``k`` inner training rows, and ``reference_*`` rows come from the
``asymptotics`` module.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from . import asymptotics as asy
from .numerics import Rng
from .oracles import counterexample_erm_gap, counterexample_minimizers_exact
from .solvers import QuadraticAccumulator, erm_solve, nonsplit_quadratic_stack, split_quadratic_stack
from .tasks import RealizableModel, SplitConfig, sample_realizable_tasks

EXPERIMENTS = ("fig_a", "fig_b", "fig_c", "counterexample", "rates")
# Fixed stream ids; never reorder.
_STREAM_ID = {"fig_a": 1, "fig_b": 2, "fig_c": 3, "counterexample": 4, "rates": 5}
_REPLICATE, _REFERENCE = 0, 1

SPLIT_LAMBDA = 1e4
DEFAULT_GAMMA_GRID = (0.1, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5, 2.75, 3.0)
FIG_A_LAMBDA_GRID = tuple(10.0**k for k in range(-2, 5))
CSV_HEADER = ("experiment", "coordinate", "method", "value", "stderr", "replicates")

_DEFAULTS = {
    "fig_a": dict(n=20, n1=5, gamma_grid=DEFAULT_GAMMA_GRID),
    "fig_b": dict(d=60, n=20, n1=5, t_grid=(20, 50, 100, 200, 500, 1000)),
    "fig_c": dict(n=20, n1=5, t_grid=(1000,), gamma_grid=DEFAULT_GAMMA_GRID),
    "counterexample": dict(n=5, lam=1.0, t_grid=(1000, 10_000, 100_000), replicates=10),
    "rates": dict(d=60, n=20, n1=0, lam=1.0),
}


class ConfigError(ValueError):
    pass


def mc_budget(d: int) -> int:
    """Default number of Monte-Carlo spectra: enough to resolve a 2% gap."""
    return 2000 if d <= 100 else 200


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int
    d: int | None = None
    n: int | None = None
    n1: int | None = None
    lam: float | None = None
    t_grid: tuple[int, ...] | None = None
    gamma_grid: tuple[float, ...] | None = None
    replicates: int | None = None
    mc_samples: int | None = None
    r_sq: float = 1.0
    output_dir: str = "results"
    log_scale: bool = True

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if not 0 <= self.seed < 1 << 64:
            raise ConfigError(f"seed must fit in 64 bits, got {self.seed}")
        for name in ("t_grid", "gamma_grid"):
            grid = getattr(self, name)
            if grid is None:
                continue
            if len(grid) == 0 or any(b <= a for a, b in zip(grid, grid[1:])):
                raise ConfigError(f"{name} must be nonempty and strictly increasing")
            if grid[0] <= 0:
                raise ConfigError(f"{name} entries must be positive")
        for name in ("d", "n", "replicates", "mc_samples"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigError(f"{name} must be >= 1, got {v}")
        if self.n1 is not None and self.n1 < 0:
            raise ConfigError("n1 must be >= 0")
        if self.lam is not None and not (math.isfinite(self.lam) and self.lam > 0):
            raise ConfigError("lambda must be finite and > 0")
        if not (math.isfinite(self.r_sq) and self.r_sq >= 0):
            raise ConfigError("r_sq must be finite and >= 0")

    def resolved(self) -> "ExperimentConfig":
        """Fill unset fields with the experiment's defaults and check cross-field constraints."""
        values = dict(replicates=50)
        values.update(_DEFAULTS[self.experiment])
        values.update({k: v for k, v in asdict(self).items() if v is not None})
        cfg = replace(self, **values)
        if cfg.n is not None and cfg.n1 is not None and cfg.experiment != "counterexample":
            if cfg.n1 >= cfg.n:
                raise ConfigError(f"n1={cfg.n1} must leave a validation row (n={cfg.n})")
        if cfg.experiment == "counterexample":
            n1 = cfg.n - 1 if cfg.n1 is None else cfg.n1
            if not 1 <= n1 < cfg.n:
                raise ConfigError(f"counterexample needs 1 <= n1 < n, got n1={n1}, n={cfg.n}")
            if cfg.t_grid[0] < 100:
                raise ConfigError("counterexample T-grid entries must be >= 100")
            cfg = replace(cfg, n1=n1)
        return cfg


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    coordinate: float
    method: str
    value: float
    stderr: float
    replicates: int

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"non-finite value in row {self}")
        if not self.stderr >= 0:
            raise ValueError(f"negative stderr in row {self}")


# --- config file ------------------------------------------------------------

_INT_KEYS = ("seed", "d", "n", "n1", "replicates", "mc_samples")
_KEY_ALIASES = {"lambda": "lam"}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def parse_config(pairs: dict) -> ExperimentConfig:
    """Build a config from string key-value pairs (the config-file vocabulary)."""
    known = {f.name for f in fields(ExperimentConfig)}
    kwargs = {}
    try:
        for raw_key, text in pairs.items():
            key = _KEY_ALIASES.get(raw_key, raw_key)
            if key not in known:
                raise ConfigError(f"unknown config key {raw_key!r}")
            text = str(text).strip()
            if key in _INT_KEYS:
                kwargs[key] = int(text)
            elif key in ("lam", "r_sq"):
                kwargs[key] = float(text)
            elif key == "t_grid":
                kwargs[key] = tuple(int(float(t)) for t in text.split(","))
            elif key == "gamma_grid":
                kwargs[key] = tuple(float(t) for t in text.split(","))
            elif key == "log_scale":
                kwargs[key] = _parse_bool(text)
            else:
                kwargs[key] = text
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    for key in ("experiment", "seed"):
        if key not in kwargs:
            raise ConfigError(f"missing config key {key!r}")
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def read_config_file(path) -> dict:
    """Read a flat ``key = value`` file; ``#`` starts a comment."""
    pairs = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            if key in pairs:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            pairs[key] = value
    return pairs


def load_config(path) -> ExperimentConfig:
    return parse_config(read_config_file(path))


# --- shared helpers -----------------------------------------------------------


def _map(fn, items, threads: int):
    items = list(items)
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _streams(cfg: ExperimentConfig) -> tuple[Rng, Rng]:
    base = Rng(cfg.seed).derive(_STREAM_ID[cfg.experiment])
    return base.derive(_REPLICATE), base.derive(_REFERENCE)


def _mean_se(values) -> tuple[float, float]:
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        return float(values.mean()), 0.0
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))


def _sorted(rows):
    return sorted(rows, key=lambda r: (r.coordinate, r.method))


def _rate_row(experiment, coordinate, method, est: asy.RateEstimate, scale: float = 1.0) -> ResultRow:
    return ResultRow(experiment, float(coordinate), method, est.value * scale, est.stderr * scale, 0)


def _const_row(experiment, coordinate, method, value: float) -> ResultRow:
    return ResultRow(experiment, float(coordinate), method, float(value), 0.0, 0)


def shape_dim(gamma: float, n: int) -> int:
    return max(1, int(round(gamma * n)))


def tune_trtr_lambda(d: int, n: int, samples: int, rng: Rng) -> float:
    """Start from the proportional-limit optimum and refine on a 5-point log grid with Monte Carlo."""
    start = asy.optimize_rho(d / n).lambda_star
    grid = start * 2.0 ** np.array([-1.0, -0.5, 0.0, 0.5, 1.0])
    values = [asy.rho_trtr_mc(d, n, float(lam), samples, rng).value for lam in grid]
    return float(grid[int(np.argmin(values))])


def _methods(n: int, n1: int, lam_trtr: float):
    """(tag, stack builder) for the non-split and the two split estimators."""
    out = [("trtr", lambda X, Y: nonsplit_quadratic_stack(X, Y, lam_trtr))]
    for k in sorted({0, n1}):
        split = SplitConfig(k, n - k)
        out.append((f"sp_n1_{k}", lambda X, Y, s=split: split_quadratic_stack(X, Y, s, SPLIT_LAMBDA)))
    return out


def _erm_errors(model: RealizableModel, methods, t_grid, rng: Rng) -> np.ndarray:
    """Squared errors ``||w_hat - centroid||^2``, shape (methods, len(t_grid)), on nested task prefixes."""
    _, X, Y = sample_realizable_tasks(model, rng, max(t_grid))
    out = np.empty((len(methods), len(t_grid)))
    for i, (_, build) in enumerate(methods):
        A, c = build(X, Y)
        for j, T in enumerate(t_grid):
            w = erm_solve(QuadraticAccumulator.from_stacks(A[:T], c[:T]))
            out[i, j] = float(np.sum((w - model.centroid) ** 2))
    return out


def _finite_references(d, n, n1, lam_trtr, samples, rng, r_sq):
    """Finite-(n, d) AsymMSE of each estimator, keyed by reference tag."""
    refs = {"reference_trtr": asy.rho_trtr_mc(d, n, lam_trtr, samples, rng, r_sq)}
    for k in sorted({0, n1}):
        refs[f"reference_sp_n1_{k}"] = asy.rho_sp_mc(d, k, n - k, SPLIT_LAMBDA, samples, rng, r_sq)
    return refs


def _model(d, n, r_sq) -> RealizableModel:
    return RealizableModel(d, n, param_std=math.sqrt(r_sq / d))


# --- runners --------------------------------------------------------------------


def run_fig_a(config: ExperimentConfig, threads: int = 1) -> list[ResultRow]:
    """Optimal asymptotic rates against the shape ratio; analytic and Monte Carlo only."""
    cfg = _require(config, "fig_a")
    _, ref_rng = _streams(cfg)
    k = cfg.n1

    def point(item):
        i, gamma = item
        d = shape_dim(gamma, cfg.n)
        samples = cfg.mc_samples or mc_budget(d)
        rng = ref_rng.derive(i)
        sp_finite = min(
            (asy.rho_sp_mc(d, k, cfg.n - k, lam, samples, rng, cfg.r_sq) for lam in FIG_A_LAMBDA_GRID),
            key=lambda e: e.value,
        )
        return [
            _const_row("fig_a", gamma, "trtr", asy.optimize_rho(gamma).value * cfg.r_sq),
            _const_row("fig_a", gamma, "sp_n1_0", asy.sp_limit_rate(gamma) * cfg.r_sq),
            _rate_row("fig_a", gamma, f"sp_n1_{k}", sp_finite),
            _const_row("fig_a", gamma, "reference_upper_bound", asy.rho_upper_bound(gamma) * cfg.r_sq),
        ]

    rows = _map(point, enumerate(cfg.gamma_grid), threads)
    return _sorted(r for group in rows for r in group)


def run_fig_b(config: ExperimentConfig, threads: int = 1) -> list[ResultRow]:
    """Mean squared estimation error against the number of tasks, with ``AsymMSE / T`` references.

    Within a replicate the tasks for each ``T`` are a prefix of the tasks for
    the largest ``T``.
    """
    cfg = _require(config, "fig_b")
    rep_rng, ref_rng = _streams(cfg)
    samples = cfg.mc_samples or mc_budget(cfg.d)
    lam_trtr = cfg.lam or tune_trtr_lambda(cfg.d, cfg.n, samples, ref_rng.derive(0))
    model = _model(cfg.d, cfg.n, cfg.r_sq)
    methods = _methods(cfg.n, cfg.n1, lam_trtr)
    errors = np.stack(
        _map(lambda r: _erm_errors(model, methods, cfg.t_grid, rep_rng.derive(r)), range(cfg.replicates), threads)
    )
    refs = _finite_references(cfg.d, cfg.n, cfg.n1, lam_trtr, samples, ref_rng.derive(1), cfg.r_sq)
    rows = []
    for j, T in enumerate(cfg.t_grid):
        for i, (tag, _) in enumerate(methods):
            mean, se = _mean_se(errors[:, i, j])
            rows.append(ResultRow("fig_b", float(T), tag, mean, se, cfg.replicates))
        rows += [_rate_row("fig_b", T, tag, est, 1.0 / T) for tag, est in refs.items()]
    return _sorted(rows)


def run_fig_c(config: ExperimentConfig, threads: int = 1) -> list[ResultRow]:
    """``T``-scaled estimation error against ``d / n`` at a fixed number of tasks ``T``."""
    cfg = _require(config, "fig_c")
    rep_rng, ref_rng = _streams(cfg)
    T = cfg.t_grid[-1]
    rows = []
    for i, gamma in enumerate(cfg.gamma_grid):
        d = shape_dim(gamma, cfg.n)
        samples = cfg.mc_samples or mc_budget(d)
        lam_trtr = cfg.lam or tune_trtr_lambda(d, cfg.n, samples, ref_rng.derive(i, 0))
        model = _model(d, cfg.n, cfg.r_sq)
        methods = _methods(cfg.n, cfg.n1, lam_trtr)
        errors = np.stack(
            _map(lambda r: _erm_errors(model, methods, (T,), rep_rng.derive(i, r)), range(cfg.replicates), threads)
        )
        for m, (tag, _) in enumerate(methods):
            mean, se = _mean_se(T * errors[:, m, 0])
            rows.append(ResultRow("fig_c", gamma, tag, mean, se, cfg.replicates))
        refs = _finite_references(d, cfg.n, cfg.n1, lam_trtr, samples, ref_rng.derive(i, 1), cfg.r_sq)
        rows += [_rate_row("fig_c", gamma, tag, est) for tag, est in refs.items()]
        ratio = d / cfg.n
        rows.append(_const_row("fig_c", gamma, "reference_trtr_limit", asy.optimize_rho(ratio).value * cfg.r_sq))
        rows.append(_const_row("fig_c", gamma, "reference_sp_limit", asy.sp_limit_rate(ratio) * cfg.r_sq))
    return _sorted(rows)


def run_counterexample(config: ExperimentConfig, threads: int = 1) -> list[ResultRow]:
    """ERM estimates on the two-point task law against its exact population minimizers.

    Each replicate reuses one task sequence, so smaller ``T`` are prefixes.
    """
    cfg = _require(config, "counterexample")
    rep_rng, _ = _streams(cfg)
    n, n1, lam = cfg.n, cfg.n1, cfg.lam

    def replicate(r):
        return [counterexample_erm_gap(n, lam, T, rep_rng.derive(r), n1) for T in cfg.t_grid]

    fits = _map(replicate, range(cfg.replicates), threads)
    exact = counterexample_minimizers_exact(n, lam)
    target = counterexample_minimizers_exact(n1, lam).w_test_star
    rows = []
    for j, T in enumerate(cfg.t_grid):
        per_t = [f[j] for f in fits]
        for tag, values, sandwich in (
            ("trtr", [f.w_hat for f in per_t], per_t[0].stderr),
            (f"sp_n1_{n1}", [f.w_split for f in per_t], per_t[0].split_stderr),
        ):
            mean, se = _mean_se(values)
            rows.append(ResultRow("counterexample", float(T), tag, mean, se if len(values) > 1 else sandwich, len(values)))
        rows += [
            _const_row("counterexample", T, "reference_trtr_star", exact.w_trtr_star),
            _const_row("counterexample", T, "reference_test_star", exact.w_test_star),
            _const_row("counterexample", T, f"reference_test_star_n1_{n1}", target),
        ]
    return _sorted(rows)


def run_rates(config: ExperimentConfig, threads: int = 1) -> list[ResultRow]:
    """Finite-(n, d) and proportional-limit rates at one ``(d, n, n1, lambda)``."""
    cfg = _require(config, "rates")
    _, ref_rng = _streams(cfg)
    d, n, n1, lam = cfg.d, cfg.n, cfg.n1, cfg.lam
    samples = cfg.mc_samples or mc_budget(d)
    ratio = d / n
    rows = [
        _rate_row("rates", lam, "trtr", asy.rho_trtr_mc(d, n, lam, samples, ref_rng.derive(0), cfg.r_sq)),
        _rate_row("rates", lam, f"sp_n1_{n1}", asy.rho_sp_mc(d, n1, n - n1, lam, samples, ref_rng.derive(1), cfg.r_sq)),
        _rate_row("rates", lam, "reference_sp_optimal", asy.sp_optimal_rate(d, n, cfg.r_sq)),
        _const_row("rates", lam, "reference_trtr_limit", asy.rho_limit(asy.ShapePoint(lam, ratio)) * cfg.r_sq),
        _const_row("rates", lam, "reference_trtr_limit_optimal", asy.optimize_rho(ratio).value * cfg.r_sq),
        _const_row("rates", lam, "reference_sp_limit", asy.sp_limit_rate(ratio) * cfg.r_sq),
    ]
    return _sorted(rows)


RUNNERS = {
    "fig_a": run_fig_a,
    "fig_b": run_fig_b,
    "fig_c": run_fig_c,
    "counterexample": run_counterexample,
    "rates": run_rates,
}


def _require(config: ExperimentConfig, experiment: str) -> ExperimentConfig:
    if config.experiment != experiment:
        raise ConfigError(f"config is for {config.experiment!r}, not {experiment!r}")
    return config.resolved()


def trtr_lambdas(config: ExperimentConfig) -> dict:
    """Regularization used by the non-split estimator at each grid point of fig_b / fig_c.

    Recomputes the tuning on the same streams, so it matches the runners.
    """
    cfg = config.resolved()
    _, ref_rng = _streams(cfg)
    if cfg.experiment == "fig_b":
        samples = cfg.mc_samples or mc_budget(cfg.d)
        return {str(cfg.d): cfg.lam or tune_trtr_lambda(cfg.d, cfg.n, samples, ref_rng.derive(0))}
    if cfg.experiment == "fig_c":
        out = {}
        for i, gamma in enumerate(cfg.gamma_grid):
            d = shape_dim(gamma, cfg.n)
            samples = cfg.mc_samples or mc_budget(d)
            out[repr(gamma)] = cfg.lam or tune_trtr_lambda(d, cfg.n, samples, ref_rng.derive(i, 0))
        return out
    return {}


def run(config: ExperimentConfig, threads: int = 1) -> list[ResultRow]:
    return RUNNERS[config.experiment](config, threads)


# --- output -------------------------------------------------------------------------


def format_csv(rows) -> str:
    rows = list(rows)
    if not rows:
        raise ValueError("no rows to write")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in rows:
        writer.writerow([r.experiment, repr(float(r.coordinate)), r.method, repr(float(r.value)), repr(float(r.stderr)), r.replicates])
    return buf.getvalue()


def parse_csv(text: str) -> list[ResultRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if tuple(header or ()) != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {header}")
    return [
        ResultRow(exp, float(coord), method, float(value), float(se), int(reps))
        for exp, coord, method, value, se, reps in reader
    ]


def emit_csv(rows, path) -> None:
    text = format_csv(rows)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def read_csv(path) -> list[ResultRow]:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_csv(fh.read())


_AXIS_LABELS = {
    "fig_a": ("d / n", "asymptotic MSE / R^2"),
    "fig_b": ("number of tasks T", "squared error"),
    "fig_c": ("d / n", "T x squared error"),
    "counterexample": ("number of tasks T", "estimated centroid"),
    "rates": ("lambda", "rate"),
}


def emit_chart(rows, path, log_scale: bool = True) -> None:
    """Write an SVG with one series per method; references are dashed.

    With ``log_scale`` the x axis is logarithmic, and so is the y axis when
    every value is positive. Output is byte-stable across runs.
    """
    rows = list(rows)
    if not rows:
        raise ValueError("no rows to plot")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    experiment = rows[0].experiment
    with matplotlib.rc_context({"svg.hashsalt": "metasplit", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(6.4, 4.4))
        for method in sorted({r.method for r in rows}):
            series = sorted((r for r in rows if r.method == method), key=lambda r: r.coordinate)
            x = [r.coordinate for r in series]
            y = [r.value for r in series]
            err = [r.stderr for r in series]
            style = "--" if method.startswith("reference") else "-"
            if any(err):
                ax.errorbar(x, y, yerr=err, fmt=style, marker="o", ms=3, capsize=2, label=method)
            else:
                ax.plot(x, y, style, marker="." if len(x) < 30 else None, label=method)
        if log_scale:
            ax.set_xscale("log")
            if all(r.value > 0 for r in rows):
                ax.set_yscale("log")
        xlabel, ylabel = _AXIS_LABELS.get(experiment, ("coordinate", "value"))
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.set_title(experiment)
        ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def write_metadata(config: ExperimentConfig, path, extra: dict | None = None) -> None:
    """JSON record of the resolved config and fixed constants (sorted keys, no timestamps)."""
    cfg = config.resolved()
    meta = {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg).items()}
    meta.update(split_lambda=SPLIT_LAMBDA, numpy_version=np.__version__)
    if extra:
        meta.update(extra)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_outputs(config: ExperimentConfig, rows, out_dir, chart: bool = True, extra: dict | None = None) -> dict:
    """Write ``<experiment>.csv``, optional ``<experiment>.svg`` and ``metadata.json``; return the paths."""
    os.makedirs(out_dir, exist_ok=True)
    name = config.experiment
    paths = {
        "csv": os.path.join(out_dir, f"{name}.csv"),
        "metadata": os.path.join(out_dir, f"{name}.metadata.json"),
    }
    emit_csv(rows, paths["csv"])
    if chart:
        paths["chart"] = os.path.join(out_dir, f"{name}.svg")
        emit_chart(rows, paths["chart"], config.log_scale)
    write_metadata(config, paths["metadata"], extra)
    return paths
