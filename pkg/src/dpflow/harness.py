"""Experiment runner: sweeps over (p, T, c_clip) with CSV/SVG output.

Each task draws its instances from the same recipe — data and features from
the per-seed streams, step size eta = 0.1 * n / (2 lambda_max(K)) unless
pinned in the config, noise recalibrated from the realized eta*T — runs the
descent, and scores iterates against a shared Monte Carlo test draw. Sweep
cells are independent jobs; results are merged by sort key, never by
completion order, so a run is reproducible cell for cell.

Output conventions: one CSV per task named <task>.csv (plus <task>_summary.csv
where a task reduces its rows), floats printed with 17 significant digits,
booleans as true/false; optional SVG figures named <task>_<timestamp>.svg.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from typing import Callable, NamedTuple

import numpy as np

from .diagnostics import regime_check, spectrum_report
from .dp_gd import DPGDConfig, DivergenceError, run_dp_gd
from .dynamics import (SpectralDecomp, decompose, excess_risk,
                       min_norm_solution, population_risks)
from .privacy import PrivacyBudget, calibrate_sigma, scaling_hyperparams, verify_tail
from .rf_model import Dataset, FeatureMap, featurize, init_features, sample_data

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "SCHEMAS",
    "TASKS",
    "TaskResult",
    "run_task",
]

TASKS = ("sweep_p", "sweep_T", "grid_clip_T", "collapse", "calibrate", "diagnose")

SCHEMAS: dict[str, list[str]] = {
    "sweep_p": [
        "p", "seed", "eta", "steps", "eta_t", "tau", "c_clip", "sigma",
        "epsilon", "delta", "accountant_ok", "risk_private", "stderr_private",
        "risk_baseline", "stderr_baseline", "excess", "stderr_excess", "diverged",
    ],
    "sweep_T": [
        "p", "T", "seed", "eta", "eta_t", "c_clip", "sigma", "epsilon",
        "delta", "accountant_ok", "risk_private", "stderr_private", "diverged",
    ],
    "collapse": [
        "p", "tau_scaled", "seed", "T", "eta", "eta_t", "abscissa",
        "abscissa_control", "c_clip", "sigma", "epsilon", "delta",
        "accountant_ok", "risk_private", "stderr_private", "diverged",
    ],
    "collapse_summary": [
        "p_low", "p_high", "grid_points", "max_discrepancy",
        "max_discrepancy_control",
    ],
    "grid_clip_T": [
        "p", "c_coef", "c_clip", "T", "seed", "eta", "eta_t", "sigma",
        "epsilon", "delta", "accountant_ok", "risk_private", "stderr_private",
        "diverged",
    ],
    "grid_clip_T_summary": ["corner", "c_clip", "T", "mean_loss"],
    "calibrate": [
        "n", "d", "p", "epsilon", "delta", "tau", "c_clip", "sigma", "Sigma",
        "eta", "steps",
    ],
    "diagnose": [
        "n", "d", "p", "seed", "lambda_d", "lambda_d_plus_1", "lambda_min",
        "gap_ratio", "n_sq_over_p", "log_p_over_log_n", "n_over_d_log2d",
        "n_log3d_over_d32", "in_regime",
    ],
}


class ConfigError(ValueError):
    """Bad or inconsistent experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a task plus every knob it can read.

    ``delta = None`` means 1/n; ``eta = None`` means the per-instance default
    0.1 * n / (2 lambda_max(K)). ``clip_list`` holds literal clipping radii
    for the grid task; when absent the grid uses ``clip_coef_list`` * sqrt(p).
    The DP schedules elsewhere use tau = tau_coef * d / p and
    c_clip = clip_coef * sqrt(p).

    ``sigma_override`` / ``clip_override`` replace the calibrated noise scale
    and the scheduled clipping radius (math.inf disables clipping; the grid
    task keeps its explicit clip axis). They exist to degrade the private
    runs into plain descent for sanity checks; accountant_ok reports false
    whenever noise is forced off.
    """

    task: str
    n: int = 500
    d: int = 50
    p_list: tuple[int, ...] = (100, 250, 500, 1000, 2000, 5000)
    T_list: tuple[int, ...] = (1, 6, 36, 216, 1296)
    clip_list: tuple[float, ...] | None = None
    clip_coef_list: tuple[float, ...] = (0.02, 0.1, 0.5, 2.5, 12.5)
    tau_scaled_list: tuple[float, ...] = (0.5, 1.0, 2.0, 4.0, 8.0)
    epsilon: float = 4.0
    delta: float | None = None
    eta: float | None = None
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    m: int = 20_000
    tau_coef: float = 4.0
    clip_coef: float = 0.5
    sigma_override: float | None = None
    clip_override: float | None = None
    output_dir: str = "results"
    workers: int = 1
    make_plots: bool = True

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; choose from {TASKS}")
        if self.n < 2 or self.d < 1:
            raise ConfigError(f"need n >= 2 and d >= 1, got n={self.n}, d={self.d}")
        for name in ("p_list", "T_list", "tau_scaled_list", "seeds"):
            axis = getattr(self, name)
            if len(axis) == 0:
                raise ConfigError(f"{name} must be nonempty")
        if self.clip_list is not None and len(self.clip_list) == 0:
            raise ConfigError("clip_list must be nonempty when given")
        if any(p < 1 for p in self.p_list):
            raise ConfigError("p_list entries must be positive")
        if any(t < 0 for t in self.T_list):
            raise ConfigError("T_list entries must be nonnegative")
        if self.m < 100:
            raise ConfigError(f"m must be at least 100, got {self.m}")
        if self.eta is not None and not self.eta > 0.0:
            raise ConfigError(f"eta must be positive when given, got {self.eta}")
        if self.sigma_override is not None and self.sigma_override < 0.0:
            raise ConfigError(f"sigma_override must be nonnegative, got {self.sigma_override}")
        if self.clip_override is not None and not self.clip_override > 0.0:
            raise ConfigError(f"clip_override must be positive, got {self.clip_override}")
        if self.workers < 1:
            raise ConfigError(f"workers must be positive, got {self.workers}")
        try:
            self.budget()
        except ValueError as exc:
            raise ConfigError(f"bad privacy budget: {exc}") from None

    @property
    def delta_effective(self) -> float:
        return 1.0 / self.n if self.delta is None else self.delta

    def budget(self) -> PrivacyBudget:
        return PrivacyBudget(epsilon=self.epsilon, delta=self.delta_effective)

    @classmethod
    def from_json(cls, path, **overrides) -> "ExperimentConfig":
        """Load a config file; keyword overrides (CLI flags) win on conflict."""
        with open(path) as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"{path}: unknown keys {unknown}")
        raw.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(raw)

    @classmethod
    def from_mapping(cls, raw: dict) -> "ExperimentConfig":
        """Build a config from plain JSON-ish values (lists become tuples)."""
        for key in ("p_list", "T_list", "seeds"):
            if key in raw and raw[key] is not None:
                raw[key] = tuple(int(v) for v in raw[key])
        for key in ("clip_list", "clip_coef_list", "tau_scaled_list"):
            if key in raw and raw[key] is not None:
                raw[key] = tuple(float(v) for v in raw[key])
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


class TaskResult(NamedTuple):
    rows: list[dict]
    paths: dict[str, str]
    summary: dict


# ----------------------------------------------------------------------
# shared plumbing
# ----------------------------------------------------------------------

class _Instance(NamedTuple):
    ds: Dataset
    fm: FeatureMap
    phi: np.ndarray
    sd: SpectralDecomp
    eta: float


def _prepare(cfg: ExperimentConfig, p: int, seed: int) -> _Instance:
    ds = sample_data(cfg.n, cfg.d, seed)
    fm = init_features(p, cfg.d, seed)
    phi = featurize(fm, ds.X)
    sd = decompose(fm, ds, phi=phi)
    lam_max = float(sd.eigvals_K[0])
    eta = cfg.eta if cfg.eta is not None else 0.1 * cfg.n / (2.0 * lam_max)
    return _Instance(ds=ds, fm=fm, phi=phi, sd=sd, eta=eta)


def _run_cell(cfg, inst, steps, c_clip, seed):
    """One DP run inside a sweep; divergence is reported, not raised."""
    eta_t = inst.eta * steps
    sigma = calibrate_sigma(cfg.budget(), eta_t)
    if cfg.sigma_override is not None:
        sigma = cfg.sigma_override
    if steps == 0:
        audit = True
    elif sigma > 0.0:
        audit = verify_tail(cfg.budget(), inst.eta, sigma, steps).ok
    else:
        audit = False
    run = DPGDConfig(eta=inst.eta, steps=steps, c_clip=c_clip, sigma=sigma)
    try:
        theta = run_dp_gd(run, inst.fm, inst.ds, seed=seed, phi=inst.phi).final
        diverged = False
    except DivergenceError:
        theta = None
        diverged = True
    return theta, sigma, eta_t, audit, diverged


def _pool_map(jobs: list[tuple], fn: Callable, workers: int) -> list:
    """Run fn over keyed jobs, returning results in key order."""
    if workers <= 1:
        return [fn(*args) for _, args in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *args) for _, args in jobs]
        return [f.result() for f in futures]


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    if value is None:
        return ""
    return str(value)


def _write_csv(path: str, schema_name: str, rows: list[dict]) -> None:
    columns = SCHEMAS[schema_name]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row[c]) for c in columns])


def _svg_path(cfg: ExperimentConfig, task: str) -> str:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    return os.path.join(cfg.output_dir, f"{task}_{stamp}.svg")


# ----------------------------------------------------------------------
# tasks
# ----------------------------------------------------------------------

def _schedule_radius(cfg: ExperimentConfig, p: int) -> float:
    """Clipping radius of the scheduled sweeps (grid cells set their own)."""
    if cfg.clip_override is not None:
        return cfg.clip_override
    return cfg.clip_coef * math.sqrt(p)


def _sweep_p_job(cfg: ExperimentConfig, p: int, seed: int) -> dict:
    inst = _prepare(cfg, p, seed)
    tau = cfg.tau_coef * cfg.d / p
    steps = max(1, math.ceil(tau / inst.eta))
    c_clip = _schedule_radius(cfg, p)
    theta, sigma, eta_t, audit, diverged = _run_cell(cfg, inst, steps, c_clip, seed)
    baseline = min_norm_solution(inst.sd, inst.ds.Y)
    if diverged:
        (rb,), (sb,) = population_risks(baseline, inst.fm, inst.ds.u,
                                        m=cfg.m, seed=seed)
        risk = dict(risk_private=math.nan, stderr_private=math.nan,
                    risk_baseline=float(rb), stderr_baseline=float(sb),
                    excess=math.nan, stderr_excess=math.nan)
    else:
        rr = excess_risk(theta, baseline, inst.fm, inst.ds.u, m=cfg.m, seed=seed)
        risk = dict(risk_private=rr.risk_private, stderr_private=rr.stderr_private,
                    risk_baseline=rr.risk_baseline, stderr_baseline=rr.stderr_baseline,
                    excess=rr.excess, stderr_excess=rr.stderr_excess)
    return dict(p=p, seed=seed, eta=inst.eta, steps=steps, eta_t=eta_t, tau=tau,
                c_clip=c_clip, sigma=sigma, epsilon=cfg.epsilon,
                delta=cfg.delta_effective, accountant_ok=audit,
                diverged=diverged, **risk)


def _sweep_p(cfg: ExperimentConfig) -> TaskResult:
    jobs = [((p, seed), (cfg, p, seed))
            for p in sorted(cfg.p_list) for seed in sorted(cfg.seeds)]
    rows = _pool_map(jobs, _sweep_p_job, cfg.workers)
    return TaskResult(rows=rows, paths={}, summary={})


def _multi_T_job(cfg: ExperimentConfig, p: int, seed: int,
                 steps_of: Callable[[_Instance], list[dict]]) -> list[dict]:
    """Shared driver: run several step counts on one instance, score once."""
    inst = _prepare(cfg, p, seed)
    cells = steps_of(inst)
    finals = []
    for cell in cells:
        theta, sigma, eta_t, audit, diverged = _run_cell(
            cfg, inst, cell["T"], cell["c_clip"], seed)
        cell.update(p=p, seed=seed, eta=inst.eta, eta_t=eta_t, sigma=sigma,
                    epsilon=cfg.epsilon, delta=cfg.delta_effective,
                    accountant_ok=audit, diverged=diverged,
                    risk_private=math.nan, stderr_private=math.nan)
        if not diverged:
            finals.append((len(finals), cell, theta))
    if finals:
        thetas = np.stack([th for _, _, th in finals])
        means, errs = population_risks(thetas, inst.fm, inst.ds.u,
                                       m=cfg.m, seed=seed)
        for j, cell, _ in finals:
            cell["risk_private"] = float(means[j])
            cell["stderr_private"] = float(errs[j])
    return cells


def _sweep_T(cfg: ExperimentConfig) -> TaskResult:
    def cells_for(inst: _Instance) -> list[dict]:
        c = _schedule_radius(cfg, inst.fm.p)
        return [{"T": t, "c_clip": c} for t in sorted(cfg.T_list)]

    jobs = [((p, seed), (cfg, p, seed, cells_for))
            for p in sorted(cfg.p_list) for seed in sorted(cfg.seeds)]
    nested = _pool_map(jobs, _multi_T_job, cfg.workers)
    rows = [row for group in nested for row in group]
    rows.sort(key=lambda r: (r["p"], r["T"], r["seed"]))
    return TaskResult(rows=rows, paths={}, summary={})


def _collapse(cfg: ExperimentConfig) -> TaskResult:
    def cells_for(inst: _Instance) -> list[dict]:
        p = inst.fm.p
        c = _schedule_radius(cfg, p)
        out = []
        for ts in sorted(cfg.tau_scaled_list):
            steps = max(1, math.ceil(ts * cfg.d / (p * inst.eta)))
            out.append({"T": steps, "c_clip": c, "tau_scaled": ts})
        return out

    jobs = [((p, seed), (cfg, p, seed, cells_for))
            for p in sorted(cfg.p_list) for seed in sorted(cfg.seeds)]
    nested = _pool_map(jobs, _multi_T_job, cfg.workers)
    rows = [row for group in nested for row in group]
    for row in rows:
        row["abscissa"] = row["eta_t"] * row["p"] / cfg.d
        row["abscissa_control"] = row["eta_t"] * cfg.d / row["p"]
    rows.sort(key=lambda r: (r["p"], r["tau_scaled"], r["seed"]))
    summary_rows = _collapse_summary(cfg, rows)
    summary = {
        "max_discrepancy": max((r["max_discrepancy"] for r in summary_rows),
                               default=0.0),
        "max_discrepancy_control": max(
            (r["max_discrepancy_control"] for r in summary_rows), default=0.0),
        "pairs": summary_rows,
    }
    return TaskResult(rows=rows, paths={}, summary=summary)


def _mean_curve(rows: list[dict], p: int, x_key: str) -> tuple[np.ndarray, np.ndarray]:
    """Seed-averaged loss curve for one p, sorted along the given abscissa."""
    pts: dict[float, list] = {}
    for r in rows:
        if r["p"] == p and not r["diverged"]:
            pts.setdefault(r["tau_scaled"], []).append((r[x_key], r["risk_private"]))
    xs, ys = [], []
    for ts in sorted(pts):
        block = np.asarray(pts[ts])
        xs.append(block[:, 0].mean())
        ys.append(block[:, 1].mean())
    return np.asarray(xs), np.asarray(ys)


def _pair_discrepancy(curve_a, curve_b, grid_points: int = 25) -> float:
    """Max gap between two curves, interpolated in log-abscissa on the
    overlap of their ranges; NaN if the ranges do not overlap."""
    (xa, ya), (xb, yb) = curve_a, curve_b
    lo = max(xa.min(), xb.min())
    hi = min(xa.max(), xb.max())
    if not lo < hi:
        return math.nan
    grid = np.geomspace(lo, hi, grid_points)
    fa = np.interp(np.log(grid), np.log(xa), ya)
    fb = np.interp(np.log(grid), np.log(xb), yb)
    return float(np.max(np.abs(fa - fb)))


def _collapse_summary(cfg: ExperimentConfig, rows: list[dict]) -> list[dict]:
    ps = sorted(set(cfg.p_list))
    out = []
    if len(ps) == 1:
        out.append(dict(p_low=ps[0], p_high=ps[0], grid_points=0,
                        max_discrepancy=0.0, max_discrepancy_control=0.0))
        return out
    for i, p_low in enumerate(ps):
        for p_high in ps[i + 1:]:
            matched = _pair_discrepancy(
                _mean_curve(rows, p_low, "abscissa"),
                _mean_curve(rows, p_high, "abscissa"))
            control = _pair_discrepancy(
                _mean_curve(rows, p_low, "abscissa_control"),
                _mean_curve(rows, p_high, "abscissa_control"))
            out.append(dict(p_low=p_low, p_high=p_high, grid_points=25,
                            max_discrepancy=matched,
                            max_discrepancy_control=control))
    return out


def _grid_radii(cfg: ExperimentConfig, p: int) -> list[float]:
    if cfg.clip_list is not None:
        return sorted(cfg.clip_list)
    return [coef * math.sqrt(p) for coef in sorted(cfg.clip_coef_list)]


def _grid_clip_T(cfg: ExperimentConfig) -> TaskResult:
    p = sorted(cfg.p_list)[0]
    radii = _grid_radii(cfg, p)

    def cells_for(inst: _Instance) -> list[dict]:
        return [{"T": t, "c_clip": c, "c_coef": c / math.sqrt(p)}
                for c in radii for t in sorted(cfg.T_list)]

    jobs = [((seed,), (cfg, p, seed, cells_for)) for seed in sorted(cfg.seeds)]
    nested = _pool_map(jobs, _multi_T_job, cfg.workers)
    rows = [row for group in nested for row in group]
    rows.sort(key=lambda r: (r["c_clip"], r["T"], r["seed"]))

    t_lo, t_hi = min(cfg.T_list), max(cfg.T_list)
    c_lo, c_hi = radii[0], radii[-1]
    corners = {
        "bottom_left": (c_lo, t_lo), "bottom_right": (c_hi, t_lo),
        "top_left": (c_lo, t_hi), "top_right": (c_hi, t_hi),
    }
    summary_rows = []
    for name, (c, t) in corners.items():
        cell = [r["risk_private"] for r in rows
                if r["c_clip"] == c and r["T"] == t and not r["diverged"]]
        mean_loss = float(np.mean(cell)) if cell else math.nan
        summary_rows.append(dict(corner=name, c_clip=c, T=t, mean_loss=mean_loss))
    summary = {row["corner"]: row["mean_loss"] for row in summary_rows}
    summary["rows"] = summary_rows
    return TaskResult(rows=rows, paths={}, summary=summary)


def _calibrate(cfg: ExperimentConfig) -> TaskResult:
    p = sorted(cfg.p_list)[0]
    hp = scaling_hyperparams(cfg.n, cfg.d, p, cfg.budget())
    row = dict(n=cfg.n, d=cfg.d, p=p, epsilon=cfg.epsilon,
               delta=cfg.delta_effective, tau=hp.tau, c_clip=hp.c_clip,
               sigma=hp.sigma, Sigma=hp.Sigma, eta=cfg.eta, steps=None)
    if cfg.eta is not None:
        steps = max(1, math.ceil(hp.tau / cfg.eta))
        row["steps"] = steps
        row["sigma"] = calibrate_sigma(cfg.budget(), cfg.eta * steps)
        row["Sigma"] = 2.0 * hp.c_clip * row["sigma"] / cfg.n
    return TaskResult(rows=[row], paths={}, summary=dict(row))


def _diagnose_job(cfg: ExperimentConfig, p: int, seed: int) -> dict:
    inst = _prepare(cfg, p, seed)
    spec = spectrum_report(inst.sd, cfg.d)
    reg = regime_check(cfg.n, cfg.d, p)
    return dict(n=cfg.n, d=cfg.d, p=p, seed=seed,
                lambda_d=spec.lambda_d, lambda_d_plus_1=spec.lambda_d_plus_1,
                lambda_min=spec.lambda_min, gap_ratio=spec.gap_ratio,
                n_sq_over_p=reg.n_sq_over_p,
                log_p_over_log_n=reg.log_p_over_log_n,
                n_over_d_log2d=reg.n_over_d_log2d,
                n_log3d_over_d32=reg.n_log3d_over_d32,
                in_regime=reg.in_regime)


def _diagnose(cfg: ExperimentConfig) -> TaskResult:
    p = sorted(cfg.p_list)[0]
    jobs = [((seed,), (cfg, p, seed)) for seed in sorted(cfg.seeds)]
    rows = _pool_map(jobs, _diagnose_job, cfg.workers)
    return TaskResult(rows=rows, paths={}, summary={})


_RUNNERS = {
    "sweep_p": _sweep_p,
    "sweep_T": _sweep_T,
    "collapse": _collapse,
    "grid_clip_T": _grid_clip_T,
    "calibrate": _calibrate,
    "diagnose": _diagnose,
}


def run_task(cfg: ExperimentConfig) -> TaskResult:
    """Execute one configured task; write its CSV (and SVG) outputs."""
    os.makedirs(cfg.output_dir, exist_ok=True)
    result = _RUNNERS[cfg.task](cfg)

    paths = dict(result.paths)
    csv_path = os.path.join(cfg.output_dir, f"{cfg.task}.csv")
    _write_csv(csv_path, cfg.task, result.rows)
    paths["csv"] = csv_path
    if cfg.task == "collapse":
        spath = os.path.join(cfg.output_dir, "collapse_summary.csv")
        _write_csv(spath, "collapse_summary", result.summary["pairs"])
        paths["summary_csv"] = spath
    elif cfg.task == "grid_clip_T":
        spath = os.path.join(cfg.output_dir, "grid_clip_T_summary.csv")
        _write_csv(spath, "grid_clip_T_summary", result.summary["rows"])
        paths["summary_csv"] = spath

    if cfg.make_plots and cfg.task not in ("calibrate", "diagnose"):
        from . import plotting
        svg = _svg_path(cfg, cfg.task)
        plotter = getattr(plotting, f"plot_{cfg.task}")
        plotter(result.rows, svg)
        paths["svg"] = svg

    return TaskResult(rows=result.rows, paths=paths, summary=result.summary)
