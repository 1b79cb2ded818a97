"""Figure presets, config files and sweep orchestration.

A run evaluates one sweep axis over a grid.  Every sweep point yields one
CSV row per (series, user) with the fixed column set ``CSV_COLUMNS``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .baseline import instantaneous_scheme
from .channel import ConfigError, PhaseShifts, SystemConfig, dbm_to_watt, table_config
from .estimation import mse_nmse
from .montecarlo import MIN_TRIALS, rate_mc_report
from .optimizer import OptimizerConfig, optimize_phases, single_user_design
from .rate_analytic import ScalingLaw, asymptotic_limit, rate_correlated, rate_independent, scaled_power

CSV_COLUMNS = (
    "axis",
    "sweep_value",
    "series",
    "user",
    "closed_form_rate",
    "mc_rate",
    "mc_stderr",
    "min_rate",
    "nmse",
    "trace_mse",
    "wall_time_s",
)

AXES = ("N", "M", "p", "delta", "epsilon", "rho", "d_ris")
PHASE_POLICIES = ("zeros", "optimize", "single-user")
DESK_CAP = 64
MAX_DESK_TRIALS = 20_000


class UsageError(ValueError):
    """Bad preset, flag or config file: exit code 2."""

    def __init__(self, problems):
        self.problems = [problems] if isinstance(problems, str) else list(problems)
        super().__init__("; ".join(self.problems))


# Config files ------------------------------------------------------------------------

# fields a config file may set, with their defaults (None: from the scenario geometry)
CONFIG_DEFAULTS = {
    "M": 64,
    "N": 64,
    "K": 8,
    "p_dbm": 30.0,
    "sigma2_dbm": -104.0,
    "tau": None,
    "tau_c": 196,
    "delta": 1.0,
    "epsilon": 10.0,
    "alpha": None,
    "gamma": None,
    "beta": None,
    "angle_t": None,
    "angle_r": None,
    "angle_users": None,
    "d_bs": 0.5,
    "d_ris": 0.5,
    "rho_db": None,
    "correlated": False,
    "ris_correlation": "sinc",
    "optimizer": None,
}
OPTIMIZER_FIELDS = ("mu", "kappa_b", "shrink", "conv_tol", "max_outer", "max_backtrack", "initial_step", "restarts")


def _float(v):
    if isinstance(v, str) and v.strip().lower() in ("inf", "+inf", "infinity"):
        return math.inf
    return float(v)


def _vector(v):
    return tuple(_float(x) for x in v) if isinstance(v, (list, tuple)) else _float(v)


@dataclass(frozen=True)
class ResolvedConfig:
    config: SystemConfig | None
    values: dict  # normalised field values
    defaulted: list  # names of fields taken from defaults
    conversions: dict  # dBm field -> watts
    problems: list
    optimizer: OptimizerConfig | None = None


def resolve_config(raw: dict) -> ResolvedConfig:
    """Turn a parsed config mapping into a SystemConfig, collecting every problem."""
    problems = []
    unknown = sorted(set(raw) - set(CONFIG_DEFAULTS))
    problems += [f"unknown field {name!r}" for name in unknown]
    values = {k: raw.get(k, v) for k, v in CONFIG_DEFAULTS.items()}
    defaulted = [k for k in CONFIG_DEFAULTS if k not in raw]
    try:
        K = int(values["K"])
        M, N = int(values["M"]), int(values["N"])
        p = dbm_to_watt(_float(values["p_dbm"]))
        sigma2 = dbm_to_watt(_float(values["sigma2_dbm"]))
    except (TypeError, ValueError) as exc:
        return ResolvedConfig(None, values, defaulted, {}, problems + [f"bad scalar field: {exc}"])
    conversions = {"p_dbm": p, "sigma2_dbm": sigma2}
    kw = dict(p=p, sigma2=sigma2, tau_c=int(values["tau_c"]), d_bs=_float(values["d_bs"]), d_ris=_float(values["d_ris"]))
    kw["correlated"] = bool(values["correlated"])
    kw["ris_correlation"] = str(values["ris_correlation"])
    for name in ("delta",):
        kw[name] = _float(values[name])
    for name in ("epsilon", "alpha", "gamma"):
        if values[name] is not None:
            kw[name] = _vector(values[name])
    if values["beta"] is not None:
        kw["beta"] = _float(values["beta"])
    if values["tau"] is not None:
        kw["tau"] = int(values["tau"])
    for name in ("angle_t", "angle_r"):
        if values[name] is not None:
            kw[name] = tuple(_float(x) for x in values[name])
    if values["angle_users"] is not None:
        kw["angle_users"] = tuple(tuple(_float(x) for x in a) for a in values["angle_users"])
    elif K > 8:
        problems.append("K > 8 needs explicit angle_users (eight tabulated angles exist)")
    if values["rho_db"] is not None:
        kw["sigma_e2"] = sigma2 * 10 ** (_float(values["rho_db"]) / 10)
        conversions["rho_db"] = kw["sigma_e2"]
    opt = None
    if values["optimizer"] is not None:
        extra = sorted(set(values["optimizer"]) - set(OPTIMIZER_FIELDS))
        problems += [f"unknown optimizer field {name!r}" for name in extra]
        try:
            opt = OptimizerConfig(**{k: v for k, v in values["optimizer"].items() if k in OPTIMIZER_FIELDS})
        except ValueError as exc:
            problems.append(str(exc))
    config = None
    if not problems:
        try:
            config = table_config(M=M, N=N, K=K, **kw)
        except ConfigError as exc:
            problems += exc.problems
        except (TypeError, ValueError) as exc:
            problems.append(str(exc))
    return ResolvedConfig(config, values, defaulted, conversions, problems, opt)


def load_config_file(path) -> dict:
    """Read a JSON config file.  OSError propagates (exit code 3)."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise UsageError(f"{path}: top level must be an object")
    return raw


def validate_report(raw: dict) -> tuple[str, list]:
    """Human-readable echo of a resolved config and the list of problems."""
    res = resolve_config(raw)
    out = io.StringIO()
    if res.problems:
        for p in res.problems:
            print(f"error: {p}", file=out)
        return out.getvalue(), res.problems
    c = res.config
    print("configuration is valid", file=out)
    for name, watts in res.conversions.items():
        print(f"  {name} = {res.values[name]} -> {watts:.4g} W", file=out)
    for name in ("M", "N", "K", "tau", "tau_c", "delta", "d_bs", "d_ris", "correlated", "ris_correlation"):
        print(f"  {name} = {getattr(c, name)}", file=out)
    print(f"  epsilon = {list(c.epsilon)}", file=out)
    print(f"  beta = {c.beta:.4g}", file=out)
    print(f"  sigma_e2 = {c.sigma_e2:.4g} W", file=out)
    print("defaulted fields: " + (", ".join(res.defaulted) if res.defaulted else "none"), file=out)
    return out.getvalue(), []


# Presets -----------------------------------------------------------------------------


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    axis: str
    grid: tuple
    base: dict  # config-file style fields
    phase: str = "optimize"
    trials: int = 0
    series: tuple = ()  # (label, overrides) pairs; empty means one unnamed series
    full_grid: tuple = ()  # larger grid enabled by --full
    schedule: str | None = None


PRESETS = (
    Preset(
        "fig2-nmse",
        "NMSE and trace-MSE of the LMMSE estimator versus N (independent model)",
        "N",
        (4, 16, 64, 256),
        {"M": 64},
        phase="zeros",
    ),
    Preset(
        "fig4-baseline",
        "single user: two-timescale rate versus the instantaneous-CSI baseline with and without pilot overhead",
        "N",
        (4, 16, 36, 64),
        {"M": 16, "K": 1},
        phase="single-user",
        trials=200,
        series=(("two-timescale", {}), ("baseline-overhead", {}), ("baseline-idealized", {})),
        full_grid=(4, 16, 36, 64, 100, 144, 196),
    ),
    Preset(
        "fig8-delta",
        "optimized min-rate versus the RIS-BS Rician factor delta",
        "delta",
        (0.1, 1.0, 10.0),
        {"M": 16, "N": 16},
    ),
    Preset(
        "fig8-epsilon",
        "optimized min-rate versus the user-RIS Rician factor epsilon",
        "epsilon",
        (1.0, 10.0, 100.0),
        {"M": 16, "N": 16},
    ),
    Preset(
        "fig11-correlation",
        "correlated model: rate versus N for RIS spacings lambda/2, lambda/4, lambda/8 at rho = 30 dB",
        "N",
        (4, 16, 36, 64),
        {"M": 16, "correlated": True, "epsilon": "inf", "rho_db": 30.0},
        series=(("d_ris=0.5", {"d_ris": 0.5}), ("d_ris=0.25", {"d_ris": 0.25}), ("d_ris=0.125", {"d_ris": 0.125})),
        full_grid=(4, 16, 64, 144, 256, 400),
    ),
    Preset(
        "fig12-emi",
        "correlated model: optimized min-rate versus EMI strength rho, with the RIS-free reference",
        "rho",
        (0.0, 30.0, 60.0, 90.0),
        {"M": 16, "N": 16, "correlated": True, "epsilon": "inf", "d_ris": 0.25},
        series=(("ris-aided", {}), ("ris-free", {"alpha": 0.0, "rho_db": None})),
    ),
    Preset(
        "scaling-rayleigh",
        "power scaling p = E_u/N with a Rayleigh RIS-BS link, against its large-N limit",
        "N",
        (16, 36, 64),
        {"M": 64, "delta": 0.0, "p_dbm": 10.0},
        phase="zeros",
        series=(("finite-N", {}), ("limit", {})),
        full_grid=(64, 256, 1024),
        schedule=ScalingLaw.P_OVER_N_RAYLEIGH.value,
    ),
)
PRESET_BY_NAME = {p.name: p for p in PRESETS}


def list_presets() -> list[tuple[str, str]]:
    return [(p.name, p.description) for p in PRESETS]


# Experiment specification --------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentSpec:
    preset: str
    output: str
    seed: int = 0
    trials: int | None = None
    grid: tuple | None = None
    model: str | None = None  # "independent" or "correlated"
    schedule: str | None = None
    config: dict = field(default_factory=dict)  # config-file overrides
    full: bool = False
    workers: int = 1
    timing: bool = False
    trace_output: str | None = None

    def resolved(self) -> tuple[Preset, tuple, int]:
        if self.preset not in PRESET_BY_NAME:
            raise UsageError(f"unknown preset {self.preset!r}; see list-presets")
        pre = PRESET_BY_NAME[self.preset]
        grid = self.grid if self.grid is not None else (pre.full_grid if self.full and pre.full_grid else pre.grid)
        grid = tuple(grid)
        problems = []
        if not grid:
            problems.append("sweep grid is empty")
        elif list(grid) != sorted(grid):
            problems.append("sweep grid must be sorted")
        trials = pre.trials if self.trials is None else self.trials
        if trials < 0:
            problems.append("trials must be non-negative")
        if not self.full and trials > MAX_DESK_TRIALS:
            problems.append(f"trials above {MAX_DESK_TRIALS} need --full")
        if not self.full and pre.axis in ("N", "M") and self.grid is not None and max(grid) > DESK_CAP:
            problems.append(f"{pre.axis} above {DESK_CAP} needs --full")
        if self.model not in (None, "independent", "correlated"):
            problems.append(f"model must be independent or correlated, got {self.model!r}")
        if self.schedule is not None:
            try:
                ScalingLaw(self.schedule)
            except ValueError:
                problems.append(f"unknown schedule {self.schedule!r}; one of {[s.value for s in ScalingLaw]}")
        if problems:
            raise UsageError(problems)
        return pre, grid, trials


def _point_fields(pre: Preset, spec: ExperimentSpec, value) -> dict:
    raw = dict(pre.base)
    raw.update(spec.config)
    if spec.model == "correlated":
        raw.update(correlated=True, epsilon="inf")
        raw.setdefault("rho_db", 30.0)
    elif spec.model == "independent":
        raw["correlated"] = False
        raw.pop("rho_db", None)
    axis = pre.axis
    key = {"p": "p_dbm", "rho": "rho_db"}.get(axis, axis)
    raw[key] = int(value) if axis in ("N", "M") else value
    return raw


def _config_for(raw: dict) -> tuple[SystemConfig, OptimizerConfig]:
    res = resolve_config(raw)
    if res.problems:
        raise UsageError(res.problems)
    return res.config, res.optimizer or OptimizerConfig()


def _closed_form(config: SystemConfig, phase: PhaseShifts):
    return rate_correlated(config, phase) if config.correlated else rate_independent(config, phase)


def _design(config: SystemConfig, policy: str, opt: OptimizerConfig, seed: int):
    if policy == "zeros":
        return PhaseShifts.zeros(config.N), []
    if policy == "single-user":
        return single_user_design(config).phase, []
    res = optimize_phases(config, opt, seed)
    return res.phase, res.trace


@dataclass(frozen=True)
class PointResult:
    rows: list
    trace: list  # (series, iteration, objective, step)
    wall: float


def _nan_row():
    return dict(closed_form_rate=math.nan, mc_rate=math.nan, mc_stderr=math.nan, min_rate=math.nan, nmse=math.nan, trace_mse=math.nan)


def evaluate_point(args) -> PointResult:
    """All series at one sweep value.  Pure function of its arguments."""
    pre, spec, value, trials = args
    t0 = time.perf_counter()
    rows, trace = [], []
    series = pre.series or (("", {}),)
    for label, extra in series:
        raw = _point_fields(pre, spec, value)
        raw.update(extra)
        config, opt = _config_for(raw)
        schedule = spec.schedule or pre.schedule
        E_u = config.p
        if schedule is not None:
            config = replace(config, p=scaled_power(schedule, E_u, config.M, config.N))
        if label.startswith("baseline-"):
            rep = instantaneous_scheme(config, max(trials, 1), spec.seed)
            rate = rep.avg_rate_with_overhead if label == "baseline-overhead" else rep.avg_rate_idealized
            prelog = rate / np.mean(np.log2(1 + rep.snr)) if rate > 0 else 0.0
            se = prelog * float(np.std(np.log2(1 + rep.snr), ddof=1) / np.sqrt(rep.snr.size)) if rep.snr.size > 1 else math.nan
            row = _nan_row()
            row.update(user=0, mc_rate=rate, mc_stderr=se)
            rows.append((label, row))
            continue
        if label == "limit":
            lim = config.prelog * np.log2(1 + asymptotic_limit(config, schedule, E_u))
            for k in range(config.K):
                row = _nan_row()
                row.update(user=k, closed_form_rate=float(lim[k]), min_rate=float(np.min(lim)))
                rows.append((label, row))
            continue
        phase, tr = _design(config, pre.phase, opt, spec.seed)
        trace += [(label, r.iteration, r.objective, r.step) for r in tr]
        cf = _closed_form(config, phase)
        mse = mse_nmse(config, phase)
        mc = None
        if trials > 0:
            mc = rate_mc_report(config, phase, max(trials, MIN_TRIALS), spec.seed)
        for k in range(config.K):
            row = dict(
                user=k,
                closed_form_rate=float(cf.rate[k]),
                mc_rate=float(mc.rate[k]) if mc else math.nan,
                mc_stderr=float(mc.stderr[k]) if mc else math.nan,
                min_rate=cf.min_rate,
                nmse=float(mse.nmse[k]),
                trace_mse=float(mse.trace_mse[k]),
            )
            rows.append((label, row))
    return PointResult(rows, trace, time.perf_counter() - t0)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return repr(float(x))


@dataclass(frozen=True)
class RunSummary:
    preset: str
    axis: str
    grid: tuple
    rows: int
    wall: list


def run(spec: ExperimentSpec) -> RunSummary:
    """Evaluate the sweep and write the CSV.  Rows follow sweep order."""
    pre, grid, trials = spec.resolved()
    # fail fast on configs that cannot be built
    for value in grid:
        for _, extra in pre.series or (("", {}),):
            raw = _point_fields(pre, spec, value)
            raw.update(extra)
            _config_for(raw)
    jobs = [(pre, spec, v, trials) for v in grid]
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as ex:
            results = list(ex.map(evaluate_point, jobs))
    else:
        results = [evaluate_point(j) for j in jobs]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    n = 0
    for value, res in zip(grid, results):
        wall = res.wall if spec.timing else math.nan
        for label, row in res.rows:
            rec = dict(row, axis=pre.axis, sweep_value=value, series=label, wall_time_s=wall)
            w.writerow([_fmt(rec[c]) for c in CSV_COLUMNS])
            n += 1
    with open(spec.output, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
    if spec.trace_output:
        tb = io.StringIO()
        tw = csv.writer(tb, lineterminator="\n")
        tw.writerow(("sweep_value", "series", "iteration", "objective", "step"))
        for value, res in zip(grid, results):
            for label, it, obj, step in res.trace:
                tw.writerow((_fmt(value), label, it, _fmt(obj), _fmt(step)))
        with open(spec.trace_output, "w", encoding="utf-8", newline="") as fh:
            fh.write(tb.getvalue())
    return RunSummary(pre.name, pre.axis, grid, n, [r.wall for r in results])


def read_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))
