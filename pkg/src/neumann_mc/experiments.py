"""Configuration-driven experiment runner.

An experiment is described by a flat key-value file with one ``[experiment]``
section, for example::

    [experiment]
    experiment = mixed_euler
    alpha = 1/3, 2/3, 1
    delta = 0.01, 0.001, 0.001
    xi = 0.01, 1e-6, 0.001
    n = 50000

List-valued keys are comma separated, numbers may be written as fractions and
points as ``label x y`` triples separated by ``;``. Every key has a default,
so a file only needs the keys that differ. :func:`run_experiment` writes a CSV
(plus series files for the variance study) and a JSON sidecar with the full
configuration.
"""
from __future__ import annotations

import configparser
import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path

import numpy as np

from .estimators import (bias_metrics, fit_slope, monte_carlo, sample_invariant_path,
                         sample_invariant_uniform, tcheb_grid, variance_scan_shared)
from .euler import EulerConfig, EulerSampler, euler_checkpoints
from .parallel import DEFAULT_BATCH, child_seed
from .problems import builtin_problem
from .spectral import (assemble, build_basis, center_approx, center_exact, collect_traces,
                       err_metrics)
from .wos import WosConfig, WosSampler, load_or_build_table

EXPERIMENTS = ("mixed_euler", "mixed_wos", "neumann_preliminary", "neumann_euler",
               "neumann_wos", "spectral_exact", "spectral_approx", "convection")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


MIXED_POINTS = (("M1", 0.8, 0.0), ("M2", 0.0, 0.0), ("M3", -0.8, 0.0))
NEUMANN_POINTS = (("M4", 0.0, 0.0), ("M5", -0.2, 0.2), ("M6", -0.8, 0.8),
                  ("M7", 0.0, 0.8), ("M8", 0.2, 0.6), ("M9", 0.4, 0.4))
PRELIMINARY_POINT = (("P", -0.5, -0.5),)
# mixed walks end on the Dirichlet side; t0 only caps them, and from any start
# the chance of surviving this long is below exp(-60)
MIXED_CAP = 200.0


@dataclass(frozen=True)
class ExperimentConfig:
    """All knobs of one experiment.

    Sequences that describe parameter sets are paired by position: ``delta``
    with ``xi`` (Euler runs) and with ``m`` and ``q`` (spectral runs). A
    length-one sequence is broadcast. WOS runs take the product of ``schemes``
    and ``h``. ``t0`` is the horizon of pure Neumann walks and only a safety
    cap for mixed Euler walks, which must be long enough not to truncate.
    """

    experiment: str
    alpha: tuple[float, ...] = (1 / 3, 2 / 3, 1.0)
    beta_x: float = 0.2
    beta_y: float = 0.1
    delta: tuple[float, ...] = (0.001,)
    xi: tuple[float, ...] = (0.001,)
    kernel: str = "half_normal"
    eps: float = 1e-6
    h: tuple[float, ...] = (0.1,)
    schemes: tuple[str, ...] = ("oneside3",)
    t0: float = 10.0
    n: int = 50_000
    m: tuple[int, ...] = (5000,)
    q: tuple[int, ...] = (10_000,)
    p: int = 3
    basis_n: tuple[int, ...] = (2, 4)
    points: tuple[tuple[str, float, float], ...] = ()
    times: tuple[float, ...] = ()
    fit_range: tuple[float, float] = (9.0, 16.0)
    walker: str = "euler"
    cloud: str = "path"
    bias_allowance: float = 0.0
    control_variate: bool = False
    seed: int = 0
    workers: int | None = None
    batch_size: int = DEFAULT_BATCH
    table_path: str = "circle_table.bin"
    table_pairs: int = 1_000_000
    table_paths: int = 100_000
    table_delta: float = 1e-4
    out: str = "results"
    name: str = ""

    def __post_init__(self):
        validate(self)

    @property
    def stem(self) -> str:
        return self.name or self.experiment

    def param_sets(self, *names: str) -> list[tuple]:
        """Pair the named sequences position-wise, broadcasting singletons."""
        seqs = [getattr(self, k) for k in names]
        size = max(len(s) for s in seqs)
        for k, s in zip(names, seqs):
            if len(s) not in (1, size):
                raise ConfigError(f"{k} has {len(s)} entries, expected 1 or {size}")
        return [tuple(s[i] if len(s) > 1 else s[0] for s in seqs) for i in range(size)]


def validate(cfg: ExperimentConfig) -> None:
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {cfg.experiment!r}; choose from {EXPERIMENTS}")
    positive = {"t0": cfg.t0, "eps": cfg.eps, "n": cfg.n, "p": cfg.p, "batch_size": cfg.batch_size}
    for k, v in positive.items():
        if not v > 0:
            raise ConfigError(f"{k} must be positive")
    for k in ("delta", "xi", "h", "m", "q"):
        vals = getattr(cfg, k)
        if not vals or any(not v > 0 for v in vals):
            raise ConfigError(f"{k} must be a non-empty list of positive numbers")
    if cfg.kernel not in ("half_normal", "printed", "normal"):
        raise ConfigError(f"unknown kernel {cfg.kernel!r}")
    if cfg.walker not in ("euler", "wos"):
        raise ConfigError("walker must be euler or wos")
    if cfg.cloud not in ("path", "uniform"):
        raise ConfigError("cloud must be path or uniform")
    from .schemes import SCHEMES
    for s in cfg.schemes:
        if s not in SCHEMES:
            raise ConfigError(f"unknown scheme {s!r}")
    finite_wos = cfg.experiment == "neumann_wos" or (
        cfg.walker == "wos" and cfg.experiment.startswith(("spectral", "convection")))
    if finite_wos and "fd1" in cfg.schemes:
        raise ConfigError("fd1 has no time increment and cannot drive a finite-horizon walk")
    if any(n < 2 or n % 2 for n in cfg.basis_n):
        raise ConfigError("basis_n entries must be even and at least 2")
    if cfg.experiment == "neumann_preliminary":
        if len(cfg.times) < 2 or any(b <= a for a, b in zip(cfg.times, cfg.times[1:])):
            raise ConfigError("times must hold at least two increasing horizons")
        lo, hi = cfg.fit_range
        if sum(lo <= t <= hi for t in cfg.times) < 2:
            raise ConfigError("fit_range must contain at least two of the times")
    if cfg.n < 2:
        raise ConfigError("n must be at least 2")


# --- config files -------------------------------------------------------------

def _number(text: str) -> float:
    return float(Fraction(text.strip())) if "/" in text else float(text)


def _list(text: str, conv=_number) -> tuple:
    return tuple(conv(v) for v in text.split(",") if v.strip())


def _points(text: str) -> tuple:
    out = []
    for chunk in text.split(";"):
        parts = chunk.split()
        if not parts:
            continue
        if len(parts) != 3:
            raise ConfigError(f"a point needs 'label x y', got {chunk.strip()!r}")
        out.append((parts[0], _number(parts[1]), _number(parts[2])))
    return tuple(out)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


_PARSERS = {
    "control_variate": _bool,
    "alpha": _list, "delta": _list, "xi": _list, "h": _list, "times": _list,
    "fit_range": _list,
    "m": lambda t: _list(t, lambda v: int(_number(v))),
    "q": lambda t: _list(t, lambda v: int(_number(v))),
    "basis_n": lambda t: _list(t, lambda v: int(_number(v))),
    "schemes": lambda t: tuple(v.strip() for v in t.split(",") if v.strip()),
    "points": _points,
    "workers": lambda t: None if t.strip().lower() in ("", "all", "none") else int(t),
}


def parse_config(text: str, **overrides) -> ExperimentConfig:
    """Parse a ``[experiment]`` section; ``overrides`` win over the file."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    if "experiment" not in parser:
        raise ConfigError("missing [experiment] section")
    known = {f.name: f for f in fields(ExperimentConfig)}
    values = {}
    for key, raw in parser["experiment"].items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r}")
        try:
            if key in _PARSERS:
                values[key] = _PARSERS[key](raw)
            elif known[key].type in ("int", int):
                values[key] = int(_number(raw))
            elif known[key].type in ("float", float):
                values[key] = _number(raw)
            else:
                values[key] = raw.strip()
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    values.update({k: v for k, v in overrides.items() if v is not None})
    if "experiment" not in values:
        raise ConfigError("missing key 'experiment'")
    if "fit_range" in values:
        values["fit_range"] = tuple(values["fit_range"])
        if len(values["fit_range"]) != 2:
            raise ConfigError("fit_range needs two numbers")
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, **overrides) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text, **overrides)


def dump_config(cfg: ExperimentConfig) -> str:
    """Serialise to the file format; :func:`parse_config` reads it back."""
    lines = ["[experiment]"]
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if f.name == "points":
            text = "; ".join(f"{lbl} {x!r} {y!r}" for lbl, x, y in v)
        elif isinstance(v, tuple):
            text = ", ".join(repr(x) if not isinstance(x, str) else x for x in v)
        elif v is None:
            text = "all"
        else:
            text = str(v) if isinstance(v, str) else repr(v)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"


# --- builtin table configurations -----------------------------------------------

def table_config(number: int, **overrides) -> ExperimentConfig:
    """Configuration reproducing one of the published result tables.

    1 mixed problem with the Euler scheme, 2 mixed problem with walk on
    spheres, 3 pure Neumann with the Euler scheme, 4 pure Neumann with walk on
    spheres, 5 the variance-versus-horizon study, 6 spectral solver with exact
    centring, 7 with approximate centring, 8 convection-diffusion.
    """
    base = {
        1: dict(experiment="mixed_euler", delta=(0.01, 0.001, 0.001), xi=(0.01, 1e-6, 0.001),
                t0=MIXED_CAP, n=50_000, points=MIXED_POINTS),
        2: dict(experiment="mixed_wos", schemes=("fd1", "oneside3", "kinetic"), h=(0.2, 0.1),
                n=50_000, points=MIXED_POINTS),
        3: dict(experiment="neumann_euler", delta=(0.01, 0.001), xi=(0.01, 0.001), t0=10.0,
                n=50_000, points=NEUMANN_POINTS),
        4: dict(experiment="neumann_wos", schemes=("oneside3",), h=(0.1, 0.05), t0=10.0,
                n=50_000, points=NEUMANN_POINTS),
        5: dict(experiment="neumann_preliminary", delta=(0.005,), xi=(0.005,), n=1_000_000,
                times=tuple(0.5 * k for k in range(1, 41)), t0=20.0, points=PRELIMINARY_POINT),
        6: dict(experiment="spectral_exact", alpha=(1 / 3,), delta=(0.01, 0.001),
                xi=(0.001,), m=(1000, 5000), basis_n=(2, 4), t0=10.0),
        7: dict(experiment="spectral_approx", alpha=(1 / 3,), delta=(0.01, 0.001), xi=(0.001,),
                m=(1000, 5000), q=(100, 10_000), basis_n=(2, 4), t0=10.0, cloud="uniform"),
        8: dict(experiment="convection", alpha=(0.3,), beta_x=0.2, beta_y=0.1,
                delta=(0.01, 0.001), xi=(0.001,), m=(1000, 5000), q=(100, 10_000),
                basis_n=(2, 4), t0=10.0, cloud="path"),
    }
    if number not in base:
        raise ConfigError("table number must be 1..8")
    values = base[number] | {"name": f"table{number}"}
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


# --- runners -----------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6e}"
    return str(v)


@dataclass
class Table:
    columns: list[str]
    rows: list[dict] = field(default_factory=list)

    def add(self, **row):
        missing = set(row) - set(self.columns)
        if missing:
            raise KeyError(f"unknown columns {sorted(missing)}")
        self.rows.append(row)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(r.get(c, "")) for c in self.columns])
        return buf.getvalue()

    def column(self, name) -> list:
        return [r.get(name) for r in self.rows]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    tables: dict[str, Table]
    summary: dict
    paths: list[Path] = field(default_factory=list)


def _flag(err, se, allowance) -> bool:
    return bool(err > 5.0 * se + allowance)


def _table_for(cfg: ExperimentConfig):
    if cfg.experiment in ("mixed_wos", "neumann_wos") or cfg.walker == "wos" and \
            cfg.experiment in ("spectral_exact", "spectral_approx", "convection"):
        return load_or_build_table(cfg.table_path, cfg.table_delta, cfg.table_pairs,
                                   cfg.table_paths, seed=12345)
    return None


def _coeffs(cfg: ExperimentConfig, prob):
    # the control only changes the variance, never the mean
    return prob.coeffs.with_control(prob.control) if cfg.control_variate else prob.coeffs


def _mixed(cfg: ExperimentConfig, table):
    prob = builtin_problem("mixed", cfg.alpha)
    coeffs = _coeffs(cfg, prob)
    points = cfg.points or MIXED_POINTS
    if cfg.experiment == "mixed_euler":
        cols = ["delta", "xi"]
        sets = [(d, x, EulerConfig(d, x, cfg.t0, kernel=cfg.kernel))
                for d, x in cfg.param_sets("delta", "xi")]
    else:
        cols = ["scheme", "h"]
        sets = [(s, h, WosConfig(cfg.eps, h, None, s)) for s in cfg.schemes for h in cfg.h]
    out = Table(cols + ["alpha", "point", "x", "y", "exact", "estimate", "abs_error",
                        "std_error", "flag"])
    for si, (c1, c2, wcfg) in enumerate(sets):
        for pi, (label, x, y) in enumerate(points):
            sampler = (EulerSampler((x, y), coeffs, wcfg) if table is None
                       else WosSampler((x, y), coeffs, wcfg, table))
            s = monte_carlo(sampler, cfg.n, child_seed(cfg.seed, si, pi), cfg.batch_size,
                            cfg.workers)
            exact = prob.exact_sets(x, y)
            for r, a in enumerate(cfg.alpha):
                err = abs(s.mean[r] - exact[r])
                out.add(**{cols[0]: c1, cols[1]: c2}, alpha=a, point=label, x=x, y=y,
                        exact=exact[r], estimate=s.mean[r], abs_error=err,
                        std_error=s.std_error[r],
                        flag=_flag(err, s.std_error[r], cfg.bias_allowance))
    return {"results": out}, {}


def _neumann(cfg: ExperimentConfig, table):
    prob = builtin_problem("neumann_exp", cfg.alpha)
    coeffs = _coeffs(cfg, prob)
    points = cfg.points or NEUMANN_POINTS
    grid = tcheb_grid(cfg.p)
    grid_pts = [(f"g{i}{j}", grid[i, j, 0], grid[i, j, 1])
                for i in range(cfg.p) for j in range(cfg.p)]
    if cfg.experiment == "neumann_euler":
        cols = ["delta", "xi"]
        sets = [(d, x, EulerConfig(d, x, cfg.t0, kernel=cfg.kernel))
                for d, x in cfg.param_sets("delta", "xi")]
    else:
        cols = ["scheme", "h"]
        sets = [(s, h, WosConfig(cfg.eps, h, cfg.t0, s)) for s in cfg.schemes for h in cfg.h]
    out = Table(cols + ["alpha", "point", "x", "y", "exact", "estimate", "abs_error",
                        "std_error", "a_bar", "rho", "flag"])
    summary = {}
    for si, (c1, c2, wcfg) in enumerate(sets):
        estimates = {}
        for pi, (label, x, y) in enumerate(grid_pts + list(points)):
            key = (round(x, 12), round(y, 12))
            if key in estimates:
                continue
            sampler = (EulerSampler((x, y), coeffs, wcfg) if table is None
                       else WosSampler((x, y), coeffs, wcfg, table))
            estimates[key] = monte_carlo(sampler, cfg.n, child_seed(cfg.seed, si, pi),
                                         cfg.batch_size, cfg.workers)
        for r, a in enumerate(cfg.alpha):
            u_hat = np.array([[estimates[(round(grid[i, j, 0], 12), round(grid[i, j, 1], 12))]
                               .mean[r] for j in range(cfg.p)] for i in range(cfg.p)])
            bm = bias_metrics(u_hat, lambda x, y: prob.exact(x, y, prob.coeffs.params[r]), cfg.p)
            summary[f"{c1}|{c2}|{a:.6g}"] = {"a_bar": bm.a_bar, "rho": bm.rho}
            for label, x, y in grid_pts + list(points):
                s = estimates[(round(x, 12), round(y, 12))]
                exact = float(prob.exact(x, y, prob.coeffs.params[r]))
                err = abs(s.mean[r] - exact - bm.a_bar)
                out.add(**{cols[0]: c1, cols[1]: c2}, alpha=a, point=label, x=x, y=y,
                        exact=exact, estimate=s.mean[r], abs_error=err,
                        std_error=s.std_error[r], a_bar=bm.a_bar, rho=bm.rho,
                        flag=_flag(err, s.std_error[r], cfg.bias_allowance))
    return {"results": out}, summary


@dataclass(frozen=True)
class CheckpointSampler:
    """``(rng, n) -> (n, len(times))`` scores of the first parameter row."""

    start: tuple[float, float]
    coeffs: object
    cfg: EulerConfig
    times: tuple[float, ...]

    def __call__(self, rng, n):
        return euler_checkpoints(self.start, self.coeffs, self.cfg, rng, n, self.times)[:, :, 0]


def _preliminary(cfg: ExperimentConfig, table):
    prob = builtin_problem("neumann_poly")
    label, x, y = (cfg.points or PRELIMINARY_POINT)[0]
    delta, xi = cfg.param_sets("delta", "xi")[0]
    t0 = max(cfg.t0, cfg.times[-1])
    t0 = delta * np.ceil(t0 / delta - 1e-9)
    ecfg = EulerConfig(delta, xi, float(t0), kernel=cfg.kernel)
    scan = variance_scan_shared(CheckpointSampler((x, y), prob.coeffs, ecfg, cfg.times),
                                cfg.times, cfg.n, cfg.seed, cfg.batch_size, cfg.workers)
    exact = float(prob.exact(x, y, prob.coeffs.params[0]))
    mean = Table(["T", "exact", "estimate", "abs_error", "std_error"])
    var = Table(["T", "variance"])
    for t, s in scan:
        mean.add(T=t, exact=exact, estimate=s.mean[0], abs_error=abs(s.mean[0] - exact),
                 std_error=s.std_error[0])
        var.add(T=t, variance=s.variance[0])
    lo, hi = cfg.fit_range
    slope = fit_slope([(t, s.variance[0]) for t, s in scan if lo <= t <= hi])
    summary = {"point": [label, x, y], "exact": exact, "variance_slope": slope,
               "fit_range": [lo, hi], "c3": 32768 / 33075}
    return {"mean": mean, "variance": var}, summary


def _spectral(cfg: ExperimentConfig, table):
    if cfg.experiment == "convection":
        prob = builtin_problem("convection", cfg.alpha[0], cfg.beta_x, cfg.beta_y)
    else:
        prob = builtin_problem("neumann_exp", cfg.alpha[:1])
    coeffs = prob.coeffs
    exact = lambda x, y: prob.exact(x, y, coeffs.params[0])  # noqa: E731
    out = Table(["delta", "xi", "m", "q", "basis_n", "alpha", "removed", "err1", "err2",
                 "err2_printed", "kappa"])
    for si, (delta, xi, m, q) in enumerate(cfg.param_sets("delta", "xi", "m", "q")):
        if cfg.walker == "euler":
            wcfg = EulerConfig(delta, xi, cfg.t0, kernel=cfg.kernel)
        else:
            wcfg = WosConfig(cfg.eps, cfg.h[0], cfg.t0, cfg.schemes[0])
        cloud = None
        if cfg.experiment != "spectral_exact":
            rng = np.random.default_rng(child_seed(cfg.seed, si, 1))
            cloud = (sample_invariant_path(coeffs, delta, q, rng) if cfg.cloud == "path"
                     else sample_invariant_uniform(q, rng))
        for n in cfg.basis_n:
            basis = build_basis(n)
            traces = collect_traces(basis, coeffs, m, child_seed(cfg.seed, si, 0), wcfg, table)
            cb = center_exact(basis) if cloud is None else center_approx(basis, cloud)
            system = assemble(cb, traces, coeffs.drift_poly)
            e = err_metrics(system, exact=exact, cloud=cloud)
            out.add(delta=delta, xi=xi, m=m, q=q if cloud is not None else "", basis_n=n,
                    alpha=float(coeffs.params[0][0]), removed=f"{cb.removed[0]}:{cb.removed[1]}",
                    err1=e.err1, err2="" if e.err2 is None else e.err2,
                    err2_printed="" if e.err2_printed is None else e.err2_printed,
                    kappa=system.kappa)
    return {"results": out}, {}


_RUNNERS = {"mixed_euler": _mixed, "mixed_wos": _mixed, "neumann_euler": _neumann,
            "neumann_wos": _neumann, "neumann_preliminary": _preliminary,
            "spectral_exact": _spectral, "spectral_approx": _spectral, "convection": _spectral}


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> ExperimentResult:
    """Run an experiment and, with ``write``, store its CSV files and sidecar.

    Files land in ``cfg.out`` as ``<stem>.csv`` (or ``<stem>_<series>.csv``
    for multi-series output) plus ``<stem>.json``.
    """
    validate(cfg)
    table = _table_for(cfg)
    started = time.perf_counter()
    tables, summary = _RUNNERS[cfg.experiment](cfg, table)
    elapsed = time.perf_counter() - started
    result = ExperimentResult(cfg, tables, summary)
    if write:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        for key, tab in tables.items():
            name = f"{cfg.stem}.csv" if len(tables) == 1 else f"{cfg.stem}_{key}.csv"
            path = out / name
            path.write_text(tab.to_csv())
            result.paths.append(path)
        sidecar = {"config": asdict(cfg), "seed": cfg.seed, "summary": summary,
                   "files": [p.name for p in result.paths], "elapsed_seconds": elapsed}
        if table is not None:
            sidecar["circle_table"] = {"path": cfg.table_path, "pairs": table.n_pairs,
                                       "paths": table.q_paths, "delta_pre": table.delta_pre}
        path = out / f"{cfg.stem}.json"
        path.write_text(json.dumps(sidecar, indent=2, default=float) + "\n")
        result.paths.append(path)
    return result


__all__ = ["ExperimentConfig", "ExperimentResult", "ConfigError", "EXPERIMENTS", "Table",
           "parse_config", "load_config", "dump_config", "table_config", "run_experiment",
           "validate", "MIXED_POINTS", "NEUMANN_POINTS", "CheckpointSampler"]
