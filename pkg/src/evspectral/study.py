"""Monte Carlo comparison of nonparametric and projected Pickands estimators.

For every parameter value and sample size the harness draws independent
samples with the exact sampler, computes the raw and OLS nonparametric
estimates together with their projections on the family, and aggregates
squared errors against the true A.  Replicate ``r`` of a cell always uses
the random substream ``(cell_seed, r)``, so results do not depend on how
replicates are scheduled over worker processes.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import logging
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .basis import BREAKPOINT, trig_basis
from .core import BasisFamily, as_theta, family_A, mai_scherer_fixture
from .errors import ConfigError, DimensionMismatch, InvalidSpectralMeasure, OutOfRange
from .estimators import (
    REGIONS,
    ExpMarginSample,
    GridMeasure,
    constrain_theta,
    pickands_np,
    pickands_ols,
    project_theta,
)
from .sampler import SamplerState
from .streams import derive_seed

log = logging.getLogger(__name__)

ESTIMATORS = ("np", "ols", "par", "par_ols")
DISPLAY_POINTS = 101
FLOAT_FMT = "%.17g"


# ---------------------------------------------------------------------------
# families


def family_from_spec(spec: str) -> BasisFamily:
    """``"trig"``, ``"trig:<breakpoint>"`` or ``"mai-scherer"``."""
    name, _, arg = spec.strip().partition(":")
    if name == "trig":
        if not arg:
            return trig_basis(BREAKPOINT)
        try:
            beta = float(arg)
        except ValueError:
            raise ConfigError(f"breakpoint must be a number, got {arg!r}") from None
        try:
            return trig_basis(beta)
        except (OutOfRange, InvalidSpectralMeasure) as exc:
            raise ConfigError(f"invalid breakpoint {arg!r}: {exc}") from exc
    if name == "mai-scherer" and not arg:
        return BasisFamily(tuple(mai_scherer_fixture()))
    raise ConfigError(f"unknown family specification {spec!r}")


# ---------------------------------------------------------------------------
# configuration

SCHEMA = """\
# Study configuration: one `key = value` per line, `#` starts a comment.
family = trig                       # basis family: trig, trig:<breakpoint>
thetas = 0.1,0.1; 0.05,0.9; 0.8,0.1 # parameter vectors separated by ';'
sample_sizes = 25,50,100,200,400,800,1600,3200,6400
replicates = 1000                   # replicates per cell (>= 1)
large_n = 800                       # cells with n >= large_n use replicates_large
replicates_large = 250              # ignored when full = true
full = false                        # run every cell with `replicates`
grid = 19                           # M: uniform grid t_i = i / (grid + 1)
estimators = np,ols,par,par_ols     # subset of np, ols, par, par_ols
constrained = true                  # project theta_hat onto the region below
region = box                        # box ([0,1]^(p-1)) or simplex
master_seed = 20120101              # 64-bit unsigned
output_dir = study_out
parallelism = 1                     # worker processes
"""


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class StudyConfig:
    family: str = "trig"
    thetas: tuple = ((0.1, 0.1), (0.05, 0.9), (0.8, 0.1))
    sample_sizes: tuple = tuple(25 * 2**j for j in range(9))
    replicates: int = 1000
    large_n: int = 800
    replicates_large: int = 250
    full: bool = False
    grid: int = 19
    estimators: tuple = ESTIMATORS
    constrained: bool = True
    region: str = "box"
    master_seed: int = 20120101
    output_dir: str = "study_out"
    parallelism: int = 1

    def __post_init__(self):
        if self.replicates < 1 or self.replicates_large < 1:
            raise ConfigError("replicates must be at least 1")
        if not self.sample_sizes or min(self.sample_sizes) < 5:
            raise ConfigError("sample sizes must be at least 5")
        if self.grid < 2:
            raise ConfigError("grid needs at least two points")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be at least 1")
        if not set(self.estimators) <= set(ESTIMATORS) or not self.estimators:
            raise ConfigError(f"estimators must be a subset of {ESTIMATORS}")
        if self.region not in REGIONS:
            raise ConfigError(f"region must be one of {REGIONS}")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")
        fam = family_from_spec(self.family)
        if fam.dim != 2:
            raise ConfigError("the study is bivariate")
        for th in self.thetas:
            try:
                as_theta(th, fam.p, strict=True)
            except (ValueError, DimensionMismatch) as exc:
                raise ConfigError(f"theta {th}: {exc}") from exc

    @classmethod
    def from_text(cls, text: str, **overrides) -> "StudyConfig":
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",),
                                           interpolation=None)
        try:
            parser.read_string("[study]\n" + text)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
        raw = dict(parser["study"])
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        kw = {}
        try:
            for key, val in raw.items():
                if key == "thetas":
                    kw[key] = tuple(_floats(t) for t in val.split(";") if t.strip())
                elif key == "sample_sizes":
                    kw[key] = _ints(val)
                elif key == "estimators":
                    kw[key] = tuple(x.strip() for x in val.split(",") if x.strip())
                elif key in ("full", "constrained"):
                    kw[key] = _bool(val)
                elif key in ("family", "region", "output_dir"):
                    kw[key] = val.strip()
                else:
                    kw[key] = int(val)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from exc
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)

    @classmethod
    def from_file(cls, path, **overrides) -> "StudyConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"), **overrides)

    def replicates_for(self, n: int) -> int:
        if self.full or n < self.large_n:
            return self.replicates
        return min(self.replicates, self.replicates_large)

    def measure(self) -> GridMeasure:
        return GridMeasure.uniform(self.grid)

    def fingerprint(self) -> str:
        """Hash of everything that changes the numbers (not paths or parallelism)."""
        keys = asdict(self)
        for k in ("output_dir", "parallelism"):
            keys.pop(k)
        keys["version"] = __version__
        blob = json.dumps(keys, sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# computations


def imse(estimates, truth, M: GridMeasure) -> float:
    """M-weighted average over the grid of the replicate-mean squared error."""
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    tru = np.asarray(truth, dtype=float).reshape(-1)
    if est.shape[1] != len(tru) or len(tru) != len(M):
        raise DimensionMismatch("estimates, truth and grid must have matching lengths")
    return float(M.weights @ np.mean((est - tru) ** 2, axis=0))


def display_grid() -> np.ndarray:
    t = np.linspace(0.0, 1.0, DISPLAY_POINTS)
    return np.column_stack([t, 1 - t])


@dataclass
class CellResult:
    """Per-replicate A-values on M and display grids and fitted parameters."""

    on_m: dict              # estimator -> (R, len(M))
    on_display: dict        # estimator -> (R, DISPLAY_POINTS)
    theta_hat: dict         # "par" / "par_ols" -> (R, p - 1)

    def to_npz(self, path: Path, fingerprint: str):
        arrays = {"fingerprint": np.array(fingerprint)}
        for prefix, d in (("m", self.on_m), ("disp", self.on_display), ("th", self.theta_hat)):
            for k, v in d.items():
                arrays[f"{prefix}__{k}"] = v
        tmp = path.with_suffix(".tmp.npz")
        np.savez(tmp, **arrays)
        os.replace(tmp, path)

    @classmethod
    def from_npz(cls, path: Path, fingerprint: str) -> "CellResult | None":
        try:
            with np.load(path) as data:
                if str(data["fingerprint"]) != fingerprint:
                    return None
                out = cls({}, {}, {})
                for key in data.files:
                    if key == "fingerprint":
                        continue
                    prefix, name = key.split("__", 1)
                    {"m": out.on_m, "disp": out.on_display, "th": out.theta_hat}[prefix][name] = data[key]
                return out
        except (OSError, KeyError, ValueError):
            return None


def _one_replicate(state, n, rep, M, pts, basis_vals, estimators, constrained, region):
    x = state.sample(n, rep)
    sample = ExpMarginSample(-np.log(x))
    k = len(M)
    a_p = basis_vals[:, -1]
    h_all = basis_vals[:, :-1] - basis_vals[:, -1:]
    out_vals, out_theta = {}, {}
    raws = {}
    if {"np", "par"} & set(estimators):
        raws["np"] = pickands_np(sample, pts)
    if {"ols", "par_ols"} & set(estimators):
        raws["ols"] = pickands_ols(sample, pts)
    for name in estimators:
        if name in ("np", "ols"):
            out_vals[name] = raws[name]
            continue
        raw = raws["np" if name == "par" else "ols"]
        fit = project_theta(raw[:k] - a_p[:k], state.family, M, h_matrix=h_all[:k])
        if constrained:
            fit = constrain_theta(fit, region)
        out_theta[name] = fit.theta_hat.values
        out_vals[name] = a_p + h_all @ fit.theta_hat.values
    return out_vals, out_theta


def _run_chunk(args):
    (family, theta, n, seed, reps, grid, estimators, constrained, region) = args
    fam = family_from_spec(family)
    M = GridMeasure.uniform(grid)
    # M points first, then the display grid
    pts = np.vstack([M.points, display_grid()])
    basis_vals = fam.evaluate_all(pts)
    state = SamplerState.build(fam, theta, seed)
    return [_one_replicate(state, n, r, M, pts, basis_vals, estimators, constrained, region)
            for r in reps]


def cell_seed(cfg: StudyConfig, theta_index: int, n: int) -> int:
    return derive_seed(cfg.master_seed, theta_index, n)


def run_cell(cfg: StudyConfig, theta_index: int, n: int, pool=None) -> CellResult:
    theta = cfg.thetas[theta_index]
    R = cfg.replicates_for(n)
    seed = cell_seed(cfg, theta_index, n)
    n_chunks = min(R, 4 * cfg.parallelism) if pool is not None else 1
    bounds = np.linspace(0, R, n_chunks + 1).astype(int)
    jobs = [(cfg.family, theta, n, seed, range(lo, hi), cfg.grid, cfg.estimators,
             cfg.constrained, cfg.region) for lo, hi in zip(bounds[:-1], bounds[1:])]
    chunks = pool.map(_run_chunk, jobs) if pool is not None else map(_run_chunk, jobs)
    # results are concatenated in replicate order whatever the scheduling
    reps = [res for chunk in chunks for res in chunk]
    k = cfg.grid
    on_m, on_disp, th = {}, {}, {}
    for name in cfg.estimators:
        vals = np.array([r[0][name] for r in reps])
        on_m[name], on_disp[name] = vals[:, :k], vals[:, k:]
        if name in ("par", "par_ols"):
            th[name] = np.array([r[1][name] for r in reps])
    return CellResult(on_m, on_disp, th)


# ---------------------------------------------------------------------------
# output


def _fmt(x) -> str:
    return FLOAT_FMT % (x + 0.0)  # + 0.0 turns -0.0 into 0.0


def _write_csv(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else float("nan")


@dataclass
class StudyResult:
    config: StudyConfig
    imse: dict = field(default_factory=dict)        # (theta_index, n, estimator) -> float
    mse_m: dict = field(default_factory=dict)       # (theta_index, n, estimator) -> (len(M),)
    mse_display: dict = field(default_factory=dict)
    theta_hat: dict = field(default_factory=dict)   # (theta_index, n, estimator) -> (R, p-1)
    replicates: dict = field(default_factory=dict)  # (theta_index, n) -> R

    def ratio(self, theta_index: int, n: int, num: str = "par_ols", den: str = "ols") -> float:
        return _ratio(self.imse[theta_index, n, num], self.imse[theta_index, n, den])


def summarize_cell(res: StudyResult, ti: int, n: int, cell: CellResult, M: GridMeasure):
    fam = family_from_spec(res.config.family)
    theta = res.config.thetas[ti]
    truth_m = family_A(fam, theta, M.points)
    truth_d = family_A(fam, theta, display_grid())
    for name, vals in cell.on_m.items():
        res.mse_m[ti, n, name] = np.mean((vals - truth_m) ** 2, axis=0)
        res.imse[ti, n, name] = imse(vals, truth_m, M)
        res.mse_display[ti, n, name] = np.mean((cell.on_display[name] - truth_d) ** 2, axis=0)
        res.replicates[ti, n] = len(vals)
    for name, th in cell.theta_hat.items():
        res.theta_hat[ti, n, name] = th


def write_outputs(res: StudyResult, out: Path, M: GridMeasure):
    cfg = res.config
    k = len(cfg.thetas[0])
    th_cols = [f"theta_{j + 1}" for j in range(k)]
    cells = [(ti, n) for ti in range(len(cfg.thetas)) for n in cfg.sample_sizes]

    _write_csv(out / "imse.csv", th_cols + ["n", "replicates", "estimator", "imse"],
               [list(map(float, cfg.thetas[ti])) + [n, res.replicates[ti, n], e,
                                                     res.imse[ti, n, e]]
                for ti, n in cells for e in cfg.estimators])

    ratio_defs = [("r", "par_ols", "ols"), ("r_nonp", "np", "ols"),
                  ("r_par", "par", "par_ols"), ("r_par_vs_ols", "par", "ols")]
    ratio_defs = [d for d in ratio_defs if {d[1], d[2]} <= set(cfg.estimators)]
    _write_csv(out / "ratios.csv", th_cols + ["n"] + [d[0] for d in ratio_defs],
               [list(map(float, cfg.thetas[ti])) + [n] + [res.ratio(ti, n, a, b)
                                                          for _, a, b in ratio_defs]
                for ti, n in cells])

    t_disp = display_grid()[:, 0]
    _write_csv(out / "mse_grid.csv", th_cols + ["n", "estimator", "w1", "mse"],
               [list(map(float, cfg.thetas[ti])) + [n, e, float(t), float(v)]
                for ti, n in cells for e in cfg.estimators
                for t, v in zip(t_disp, res.mse_display[ti, n, e])])

    if {"par_ols", "ols"} <= set(cfg.estimators):
        rows = []
        for ti, n in cells:
            num, den = res.mse_display[ti, n, "par_ols"], res.mse_display[ti, n, "ols"]
            # endpoints are estimated exactly by both, so r(w) is undefined there
            for t, a, b in zip(t_disp, num, den):
                if b > 0:
                    rows.append(list(map(float, cfg.thetas[ti])) + [n, float(t), float(a / b)])
        _write_csv(out / "mse_w.csv", th_cols + ["n", "w1", "r_w"], rows)

    rows, quart = [], []
    for (ti, n, e), th in sorted(res.theta_hat.items()):
        base = list(map(float, cfg.thetas[ti])) + [n, e]
        rows.extend(base + [r] + [float(v) for v in vals] for r, vals in enumerate(th))
        q = np.quantile(th, [0.25, 0.5, 0.75], axis=0)
        quart.extend(base + [j + 1] + [float(v) for v in q[:, j]] for j in range(th.shape[1]))
    if rows:
        hat_cols = [f"theta_hat_{j + 1}" for j in range(k)]
        _write_csv(out / "theta_hat.csv", th_cols + ["n", "estimator", "replicate"] + hat_cols, rows)
        _write_csv(out / "theta_quartiles.csv",
                   th_cols + ["n", "estimator", "component", "q25", "median", "q75"], quart)


def run_study(cfg: StudyConfig, out_dir=None, resume: bool = True) -> StudyResult:
    """Run every (theta, n) cell, flushing cell results so reruns resume."""
    out = Path(out_dir or cfg.output_dir)
    cells_dir = out / "cells"
    cells_dir.mkdir(parents=True, exist_ok=True)
    fp = cfg.fingerprint()
    M = cfg.measure()
    res = StudyResult(cfg)
    started = time.time()
    pool = ProcessPoolExecutor(cfg.parallelism) if cfg.parallelism > 1 else None
    try:
        for ti in range(len(cfg.thetas)):
            for n in cfg.sample_sizes:
                path = cells_dir / f"cell_{ti}_{n}.npz"
                cell = CellResult.from_npz(path, fp) if resume and path.exists() else None
                if cell is None:
                    t0 = time.time()
                    cell = run_cell(cfg, ti, n, pool)
                    cell.to_npz(path, fp)
                    log.info("theta=%s n=%d done in %.1fs", cfg.thetas[ti], n, time.time() - t0)
                else:
                    log.info("theta=%s n=%d resumed", cfg.thetas[ti], n)
                summarize_cell(res, ti, n, cell, M)
    finally:
        if pool is not None:
            pool.shutdown()
    write_outputs(res, out, M)
    manifest = {
        "config": asdict(cfg),
        "fingerprint": fp,
        "versions": {"evspectral": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
        "wall_time_s": time.time() - started,
        "outputs": sorted(p.name for p in out.glob("*.csv")),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=list) + "\n",
                                       encoding="utf-8")
    return res
