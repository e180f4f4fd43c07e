"""Command-line interface: ``evspectral {sample,fit,study,hist2d}``.

Exit status is 0 on success, 1 for I/O and parse errors, 2 when the model is
degenerate (singular Gram matrix or design) and 3 for invalid configuration
or arguments.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    ConfigError,
    DegenerateBasisWarning,
    EVError,
    InfeasibleTheta,
    ParseError,
    RankDeficient,
    SingularDesign,
    SingularEndpointCovariance,
    UnsupportedModel,
)
from .estimators import GridMeasure, ci_for_A, exp_margins, fit_parametric_A
from .estimators import pickands_np, pickands_ols
from .core import family_A
from .sampler import sample_n
from .study import SCHEMA, StudyConfig, display_grid, family_from_spec, run_study

THREADS_ENV = "EVSPECTRAL_THREADS"

EXIT_OK, EXIT_IO, EXIT_DEGENERATE, EXIT_CONFIG = 0, 1, 2, 3

log = logging.getLogger("evspectral")


def _fmt(x: float) -> str:
    return "%.17g" % (x + 0.0)


def read_matrix(path) -> np.ndarray:
    """Numeric CSV with an optional header row; errors name the offending line."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise ParseError(f"{path}: empty file")
    start = 0
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        start = 1   # header
    width = len(rows[0])
    data = []
    for lineno, row in enumerate(rows[start:], start=start + 1):
        if len(row) != width:
            raise ParseError(f"{path}: row {lineno} has {len(row)} fields, expected {width}")
        vals = []
        for col, cell in enumerate(row, start=1):
            try:
                vals.append(float(cell))
            except ValueError:
                raise ParseError(
                    f"{path}: row {lineno}, column {col}: not a number: {cell!r}") from None
        data.append(vals)
    return np.array(data, dtype=float).reshape(len(data), width)


def _write_text(text: str, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _parse_theta(text: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in text.split(",")])
    except ValueError as exc:
        raise ConfigError(f"cannot parse theta {text!r}") from exc


# ---------------------------------------------------------------------------
# subcommands


def cmd_sample(args) -> int:
    fam = family_from_spec(args.family)
    x = sample_n(fam, _parse_theta(args.theta), args.n, args.seed or 0, args.replicate)
    lines = ["x1,x2"] + [f"{_fmt(a)},{_fmt(b)}" for a, b in x]
    _write_text("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_fit(args) -> int:
    data = read_matrix(args.input)
    sample = exp_margins(data, args.marginals)
    fam = family_from_spec(args.family)
    M = GridMeasure.uniform(args.grid)
    fit = fit_parametric_A(sample, fam, M, kind=args.kind, constrained=args.constrained,
                           with_cov=True, region=args.region)
    pts = display_grid()
    raw = (pickands_ols if args.kind == "ols" else pickands_np)(sample, pts)
    a_fit = family_A(fam, fit.theta_hat, pts)
    lo, hi = ci_for_A(fit, fam, pts, level=args.level)

    report = [f"n: {sample.n}", f"kind: {args.kind}",
              f"constrained: {str(fit.constrained).lower()}",
              "theta_hat: " + ",".join(_fmt(v) for v in fit.theta_hat.values),
              f"feasible: {str(fit.feasible).lower()}"]
    se = np.sqrt(np.diag(fit.v_hat) / sample.n)
    report.append("std_error: " + ",".join(_fmt(v) for v in se))
    for i, row in enumerate(fit.v_hat):
        report.append(f"v_hat[{i}]: " + ",".join(_fmt(v) for v in row))
    table = [f"w1,a_raw,a_fit,ci_lower,ci_upper"]
    table += [",".join(_fmt(v) for v in r) for r in zip(pts[:, 0], raw, a_fit, lo, hi)]
    sys.stdout.write("\n".join(report) + "\n")
    if args.out in (None, "-"):
        sys.stdout.write("\n")
    _write_text("\n".join(table) + "\n", args.out)
    return EXIT_OK


def cmd_study(args) -> int:
    if args.print_schema:
        sys.stdout.write(SCHEMA)
        return EXIT_OK
    overrides = dict(master_seed=args.seed, parallelism=args.threads,
                     output_dir=args.out, full=True if args.full else None)
    if args.config:
        try:
            cfg = StudyConfig.from_file(args.config, **overrides)
        except OSError as exc:
            raise ParseError(f"cannot read {args.config}: {exc}") from exc
    else:
        cfg = StudyConfig(**{k: v for k, v in overrides.items() if v is not None})
    res = run_study(cfg, resume=not args.no_resume)
    for ti, theta in enumerate(cfg.thetas):
        for n in cfg.sample_sizes:
            if {"par_ols", "ols"} <= set(cfg.estimators):
                log.info("theta=%s n=%d r=%.3f", theta, n, res.ratio(ti, n))
    log.info("outputs written to %s", cfg.output_dir)
    return EXIT_OK


def cmd_hist2d(args) -> int:
    if args.bins < 2:
        raise ConfigError("bins must be at least 2")
    data = read_matrix(args.input)
    if data.shape[0] and data.shape[1] != 2:
        raise ParseError(f"{args.input}: expected 2 columns, found {data.shape[1]}")
    if data.size and (np.any(data < 0) or np.any(data > 1)):
        raise ParseError(f"{args.input}: values must lie in [0, 1]")
    data = data.reshape(-1, 2)
    counts, _, _ = np.histogram2d(data[:, 0], data[:, 1], bins=args.bins,
                                  range=[[0, 1], [0, 1]])
    header = ",".join(f"x2_bin_{j}" for j in range(args.bins))
    lines = [header] + [",".join(str(int(c)) for c in row) for row in counts]
    _write_text("\n".join(lines) + "\n", args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _env_threads():
    val = os.environ.get(THREADS_ENV)
    if val is None:
        return None
    try:
        n = int(val)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {val!r}") from None
    return n


def _common(suppress: bool) -> argparse.ArgumentParser:
    # subcommands repeat the global flags with suppressed defaults so that
    # `evspectral --seed 1 sample ...` and `evspectral sample --seed 1 ...` agree
    d = argparse.SUPPRESS if suppress else None
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=d, help="master seed (64-bit)")
    common.add_argument("--threads", type=int, default=d,
                        help=f"worker processes (default: ${THREADS_ENV} or 1)")
    common.add_argument("--out", default=d, help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true",
                        default=argparse.SUPPRESS if suppress else False)
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common(suppress=True)
    p = argparse.ArgumentParser(prog="evspectral", parents=[_common(suppress=False)],
                                description="Spectral-basis extreme value copulas.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", parents=[common], help="draw pairs from C(., theta)")
    s.add_argument("--family", default="trig")
    s.add_argument("--theta", required=True, help="comma-separated, e.g. 0.1,0.1")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--replicate", type=int, default=0)
    s.set_defaults(func=cmd_sample)

    f = sub.add_parser("fit", parents=[common], help="fit theta to a data matrix")
    f.add_argument("input", help="CSV file with one observation per row")
    f.add_argument("--marginals", default="ranks",
                   choices=["ranks", "uniform", "exponential"])
    f.add_argument("--family", default="trig")
    f.add_argument("--grid", type=int, default=19, help="number of interior grid points")
    f.add_argument("--kind", default="ols", choices=["ols", "plain"])
    f.add_argument("--constrained", action="store_true")
    f.add_argument("--region", default="simplex", choices=["simplex", "box"])
    f.add_argument("--level", type=float, default=0.95)
    f.set_defaults(func=cmd_fit)

    st = sub.add_parser("study", parents=[common], help="run the Monte Carlo study")
    st.add_argument("config", nargs="?", help="key = value configuration file")
    st.add_argument("--full", action="store_true", help="every cell at full replicates")
    st.add_argument("--print-schema", action="store_true")
    st.add_argument("--no-resume", action="store_true", help="ignore stored cell results")
    st.set_defaults(func=cmd_study)

    h = sub.add_parser("hist2d", parents=[common], help="2D histogram of [0,1]^2 data")
    h.add_argument("input")
    h.add_argument("--bins", type=int, default=20)
    h.set_defaults(func=cmd_hist2d)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.threads is None:
            args.threads = _env_threads()
        if args.threads is not None and args.threads < 1:
            raise ConfigError("thread count must be at least 1")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateBasisWarning)
            return args.func(args)
    except (RankDeficient, SingularDesign, SingularEndpointCovariance, UnsupportedModel) as exc:
        print(f"error: degenerate model: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (ParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, InfeasibleTheta, EVError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
