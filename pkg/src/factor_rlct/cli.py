"""Command-line interface.

Exit codes: 0 success, 1 runtime or numerical failure, 2 usage or parse error.
Artifact-producing commands write their outputs and a ``manifest.json`` under
``--out``; ``rerun MANIFEST`` repeats such a run from its manifest.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .evidence import (
    EvidenceError,
    evidence_experiment,
    fit_learning_coefficient,
    sbic_experiment,
)
from .factor_model import (
    SCENARIOS,
    FactorModelPoint,
    NotPositiveDefiniteError,
    model_dimension,
    read_covariance,
    scenario,
)
from .learning_table import LearningCoefficient, table_to_csv, table_to_json
from .newton import IdealFormatError, UnitIdealError, load_ideal, rlct_monomial
from .svgplot import scatter_with_line
from .volume import (
    InsufficientDataError,
    VolumeConfig,
    calibrate_grid,
    default_radius,
    estimate_fiber_rlct,
)

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def dumps(obj, indent: int = 2) -> str:
    """JSON with floats in 17-significant-digit scientific notation."""

    def enc(o, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if isinstance(o, bool) or o is None:
            return json.dumps(o)
        if isinstance(o, (float, np.floating)):
            v = float(o)
            return f"{v:.16e}" if math.isfinite(v) else json.dumps(str(v))
        if isinstance(o, (int, np.integer)):
            return str(int(o))
        if isinstance(o, str):
            return json.dumps(o)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(str(k))}: {enc(v, level + 1)}" for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, (list, tuple, np.ndarray)):
            o = list(o)
            if not o:
                return "[]"
            if all(isinstance(v, (int, float, np.number)) and not isinstance(v, bool) for v in o):
                return "[" + ", ".join(enc(v, level + 1) for v in o) + "]"
            return "[\n" + ",\n".join(pad + enc(v, level + 1) for v in o) + "\n" + end + "]"
        raise TypeError(f"cannot serialize {type(o).__name__}")

    return enc(obj, 0) + "\n"


def _out_dir(args) -> Path | None:
    if not args.out:
        return None
    path = Path(args.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _config(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("func", "out", "threads")}


def _write_manifest(out: Path, args, started: float, files: list[str], extra=None) -> None:
    doc = {
        "command": args.command,
        "config": _config(args),
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "backend": kernels.BACKEND,
        "started_utc": datetime.fromtimestamp(started, timezone.utc).isoformat(),
        "wall_clock_seconds": time.time() - started,
        "outputs": files,
    }
    if extra:
        doc.update(extra)
    (out / "manifest.json").write_text(dumps(doc))


def _write(out: Path | None, name: str, text: str, files: list[str]) -> None:
    if out is not None:
        (out / name).write_text(text)
        files.append(name)


# commands


def cmd_table(args) -> int:
    started = time.time()
    if not (1 <= args.p) or not (0 <= args.kmax <= args.p):
        raise UsageError(f"need p >= 1 and 0 <= kmax <= p, got p={args.p}, kmax={args.kmax}")
    text = table_to_csv(args.p, args.kmax) if args.format == "csv" else table_to_json(args.p, args.kmax)
    sys.stdout.write(text)
    out = _out_dir(args)
    if out is not None:
        files: list[str] = []
        _write(out, f"table.{args.format}", text, files)
        _write_manifest(out, args, started, files)
    return EXIT_OK


def cmd_monomial(args) -> int:
    try:
        ideal, tau = load_ideal(args.ideal_file)
    except OSError as exc:
        raise UsageError(f"{args.ideal_file}: {exc.strerror}") from None
    except UnitIdealError as exc:
        print(f"error: {args.ideal_file}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except IdealFormatError as exc:
        raise UsageError(f"{args.ideal_file}: {exc}") from None
    if args.tau is not None:
        if len(args.tau) != ideal.dim or any(t < 0 for t in args.tau):
            raise UsageError(f"--tau needs {ideal.dim} non-negative integers")
        tau = tuple(args.tau)
    pair = rlct_monomial(ideal, tau)
    sys.stdout.write(json.dumps(pair.to_json()) + "\n")
    return EXIT_OK


def _load_point(args) -> tuple[FactorModelPoint, str]:
    if args.scenario and args.sigma:
        raise UsageError("give either --scenario or --sigma, not both")
    if args.scenario:
        return scenario(args.scenario), args.scenario
    if args.sigma:
        try:
            return read_covariance(args.sigma), str(args.sigma)
        except (OSError, ValueError) as exc:
            raise UsageError(f"{args.sigma}: {exc}") from None
    raise UsageError("one of --scenario or --sigma is required")


def cmd_volume(args) -> int:
    started = time.time()
    point, label = _load_point(args)
    if not (1 <= args.k <= point.p):
        raise UsageError(f"need 1 <= k <= p={point.p}")
    radius = args.radius if args.radius is not None else default_radius(point)
    if args.eps:
        grid = tuple(args.eps)
    else:
        grid = calibrate_grid(point, args.k, radius, args.samples, seed=args.seed)
    try:
        cfg = VolumeConfig(radius, grid, args.samples, args.seed, args.threads)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    est = estimate_fiber_rlct(point, args.k, cfg, use_loglog_correction=args.loglog)
    summary = est.summary()
    summary["source"] = label
    sys.stdout.write(dumps(summary))
    out = _out_dir(args)
    if out is not None:
        files: list[str] = []
        _write(out, "volume.csv", est.to_csv(), files)
        _write(out, "summary.json", dumps(summary), files)
        _write_manifest(out, args, started, files)
    return EXIT_OK


def _self_test_experiment(args) -> tuple[list, list]:
    # noiseless F_n = ell log n + c: the fit must return ell exactly
    ell, c = 2.25, 1.0
    pts = [(n, ell * math.log(n) + c) for n in args.n_grid]
    return pts, [fit_learning_coefficient(pts)]


def cmd_evidence(args) -> int:
    started = time.time()
    out = _out_dir(args)
    files: list[str] = []
    if args.self_test:
        pts, fits = _self_test_experiment(args)
        fit = fits[0]
        summary = {"mode": "self-test", "ell_true": 2.25, "ell_hat": fit.ell_hat, "intercept": fit.intercept}
        rows_csv = "n,F_n\n" + "".join(f"{n},{f:.16e}\n" for n, f in pts)
        curve = pts
        series = None
    else:
        point, label = _load_point(args)
        if not (0 <= args.k <= point.p):
            raise UsageError(f"need 0 <= k <= p={point.p}")
        exp = evidence_experiment(
            point,
            args.k,
            args.n_grid,
            args.replicates,
            args.draws,
            args.seed,
            threads=args.threads,
            method=args.method,
        )
        curve = exp.mean_curve()
        fit = fit_learning_coefficient(curve)
        slopes = [f.ell_hat for f in exp.fits]
        summary = {
            "source": label,
            "k": args.k,
            "mean_curve_ell_hat": fit.ell_hat,
            "mean_curve_intercept": fit.intercept,
            "mean_curve_stderr": fit.stderr,
            "replicate_ell_hat": slopes,
            "replicate_ell_mean": float(np.mean(slopes)),
        }
        rows_csv = exp.to_csv()
        _write(out, "fits.csv", exp.fits_csv(), files)
        series = {"replicates": [(math.log(r["n"]), r["F_n"]) for r in exp.rows]}
    sys.stdout.write(dumps(summary))
    if out is not None:
        _write(out, "evidence.csv", rows_csv, files)
        _write(out, "summary.json", dumps(summary), files)
        svg = scatter_with_line(
            [(math.log(n), f) for n, f in curve],
            fit.ell_hat,
            fit.intercept,
            title=f"F_n against log n: slope {fit.ell_hat:.3f}",
            xlabel="log n",
            ylabel="F_n",
            series=series,
        )
        _write(out, "evidence_fit.svg", svg, files)
        _write_manifest(out, args, started, files)
    return EXIT_OK


def cmd_sbic(args) -> int:
    started = time.time()
    if not (0 <= args.true_r <= args.kmax <= args.p):
        raise UsageError("need 0 <= true-r <= kmax <= p")
    penalties = None
    if args.force_bic_penalties:
        penalties = {
            (s, r): LearningCoefficient.exact(model_dimension(args.p, s)[1] / 2)
            for s in range(args.kmax + 1)
            for r in range(s + 1)
        }
    exp = sbic_experiment(
        args.p, args.kmax, args.true_r, args.n, args.replicates, args.seed, penalties, args.threads
    )
    text = exp.to_csv()
    sys.stdout.write(text)
    out = _out_dir(args)
    if out is not None:
        files: list[str] = []
        _write(out, "selection.csv", text, files)
        _write(out, "scores.json", dumps(exp.loglik_rows), files)
        _write_manifest(out, args, started, files, {"frequencies": exp.frequencies()})
    return EXIT_OK


def cmd_rerun(args) -> int:
    try:
        doc = json.loads(Path(args.manifest).read_text())
        command, config = doc["command"], doc["config"]
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"{args.manifest}: not a usable manifest ({exc})") from None
    if command not in COMMANDS or command == "rerun":
        raise UsageError(f"{args.manifest}: unknown command {command!r}")
    ns = argparse.Namespace(**config)
    ns.command = command
    ns.out = args.out
    ns.threads = args.threads
    return COMMANDS[command](ns)


COMMANDS = {
    "table": cmd_table,
    "monomial": cmd_monomial,
    "volume": cmd_volume,
    "evidence": cmd_evidence,
    "sbic": cmd_sbic,
    "rerun": cmd_rerun,
}


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="factor-rlct", description="Learning coefficients of factor analysis models."
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--out", help="directory for outputs and manifest.json")
        p.add_argument(
            "--threads", type=_positive_int, default=os.cpu_count() or 1, help="worker threads"
        )
        if seed:
            p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("table", help="closed-form learning coefficients l_sr, m_sr")
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--kmax", type=int, required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    common(p, seed=False)

    p = sub.add_parser("monomial", help="RLCT of a monomial ideal via its Newton polyhedron")
    p.add_argument("ideal_file")
    p.add_argument("--tau", type=int, nargs="+", help="amplitude exponent (overrides the file)")

    def point_args(p):
        p.add_argument("--scenario", choices=sorted(SCENARIOS))
        p.add_argument("--sigma", help="covariance file (JSON or CSV)")
        p.add_argument("--k", type=int, default=1)

    p = sub.add_parser("volume", help="level-set volume estimate of the fiber RLCT")
    point_args(p)
    p.add_argument("--samples", type=_positive_int, default=6 * 10**7)
    p.add_argument("--radius", type=float)
    p.add_argument("--eps", type=float, nargs="+", help="explicit decreasing threshold grid")
    p.add_argument("--loglog", action="store_true", help="also fit a log log(1/eps) term")
    common(p)

    p = sub.add_parser("evidence", help="evidence slope experiment F_n against log n")
    point_args(p)
    p.add_argument("--n-grid", type=_positive_int, nargs="+", default=[50, 100, 200, 400, 800])
    p.add_argument("--replicates", type=_positive_int, default=20)
    p.add_argument("--draws", type=_positive_int, default=20_000)
    p.add_argument("--method", choices=("smc", "prior"), default="smc")
    p.add_argument("--self-test", action="store_true", help="noiseless synthetic regression check")
    common(p)

    p = sub.add_parser("sbic", help="BIC against sBIC selection frequencies")
    p.add_argument("--p", type=int, default=5)
    p.add_argument("--kmax", type=int, default=2)
    p.add_argument("--true-r", type=int, default=0)
    p.add_argument("--n", type=_positive_int, default=200)
    p.add_argument("--replicates", type=_positive_int, default=200)
    p.add_argument(
        "--force-bic-penalties", action="store_true", help="use d_s/2 everywhere (sBIC must equal BIC)"
    )
    common(p)

    p = sub.add_parser("rerun", help="repeat a run from its manifest.json")
    p.add_argument("manifest")
    common(p, seed=False)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EvidenceError, NotPositiveDefiniteError, InsufficientDataError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
