"""``kuht`` command line: kernel one- and two-sample tests, change points, exponents.

Exit codes: 0 whenever a decision or curve was computed (accept and reject
alike), 2 for usage and input errors, 3 for I/O errors. Errors are reported
as one JSON line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .changepoint import ScanConfig, scan, scan_windows
from .distributions import parse_distribution
from .experiments import blobs_bandwidth_sweep, default_bandwidths, median_heuristic_bandwidth
from .exponents import KSDTest, OneSampleMMD, TwoSampleMMD, estimate_type2_exponent
from .kernels import gaussian, parse_kernel
from .ksd import SteinKernelCtx, run_ksd_test
from .mmd import parse_threshold, run_one_sample_test, run_one_sample_via_two_sample, \
    run_two_sample_test

SCHEMA_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_IO = 0, 2, 3


class UsageError(Exception):
    """Bad flags or values; exit code 2."""


class InputError(Exception):
    """Malformed input data; exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class RunConfig:
    subcommand: str
    inputs: dict
    kernel: str
    threshold: str | None
    alpha: float
    seed: int
    out: str
    bits: bool = False
    threads: int = 1
    options: dict = field(default_factory=dict)

    def effective(self) -> dict:
        """Configuration embedded in reports; output paths and thread count are excluded."""
        options = {k: v for k, v in self.options.items() if k != "summary"}
        return {"subcommand": self.subcommand, "inputs": self.inputs, "kernel": self.kernel,
                "threshold": self.threshold, "alpha": self.alpha, "seed": self.seed,
                "bits": self.bits, **options}


# --- argument parsing --------------------------------------------------------

def _alpha(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"alpha must lie in (0, 1), got {value}")
    return value


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be positive, got {value}")
    return value


def _nonneg_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be nonnegative, got {value}")
    return value


def _fraction(text):
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {value}")
    return value


def _kernel_arg(text):
    if text == "median":
        return text
    try:
        return parse_kernel(text).spec
    except ValueError as err:
        raise argparse.ArgumentTypeError(str(err)) from None


def _threshold_arg(text):
    try:
        parse_threshold(text)
    except ValueError as err:
        raise argparse.ArgumentTypeError(str(err)) from None
    return text


def _dist_arg(text):
    try:
        parse_distribution(text)
    except ValueError as err:
        raise argparse.ArgumentTypeError(str(err)) from None
    return text


def _float_list(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _int_list(text):
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _common(p, alpha=0.05, kernel="median", threshold=None):
    p.add_argument("--alpha", type=_alpha, default=alpha)
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--out", default="-", help="output path, '-' for stdout")
    p.add_argument("--threads", type=_nonneg_int, default=1, help="worker threads, 0 = auto")
    p.add_argument("--kernel", type=_kernel_arg, default=kernel,
                   help="gaussian:gamma=<f>, laplace:gamma=<f>, imq:c=<f>,eta=<f> or median")
    if threshold is not None:
        p.add_argument("--threshold", type=_threshold_arg, default=threshold,
                       help="df, perm:B=<int> (wild:/mc: aliases) or min:B=<int>")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kuht", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"kuht {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("two-sample", help="two-sample MMD test")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--header", action="store_true", help="skip a header row in CSV inputs")
    p.add_argument("--variant", choices=("biased", "unbiased"), default="biased")
    _common(p, threshold="min:B=500")

    p = sub.add_parser("one-sample-mmd", help="plug-in one-sample MMD test")
    p.add_argument("--y", required=True)
    p.add_argument("--target", type=_dist_arg, default="gauss:d=1")
    p.add_argument("--header", action="store_true")
    p.add_argument("--variant", choices=("biased", "unbiased"), default="biased")
    _common(p, threshold="min:B=500")

    p = sub.add_parser("one-sample-draw", help="one-sample test via draws from the target")
    p.add_argument("--y", required=True)
    p.add_argument("--target", type=_dist_arg, default="gauss:d=1")
    p.add_argument("--n-draws", type=_positive_int, default=None,
                   help="points drawn from the target (default 10 m)")
    p.add_argument("--header", action="store_true")
    p.add_argument("--variant", choices=("biased", "unbiased"), default="biased")
    _common(p, threshold="min:B=500")

    p = sub.add_parser("ksd", help="kernel Stein discrepancy test")
    p.add_argument("--y", required=True)
    p.add_argument("--target", type=_dist_arg, default="gauss:d=1")
    p.add_argument("--header", action="store_true")
    p.add_argument("--variant", choices=("v", "u"), default="v")
    p.add_argument("--hp", type=float, default=None, help="bound on the Stein kernel (u variant)")
    _common(p, threshold="min:B=500")

    p = sub.add_parser("changepoint", help="off-line change-point scan")
    p.add_argument("--z", required=True)
    p.add_argument("--u", type=_fraction, default=0.1)
    p.add_argument("--v", type=_fraction, default=0.9)
    p.add_argument("--window", type=_positive_int, default=None,
                   help="rescan sliding windows of this length")
    p.add_argument("--step", type=_positive_int, default=None)
    p.add_argument("--header", action="store_true")
    _common(p)

    p = sub.add_parser("exponent", help="Monte Carlo type-II error exponent curve")
    p.add_argument("--test", choices=("one-mmd", "two-mmd", "ksd"), required=True)
    p.add_argument("--p", type=_dist_arg, required=True)
    p.add_argument("--q", type=_dist_arg, required=True)
    p.add_argument("--sizes", type=_int_list, default=[100, 200, 300, 400])
    p.add_argument("--trials", type=_positive_int, default=100_000)
    p.add_argument("--variant", choices=("biased", "unbiased"), default="biased")
    p.add_argument("--ratio", type=float, default=1.0, help="n / m for two-mmd")
    p.add_argument("--normalizer", choices=("m", "n_plus_m"), default=None)
    p.add_argument("--bits", action="store_true", help="report exponents in bits")
    p.add_argument("--summary", default=None, help="also write the fitted slope as JSON")
    _common(p, kernel="gaussian:gamma=2.0")

    p = sub.add_parser("experiment", help="canned experiments")
    exp = p.add_subparsers(dest="experiment", required=True)
    b = exp.add_parser("blobs", help="Blobs bandwidth sweep")
    b.add_argument("--eps", type=float, default=6.0)
    b.add_argument("--n", type=_positive_int, default=720)
    b.add_argument("--trials", type=_positive_int, default=200)
    b.add_argument("--perm", type=_positive_int, default=500)
    b.add_argument("--bandwidths", type=_float_list, default=None)
    b.add_argument("--summary", default=None)
    b.add_argument("--alpha", type=_alpha, default=0.1)
    b.add_argument("--seed", type=_nonneg_int, default=0)
    b.add_argument("--out", default="-")
    b.add_argument("--threads", type=_nonneg_int, default=1)
    return parser


_INPUT_FLAGS = ("x", "y", "z")


def parse_args(argv) -> RunConfig:
    """Validate ``argv`` into a :class:`RunConfig`; raises UsageError."""
    ns = build_parser().parse_args(argv)
    opts = vars(ns).copy()
    sub = opts.pop("subcommand")
    if sub == "experiment":
        sub = f"experiment {opts.pop('experiment')}"
    inputs = {k: opts.pop(k) for k in _INPUT_FLAGS if k in opts}
    cfg = RunConfig(sub, inputs, opts.pop("kernel", "gaussian"), opts.pop("threshold", None),
                    opts.pop("alpha"), opts.pop("seed"), opts.pop("out"),
                    opts.pop("bits", False), opts.pop("threads"), opts)
    if sub == "changepoint" and not cfg.options["u"] < cfg.options["v"]:
        raise UsageError("--u must be smaller than --v")
    if sub == "exponent":
        if any(b <= a for a, b in zip(cfg.options["sizes"], cfg.options["sizes"][1:])):
            raise UsageError("--sizes must be strictly increasing")
        if cfg.options["sizes"][0] < 2:
            raise UsageError("--sizes must be at least 2")
        if cfg.options["trials"] < 1000:
            raise UsageError("--trials must be at least 1000")
        if cfg.options["normalizer"] is None:
            cfg.options["normalizer"] = "n_plus_m" if cfg.options["test"] == "two-mmd" else "m"
    if sub == "experiment blobs":
        if not cfg.options["eps"] > 1:
            raise UsageError("--eps must exceed 1")
        if cfg.options["n"] < 50:
            raise UsageError("--n must be at least 50")
        if cfg.options["perm"] < 100:
            raise UsageError("--perm must be at least 100")
    return cfg


# --- input / output ----------------------------------------------------------

def load_csv(path: str, header: bool = False) -> np.ndarray:
    """Read a rectangular numeric CSV (one observation per row) into an n x d array."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    start = 1 if header else 0
    data, width = [], None
    for r, row in enumerate(rows[start:], start=start + 1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise InputError(f"{path}: row {r} has {len(row)} columns, expected {width}")
        values = []
        for c, cell in enumerate(row, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise InputError(f"{path}: row {r}, column {c}: not a number: {cell!r}") from None
            if not math.isfinite(v):
                raise InputError(f"{path}: row {r}, column {c}: non-finite value {cell!r}")
            values.append(v)
        data.append(values)
    if not data:
        raise InputError(f"{path}: no data rows")
    return np.asarray(data, dtype=float)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def _write(path: str, text: str):
    if path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(path, "w", newline="") as fh:
        fh.write(text)


def report_json(payload: dict, config: RunConfig) -> str:
    doc = {"schema_version": SCHEMA_VERSION, "versions": {"kuht": __version__},
           "config": config.effective(), **payload}
    return json.dumps(_clean(doc), sort_keys=True, indent=2) + "\n"


def curve_csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(float(row[k])) if isinstance(row[k], float) else row[k]
                         for k in columns})
    return buf.getvalue()


def emit_report(report, config: RunConfig, path: str | None = None) -> None:
    """Write a report as JSON, or as CSV for curve types."""
    path = config.out if path is None else path
    if isinstance(report, dict):
        _write(path, report_json(report, config))
    elif hasattr(report, "rows"):
        _write(path, curve_csv(report.rows(), ["gamma", "type2_rate", "se"]))
    elif hasattr(report, "beta_hat"):
        _write(path, curve_csv(_exponent_rows(report, config.bits),
                               ["size", "beta_hat", "se", "minus_log_beta_over_size"]))
    else:
        _write(path, report_json(report.to_dict(), config))


# --- subcommands -------------------------------------------------------------

def _resolve_kernel(spec: str, *samples):
    if spec == "median":
        gamma = median_heuristic_bandwidth(*samples)
        if not gamma > 0:
            raise InputError("median heuristic bandwidth is zero (too many repeated points); "
                             "pass --kernel explicitly")
        return gaussian(gamma)
    return parse_kernel(spec)


def _run_two_sample(cfg):
    X = load_csv(cfg.inputs["x"], cfg.options["header"])
    Y = load_csv(cfg.inputs["y"], cfg.options["header"])
    if X.shape[1] != Y.shape[1]:
        raise InputError(f"dimension mismatch: x has {X.shape[1]} columns, y has {Y.shape[1]}")
    kernel = _resolve_kernel(cfg.kernel, X, Y)
    spec = parse_threshold(cfg.threshold, cfg.alpha)
    return run_two_sample_test(X, Y, kernel, spec, cfg.options["variant"], cfg.seed)


def _target(cfg, Y):
    dist = parse_distribution(cfg.options["target"])
    model = dist.null_model
    if model is None:
        raise InputError(f"target {dist.text!r} cannot serve as a null model")
    dim = model.dim if hasattr(model, "dim") else 1
    if Y.shape[1] != dim:
        raise InputError(f"data has {Y.shape[1]} columns, target has dimension {dim}")
    return dist, model


def _run_one_sample_mmd(cfg):
    Y = load_csv(cfg.inputs["y"], cfg.options["header"])
    _, model = _target(cfg, Y)
    kernel = _resolve_kernel(cfg.kernel, Y)
    spec = parse_threshold(cfg.threshold, cfg.alpha)
    try:
        return run_one_sample_test(model, Y, kernel, spec, cfg.options["variant"], cfg.seed)
    except NotImplementedError as err:
        raise InputError(f"unsupported target/kernel: {err}") from None


def _run_one_sample_draw(cfg):
    Y = load_csv(cfg.inputs["y"], cfg.options["header"])
    _, model = _target(cfg, Y)
    kernel = _resolve_kernel(cfg.kernel, Y)
    spec = parse_threshold(cfg.threshold, cfg.alpha)
    return run_one_sample_via_two_sample(model, Y, kernel, cfg.options["n_draws"], spec,
                                         cfg.options["variant"], cfg.seed)


def _run_ksd(cfg):
    Y = load_csv(cfg.inputs["y"], cfg.options["header"])
    dist, model = _target(cfg, Y)
    if dist.target is None:
        raise InputError("KSD needs a differentiable target density (gauss:...)")
    kernel = _resolve_kernel(cfg.kernel, Y)
    spec = parse_threshold(cfg.threshold, cfg.alpha)
    return run_ksd_test(SteinKernelCtx(dist.target, kernel), Y, spec,
                        cfg.options["variant"], cfg.options["hp"], cfg.seed)


def _run_changepoint(cfg):
    Z = load_csv(cfg.inputs["z"], cfg.options["header"])
    kernel = _resolve_kernel(cfg.kernel, Z)
    config = ScanConfig(cfg.options["u"], cfg.options["v"], cfg.alpha, kernel, cfg.seed)
    payload = scan(Z, config).to_dict()
    payload["kernel"] = kernel.spec
    payload["n"] = int(Z.shape[0])
    if cfg.options["window"]:
        payload["windows"] = scan_windows(Z, config, cfg.options["window"], cfg.options["step"])
    return payload


def _exponent_rows(est, bits):
    scale = 1.0 / math.log(2.0) if bits else 1.0
    return [{"size": s, "beta_hat": b, "se": e, "minus_log_beta_over_size": r * scale}
            for s, b, e, r in zip(est.sizes, est.beta_hat, est.se,
                                  est.minus_log_beta_over_size())]


def _run_exponent(cfg):
    o = cfg.options
    P = parse_distribution(o["p"])
    Q = parse_distribution(o["q"])
    kernel = parse_kernel(cfg.kernel)
    if o["test"] == "one-mmd":
        test = OneSampleMMD(kernel, cfg.alpha, o["variant"])
        null = P.null_model
    elif o["test"] == "two-mmd":
        test = TwoSampleMMD(kernel, cfg.alpha, o["variant"], o["ratio"])
        null = P.pmf if P.pmf is not None else P
    else:
        if P.target is None:
            raise InputError("--test ksd needs a differentiable --p (gauss:...)")
        test = KSDTest(kernel, cfg.alpha)
        null = P.target
    if null is None:
        raise InputError(f"--p {o['p']!r} cannot serve as the null for {o['test']}")
    alt = Q.pmf if Q.pmf is not None else Q
    try:
        est = estimate_type2_exponent(test, null, alt, o["sizes"], o["trials"],
                                      o["normalizer"], cfg.seed, cfg.threads)
    except NotImplementedError as err:
        raise InputError(f"unsupported null/kernel combination: {err}") from None
    return est


def _run_blobs(cfg):
    o = cfg.options
    return blobs_bandwidth_sweep(o["n"], o["eps"], o["bandwidths"] or default_bandwidths(),
                                 o["trials"], cfg.alpha, o["perm"], cfg.seed, cfg.threads)


_DISPATCH = {
    "two-sample": _run_two_sample,
    "one-sample-mmd": _run_one_sample_mmd,
    "one-sample-draw": _run_one_sample_draw,
    "ksd": _run_ksd,
    "changepoint": _run_changepoint,
    "exponent": _run_exponent,
    "experiment blobs": _run_blobs,
}


def _summary(result, cfg) -> dict | None:
    if hasattr(result, "slope"):
        scale = 1.0 / math.log(2.0) if cfg.bits else 1.0
        return {"unit": "bits" if cfg.bits else "nats", "slope": result.slope * scale,
                "slope_se": result.slope_se * scale, "fit_sizes": result.fit_sizes,
                "normalizer": result.normalizer, "normalized_sizes": result.normalized_sizes,
                "censored": result.censored, "trials": result.trials}
    if hasattr(result, "median_rate"):
        return {"median_bandwidth": result.median_bandwidth,
                "median_rate": result.median_rate, "trials": result.trials,
                "n": result.n, "m": result.m, "epsilon": result.epsilon,
                "alpha": result.alpha}
    return None


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = parse_args(argv)
    except UsageError as err:
        return _fail("usage", str(err), EXIT_USAGE)
    except SystemExit as err:  # --help / --version
        return int(err.code or 0)
    for path in cfg.inputs.values():
        if not os.path.isfile(path) or not os.access(path, os.R_OK):
            return _fail("io", f"cannot read input file {path!r}", EXIT_IO)
    try:
        result = _DISPATCH[cfg.subcommand](cfg)
        emit_report(result, cfg)
        summary = _summary(result, cfg)
        if summary is not None and cfg.options.get("summary"):
            _write(cfg.options["summary"], report_json(summary, cfg))
    except (InputError, ValueError) as err:
        return _fail("input", str(err), EXIT_USAGE)
    except OSError as err:
        return _fail("io", str(err), EXIT_IO)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
