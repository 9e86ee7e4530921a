"""Command line front end.

    fragsim <mode> --config run.toml [--out DIR] [--threads N]
    fragsim report summary.json [summary.json ...] [--out DIR]

Exit status: 0 success, 1 the run finished but a check failed (including a
disagreement between the analytic and the empirical verdict), 2 invalid
configuration or input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import MODES, RunConfig, load_config
from .errors import ConfigError, FragsimError, NoStationaryProfileError, NumericError
from .io import decode_float, read_json, write_csv, write_json
from .runner import MODES as PIPELINES
from .runner import analytic_verdict

log = logging.getLogger("fragsim")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
REPORT_COLUMNS = ["mode", "kernel", "alpha", "mean_log", "verdict", "final_metric", "runtime_s", "seed"]
SUMMARY_KEYS = {"mode", "seed", "alpha", "kernel", "mean_log", "verdict_analytic", "metrics", "checks", "runtime_s"}


def _versions():
    return {
        "fragsim": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def run(cfg: RunConfig, out_dir) -> tuple[int, dict]:
    """Execute one configured run and write ``summary.json`` into ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from None
    kernel = cfg.make_kernel()
    t0 = time.perf_counter()
    result = PIPELINES[cfg.mode](cfg, out)
    runtime = time.perf_counter() - t0
    checks = result["checks"]
    summary = {
        "mode": cfg.mode,
        "seed": cfg.seed,
        "alpha": cfg.alpha,
        "kernel": kernel.describe(),
        "mean_log": kernel.mean_log(),
        "verdict_analytic": analytic_verdict(kernel) if cfg.alpha > 0 else "shattering",
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "versions": _versions(),
        "runtime_s": runtime,
        "metrics": result["metrics"],
        "checks": checks,
        "passed": all(checks.values()),
        "files": sorted(Path(f).name for f in result["files"]),
    }
    if "verdict_empirical" in result:
        summary["verdict_empirical"] = result["verdict_empirical"]
    write_json(out / "summary.json", summary)
    return (EXIT_OK if summary["passed"] else EXIT_CHECK_FAILED), summary


def _final_metric(s: dict) -> str:
    m = s["metrics"]
    if s["mode"] in ("converge", "sweep-check"):
        if "l1_pde" in m:
            return f"L1={m['l1_pde'][-1]:.6g}"
        return "tail=" + ">".join(f"{v:.4g}" for v in m["tail_mass_pde"])
    for key in ("l1_to_profile", "ks_to_profile", "l1_rescaled_final", "moments", "mean_exp_functional"):
        if key in m:
            v = m[key]
            return f"{key}={v[-1] if isinstance(v, list) else v:.6g}"
    return ""


def report(summary_paths, out_dir=None):
    """Consolidate run summaries into ``report.csv`` and ``report.txt``.
    Returns the rows."""
    rows = []
    for p in summary_paths:
        s = read_json(p)
        missing = SUMMARY_KEYS - set(s)
        if missing:
            raise ConfigError(f"{p}: not a run summary (missing {sorted(missing)})")
        mean_log = decode_float(s["mean_log"])
        rows.append(
            [
                s["mode"],
                s["kernel"],
                f"{s['alpha']:.17g}",
                "+inf" if math.isinf(mean_log) else f"{mean_log:.17g}",
                s.get("verdict_empirical", s["verdict_analytic"]),
                _final_metric(s),
                f"{s['runtime_s']:.3f}",
                str(s["seed"]),
            ]
        )
    text = _format_table(REPORT_COLUMNS, rows)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "report.csv", REPORT_COLUMNS, rows)
        (out / "report.txt").write_text(text)
    return rows, text


def _format_table(header, rows):
    widths = [max([len(h)] + [len(r[i]) for r in rows]) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows]
    return "\n".join(lines) + "\n"


def build_parser():
    ap = argparse.ArgumentParser(prog="fragsim", description="Fragmentation process simulations and diagnostics.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        p = sub.add_parser(mode)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", type=Path, default=Path("."))
        p.add_argument("--threads", type=int, default=None)
    p = sub.add_parser("report")
    p.add_argument("summaries", nargs="*", type=Path)
    p.add_argument("--out", type=Path, default=None)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        if args.mode == "report":
            _, text = report(args.summaries, args.out)
            sys.stdout.write(text)
            return EXIT_OK
        cfg = load_config(args.config, mode=args.mode)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be >= 1")
            cfg.threads = args.threads
        code, summary = run(cfg, args.out)
        status = "passed" if code == EXIT_OK else "FAILED " + ", ".join(k for k, v in summary["checks"].items() if not v)
        print(f"{cfg.mode}: {status} ({summary['runtime_s']:.2f} s) -> {args.out / 'summary.json'}")
        return code
    except (ConfigError, NoStationaryProfileError, FileNotFoundError) as exc:
        print(f"fragsim: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"fragsim: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FragsimError as exc:
        print(f"fragsim: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
