"""``hall-lab`` command line: run, validate and list experiment scenarios.

Exit codes: 0 all checks passed, 1 error (invalid config, failed
assumption, capacity), 2 at least one check outside its tolerance.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import read_config, resolve
from .errors import ConfigurationError, HallLabError

SCHEMA_VERSION = "1.0"
EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


def plain(x):
    """Recursively convert to JSON-ready builtins (complex -> ``{"re", "im"}``, non-finite -> string)."""
    if isinstance(x, dict):
        return {str(k): plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return plain(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        f = float(x)
        return f if math.isfinite(f) else repr(f)
    if isinstance(x, (complex, np.complexfloating)):
        return {"re": plain(x.real), "im": plain(x.imag)}
    return x


def _error_stanza(exc: BaseException) -> dict:
    details = {k: plain(getattr(exc, k)) for k in ("gap", "points", "residual", "witness", "circulation")
               if getattr(exc, k, None) is not None}
    return {"type": type(exc).__name__, "message": str(exc), "details": details}


def run(config: dict, overrides=()) -> tuple[dict, dict, int]:
    """Execute one scenario; returns ``(report, tables, exit_code)``.

    Errors never escape: they become an ``error`` stanza with exit code 1.
    """
    from .scenarios import SCENARIOS

    t0 = time.perf_counter()
    report = {"schema_version": SCHEMA_VERSION, "scenario": config.get("scenario") if isinstance(config, dict) else None,
              "inputs": {}, "results": [], "diagnostics": {}, "timings": {}}
    tables: dict = {}
    try:
        cfg = resolve(config, overrides)
        scenario = SCENARIOS[cfg["scenario"]]
        report.update(scenario=scenario.name, statement=scenario.statement, inputs=plain(cfg))
        with np.errstate(all="ignore"):
            outcome = scenario.run(cfg)
        tables = outcome.tables
        report["results"] = plain(outcome.results)
        report["diagnostics"] = plain({**outcome.diagnostics, "tables": sorted(tables), "version": __version__})
        report["timings"] = plain({"stages": outcome.timings})
        code = EXIT_PASS if all(r["pass"] for r in outcome.results) else EXIT_FAIL
    except (HallLabError, ValueError, MemoryError) as exc:
        report["error"] = _error_stanza(exc)
        code = EXIT_ERROR
    report["timings"]["total_seconds"] = time.perf_counter() - t0
    return report, tables, code


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def write_outputs(report: dict, tables: dict, out_dir: Path, plots: bool = False) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [out_dir / "report.json"]
    written[0].write_text(dumps(report))
    for name, tab in tables.items():
        path = out_dir / f"{name}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(tab["columns"])
            for row in tab["rows"]:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        written.append(path)
    if plots and tables:
        written += _plot_tables(tables, out_dir)
    return written


def _plot_tables(tables: dict, out_dir: Path) -> list[Path]:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not installed; skipping plots", file=sys.stderr)
        return []
    paths = []
    for name, tab in tables.items():
        cols, rows = tab["columns"], tab["rows"]
        if not rows:
            continue
        x = [r[0] for r in rows]
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for j, c in enumerate(cols[1:], start=1):
            ys = [r[j] for r in rows]
            if all(isinstance(y, (int, float)) and not isinstance(y, bool) for y in ys):
                ax.plot(x, ys, "o-", label=c)
        ax.set_xlabel(cols[0])
        ax.legend(fontsize=7)
        fig.tight_layout()
        p = out_dir / f"{name}.png"
        fig.savefig(p, metadata={"Software": None})
        plt.close(fig)
        paths.append(p)
    return paths


def _print_summary(report: dict, stream=sys.stdout) -> None:
    print(f"scenario: {report.get('scenario')}", file=stream)
    for r in report["results"]:
        mark = "PASS" if r["pass"] else "FAIL"
        print(f"  [{mark}] {r['name']}: {r['value']} (tolerance {r['tolerance']})", file=stream)
    if "error" in report:
        print(f"  [ERROR] {report['error']['type']}: {report['error']['message']}", file=stream)


def cmd_run(args) -> int:
    try:
        cfg = read_config(args.config)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        report = {"schema_version": SCHEMA_VERSION, "scenario": None, "inputs": {}, "results": [],
                  "diagnostics": {}, "error": _error_stanza(exc), "timings": {}}
        if args.out:
            write_outputs(report, {}, Path(args.out))
        return EXIT_ERROR
    report, tables, code = run(cfg, args.override)
    plots = bool(report.get("inputs", {}).get("numerics", {}).get("plots", False))
    out = Path(args.out or Path("hall-lab-out") / str(report.get("scenario") or "invalid"))
    write_outputs(report, tables, out, plots)
    _print_summary(report, sys.stderr if code == EXIT_ERROR else sys.stdout)
    print(f"report written to {out / 'report.json'}")
    return code


def cmd_validate(args) -> int:
    try:
        cfg = read_config(args.config)
        resolve(cfg, args.override)
    except ConfigurationError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"ok: scenario {cfg['scenario']}")
    return EXIT_PASS


def cmd_list(args) -> int:
    from .scenarios import SCENARIOS

    width = max(len(n) for n in SCENARIOS)
    for name, s in SCENARIOS.items():
        print(f"{name:<{width}}  {s.statement}")
    return EXIT_PASS


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors (exit 1), not tolerance failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="hall-lab", description="Hall response experiments on lattice fermions.")
    ap.add_argument("--version", action="version", version=f"hall-lab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run the scenario described by a config file")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (default hall-lab-out/<scenario>)")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted config key, e.g. model.L=6 (value parsed as JSON)")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("validate", help="check a config file against the schema")
    p.add_argument("config")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(func=cmd_validate)
    p = sub.add_parser("list-scenarios", help="list the available scenarios")
    p.set_defaults(func=cmd_list)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
