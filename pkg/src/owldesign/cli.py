"""Command-line interface: ``owl run``, ``owl replicate`` and ``owl list``.

Exit codes: 0 success, 2 usage error, 3 runtime failure.
"""

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import tempfile
import time
from importlib import resources

import numpy as np

from . import __version__, benchmarks, config
from .campaign import STRATEGIES, run_ensemble
from .criteria import TAGS
from .errors import ArgumentError, OwlError

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3
FIGURES = ("fig3", "fig5", "fig7", "fig8", "appC", "appD")
SCALES = ("desk", "full")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def fmt(x):
    """Lossless text form of a number (17 significant digits)."""
    return format(float(x), ".17g")


def atomic_write(path, data):
    """Write bytes or text to ``path`` via a temp file and rename."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _json_text(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def errors_csv(results):
    m = results[0].repeats[0].inputs.shape[1]
    header = ["repeat", "step", "criterion", "error_abs", "error_rel"]
    header += [f"h_{k}" for k in range(1, m + 1)]
    rows = []
    for res in results:
        for rep in res.repeats:
            for i in range(len(rep.errors_abs)):
                rows.append([rep.repeat, i + 1, res.config.strategy, fmt(rep.errors_abs[i]),
                             fmt(rep.errors_rel[i])] + [fmt(v) for v in rep.inputs[i]])
    return _csv_text(header, rows)


def samples_csv(results):
    m = results[0].repeats[0].inputs.shape[1]
    header = ["repeat", "criterion", "phase", "index", "y"]
    header += [f"x_{k}" for k in range(1, m + 1)]
    rows = []
    for res in results:
        name = res.config.strategy
        for rep in res.repeats:
            for i, (x, y) in enumerate(zip(rep.init_inputs, rep.init_outputs)):
                rows.append([rep.repeat, name, "init", i + 1, fmt(y)] + [fmt(v) for v in x])
            for i, (x, y) in enumerate(zip(rep.inputs, rep.outputs)):
                rows.append([rep.repeat, name, "step", i + 1, fmt(y)] + [fmt(v) for v in x])
    return _csv_text(header, rows)


def curve_csv(res):
    rel = np.stack([r.errors_rel for r in res.repeats]).mean(axis=0)
    rows = [[i + 1, fmt(res.mean[i]), fmt(res.std[i]), fmt(res.band_lo[i]),
             fmt(res.band_hi[i]), fmt(rel[i])] for i in range(len(res.mean))]
    return _csv_text(["step", "mean_error", "std_error", "band_lo", "band_hi",
                      "mean_error_rel"], rows)


def _criterion_summary(res):
    rel = np.stack([r.errors_rel for r in res.repeats]).mean(axis=0)
    return {
        "n_repeats": len(res.repeats),
        "n_steps": len(res.mean),
        "mean_error": res.mean,
        "std_error": res.std,
        "band_lo": res.band_lo,
        "band_hi": res.band_hi,
        "mean_error_rel": rel,
        "final_mean_error": res.mean[-1],
    }


def _warnings(results):
    return [{"criterion": res.config.strategy, "repeat": r, "step": s, "message": msg}
            for res in results for r, s, msg in res.warnings]


def summary_dict(cfg, provenance, results):
    return _jsonable({
        "tool": "owldesign",
        "version": __version__,
        "system": cfg["system"],
        "config": cfg,
        "overrides": provenance,
        "criteria": {res.config.strategy: _criterion_summary(res) for res in results},
        "warnings": _warnings(results),
    })


def write_outputs(out_dir, files, manifest_extra, started):
    """Write data files atomically and a manifest with their checksums."""
    os.makedirs(out_dir, exist_ok=True)
    checksums = {}
    for name in sorted(files):
        data = files[name].encode("utf-8")
        path = os.path.join(out_dir, name)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        atomic_write(path, data)
        checksums[name] = {"sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)}
    manifest = dict(manifest_extra)
    manifest.update({
        "tool": "owldesign",
        "version": __version__,
        "wall_clock_seconds": round(time.perf_counter() - started, 3),
        "files": checksums,
    })
    atomic_write(os.path.join(out_dir, "manifest.json"), _json_text(_jsonable(manifest)))
    return checksums


def _threads(args):
    if args.threads is not None:
        n = args.threads
    else:
        env = os.environ.get("OWL_THREADS", "")
        try:
            n = int(env) if env else 1
        except ValueError:
            raise ArgumentError(f"OWL_THREADS must be an integer, got {env!r}") from None
    if n < 1:
        raise ArgumentError("thread count must be >= 1")
    return n


def _run_configs(cfg, threads):
    return [run_ensemble(c, threads=threads) for c in config.campaign_configs(cfg)]


def cmd_run(args):
    started = time.perf_counter()
    cfg, provenance = config.load(args.config, overrides=args.override, seed=args.seed)
    if args.scale is not None:
        raise ArgumentError("--scale applies to 'replicate' only")
    camp = config.campaign_configs(cfg)  # validates names before any work
    threads = _threads(args)
    results = [run_ensemble(c, threads=threads) for c in camp]
    files = {
        "errors.csv": errors_csv(results),
        "samples.csv": samples_csv(results),
        "summary.json": _json_text(summary_dict(cfg, provenance, results)),
    }
    write_outputs(args.out, files, {"command": "run", "config": cfg,
                                    "base_seed": cfg["seed"]}, started)
    if args.json:
        print(_json_text({"out": args.out, "files": sorted(files) + ["manifest.json"]}), end="")
    else:
        for res in results:
            print(f"{res.config.strategy}: final mean error {res.mean[-1]:.6g}")
    return EXIT_OK


# -- presets -------------------------------------------------------------------

def _scale_params(scale, desk, full):
    return desk if scale == "desk" else full


def preset(name, scale):
    """List of (system, config dict) pairs for a replication preset."""
    if name not in FIGURES:
        raise ArgumentError(f"unknown preset {name!r}; valid: {', '.join(FIGURES)}")
    if scale not in SCALES:
        raise ArgumentError(f"unknown scale {scale!r}; valid: {', '.join(SCALES)}")
    runs = []

    def add(system, criteria, n_steps, n_repeats, **sections):
        cfg = {"system": system, "criterion": criteria, "n_steps": n_steps,
               "n_repeats": n_repeats}
        cfg.update(sections)
        runs.append(cfg)

    if name in ("fig3", "appD"):
        strategies = ["mi_direct", "mi_gaussian", "mu_c", "q_inf", "monte_carlo"]
        if name == "appD":
            strategies = ["mi_unknown_var", "mi_unknown_var_gaussian"] + strategies
        L, N = _scale_params(scale, (100, 30), (400, 50))
        for system in ("linear2d-case1", "linear2d-case2"):
            for s in strategies:
                mc = s.startswith("mi_") and s not in ("mi_gaussian", "mi_unknown_var_gaussian")
                budgets = _scale_params(
                    scale,
                    {"n_mc": 1000 if mc else 2000, "kde_points": 256},
                    {"n_mc": 100_000, "kde_points": 1024},
                )
                grid = _scale_params(scale, 32 if mc else 1000, 1000)
                add(system, s, N, L, budgets=budgets, optimizer={"grid_count": grid})
    elif name in ("fig5", "appC"):
        strategies = (["mu_c", "q_inf", "monte_carlo"] if name == "fig5"
                      else ["q_inf", "q_beta2", "q_beta3", "q_0.01", "q_0.001"])
        systems = (("linear20d-lownoise", "linear20d-highnoise") if name == "fig5"
                   else ("linear20d-lownoise",))
        L, N = _scale_params(scale, (50, 40), (400, 100))
        for system in systems:
            for s in strategies:
                add(system, s, N, L)
    elif name == "fig8":
        L, N = _scale_params(scale, (50, 100), (200, 100))
        pdf_n = _scale_params(scale, 20_000, 100_000)
        for system in ("nonlinear2d-case1", "nonlinear2d-case2"):
            for s in ("mu_c", "q_0.01"):
                add(system, s, N, L, budgets={"pdf_n_mc": pdf_n})
    return runs


def cmd_replicate(args):
    started = time.perf_counter()
    threads = _threads(args)
    scale = args.scale or "desk"
    seed = 0 if args.seed is None else args.seed
    files, comparison = {}, {}
    if args.figure == "fig7":
        for system in ("nonlinear2d-case1", "nonlinear2d-case2"):
            truth = benchmarks.ground_truth(benchmarks.get_system(system), n_mc=100_000,
                                            seed=seed, with_pdf=True)
            pdf = truth.reference_pdf
            files[f"pdf_{system}.csv"] = _csv_text(
                ["y", "density"], [[fmt(y), fmt(p)] for y, p in zip(pdf.grid, pdf.values)])
            comparison[system] = {"output_variance": truth.exact_output_variance,
                                  "variance_stderr": truth.stderr, "n_mc": 100_000}
    for entry in (preset(args.figure, scale) if args.figure != "fig7" else []):
        merged, _ = config.load(text=_toml_of(entry), overrides=args.override, seed=seed)
        results = _run_configs(merged, threads)
        system = merged["system"]
        for res in results:
            label = f"{system}__{res.config.strategy}"
            files[f"curve_{label}.csv"] = curve_csv(res)
            if args.figure == "fig5":
                m = res.repeats[0].inputs.shape[1]
                rows = [[step] + [fmt(v) for v in res.direction_stats(step)]
                        for step in range(1, len(res.mean) + 1)] if len(res.repeats) > 1 else []
                files[f"directions_{label}.csv"] = _csv_text(
                    ["step"] + [f"var_h_{k}" for k in range(1, m + 1)], rows)
            comparison.setdefault(system, {})[res.config.strategy] = {
                "final_mean_error": res.mean[-1],
                "mean_error": res.mean,
                "n_repeats": len(res.repeats),
                "warnings": len(res.warnings),
            }
    files["comparison.json"] = _json_text(_jsonable({
        "figure": args.figure, "scale": scale, "seed": seed, "systems": comparison,
    }))
    write_outputs(args.out, files, {"command": "replicate", "figure": args.figure,
                                    "scale": scale, "base_seed": seed}, started)
    if args.json:
        print(_json_text(_jsonable(comparison)), end="")
    else:
        for system, entries in comparison.items():
            for strategy, info in entries.items():
                if isinstance(info, dict) and "final_mean_error" in info:
                    print(f"{system} {strategy}: final mean error {info['final_mean_error']:.6g}")
    return EXIT_OK


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    return repr(v)


def _toml_of(entry):
    lines, tables = [], []
    for k, v in entry.items():
        if isinstance(v, dict):
            tables.append((k, v))
        else:
            lines.append(f"{k} = {_toml_value(v)}")
    for name, table in tables:
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {_toml_value(v)}" for k, v in table.items())
    return "\n".join(lines) + "\n"


def listing():
    return {
        "systems": list(benchmarks.system_names()),
        "criteria": list(TAGS),
        "strategies": list(STRATEGIES),
        "presets": list(FIGURES),
        "scales": list(SCALES),
        "config_defaults": config.DEFAULTS,
    }


def cmd_list(args):
    info = listing()
    if args.json:
        print(_json_text(_jsonable(info)), end="")
        return EXIT_OK
    print("systems:")
    for name in info["systems"]:
        print(f"  {name}")
    print("criteria:")
    for tag in info["criteria"]:
        print(f"  {tag}")
    print("strategies:")
    for s in info["strategies"]:
        print(f"  {s}")
    print("presets:")
    for p in info["presets"]:
        print(f"  {p}  (scales: {', '.join(SCALES)})")
    print("config keys (defaults):")
    for key, value in info["config_defaults"].items():
        if isinstance(value, dict):
            for sub, v in value.items():
                print(f"  {key}.{sub} = {v!r}")
        else:
            print(f"  {key} = {value!r}")
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="owl", description="Output-weighted sequential sampling")
    parser.add_argument("--version", action="version", version=f"owl {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, scale=False):
        p.add_argument("--out", default="owl-out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="base seed")
        p.add_argument("--override", action="append", default=[], metavar="K=V",
                       help="dotted config override, repeatable")
        p.add_argument("--threads", type=int, default=None,
                       help="worker processes (default $OWL_THREADS or 1)")
        p.add_argument("--json", action="store_true", help="machine-readable output")
        p.add_argument("--scale", choices=SCALES, default=None,
                       help="preset scale" if scale else argparse.SUPPRESS)

    p_run = sub.add_parser("run", help="run campaigns from a TOML config")
    p_run.add_argument("config")
    common(p_run)
    p_rep = sub.add_parser("replicate", help="run a figure-replication preset")
    p_rep.add_argument("figure", help=f"one of {', '.join(FIGURES)}")
    common(p_rep, scale=True)
    p_list = sub.add_parser("list", help="list systems, criteria and presets")
    p_list.add_argument("--json", action="store_true")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required: run, replicate or list")
        if args.command == "replicate" and args.figure not in FIGURES:
            raise UsageError(f"unknown preset {args.figure!r}; valid: {', '.join(FIGURES)}")
        handler = {"run": cmd_run, "replicate": cmd_replicate, "list": cmd_list}[args.command]
        return handler(args)
    except UsageError as exc:
        print(f"owl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArgumentError, FileNotFoundError) as exc:
        print(f"owl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OwlError, RuntimeError, ValueError, OSError) as exc:
        print(f"owl: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def schema_path():
    return resources.files("owldesign") / "schemas" / "summary.schema.json"


if __name__ == "__main__":
    sys.exit(main())
