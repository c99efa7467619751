"""Command-line front end.

Every subcommand resolves its configuration as built-in defaults, then the
optional ``--config`` JSON file, then explicit flags. The resolved
configuration (output paths excluded) is embedded in each JSON report, so
feeding a report back through ``--config`` replays it. A report passed as
config contributes its ``config`` member.

Failures print one JSON object ``{"error": ..., "message": ..., "exit_code": ...}``
on stderr. Exit codes: 2 usage/config, 3 file, 4 model or dimension,
5 numerical, 1 anything else.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__, fileio, seeding
from .errors import DataFileError, SmartnetError
from .model import SparsityPattern, builtin_network, draw_random_model, edge_label

TOOL = "smartnet"
EXIT_USAGE = 2
OUTPUT_KEYS = ("out", "table", "config", "report")
ESTIMATORS = ("scsg", "sg", "lasso", "ls", "ridge", "mb")

DEFAULTS = {
    "builtin": {"name": None, "seed": 0, "coeff_std": 0.2, "order": 4},
    "fcs": {"model": None, "normalize": False},
    "audit": {"model": None},
    "simulate": {"model": None, "n": None, "seed": 0, "init": "stationary", "burn_in": None},
    "fit": {"series": None, "order": None, "variant": "scsg", "lambda_": None, "path": False,
            "n_points": 50, "lo_frac": 0.05, "kkt": False, "tol": 1e-8, "kkt_tol": 1e-7},
    "cv": {"series": None, "order": None, "variant": "scsg", "folds": 10, "n_points": 50, "lo_frac": 0.05},
    "trials": {"model": None, "n": None, "trials": 30, "variant": "scsg", "seed": 0, "threads": None,
               "folds": 10, "n_points": 50, "lo_frac": 0.05},
    "roc": {"model": None, "n": 300, "estimators": "scsg,lasso,ls,ridge,mb", "seed": 0, "normalize": False,
            "n_points": 100, "lo_frac": 1e-3, "ridge_penalty": 1e-3},
}
REQUIRED = {
    "builtin": ("name",),
    "fcs": ("model",),
    "audit": ("model",),
    "simulate": ("model", "n"),
    "fit": ("series", "order"),
    "cv": ("series", "order"),
    "trials": ("model", "n"),
    "roc": ("model",),
}


class UsageError(SmartnetError):
    exit_code = EXIT_USAGE


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def _build_parser() -> _Parser:
    sup = argparse.SUPPRESS
    parser = _Parser(prog=TOOL, description="Sparse causal network inference for MAR time series.")
    parser.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text, argument_default=sup)
        p.add_argument("--config", help="JSON file of option values (or a previous report)")
        return p

    p = command("builtin", "Write one of the example networks as a model file.")
    p.add_argument("name", choices=["winterhalder", "parallel", "circle"])
    p.add_argument("--out", help="model file (stdout if omitted)")
    p.add_argument("--seed", type=int, help="coefficient draw seed (circle only)")
    p.add_argument("--coeff-std", dest="coeff_std", type=float, help="coefficient std (circle only)")
    p.add_argument("--order", type=_positive_int, help="model order (circle only)")

    p = command("fcs", "False connection scores of every absent cross edge.")
    p.add_argument("--model", help="model file")
    p.add_argument("--normalize", action="store_true", help="score the unit-power normalized model")
    p.add_argument("--out", help="JSON report (stdout if omitted)")
    p.add_argument("--table", help="two-decimal CSV with original and normalized scores")

    p = command("audit", "Stationary covariance diagnostics and recovery-assumption constants.")
    p.add_argument("--model", help="model file")
    p.add_argument("--out", help="JSON report (stdout if omitted)")

    p = command("simulate", "Simulate a time series from a model.")
    p.add_argument("--model", help="model file")
    p.add_argument("--n", type=_positive_int, help="number of samples")
    p.add_argument("--seed", type=int)
    p.add_argument("--init", choices=["stationary", "zero", "burn_in"])
    p.add_argument("--burn-in", dest="burn_in", type=_positive_int, help="burn-in steps (init=burn_in)")
    p.add_argument("--out", help="CSV file (stdout if omitted)")

    p = command("fit", "Fit SG / SCSG at one penalty or along a penalty path.")
    p.add_argument("--series", help="CSV time series")
    p.add_argument("--order", type=_positive_int)
    p.add_argument("--variant", choices=["sg", "scsg"])
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--lambda", dest="lambda_", type=float, help="penalty shared by every node")
    mode.add_argument("--path", action="store_true", help="solve along a log-spaced grid per node")
    p.add_argument("--n-points", dest="n_points", type=_positive_int)
    p.add_argument("--lo-frac", dest="lo_frac", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--kkt-tol", dest="kkt_tol", type=float)
    p.add_argument("--kkt", action="store_true", help="print per-node KKT certificates")
    p.add_argument("--out", help="JSON report (stdout if omitted)")

    p = command("cv", "Cross-validate the penalty for every node and refit.")
    p.add_argument("--series", help="CSV time series")
    p.add_argument("--order", type=_positive_int)
    p.add_argument("--variant", choices=["sg", "scsg"])
    p.add_argument("--folds", type=_positive_int)
    p.add_argument("--n-points", dest="n_points", type=_positive_int)
    p.add_argument("--lo-frac", dest="lo_frac", type=float)
    p.add_argument("--out", help="JSON report (stdout if omitted)")

    p = command("trials", "Monte-Carlo support recovery with CV-selected penalties.")
    p.add_argument("--model", help="model file")
    p.add_argument("--n", type=_positive_int, help="samples per trial")
    p.add_argument("--trials", type=_positive_int)
    p.add_argument("--variant", choices=["sg", "scsg"])
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=_positive_int, help="worker processes (default: SMARTNET_THREADS or all cores)")
    p.add_argument("--folds", type=_positive_int)
    p.add_argument("--n-points", dest="n_points", type=_positive_int)
    p.add_argument("--lo-frac", dest="lo_frac", type=float)
    p.add_argument("--out", help="JSON report (stdout if omitted)")

    p = command("roc", "ROC curves of several estimators on one simulated dataset.")
    p.add_argument("--model", help="model file")
    p.add_argument("--n", type=_positive_int, help="number of samples")
    p.add_argument("--estimators", help=f"comma-separated subset of {','.join(ESTIMATORS)}")
    p.add_argument("--seed", type=int)
    p.add_argument("--normalize", action="store_true", help="scale each node to unit sample power first")
    p.add_argument("--n-points", dest="n_points", type=_positive_int)
    p.add_argument("--lo-frac", dest="lo_frac", type=float)
    p.add_argument("--ridge-penalty", dest="ridge_penalty", type=float)
    p.add_argument("--out", help="CSV file (stdout if omitted)")
    p.add_argument("--report", help="JSON report with AUCs and the resolved config")
    return parser


def _load_config(path: str) -> dict:
    try:
        doc = json.loads(fileio._read_text(path))
    except json.JSONDecodeError as exc:
        raise DataFileError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if isinstance(doc, dict) and isinstance(doc.get("config"), dict) and "tool" in doc:
        doc = doc["config"]
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    return doc


_KINDS = {
    "seed": int, "order": int, "n": int, "burn_in": int, "n_points": int, "folds": int, "trials": int,
    "threads": int, "coeff_std": float, "lambda_": float, "lo_frac": float, "tol": float, "kkt_tol": float,
    "ridge_penalty": float, "normalize": bool, "path": bool, "kkt": bool,
}


def _coerce(key: str, value, kind):
    if kind is bool:
        if isinstance(value, bool):
            return value
    elif kind is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    raise UsageError(f"option {key!r} must be {kind.__name__}, got {value!r}")


def resolve_config(command: str, flags: dict) -> dict:
    """Defaults, overlaid by the config file, overlaid by explicit flags."""
    cfg = dict(DEFAULTS[command])
    if flags.get("config"):
        extra = _load_config(flags["config"])
        unknown = sorted(set(extra) - set(cfg) - set(OUTPUT_KEYS))
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {', '.join(unknown)}")
        cfg.update(extra)
    cfg.update({k: v for k, v in flags.items() if k != "config"})
    for key, kind in _KINDS.items():
        if cfg.get(key) is not None:
            cfg[key] = _coerce(key, cfg[key], kind)
    missing = [k for k in REQUIRED[command] if cfg.get(k) is None]
    if missing:
        raise UsageError(f"{command}: missing required option(s): {', '.join('--' + m.replace('_', '-') for m in missing)}")
    return cfg


def _report(command: str, cfg: dict, result: dict, seeds: Optional[dict] = None) -> str:
    doc = {
        "tool": TOOL,
        "version": __version__,
        "command": command,
        "config": {k: v for k, v in cfg.items() if k not in OUTPUT_KEYS},
        "result": result,
    }
    if seeds is not None:
        doc["seeds"] = seeds
    return fileio.dumps_json(doc)


def _emit(text: str, path: Optional[str], stdout) -> None:
    if path:
        fileio.atomic_write(path, text)
    else:
        stdout.write(text)


def _threads(cfg: dict) -> int:
    if cfg.get("threads") is not None:
        return int(cfg["threads"])
    from .evaluation import default_threads

    return default_threads()


# -- subcommands -------------------------------------------------------------


def _cmd_builtin(cfg, stdout, stderr):
    net = builtin_network(cfg["name"])
    if isinstance(net, SparsityPattern):
        net = draw_random_model(net, int(cfg["order"]), float(cfg["coeff_std"]), seed=int(cfg["seed"]))
    _emit(fileio.dumps_json(fileio.model_to_dict(net)), cfg.get("out"), stdout)


def _fcs_table(orig, norm) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["edge", "psi", "psi_sc", "psi_normalized", "psi_sc_normalized"])
    for (i, j) in sorted(orig.per_edge, key=lambda e: (e[1], e[0])):
        o, n = orig.per_edge[(i, j)], norm.per_edge[(i, j)]
        w.writerow([edge_label(i, j)] + [f"{v:.2f}" for v in (o["psi"], o["psi_sc"], n["psi"], n["psi_sc"])])
    w.writerow(["max"] + [f"{v:.2f}" for v in (orig.psi_max, orig.psi_sc_max, norm.psi_max, norm.psi_sc_max)])
    return buf.getvalue()


def _cmd_fcs(cfg, stdout, stderr):
    from .fcs import fcs_report

    model = fileio.load_model(cfg["model"])
    rep = fcs_report(model, normalize=bool(cfg["normalize"]))
    _emit(_report("fcs", cfg, rep.to_dict()), cfg.get("out"), stdout)
    if cfg.get("table"):
        orig = rep if not rep.normalized else fcs_report(model)
        norm = rep if rep.normalized else fcs_report(model, normalize=True)
        fileio.atomic_write(cfg["table"], _fcs_table(orig, norm))


def _cmd_audit(cfg, stdout, stderr):
    from .covariance import stationary_covariance
    from .fcs import audit_assumptions

    model = fileio.load_model(cfg["model"])
    gamma = stationary_covariance(model)
    result = {"covariance": gamma.diagnostics(model), "assumptions": audit_assumptions(model, gamma).to_dict()}
    _emit(_report("audit", cfg, result), cfg.get("out"), stdout)


def _cmd_simulate(cfg, stdout, stderr):
    from .model import simulate

    model = fileio.load_model(cfg["model"])
    init = cfg["init"]
    if init == "burn_in" and cfg.get("burn_in") is not None:
        init = ("burn_in", int(cfg["burn_in"]))
    series = simulate(model, int(cfg["n"]), seed=seeding.derive(int(cfg["seed"])), init=init)
    _emit(fileio.series_to_csv(series), cfg.get("out"), stdout)


def _cmd_fit(cfg, stdout, stderr):
    from .baselines import entry_statistics
    from .solver import build_design, lambda_max, lambda_path, solve

    series = fileio.load_series(cfg["series"])
    order, variant = int(cfg["order"]), cfg["variant"]
    if cfg.get("lambda_") is None and not cfg.get("path"):
        raise UsageError("fit: give either --lambda or --path")
    if cfg.get("lambda_") is not None and cfg.get("path"):
        raise UsageError("fit: --lambda and --path are mutually exclusive")
    solver_kw = {"tol": float(cfg["tol"]), "kkt_tol": float(cfg["kkt_tol"])}
    nodes, paths, edges = [], [], []
    for i in range(series.n_nodes):
        design = build_design(series, i, order)
        lmax = lambda_max(design, variant)
        if cfg.get("path"):
            path = lambda_path(design, variant, lo_frac=float(cfg["lo_frac"]), n_points=int(cfg["n_points"]), **solver_kw)
            paths.append(path)
            nodes.append({"node": i + 1, "lambda_max": lmax, "path": [s.to_dict() for s in path]})
        else:
            sol = solve(design, float(cfg["lambda_"]), variant, **solver_kw)
            nodes.append({"node": i + 1, "lambda_max": lmax, "solution": sol.to_dict()})
            edges.extend(edge_label(i, j) for j in sol.discovered_parents)
    result = {"nodes": nodes}
    if paths:
        stats = entry_statistics(paths, series.n_nodes)
        result["edges"] = [{"edge": edge_label(i, j), "entry_lambda": float(stats[i, j])}
                           for i, j in zip(*np.nonzero(stats))
                           if not (variant == "scsg" and i == j)]
    else:
        result["edges"] = edges
    _emit(_report("fit", cfg, result), cfg.get("out"), stdout)
    if cfg.get("kkt"):
        for node in nodes:
            sols = node["path"] if "path" in node else [node["solution"]]
            worst = max(s["kkt_residual"] for s in sols)
            print(f"node {node['node']}: max KKT residual {worst:.3e} over {len(sols)} solve(s)", file=stderr)


def _cmd_cv(cfg, stdout, stderr):
    from .evaluation import fit_network_cv

    series = fileio.load_series(cfg["series"])
    edges, sols, cvs = fit_network_cv(series, int(cfg["order"]), cfg["variant"], int(cfg["folds"]),
                                      int(cfg["n_points"]), float(cfg["lo_frac"]))
    result = {
        "edges": sorted(edge_label(i, j) for i, j in edges),
        "nodes": [{"cv": cv.to_dict(), "solution": s.to_dict()} for cv, s in zip(cvs, sols)],
    }
    _emit(_report("cv", cfg, result), cfg.get("out"), stdout)


def _cmd_trials(cfg, stdout, stderr):
    from .evaluation import recovery_trial

    model = fileio.load_model(cfg["model"])
    tally = recovery_trial(model, int(cfg["n"]), int(cfg["trials"]), cfg["variant"], int(cfg["seed"]),
                           threads=_threads(cfg), folds=int(cfg["folds"]), n_points=int(cfg["n_points"]),
                           lo_frac=float(cfg["lo_frac"]))
    result = tally.to_dict()
    seeds = {"seed": int(cfg["seed"]), "rule": "trial k simulates with SeedSequence(seed, spawn_key=(k,))",
             "trials": [t["seed"] for t in result["trials"]]}
    # thread count never changes results, so keep it out of the replayable config
    shown = {k: v for k, v in cfg.items() if k != "threads"}
    _emit(_report("trials", shown, result, seeds), cfg.get("out"), stdout)


def _parse_estimators(text) -> list[str]:
    names = [s.strip() for s in (text.split(",") if isinstance(text, str) else text) if s.strip()]
    bad = [s for s in names if s not in ESTIMATORS]
    if bad or not names:
        raise UsageError(f"unknown estimator(s) {bad}; choose from {','.join(ESTIMATORS)}")
    return names


def _cmd_roc(cfg, stdout, stderr):
    from .evaluation import roc

    names = _parse_estimators(cfg["estimators"])
    model = fileio.load_model(cfg["model"])
    curves = roc(model, int(cfg["n"]), names, seed=int(cfg["seed"]), normalize=bool(cfg["normalize"]),
                 n_points=int(cfg["n_points"]), lo_frac=float(cfg["lo_frac"]),
                 ridge_penalty=float(cfg["ridge_penalty"]))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["estimator", "threshold", "fpr", "tpr", "auc"])
    for name in names:
        for row in curves[name].to_rows(name):
            w.writerow([row[0]] + [repr(v) for v in row[1:]])
    _emit(buf.getvalue(), cfg.get("out"), stdout)
    if cfg.get("report"):
        seeds = {"seed": int(cfg["seed"]), "rule": "data simulated with SeedSequence(seed, spawn_key=(0,))"}
        fileio.atomic_write(cfg["report"], _report("roc", cfg, {"auc": {k: curves[k].auc for k in names}}, seeds))


COMMANDS = {
    "builtin": _cmd_builtin,
    "fcs": _cmd_fcs,
    "audit": _cmd_audit,
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "cv": _cmd_cv,
    "trials": _cmd_trials,
    "roc": _cmd_roc,
}


def _error_record(exc: BaseException, code: int) -> str:
    return json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}, sort_keys=True)


def run(argv: Optional[Sequence[str]] = None, stdout=None, stderr=None) -> int:
    """Execute one subcommand and return its exit code."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        ns = _build_parser().parse_args(argv)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except UsageError as exc:
        print(_error_record(exc, EXIT_USAGE), file=stderr)
        return EXIT_USAGE
    flags = vars(ns)
    command = flags.pop("command")
    try:
        cfg = resolve_config(command, flags)
        COMMANDS[command](cfg, stdout, stderr)
        return 0
    except SmartnetError as exc:
        err, code = exc, exc.exit_code
    except Exception as exc:  # noqa: BLE001 - reported, never swallowed silently
        err, code = exc, 1
    print(_error_record(err, code), file=stderr)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
