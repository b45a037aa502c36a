"""Batch front-end: one declarative JSON config in, CSV data plus a manifest out.

Usage::

    qcrit <command> [--config run.json] [--key value ...] [--output DIR]

Flags override config keys; ``--g-grid`` and ``g_grid`` name the same key.
Grids are written ``start:stop:step`` (stop included when it lies on the grid)
or given as JSON lists.  Floats are printed with 17 significant digits, and
grid points are always written in grid order, so a run is byte-identical
whatever ``QCRIT_THREADS`` is set to.

Exit codes: 0 success, 1 schema error, 2 domain error, 3 numerical or
convergence failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .errors import QcritError, SchemaError

__all__ = ["main", "run", "compare_golden", "parse_grid", "load_config", "COMMANDS", "thread_count"]


# --------------------------------------------------------------------------
# Config schema
# --------------------------------------------------------------------------

REQUIRED = object()


def parse_grid(spec, path: str) -> list[float]:
    """``"a:b:step"`` or a list of numbers -> non-empty list of floats."""
    if isinstance(spec, str):
        parts = spec.split(":")
        if len(parts) != 3:
            raise SchemaError("grid must be 'start:stop:step' or a list", path)
        try:
            a, b, h = (float(x) for x in parts)
        except ValueError:
            raise SchemaError("grid bounds must be numbers", path) from None
        if not all(map(math.isfinite, (a, b, h))) or h <= 0:
            raise SchemaError("grid needs finite bounds and a positive step", path)
        n = int(math.floor((b - a) / h + 1e-9)) + 1 if b >= a else 0
        vals = [a + i * h for i in range(max(n, 0))]
    elif isinstance(spec, (list, tuple)):
        vals = []
        for i, v in enumerate(spec):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise SchemaError("grid entries must be finite numbers", f"{path}[{i}]")
            vals.append(float(v))
    else:
        raise SchemaError("grid must be 'start:stop:step' or a list", path)
    if not vals:
        raise SchemaError("grid is empty", path)
    return vals


def _num(positive=False, nonneg=False, integer=False, lo=None, hi=None):
    def check(v, path):
        if isinstance(v, str):
            try:
                v = int(v) if integer else float(v)
            except ValueError:
                raise SchemaError("expected a number", path) from None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise SchemaError("expected a number", path)
        if integer:
            if float(v) != int(v):
                raise SchemaError("expected an integer", path)
            v = int(v)
        else:
            v = float(v)
        if not math.isfinite(v):
            raise SchemaError("must be finite", path)
        if positive and v <= 0:
            raise SchemaError("must be > 0", path)
        if nonneg and v < 0:
            raise SchemaError("must be >= 0", path)
        if lo is not None and v < lo:
            raise SchemaError(f"must be >= {lo}", path)
        if hi is not None and v > hi:
            raise SchemaError(f"must be <= {hi}", path)
        return v
    return check


def _choice(*opts):
    def check(v, path):
        if v not in opts:
            raise SchemaError(f"must be one of {list(opts)}", path)
        return v
    return check


def _grid(v, path):
    return parse_grid(v, path)


def _bool(v, path):
    if isinstance(v, bool):
        return v
    if isinstance(v, str) and v.lower() in ("true", "false", "1", "0"):
        return v.lower() in ("true", "1")
    raise SchemaError("expected a boolean", path)


def _str(v, path):
    if not isinstance(v, str) or not v:
        raise SchemaError("expected a non-empty string", path)
    return v


def _strlist(*opts):
    def check(v, path):
        if isinstance(v, str):
            v = [x for x in v.split(",") if x]
        if not isinstance(v, list) or not v:
            raise SchemaError("expected a non-empty list", path)
        for i, x in enumerate(v):
            if x not in opts:
                raise SchemaError(f"must be one of {list(opts)}", f"{path}[{i}]")
        return list(v)
    return check


def _states(v, path):
    if not isinstance(v, list) or not v:
        raise SchemaError("expected a non-empty list of states", path)
    return v


COMMON = {"output": (_str, "."), "tolerances": (lambda v, p: _tol(v, p), {})}


def _tol(v, path):
    if not isinstance(v, dict):
        raise SchemaError("expected an object", path)
    return {k: _num(positive=True)(x, f"{path}.{k}") for k, x in v.items()}


SCHEMAS: dict[str, dict[str, tuple]] = {
    "spectrum": {
        "model": (_choice("rabi", "jc", "dicke", "two-photon-rabi", "two-photon-dicke", "dsc"), "rabi"),
        "omega": (_num(positive=True), 1.0),
        "Omega": (_num(positive=True), REQUIRED),
        "g_grid": (_grid, REQUIRED),
        "cutoff": (_num(integer=True, lo=4, hi=4000), 200),
        "n_qubits": (_num(integer=True, lo=1, hi=64), 1),
        "n_levels": (_num(integer=True, lo=1, hi=100), 6),
    },
    "phase-diagram": {
        "omega": (_num(positive=True), 1.0),
        "g_grid": (_grid, REQUIRED),
        "Omega_grid": (_grid, REQUIRED),
        "kappa": (_num(positive=True), 1.0),
        "gamma_down": (_num(positive=True), 3.0),
        "gamma_phi": (_num(nonneg=True), 3.0),
        "N": (_num(integer=True, lo=1), 100),
    },
    "qfi-sweep": {
        "protocol": (_choice("critical", "dissipative"), "critical"),
        "omega": (_num(positive=True), 1.0),
        "eta": (_num(positive=True), 100.0),
        "lambda_grid": (_grid, None),
        "v0": (_num(positive=True, hi=0.1), 0.05),
        "with_dynamics": (_bool, False),
        "Omega": (_num(positive=True), 1.0),
        "kappa": (_num(positive=True), 1.0),
        "Gamma": (_num(nonneg=True), 3.0),
        "g_frac_grid": (_grid, None),
    },
    "adiabatic": {
        "omega": (_num(positive=True), 1.0),
        "eta": (_num(positive=True), 100.0),
        "v0": (_num(positive=True, hi=0.1), 0.05),
        "lambda_end": (_num(positive=True, hi=0.999), 0.9),
        "cutoff": (_num(integer=True, lo=6, hi=200), 24),
        "n_out": (_num(integer=True, lo=2, hi=100000), 101),
    },
    "gaussian-advantage": {
        "states": (_states, None),
        "random_count": (_num(integer=True, lo=1), 20),
        "seed": (_num(integer=True, nonneg=True), 0),
        "nu_max": (_num(positive=True, lo=1.0), 3.0),
        "xi_max": (_num(nonneg=True), 1.0),
        "gamma_max": (_num(nonneg=True), 2.0),
    },
    "sw-verify": {
        "classes": (_strlist("rabi-like", "two-photon-dicke", "two-photon-rabi", "boson-boson"),
                    ["rabi-like", "two-photon-dicke", "two-photon-rabi", "boson-boson"]),
        "lam": (_num(positive=True), 0.5),
        "eps_grid": (_grid, [0.2, 0.1, 0.05]),
        "order": (_num(integer=True, lo=1, hi=4), 4),
        "generator_set": (_choice("quoted", "corrected"), "corrected"),
    },
    "dissipative-steady": {
        "omega": (_num(positive=True), 1.0),
        "Omega": (_num(positive=True), 1.0),
        "kappa": (_num(positive=True), 1.0),
        "Gamma": (_num(nonneg=True), 3.0),
        "g_frac_grid": (_grid, REQUIRED),
    },
}

COMMANDS = tuple(SCHEMAS)


def load_config(command: str, raw: dict) -> dict:
    """Validate ``raw`` against the command schema; unknown keys are rejected."""
    if command not in SCHEMAS:
        raise SchemaError(f"unknown command {command!r}", "command")
    if not isinstance(raw, dict):
        raise SchemaError("config must be a JSON object", "$")
    schema = {**SCHEMAS[command], **COMMON}
    cfg = {}
    for key in raw:
        if key == "command":
            if raw[key] != command:
                raise SchemaError(f"config is for {raw[key]!r}, not {command!r}", "command")
            continue
        if key not in schema:
            raise SchemaError("unknown key", key)
    for key, (check, default) in schema.items():
        if key in raw:
            cfg[key] = check(raw[key], key)
        elif default is REQUIRED:
            raise SchemaError("missing required key", key)
        elif isinstance(default, (list, str)) and check is _grid:
            cfg[key] = parse_grid(default, key)
        else:
            cfg[key] = default
    if command == "qfi-sweep":
        need = "lambda_grid" if cfg["protocol"] == "critical" else "g_frac_grid"
        if cfg[need] is None:
            raise SchemaError(f"missing required key for protocol {cfg['protocol']!r}", need)
    return cfg


def thread_count() -> int:
    raw = os.environ.get("QCRIT_THREADS")
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise SchemaError("must be a positive integer", "env.QCRIT_THREADS") from None
    if n < 1:
        raise SchemaError("must be a positive integer", "env.QCRIT_THREADS")
    return n


def _pmap(fn: Callable, items: list, threads: int) -> list:
    """Ordered map; results always follow the order of ``items``."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def _cmd_spectrum(cfg, threads):
    from .fock_core import ModelParams, build_hamiltonian, diagonalize

    def point(g):
        p = ModelParams(cfg["omega"], cfg["Omega"], g, cfg["n_qubits"])
        s = diagonalize(build_hamiltonian(cfg["model"], p, cfg["cutoff"]), cfg["n_levels"])
        return [(g, k, float(s.eigenvalues[k]), float(s.convergence_margin[k]), bool(s.converged[k]))
                for k in range(len(s.eigenvalues))]

    rows = [r for block in _pmap(point, cfg["g_grid"], threads) for r in block]
    return ("g", "level", "energy", "convergence_margin", "converged"), rows


def _cmd_phase_diagram(cfg, threads):
    from .dissipative_dynamics import PHASE_COLUMNS, DissipationRates, phase_diagram

    rates = DissipationRates(cfg["kappa"], cfg["gamma_down"], cfg["gamma_phi"])
    rows = phase_diagram(cfg["g_grid"], cfg["Omega_grid"], rates, cfg["N"], cfg["omega"], threads)
    cols = PHASE_COLUMNS + ("marginal",)
    return cols, [tuple(r[c] for c in cols) for r in rows]


def _cmd_qfi_sweep(cfg, threads):
    if cfg["protocol"] == "critical":
        from .critical_protocol import SWEEP_COLUMNS, sweep

        def point(lam):
            return sweep([lam], cfg["eta"], cfg["v0"], cfg["omega"], cfg["with_dynamics"])[0]

        for i, lam in enumerate(cfg["lambda_grid"]):
            if not 0 < lam < 1:
                raise SchemaError("lambda must lie in (0, 1)", f"lambda_grid[{i}]")
        return SWEEP_COLUMNS, _pmap(point, cfg["lambda_grid"], threads)

    from .dissipative_dynamics import CovarianceParams, dissipative_qfi, dissipative_tau, scalingdiss_prefactor

    base = CovarianceParams(cfg["omega"], cfg["Omega"], 0.0, cfg["kappa"], cfg["Gamma"])
    for i, f in enumerate(cfg["g_frac_grid"]):
        if not 0 < f < 1:
            raise SchemaError("g/g_pD must lie in (0, 1)", f"g_frac_grid[{i}]")
    pref = scalingdiss_prefactor(base)

    def point(f):
        p = base.replace(g=f * base.g_pD)
        tau = dissipative_tau(p)
        q = dissipative_qfi(p)
        return (p.g, f, tau, q, q / tau**2, pref, p.assumptions_hold)

    cols = ("g", "g_over_gpD", "tau", "qfi", "qfi_over_tau2", "prefactor_quoted", "assumptions_hold")
    return cols, _pmap(point, cfg["g_frac_grid"], threads)


def _cmd_adiabatic(cfg, threads):
    from .critical_protocol import RampSchedule, adiabatic_excitation

    omega = cfg["omega"]
    gp = math.sqrt(omega * cfg["eta"] * omega) / 2
    sched = RampSchedule(cfg["v0"], cfg["lambda_end"] * gp, gp, omega)
    r = adiabatic_excitation(sched, cfg["eta"], cfg["cutoff"], cfg["n_out"])
    rows = [(float(g), float(t), float(c), float(pg), float(pr))
            for g, t, c, pg, pr in zip(r["g"], r["t"], r["c2_sq"], r["ground_population"], r["predicted"])]
    return ("g", "t", "c2_sq", "ground_population", "predicted"), rows


def _cmd_gaussian(cfg, threads):
    from .gaussian_metrology import (metrological_advantage, random_params, state_from_json,
                                     williamson_build)

    if cfg["states"] is not None:
        states = [state_from_json(s, f"states[{i}]") for i, s in enumerate(cfg["states"])]
    else:
        rng = np.random.default_rng(cfg["seed"])
        states = [williamson_build(random_params(rng, cfg["nu_max"], cfg["xi_max"], cfg["gamma_max"]))
                  for _ in range(cfg["random_count"])]

    def point(item):
        i, s = item
        r = metrological_advantage(s)
        nus = s.nu
        return (i, float(nus.mean()), r.qfi_opt, r.qfi_ref, r.advantage, r.strategy,
                r.constructive_qfi, r.grid_qfi)

    cols = ("index", "nu", "qfi_opt", "qfi_ref", "advantage", "strategy", "constructive_qfi", "grid_qfi")
    return cols, _pmap(point, list(enumerate(states)), threads)


def _cmd_sw_verify(cfg, threads):
    from .sw_engine import CLOSED_FORMS, sw_transform

    items = [(c, e) for c in cfg["classes"] for e in cfg["eps_grid"]]

    def point(item):
        c, e = item
        r = sw_transform(c, e, cfg["lam"], cfg["order"], cfg["generator_set"])
        return (c, e, r.residual_offdiag_norm[cfg["order"]], r.h_norm,
                r.blockdiag_deviation["quoted"], r.blockdiag_deviation["corrected"])

    res = _pmap(point, items, threads)
    rows = []
    for i, row in enumerate(res):
        prev = res[i - 1] if i > 0 and res[i - 1][0] == row[0] else None
        slope = (math.log(prev[2] / row[2]) / math.log(prev[1] / row[1])
                 if prev and prev[2] > 0 and row[2] > 0 and prev[1] != row[1] else float("nan"))
        rows.append(row + (slope,))
    cols = ("class", "epsilon", "residual_offdiag", "h_norm", "blockdiag_dev_quoted",
            "blockdiag_dev_corrected", "local_slope")
    return cols, rows


def _cmd_dissipative_steady(cfg, threads):
    from .dissipative_dynamics import CovarianceParams, covariance_steady_state, dissipative_tau

    base = CovarianceParams(cfg["omega"], cfg["Omega"], 0.0, cfg["kappa"], cfg["Gamma"])
    for i, f in enumerate(cfg["g_frac_grid"]):
        if not 0 <= f < 1:
            raise SchemaError("g/g_pD must lie in [0, 1)", f"g_frac_grid[{i}]")

    def point(f):
        p = base.replace(g=f * base.g_pD)
        s = covariance_steady_state(p)
        q = p.r - 1
        mu_t = 2 * p.kappa - 2 * p.omega * math.sqrt(q) if q > 0 else float("nan")
        tau = dissipative_tau(p) if f > 0 else float("nan")
        S = s.sigma_xp
        return (p.g, f, S[0, 0], S[0, 1], S[1, 1], s.nu, mu_t, tau, s.method, p.assumptions_hold)

    cols = ("g", "g_over_gpD", "sigma_xx", "sigma_xp", "sigma_pp", "nu", "mu_tilde_plus", "tau",
            "method", "assumptions_hold")
    return cols, _pmap(point, cfg["g_frac_grid"], threads)


HANDLERS = {
    "spectrum": _cmd_spectrum,
    "phase-diagram": _cmd_phase_diagram,
    "qfi-sweep": _cmd_qfi_sweep,
    "adiabatic": _cmd_adiabatic,
    "gaussian-advantage": _cmd_gaussian,
    "sw-verify": _cmd_sw_verify,
    "dissipative-steady": _cmd_dissipative_steady,
}


# --------------------------------------------------------------------------
# Output
# --------------------------------------------------------------------------

def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def to_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(x) for x in r])
    return buf.getvalue()


def column_description(columns) -> str:
    """Gnuplot-friendly column index, one comment line per column."""
    return "".join(f"# {i} {c}\n" for i, c in enumerate(columns, start=1))


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def run(command: str, raw: dict, threads: int | None = None) -> dict:
    """Validate, compute, write data and manifest; return the manifest."""
    cfg = load_config(command, raw)
    threads = thread_count() if threads is None else threads
    t0 = time.perf_counter()
    columns, rows = HANDLERS[command](cfg, threads)
    data = to_csv(columns, rows)
    cols = column_description(columns)
    out = Path(cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    stem = command.replace("-", "_")
    files = {f"{stem}.csv": data, f"{stem}.cols": cols}
    for name, text in files.items():
        (out / name).write_text(text)
    flags = _row_flags(columns, rows)
    manifest = {
        "command": command,
        "config": _jsonable(cfg),
        "tool_version": __version__,
        "wall_time_s": time.perf_counter() - t0,
        "threads": threads,
        "rows": len(rows),
        "flags": flags,
        "files": {name: {"sha256": _digest(text), "bytes": len(text.encode())} for name, text in files.items()},
    }
    (out / f"{stem}.manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


FLAG_COLUMNS = ("converged", "regime_tag", "marginal", "assumptions_hold", "label")


def _row_flags(columns, rows) -> dict:
    out = {}
    for c in FLAG_COLUMNS:
        if c in columns:
            j = columns.index(c)
            counts: dict[str, int] = {}
            for r in rows:
                counts[fmt(r[j])] = counts.get(fmt(r[j]), 0) + 1
            out[c] = dict(sorted(counts.items()))
    return out


# --------------------------------------------------------------------------
# Golden comparison
# --------------------------------------------------------------------------

def _read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return [], []
    return rows[0], rows[1:]


def compare_golden(data_file, golden_file, tolerances: dict | None = None, default_rtol: float = 1e-12,
                   atol: float = 0.0) -> dict:
    """Per-column max relative deviation; pass iff every column is within tolerance.

    Non-numeric cells must match exactly.  NaN matches NaN.
    """
    tolerances = tolerances or {}
    hd, rd = _read_csv(data_file)
    hg, rg = _read_csv(golden_file)
    report = {"pass": True, "columns": {}, "failures": [], "schema_diff": None}
    if hd != hg or len(rd) != len(rg):
        report["pass"] = False
        report["schema_diff"] = {"missing": [c for c in hg if c not in hd], "extra": [c for c in hd if c not in hg],
                                 "rows": [len(rd), len(rg)]}
        return report
    for j, col in enumerate(hd):
        tol = tolerances.get(col, default_rtol)
        worst = 0.0
        for i, (a, b) in enumerate(zip(rd, rg)):
            x, y = a[j], b[j]
            try:
                fx, fy = float(x), float(y)
            except ValueError:
                if x != y:
                    report["failures"].append({"row": i, "column": col, "value": x, "golden": y})
                    worst = math.inf
                continue
            if math.isnan(fx) and math.isnan(fy):
                continue
            if fx == fy:
                continue
            dev = abs(fx - fy) / max(abs(fy), 1e-300) if abs(fx - fy) > atol else 0.0
            worst = max(worst, dev)
            if dev > tol:
                report["failures"].append({"row": i, "column": col, "value": x, "golden": y, "rel": dev})
        report["columns"][col] = worst
    report["pass"] = not report["failures"]
    return report


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------

def _flags_to_dict(extra: list[str]) -> dict:
    """``--g-grid 0:1:0.1 --cutoff 400`` -> ``{"g_grid": "0:1:0.1", "cutoff": "400"}``."""
    out, i = {}, 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise SchemaError(f"unexpected argument {tok!r}", "argv")
        key = tok[2:].replace("-", "_")
        if "=" in key:
            key, val = key.split("=", 1)
            i += 1
        elif i + 1 < len(extra) and not extra[i + 1].startswith("--"):
            val = extra[i + 1]
            i += 2
        else:
            val = "true"
            i += 1
        out[key] = val
    return out


def _coerce_flag_values(command: str, flags: dict) -> dict:
    """Command-line strings become JSON values where they parse as JSON (lists, numbers)."""
    out = {}
    for k, v in flags.items():
        if isinstance(v, str) and v[:1] in "[{":
            try:
                v = json.loads(v)
            except json.JSONDecodeError:
                raise SchemaError("invalid JSON value", k) from None
        out[k] = v
    return out


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="qcrit", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", choices=COMMANDS + ("compare",))
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--version", action="version", version=f"qcrit {__version__}")
    args, extra = parser.parse_known_args(argv)
    try:
        if args.command == "compare":
            return _compare_main(extra)
        raw: dict[str, Any] = {}
        if args.config:
            try:
                raw = json.loads(Path(args.config).read_text())
            except FileNotFoundError:
                raise SchemaError("config file not found", "--config") from None
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON ({exc.msg} at line {exc.lineno})", "--config") from None
            if not isinstance(raw, dict):
                raise SchemaError("config must be a JSON object", "$")
        raw.update(_coerce_flag_values(args.command, _flags_to_dict(extra)))
        manifest = run(args.command, raw)
    except QcritError as exc:
        print(f"qcrit: error: {exc}", file=sys.stderr)
        return exc.exit_code
    print(json.dumps({"rows": manifest["rows"], "files": sorted(manifest["files"])}))
    return 0


def _compare_main(extra: list[str]) -> int:
    p = argparse.ArgumentParser(prog="qcrit compare")
    p.add_argument("data")
    p.add_argument("golden")
    p.add_argument("--rtol", type=float, default=1e-12)
    a = p.parse_args(extra)
    rep = compare_golden(a.data, a.golden, default_rtol=a.rtol)
    print(json.dumps(_jsonable(rep), indent=2))
    return 0 if rep["pass"] else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
