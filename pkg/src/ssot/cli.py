"""
Command-line front end.

Every subcommand is turned into a config mapping

    {"command": ..., "parameters": {...}, "format": "csv" | "json", "output": path}

and handed to :func:`run`, so argument flags and ``ssot run --config file.json``
share one validation path.  Exit codes: 0 success, 2 config error, 3 domain
error.  ``SSOT_THREADS`` caps the number of worker threads used for sweeps.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from . import engines, fluctuations, manybody, thermo
from .errors import SSOTError

EXIT_OK, EXIT_CONFIG, EXIT_DOMAIN = 0, 2, 3
NORMALIZATION_TOL = 1e-9
FLOAT_FORMAT = ".12g"


class ConfigError(Exception):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


# ---------------------------------------------------------------- parsing

def _real(key, value) -> float:
    if isinstance(value, bool):
        raise ConfigError(key, f"expected a number, got {value!r}")
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected a number, got {value!r}") from None
    if not math.isfinite(x):
        raise ConfigError(key, f"expected a finite number, got {value!r}")
    return x


def _int(key, value) -> int:
    if isinstance(value, bool):
        raise ConfigError(key, f"expected an integer, got {value!r}")
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected an integer, got {value!r}") from None
    if not x.is_integer():
        raise ConfigError(key, f"expected an integer, got {value!r}")
    return int(x)


def parse_range(key: str, value) -> list[float]:
    """A number, a list of numbers, or ``start:stop:count`` (both ends included)."""
    if isinstance(value, (list, tuple)):
        if not value:
            raise ConfigError(key, "empty list")
        return [_real(key, v) for v in value]
    if isinstance(value, str) and ":" in value:
        parts = value.split(":")
        if len(parts) != 3:
            raise ConfigError(key, f"range must look like start:stop:count, got {value!r}")
        start, stop = _real(key, parts[0]), _real(key, parts[1])
        count = _int(key, parts[2])
        if count < 1:
            raise ConfigError(key, f"range count must be >= 1, got {count}")
        if count == 1:
            return [start]
        pts = np.linspace(start, stop, count)
        pts[-1] = stop
        return [float(p) for p in pts]
    if isinstance(value, str) and "," in value:
        return parse_range(key, [v for v in value.split(",") if v.strip()])
    return [_real(key, value)]


def _real_list(key, value) -> list[float]:
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    elif not isinstance(value, (list, tuple)):
        value = [value]
    return [_real(key, v) for v in value]


def _int_list(key, value) -> list[int]:
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    elif not isinstance(value, (list, tuple)):
        value = [value]
    return [_int(key, v) for v in value]


def _path(key, value) -> str:
    if not isinstance(value, str) or not value:
        raise ConfigError(key, f"expected a file path, got {value!r}")
    return value


# key -> (parser, default); a default of None means required
Params = Mapping[str, tuple[Callable[[str, Any], Any], Any]]

COMMAND_PARAMS: dict[str, Params] = {
    "check-state": {"in": (_path, None), "temp": (_real, None)},
    "qubit-engine": {
        "w1": (parse_range, None), "w2": (parse_range, None),
        "thot": (parse_range, None), "tcold": (parse_range, None),
    },
    "refrigerator": {
        "w1": (parse_range, None), "w2": (parse_range, None),
        "thot": (parse_range, None), "tcold": (parse_range, None),
    },
    "noneq-cycle": {
        "energies": (_real_list, None), "degeneracies": (_int_list, ""),
        "u": (_real_list, None), "v": (_real_list, None),
        "thot": (_real, None), "tcold": (_real, None),
    },
    "fluct-sweep": {
        "w1": (_real, 5.0), "w2": (_real, 1.0), "thot": (_real, 2.0), "tcold": (_real, 1.0),
        "delta_w": (parse_range, "0:2:21"),
        "grid_min": (_real, -2.0), "grid_max": (_real, 2.0), "grid_levels": (_int, 41),
    },
    "manybody-scan": {
        "n": (_int_list, "4,16,64,256,1024,4096"),
        "q": (_real, 0.1), "r": (_real, 0.2), "omega": (_real, 1.0),
        "thot": (_real, 2.0), "tcold": (_real, 1.0),
    },
}

DEFAULT_FORMAT = {
    "check-state": "json", "qubit-engine": "json", "refrigerator": "json",
    "noneq-cycle": "json", "fluct-sweep": "csv", "manybody-scan": "csv",
}


def parse_config(config: Mapping) -> tuple[str, dict, str, str | None]:
    if not isinstance(config, Mapping):
        raise ConfigError("config", "expected a JSON object")
    unknown = set(config) - {"command", "parameters", "format", "output"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown config key")
    command = config.get("command")
    if command not in COMMAND_PARAMS:
        raise ConfigError("command", f"expected one of {sorted(COMMAND_PARAMS)}, got {command!r}")
    raw = config.get("parameters") or {}
    if not isinstance(raw, Mapping):
        raise ConfigError("parameters", "expected a key-value map")
    schema = COMMAND_PARAMS[command]
    for key in raw:
        if key not in schema:
            raise ConfigError(key, f"unknown parameter for {command}")
    params = {}
    for key, (parser, default) in schema.items():
        value = raw.get(key)
        if value is None:
            if default is None:
                raise ConfigError(key, f"required by {command}")
            value = default
        if key == "degeneracies" and value == "":
            params[key] = None
            continue
        params[key] = parser(key, value)
    fmt = config.get("format") or DEFAULT_FORMAT[command]
    if fmt not in ("csv", "json"):
        raise ConfigError("format", f"expected csv or json, got {fmt!r}")
    output = config.get("output")
    if output is not None:
        output = _path("output", output)
    return command, params, fmt, output


def thread_count() -> int:
    raw = os.environ.get("SSOT_THREADS")
    if raw is None or raw == "":
        return min(8, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError("SSOT_THREADS", f"expected a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("SSOT_THREADS", f"expected a positive integer, got {raw!r}")
    return n


def ordered_map(fn, items: Sequence) -> list:
    """Apply ``fn`` to every item, possibly concurrently; results keep input order."""
    items = list(items)
    workers = min(thread_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- formatting

def _clean(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(format(float(value), FLOAT_FORMAT))
    if isinstance(value, Mapping):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), FLOAT_FORMAT)
    return str(value)


def render_csv(columns: Sequence[str], rows: Sequence[Mapping]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter=",", lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row[c]) for c in columns])
    return buf.getvalue()


def render_json(payload) -> str:
    return json.dumps(_clean(payload), indent=2) + "\n"


# ---------------------------------------------------------------- state files

def validate_state_file(path) -> tuple[thermo.BlockDiagonalState, thermo.HamiltonianSpectrum]:
    """Read ``{"energies", "degeneracies"?, "populations"}`` from a JSON file.

    Populations are per basis state (one entry per degenerate copy).  A sum
    off by more than 1e-9 is rejected; smaller deviations are renormalized.
    """
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError("in", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("in", f"malformed JSON in {path}: {exc}") from None
    if not isinstance(data, Mapping):
        raise ConfigError("in", "state file must hold a JSON object")
    for key in ("energies", "populations"):
        if key not in data:
            raise ConfigError(key, f"missing from state file {path}")
    energies = _real_list("energies", data["energies"])
    degeneracies = data.get("degeneracies")
    if degeneracies is not None:
        degeneracies = _int_list("degeneracies", degeneracies)
    populations = np.asarray(_real_list("populations", data["populations"]))
    H = thermo.HamiltonianSpectrum.from_levels(energies, degeneracies)
    if populations.size != H.dim:
        raise thermo.ShapeError(
            f"populations: {populations.size} entries but the spectrum has {H.dim} basis states"
        )
    if np.any(populations < 0):
        raise thermo.DomainError(f"populations: negative entry {float(populations.min())!r}")
    total = populations.sum()
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise thermo.DomainError(f"populations: sum to {float(total)!r}, not 1 within {NORMALIZATION_TOL}")
    return thermo.BlockDiagonalState(populations / total), H


# ---------------------------------------------------------------- commands

def _grid(params, *keys):
    return [dict(zip(keys, combo)) for combo in
            np.array(np.meshgrid(*[params[k] for k in keys], indexing="ij")).reshape(len(keys), -1).T]


def _context(command, point):
    return f"{command} at " + ", ".join(f"{k}={_cell(float(v))}" for k, v in point.items())


def _check_state(params):
    rho, H = validate_state_file(params["in"])
    T = params["temp"]
    f = thermo.state_functionals(rho, H, T)
    row = {
        "dim": H.dim, "temperature": T,
        "energy": f.energy, "entropy": f.entropy, "free_energy": f.free_energy,
        "f_min": thermo.min_free_energy(rho, H, T), "f_max": thermo.max_free_energy(rho, H, T),
        "w_ext": thermo.extractable_work(rho, H, T), "w_form": thermo.work_of_formation(rho, H, T),
        "reversible": thermo.is_reversible(rho, H, T),
    }
    return list(row), [row], row


CYCLE_COLUMNS = ["w1", "w2", "thot", "tcold", "w_cycle", "q_hot", "q_cold",
                 "eta", "eta_carnot", "q_irr_bc", "q_irr_da"]
FRIDGE_COLUMNS = ["w1", "w2", "thot", "tcold", "w_input", "q_cold_extracted",
                  "q_hot_dumped", "cop", "cop_carnot"]


def _qubit_sweep(command, fn, columns):
    def handler(params):
        points = _grid(params, "w1", "w2", "thot", "tcold")

        def one(point):
            try:
                return fn(point["w1"], point["w2"], point["thot"], point["tcold"]).to_dict()
            except SSOTError as exc:
                raise type(exc)(f"{_context(command, point)}: {exc}") from exc

        reports = ordered_map(one, points)
        rows = [{**{k: float(v) for k, v in p.items()}, **r} for p, r in zip(points, reports)]
        if len(points) == 1:
            payload = reports[0]
        else:
            payload = [{"parameters": {k: float(v) for k, v in p.items()}, "report": r}
                       for p, r in zip(points, reports)]
        return columns, rows, payload
    return handler


def _noneq(params):
    H = thermo.HamiltonianSpectrum.from_levels(params["energies"], params["degeneracies"])
    report = engines.nonequilibrium_cycle(H, params["u"], params["v"], params["thot"], params["tcold"])
    row = {"thot": params["thot"], "tcold": params["tcold"], **report.to_dict()}
    columns = ["thot", "tcold"] + CYCLE_COLUMNS[4:]
    return columns, [row], report.to_dict()


FLUCT_COLUMNS = ["delta_w", "w_bc_avg", "w_da_avg", "eta", "eta_carnot"]


def _fluct(params):
    grid = fluctuations.BatteryGrid(params["grid_min"], params["grid_max"], params["grid_levels"])
    for dw in params["delta_w"]:
        if dw < 0:
            raise ConfigError("delta_w", f"fluctuation bound must be >= 0, got {dw}")

    def one(dw):
        try:
            return fluctuations.fluctuation_cycle(
                params["w1"], params["w2"], params["thot"], params["tcold"], dw, grid)[1].row()
        except SSOTError as exc:
            raise type(exc)(f"fluct-sweep at delta_w={_cell(dw)}: {exc}") from exc

    rows = ordered_map(one, params["delta_w"])
    return FLUCT_COLUMNS, rows, rows


SCAN_COLUMNS = ["n", "k", "l", "eta", "eta_carnot", "w_per_particle", "corr_per_particle"]


def _scan(params):
    rows = manybody.convergence_scan(
        params["n"], params["q"], params["r"], params["omega"], params["thot"], params["tcold"],
        map_fn=ordered_map,
    )
    rows = [r.row() for r in rows]
    return SCAN_COLUMNS, rows, rows


HANDLERS = {
    "check-state": _check_state,
    "qubit-engine": _qubit_sweep("qubit-engine", engines.qubit_engine, CYCLE_COLUMNS),
    "refrigerator": _qubit_sweep("refrigerator", engines.qubit_refrigerator, FRIDGE_COLUMNS),
    "noneq-cycle": _noneq,
    "fluct-sweep": _fluct,
    "manybody-scan": _scan,
}


def execute(config: Mapping) -> str:
    """Validate ``config``, run it and return the rendered output text."""
    command, params, fmt, _ = parse_config(config)
    thread_count()
    columns, rows, payload = HANDLERS[command](params)
    return render_csv(columns, rows) if fmt == "csv" else render_json(payload)


def run(config: Mapping, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        text = execute(config)
        output = config.get("output")
        if output:
            with open(output, "w", newline="") as fh:
                fh.write(text)
        else:
            stdout.write(text)
    except ConfigError as exc:
        print(f"config error: {exc}", file=stderr)
        return EXIT_CONFIG
    except (SSOTError, ValueError) as exc:
        print(f"domain error: {exc}", file=stderr)
        return EXIT_DOMAIN
    return EXIT_OK


# ---------------------------------------------------------------- argparse

FLAGS = {
    "check-state": [("--in", "in"), ("--temp", "temp")],
    "qubit-engine": [("--w1", "w1"), ("--w2", "w2"), ("--thot", "thot"), ("--tcold", "tcold")],
    "refrigerator": [("--w1", "w1"), ("--w2", "w2"), ("--thot", "thot"), ("--tcold", "tcold")],
    "noneq-cycle": [("--energies", "energies"), ("--degeneracies", "degeneracies"),
                    ("--u", "u"), ("--v", "v"), ("--thot", "thot"), ("--tcold", "tcold")],
    "fluct-sweep": [("--w1", "w1"), ("--w2", "w2"), ("--thot", "thot"), ("--tcold", "tcold"),
                    ("--delta-w", "delta_w"), ("--grid-min", "grid_min"),
                    ("--grid-max", "grid_max"), ("--grid-levels", "grid_levels")],
    "manybody-scan": [("--n", "n"), ("--q", "q"), ("--r", "r"), ("--omega", "omega"),
                      ("--thot", "thot"), ("--tcold", "tcold")],
}

HELP = {
    "check-state": "classify a state file: free energies, W_ext, W_form, reversibility",
    "qubit-engine": "two-level engine between gaps w1 and w2 (ranges start:stop:count sweep)",
    "refrigerator": "the same cycle run backwards as a refrigerator",
    "noneq-cycle": "fixed-Hamiltonian cycle between restricted thermal states on supports U, V",
    "fluct-sweep": "qubit engine efficiency against the work-fluctuation bound delta_w",
    "manybody-scan": "correlated N-qubit engine: efficiency and correlations against N",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssot", description="Single-shot heat engine toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, flags in FLAGS.items():
        p = sub.add_parser(command, help=HELP[command])
        for flag, key in flags:
            p.add_argument(flag, dest=key, metavar=key.upper())
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--out", dest="output")
    p = sub.add_parser("run", help="run a JSON config {command, parameters, format, output}")
    p.add_argument("--config", required=True)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        try:
            config = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            print(f"config error: config: cannot load {args.config}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return run(config)
    params = {key: getattr(args, key) for _, key in FLAGS[args.command]
              if getattr(args, key) is not None}
    return run({"command": args.command, "parameters": params,
                "format": args.format, "output": args.output})


if __name__ == "__main__":
    sys.exit(main())
