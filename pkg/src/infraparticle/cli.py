"""
Command-line front end: TOML configuration, experiment dispatch, CSV/JSON output.

Exit codes: 0 success, 2 usage error or unknown subcommand, 3 invalid
configuration, 4 numerical failure (a JSON diagnostic is written).
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

__all__ = ["Config", "ConfigError", "load_config", "config_hash", "run", "main"]

EXIT_USAGE, EXIT_CONFIG, EXIT_NUMERIC = 2, 3, 4


class ConfigError(ValueError):
    pass


def _tup(*x):
    return field(default=tuple(x))


@dataclass(frozen=True)
class Config:
    # physics
    alpha: float = 1.0 / 137.0
    Lambda: float = 1.0
    kappa: float = 1.0
    beta: float = 1.5
    theta: float = 0.8
    epsilon: float = 1.0 / 3.0
    # momentum grids (coherent states) and shell angular resolution
    n_radial: int = 64
    n_polar: int = 32
    n_azimuth: int = 64
    shell_polar: int = 32
    shell_azimuth: int = 32
    # dispersion
    dispersion: str = "free"
    m_ren: float = 1.0
    sigma_dependence: bool = False
    sigma_c: float = 0.05
    nu_min: float = 0.1
    nu_max: float = 1.0 / 3.0
    # output and randomness
    out: str = "out"
    seed: int = 20240101
    # cloud
    velocity: tuple = _tup(0.3, 0.0, 0.0)
    cloud_sigmas: tuple = _tup(1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
    # overlap
    overlap_kappa: float = 0.5
    overlap_sigma_lo: float = 1e-3
    overlap_n_packet: int = 5
    # decay
    decay_t_A3: float = 1e-4 ** (-1.0 / 1.5)
    decay_points: int = 9
    decay_t_A4: tuple = _tup(1e2, 1e3, 1e4)
    decay_t_control: float = 1e2
    # gamma
    gamma_vj: tuple = _tup(0.2, 0.05, 0.0)
    gamma_gradE: tuple = _tup(0.22, 0.0, 0.03)
    gamma_direction: tuple = _tup(0.3, 0.7, 0.2)
    gamma_times: tuple = _tup(10.0, 1e3)
    gamma_sigmas: tuple = _tup(1e-3, 1e-5, 1e-8)
    gamma_dv: tuple = _tup(1e-1, 1e-2, 1e-3)
    gamma_P: tuple = _tup(0.2, 0.03, 0.0)
    gamma_t1: tuple = _tup(1e2, 1e3, 1e4)
    gamma_t2_ratios: tuple = _tup(2.0, 10.0, 100.0)
    # tail
    tail_t: float = 1e4
    tail_points: int = 81
    tail_v: tuple = _tup(0.25, 0.05, 0.0)
    tail_gradE: tuple = _tup(0.2, 0.03, 0.0)
    # refinement
    refine_t1: tuple = _tup(1e2, 1e3, 1e4)
    refine_ratio: float = 8.0
    # off-diagonal overlaps
    offdiag_t: float = 10.0
    offdiag_times: tuple = _tup(10.0, 100.0, 300.0)
    offdiag_sigmas: tuple = _tup(1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8)
    mu_ode_cases: int = 50
    # classical
    charge_scale: float = -1.0  # source charge in units of 2 (2 pi)^3 alpha^{1/2}
    v_in: tuple = _tup(0.1, 0.0, 0.0)
    v_out: tuple = _tup(0.0, 0.2, 0.1)
    t_bar: float = 5.0

    def validate(self) -> "Config":
        if not (0.0 < self.alpha < 1.0):
            raise ConfigError("alpha must lie in (0, 1)")
        if not (0.0 < self.kappa <= self.Lambda):
            raise ConfigError("need 0 < kappa <= Lambda")
        if not (self.beta > 1.0 > self.theta > 0.0):
            raise ConfigError("need beta > 1 > theta > 0")
        if not self.epsilon > 0.0:
            raise ConfigError("epsilon must be positive")
        if not (0.0 < self.nu_min < self.nu_max < 1.0):
            raise ConfigError("need 0 < nu_min < nu_max < 1")
        if self.dispersion not in ("free", "renormalized_mass"):
            raise ConfigError(f"unknown dispersion {self.dispersion!r}")
        if not (0.0 < self.overlap_kappa <= self.Lambda and self.overlap_sigma_lo < self.overlap_kappa):
            raise ConfigError("need overlap_sigma_lo < overlap_kappa <= Lambda")
        if self.t_bar <= 0.0:
            raise ConfigError("t_bar must be positive")
        for name in ("velocity", "gamma_vj", "gamma_gradE", "tail_v", "tail_gradE", "v_in", "v_out"):
            v = getattr(self, name)
            if len(v) != 3 or not np.linalg.norm(v) < 1.0:
                raise ConfigError(f"{name} must be a 3-vector with |v| < 1")
        for name in ("n_radial", "n_polar", "n_azimuth", "shell_polar", "shell_azimuth"):
            if getattr(self, name) < 2:
                raise ConfigError(f"{name} must be >= 2")
        if len(self.cloud_sigmas) < 2 or min(self.cloud_sigmas) <= 0 or max(self.cloud_sigmas) >= self.kappa:
            raise ConfigError("cloud_sigmas must be >= 2 values in (0, kappa)")
        return self


def _coerce(name: str, default, value):
    if isinstance(default, bool):
        if isinstance(value, str):
            if value.lower() in ("true", "1", "yes"):
                return True
            if value.lower() in ("false", "0", "no"):
                return False
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{name}: expected a boolean")
    if isinstance(value, str) and not isinstance(default, str):
        try:
            value = tomllib.loads(f"x = {value}")["x"]
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{name}: cannot parse {value!r}") from exc
    try:
        if isinstance(default, tuple):
            if not isinstance(value, (list, tuple)):
                raise ConfigError(f"{name}: expected a list")
            return tuple(float(x) for x in value)
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ConfigError(f"{name}: expected an integer")
            return int(value)
        if isinstance(default, float):
            if isinstance(value, bool):
                raise ConfigError(f"{name}: expected a number")
            return float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{name}: invalid value {value!r}") from exc


def load_config(path=None, overrides=()) -> Config:
    """Defaults, then TOML file (flat keys, tables are flattened), then key=value overrides."""
    data = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML: {exc}") from exc
        for k, v in raw.items():
            if isinstance(v, dict):
                data.update(v)
            else:
                data[k] = v
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        data[k.strip().split(".")[-1]] = v.strip()
    defaults = {f.name: f.default for f in fields(Config)}
    unknown = sorted(set(data) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    kw = {k: _coerce(k, defaults[k], v) for k, v in data.items()}
    try:
        return Config(**kw).validate()
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def config_hash(cfg: Config) -> str:
    d = dataclasses.asdict(cfg)
    d.pop("out")
    blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_csv(path: Path, header, rows) -> None:
    lines = [",".join(header)] + [",".join(_fmt(x) for x in row) for row in rows]
    _atomic_write(path, "\n".join(lines) + "\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def write_json(path: Path, obj) -> None:
    _atomic_write(path, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

SUBCOMMANDS = ("cloud", "overlap", "decay", "gamma", "tail", "refine", "offdiag", "classical", "all")


def _execute(name: str, cfg: Config, out: Path, lemma: str = "A3"):
    from .runs import DRIVERS

    t0 = time.perf_counter()
    if name == "decay":
        tables, summary = DRIVERS[name](cfg, lemma)
    else:
        tables, summary = DRIVERS[name](cfg)
    for tname, (header, rows) in tables.items():
        write_csv(out / f"{tname}.csv", header, rows)
    doc = {"subcommand": name, "version": __version__, "config_hash": config_hash(cfg),
           "wall_time": time.perf_counter() - t0, "results": summary}
    write_json(out / f"{name}.json", doc)
    return summary


def run(subcommand: str, cfg: Config, out=None, lemma: str = "A3", threads: int = 1) -> dict:
    """Run one subcommand (or all of them); returns the summaries by name."""
    out = Path(out if out is not None else cfg.out)
    if subcommand not in SUBCOMMANDS:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    if subcommand != "all":
        return {subcommand: _execute(subcommand, cfg, out, lemma)}
    names = SUBCOMMANDS[:-1]
    t0 = time.perf_counter()
    jobs = [(n, "all" if n == "decay" else lemma) for n in names]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda j: _execute(j[0], cfg, out, j[1]), jobs))
    else:
        results = [_execute(n, cfg, out, lm) for n, lm in jobs]
    summaries = dict(zip(names, results))
    passed = {n: _all_pass(s) for n, s in summaries.items()}
    write_json(out / "all.json", {"subcommand": "all", "version": __version__,
                                  "config_hash": config_hash(cfg),
                                  "wall_time": time.perf_counter() - t0, "pass": passed})
    return summaries


def _all_pass(summary) -> bool:
    if "pass" in summary:
        return bool(summary["pass"])
    flags = [v["pass"] for v in summary.values() if isinstance(v, dict) and "pass" in v]
    return all(flags) if flags else True


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="infraparticle",
                                description="Soft-photon cloud and infraparticle scattering experiments.")
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML configuration file")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("--threads", type=int, default=1, help="concurrent sub-experiments for 'all'")
    sub = p.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")
    helps = {"cloud": "photon number against ln(1/sigma)",
             "overlap": "asymptotic Weyl expectation, both methods",
             "decay": "decay fits of the shell integrals",
             "gamma": "dressing phase values and velocity/cutoff sweeps",
             "tail": "infrared tail bound and derivative slope",
             "refine": "refinement diagonal bound",
             "offdiag": "off-diagonal overlap matrix, sigma sweep and mu-ODE",
             "classical": "Lienard-Wiechert experiments and field map",
             "all": "every experiment"}
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, parents=[common], help=helps[name])
        if name == "decay":
            sp.add_argument("--lemma", choices=("A3", "A4", "control", "all"), default="A3")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads < 1:
        print("invalid configuration: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out if args.out else cfg.out)
    try:
        summaries = run(args.subcommand, cfg, out, getattr(args, "lemma", "A3"), args.threads)
    except (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        diag = {"subcommand": args.subcommand, "version": __version__, "config_hash": config_hash(cfg),
                "error": type(exc).__name__, "message": str(exc)}
        for attr in ("estimate", "error"):
            if hasattr(exc, attr):
                diag[f"quadrature_{attr}"] = getattr(exc, attr)
        write_json(out / "error.json", diag)
        print(json.dumps(_jsonable(diag)))
        return EXIT_NUMERIC
    for name, summ in summaries.items():
        print(f"{name}: {'pass' if _all_pass(summ) else 'FAIL'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
