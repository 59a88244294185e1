"""Command-line front end.

Results are printed as one JSON document on stdout; warnings and progress
go to stderr.  The ``params`` block of that document is a complete run
description, so ``--config result.json`` repeats a run.  A config file may
also be plain ``key = value`` lines.  Flags given on the command line win
over the config file, which wins over the defaults.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass

import numpy as np

from . import _backend
from .core import DomainSpec, SpaceTimePoint
from .engine import DEFAULT_CHUNK, DEFAULT_MAX_DISCARD, WORKERS_ENV, default_workers
from .errors import ArgumentError, StochsolError

EXIT_OK = 0
EXIT_ARGUMENT = 2
EXIT_NUMERICAL = 3
EXIT_EXPLOSION = 4
EXIT_WORKER_IO = 5


def _boolean(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ArgumentError(f"expected a boolean, got {value!r}")


def _float_list(value) -> list:
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    return [float(v) for v in str(value).split(",") if v.strip()]


@dataclass(frozen=True)
class Flag:
    type: object
    default: object
    help: str
    choices: tuple | None = None

    @property
    def is_switch(self):
        return self.type is _boolean


# Every help string states its unit in square brackets.
FLAGS = {
    "x": Flag(float, 0.0, "spatial evaluation point [length]"),
    "t": Flag(float, 1.0, "time horizon, the PDE time of the evaluation [time]"),
    "n": Flag(int, 100_000, "number of Monte Carlo samples [count]"),
    "seed": Flag(int, 0, "master seed; sample i uses stream i of this seed [integer]"),
    "workers": Flag(int, None, f"worker processes; defaults to ${WORKERS_ENV}, else 1 "
                               f"[count]"),
    "chunk": Flag(int, DEFAULT_CHUNK, "samples per work unit [count]"),
    "dt": Flag(float, 1e-3, "time step of bounded-domain paths [time]"),
    "max_particles": Flag(int, 10**6, "live-particle cap per tree before it is discarded "
                                      "[count]"),
    "max_discard": Flag(float, DEFAULT_MAX_DISCARD,
                        "largest tolerated fraction of discarded trees [fraction]"),
    "progress": Flag(float, None, "interval between progress lines on stderr [seconds]"),
    "backend": Flag(str, "auto", "sampling kernel implementation [name]",
                    ("auto", "cython", "python")),
    "g": Flag(str, "exp(-x^2)", "initial/boundary data g(x) or g(x,t) for the KPP solvers "
                                "[expression]"),
    "f": Flag(str, "exp(-x^2)", "nonnegative data f(x) or f(x,t) [expression]"),
    "alpha": Flag(float, 1.5, "power of the nonlinearity u^alpha, in (1, 2] [dimensionless]"),
    "beta": Flag(float, 1.0, "particle mass, in (0, 1] [mass]"),
    "betas": Flag(_float_list, [1.0, 0.5, 0.25], "descending comma-separated particle masses "
                                                 "[mass]"),
    "domain": Flag(str, "full", "'full' for the real line or 'a,b' for an interval [length]"),
    "unsafe": Flag(_boolean, False, "skip the range check on the data [switch]"),
    "nl": Flag(str, "kpp", "nonlinearity: kpp (v^2 - v), power (-u^alpha) or linear "
                           "[name]", ("kpp", "power", "linear")),
    "data": Flag(str, "exp(-x^2)", "initial data u(0,x); boundary data too if --boundary is "
                                   "absent [expression]"),
    "boundary": Flag(str, None, "Dirichlet data on the interval ends, in x and t "
                                "[expression]"),
    "dx": Flag(float, 0.02, "grid spacing of the coarse FD grid [length]"),
    "nx": Flag(int, None, "run one FD grid with this many points instead of a Richardson "
                          "pair [count]"),
    "nt": Flag(int, None, "time steps of the single FD grid; default from the accuracy guard "
                          "[count]"),
    "solver": Flag(str, "mckean", "Monte Carlo solver to compare with FD [name]",
                   ("mckean", "super", "kpp-exit", "heat")),
    "k": Flag(float, 1.0, "killing rate of the lemma identity [1/time]"),
    "phi": Flag(str, "exp(-x^2)*(1+t)", "test function Phi(x,t) [expression]"),
    "initial": Flag(str, "exp(-x^2)", "initial data u0(x) of the lemma identity "
                                      "[expression]"),
    "quad_n": Flag(int, 64, "quadrature nodes per dimension [count]"),
    "n_time": Flag(int, 24, "time nodes for full-line path integrals [count]"),
    "output": Flag(str, None, "write a CSV table to this file, '-' for stdout [path]"),
    "config": Flag(str, None, "JSON summary or 'key = value' file with parameters [path]"),
}

MC = ("x", "t", "n", "seed", "workers", "chunk", "max_particles", "max_discard",
      "progress", "backend")

COMMANDS = {
    "mckean": ("Estimate v(t,x) of v_t = v_xx/2 + v^2 - v by branching Brownian motion.",
               MC + ("g", "dt", "unsafe")),
    "super": ("Estimate u(t,x) of u_t = u_xx/2 - u^alpha through a particle system with "
              "mass beta.", MC + ("alpha", "beta", "f", "domain", "dt")),
    "kpp-exit": ("Estimate the KPP solution with Dirichlet data from frozen exit points.",
                 MC + ("g", "domain", "dt", "unsafe")),
    "fd": ("Finite-difference solution with a Richardson error budget.",
           ("x", "t", "nl", "alpha", "data", "boundary", "domain", "dx", "nx", "nt",
            "output")),
    "heat": ("Heat-equation solution E f(x + W_t) by quadrature, optionally by Monte Carlo.",
             ("x", "t", "f", "n", "seed", "workers", "chunk", "backend")),
    "compare": ("Run a Monte Carlo solver and compare it with the FD reference.",
                MC + ("solver", "g", "f", "alpha", "beta", "domain", "dt", "unsafe", "dx")),
    "sweep-beta": ("Superprocess estimates over a sequence of decreasing masses.",
                   MC + ("alpha", "betas", "f", "domain", "dt", "output")),
    "lemma-check": ("Residual of the killed-semigroup integral identity by quadrature.",
                    ("x", "t", "k", "phi", "initial", "quad_n")),
    "ie-check": ("Residual of the mild (integral) form of the PDE along Brownian paths.",
                 ("x", "t", "n", "seed", "nl", "alpha", "data", "domain", "dt", "dx",
                  "n_time")),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stochsol",
        description="Probabilistic and finite-difference solvers for semilinear heat equations.",
        epilog="exit codes: 0 ok, 2 bad arguments, 3 numerical failure, "
               "4 particle explosion, 5 worker or I/O failure")
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)
    for name, (summary, flags) in COMMANDS.items():
        p = sub.add_parser(name, help=summary, description=summary,
                           argument_default=argparse.SUPPRESS)
        for key in flags + ("config",):
            spec = FLAGS[key]
            opt = "--" + key.replace("_", "-")
            default_note = "" if spec.default is None else f" (default: {_show(spec.default)})"
            if spec.is_switch:
                p.add_argument(opt, dest=key, action="store_true", help=spec.help + default_note)
            else:
                p.add_argument(opt, dest=key, type=spec.type, choices=spec.choices,
                               help=spec.help + default_note)
    return parser


def _show(value):
    if isinstance(value, list):
        return ",".join(f"{v:g}" for v in value)
    return str(value).replace("%", "%%")


def _coerce(key, value):
    spec = FLAGS[key]
    if value is None:
        return None
    try:
        out = spec.type(value)
    except (TypeError, ValueError) as exc:
        raise ArgumentError(f"config value for {key!r} is invalid: {value!r}") from exc
    if spec.choices and out not in spec.choices:
        raise ArgumentError(f"config value for {key!r} must be one of {spec.choices}")
    return out


def read_config(path) -> dict:
    """Parameters from a JSON summary/object or from ``key = value`` lines."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ArgumentError(f"{path}: invalid JSON ({exc})") from exc
        return dict(doc.get("params", doc))
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ArgumentError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def resolve_params(command: str, given: dict) -> dict:
    allowed = COMMANDS[command][1]
    params = {key: FLAGS[key].default for key in allowed}
    if given.get("config"):
        for key, value in read_config(given["config"]).items():
            if key not in params:
                raise ArgumentError(f"unknown parameter {key!r} for '{command}'")
            params[key] = _coerce(key, value)
    for key, value in given.items():
        if key in params:
            params[key] = value
    if "workers" in params and params["workers"] is None:
        params["workers"] = default_workers()
    return params


def emit_csv(rows, path, columns=None):
    """Write ``rows`` (dicts) as RFC 4180 CSV with a header line.

    Floats use 17 significant digits so they read back exactly.  An empty
    table produces just the header.  ``path`` may be ``'-'`` for stdout.
    """
    rows = list(rows)
    if columns is None:
        columns = list(rows[0]) if rows else []

    def cell(v):
        if isinstance(v, (float, np.floating)):
            return format(float(v), ".17g")
        if isinstance(v, (np.integer,)):
            return str(int(v))
        return v

    def write(fh):
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([cell(row.get(c, "")) for c in columns])

    if path == "-":
        write(sys.stdout)
        return
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            write(fh)
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc.strerror or exc}") from exc


def _jsonable(obj):
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _backend_arg(p):
    return None if p.get("backend", "auto") == "auto" else p["backend"]


def _mc_kwargs(p):
    return dict(seed=p["seed"], n_workers=p["workers"], chunk=p["chunk"],
                max_discard_fraction=p["max_discard"], progress=p["progress"],
                backend=_backend_arg(p))


def _nonlinearity(p):
    from .fd import NonlinearitySpec
    if p["nl"] == "kpp":
        return NonlinearitySpec.kpp()
    if p["nl"] == "power":
        return NonlinearitySpec.power(p["alpha"])
    return NonlinearitySpec.linear()


def _super_config(p, beta=None):
    from .superprocess import SuperConfig
    return SuperConfig(p["alpha"], p["beta"] if beta is None else beta, p["t"], p["x"], p["f"],
                       DomainSpec.parse(p["domain"]), p["dt"], p["max_particles"])


def run_mckean(p):
    from .mckean import McKeanConfig, mckean_solve
    cfg = McKeanConfig(p["t"], p["x"], p["g"], p["dt"], p["max_particles"], p["unsafe"])
    return mckean_solve(cfg, p["n"], **_mc_kwargs(p)).to_dict()


def run_super(p):
    from .superprocess import superprocess_solve
    return superprocess_solve(_super_config(p), p["n"], **_mc_kwargs(p)).to_dict()


def run_kpp_exit(p):
    from .mckean import kpp_exit_solve
    return kpp_exit_solve(SpaceTimePoint(0.0, p["x"]), p["t"], DomainSpec.parse(p["domain"]),
                          p["g"], p["n"], p["dt"], max_particles=p["max_particles"],
                          unsafe=p["unsafe"], **_mc_kwargs(p)).to_dict()


def run_fd(p):
    from .fd import fd_point, fd_solve
    if p["nx"] is not None:
        grid = fd_solve(_nonlinearity(p), p["data"], DomainSpec.parse(p["domain"]),
                        p["boundary"], p["t"], p["nx"], p["nt"], x_range=(p["x"], p["x"]))
        if p["output"]:
            grid.to_csv(p["output"])
        return {"value": float(grid.at(p["t"], p["x"])), "budget": None,
                "nx": len(grid.xs), "dt": grid.dt}
    res = fd_point(_nonlinearity(p), p["data"], DomainSpec.parse(p["domain"]), p["t"], p["x"],
                   p["boundary"], dx=p["dx"])
    if p["output"]:
        res.fine.to_csv(p["output"])
    return {"value": res.value, "budget": res.budget, "coarse_nx": len(res.coarse.xs),
            "fine_nx": len(res.fine.xs), "fine_dt": res.fine.dt}


def run_heat(p):
    from .fd import heat_solution
    from .forest import brownian_solve
    out = {"value": heat_solution(p["x"], p["t"], p["f"])}
    if p["n"] > 0:
        est = brownian_solve(p["f"], p["x"], p["t"], p["n"], seed=p["seed"],
                             n_workers=p["workers"], chunk=p["chunk"],
                             backend=_backend_arg(p))
        out["monte_carlo"] = est.to_dict()
    return out


def run_compare(p):
    from .fd import NonlinearitySpec, fd_point, heat_solution
    from .forest import brownian_solve
    from .superprocess import transform_data
    solver = p["solver"]
    domain = DomainSpec.parse(p["domain"])
    if solver == "mckean":
        if domain.bounded:
            raise ArgumentError("compare --solver mckean runs on the full line; "
                                "use --solver kpp-exit for an interval")
        est = run_mckean(p)
        ref = fd_point(NonlinearitySpec.kpp(), p["g"], domain, p["t"], p["x"], dx=p["dx"])
    elif solver == "kpp-exit":
        est = run_kpp_exit(p)
        ref = fd_point(NonlinearitySpec.kpp(), p["g"], domain, p["t"], p["x"], dx=p["dx"])
    elif solver == "super":
        est = run_super(p)
        ref = fd_point(NonlinearitySpec.power(p["alpha"]), transform_data(p["f"], p["beta"]),
                       domain, p["t"], p["x"], dx=p["dx"])
    else:
        est = brownian_solve(p["f"], p["x"], p["t"], p["n"], seed=p["seed"],
                             n_workers=p["workers"], chunk=p["chunk"],
                             backend=_backend_arg(p)).to_dict()
        ref = None
    fd_value = heat_solution(p["x"], p["t"], p["f"]) if ref is None else ref.value
    fd_budget = 0.0 if ref is None else ref.budget
    diff = est["mean"] - fd_value
    if est["stderr"] > 0:
        z = diff / est["stderr"]
    else:
        z = 0.0 if diff == 0 else math.copysign(math.inf, diff)
    return {"estimate": est, "fd_value": fd_value, "fd_budget": fd_budget, "z_score": z,
            "pass": bool(abs(diff) <= 3.0 * est["stderr"] + fd_budget)}


def run_sweep(p):
    from .superprocess import SWEEP_COLUMNS, beta_sweep
    cfg = _super_config(p, beta=max(p["betas"]))
    rows = [r.as_row() for r in beta_sweep(cfg, p["betas"], p["n"], seed=p["seed"],
                                           n_workers=p["workers"], chunk=p["chunk"],
                                           backend=_backend_arg(p))]
    if p["output"]:
        emit_csv(rows, p["output"], SWEEP_COLUMNS)
    return {"rows": rows}


def run_lemma(p):
    from .fd import verify_lemma_identity
    return {"residual": verify_lemma_identity(p["k"], p["t"], p["x"], p["phi"], p["quad_n"],
                                              p["initial"])}


def run_ie(p):
    from .fd import verify_integral_equation
    from .rng import RngStream
    chk = verify_integral_equation(_nonlinearity(p), p["data"], DomainSpec.parse(p["domain"]),
                                   p["t"], p["x"], p["n"], RngStream(p["seed"]),
                                   n_time=p["n_time"], dt=p["dt"], dx=p["dx"])
    out = {k: float(v) for k, v in vars(chk).items()}
    out["pass"] = bool(chk.residual <= 3.0 * chk.stderr + chk.fd_budget)
    return out


HANDLERS = {
    "mckean": run_mckean, "super": run_super, "kpp-exit": run_kpp_exit, "fd": run_fd,
    "heat": run_heat, "compare": run_compare, "sweep-beta": run_sweep,
    "lemma-check": run_lemma, "ie-check": run_ie,
}


def main(argv=None) -> int:
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    try:
        params = resolve_params(command, args)
        result = HANDLERS[command](params)
    except StochsolError as exc:
        print(f"stochsol {command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"stochsol {command}: error: {exc}", file=sys.stderr)
        return EXIT_WORKER_IO
    doc = {"command": command, "params": params, "backend": _backend.BACKEND, "result": result}
    json.dump(doc, sys.stdout, indent=2, default=_jsonable)
    sys.stdout.write("\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
