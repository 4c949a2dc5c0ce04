"""Command line entry point.

Every subcommand reads a YAML run configuration, applies flag overrides,
and writes ``report.json`` (plus optional traces) into ``--out``.  Reports
carry a schema version, the fully resolved configuration and a timestamp;
everything apart from the timestamp is a deterministic function of the
configuration.

Exit codes: 0 success, 2 refusal (resonant strengths, violated
preconditions, invalid inputs), 1 unparseable configuration or internal
error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import datetime as _dt
import json
import os
import sys as _sys
import traceback
from dataclasses import dataclass, field

import numpy as np
import yaml

from .dynamics import integrate
from .errors import ConditionFailure, InvalidInputError, PreconditionError
from .fields import PeriodicField
from .geometry import (
    conformal_torus,
    distance,
    flat_torus,
    random_point,
    retract,
    round_sphere,
    tangent_basis,
)
from .green import green_eval, green_mean, green_value, singularity_slope
from .hamiltonian import PsiSpec, VortexSystem, morse_check
from .search import linking_minimax
from .special import classify_sphere_triple, fixed_circle_search, reflection_search
from .vorticity import gamma_condition, sinh_poisson_gammas

__all__ = ["RunConfig", "ConfigError", "COMMANDS", "run", "main", "SCHEMA_VERSION"]

SCHEMA_VERSION = "1.0"

COMMANDS = (
    "green-test",
    "check-gamma",
    "find-equilibria",
    "classify-sphere",
    "symmetric-search",
    "simulate",
    "morse-check",
    "green-dump",
)


class ConfigError(ValueError):
    """Configuration that cannot be parsed or fails validation."""


_TOP_KEYS = {"surface", "gammas", "psi", "options", "seed", "threads"}
_SURFACE_KINDS = ("flat_torus", "round_sphere", "conformal_torus")


def _check_positive_tols(opts, path="options"):
    for k, v in opts.items():
        if isinstance(v, dict):
            _check_positive_tols(v, f"{path}.{k}")
        elif "tol" in k.split("_") or k.startswith("tol"):
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 0:
                raise ConfigError(f"field '{path}.{k}': tolerance must be a positive number, got {v!r}")


@dataclass
class RunConfig:
    surface: dict = field(default_factory=lambda: {"kind": "flat_torus"})
    gammas: list = field(default_factory=list)
    psi: dict = field(default_factory=lambda: {"variant": "kirchhoff_routh"})
    options: dict = field(default_factory=dict)
    seed: int = 0
    threads: int = 1
    base_dir: str = field(default=".", compare=False, repr=False)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not isinstance(self.surface, dict):
            raise ConfigError("field 'surface': expected a mapping")
        kind = self.surface.get("kind", "flat_torus")
        if kind not in _SURFACE_KINDS:
            raise ConfigError(f"field 'surface.kind': unknown surface {kind!r}")
        if not isinstance(self.gammas, list) or not all(
            isinstance(g, (int, float)) and not isinstance(g, bool) for g in self.gammas
        ):
            raise ConfigError("field 'gammas': expected a list of numbers")
        if not isinstance(self.psi, dict):
            raise ConfigError("field 'psi': expected a mapping")
        if not isinstance(self.options, dict):
            raise ConfigError("field 'options': expected a mapping")
        for name in ("seed", "threads"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise ConfigError(f"field '{name}': expected a nonnegative integer, got {v!r}")
        if self.threads < 1:
            raise ConfigError("field 'threads': must be at least 1")
        _check_positive_tols(self.options)

    @classmethod
    def from_mapping(cls, data, base_dir="."):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError("configuration root must be a mapping")
        extra = set(data) - _TOP_KEYS
        if extra:
            raise ConfigError(f"field '{sorted(extra)[0]}': unknown top-level key")
        kw = {k: copy.deepcopy(data[k]) for k in _TOP_KEYS if k in data}
        return cls(base_dir=base_dir, **kw)

    def to_mapping(self):
        return {
            "surface": copy.deepcopy(self.surface),
            "gammas": list(self.gammas),
            "psi": copy.deepcopy(self.psi),
            "options": copy.deepcopy(self.options),
            "seed": self.seed,
            "threads": self.threads,
        }

    @classmethod
    def parse(cls, text, base_dir="."):
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f"line {mark.line + 1}, column {mark.column + 1}: " if mark else ""
            raise ConfigError(f"{where}{getattr(exc, 'problem', None) or exc}") from None
        return cls.from_mapping(data, base_dir=base_dir)

    def dump(self):
        return yaml.safe_dump(self.to_mapping(), sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            text = fh.read()
        return cls.parse(text, base_dir=os.path.dirname(os.path.abspath(path)))

    def opt(self, name, default=None):
        return self.options.get(name, default)


# -- building library objects ------------------------------------------------

def _load_grid(cfg, path, where):
    full = path if os.path.isabs(path) else os.path.join(cfg.base_dir, path)
    try:
        if full.endswith(".npy"):
            arr = np.load(full)
        else:
            arr = np.loadtxt(full, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"field '{where}': cannot read grid {path!r}: {exc}") from None
    arr = np.asarray(arr, dtype=float)
    if arr.ndim != 2:
        raise ConfigError(f"field '{where}': grid must be two-dimensional")
    return arr


def build_surface(cfg):
    s = cfg.surface
    kind = s.get("kind", "flat_torus")
    if kind == "round_sphere":
        return round_sphere(float(s.get("radius", 1.0)))
    lattice = s.get("lattice", [[1.0, 0.0], [0.0, 1.0]])
    if kind == "flat_torus":
        return flat_torus(lattice)
    if "u_grid" not in s:
        raise ConfigError("field 'surface.u_grid': conformal torus needs a grid file")
    return conformal_torus(_load_grid(cfg, s["u_grid"], "surface.u_grid"), lattice)


def build_psi(cfg, surface):
    p = dict(cfg.psi)
    variant = p.pop("variant", "kirchhoff_routh")
    sign = float(p.pop("robin_sign", -1.0))
    if variant == "zero":
        return PsiSpec.zero()
    if variant == "kirchhoff_routh":
        return PsiSpec.kirchhoff_routh(sign)
    if not surface.is_torus:
        raise ConfigError(f"field 'psi.variant': {variant} is supported on tori only")

    def grid(name):
        if name not in p:
            raise ConfigError(f"field 'psi.{name}': missing grid file")
        return PeriodicField(_load_grid(cfg, p[name], f"psi.{name}"), surface.lattice)

    if variant == "log_k":
        return PsiSpec.log_k(grid("K"), sign)
    if variant == "two_log_k":
        return PsiSpec.two_log_k(grid("K1"), grid("K2"), int(p.get("m", 0)), sign)
    raise ConfigError(f"field 'psi.variant': unknown variant {variant!r}")


def _gammas(cfg):
    if not cfg.gammas:
        raise ConfigError("field 'gammas': required for this command")
    return np.asarray(cfg.gammas, dtype=float)


def _points(cfg, name, surface):
    pts = cfg.opt(name)
    if pts is None:
        return None
    arr = np.asarray(pts, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != surface.dim:
        raise ConfigError(f"field 'options.{name}': expected a list of {surface.dim}-vectors")
    return arr


# -- commands ------------------------------------------------------------------

def _cmd_green_test(cfg, out):
    s = build_surface(cfg)
    npairs = int(cfg.opt("pairs", 20))
    tol_sym = float(cfg.opt("symmetry_tol", 1e-10))
    tol_mean = float(cfg.opt("mean_tol", 1e-6))
    tol_slope = float(cfg.opt("slope_tol", 1e-4))
    tol_fd = float(cfg.opt("fd_tol", 1e-5))
    p = random_point(s, cfg.seed, npairs)
    q = random_point(s, cfg.seed + 1, npairs)
    sym = float(np.abs(green_value(s, p, q) - green_value(s, q, p)).max())
    means = [abs(green_mean(s, x)) for x in p[:3]]
    slopes = [singularity_slope(s, x) for x in p[:3]]
    slope_err = float(max(abs(v + 1.0 / (2.0 * np.pi)) for v in slopes))
    fd_err = 0.0
    h = 1e-6
    for a, b in zip(p[:5], q[:5]):
        g = green_eval(s, a, b).grad_p
        for e in tangent_basis(s, a):
            fd = (green_value(s, retract(s, a, h * e), b) - green_value(s, retract(s, a, -h * e), b)) / (2 * h)
            fd_err = max(fd_err, abs(fd - g @ e) / max(1.0, abs(fd)))
    checks = {
        "symmetry": {"value": sym, "tol": tol_sym, "passed": sym < tol_sym},
        "zero_mean": {"value": float(max(means)), "tol": tol_mean, "passed": max(means) < tol_mean},
        "singularity_slope": {
            "value": slopes,
            "expected": -1.0 / (2.0 * np.pi),
            "tol": tol_slope,
            "passed": slope_err < tol_slope,
        },
        "gradient_fd": {"value": float(fd_err), "tol": tol_fd, "passed": fd_err < tol_fd},
    }
    ok = all(c["passed"] for c in checks.values())
    return (0 if ok else 1), {"surface": s.to_dict(), "checks": checks, "passed": ok}


def _cmd_check_gamma(cfg, out):
    rtol = float(cfg.opt("rtol", 1e-12))
    sinh = cfg.opt("sinh_poisson")
    res = {}
    if sinh:
        sp = sinh_poisson_gammas(int(sinh["m"]), int(sinh["n"]), float(sinh["tau"]))
        gam = np.asarray(sp.gammas)
        res["sinh_poisson"] = {"m": int(sinh["m"]), "n": int(sinh["n"]), "tau": float(sinh["tau"]),
                               "resonant_taus": list(sp.resonant_taus)}
    else:
        gam = _gammas(cfg)
    chk = gamma_condition(gam, rtol)
    res["gammas"] = gam.tolist()
    res.update(chk.to_dict())
    return (0 if chk.passed else 2), res


def _cmd_find_equilibria(cfg, out):
    s = build_surface(cfg)
    gam = _gammas(cfg)
    log_path = os.path.join(out, "sweeps.jsonl")
    lat = cfg.opt("latitudes")
    with open(log_path, "w") as fh:
        def log(entry):
            fh.write(json.dumps(entry, sort_keys=True) + "\n")

        try:
            res = linking_minimax(
                s,
                gam,
                psi=build_psi(cfg, s),
                grid=cfg.opt("grid"),
                latitudes=lat,
                steps_per_sweep=int(cfg.opt("steps_per_sweep", 10)),
                max_sweeps=int(cfg.opt("max_sweeps", 400)),
                grad_tol=float(cfg.opt("grad_tol", 1e-8)),
                threads=cfg.threads,
                log=log,
            )
        except ConditionFailure as exc:
            return 2, {"refused": str(exc), "subset": list(exc.subset), "value": exc.value}
    d = res.to_dict()
    d["sweep_log"] = "sweeps.jsonl"
    return (0 if res.termination == "Converged" else 1), d


def _cmd_classify_sphere(cfg, out):
    gam = _gammas(cfg)
    radius = float(cfg.surface.get("radius", 1.0))
    cls = classify_sphere_triple(gam, radius)
    return 0, cls.to_dict()


def _cmd_symmetric_search(cfg, out):
    s = build_surface(cfg)
    gam = _gammas(cfg)
    psi = build_psi(cfg, s)
    method = cfg.opt("method", "fixed_circle")
    tol = float(cfg.opt("grad_tol", 1e-8))
    if method == "fixed_circle":
        res = fixed_circle_search(s, gam, psi=psi, tol=tol)
    elif method == "reflection":
        res = reflection_search(s, gam, psi=psi, starts=int(cfg.opt("starts", 24)), seed=cfg.seed, tol=tol)
    else:
        raise ConfigError(f"field 'options.method': unknown method {method!r}")
    d = res.to_dict()
    d["method"] = method
    return (0 if res.report.grad_norm < tol else 1), d


def _cmd_simulate(cfg, out):
    s = build_surface(cfg)
    sys = VortexSystem(s, _gammas(cfg), build_psi(cfg, s))
    p0 = _points(cfg, "initial", s)
    if p0 is None:
        p0 = random_point(s, cfg.seed, sys.n)
    T = float(cfg.opt("T", 10.0))
    dt = float(cfg.opt("dt", 1e-3))
    tr = integrate(sys, p0, T, dt, collision_dist=float(cfg.opt("collision_dist", 1e-3)),
                   record_every=int(cfg.opt("record_every", 10)))
    path = os.path.join(out, "trajectory.csv")
    dim = s.dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        head = ["time"] + [f"p{i + 1}_{c}" for i in range(sys.n) for c in "xyz"[:dim]] + ["H", "min_pair_dist"]
        w.writerow(head)
        for t, c, h, d in zip(tr.times, tr.configs, tr.h_values, tr.min_pair_dist):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in c.ravel()] + [repr(float(h)), repr(float(d))])
    d = tr.to_dict()
    for k in ("times", "h_values", "min_pair_dist"):
        d.pop(k)
    d["initial"] = np.asarray(p0).tolist()
    d["h_endpoint_change"] = float(tr.h_values[-1] - tr.h_values[0])
    d["trace"] = "trajectory.csv"
    return 0, d


def _cmd_morse_check(cfg, out):
    s = build_surface(cfg)
    sys = VortexSystem(s, _gammas(cfg), build_psi(cfg, s))
    pts = _points(cfg, "points", s)
    if pts is None:
        raise ConfigError("field 'options.points': required for morse-check")
    rep = morse_check(sys, pts, grad_tol=float(cfg.opt("grad_tol", 1e-6)))
    return 0, rep.to_dict()


def _cmd_green_dump(cfg, out):
    s = build_surface(cfg)
    n = int(cfg.opt("n", 64))
    p = cfg.opt("point")
    p = random_point(s, cfg.seed) if p is None else np.asarray(p, dtype=float)
    path = os.path.join(out, "green.csv")
    if s.is_torus:
        f = (np.arange(n) + 0.5) / n
        F1, F2 = np.meshgrid(f, f, indexing="ij")
        q = np.stack([F1, F2], axis=-1) @ s.lattice
        cols = ["x", "y"]
    else:
        th = (np.arange(n) + 0.5) * np.pi / n
        ph = np.arange(2 * n) * np.pi / n
        TH, PH = np.meshgrid(th, ph, indexing="ij")
        q = s.radius * np.stack([np.sin(TH) * np.cos(PH), np.sin(TH) * np.sin(PH), np.cos(TH)], axis=-1)
        cols = ["x", "y", "z"]
    q = q.reshape(-1, q.shape[-1])
    d = distance(s, np.broadcast_to(p, q.shape), q)
    g = np.full(d.shape, np.nan)
    ok = d > 1e-12
    g[ok] = green_value(s, np.broadcast_to(p, q[ok].shape), q[ok])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols + ["G"])
        for row, v in zip(q, g):
            w.writerow([repr(float(c)) for c in row] + [repr(float(v))])
    return 0, {"point": np.asarray(p).tolist(), "n": n, "trace": "green.csv"}


_HANDLERS = {
    "green-test": _cmd_green_test,
    "check-gamma": _cmd_check_gamma,
    "find-equilibria": _cmd_find_equilibria,
    "classify-sphere": _cmd_classify_sphere,
    "symmetric-search": _cmd_symmetric_search,
    "simulate": _cmd_simulate,
    "morse-check": _cmd_morse_check,
    "green-dump": _cmd_green_dump,
}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not np.isfinite(x):
        return repr(x)
    return x


def write_report(out, command, cfg, exit_code, result):
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "config": cfg.to_mapping() if cfg is not None else None,
        "exit_code": exit_code,
        "result": _jsonable(result),
    }
    path = os.path.join(out, "report.json")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def run(command, cfg, out="."):
    """Run one subcommand; returns the exit code.  Writes ``out/report.json``."""
    if command not in _HANDLERS:
        raise ConfigError(f"unknown command {command!r}")
    os.makedirs(out, exist_ok=True)
    try:
        code, result = _HANDLERS[command](cfg, out)
    except ConfigError as exc:
        code, result = 1, {"error": f"config: {exc}"}
    except (PreconditionError, InvalidInputError) as exc:
        code, result = 2, {"refused": f"{type(exc).__name__}: {exc}"}
    except Exception as exc:  # noqa: BLE001 - reported, not swallowed
        code, result = 1, {"error": f"{type(exc).__name__}: {exc}", "traceback": traceback.format_exc()}
    write_report(out, command, cfg, code, result)
    return code


def _parser():
    ap = argparse.ArgumentParser(prog="vortexeq", description="Point-vortex equilibria on closed surfaces.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="YAML run configuration")
    ap.add_argument("--out", default=".", help="output directory (default: .)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--threads", type=int)
    ap.add_argument("--tol-grad", type=float, dest="tol_grad")
    ap.add_argument("--grid", type=int)
    return ap


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        if args.threads is not None:
            cfg.threads = args.threads
        if args.tol_grad is not None:
            cfg.options["grad_tol"] = args.tol_grad
        if args.grid is not None:
            cfg.options["grid"] = args.grid
        cfg.validate()
    except (ConfigError, OSError) as exc:
        print(f"vortexeq: config error: {exc}", file=_sys.stderr)
        return 1
    code = run(args.command, cfg, args.out)
    with open(os.path.join(args.out, "report.json")) as fh:
        summary = json.load(fh)["result"]
    brief = {k: summary[k] for k in ("passed", "exists", "termination", "refused", "error") if k in summary}
    print(json.dumps({"command": args.command, "exit_code": code, **brief}, sort_keys=True))
    return code


if __name__ == "__main__":
    raise SystemExit(main())
