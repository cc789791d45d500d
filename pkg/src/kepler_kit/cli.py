"""Command-line front end.

Exit codes: 0 success, 1 computation error, 2 usage error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import report
from .errors import DomainError, KeplerKitError, SelfTestFailure

SUBCOMMANDS = ("classify", "scalars", "functionals", "criteria", "orbit", "brake",
               "return-map", "selftest", "sweep")

DEFAULTS = {
    "omega": 1.0,
    "energy": -0.375,
    "ecc": None,
    "eps": 0.0,
    "system": "kepler",
    "n": None,
    "tol": 1e-12,
    "quad_tol": 1e-10,
    "periods": 64,
    "grid": "6x6",
    "seeds": 64,
    "seed": 0,
    "k": 1,
    "out": None,
    "format": "json",
    "config": None,
}

SWEEP_LIST_KEYS = ("omega", "energy", "ecc", "eps", "n")


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kepler-kit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")
    helps = {
        "classify": "energy-surface class (Kepler or pyramidal window)",
        "scalars": "Kepler closed forms",
        "functionals": "volume, action, periods and first-order functionals",
        "criteria": "criteria verdict, stability and closed-form cross checks",
        "orbit": "planar periodic orbit and its rotation number",
        "brake": "z-symmetric brake orbit by shooting, and its link count",
        "return-map": "return-map area test and periodic-point search",
        "selftest": "quadrature oracles and module invariants",
        "sweep": "criteria over a parameter grid, as CSV",
    }
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=helps[name])
        list_ok = name == "sweep"
        num = str if list_ok else float
        p.add_argument("--omega", type=num, default=None, help="angular momentum about the z-axis (nonzero)")
        p.add_argument("--energy", type=num, default=None, help="energy h")
        p.add_argument("--ecc", type=num, default=None,
                       help="planar eccentricity e in (0, 1); sets h = (e^2 - 1)/(2 omega^2)")
        p.add_argument("--eps", type=num, default=None, help="perturbation scale, 0 <= eps < 1")
        p.add_argument("--system", default=None, help="kepler | ellipsoid | pyramid[:n] | custom:path.py")
        p.add_argument("--n", type=str if list_ok else int, default=None, help="pyramid size n >= 2")
        p.add_argument("--tol", type=float, default=None, help="integration tolerance")
        p.add_argument("--quad-tol", dest="quad_tol", type=float, default=None, help="1D quadrature tolerance")
        p.add_argument("--periods", type=int, default=None, help="periods for the rotation-number winding")
        p.add_argument("--grid", default=None, help="section grid NxM for the area test")
        p.add_argument("--seeds", type=int, default=None, help="random seeds for the periodic-point search")
        p.add_argument("--seed", type=int, default=None, help="generator seed")
        p.add_argument("--k", type=int, default=None, help="largest period searched by return-map")
        p.add_argument("--out", default=None, help="output directory for reports")
        p.add_argument("--format", choices=("json", "csv", "both"), default=None)
        p.add_argument("--config", default=None, help="flat key = value file mirroring flag names")
    return parser


def read_config(path: str) -> dict:
    out = {}
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise UsageError(f"--config: cannot read {path!r}: {exc.strerror}") from exc
    for i, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"--config: line {i} is not key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if key not in DEFAULTS or key == "config":
            raise UsageError(f"--config: unknown key {key!r} on line {i}")
        out[key] = val
    return out


def _coerce(key: str, value, sweep: bool):
    if value is None:
        return None
    if sweep and key in SWEEP_LIST_KEYS:
        return _parse_list(key, value)
    conv = {
        "omega": float, "energy": float, "ecc": float, "eps": float, "n": int,
        "tol": float, "quad_tol": float, "periods": int, "seeds": int, "seed": int, "k": int,
    }.get(key)
    if conv is None:
        return value
    try:
        return conv(value)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"--{key.replace('_', '-')}: cannot parse {value!r}") from exc


def _parse_list(key: str, value) -> list:
    """'a,b,c' or 'start:stop:count' (inclusive, evenly spaced)."""
    if isinstance(value, (int, float)):
        return [value]
    conv = int if key == "n" else float
    text = str(value)
    try:
        if ":" in text:
            a, b, c = text.split(":")
            cnt = int(c)
            if cnt < 1:
                raise ValueError
            if cnt == 1:
                return [conv(a)]
            a, b = float(a), float(b)
            return [conv(a + (b - a) * i / (cnt - 1)) for i in range(cnt)]
        return [conv(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"--{key}: expected a comma list or start:stop:count, got {text!r}") from exc


def resolve_config(args: argparse.Namespace) -> dict:
    """Flags > config file > defaults."""
    cfg = dict(DEFAULTS)
    sweep = args.command == "sweep"
    if args.config:
        for k, v in read_config(args.config).items():
            cfg[k] = v
    for k in DEFAULTS:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    for k in list(cfg):
        cfg[k] = _coerce(k, cfg[k], sweep)
    cfg["command"] = args.command
    validate(cfg)
    return cfg


def _grid_shape(text: str) -> tuple[int, int]:
    try:
        a, b = text.lower().split("x")
        shape = int(a), int(b)
    except ValueError as exc:
        raise UsageError(f"--grid: expected NxM with N, M >= 2, got {text!r}") from exc
    if min(shape) < 2:
        raise UsageError(f"--grid: expected NxM with N, M >= 2, got {text!r}")
    return shape


def validate(cfg: dict) -> None:
    sweep = cfg["command"] == "sweep"
    omegas = cfg["omega"] if sweep else [cfg["omega"]]
    for w in omegas:
        if not math.isfinite(w) or w == 0:
            raise UsageError(f"--omega: must be a nonzero real, got {w!r}")
    epss = cfg["eps"] if sweep else [cfg["eps"]]
    for e in epss:
        if not 0 <= e < 1:
            raise UsageError(f"--eps: valid range is 0 <= eps < 1, got {e!r}")
    sel = str(cfg["system"])
    if not (sel in ("kepler", "ellipsoid") or sel.startswith("pyramid") or sel.startswith("custom:")):
        raise UsageError(f"--system: expected kepler, ellipsoid, pyramid[:n] or custom:path, got {sel!r}")
    if sel.startswith("pyramid"):
        tail = sel.partition(":")[2]
        ns = [int(tail)] if tail else (cfg["n"] if sweep else [cfg["n"]])
        if ns is None or any(n is None or n < 2 for n in ns):
            raise UsageError("--n: pyramid system needs an integer n >= 2 (or --system pyramid:n)")
    if sel.startswith("custom:") and not os.path.isfile(sel[len("custom:"):]):
        raise UsageError(f"--system: custom perturbation file not found: {sel[len('custom:'):]}")
    eccs = cfg["ecc"] if sweep else ([cfg["ecc"]] if cfg["ecc"] is not None else None)
    if eccs is not None:
        for e in eccs:
            if not 0 < e < 1:
                raise UsageError(f"--ecc: valid range is 0 < e < 1, got {e!r}")
    elif cfg["command"] not in ("classify", "selftest"):
        hs = cfg["energy"] if sweep else [cfg["energy"]]
        for w in omegas:
            for h in hs:
                x = 2 * h * w * w
                if not -1 < x < 0:
                    raise UsageError(
                        f"--energy: need -1 < 2 h omega^2 < 0 (compact Kepler surface), got 2 h omega^2 = {x:g}")
    for key in ("tol", "quad_tol"):
        if not 0 < cfg[key] < 1:
            raise UsageError(f"--{key.replace('_', '-')}: valid range is (0, 1), got {cfg[key]!r}")
    if cfg["periods"] < 1:
        raise UsageError(f"--periods: must be >= 1, got {cfg['periods']}")
    if cfg["seeds"] < 0:
        raise UsageError(f"--seeds: must be >= 0, got {cfg['seeds']}")
    if cfg["k"] < 1:
        raise UsageError(f"--k: must be >= 1, got {cfg['k']}")
    _grid_shape(cfg["grid"])


def _energy(omega: float, h: float, ecc):
    return (ecc * ecc - 1) / (2 * omega * omega) if ecc is not None else h


def _params(cfg: dict, omega=None, h=None, eps=None, n=None):
    from .model import system_from_selector

    omega = cfg["omega"] if omega is None else omega
    ecc = cfg["ecc"]
    h = _energy(omega, cfg["energy"] if h is None else h, ecc if h is None else None)
    return system_from_selector(str(cfg["system"]), omega, h,
                                cfg["eps"] if eps is None else eps, cfg["n"] if n is None else n)


def _echo(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items() if k != "config"}


def _print(obj) -> None:
    sys.stdout.write(report.dumps(obj) + "\n")


# --- subcommands -------------------------------------------------------------


def cmd_classify(cfg):
    from .model import classify_kepler_surface, classify_pyramidal_surface

    sel = str(cfg["system"])
    h = _energy(cfg["omega"], cfg["energy"], cfg["ecc"])
    if sel.startswith("pyramid"):
        tail = sel.partition(":")[2]
        n = int(tail) if tail else cfg["n"]
        cls = classify_pyramidal_surface(cfg["omega"], h, cfg["eps"], n)
    else:
        cls = classify_kepler_surface(cfg["omega"], h)
    result = {"class": cls.value, "omega": cfg["omega"], "h": h, "system": sel}
    report.emit_report("classify", _echo(cfg), result, cfg["out"], cfg["format"])
    print(cls.value)


def cmd_scalars(cfg):
    from .kepler import kepler_scalars

    h = _energy(cfg["omega"], cfg["energy"], cfg["ecc"])
    result = kepler_scalars(cfg["omega"], h).to_dict()
    report.emit_report("scalars", _echo(cfg), result, cfg["out"], cfg["format"],
                       rows=[result], columns=list(result))
    _print(result)


def cmd_functionals(cfg):
    from .quad import perturbation_functionals

    p = _params(cfg)
    result = perturbation_functionals(p, cfg["quad_tol"]).to_json_dict()
    report.emit_report("functionals", _echo(cfg), result, cfg["out"], cfg["format"],
                       rows=[result], columns=list(result))
    _print(result)


def cmd_criteria(cfg):
    from .criteria import SWEEP_COLUMNS, builtin_kind, crosscheck, evaluate

    p = _params(cfg)
    rep = evaluate(p, cfg["quad_tol"])
    result = rep.to_dict()
    try:
        builtin_kind(p)
        result["crosscheck"] = crosscheck(p, numeric=rep.functionals).to_dict()
    except DomainError:
        result["crosscheck"] = None
    n = p.perturbation.meta.get("n")
    report.emit_report("criteria", _echo(cfg), result, cfg["out"], cfg["format"],
                       rows=[rep.row(n)], columns=SWEEP_COLUMNS)
    _print(result)


def cmd_orbit(cfg):
    from .flow import write_trajectory_csv
    from .orbits import planar_orbit, rotation_number

    p = _params(cfg)
    po = planar_orbit(p, cfg["tol"])
    rot = rotation_number(p, cfg["periods"], tol=cfg["tol"])
    result = {"orbit": po.to_dict(), "rotation": rot.to_dict()}
    report.emit_report("orbit", _echo(cfg), result, cfg["out"], "json")
    if cfg["out"] and cfg["format"] in ("csv", "both"):
        write_trajectory_csv(po.trajectory, os.path.join(cfg["out"], "orbit_trajectory.csv"))
    _print(result)


def cmd_brake(cfg):
    from .flow import write_trajectory_csv
    from .orbits import hopf_link_check, planar_orbit, shoot_brake_orbit

    p = _params(cfg)
    b = shoot_brake_orbit(p, cfg["tol"])
    po = planar_orbit(p, cfg["tol"])
    result = b.to_dict()
    result["link_count"] = hopf_link_check(b, po)
    report.emit_report("brake", _echo(cfg), result, cfg["out"], "json")
    if cfg["out"] and cfg["format"] in ("csv", "both"):
        write_trajectory_csv(b.trajectory, os.path.join(cfg["out"], "brake_trajectory.csv"))
    _print(result)


def cmd_return_map(cfg):
    from .retmap import area_preservation_test, search_periodic_orbits

    p = _params(cfg)
    shape = _grid_shape(cfg["grid"])
    area = area_preservation_test(p, shape)
    result = {"area": area.to_dict(), "grid": list(shape), "generator_seed": cfg["seed"],
              "n_random_seeds": cfg["seeds"], "k_max": cfg["k"]}
    rows = []
    if p.eps > 0:
        pts = search_periodic_orbits(p, cfg["k"], n_random=cfg["seeds"], rng_seed=cfg["seed"])
        rows = [{"k": q.k, "r": q.point.r, "p_r": q.point.p_r, "return_time": q.return_time,
                 "residual": q.residual} for q in pts]
        result["periodic_orbits"] = rows
        result["orbit_count"] = len(rows)
    else:
        result["periodic_orbits"] = None
        result["note"] = "eps = 0: the return map is the identity; no search"
    report.emit_report("return-map", _echo(cfg), result, cfg["out"], cfg["format"],
                       rows=rows, columns=("k", "r", "p_r", "return_time", "residual"),
                       stem="return_map")
    _print(result)


def cmd_selftest(cfg):
    from .selftest import run_selftests

    result = run_selftests()
    report.emit_report("selftest", _echo(cfg), result, cfg["out"], "json")
    _print(result)
    if not result["ok"]:
        bad = [c["name"] for c in result["checks"] if not c["ok"]]
        raise SelfTestFailure("failed checks: " + ", ".join(bad))


def _sweep_point(task):
    cfg, omega, h, eps, n = task
    from .criteria import evaluate

    p = _params(cfg, omega=omega, h=h, eps=eps, n=n)
    try:
        rep = evaluate(p, cfg["quad_tol"])
    except KeplerKitError as exc:
        row = {"omega": omega, "h": p.h, "e": "", "n": "" if n is None else n,
               "verdict": f"error: {type(exc).__name__}", "stability": ""}
        return row
    return rep.row(n)


def sweep_tasks(cfg: dict) -> list:
    sel = str(cfg["system"])
    ns = [None]
    if sel.startswith("pyramid"):
        tail = sel.partition(":")[2]
        ns = [int(tail)] if tail else cfg["n"]
    tasks = []
    for omega in cfg["omega"]:
        hs = ([(e * e - 1) / (2 * omega * omega) for e in cfg["ecc"]]
              if cfg["ecc"] is not None else cfg["energy"])
        for h in hs:
            for eps in cfg["eps"]:
                for n in ns:
                    tasks.append((cfg, omega, h, eps, n))
    return tasks


def worker_count() -> int:
    raw = os.environ.get("KEPLER_KIT_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def cmd_sweep(cfg):
    from .criteria import SWEEP_COLUMNS

    tasks = sweep_tasks(cfg)
    workers = min(worker_count(), len(tasks))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(t) for t in tasks]
    fmt = cfg["format"] if cfg["format"] != "json" else "both"
    report.emit_report("sweep", _echo(cfg), {"rows": rows}, cfg["out"], fmt,
                       rows=rows, columns=SWEEP_COLUMNS)
    sys.stdout.write(report.csv_text(rows, SWEEP_COLUMNS))


COMMANDS = {
    "classify": cmd_classify, "scalars": cmd_scalars, "functionals": cmd_functionals,
    "criteria": cmd_criteria, "orbit": cmd_orbit, "brake": cmd_brake,
    "return-map": cmd_return_map, "selftest": cmd_selftest, "sweep": cmd_sweep,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 2
    try:
        cfg = resolve_config(args)
    except UsageError as exc:
        print(f"kepler-kit {args.command}: error: {exc}", file=sys.stderr)
        return 2
    try:
        COMMANDS[args.command](cfg)
    except (KeplerKitError, OSError) as exc:
        print(f"kepler-kit {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
