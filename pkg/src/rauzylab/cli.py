"""
``rauzylab`` command line front end.

Every run resolves its configuration from a config file (JSON, either a
flat mapping or a previously emitted ``manifest.json``) overridden by
flags, writes ``manifest.json`` plus CSV/JSON results to the output
directory and prints a JSON summary on stdout.  Library errors are
reported on stderr as one JSON object with a machine readable code; the
exit status is 2 for precondition failures and 3 for numerical aborts.
"""
import argparse
import json
import math
import os
import platform
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, RauzyLabError
from .iet_core import as_lengths, iet_to_json
from .presets import PRESETS, build_context, resolve_iet, save_density

COMMANDS = ("class", "orbit", "induce", "ulam", "sbc", "sbc-flow", "evl", "evl-flow",
            "repp", "hitting", "polygon")

# option name -> (type, default, help)
OPTIONS = {
    "pi": (str, None, "permutation rows, e.g. 'ABC/CBA'"),
    "lambda": (str, None, "comma separated lengths (floats or p/q)"),
    "preset": (str, None, f"one of {', '.join(PRESETS)}"),
    "seed": (int, 0, "master seed"),
    "n": (int, None, "number of steps or returns"),
    "T": (float, None, "flow horizon"),
    "trials": (int, None, "independent trials or starts"),
    "grid": (int, None, "Ulam cells per simplex edge"),
    "samples": (int, None, "Ulam samples per cell"),
    "out": (str, "rauzylab-out", "output directory (RAUZYLAB_OUT overrides)"),
    "threads": (int, 1, "worker threads"),
    "exact": (bool, False, "rational arithmetic"),
    "map": (str, "T2", "T2, T1 or G"),
    "center": (str, "generic", "'generic', 'periodic' or comma separated lengths"),
    "measure": (str, None, "density CSV written by the ulam command"),
    "level": (int, 2000, "inverse target measure for repp and hitting"),
    "t": (float, 5.0, "rescaled time horizon for repp"),
    "c": (float, None, "target schedule constant"),
    "gamma": (float, 0.02, "flow ball shrink exponent"),
    "u0": (float, 0.48, "fibre coordinate of flow targets"),
    "tau": (str, None, "comma separated heights for polygon"),
    "steps": (int, 1, "induction steps for polygon"),
}


def _parser():
    ap = argparse.ArgumentParser(prog="rauzylab", description=__doc__.strip().splitlines()[0])
    ap.add_argument("--version", action="version", version=f"rauzylab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for cmd in COMMANDS:
        sp = sub.add_parser(cmd)
        sp.add_argument("--config", default=None, help="JSON config or manifest")
        for name, (typ, _, hlp) in OPTIONS.items():
            flag = "--" + name
            if typ is bool:
                sp.add_argument(flag, dest=name, action="store_const", const=True, default=None,
                                help=hlp)
            else:
                sp.add_argument(flag, dest=name, type=typ, default=None, help=hlp)
    return ap


def resolve_config(command, args):
    """Merge defaults, config file and flags (flags win); unknown keys are rejected."""
    cfg = {k: v[1] for k, v in OPTIONS.items()}
    if args.get("config"):
        with open(args["config"]) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{args['config']}: {exc}") from None
        if "config" in data and isinstance(data["config"], dict):
            extra = set(data) - {"command", "config", "versions", "outputs"}
            if extra:
                raise ConfigError(f"unknown manifest keys: {sorted(extra)}")
            if data.get("command") not in (None, command):
                raise ConfigError(f"manifest is for {data['command']!r}, not {command!r}")
            data = data["config"]
        unknown = set(data) - set(OPTIONS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(data)
    for k, v in args.items():
        if k in OPTIONS and v is not None:
            cfg[k] = v
    if os.environ.get("RAUZYLAB_OUT"):
        cfg["out"] = os.environ["RAUZYLAB_OUT"]
    return cfg


def _fmt(x):
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}"
    return f"{float(x):.17g}"


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (np.floating, float)):
        return float(v) if math.isfinite(v) else str(v)
    if isinstance(v, Fraction):
        return _fmt(v)
    return v


class Run:
    def __init__(self, command, cfg):
        self.command = command
        self.cfg = cfg
        self.out = Path(cfg["out"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs = []

    def path(self, name):
        self.outputs.append(name)
        return self.out / name

    def write_text(self, name, text):
        with open(self.path(name), "w", encoding="utf-8") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")

    def manifest(self):
        data = {
            "command": self.command,
            "config": self.cfg,
            "versions": {"rauzylab": __version__, "numpy": np.__version__,
                         "python": platform.python_version()},
            "outputs": self.outputs,
        }
        with open(self.out / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=1, sort_keys=True)
            fh.write("\n")


def _iet(cfg):
    return resolve_iet(cfg["preset"], cfg["pi"], cfg["lambda"], cfg["exact"])


def _context(cfg):
    perm, lengths, preset = _iet(cfg)
    if lengths is not None and lengths.exact:
        lengths = as_lengths([float(x) for x in lengths])
    return build_context(perm, lengths, grid=cfg["grid"], samples_per_cell=cfg["samples"],
                         seed=cfg["seed"], preset=preset, density=cfg["measure"])


def _center(cfg, ctx):
    c = cfg["center"]
    if c == "generic":
        return ctx.generic_center()
    if c == "periodic":
        return ctx.periodic_center()
    x = np.array([float(Fraction(v)) for v in c.split(",")])
    return x / x.sum()


def _report(run, rep, name):
    rep.to_csv(run.path(f"{name}.csv"))
    rep.to_json(run.path(f"{name}.json"))
    return json.loads(rep.to_json())


# commands ------------------------------------------------------------------


def cmd_class(run, cfg):
    from .rauzy_veech import rauzy_class
    perm, _, _ = _iet(cfg)
    rc = rauzy_class(perm)
    data = rc.to_json_dict()
    data["size"] = len(rc)
    run.write_text("class.json", json.dumps(data, indent=1))
    run.write_text("class.dot", rc.to_dot())
    return data


def cmd_orbit(run, cfg):
    from .zorich import zorich_orbit
    perm, lengths, _ = _iet(cfg)
    if lengths is None:
        raise ConfigError("orbit needs lengths")
    n = cfg["n"] or 100
    steps = zorich_orbit(perm, lengths, n)
    with open(run.path("orbit.csv"), "w", encoding="utf-8") as fh:
        fh.write("# rauzylab-schema v1\n")
        fh.write("step,perm,type,n1,roof," + ",".join(f"lambda{i + 1}" for i in range(perm.d)) + "\n")
        for k, s in enumerate(steps):
            fh.write(f"{k},{s.start_perm.rows_string()},{int(s.start_type)},{s.n1},{s.roof:.17g},"
                     + ",".join(_fmt(x) for x in s.start_lengths) + "\n")
    last = steps[-1]
    return {"steps": n, "n1": [s.n1 for s in steps[:20]],
            "end": json.loads(iet_to_json(last.end_perm, last.end_lengths))}


def cmd_induce(run, cfg):
    from .induced_mp import return_time_tail, fit_geometric_tail
    from .induced_mp import select_base
    perm, lengths, _ = _iet(cfg)
    if lengths is None:
        raise ConfigError("induce needs lengths")
    base = select_base(perm, lengths)
    data = base.to_json_dict()
    rng = np.random.default_rng(cfg["seed"])
    k, tail, n2 = return_time_tail(base, cfg["n"] or 10 ** 4, rng)
    data["return_tail_rate"] = fit_geometric_tail(k, tail)
    data["mean_return_time"] = float(np.mean(n2))
    run.write_text("base.json", json.dumps(_jsonable(data), indent=1))
    with open(run.path("return_tail.csv"), "w", encoding="utf-8") as fh:
        fh.write("# rauzylab-schema v1\nk,tail\n")
        for a, b in zip(k, tail):
            fh.write(f"{int(a)},{b:.17g}\n")
    return _jsonable(data)


def cmd_ulam(run, cfg):
    ctx = _context(cfg)
    save_density(ctx.density, run.path("density.csv"))
    data = {"cells": ctx.density.grid.n_cells, "leading_eigenvalue": ctx.leading_eigenvalue,
            "gap": ctx.gap, "base_mass": ctx.base.mass}
    run.write_text("ulam.json", json.dumps(_jsonable(data), indent=1))
    return data


def cmd_sbc(run, cfg):
    from . import recurrence_stats as rs
    ctx = _context(cfg)
    n, trials, c = cfg["n"] or 10 ** 5, cfg["trials"] or 10, cfg["c"] or 50.0
    center = _center(cfg, ctx)
    m = cfg["map"].upper()
    if m == "T2":
        tg = rs.nested_balls(ctx.density, center, n, c=c)
        rep = rs.sbc_ratio_t2(ctx.base, ctx.density, tg, n, trials, cfg["seed"], cfg["threads"])
    elif m in ("T1", "G"):
        tg = rs.nested_balls(ctx.density, center, n, c=c, scale=ctx.mu_B[0])
        fn = rs.sbc_ratio_t1 if m == "T1" else rs.sbc_ratio_g
        rep = fn(ctx.base, ctx.density, tg, n, trials, cfg["seed"], cfg["threads"])
    else:
        raise ConfigError(f"unknown map {cfg['map']!r}")
    return _report(run, rep, "sbc")


def cmd_sbc_flow(run, cfg):
    from . import recurrence_stats as rs
    ctx = _context(cfg)
    target = rs.FlowTarget(_center(cfg, ctx), cfg["u0"], cfg["c"] or 0.042, cfg["gamma"])
    rep = rs.flow_sbc(ctx.base, ctx.density, target, cfg["T"] or 1e4, cfg["trials"] or 100,
                      cfg["seed"], ctx.rbar[0], cfg["threads"])
    return _report(run, rep, "sbc_flow")


def cmd_evl(run, cfg):
    from . import recurrence_stats as rs
    ctx = _context(cfg)
    m = cfg["map"].upper()
    mu_B = ctx.mu_B[0] if m == "T1" else None
    rep = rs.evl_experiment(ctx.base, ctx.density, _center(cfg, ctx), cfg["n"] or 10 ** 4,
                            cfg["trials"] or 1000, cfg["seed"], map_id=m, threads=cfg["threads"],
                            mu_B=mu_B)
    return _report(run, rep, "evl")


def cmd_evl_flow(run, cfg):
    from . import recurrence_stats as rs
    ctx = _context(cfg)
    rep = rs.flow_evl(ctx.base, ctx.density, _center(cfg, ctx), cfg["u0"], cfg["T"] or 1e4,
                      cfg["trials"] or 500, cfg["seed"], ctx.rbar[0], cfg["threads"])
    return _report(run, rep, "evl_flow")


def cmd_repp(run, cfg):
    from . import recurrence_stats as rs
    ctx = _context(cfg)
    rep = rs.repp_experiment(ctx.base, ctx.density, _center(cfg, ctx), cfg["level"], cfg["t"],
                             cfg["trials"] or 2000, cfg["seed"], cfg["threads"])
    return _report(run, rep, "repp")


def cmd_hitting(run, cfg):
    from . import recurrence_stats as rs
    ctx = _context(cfg)
    rep = rs.hitting_return_stats(ctx.base, ctx.density, _center(cfg, ctx), cfg["level"],
                                  cfg["trials"] or 1000, cfg["seed"], cfg["threads"])
    return _report(run, rep, "hitting")


def cmd_polygon(run, cfg):
    from .surface_flow import extended_step, polygon
    perm, lengths, _ = _iet(cfg)
    if lengths is None or cfg["tau"] is None:
        raise ConfigError("polygon needs lengths and --tau")
    conv = Fraction if cfg["exact"] else float
    tau = [conv(Fraction(v)) if cfg["exact"] else float(Fraction(v)) for v in cfg["tau"].split(",")]
    poly = polygon(perm, lengths, tau)
    out = {"area": _fmt(poly.area), "vertices": [[_fmt(x), _fmt(y)] for x, y in poly.vertices],
           "after": []}
    p, lam, t = perm, lengths, tuple(tau)
    for _ in range(cfg["steps"]):
        p, lam, t = extended_step(p, lam, t)
        out["after"].append({"perm": p.rows_string(), "area": _fmt(polygon(p, lam, t).area)})
    run.write_text("polygon.json", json.dumps(out, indent=1))
    return out


HANDLERS = {
    "class": cmd_class, "orbit": cmd_orbit, "induce": cmd_induce, "ulam": cmd_ulam,
    "sbc": cmd_sbc, "sbc-flow": cmd_sbc_flow, "evl": cmd_evl, "evl-flow": cmd_evl_flow,
    "repp": cmd_repp, "hitting": cmd_hitting, "polygon": cmd_polygon,
}


def _diagnose(code, message, status):
    sys.stderr.write(json.dumps({"error": code, "message": message, "exit": status}) + "\n")
    return status


def run(command, cfg):
    """Execute ``command`` with a resolved config; returns ``(exit status, result)``."""
    r = Run(command, cfg)
    result = HANDLERS[command](r, cfg)
    r.manifest()
    return 0, result


def main(argv=None):
    args = vars(_parser().parse_args(argv))
    command = args.pop("command")
    try:
        cfg = resolve_config(command, args)
        status, result = run(command, cfg)
    except RauzyLabError as exc:
        return _diagnose(exc.code, str(exc), exc.exit_code)
    except (OSError, ValueError) as exc:
        return _diagnose(type(exc).__name__, str(exc), 2)
    sys.stdout.write(json.dumps(_jsonable(result), sort_keys=True) + "\n")
    return status


if __name__ == "__main__":
    sys.exit(main())
