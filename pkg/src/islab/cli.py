"""Command-line entry point: ``islab <command> [--config file.json] [flags]``.

Flags override values read from the config file.  A run manifest written by a previous run
is also accepted as ``--config``; its recorded configuration is replayed.

Exit codes: 0 success, 2 configuration error, 3 invariant violation, 4 I/O error.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
import time

import numpy as np

from . import config as cfgmod
from .config import ConfigError, atomic_write, box_from_half_width, parse_config, write_manifest
from .lattice import Box, Configuration

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT, EXIT_IO = 0, 2, 3, 4


class InvariantViolation(RuntimeError):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _bool(text: str) -> bool:
    v = text.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _add_box(sp):
    sp.add_argument("--box", type=int, metavar="L", help="half-width: the box is [-L, L]^d")
    sp.add_argument("--d", type=int)
    sp.add_argument("--boundary", choices=["absorbing", "periodic"])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="islab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def cmd(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="JSON config or run manifest")
        sp.add_argument("--manifest", help="where to write the run manifest "
                        "(default: <out>.manifest.json)")
        sp.add_argument("--out")
        return sp

    sp = cmd("simulate", "evolve one process and write snapshots")
    sp.add_argument("--kind", choices=["contact", "is", "spont"])
    sp.add_argument("--lambda", dest="lam", type=float)
    sp.add_argument("--p", type=float)
    _add_box(sp)
    sp.add_argument("--T", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--snapshots", type=_floats)
    sp.add_argument("--initial", choices=["origin", "full"])
    sp.add_argument("--dump-timeline", dest="dump_timeline")

    sp = cmd("couple", "pathwise coupling survey")
    sp.add_argument("--pair", choices=["is-contact", "spont-is", "spont-spont"])
    sp.add_argument("--lambda", dest="lam", type=float)
    sp.add_argument("--p", type=float)
    sp.add_argument("--p1", type=float)
    sp.add_argument("--p2", type=float)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--seed0", type=int)
    sp.add_argument("--T", type=float)
    _add_box(sp)

    sp = cmd("mono", "monotonicity check of rate tables")
    sp.add_argument("--process", choices=["is", "spont", "contact"])
    sp.add_argument("--table")
    sp.add_argument("--order", choices=["neg-first", "zero-first", "partial"])
    sp.add_argument("--lambda", dest="lam", type=float)
    sp.add_argument("--p", type=float)
    sp.add_argument("--p2", type=float)
    sp.add_argument("--d", type=int)

    sp = cmd("perc", "oriented site percolation clusters")
    sp.add_argument("--p", type=float)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--M", type=int)
    sp.add_argument("--height", type=int)
    sp.add_argument("--width", type=int)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--seed0", type=int)

    sp = cmd("block", "block events, good event and wet sites")
    sp.add_argument("--lambda", dest="lam", type=float)
    sp.add_argument("--p", type=float)
    sp.add_argument("--N", type=int)
    sp.add_argument("--K", type=int)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--inner-trials", dest="inner_trials", type=int)
    sp.add_argument("--seed0", type=int)
    sp.add_argument("--horizon-mult", dest="horizon_mult", type=float)
    sp.add_argument("--alpha1", type=float)
    sp.add_argument("--alpha2", type=float)
    sp.add_argument("--alpha-prime", dest="alpha_prime", type=float)
    sp.add_argument("--calibration-trials", dest="calibration_trials", type=int)
    sp.add_argument("--events", type=lambda s: [x for x in s.split(",") if x])
    sp.add_argument("--audit-restriction", dest="audit_restriction", type=_bool)
    sp.add_argument("--wet-levels", dest="wet_levels", type=int)
    sp.add_argument("--wet-seeds", dest="wet_seeds", type=int)

    sp = cmd("sweep", "survival-proxy sweep over a (lambda, p) grid")
    sp.add_argument("--kind", choices=["contact", "is", "spont"])
    sp.add_argument("--lambdas", type=_floats)
    sp.add_argument("--ps", type=_floats)
    _add_box(sp)
    sp.add_argument("--T", type=float)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--seed0", type=int)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--report", help="JSON file with all three estimates and audits")

    sp = cmd("duality", "contact-process self-duality check")
    sp.add_argument("--zeta", type=_ints, help="occupied sites, comma separated")
    sp.add_argument("--lambda", dest="lam", type=float)
    sp.add_argument("--t", type=float)
    _add_box(sp)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--seed0", type=int)
    return ap


_NOT_CONFIG = {"command", "config", "manifest", "box", "d", "boundary"}


def resolve_config(args: argparse.Namespace):
    """File values, then flags on top; validated into a RunConfig."""
    obj: dict = {}
    if args.config:
        obj = cfgmod.read_json(args.config)
        if "tool_version" in obj and "config" in obj:
            obj = dict(obj["config"])
        if obj.get("command", args.command) != args.command:
            raise ConfigError(f"{args.config} configures {obj['command']!r}, not {args.command!r}")
    obj["command"] = args.command
    ns = vars(args)
    for key, val in ns.items():
        if key in _NOT_CONFIG or val is None:
            continue
        obj["lambda" if key == "lam" else key] = val
    if args.command == "mono":
        if ns.get("d") is not None:
            obj["d"] = ns["d"]
    elif "box" in ns and any(ns.get(k) is not None for k in ("box", "d", "boundary")):
        old = obj.get("box")
        d = ns.get("d") or (old.get("d", 1) if isinstance(old, dict) else 1)
        if ns.get("box") is not None:
            half = ns["box"]
        elif isinstance(old, dict):
            half = old["hi"][0]
        elif isinstance(old, int):
            half = old
        else:
            half = cfgmod.COMMANDS[args.command].model_fields["box"].default_factory().hi[0]
        boundary = ns.get("boundary") or (old.get("boundary", "absorbing")
                                          if isinstance(old, dict) else "absorbing")
        obj["box"] = box_from_half_width(half, d, boundary).model_dump()
    return parse_config(obj)


# ---------------------------------------------------------------------------
# commands; each returns (text written to out or stdout, invariant problems)

def run_simulate(cfg):
    from .dynamics import default_initial, evolve
    from .events import generate_timeline

    box, rule = cfg.box.build()
    tl = generate_timeline(box, rule, cfg.lam, cfg.p, cfg.T, cfg.seed)
    init = default_initial(box) if cfg.initial == "origin" else Configuration.full(box, 1)
    times = sorted(set(cfg.snapshots)) or [cfg.T]
    traj = evolve(init, cfg.kind, tl, times)
    buf = io.StringIO()
    buf.write("time," + ",".join(f"x{i}" for i in range(box.d)) + ",state\n")
    coords = box.coords
    for t, snap in zip(traj.snapshot_times, traj.snapshots):
        for c, s in zip(coords, snap.states):
            buf.write(f"{t!r}," + ",".join(str(int(v)) for v in c) + f",{int(s)}\n")
    extra = {}
    if cfg.dump_timeline:
        extra[cfg.dump_timeline] = tl.dump()
    return buf.getvalue(), [], extra


def run_couple(cfg):
    from .coupling import survey_coupling

    box, rule = cfg.box.build()
    seeds = np.arange(cfg.seed0, cfg.seed0 + cfg.trials, dtype=np.int64)
    if cfg.pair == "spont-spont":
        sv = survey_coupling(cfg.pair, cfg.lam, cfg.p1, box, rule, cfg.T, seeds, p2=cfg.p2)
    else:
        sv = survey_coupling(cfg.pair, cfg.lam, cfg.p, box, rule, cfg.T, seeds)
    buf = io.StringIO()
    buf.write("seed,violations,extinct_lower,extinct_upper\n")
    for seed, v, el, eu in sv.rows():
        buf.write(f"{seed},{v},{int(el)},{int(eu)}\n")
    problems = [f"{sv.total_violations} order violations"] if sv.total_violations else []
    return buf.getvalue(), problems, {}


def run_mono(cfg):
    from .monotone import Params, builtin_tables, check_monotone, load_tables, symbolic_p_pair

    if cfg.table:
        lower, upper = load_tables(cfg.table, cfg.order)
        label = cfg.table
    else:
        if cfg.p2 is not None:
            if cfg.lam is not None and cfg.p is not None:
                pl, pu = Params.numeric(cfg.lam, cfg.p, cfg.d), Params.numeric(cfg.lam, cfg.p2, cfg.d)
            else:
                pl, pu = symbolic_p_pair(cfg.d)
            lower = builtin_tables(cfg.process, order=cfg.order, params=pl)
            upper = builtin_tables(cfg.process, order=cfg.order, params=pu)
        else:
            lower = upper = builtin_tables(cfg.process, cfg.lam, cfg.p, cfg.order, cfg.d)
        label = cfg.process
    verdict = check_monotone(lower, upper, cfg.order)
    lines = [f"{label} under {cfg.order}: {'monotone' if verdict.passed else 'NOT monotone'} "
             f"({verdict.checked} inequalities checked, {len(verdict.failures)} failing)"]
    for f in verdict.failures:
        idx = "j" if f.inequality == "I1" else "h"
        lines.append(f"  {f.inequality} fails at (alpha,beta)=({f.alpha},{f.beta}) "
                     f"(gamma,delta)=({f.gamma},{f.delta}) {idx}={f.threshold}: "
                     f"{f.lhs!r} > {f.rhs!r}")
    sys.stderr.write("\n".join(lines) + "\n")
    return json.dumps(verdict.to_json(), indent=2) + "\n", [], {}


def run_perc(cfg):
    from .percolation import (EvenLattice, cluster_from_origin, sample_independent,
                              synthetic_m_dependent)

    lat = EvenLattice(cfg.height, cfg.height if cfg.width is None else cfg.width)
    buf = io.StringIO()
    buf.write("seed,reached_top,cluster_size\n")
    for s in range(cfg.seed0, cfg.seed0 + cfg.trials):
        if cfg.p is not None:
            f = sample_independent(lat, cfg.p, s)
        else:
            f = synthetic_m_dependent(lat, cfg.M, cfg.gamma, s)
        cl = cluster_from_origin(f)
        buf.write(f"{s},{int(cl.reached_top)},{cl.size}\n")
    return buf.getvalue(), [], {}


def run_block(cfg):
    from .events import derive_seed
    from .renorm import (BlockGeometry, HSettings, block_events, calibrate_speeds,
                         comparison_audit, h_membership, wet_sites)

    lam, p, N = cfg.lam, cfg.p, cfg.N
    K = cfg.K if cfg.K is not None else max(1, N // 2)
    calib = None
    a1, a2 = cfg.alpha1, cfg.alpha2
    if a1 is None or a2 is None:
        T_cal = 20.0
        half = int(math.ceil(2 * lam * p * T_cal)) + 10
        calib = calibrate_speeds(lam * p, 1, Box.centered(half), T_cal, cfg.calibration_trials,
                                 derive_seed(cfg.seed0, "calibration") & ((1 << 62) - 1))
        if calib.failed:
            raise InvariantViolation("speed calibration failed: no surviving trial")
        a1 = a1 if a1 is not None else calib.alpha1
        a2 = a2 if a2 is not None else calib.alpha2
    geom = BlockGeometry(N, K, 1, a1, a2, cfg.alpha_prime)
    st = HSettings(lam, p, cfg.gamma, cfg.inner_trials, cfg.horizon_mult)
    xi = Configuration.full(Box.centered(10 * N), 1, within=Box.centered(N))
    member = h_membership(xi, geom, st, cfg.seed0)
    out = {"geometry": geom.to_json(),
           "calibration": None if calib is None else calib.__dict__,
           "membership": {"verdict": member.verdict, "center": member.center,
                          "estimate": member.estimate, "stderr": member.stderr,
                          "interval": list(member.interval), "trials": member.trials}}
    problems = []
    if not member.member:
        raise InvariantViolation(f"initial configuration is not in H ({member.verdict})")
    rep = block_events(xi, geom, lam, p, cfg.trials, cfg.seed0, st, member, cfg.events,
                       cfg.audit_restriction)
    out["block"] = rep.to_json()
    for key in ("restriction_violations", "fertile_domination_violations_on_E",
                "G_implication_violations"):
        if rep.audits.get(key):
            problems.append(f"{key} = {rep.audits[key]}")
    if cfg.wet_seeds:
        g = rep.events.get("G")
        p_site = 0.0 if g is None else max(0.0, g.estimate - 3 * g.stderr)
        wet_v = good_v = 0
        per_seed = []
        for s in range(cfg.seed0, cfg.seed0 + cfg.wet_seeds):
            w = wet_sites(xi, geom, lam, p, cfg.wet_levels, s, st)
            a = comparison_audit(w, p_site, derive_seed(s, "comparison") & ((1 << 62) - 1))
            wet_v += a.wet_violations
            good_v += a.good_violations
            per_seed.append({"seed": s, "cluster_sizes": [len(x) for x in a.levels],
                             "wet_counts": [len(w.X(n)) for n in range(cfg.wet_levels + 1)]})
        out["comparison"] = {"p_site": p_site, "levels": cfg.wet_levels, "seeds": cfg.wet_seeds,
                             "wet_violations": wet_v, "good_violations": good_v,
                             "per_seed": per_seed}
        if wet_v or good_v:
            problems.append(f"comparison containment violations: wet {wet_v}, good {good_v}")
    return json.dumps(out, indent=2, sort_keys=True) + "\n", problems, {}


def run_sweep_cmd(cfg):
    from .sweep import run_sweep

    box, rule = cfg.box.build()
    rec = run_sweep(cfg.kind, cfg.lambdas, cfg.ps, box, rule, cfg.T, cfg.trials, cfg.seed0,
                    cfg.workers)
    problems = []
    if rec.violations:
        problems.append(f"{rec.violations} pathwise sandwich violations")
    for f in rec.monotonicity_flags:
        sys.stderr.write(f"warning: Spont estimate drops from p={f['p_low']} to p={f['p_high']} "
                         f"at lambda={f['lambda']} by {f['drop']:.4g} (> {f['tolerance']:.4g})\n")
    extra = {}
    if cfg.report:
        extra[cfg.report] = json.dumps(rec.to_json(), indent=2, sort_keys=True) + "\n"
    return rec.csv(), problems, extra


def run_duality(cfg):
    from .renorm import duality_check

    box, rule = cfg.box.build()
    if box.d != 1:
        raise ConfigError("duality sites are given for d = 1")
    zeta = Configuration.from_sites(box, fertile=[(x,) for x in cfg.zeta])
    r = duality_check(zeta, cfg.lam, cfg.t, box, cfg.trials, cfg.seed0, rule)
    out = {"lhs": r.lhs, "rhs": r.rhs, "lhs_stderr": r.lhs_stderr, "rhs_stderr": r.rhs_stderr,
           "z": r.z, "trials": cfg.trials}
    return json.dumps(out, indent=2, sort_keys=True) + "\n", [], {}


RUNNERS = {"simulate": run_simulate, "couple": run_couple, "mono": run_mono, "perc": run_perc,
           "block": run_block, "sweep": run_sweep_cmd, "duality": run_duality}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    t0 = time.perf_counter()
    try:
        cfg = resolve_config(args)
        text, problems, extra = RUNNERS[cfg.command](cfg)
        outputs = []
        if cfg.out:
            atomic_write(cfg.out, text)
            outputs.append(cfg.out)
        else:
            sys.stdout.write(text)
        for path, data in extra.items():
            atomic_write(path, data)
            outputs.append(path)
        manifest = args.manifest or (f"{cfg.out}.manifest.json" if cfg.out else None)
        if manifest:
            write_manifest(cfg, outputs, time.perf_counter() - t0, manifest)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except InvariantViolation as exc:
        sys.stderr.write(f"invariant violation: {exc}\n")
        return EXIT_INVARIANT
    except OSError as exc:
        sys.stderr.write(f"I/O error: {exc}\n")
        return EXIT_IO
    except ValueError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    if problems:
        for msg in problems:
            sys.stderr.write(f"invariant violation: {msg}\n")
        return EXIT_INVARIANT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
