"""Command-line front end.

    expander-lab curve  --lambda 1 --r0 1 --out runs/curve
    expander-lab family --lambda 1 --r0-list 0,0.5,1,2
    expander-lab verify --chart product --lambda 1 --r0 1 --extra-dims 1
    expander-lab verify --chart torus --check ricci
    expander-lab flow   --alpha 1.5708 --lambda 1 --t-end 2

Exit codes: 0 success, 2 invalid input, 3 property violation, 4 expander gate
refusal, 5 no convergence.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import curve as cv
from . import flow as fl
from . import verify as vf
from .errors import (BracketError, ExpanderLabError, GateRefusal, InvalidArgumentError,
                     MonotonicityError, NotAsymptoticError, StencilError)
from .geometry import charts
from .geometry import residuals as gr
from .geometry.forms import EPS_H
from .geometry.report import (geometry_report, parallel_map, stencil_margin,
                              write_report_csv, write_report_json)

EXIT_OK, EXIT_INVALID, EXIT_PROPERTY, EXIT_GATE, EXIT_NOT_CONVERGED = 0, 2, 3, 4, 5

STRUCTURE_CHECKS = ("gauss", "codazzi", "ricci", "simons", "position", "xi_parallel")
EXPANDER_CHECKS = ("pde", "q2", "pinching")
STRUCTURE_TOLS = {"gauss": 1e-4, "codazzi": 1e-4, "ricci": 1e-6, "simons": 1e-3,
                  "position": 1e-5, "xi_parallel": 1e-6}
PDE_TOL = 1e-4
Q2_TOL = 1e-6
FLOW_THRESHOLD = 5e-2


class PropertyViolation(ExpanderLabError):
    pass


class NotConverged(ExpanderLabError):
    pass


# --- helpers -----------------------------------------------------------------------------

def _threads(args) -> int:
    if args.threads is not None:
        n = args.threads
    else:
        env = os.environ.get("EXPANDER_LAB_THREADS", "1")
        try:
            n = int(env)
        except ValueError as exc:
            raise InvalidArgumentError(f"EXPANDER_LAB_THREADS={env!r} is not an integer") from exc
    if n < 1:
        raise InvalidArgumentError("thread count must be at least 1")
    return n


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.generic):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def _write_json(path: Path, payload: dict) -> None:
    payload = dict(payload)
    payload["timestamp"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    path.write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise InvalidArgumentError(f"not a comma-separated list of numbers: {text!r}") from exc
    return vals


def _tolerances(overrides) -> dict:
    """Default verify tolerances updated from NAME=VALUE strings."""
    tols = dict(STRUCTURE_TOLS, pde=PDE_TOL, q2=Q2_TOL, pinching=vf.CONSTANCY_TOL)
    for item in overrides or ():
        name, sep, value = item.partition("=")
        if not sep or name not in tols:
            raise InvalidArgumentError(f"--tol expects NAME=VALUE with NAME in {sorted(tols)}")
        try:
            tols[name] = float(value)
        except ValueError as exc:
            raise InvalidArgumentError(f"--tol {item!r}: not a number") from exc
        if not tols[name] > 0:
            raise InvalidArgumentError(f"--tol {item!r}: must be positive")
    return tols


def _gnuplot(path: Path, lines: list[str]) -> None:
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# --- curve -------------------------------------------------------------------------------

def cmd_curve(args) -> int:
    params = cv.ExpanderParams(args.lam, args.r0)
    s_max = args.s_max if args.s_max is not None else None
    curve = cv.integrate_expander_curve(params, s_max=s_max, step=args.step)
    inv = cv.conserved_invariant(curve)
    summary = {
        "lambda": args.lam, "r0": args.r0, "s_max": curve.s_max, "step": curve.step,
        "alpha": cv.asymptotic_angle(curve, args.decay_tol),
        "total_curvature": cv.total_curvature(curve),
        "invariant_deviation": inv.max_relative_deviation,
        "invariant_saturated": inv.saturated,
        "residual": cv.curve_residual(curve),
        "endpoint_decay": cv.endpoint_decay(curve),
        "tolerances": {"decay_tol": args.decay_tol},
        "version": __version__,
    }
    out = _out_dir(args)
    cv.write_curve_csv(curve, out / "curve.csv")
    _write_json(out / "summary.json", summary)
    _gnuplot(out / "curve.gp", [
        "set datafile separator ','",
        "set size ratio -1",
        "set key off",
        f"set title 'self-expanding curve, lambda={args.lam:g}, r0={args.r0:g}'",
        "plot 'curve.csv' using 2:3 every ::1 with lines",
    ])
    print(f"alpha={summary['alpha']:.12g} total_curvature={summary['total_curvature']:.12g} "
          f"invariant_deviation={summary['invariant_deviation']:.3e}")
    return EXIT_OK


# --- family ------------------------------------------------------------------------------

def cmd_family(args) -> int:
    r0s = _float_list(args.r0_list)
    if not r0s:
        raise InvalidArgumentError("empty r0 list")
    if len(set(r0s)) != len(r0s):
        raise InvalidArgumentError("r0 values must be distinct")
    for r in r0s:
        cv.ExpanderParams(args.lam, r)

    def row(r0):
        c = cv.integrate_expander_curve(cv.ExpanderParams(args.lam, r0), args.s_max, args.step)
        return r0, cv.asymptotic_angle(c, args.decay_tol), cv.total_curvature(c)

    rows = parallel_map(row, r0s, _threads(args))
    out = _out_dir(args)
    with open(out / "family.csv", "w", encoding="utf-8") as fh:
        fh.write("r0,alpha,total_curvature\n")
        for r0, a, tc in rows:
            fh.write(f"{r0:.17g},{a:.17g},{tc:.17g}\n")
    monotone = True if len(rows) < 2 else cv.check_monotone([r[0] for r in rows],
                                                          [r[1] for r in rows])
    _write_json(out / "family.json", {
        "lambda": args.lam, "step": args.step,
        "rows": [{"r0": r0, "alpha": a, "total_curvature": tc} for r0, a, tc in rows],
        "monotone_decreasing": monotone if len(rows) > 1 else None,
        "version": __version__,
    })
    _gnuplot(out / "family.gp", [
        "set datafile separator ','", "set xlabel 'r0'", "set ylabel 'alpha'", "set key off",
        "plot 'family.csv' using 1:2 every ::1 with linespoints",
    ])
    for r0, a, tc in rows:
        print(f"r0={r0:g} alpha={a:.12g} total_curvature={tc:.12g}")
    if not monotone:
        raise MonotonicityError("alpha is not strictly decreasing in r0")
    return EXIT_OK


# --- verify ------------------------------------------------------------------------------

def build_chart(args):
    name = args.chart
    if name == "sphere":
        return charts.sphere(args.radius)
    if name == "cylinder":
        return charts.cylinder(args.radius)
    if name == "plane":
        return charts.plane()
    if name == "torus":
        return charts.torus(args.torus_a, args.torus_b, args.torus_eps)
    if name == "cone":
        return charts.cone(args.cone_beta)
    if name.startswith("graph:"):
        return charts.graph(charts.parse_graph_spec(name[len("graph:"):]))
    if name == "product":
        if args.r0 is None:
            raise InvalidArgumentError("--chart product needs --r0")
        curve = cv.integrate_expander_curve(cv.ExpanderParams(args.lam, args.r0), args.s_max,
                                            args.step)
        return charts.product_with_flat(curve, args.extra_dims)
    raise InvalidArgumentError(f"unknown chart {name!r}")


def _structure_residuals(chart, checks, threads, tols):
    fns = {
        "gauss": gr.gauss_residual_max,
        "codazzi": gr.codazzi_residual_max,
        "ricci": gr.ricci_residual_max,
        "simons": gr.simons_residual_max,
        "position": lambda c, u: max(gr.position_identity_residual(c, u).values()),
    }
    pts = chart.grid(stencil_margin(chart))
    out = {}
    for name in checks:
        if name == "xi_parallel":
            def xi(u):
                try:
                    return gr.principal_normal_parallel_residual(chart, u)
                except ExpanderLabError:
                    return None
            vals = parallel_map(xi, pts, threads)
        else:
            fn = fns[name]
            vals = parallel_map(lambda u: fn(chart, u), pts, threads)
        good = [(v, u) for v, u in zip(vals, pts) if v is not None]
        if not good:
            out[name] = {"max": None, "argmax": None, "evaluated": 0,
                         "tolerance": tols[name], "passed": None}
            continue
        v, u = max(good, key=lambda t: t[0])
        out[name] = {"max": v, "argmax": [float(x) for x in u], "evaluated": len(good),
                     "tolerance": tols[name], "passed": v < tols[name]}
    return out


def cmd_verify(args) -> int:
    checks = ["all"] if not args.check else args.check
    if "all" in checks:
        checks = list(STRUCTURE_CHECKS) + list(EXPANDER_CHECKS)
    unknown = [c for c in checks if c not in STRUCTURE_CHECKS + EXPANDER_CHECKS]
    if unknown:
        raise InvalidArgumentError(f"unknown checks {unknown}")
    threads = _threads(args)
    tols = _tolerances(args.tol)
    chart = build_chart(args)
    out = _out_dir(args)
    payload = {"chart": chart.name, "lambda": args.lam, "checks": checks,
               "tolerances": {"structure": {k: tols[k] for k in STRUCTURE_CHECKS},
                              "pde": tols["pde"], "q2": tols["q2"], "gate": args.gate,
                              "eps_H": EPS_H, "constancy": tols["pinching"],
                              "eigen": vf.EIGEN_TOL},
               "version": __version__}
    failures = []
    structure = [c for c in checks if c in STRUCTURE_CHECKS]
    if structure:
        payload["structure"] = _structure_residuals(chart, structure, threads, tols)
        failures += [k for k, v in payload["structure"].items() if v["passed"] is False]

    expander = [c for c in checks if c in EXPANDER_CHECKS]
    if expander:
        cand = vf.ExpanderCandidate(chart, args.lam)
        try:
            report = vf.rigidity_report(cand, gate=args.gate, threads=threads,
                                        constancy_tol=tols["pinching"])
        except GateRefusal as exc:
            payload["gate"] = {"expander_residual": exc.expander_residual,
                               "threshold": args.gate, "passed": False}
            _write_json(out / "verify.json", payload)
            raise
        payload.update({k: report[k] for k in ("gate", "residuals", "pinching",
                                                "eigen_summary", "hint")})
        if "pde" in expander:
            for name, entry in report["residuals"].items():
                if name in ("self4_from_self3", "flat_gradient", "self4_trace_gap"):
                    continue
                v = entry.get("max")
                if v is not None and not v < tols["pde"]:
                    failures.append(name)
        if "q2" in expander and chart.dim_ambient - chart.dim_domain == 1:
            pts = vf.interior_points(chart)

            def q2(u):
                try:
                    return vf.q_squared(cand, u)
                except ExpanderLabError:
                    return None
            vals = [v for v in parallel_map(q2, pts, threads) if v is not None]
            qmax = max(vals) if vals else None
            payload["q2"] = {"max": qmax, "tolerance": tols["q2"], "evaluated": len(vals)}
            if qmax is not None and not qmax < tols["q2"]:
                failures.append("q2")
        if "pinching" in expander:
            dev = report["pinching"]["deviation"]
            if dev is not None and not dev < tols["pinching"]:
                failures.append("pinching")
    if args.report:
        rep = geometry_report(chart, with_residuals=False, threads=threads)
        if args.format == "csv":
            write_report_csv(rep, out / "geometry.csv")
        else:
            write_report_json(rep, out / "geometry.json")
    payload["failures"] = failures
    payload["passed"] = not failures
    _write_json(out / "verify.json", payload)
    if "structure" in payload:
        for k, v in payload["structure"].items():
            print(f"{k}: max={v['max']!r} tol={v['tolerance']:g}")
    if "pinching" in payload:
        p = payload["pinching"]
        print(f"pinching: min={p['min']!r} max={p['max']!r} hint: {payload['hint']}")
    if failures:
        raise PropertyViolation(f"residuals above tolerance: {', '.join(failures)}")
    return EXIT_OK


# --- flow --------------------------------------------------------------------------------

def cmd_flow(args) -> int:
    if not 0 < args.alpha < math.pi:
        raise InvalidArgumentError(f"--alpha must lie in (0, pi), got {args.alpha}")
    if not args.t_end > 0:
        raise InvalidArgumentError("--t-end must be positive")
    config = fl.FlowConfig(args.dt_safety, args.resample_every, args.lam)
    times = sorted({t for t in _float_list(args.times) if 0 < t <= args.t_end} | {args.t_end})
    r0 = cv.shoot_for_angle(args.lam, args.alpha)
    expander = cv.integrate_expander_curve(cv.ExpanderParams(args.lam, r0))
    cone = fl.init_cone(args.alpha, args.r_far, args.n)
    run = fl.run_flow(cone, config, args.t_end, times)
    distances = []
    for snap in run.snapshots:
        try:
            distances.append(fl.rescaled_compare(snap, expander, args.lam,
                                                 birth_time=args.birth_time))
        except ExpanderLabError as exc:
            distances.append(None)
            print(f"t={snap.time:g}: {exc}", file=sys.stderr)
    out = _out_dir(args)
    fl.write_snapshots_csv(run.snapshots, out / "flow.csv")
    final = distances[-1]
    converged = final is not None and final < args.threshold
    _write_json(out / "flow.json", {
        "alpha": args.alpha, "lambda": args.lam, "r0": r0,
        "times": [s.time for s in run.snapshots], "distances": distances,
        "n_points": len(cone), "dt_safety": args.dt_safety,
        "resample_every": args.resample_every, "far_radius": args.r_far,
        "birth_time": args.birth_time, "steps": run.steps, "threshold": args.threshold,
        "converged": converged, "version": __version__,
    })
    _gnuplot(out / "flow.gp", [
        "set datafile separator ','", "set size ratio -1", "set key off",
        "plot 'flow.csv' using 2:3 every ::1 with lines",
    ])
    for t, d in zip(times, distances):
        print(f"t={t:g} distance={d!r}")
    if not converged:
        raise NotConverged(f"final rescaled distance {final!r} not below {args.threshold:g}")
    return EXIT_OK


# --- parser ------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="expander-lab", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: $EXPANDER_LAB_THREADS or 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, lam_required=True):
        p.add_argument("--lambda", dest="lam", type=float, required=lam_required,
                       default=None if lam_required else 1.0, help="expander constant")
        p.add_argument("--out", default=".", help="output directory")

    def curve_opts(p):
        p.add_argument("--s-max", type=float, default=None,
                       help="arc-length half-width (default 6/sqrt(lambda))")
        p.add_argument("--step", type=float, default=cv.DEFAULT_STEP)
        p.add_argument("--decay-tol", type=float, default=cv.DEFAULT_DECAY_TOL)

    p = sub.add_parser("curve", help="integrate one self-expanding curve")
    common(p)
    p.add_argument("--r0", type=float, default=1.0)
    curve_opts(p)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("family", help="asymptotic angle along the one-parameter family")
    common(p)
    p.add_argument("--r0-list", required=True, help="comma-separated r0 values")
    curve_opts(p)
    p.set_defaults(func=cmd_family)

    p = sub.add_parser("verify", help="structure equations and expander identities on a chart")
    common(p, lam_required=False)
    p.add_argument("--chart", required=True,
                   help="sphere | cylinder | plane | torus | cone | product | graph:<c;c;...>")
    p.add_argument("--check", action="append",
                   choices=("all",) + STRUCTURE_CHECKS + EXPANDER_CHECKS,
                   help="repeatable; default all")
    p.add_argument("--r0", type=float, default=None)
    p.add_argument("--extra-dims", type=int, default=1)
    p.add_argument("--radius", type=float, default=1.0, help="sphere/cylinder radius")
    p.add_argument("--torus-a", type=float, default=1.0)
    p.add_argument("--torus-b", type=float, default=2.0)
    p.add_argument("--torus-eps", type=float, default=0.0)
    p.add_argument("--cone-beta", type=float, default=math.pi / 4)
    p.add_argument("--gate", type=float, default=vf.DEFAULT_GATE)
    p.add_argument("--tol", action="append", metavar="NAME=VALUE",
                   help="override a tolerance (gauss, codazzi, ricci, simons, position, "
                        "xi_parallel, pde, q2, pinching); repeatable")
    p.add_argument("--report", action="store_true", help="also write the per-point report")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    curve_opts(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("flow", help="curve shortening flow from a cone")
    common(p, lam_required=False)
    p.add_argument("--alpha", type=float, required=True, help="cone opening angle in (0, pi)")
    p.add_argument("--t-end", type=float, default=2.0)
    p.add_argument("--n", type=int, default=400)
    p.add_argument("--r-far", type=float, default=10.0)
    p.add_argument("--dt-safety", type=float, default=0.25)
    p.add_argument("--resample-every", type=int, default=10)
    p.add_argument("--times", default="0.5,1,2", help="comparison times (t-end is added)")
    p.add_argument("--birth-time", type=float, default=0.0,
                   help="time at which the self-similar orbit leaves the cone")
    p.add_argument("--threshold", type=float, default=FLOW_THRESHOLD)
    p.set_defaults(func=cmd_flow)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidArgumentError, NotAsymptoticError, BracketError, StencilError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (MonotonicityError, PropertyViolation) as exc:
        print(f"property violation: {exc}", file=sys.stderr)
        return EXIT_PROPERTY
    except GateRefusal as exc:
        print(f"gate refusal: {exc}", file=sys.stderr)
        return EXIT_GATE
    except NotConverged as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except ExpanderLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROPERTY


if __name__ == "__main__":
    sys.exit(main())
