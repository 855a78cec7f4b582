"""Grid-wide geometry reports with JSON and CSV export."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ExpanderLabError
from . import residuals as res
from .charts import Chart
from .forms import EPS_H, fundamental_forms, principal_curvatures

RESIDUAL_NAMES = ("gauss", "codazzi", "ricci", "simons", "position")


@dataclass
class PointReport:
    u: list
    normA2: float
    normH2: float
    pinch_hyp: float | None
    pinch_AH: float | None
    S: float
    principal_curvatures: list | None
    s_value: float
    xi_parallel_residual: float | None
    residuals: dict = field(default_factory=dict)


@dataclass
class GeometryReport:
    chart: str
    eps_H: float
    points: list

    def to_dict(self) -> dict:
        return {"chart": self.chart, "eps_H": self.eps_H,
                "points": [asdict(p) for p in self.points]}

    def column(self, name):
        return [getattr(p, name) for p in self.points]


def stencil_margin(chart: Chart) -> float:
    """Distance from the box boundary needed by every residual stencil."""
    steps = res.DEFAULT_STEPS
    return max(chart.jet_reach(1) + 2 * steps["gauss"],
               chart.jet_reach(2) + steps["codazzi"],
               chart.jet_reach(2) + steps["ricci"],
               chart.jet_reach(3) + steps["simons"],
               chart.jet_reach(2) + steps["position"],
               chart.jet_reach(2) + steps["xi_parallel"])


def point_report(chart: Chart, u, with_residuals: bool = True,
                 eps_H: float = EPS_H) -> PointReport:
    forms = fundamental_forms(chart, u)
    pcs = None
    if forms.codim == 1:
        pcs = [float(x) for x in principal_curvatures(forms, eps_H)]
    xi_res = None
    if forms.normH2 > eps_H:
        try:
            xi_res = res.principal_normal_parallel_residual(chart, u, eps_H=eps_H)
        except ExpanderLabError:
            xi_res = None
    residuals = {}
    if with_residuals:
        residuals = {
            "gauss": res.gauss_residual_max(chart, u),
            "codazzi": res.codazzi_residual_max(chart, u),
            "ricci": res.ricci_residual_max(chart, u),
            "simons": res.simons_residual_max(chart, u),
            "position": max(res.position_identity_residual(chart, u).values()),
        }
    return PointReport([float(x) for x in u], forms.normA2, forms.normH2,
                       forms.pinch_hyp(eps_H), forms.pinch_AH(eps_H), forms.scalar_curvature,
                       pcs, forms.s_value, xi_res, residuals)


def parallel_map(fn, items, threads: int = 1):
    """Ordered map, optionally over a thread pool."""
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def geometry_report(chart: Chart, with_residuals: bool = True, threads: int = 1,
                    eps_H: float = EPS_H) -> GeometryReport:
    pts = chart.grid(stencil_margin(chart))
    reports = parallel_map(lambda u: point_report(chart, u, with_residuals, eps_H), pts, threads)
    return GeometryReport(chart.name, eps_H, reports)


def _json_safe(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, np.generic):
        return _json_safe(x.item())
    return x


def write_report_json(report: GeometryReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_json_safe(report.to_dict()), fh, indent=1)
        fh.write("\n")


def write_report_csv(report: GeometryReport, path) -> None:
    """Flattened rows: u_0.., scalars, principal_curvatures_0.., residual columns."""
    if not report.points:
        raise ExpanderLabError("empty report")
    p0 = report.points[0]
    m = len(p0.u)
    npc = len(p0.principal_curvatures) if p0.principal_curvatures is not None else 0
    header = ([f"u_{i}" for i in range(m)]
              + ["normA2", "normH2", "pinch_hyp", "pinch_AH", "S", "s_value",
                 "xi_parallel_residual"]
              + [f"principal_curvatures_{i}" for i in range(npc)]
              + [f"residuals_{k}" for k in RESIDUAL_NAMES if k in p0.residuals])

    def fmt(v):
        return "" if v is None else repr(float(v))

    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for p in report.points:
            row = [fmt(x) for x in p.u]
            row += [fmt(p.normA2), fmt(p.normH2), fmt(p.pinch_hyp), fmt(p.pinch_AH), fmt(p.S),
                    fmt(p.s_value), fmt(p.xi_parallel_residual)]
            row += [fmt(x) for x in (p.principal_curvatures or [])]
            row += [fmt(p.residuals[k]) for k in RESIDUAL_NAMES if k in p.residuals]
            w.writerow(row)
