"""Parameter sweeps shared by the command line and the acceptance suite."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .config import Expression
from .estimates import global_estimate, local_estimate
from .grid import GridDomain, ScalarField
from .solver import SolveOptions, solve_dirichlet, solve_neumann
from .structure import power_law

SWEEP_P = (1.5, 2.0, 3.0, 4.5)
SWEEP_RHS = ("1", "1+x*y", "cos(pi*x)*cos(pi*y)")
SWEEP_DOMAINS = ("square", "disk")
LOCAL_CENTERS = ((0.0, 0.0), (0.25, 0.25), (-0.25, 0.25), (-0.25, -0.25), (0.25, -0.25))
LOCAL_RADII = (0.125, 0.25)


def sweep_domain(name: str, h: float) -> GridDomain:
    """``square`` is ``[-1, 1]^2`` and ``disk`` the unit disk, so that balls of
    radius 1/2 around the sweep centers stay inside both."""
    if name == "square":
        return GridDomain.rectangle(2.0, 2.0, h, origin=(-1.0, -1.0))
    if name == "disk":
        return GridDomain.disk(1.0, h)
    raise ValueError(f"unknown sweep domain {name!r}")


@dataclass
class SweepRow:
    p: float
    domain: str
    rhs: str
    h: float
    norm_f_l2: float
    norm_V_l2: float
    norm_gradV_l2: float
    norm_V_w12: float
    ratio_upper: float
    ratio_lower: float
    residual: float
    structural_bound_holds: bool
    local_ratio_max: float
    iterations: int


def sweep_task(p: float, domain_name: str, rhs: str, h: float, local: bool = True,
               opts: SolveOptions | None = None) -> SweepRow:
    sf = power_law(p)
    domain = sweep_domain(domain_name, h)
    f = ScalarField.from_function(domain, Expression(rhs))
    u, report = solve_dirichlet(sf, domain, f, opts)
    est = global_estimate(sf, u, f, report)
    local_max = float("nan")
    if local:
        ratios = [local_estimate(sf, u, f, c, R).ratio for c in LOCAL_CENTERS for R in LOCAL_RADII]
        local_max = max(ratios)
    return SweepRow(p, domain_name, rhs, domain.h, est.norm_f_l2, est.norm_V_l2, est.norm_gradV_l2, est.norm_V_w12,
                    est.ratio_upper, est.ratio_lower, est.residual, est.structural_bound_holds, local_max,
                    sum(report.iterations))


def _run(args):
    return sweep_task(*args)


def coercivity_sweep(ps=SWEEP_P, domains=SWEEP_DOMAINS, rhs=SWEEP_RHS, hs=(1 / 32, 1 / 64), local: bool = True,
                     jobs: int = 1) -> list[SweepRow]:
    """Solve every combination and return rows in task order (independent of ``jobs``)."""
    tasks = [(float(p), d, f, float(h), local) for p in ps for d in domains for f in rhs for h in hs]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run, tasks))
    return [_run(t) for t in tasks]


def stability(rows: list[SweepRow]) -> dict[tuple, float]:
    """Relative change of the upper ratio between consecutive spacings, per configuration."""
    groups: dict[tuple, list[SweepRow]] = {}
    for r in rows:
        groups.setdefault((r.p, r.domain, r.rhs), []).append(r)
    out = {}
    for key, group in groups.items():
        group.sort(key=lambda r: -r.h)
        changes = [abs(b.ratio_upper / a.ratio_upper - 1.0) for a, b in zip(group, group[1:])
                   if a.ratio_upper > 0 and b.ratio_upper > 0]
        out[key] = max(changes) if changes else math.nan
    return out


def solve_for(bc: str):
    return solve_dirichlet if bc == "dirichlet" else solve_neumann
