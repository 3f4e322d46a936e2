"""Command line entry point ``fluxreg``.

Exit codes: 0 when the command ran and every checked contract holds, 1 when
a contract is violated (details in the JSON report), 2 on usage errors.
CSV files end with a ``# seed=<n> version=<v>`` line.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import experiments, simplex_forms
from .config import parse_config
from .errors import ConfigError, DomainError, FluxRegError, InvalidStructure
from .estimates import flux, gallery_counterexample, global_estimate
from .grid import write_field_csv
from .matrix_lemma import min_constant
from .rearrangement import (
    WeightedSamples,
    curvature_admissibility,
    lebesgue_norm,
    lorentz_norm,
    make_curve,
    marcinkiewicz_norm,
    weak_log_norm,
)
from .solver import SolveOptions
from .structure import power_law

log = logging.getLogger("fluxreg")

EXIT_OK, EXIT_CONTRACT, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_fmt(x) for x in v)
    return str(v)


def csv_text(header, rows, seed: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(row[k]) for k in header])
    buf.write(f"# seed={seed} version={__version__}\n")
    return buf.getvalue()


def _emit(text: str, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _finite(v):
    return v if isinstance(v, (int, bool)) or math.isfinite(v) else None


def _write_report(report: dict, path, failed: bool):
    text = json.dumps(report, sort_keys=True, indent=2, default=_json_default) + "\n"
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    elif failed:
        sys.stderr.write(text)


def _contracts_exit(contracts: list[dict], report: dict, path) -> int:
    failed = [c for c in contracts if not c["passed"]]
    report["contracts"] = contracts
    report["passed"] = not failed
    _write_report(report, path, bool(failed))
    return EXIT_CONTRACT if failed else EXIT_OK


def _contract(name, value, bound, passed):
    return {"name": name, "value": value, "bound": bound, "passed": bool(passed)}


def _floats(text: str) -> list[float]:
    try:
        return [float(eval_fraction(t)) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected a comma separated list of numbers, got {text!r}") from None


def eval_fraction(t: str) -> float:
    t = t.strip()
    if "/" in t:
        a, b = t.split("/", 1)
        return float(a) / float(b)
    return float(t)


# --------------------------------------------------------------------------- solve

def cmd_solve(args) -> int:
    cfg = parse_config(args.config)
    out = Path(args.out) if args.out else cfg.out_dir()
    sf = cfg.structure_function()
    domain = cfg.grid()
    f = cfg.rhs_field(domain)
    opts = SolveOptions.down_to(cfg.epsilon)
    solve = experiments.solve_for(cfg.bc)
    u, report = solve(sf, domain, f, opts)
    V = flux(sf, u, quiet=True)
    out.mkdir(parents=True, exist_ok=True)
    footer = f"# seed={cfg.seed} version={__version__}\n"
    write_field_csv(out / "u.csv", u, footer=footer)
    write_field_csv(out / "flux.csv", V, footer=footer)
    data = report.to_dict()
    data.update({"structure": sf.describe(), "domain": domain.describe(), "h": domain.h, "seed": cfg.seed,
                 "version": __version__})
    tol = opts.newton.tol
    contracts = [_contract("gradient_norm", report.gradient_norm, tol, report.gradient_norm <= tol)]
    return _contracts_exit(contracts, data, out / "report.json")


# --------------------------------------------------------------------------- verify-estimate

def _sweep_values(spec: str) -> list[float]:
    key, eq, values = spec.partition("=")
    if key.strip() != "p" or not eq:
        raise UsageError("--sweep accepts p=<list> only")
    return _floats(values)


def cmd_verify_estimate(args) -> int:
    cfg = parse_config(args.config)
    base = cfg.grid()
    ps = _sweep_values(args.sweep) if args.sweep else [None]
    if args.refine < 1:
        raise UsageError("--refine must be >= 1")
    opts = SolveOptions.down_to(cfg.epsilon)
    solve = experiments.solve_for(cfg.bc)
    rows, contracts = [], []
    for p in ps:
        sf = power_law(p) if p is not None else cfg.structure_function()
        ratios = []
        for k in range(args.refine):
            domain = base.with_spacing(base.h / 2**k) if k else base
            f = cfg.rhs_field(domain)
            u, report = solve(sf, domain, f, opts)
            est = global_estimate(sf, u, f, report)
            ratios.append(est.ratio_upper)
            rows.append({"p": p if p is not None else sf.describe(), "h": domain.h, "domain": domain.shape,
                         "norm_f_l2": est.norm_f_l2, "norm_V_l2": est.norm_V_l2, "norm_gradV_l2": est.norm_gradV_l2,
                         "ratio_upper": est.ratio_upper, "ratio_lower": est.ratio_lower, "residual": est.residual})
            label = f"{sf.describe()} h={domain.h:g}"
            if est.ratio_upper != -1.0:
                contracts.append(_contract(f"ratio_band[{label}]", est.ratio_upper, [0.05, 20.0],
                                           0.05 <= est.ratio_upper <= 20.0))
            contracts.append(_contract(f"structural_lower_bound[{label}]", est.norm_f_l2_interior,
                                       math.sqrt(2) * est.norm_gradV_l2 + 10 * est.residual,
                                       est.structural_bound_holds))
        if len(ratios) >= 2 and ratios[-2] > 0:
            change = abs(ratios[-1] / ratios[-2] - 1.0)
            contracts.append(_contract(f"ratio_stability[{sf.describe()}]", change, 0.1, change <= 0.1))
    header = ["p", "h", "domain", "norm_f_l2", "norm_V_l2", "norm_gradV_l2", "ratio_upper", "ratio_lower", "residual"]
    _emit(csv_text(header, rows, cfg.seed), args.out)
    return _contracts_exit(contracts, {"command": "verify-estimate", "seed": cfg.seed, "version": __version__},
                           args.report)


# --------------------------------------------------------------------------- verify-matrix-lemma

def cmd_verify_matrix_lemma(args) -> int:
    thetas = _floats(args.theta)
    ns = [int(n) for n in _floats(args.n)]
    tasks = [(t, n) for t in thetas for n in ns]
    seeds = np.random.SeedSequence(args.seed).spawn(len(tasks))
    rows, contracts = [], []
    for (theta, n), seed in zip(tasks, seeds):
        res = min_constant(theta, n, starts=args.starts, iterations=args.iterations, samples=args.samples,
                           rng=np.random.default_rng(seed))
        rows.append({"theta": theta, "n": n, "C_estimate": res.estimate, "upper_bound": res.upper_bound,
                     "gap": res.gap, "evaluations": res.evaluations,
                     "wall_time": 0.0 if args.no_timing else res.wall_time})
        if res.valid:
            contracts.append(_contract(f"positive[theta={theta:g},n={n}]", res.estimate, 0.0, res.estimate > 0))
            search_gap = abs(res.search_estimate - res.upper_bound)
            contracts.append(_contract(f"envelope[theta={theta:g},n={n}]", search_gap, args.tol,
                                       search_gap <= args.tol))
        else:
            contracts.append(_contract(f"degenerate[theta={theta:g},n={n}]", res.estimate, 1e-6,
                                       abs(res.estimate) <= 1e-6 and res.witness is not None))
    header = ["theta", "n", "C_estimate", "upper_bound", "gap", "evaluations", "wall_time"]
    _emit(csv_text(header, rows, args.seed), args.out)
    return _contracts_exit(contracts, {"command": "verify-matrix-lemma", "seed": args.seed, "version": __version__},
                           args.report)


# --------------------------------------------------------------------------- verify-symmetric-lemma

def cmd_verify_symmetric_lemma(args) -> int:
    ns = [int(n) for n in _floats(args.n)]
    seeds = np.random.SeedSequence(args.seed).spawn(len(ns))
    rows, contracts = [], []
    for n, seed in zip(ns, seeds):
        res = simplex_forms.nonnegativity_sweep(n, args.samples, np.random.default_rng(seed))
        vertex = float(np.max(np.abs(simplex_forms.phi_product(np.eye(n)))))
        rows.append({"n": n, "samples": args.samples, "min_phi": res.min_phi, "argmin_eta": res.argmin_eta,
                     "max_identity_gap": res.max_identity_gap})
        contracts.append(_contract(f"nonnegative[n={n}]", res.min_phi, -1e-12, res.min_phi >= -1e-12))
        contracts.append(_contract(f"identity_gap[n={n}]", res.max_identity_gap, 1e-10,
                                   res.max_identity_gap <= 1e-10))
        contracts.append(_contract(f"vertex_zero[n={n}]", vertex, 1e-12, vertex <= 1e-12))
    header = ["n", "samples", "min_phi", "argmin_eta", "max_identity_gap"]
    _emit(csv_text(header, rows, args.seed), args.out)
    return _contracts_exit(contracts,
                           {"command": "verify-symmetric-lemma", "seed": args.seed, "version": __version__},
                           args.report)


# --------------------------------------------------------------------------- norms

def _parse_norm(spec: str):
    kind, _, rest = spec.partition(":")
    kw = {}
    for item in filter(None, rest.replace(";", ",").split(",")):
        key, eq, value = item.partition("=")
        if not eq:
            raise UsageError(f"malformed norm parameter {item!r}")
        kw[key.strip()] = math.inf if value.strip() in ("inf", "infinity") else float(value)
    return kind.strip().lower(), kw


def _read_samples(path) -> WeightedSamples:
    try:
        data = np.genfromtxt(path, delimiter=",", names=True, comments="#", ndmin=1)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None
    names = data.dtype.names or ()
    if "value" not in names:
        raise UsageError("samples CSV needs a 'value' column (and optionally 'weight')")
    values = np.atleast_1d(data["value"])
    weights = np.atleast_1d(data["weight"]) if "weight" in names else np.full(values.size, 1.0 / values.size)
    return WeightedSamples(values, weights)


def cmd_norms(args) -> int:
    if args.curve:
        radii = _floats(args.radii)
        rep = curvature_admissibility(make_curve(args.curve), radii, samples=args.samples, centers=args.centers)
        _emit(csv_text(["r", "sup_point_arclength", "weak_log_norm"], rep.rows(), args.seed), args.out)
        return EXIT_OK
    if not args.input or not args.norm:
        raise UsageError("norms needs --input and --norm, or --curve")
    ws = _read_samples(args.input)
    rows = []
    for spec in args.norm:
        kind, kw = _parse_norm(spec)
        try:
            if kind == "marcinkiewicz":
                value = marcinkiewicz_norm(ws, kw["q"])
            elif kind in ("weak_log", "weaklog"):
                value = weak_log_norm(ws, kw.get("C"))
            elif kind == "lorentz":
                value = lorentz_norm(ws, kw["q"], kw["sigma"])
            elif kind == "lebesgue":
                value = lebesgue_norm(ws, kw["q"])
            else:
                raise UsageError(f"unknown norm {kind!r}")
        except KeyError as exc:
            raise UsageError(f"norm {kind!r} needs parameter {exc.args[0]}") from None
        rows.append({"norm": spec.replace(",", ";"), "value": value})
    _emit(csv_text(["norm", "value"], rows, args.seed), args.out)
    return EXIT_OK


# --------------------------------------------------------------------------- gallery

def cmd_gallery(args) -> int:
    rep = gallery_counterexample(args.beta, args.p, refine=args.refine)
    rows = rep.rows
    _emit(csv_text(["h", "norm_V_w12", "norm_hess_u_l2"], rows, args.seed), args.out)
    contracts = [_contract("flux_variation", rep.flux_variation, 0.05, rep.flux_variation <= 0.05)]
    if args.beta < 1.5:
        contracts.append(_contract("hessian_increase", rep.hess_increase, 0.2, rep.hess_increase >= 0.2))
        err = abs(rep.growth_exponent - rep.expected_exponent)
        contracts.append(_contract("growth_exponent", _finite(rep.growth_exponent), rep.expected_exponent,
                                   err <= 0.05))
    report = {"command": "gallery", "beta": args.beta, "p": args.p, "growth_exponent": _finite(rep.growth_exponent),
              "naive_exponent": rep.naive_exponent, "expected_exponent": rep.expected_exponent,
              "seed": args.seed, "version": __version__}
    return _contracts_exit(contracts, report, args.report)


# --------------------------------------------------------------------------- sweep

def cmd_sweep(args) -> int:
    ps = _floats(args.p)
    hs = _floats(args.h)
    domains = [d.strip() for d in args.domains.split(",") if d.strip()]
    for d in domains:
        if d not in experiments.SWEEP_DOMAINS:
            raise UsageError(f"unknown sweep domain {d!r}")
    rhs = args.rhs or list(experiments.SWEEP_RHS)
    rows = experiments.coercivity_sweep(ps, domains, rhs, hs, local=not args.no_local, jobs=args.jobs)
    stab = experiments.stability(rows)
    header = ["p", "domain", "rhs", "h", "norm_f_l2", "norm_V_w12", "ratio_upper", "ratio_lower", "residual",
              "structural_bound_holds", "local_ratio_max"]
    _emit(csv_text(header, [vars(r) for r in rows], args.seed), args.out)
    contracts = []
    for r in rows:
        label = f"p={r.p:g},{r.domain},{r.rhs},h={r.h:g}"
        contracts.append(_contract(f"ratio_band[{label}]", r.ratio_upper, [0.05, 20.0],
                                   0.05 <= r.ratio_upper <= 20.0))
        contracts.append(_contract(f"structural[{label}]", r.structural_bound_holds, True, r.structural_bound_holds))
        if not args.no_local:
            contracts.append(_contract(f"local[{label}]", r.local_ratio_max, 20.0, r.local_ratio_max <= 20.0))
    for key, change in stab.items():
        if not math.isnan(change):
            contracts.append(_contract(f"stability[p={key[0]:g},{key[1]},{key[2]}]", change, 0.1, change <= 0.1))
    return _contracts_exit(contracts, {"command": "sweep", "seed": args.seed, "version": __version__}, args.report)


# --------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fluxreg", description="Quasilinear flux regularity toolkit.")
    p.add_argument("--version", action="version", version=f"fluxreg {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("solve", help="solve a Dirichlet or Neumann problem from a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="output directory (overrides the config)")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("verify-estimate", help="global estimate report under refinement")
    s.add_argument("--config", required=True)
    s.add_argument("--sweep", help="p=<list>, overrides the structure of the config")
    s.add_argument("--refine", type=int, default=2, help="number of grid levels (h, h/2, ...)")
    s.add_argument("--out", help="CSV path (default: stdout)")
    s.add_argument("--report", help="JSON report path")
    s.set_defaults(func=cmd_verify_estimate)

    s = sub.add_parser("verify-matrix-lemma", help="numerical minimum of the pointwise functional")
    s.add_argument("--theta", required=True, help="one value or a comma separated list")
    s.add_argument("--n", required=True, help="one value or a comma separated list")
    s.add_argument("--starts", type=int, default=200)
    s.add_argument("--iterations", type=int, default=10_000)
    s.add_argument("--samples", type=int, default=10**6)
    s.add_argument("--tol", type=float, default=1e-3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--no-timing", action="store_true", help="write wall_time as 0 for byte-stable output")
    s.add_argument("--out")
    s.add_argument("--report")
    s.set_defaults(func=cmd_verify_matrix_lemma)

    s = sub.add_parser("verify-symmetric-lemma", help="nonnegativity sweep on the simplex")
    s.add_argument("--n", required=True, help="one value or a comma separated list")
    s.add_argument("--samples", type=int, default=10**4)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.add_argument("--report")
    s.set_defaults(func=cmd_verify_symmetric_lemma)

    s = sub.add_parser("norms", help="rearrangement norms of samples or a curvature report")
    s.add_argument("--input", help="CSV with columns value[,weight]")
    s.add_argument("--norm", action="append",
                   help="marcinkiewicz:q=2 | weak_log[:C=..] | lorentz:q=2;sigma=3 | lebesgue:q=2 (repeatable)")
    s.add_argument("--curve", help="circle:R=1 | stadium:L=1,R=0.5 | spike:c=0.25")
    s.add_argument("--radii", default="0.5,0.25,0.125,0.0625,0.03125,0.015625")
    s.add_argument("--samples", type=int, default=2**16)
    s.add_argument("--centers", type=int, default=512)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_norms)

    s = sub.add_parser("gallery", help="u = |x_1|^beta: flux stays regular, Hessian does not")
    s.add_argument("--beta", type=float, default=1.4)
    s.add_argument("--p", type=float, default=6.0)
    s.add_argument("--refine", type=int, default=4)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.add_argument("--report")
    s.set_defaults(func=cmd_gallery)

    s = sub.add_parser("sweep", help="coercivity and local-estimate sweep over p, domains and data")
    s.add_argument("--p", default="1.5,2,3,4.5")
    s.add_argument("--domains", default="square,disk")
    s.add_argument("--rhs", action="append", help="expression in x, y (repeatable; default: three smooth data)")
    s.add_argument("--h", default="1/32,1/64")
    s.add_argument("--no-local", action="store_true")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.add_argument("--report")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except (UsageError, ConfigError, DomainError, InvalidStructure) as exc:
        sys.stderr.write(f"fluxreg: error: {exc}\n")
        return EXIT_USAGE
    except FluxRegError as exc:
        report = {"error": type(exc).__name__, "message": str(exc), "passed": False}
        path = getattr(locals().get("args"), "report", None)
        _write_report(report, path, True)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
