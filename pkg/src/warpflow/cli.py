"""Command-line front end.

Every command writes its artifacts under ``--out`` (default ``out/``), prints a
short summary, and exits 0 only if all of its checks pass.  A key=value file
given with ``--config`` supplies defaults; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from . import constants as C
from . import flow as FL
from . import reporting as rep
from . import rigidity as RG
from .geometry import build_manifold, rho
from .params import ParameterSet, spectral_bound
from .specparse import SpecParseError, parse_manifold

COMMANDS = ("geom", "constants", "flow", "rigidity", "inequality", "sweep")


def _floats(text: str) -> list[float]:
    return [float(x) for x in str(text).split(",") if x.strip()]


def _u0(text: str) -> tuple[int, float]:
    """``mode:<k>,amp:<a>``."""
    out = {"mode": 1, "amp": 0.2}
    for part in str(text).split(","):
        key, _, val = part.partition(":")
        if key not in out or not val:
            raise argparse.ArgumentTypeError(f"bad --u0 item {part!r}; use mode:<k>,amp:<a>")
        out[key] = int(val) if key == "mode" else float(val)
    return out["mode"], out["amp"]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="warpflow", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("manifold", nargs="?", help="e.g. sphere:d=2, ring:d=2,logh=0;0.26,0, circle")
    common.add_argument("--config", help="key=value defaults file")
    common.add_argument("--grid", type=int, default=256)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default="out")
    common.add_argument("--tol", type=float, default=1e-3, help="optimizer slack for checks")
    common.add_argument("--starts", type=int, default=32)

    sub.add_parser("geom", parents=[common], help="grid, curvature and first eigenvalue")
    p = sub.add_parser("constants", parents=[common], help="constants chain at one p")
    p.add_argument("--p", type=float, default=3.0)
    p = sub.add_parser("flow", parents=[common], help="run the diffusion flow")
    p.add_argument("--p", type=float, default=3.0)
    p.add_argument("--lambda", dest="lam", type=float, default=1.9)
    p.add_argument("--u0", type=_u0, default=(1, 0.2))
    p.add_argument("--tmax", type=float, default=50.0)
    p.add_argument("--sample", type=float, default=0.05)
    p.add_argument("--branch", choices=["+", "-"], default="+", help="beta root for d = 1")
    p = sub.add_parser("rigidity", parents=[common], help="continuation and multistart probe")
    p.add_argument("--p", type=float, default=3.0)
    p.add_argument("--lambda-from", dest="lam_from", type=float, default=1.0)
    p.add_argument("--lambda-to", dest="lam_to", type=float, default=2.2)
    p.add_argument("--steps", type=int, default=40)
    p.add_argument("--probe", type=float, default=None, help="lambda for the multistart probe")
    p.add_argument("--probe-starts", type=int, default=20)
    p.add_argument("--profiles", action="store_true", help="write theta,v files per solution")
    p = sub.add_parser("inequality", parents=[common], help="best interpolation constant")
    p.add_argument("--p", type=float, default=3.0)
    p = sub.add_parser("sweep", parents=[common], help="constants for a list of p")
    p.add_argument("--p", type=_floats, default=[1.5, 3.0])
    p.add_argument("--jobs", type=int, default=1)
    return ap


def parse_args(argv: Optional[list[str]] = None) -> argparse.Namespace:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.config:
        conf = rep.read_kv(Path(args.config))
        sub = ap._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in sub._actions}
        defaults = {}
        for k, v in conf.items():
            dest = {"lambda": "lam", "lambda-from": "lam_from", "lambda-to": "lam_to"}.get(k, k)
            dest = dest.replace("-", "_")
            if dest not in known:
                ap.error(f"{args.config}: unknown key {k!r} for {args.command}")
            act = known[dest]
            defaults[dest] = act.type(v) if act.type else (v if act.nargs != 0 else v == "true")
        sub.set_defaults(**defaults)
        args = ap.parse_args(argv)
    if args.manifold is None:
        ap.error("a manifold spec is required (argument or 'manifold' in --config)")
    if args.grid < 16:
        ap.error("--grid must be at least 16")
    if args.tol <= 0:
        ap.error("--tol must be positive")
    return args


def _config_echo(args) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in ("config",):
            continue
        out[k] = ",".join(str(x) for x in v) if isinstance(v, (list, tuple)) else v
    return out


class Run:
    """Shared state of a command: manifold, header, checks, output directory."""

    def __init__(self, args):
        self.args = args
        self.spec = parse_manifold(args.manifold, args.grid)
        self.m = build_manifold(self.spec)
        self.out = Path(args.out)
        self.head = rep.header(args.command, _config_echo(args), self.spec.name, args.grid, args.seed)
        self.checks: dict[str, bool] = {}
        self.summary: dict = {}

    def check(self, name: str, ok: bool) -> None:
        self.checks[name] = bool(ok)

    def write(self, name: str, text: str) -> None:
        rep.write(self.out / name, text)

    def finish(self) -> int:
        self.write(f"{self.args.command}_checks.txt", rep.kv_text(self.head, {}) +
                   rep.check_lines(self.checks))
        for k, v in self.summary.items():
            print(f"{k} = {rep.fmt(v)}")
        failed = [k for k, v in self.checks.items() if not v]
        for k, v in self.checks.items():
            print(f"[{'PASS' if v else 'FAIL'}] {k}")
        if failed:
            print(json.dumps({"failed": failed}), file=sys.stderr)
            return 1
        return 0


def cmd_geom(r: Run) -> None:
    m = r.m
    pair = C.lambda1_pair(m)
    raw_volume = float(np.sum(m.h ** (m.d - 1)) * m.dtheta)
    mid = m.h ** (m.d - 1) * m.dtheta / raw_volume
    s = r.summary
    s.update(d=m.d, N=m.n, rho=rho(m), lambda1=pair.value)
    if m.d >= 2:
        s.update(ricci_radial_min=m.ricci_radial.min(), ricci_radial_max=m.ricci_radial.max(),
                 ricci_tangential_min=m.ricci_tangential.min(),
                 ricci_tangential_max=m.ricci_tangential.max())
        ric = np.concatenate([m.ricci_radial, m.ricci_tangential])
        s["ricci_sign_changing"] = bool(ric.min() < 0 < ric.max())
    s.update(volume_profile=raw_volume, weight_sum=float(m.weight.sum()),
             weight_vs_midpoint_max=float(np.max(np.abs(m.weight - mid))))
    r.check("weights_positive", bool(np.all(m.weight > 0)))
    r.check("weights_normalized", abs(s["weight_sum"] - 1.0) < 1e-12)
    r.check("lambda1_positive", pair.value > 0)
    r.write("geom.txt", rep.kv_text(r.head, s))


def _constants(spec_text: str, grid: int, p: float, seed: int, starts: int, tol: float):
    """One sweep job; failures come back as the error text so the sweep can go on."""
    m = build_manifold(parse_manifold(spec_text, grid))
    try:
        return C.estimates_chain(m, p, seed, starts, optimizer_tol=tol)
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        return f"{type(exc).__name__}: {exc}"


def _report_items(report: C.ConstantsReport) -> dict:
    items = report.row()
    items["spectralLowerBound"] = report.spectralLowerBound
    for k, v in report.richardson.items():
        items[f"richardson.{k}"] = v
    for k, v in report.provenance.items():
        items[f"provenance.{k}"] = v
    items["status"] = "ok" if report.ok else "chain_violation"
    for i, dg in enumerate(report.diagnostics):
        items[f"diagnostic.{i}"] = json.dumps(dg, sort_keys=True)
    return items


def cmd_constants(r: Run) -> None:
    a = r.args
    report = C.estimates_chain(r.m, a.p, a.seed, a.starts, optimizer_tol=a.tol)
    r.write("constants.csv", rep.csv_text(r.head, C.REPORT_COLUMNS,
                                          [[report.row()[c] for c in C.REPORT_COLUMNS]]))
    items = _report_items(report)
    r.write("constants.txt", rep.kv_text(r.head, items))
    r.summary.update({k: items[k] for k in C.REPORT_COLUMNS[4:]})
    r.check("estimates_chain", report.ok)


def cmd_flow(r: Run) -> None:
    a, m = r.args, r.m
    ps = ParameterSet.choice(m.d, a.p, lam=a.lam, branch=a.branch)
    mode, amp = a.u0
    u0 = FL.initial_profile(m, ps.beta, mode, amp)
    trace = FL.run_flow(m, ps, u0, FL.FlowControls(t_max=a.tmax, sample_interval=a.sample))
    head = r.head + [f"# beta={rep.fmt(ps.beta)} kappa={rep.fmt(ps.kappa)} theta={rep.fmt(ps.theta)}",
                     f"# status={trace.status}"]
    r.write("flow_trace.csv", rep.csv_text(head, FL.TRACE_COLUMNS,
                                           [s.as_tuple() for s in trace.samples]))
    f = trace.column("F")
    inc = float(np.max(np.diff(f))) if f.size > 1 else 0.0
    r.summary.update(status=trace.status, steps=trace.steps, t_end=trace.samples[-1].t,
                     F0=f[0], F_end=f[-1], max_F_increase=inc, mass_drift=trace.mass_drift,
                     dirichlet_end=trace.samples[-1].dirichlet, rejections=len(trace.rejections))
    r.check("mass_conserved", trace.mass_drift < 1e-8)
    r.check("F_nonincreasing", inc <= 1e-12 * abs(f[0]))
    r.check("converged", trace.converged)
    r.check("F_limit_nonnegative", f[-1] >= -1e-10)


def cmd_rigidity(r: Run) -> None:
    a, m = r.args, r.m
    br = RG.continuation(m, a.p, a.lam_from, a.lam_to, a.steps)
    rows = [(s.lam, s.deviation, s.residual_norm, s.branch) for s in br.solutions]
    r.write("branch.csv", rep.csv_text(r.head, ("lambda", "deviation", "residual", "branch"), rows))
    if a.profiles:
        for i, s in enumerate(br.solutions):
            r.write(f"profiles/solution_{i:03d}.csv",
                    rep.csv_text(r.head + [f"# lambda={rep.fmt(s.lam)}"], ("theta", "v"),
                                 zip(m.theta, s.v)))
    bif = br.bifurcation_estimate()
    r.summary.update(lambda1=br.lambda1, bifurcation=bif, branch_points=len(br.nonconstant()),
                     events=len(br.events))
    r.check("residuals", all(s.residual_norm < 1e-10 for s in br.solutions))
    if a.lam_to > br.lambda1 + 1e-3:
        r.check("bifurcation_at_lambda1", abs(bif - br.lambda1) < 1e-3)
        nc = br.nonconstant()
        r.check("nonconstant_branch", bool(nc) and nc[-1].deviation > 0.01)
    if a.probe is not None:
        pr = RG.rigidity_probe(m, a.p, a.probe, a.probe_starts, a.seed)
        rows = [(pr.lam, s.deviation, s.residual_norm, s.branch) for s in pr.solutions]
        r.write("probe.csv", rep.csv_text(r.head, ("lambda", "deviation", "residual", "branch"), rows))
        r.summary.update(probe_lambda=a.probe, probe_all_constant=pr.all_constant,
                         probe_failures=len(pr.failures))
        if a.probe < br.lambda1:
            r.check("probe_only_constant", pr.all_constant)


def cmd_inequality(r: Run) -> None:
    a, m = r.args, r.m
    est = RG.best_lambda_estimate(m, a.p, a.seed, a.starts)
    lam1 = C.lambda1(m)
    items = {"p": a.p, "lambda1": lam1, "bestLambda": est.value,
             "bestLambda_richardson": est.richardson, "near_constant": est.near_constant,
             "provenance": est.note("multistart L-BFGS on log v")}
    scale = max(1.0, lam1)
    r.check("best_le_lambda1", est.value <= lam1 + a.tol * scale)
    if m.d >= 2:
        ls = C.Lambda_star(m, a.p, a.seed, a.starts)
        items["LambdaStar"] = ls
        r.check("LambdaStar_le_best", ls <= est.value + a.tol * scale)
    if 1.0 < a.p < 2.0:
        l2 = C.log_sobolev_lambda2(m, a.seed, a.starts)
        items["logSobolevLambda2"] = l2
        items["spectralLowerBound"] = spectral_bound(a.p, lam1, l2)
    r.write("inequality.txt", rep.kv_text(r.head, items))
    r.summary.update({k: v for k, v in items.items() if k != "provenance"})


def cmd_sweep(r: Run) -> None:
    a = r.args
    jobs = [(a.manifold, a.grid, p, a.seed, a.starts, a.tol) for p in a.p]
    if a.jobs > 1:
        with ProcessPoolExecutor(a.jobs) as ex:
            reports = list(ex.map(_constants, *zip(*jobs)))
    else:
        reports = [_constants(*j) for j in jobs]
    cols = C.REPORT_COLUMNS + ("status",)
    rows = []
    for p, rp in zip(a.p, reports):
        if isinstance(rp, str):
            rows.append([r.spec.name, r.m.d, p, a.grid] + [None] * 8 + ["partial"])
            r.summary[f"error_p={rep.fmt(p)}"] = rp
            r.check(f"chain_p={rep.fmt(p)}", False)
            continue
        rows.append([rp.row()[c] for c in C.REPORT_COLUMNS] + ["ok" if rp.ok else "chain_violation"])
        r.check(f"chain_p={rep.fmt(p)}", rp.ok)
    r.write("sweep.csv", rep.csv_text(r.head, cols, rows))
    r.summary["rows"] = len(rows)


HANDLERS = {"geom": cmd_geom, "constants": cmd_constants, "flow": cmd_flow,
            "rigidity": cmd_rigidity, "inequality": cmd_inequality, "sweep": cmd_sweep}


def main(argv: Optional[list[str]] = None) -> int:
    args = parse_args(argv)
    try:
        run = Run(args)
        HANDLERS[args.command](run)
    except SpecParseError as exc:
        print(f"warpflow {args.command}: manifold spec error {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        print(f"warpflow {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return run.finish()


if __name__ == "__main__":
    sys.exit(main())
