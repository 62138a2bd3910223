"""Command-line entry point.

Exit codes::

    0  success
    2  configuration error (bad file, key or value; also argparse usage errors)
    3  an iteration did not converge
    4  numerical failure (non-finite iterate, unresolvable scale, stencil error)
    5  a verification or barrier check failed
    6  I/O error

Artifacts are written even when a run fails.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .barriers import build_barrier_sub, build_barrier_super, check_discrete_subsolution, \
    check_discrete_supersolution
from .config import RunConfig, parse_config, parse_expression
from .degeneracy import constant_theta
from .errors import ConfigurationError, EllipticityError, NonConvergenceError, \
    NumericalFailureError, ResolutionError, StencilError
from .grid import GridFunction, build_domain, fmt, read_csv, write_csv, write_pgm
from .regularity import analyze_regularity, c1alpha_certificate
from .solver import continuation
from .verification import large_gradient_pucci_check, oracle_one_phase, oracle_two_phase, \
    touch_test_subsolution, touch_test_supersolution

log = logging.getLogger("ftlab")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3
EXIT_NUMERICAL = 4
EXIT_VERIFICATION = 5
EXIT_IO = 6


class _Run:
    """Problem data and manifest bookkeeping shared by the subcommands."""

    def __init__(self, cfg: RunConfig, out: Path, command):
        self.cfg = cfg
        self.out = out
        self.command = command
        self.start = time.perf_counter()
        self.record = {}
        self.domain = build_domain(cfg.domain, cfg.operator.frames_for(cfg.domain.dim))
        ex = cfg.expressions()
        self.f = self.domain.sample(ex["f"])
        self.g = self.domain.sample(ex["g"])
        out.mkdir(parents=True, exist_ok=True)

    @property
    def C0(self):
        c = self.cfg.verification.C0
        return float(np.abs(self.f.values).max()) if c is None else c

    def grid(self, u: GridFunction, stem, column="value"):
        if "csv" in self.cfg.output.formats:
            write_csv(u, self.out / f"{stem}.csv", column)
        if "pgm" in self.cfg.output.formats and u.domain.dim == 2:
            write_pgm(u, self.out / f"{stem}.pgm")

    def table(self, name, rows):
        with open(self.out / name, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)

    def manifest(self, status, code):
        rec = {
            "command": self.command, "status": status, "exit_code": str(code),
            "seed": str(self.cfg.seed), "wall_time": fmt(time.perf_counter() - self.start),
            "ftlab": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__,
        }
        rec.update(self.record)
        lines = [self.cfg.to_ini(), "[manifest]"]
        lines += [f"{k} = {' '.join(str(v).split())}" for k, v in rec.items()]
        (self.out / "manifest.ini").write_text("\n".join(lines) + "\n")


def _diagnostic_rows(diag):
    rows = [["phase", "eps", "outer", "iteration", "residual", "delta"]]
    if diag is not None:
        for phase, eps, outer, it, res, delta in diag.trail:
            rows.append([phase, fmt(eps), str(outer), str(it), fmt(res), fmt(delta)])
    return rows


# --- subcommands ------------------------------------------------------------------

def run_solve(run: _Run, args):
    cfg = run.cfg
    try:
        u, diag = continuation(run.f, run.g, cfg.operator, cfg.degeneracy, cfg.solver,
                               floor=cfg.epsilon_floor)
    except (NonConvergenceError, NumericalFailureError) as exc:
        partial = exc.partial[-1] if isinstance(exc.partial, tuple) else exc.partial
        if isinstance(partial, GridFunction):
            run.grid(partial, "solution_partial")
        run.table("diagnostics.csv", _diagnostic_rows(exc.diagnostics))
        run.record["error"] = str(exc)
        raise
    run.grid(u, "solution")
    run.table("diagnostics.csv", _diagnostic_rows(diag))
    run.record.update({
        "certificate": fmt(diag.certificate), "roundoff_floor": fmt(diag.roundoff_floor),
        "continuation_steps": str(len(diag.epsilons)),
        "final_epsilon": fmt(diag.epsilons[-1]) if diag.epsilons else "nan",
        "cauchy": str(diag.cauchy).lower(), "warnings": str(len(diag.warnings)),
    })
    if cfg.data.exact:
        exact = run.domain.sample(parse_expression(cfg.data.exact))
        run.record["sup_error"] = fmt(np.abs(u.values - exact.values).max())
    return EXIT_OK


def _load_solution(run: _Run, args):
    if args.solution is None:
        raise ConfigurationError("this subcommand needs --solution PATH", "solution")
    path = Path(args.solution)
    if not path.is_file():
        raise FileNotFoundError(f"solution file {path} does not exist")
    run.record["solution"] = str(path)
    return read_csv(path, run.domain)


def run_verify(run: _Run, args):
    cfg = run.cfg
    u = _load_solution(run, args)
    C0, th2, op = run.C0, cfg.degeneracy.theta2, cfg.operator
    tc = cfg.verification.touching
    sub = touch_test_subsolution(u, C0, th2, op, tc)
    sup = touch_test_supersolution(u, C0, th2, op, tc)
    pucci = large_gradient_pucci_check(u, cfg.verification.gamma, C0, op.lam, op.Lam,
                                       cfg.verification.pucci_tol, op.frames,
                                       cfg.solver.gradient)
    run.table("touch_sub.csv", sub.rows())
    run.table("touch_super.csv", sup.rows())
    prow = [["node", "x", "P_minus", "P_plus"]]
    for n, a, b in zip(pucci.nodes, pucci.p_minus, pucci.p_plus):
        prow.append([str(int(n)), " ".join(fmt(c) for c in run.domain.coords[n]), fmt(a), fmt(b)])
    run.table("pucci.csv", prow)
    wit = [["test", "node", "x", "detail", "value"]]
    for rep in (sub, sup):
        for r in rep.failures:
            wit.append([rep.kind, str(r.node), " ".join(fmt(c) for c in r.x),
                        "margin", fmt(r.margin)])
    for n, x, side, v in pucci.violations:
        wit.append(["pucci", str(n), " ".join(fmt(c) for c in x), side, fmt(v)])
    if len(wit) > 1:
        run.table("witnesses.csv", wit)
    summary = [sub.summary(), sup.summary(), pucci.summary(), f"C0 = {fmt(C0)}"]
    (run.out / "verify_summary.txt").write_text("\n".join(summary) + "\n")
    ok = sub.passed and sup.passed and pucci.passed
    run.record.update({"C0": fmt(C0), "sub_pass_rate": fmt(sub.pass_rate),
                       "super_pass_rate": fmt(sup.pass_rate),
                       "pucci_violations": str(len(pucci.violations))})
    return EXIT_OK if ok else EXIT_VERIFICATION


def run_regularity(run: _Run, args):
    cfg = run.cfg
    r = cfg.regularity
    u = _load_solution(run, args)
    rep = analyze_regularity(u, cfg.degeneracy.theta2, cfg.alpha0, r.probes, r.rho, r.n_scales,
                             r.sign_tol, r.r0)
    run.table("regularity.csv", rep.rows())
    cert = [["tau", "alpha", "seminorm", "normalizer", "ratio", "pairs"]]
    for a in r.alphas:
        c = c1alpha_certificate(u, r.tau, a, run.C0, cfg.degeneracy.theta2)
        cert.append([fmt(c.tau), fmt(c.alpha), fmt(c.seminorm), fmt(c.normalizer), fmt(c.ratio),
                     str(c.pairs)])
    run.table("c1alpha.csv", cert)
    (run.out / "regularity_summary.txt").write_text(rep.summary() + "\n")
    run.record["probes"] = str(len(rep.probes))
    return EXIT_OK


def run_oracle(run: _Run, args):
    cfg = run.cfg
    p, kind = cfg.degeneracy, cfg.oracle.kind
    if kind == "one_phase":
        orc = oracle_one_phase(p.theta1, run.domain.dim)
        exprs = {"f": fmt(orc.f_value), "exact": f"|x|^{fmt(1 + orc.alpha)}"}
    else:
        width = cfg.oracle.width if kind == "two_phase_mollified" else 0.0
        if kind == "two_phase_mollified" and not width > 0:
            raise ConfigurationError("the mollified oracle needs width > 0", "oracle.width")
        orc = oracle_two_phase(p.theta1, p.theta2, width)
        exprs = {"exact": f"piecewise_sign(|x|^{fmt(1 + orc.alpha1)}, -|x|^{fmt(1 + orc.alpha2)})"}
        if width == 0:
            exprs["f"] = f"piecewise_sign({fmt(orc.f_plus)}, {fmt(orc.f_minus)})"
    u, f = orc.sample(run.domain)
    run.grid(u, "oracle_u")
    run.grid(f, "oracle_f")
    lines = [orc.formula] + [f"{k} = {v}" for k, v in exprs.items()]
    (run.out / "oracle.txt").write_text("\n".join(lines) + "\n")
    run.record["oracle"] = kind
    return EXIT_OK


def run_barriers(run: _Run, args):
    cfg = run.cfg
    op, k = cfg.operator, cfg.barriers.eta_levels
    hi, spec_hi = build_barrier_super(run.g, run.f, run.domain, op, k)
    lo, spec_lo = build_barrier_sub(run.g, run.f, run.domain, op, k)
    run.grid(hi, "barrier_super")
    run.grid(lo, "barrier_sub")
    lines = spec_hi.manifest_lines("super") + spec_lo.manifest_lines("sub")
    (run.out / "barrier_manifest.txt").write_text("\n".join(lines) + "\n")
    rows = [["side", "eps", "theta", "worst_margin", "tol", "passed"]]
    ok = True
    for eps in cfg.barriers.epsilons:
        for th in sorted({cfg.degeneracy.theta1, cfg.degeneracy.theta2}):
            theta = constant_theta(run.domain, th)
            for side, w, check in (("super", hi, check_discrete_supersolution),
                                   ("sub", lo, check_discrete_subsolution)):
                rep = check(w, eps, theta, run.f, op, gradient=cfg.solver.gradient)
                ok &= rep.passed
                rows.append([side, fmt(eps), fmt(th), fmt(rep.worst_margin), fmt(rep.tol),
                             str(int(rep.passed))])
    run.table("barrier_checks.csv", rows)
    run.record.update({"super_tightness": fmt(spec_hi.tightness),
                       "sub_tightness": fmt(spec_lo.tightness)})
    return EXIT_OK if ok else EXIT_VERIFICATION


COMMANDS = {"solve": run_solve, "verify": run_verify, "regularity": run_regularity,
            "oracle": run_oracle, "barriers": run_barriers}


def build_parser():
    parser = argparse.ArgumentParser(prog="ftlab", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"ftlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"solve": "run the continuation solver",
             "verify": "touching tests and the large-gradient check on a solution CSV",
             "regularity": "gradient Hoelder estimates on a solution CSV",
             "oracle": "write a closed-form solution to CSV",
             "barriers": "write global barriers and their constants"}
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides output.directory)")
        p.add_argument("--seed", type=int, metavar="N", help="overrides run.seed")
        p.add_argument("--solution", metavar="PATH", help="solution CSV (verify, regularity)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _apply_overrides(cfg: RunConfig, args):
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = dataclasses.replace(cfg, output=dataclasses.replace(cfg.output, directory=args.out))
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    run = None
    try:
        cfg = _apply_overrides(parse_config(args.config), args)
        run = _Run(cfg, Path(cfg.output.directory), args.command)
        code = COMMANDS[args.command](run, args)
        status = "ok" if code == EXIT_OK else "check failed"
    except ConfigurationError as exc:
        code, status = EXIT_CONFIG, f"configuration error: {exc}"
    except NonConvergenceError as exc:
        code, status = EXIT_NONCONVERGENCE, f"no convergence: {exc}"
    except (NumericalFailureError, ResolutionError, StencilError, EllipticityError,
            FloatingPointError) as exc:
        code, status = EXIT_NUMERICAL, f"numerical failure: {exc}"
    except OSError as exc:
        code, status = EXIT_IO, f"I/O error: {exc}"
    if code != EXIT_OK:
        print(f"ftlab {args.command}: {status}", file=sys.stderr)
    if run is not None:
        try:
            run.manifest(status, code)
        except OSError as exc:
            print(f"ftlab: cannot write manifest: {exc}", file=sys.stderr)
            code = EXIT_IO
    return code


if __name__ == "__main__":
    sys.exit(main())
