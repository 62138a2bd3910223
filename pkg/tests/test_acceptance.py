"""Acceptance criteria 1-9, one PASS/FAIL line each (also repeated in the terminal summary)."""

import math
import time
from functools import lru_cache

import numpy as np

from conftest import record_criterion
from ftlab.barriers import (build_barrier_sub, build_barrier_super, check_discrete_subsolution,
                            check_discrete_supersolution)
from ftlab.degeneracy import DegeneracyParams, constant_theta, theta_field
from ftlab.errors import ComparisonViolation, ConfigurationError, EllipticityError
from ftlab.grid import DomainSpec, GridFunction, build_domain, write_csv
from ftlab.operators import EllipticOperatorSpec, check_uniform_ellipticity
from ftlab.regularity import c1alpha_certificate, estimate_gradient_holder, extract_free_boundary
from ftlab.scaling import scale_problem
from ftlab.solver import SolveConfig, continuation, solve_regularized
from ftlab.verification import (TouchingTestConfig, comparison_domain, comparison_harness,
                                large_gradient_pucci_check, oracle_one_phase, oracle_two_phase,
                                touch_test_subsolution, touch_test_supersolution)

TRACE = EllipticOperatorSpec("negative_trace")
ONE_PHASE = DegeneracyParams(1.0, 1.0, allow_equal=True)
TWO_PHASE = DegeneracyParams(1.0, 3.0)


def _interval(h):
    return build_domain(DomainSpec("interval", 1, h))


def _one_phase_run(h):
    dom = _interval(h)
    exact, f = oracle_one_phase(1.0).sample(dom)
    g = dom.sample(lambda x: np.abs(x[:, 0]) ** 1.5)
    t0 = time.perf_counter()
    u, diag = continuation(f, g, TRACE, ONE_PHASE, SolveConfig())
    return u, f, exact, diag, time.perf_counter() - t0


def _two_phase_run(h):
    dom = _interval(h)
    orc = oracle_two_phase(1, 3)
    exact, f = orc.sample(dom)
    t0 = time.perf_counter()
    u, diag = continuation(f, exact, TRACE, TWO_PHASE, SolveConfig())
    return u, f, exact, diag, time.perf_counter() - t0


one_phase_run = lru_cache(maxsize=None)(_one_phase_run)
two_phase_run = lru_cache(maxsize=None)(_two_phase_run)


def _touch_pair(u, f, theta2, seed=0):
    C0 = float(np.abs(f.values).max())
    cfg = TouchingTestConfig(sample_count=500, seed=seed)  # tol_touch defaults to h^(1/2)
    return (touch_test_subsolution(u, C0, theta2, TRACE, cfg),
            touch_test_supersolution(u, C0, theta2, TRACE, cfg))


def _interior_probe(u, fb_x):
    """Centre of the positive phase; radii from half the distance to the free boundary."""
    x = u.domain.coords[:, 0]
    pos = x[u.values > 0]
    x0 = 0.5 * (pos.min() + pos.max())
    r0 = 0.5 * min(abs(x0 - fb_x), pos.max() - x0)
    n = max(3, int(math.floor(math.log2(r0 / (4 * u.domain.h)))))
    return estimate_gradient_holder(u, x0, 0.5, n, r0)


def test_criterion_1_one_phase_exponent():
    u, f, exact, diag, secs = one_phase_run(1 / 128)
    err = float(np.abs(u.values - exact.values).max())
    fit = estimate_gradient_holder(u, 0.0)
    ok = err <= 0.02 and 0.45 <= fit.alpha_hat <= 0.55 and secs < 10
    record_criterion(1, ok, f"sup error {err:.4g} <= 0.02, alpha_hat at 0 = {fit.alpha_hat:.4f} "
                            f"in [0.45, 0.55], runtime {secs:.2f}s < 10s")
    assert ok


def test_criterion_2_two_phase_exponent():
    h = 1 / 256
    u, f, exact, diag, secs = two_phase_run(h)
    _, _, fb = extract_free_boundary(u)
    fb_x = u.domain.coords[fb, 0]
    loc = float(np.abs(fb_x).max()) if len(fb) else math.inf
    x_fb = float(fb_x[np.argmin(np.abs(fb_x))]) if len(fb) else 0.0
    r0 = 0.25
    fit_fb = estimate_gradient_holder(u, x_fb, 0.5, int(math.log2(r0 / (4 * h))), r0)
    fit_in = _interior_probe(u, x_fb)
    checks = {"location": loc <= 2 * h, "fb": 0.20 <= fit_fb.alpha_hat <= 0.32,
              "interior": 0.45 <= fit_in.alpha_hat <= 1.0, "runtime": secs < 30}
    ok = all(checks.values())
    record_criterion(2, ok, f"free boundary at |x| <= {loc:.4g} (need <= 2h = {2 * h:.4g}); "
                            f"alpha_hat at free boundary {fit_fb.alpha_hat:.4f} (need [0.20, 0.32]); "
                            f"interior alpha_hat {fit_in.alpha_hat:.4f} (raw {fit_in.alpha_raw:.4f}, "
                            f"need [0.45, 1.0]); runtime {secs:.2f}s < 30s; "
                            f"failed parts: {[k for k, v in checks.items() if not v]}")
    assert ok


def test_criterion_3_touching_on_solver_output():
    rates = {}
    for name, run, theta2 in (("one-phase", one_phase_run, 1.0), ("two-phase", two_phase_run, 3.0)):
        u, f, *_ = run(1 / 64)
        sub, sup = _touch_pair(u, f, theta2)
        rates[name] = (sub.pass_rate, sub.evaluations, sup.pass_rate, sup.evaluations)
    ok = all(r[0] == 1.0 and r[2] == 1.0 and r[1] > 0 and r[3] > 0 for r in rates.values())
    detail = "; ".join(f"{k}: sub {r[0]:.4f} over {r[1]}, super {r[2]:.4f} over {r[3]}"
                       for k, r in rates.items())
    record_criterion(3, ok, detail + ", h = 1/64, tol = h^(1/2)")
    assert ok


def test_criterion_4_discrete_comparison():
    margins, violations, pairs = [], 0, 0
    for dim in (1, 2):
        dom = comparison_domain(dim)
        for k, eps in enumerate((0.1, 0.01)):
            try:
                rep = comparison_harness(dom, TRACE, TWO_PHASE, eps, 50, seed=100 * dim + k)
                margins.append(rep.min_margin)
                pairs += rep.trials
            except ComparisonViolation as exc:
                violations += 1
                margins.append(-math.inf)
                print(exc)
    ok = violations == 0 and min(margins) >= 0
    record_criterion(4, ok, f"{pairs} ordered pairs (1D 33 nodes, 2D 17x17, eps 0.1 and 0.01), "
                            f"{violations} violations, min interior margin {min(margins):.4g}")
    assert ok


def _random_field(dom, rng):
    k = rng.normal(size=(4, 2)) * 2
    ph = rng.uniform(0, 2 * np.pi, 4)
    a = rng.normal(size=4)
    return (a[None, :] * np.sin(dom.coords @ k.T + ph[None, :])).sum(axis=1)


def _enclosure(kind, lam, Lam):
    dom = build_domain(DomainSpec("ball", 2, 1 / 32))
    op = EllipticOperatorSpec(kind, lam, Lam)
    rng = np.random.default_rng(5)
    worst_lo = worst_hi = math.inf
    super_ok = True
    for _ in range(10):
        g = GridFunction(dom, _random_field(dom, rng))
        fv = _random_field(dom, rng)
        f = GridFunction(dom, fv / np.abs(fv).max() * rng.uniform(0.1, 1.0))
        hi, _ = build_barrier_super(g, f, dom, op)
        lo, _ = build_barrier_sub(g, f, dom, op)
        v = dom.sample(lambda x: rng.normal() * x[:, 0])
        for eps in (0.5, 0.1, 0.02):
            # the mollifier radius cannot drop below the grid spacing
            th = theta_field(v, TWO_PHASE.with_epsilon(max(eps, dom.h)))
            super_ok &= check_discrete_supersolution(hi, eps, th, f, op).passed
            u, _ = solve_regularized(v, eps, f, g, op, SolveConfig(), theta=th)
            worst_lo = min(worst_lo, float((u.values - lo.values).min()))
            worst_hi = min(worst_hi, float((hi.values - u.values).min()))
    return super_ok, worst_lo, worst_hi


def test_criterion_5_barrier_enclosure():
    parts, ok = [], True
    for kind, lam, Lam in (("negative_trace", 1.0, 1.0), ("pucci_plus", 1.0, 2.0)):
        super_ok, lo, hi = _enclosure(kind, lam, Lam)
        ok &= super_ok and lo >= -1e-9 and hi >= -1e-9
        parts.append(f"{kind}: min(u - w_sub) = {lo:.3g}, min(w_super - u) = {hi:.3g}, "
                     f"supersolution check {'passed' if super_ok else 'failed'}")
    record_criterion(5, ok, "10 trials x eps (0.5, 0.1, 0.02) on the unit disc, h = 1/32; "
                     + "; ".join(parts))
    assert ok


def test_criterion_6_scaling_identity():
    dom = build_domain(DomainSpec("box", 2, 1 / 16))
    u = dom.sample(lambda x: x[:, 0] * x[:, 1])
    results = []
    for kind, lam, Lam in (("negative_trace", 1, 2), ("pucci_plus", 1, 2), ("pucci_minus", 1, 2),
                           ("convex_combination", 1, 2)):
        _, c = scale_problem(u, 1.0, 0.5, 3.0, op=EllipticOperatorSpec(kind, lam, Lam))
        rep = check_uniform_ellipticity(c.operator, 1000, seed=6, dim=2)
        results.append((abs(c.K - 2) <= 1e-12, abs(c.C0_bar - 0.125) <= 1e-12, rep.passed))
    _, c = scale_problem(u, 1.0, 0.5, 3.0)
    ok = all(all(r) for r in results)
    record_criterion(6, ok, f"K = {c.K!r}, C0_bar = {c.C0_bar!r}; scaled operators of four kinds "
                            f"pass the ellipticity check on 1000 samples: {all(r[2] for r in results)}")
    assert ok


def test_criterion_7_certificate_stability():
    orc = oracle_two_phase(1, 3)
    ratios = {0.25: [], 0.5: []}
    for h in (1 / 64, 1 / 128, 1 / 256):
        u, _ = orc.sample(_interval(h))
        for a in ratios:
            ratios[a].append(c1alpha_certificate(u, 0.5, a, orc.C0, 3.0).ratio)
    q = ratios[0.25]
    spread = max(q) / min(q)
    growth = [b / a for a, b in zip(ratios[0.5], ratios[0.5][1:])]
    ok = spread < 2 and min(growth) >= 1.15
    record_criterion(7, ok, f"alpha=1/4 ratios {', '.join(f'{r:.4f}' for r in q)} (spread {spread:.3f} < 2); "
                            f"alpha=1/2 growth per halving {', '.join(f'{g:.3f}' for g in growth)} (>= 1.15)")
    assert ok


def _negative_controls():
    found = {}
    dom = build_domain(DomainSpec("box", 2, 1 / 16))
    cfg = TouchingTestConfig(sample_count=500)
    concave = dom.sample(lambda x: -(x ** 2).sum(axis=1))
    convex = dom.sample(lambda x: (x ** 2).sum(axis=1))
    found["touch sub on -|x|^2"] = len(touch_test_subsolution(concave, 0.0, 3.0, TRACE, cfg).failures)
    found["touch super on |x|^2"] = len(touch_test_supersolution(convex, 0.0, 3.0, TRACE, cfg).failures)
    found["Pucci on |x|^2"] = len(large_gradient_pucci_check(convex, 0.5, 0.0, 1, 1, tol=1e-9).violations)
    one = dom.sample(lambda x: np.ones(len(x)))
    found["supersolution w=0, f=1"] = len(
        check_discrete_supersolution(dom.zeros(), 0.3, constant_theta(dom, 1.0), one, TRACE).violations)
    found["subsolution w=0, f=-1"] = len(
        check_discrete_subsolution(dom.zeros(), 0.3, constant_theta(dom, 1.0), -one.values, TRACE).violations)
    try:
        comparison_harness(comparison_domain(1), TRACE, TWO_PHASE, 0.1, 1, delta_f=-0.1, delta_g=0.0)
        found["reversed comparison pair"] = 0
    except ComparisonViolation as exc:
        found["reversed comparison pair"] = int(exc.witness is not None)
    try:
        check_uniform_ellipticity(EllipticOperatorSpec("negative_trace", 2, 2), 100, dim=1)
        found["ellipticity (2, 2) in d=1"] = 0
    except EllipticityError as exc:
        found["ellipticity (2, 2) in d=1"] = int(exc.witness is not None)
    try:
        EllipticOperatorSpec("negative_trace", 2, 1)
        found["declaration (2, d) in d=1"] = 0
    except ConfigurationError:
        found["declaration (2, d) in d=1"] = 1
    return found


def test_criterion_8_negative_controls():
    found = _negative_controls()
    ok = all(v >= 1 for v in found.values())
    record_criterion(8, ok, "; ".join(f"{k}: {v}" for k, v in found.items()))
    assert ok


def _artifacts(out):
    out.mkdir()
    u1, *_ = _one_phase_run(1 / 128)
    write_csv(u1, out / "c1_solution.csv")
    u2, *_ = _two_phase_run(1 / 256)
    write_csv(u2, out / "c2_solution.csv")
    for name, run, theta2 in (("one", _one_phase_run, 1.0), ("two", _two_phase_run, 3.0)):
        u, f, *_ = run(1 / 64)
        write_csv(u, out / f"c3_{name}.csv")
        for rep in _touch_pair(u, f, theta2, seed=3):
            (out / f"c3_{name}_{rep.kind}.csv").write_text("\n".join(",".join(r) for r in rep.rows()))
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def test_criterion_9_determinism(tmp_path):
    a = _artifacts(tmp_path / "a")
    b = _artifacts(tmp_path / "b")
    same = [k for k in a if a[k] == b.get(k)]
    ok = a.keys() == b.keys() and len(same) == len(a)
    record_criterion(9, ok, f"{len(same)}/{len(a)} artifacts byte-identical across two runs")
    assert ok
