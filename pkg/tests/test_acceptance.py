"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
"""

import math
import time
import warnings

import numpy as np
import pytest

from sgraph.exact import POLE_EPS, bk_inverse, bk_map, default_freq_grid, exact_sg
from sgraph.feedback import check_feedback
from sgraph.model import SweepConfig, StateSpace
from sgraph.presets import PRESETS
from sgraph.regions import (RegionSpec, SGApproximation, disk_distance, grid, invert_region,
                            make_pi, region_from_pi, set_distance)
from sgraph.sim import InputRanges, functionals, gain_phase, iqc_check, simulate
from sgraph.solve import (INFEASIBLE, OPTIMAL, TRIVIAL, gain_bound, solve_exterior,
                          solve_interior, sweep)

from conftest import first_order, sign_switching_pwl, third_order

pytestmark = pytest.mark.acceptance

EX1_WINDOW = (-0.5, 1.5, -1.0, 1.0)


def test_first_order_exactness(gate):
    t0 = time.perf_counter()
    worst_r = worst_p = 0.0
    for a in (0.5, 1.0, 2.0):
        lam = 1.0 / (2 * a)
        inner = solve_interior(first_order(a), lam)
        outer = solve_exterior(first_order(a), lam)
        assert inner.status == OPTIMAL and outer.status == OPTIMAL
        worst_r = max(worst_r, abs(inner.r - lam), abs(outer.r - lam))
        worst_p = max(worst_p, abs(inner.certificate.P[0, 0] - lam),
                      abs(outer.certificate.P[0, 0] + lam))
    secs = time.perf_counter() - t0
    ok = worst_r <= 1e-5 and worst_p <= 1e-4 and secs < 1.0
    gate(1, ok, f"max |r - 1/2a| = {worst_r:.2e}, max |P -+ 1/2a| = {worst_p:.2e}, {secs:.2f} s")
    assert ok


def test_example1_reproduction(sweeps, gate):
    t0 = time.perf_counter()
    res = sweeps.preset("paper-ex1")
    secs = time.perf_counter() - t0
    sys = third_order()
    approx = res.approximation
    G = sys.freqresp(default_freq_grid(sys, 1024))[:, 0, 0]
    curve = np.concatenate([G, np.conj(G)])
    nyq_bad = int((~approx.contains(curve)).sum())
    Z = grid(EX1_WINDOW, 512)
    ex = exact_sg(sys)
    inside = ex.contains(Z)
    hull_bad = int((inside & ~approx.contains(Z)).sum())
    ok = nyq_bad == 0 and hull_bad == 0 and inside.any() and secs < 120
    gate(2, ok, f"Nyquist violations {nyq_bad}/{curve.size}, exact-hull raster violations "
                f"{hull_bad}/{int(inside.sum())}, sweep {secs:.1f} s")
    assert ok


def _symmetric_difference(sys, window):
    g = gain_bound(sys)
    lams = tuple(np.round(np.linspace(-5 * g, 5 * g, 161), 12))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = sweep(sys, SweepConfig(lams, lams))
    Z = grid(window, 512)
    mine = res.approximation.contains(Z)
    exact = exact_sg(sys).contains(Z)
    return int((mine ^ exact).sum()), int(exact.sum())


def test_dense_grids_match_exact_region(gate):
    lines, ok = [], True
    for name, sys, window in (("1/(s+1)", first_order(1.0), (-0.2, 1.2, -0.7, 0.7)),
                              ("third-order", third_order(), EX1_WINDOW)):
        diff, area = _symmetric_difference(sys, window)
        # compared without dividing: a zero-area graph must leave zero difference cells
        ok &= diff <= 0.03 * area
        share = f"{100 * diff / area:.2f}%" if area else "zero-area graph"
        lines.append(f"{name} {diff}/{area} cells ({share})")
    gate(3, ok, "symmetric difference " + ", ".join(lines))
    assert ok


def test_reset_soundness_and_improvement(sweeps, clouds, gate):
    res = sweeps.preset("paper-ex2")
    approx = res.approximation
    sys = PRESETS["paper-ex2"].system()
    cloud = clouds.get("paper-ex2", sys, 500, 0)
    zs = cloud.points()
    outside = int((~approx.contains(zs)).sum())
    (base,) = [e for e in res.interior() if e.lambda_c == 0.0]
    r = base.r
    window = (-1.05 * r, 1.05 * r, -1.05 * r, 1.05 * r)
    Z = grid(window, 512)
    mine = approx.contains(Z)
    disk = RegionSpec.disk_in(0.0, r).contains(Z)
    carved = int((disk & ~mine).sum())
    leaks = int((mine & ~disk).sum())
    ok = (cloud.untrusted == 0 and outside == 0 and base.status == OPTIMAL and r < 1.0
          and leaks == 0 and carved > 0)
    gate(4, ok, f"samples outside {outside}/{zs.size} ({cloud.untrusted} untrusted), "
                f"bounded-real r = {r:.4f}, carved cells {carved}, leaking cells {leaks}")
    assert ok


def test_pwl_soundness(sweeps, clouds, gate):
    res = sweeps.preset("paper-ex3")
    approx = res.approximation
    sys = PRESETS["paper-ex3"].system()
    cloud = clouds.get("paper-ex3", sys, 500, 0)
    zs = cloud.points()
    outside = int((~approx.contains(zs)).sum())
    xmin, xmax, ymin, ymax = approx.bounding_box()
    pad = max(xmax - xmin, ymax - ymin, 1e-9)
    Z = grid((xmin - pad, xmax + pad, ymin - pad, ymax + pad), 256).ravel()
    meets = []
    for mode in sys.modes[:2]:
        ex = exact_sg(mode.ss)
        cand = np.concatenate([Z, ex.boundary_points()])
        meets.append(bool((approx.contains(cand) & ex.contains(cand)).any()))
    ok = cloud.untrusted == 0 and outside == 0 and all(meets)
    gate(5, ok, f"samples outside {outside}/{zs.size} ({cloud.untrusted} untrusted), "
                f"mode 1 meets region {meets[0]}, mode 2 meets region {meets[1]}, "
                f"region bounding box {np.round(approx.bounding_box(), 8).tolist()}")
    assert ok


CASES = {
    "a": ("paper-ex2", "paper-ex1", "separated", (0.25, 0.35), (2.5, 3.5)),
    "b": ("paper-ex3", "paper-ex1", "overlapping", None, None),
    "c": ("paper-ex3", "paper-ex2", "separated", (0.55, 0.75), (1.3, 1.8)),
}


def test_feedback_case_studies(sweeps, gate):
    approx = {name: sweeps.preset(name).approximation
              for name in ("paper-ex1", "paper-ex2", "paper-ex3")}
    t0 = time.perf_counter()
    lines, ok = [], True
    for case, (h1, h2, verdict, r_band, g_band) in CASES.items():
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            rep = check_feedback(approx[h1], approx[h2])
        good = rep.verdict == verdict
        if r_band is not None:
            good &= r_band[0] <= rep.r_min <= r_band[1]
            good &= rep.gain_bound is not None and g_band[0] <= rep.gain_bound <= g_band[1]
        ok &= good
        gain = "none" if rep.gain_bound is None else f"{rep.gain_bound:.3f}"
        want = verdict if r_band is None else f"{verdict}, r_min in {list(r_band)}, gain in {list(g_band)}"
        lines.append(f"({case}) {rep.verdict} r_min={rep.r_min:.3f} gain={gain}"
                     f"{' capped' if rep.capped else ''} [{'ok' if good else 'expected ' + want}]")
    secs = time.perf_counter() - t0
    ok &= secs < 300
    gate(6, ok, "; ".join(lines) + f"; {secs:.1f} s")
    assert ok


def test_hard_contains_soft(sweeps, gate):
    lines, ok = [], True
    for name in ("paper-ex1", "paper-ex2", "paper-ex3"):
        soft = sweeps.preset(name).approximation
        hard = sweeps.preset(name, hard=True).approximation
        Z = grid(PRESETS[name].window, 512)
        bad = int((soft.contains(Z) & ~hard.contains(Z)).sum())
        ok &= bad == 0
        lines.append(f"{name} violations {bad}")
    for a in (0.5, 1.0, 2.0):
        e = solve_exterior(first_order(a), 1.0 / (2 * a), hard=True)
        lost = e.status in (INFEASIBLE, TRIVIAL) or e.r < 1.0 / (2 * a) - 1e-3
        ok &= lost
        lines.append(f"a={a:g} hard exterior {e.status}")
    gate(7, ok, ", ".join(lines))
    assert ok


def _random_triple(rng, kind):
    if kind == "lti":
        m = int(rng.integers(1, 4))
        A = rng.normal(size=(m, m))
        A -= (np.linalg.eigvals(A).real.max() + rng.uniform(0.3, 2.0)) * np.eye(m)
        sys = StateSpace(A, rng.normal(size=(m, 1)), rng.normal(size=(1, m)),
                         rng.normal(size=(1, 1)) * 0.3)
    elif kind == "reset":
        sys = PRESETS["paper-ex2"].system()
    else:
        sys = sign_switching_pwl()
    inp = InputRanges(max_terms=6, freq=(0.1, 3.0), mu=(-0.8, -0.3)).draw(rng)
    return sys, inp


def test_iqc_sign_matches_membership(gate):
    rng = np.random.default_rng(2024)
    agree = total = 0
    stray = []
    for k in range(200):
        kind = ("lti", "reset", "pwl")[k % 3]
        sys, inp = _random_triple(rng, kind)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            tr = simulate(sys, inp, horizon=80.0, step=0.005)
        nu, ny, uy = functionals(tr, require_settled=False)
        rho, theta = gain_phase(nu, ny, uy)
        z = rho * complex(math.cos(theta), math.sin(theta))
        lam = float(rng.uniform(-2.0, 2.0))
        # radii cluster around the sample so a fair share sits near the boundary
        r = max(abs(z - lam) * math.exp(rng.normal(0.0, 0.1)), 1e-3)
        Pi = make_pi(int(rng.choice([-1, 1])), lam, r)
        member = bool(region_from_pi(Pi).contains(z))
        total += 1
        if iqc_check(tr, Pi) == member:
            agree += 1
        else:
            band = 1e-6 * (1.0 + nu ** 2 + ny ** 2) / nu ** 2 + 1e-9
            if abs(Pi.quad(z)) > band:
                stray.append(k)
    ok = agree >= 0.99 * total and not stray
    gate(8, ok, f"agreement {agree}/{total}, disagreements outside the tolerance band {len(stray)}")
    assert ok


def _fit_circle(w):
    # algebraic least squares: |w|^2 + D x + E y + F = 0
    M = np.column_stack([w.real, w.imag, np.ones(w.size)])
    D, E, F = np.linalg.lstsq(M, -np.abs(w) ** 2, rcond=None)[0]
    c = complex(-D / 2, -E / 2)
    return c, math.sqrt(abs(c) ** 2 - F)


def test_geometry_properties(gate):
    rng = np.random.default_rng(99)
    # uniform on |z| <= 100, off the real axis and away from the pole w = 1
    z = 100 * np.sqrt(rng.uniform(0, 1, 20_000)) * np.exp(2j * np.pi * rng.uniform(0, 1, 20_000))
    z = z[(z.imag != 0) & (np.abs(bk_map(z) - 1) >= POLE_EPS)][:10_000]
    assert z.size == 10_000
    up, low = bk_inverse(bk_map(z))
    err = np.abs(np.where(z.imag > 0, up, low) - z)
    bk_err = float(err.max())
    bk_over = int((err >= 1e-10).sum())

    fit_err = 0.0
    done = 0
    while done < 100:
        lam, r = rng.uniform(-3, 3), rng.uniform(0.1, 3)
        if abs(abs(lam) - r) < 0.05:
            continue
        region = RegionSpec.disk_in(lam, r) if done % 2 == 0 else RegionSpec.disk_out(lam, r)
        inv = invert_region(region)
        w = 1.0 / np.conj(lam + r * np.exp(2j * np.pi * np.arange(64) / 64))
        c, rad = _fit_circle(w)
        scale = max(1.0, abs(inv.lambda_c) + inv.r)
        fit_err = max(fit_err, abs(c - inv.lambda_c) / scale, abs(rad - inv.r) / scale,
                      float(np.max(np.abs(np.abs(w - inv.lambda_c) - inv.r))) / scale)
        done += 1

    window = (-4.0, 4.0, -4.0, 4.0)
    sym_err = cross_err = 0.0
    spacing = None
    for _ in range(10):
        a = RegionSpec.disk_in(rng.uniform(-3, -0.5), rng.uniform(0.2, 0.8))
        b = RegionSpec.disk_in(rng.uniform(0.5, 3), rng.uniform(0.2, 0.8))
        A, B = SGApproximation((a,)), SGApproximation((b,))
        ab, ba = set_distance(A, B, window, 512), set_distance(B, A, window, 512)
        spacing = ab.spacing
        sym_err = max(sym_err, abs(ab.value - ba.value))
        cross_err = max(cross_err, abs(ab.value - disk_distance(a, b)))
    ok = bk_err < 1e-10 and fit_err < 1e-8 and sym_err < spacing and cross_err < spacing
    gate(9, ok, f"BK round trip max {bk_err:.1e} ({bk_over}/10000 at or above 1e-10), inverse circle fit {fit_err:.1e}, "
                f"distance asymmetry {sym_err:.1e}, disk-disk error {cross_err:.1e} "
                f"(spacing {spacing:.1e})")
    assert ok
