"""The ten acceptance criteria at their stated tolerances, one PASS/FAIL line each."""

import filecmp
import math
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from polybubble.bubbles import CouplingData, synchronized_pairs, verify_sync_solution
from polybubble.cli import main
from polybubble.correction import first_iterate_study
from polybubble.geometry import PolygonConfig
from polybubble.pohozaev import bubble_pair, concentration_study, pohozaev_dilation, pohozaev_translation
from polybubble.potentials import builtin_potential
from polybubble.quadrature import QuadratureBudget, TubeDomain, constants_B_C
from polybubble.reduction import (ReducedState, interaction_brute, interaction_sum, newton_solve_reduced,
                                  reduced_degree, t_star)
from polybubble.residual import make_config, nonlinear_estimate_study, residual_scaling_study

ROOT = Path(__file__).resolve().parents[1]
C5 = CouplingData.from_beta(0.0, 5)
WELL5 = builtin_potential("well", {}, 5)


def report(n, ok, detail):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def newton_t(N=5, beta=0.0):
    c = CouplingData.from_beta(beta, N)
    pp = builtin_potential("well", {}, N)
    ts = t_star(pp, c)
    return newton_solve_reduced(ReducedState(1.2 * ts, 1.0, (0.0,) * (N - 2)), pp, c), ts, c, pp


def test_c01_synchronization():
    rng = np.random.default_rng(0)
    start = time.perf_counter()
    worst = 0.0
    count = 0
    for N in (5, 6):
        y = rng.normal(size=(1000, N)) * rng.uniform(0, 3, (1000, 1))
        for beta in (-0.25, 0.0, 0.5, 1.0):
            for c in synchronized_pairs(beta, N):
                worst = max(worst, verify_sync_solution(c, y))
                count += 1
    dt = time.perf_counter() - start
    report(1, worst < 1e-9 and dt < 1.0 and count >= 8,
           f"max residual {worst:.2e} over {count} pairs, {dt:.2f} s")


def test_c02_constants():
    start = time.perf_counter()
    errs = []
    k5 = constants_B_C(C5)
    closed = [abs(k5.B_w / (15**1.5 * math.pi**3 / 2) - 1), abs(k5.C_w / (15**2.5 * math.pi**3 / 32) - 1)]
    for N in (5, 6, 7, 8):
        k = constants_B_C(CouplingData.from_beta(0.0, N))
        errs += [abs(k.B_w_quadrature / k.B_w - 1), abs(k.C_w_quadrature / k.C_w - 1)]
    dt = time.perf_counter() - start
    worst = max(errs + closed)
    report(2, worst < 1e-8 and dt < 5.0, f"max rel error {worst:.2e}, {dt:.2f} s")


def test_c03_residual_decay():
    start = time.perf_counter()
    st, ts, c, pp = newton_t()
    fit = residual_scaling_study([6, 8, 12, 16, 24], st.t, pp, c, refine=4, threshold=-0.95)
    dt = time.perf_counter() - start
    stab = fit.extras["max_refine_change"]
    report(3, fit.slope <= -0.95 and stab < 0.02 and dt < 600,
           f"slope {fit.slope:.3f}, refinement change {stab:.2%}, {dt:.0f} s")


def test_c04_superlinearity():
    ts = t_star(WELL5, C5)
    cfg = make_config(6, ts, WELL5, C5)
    hs = [0.1 * 2.0**-i for i in range(1, 8)]
    spreads = {f: nonlinear_estimate_study(cfg, hs, f)["spread"] for f in ("ansatz", "dilation")}
    report(4, all(s < 3 for s in spreads.values()),
           "ratio spread " + ", ".join(f"{f} {s:.2f}x" for f, s in spreads.items()))


def test_c05_correction():
    ts = t_star(WELL5, C5)
    b = QuadratureBudget(n_samples=1 << 15)
    out = first_iterate_study([6, 8, 12], ts, WELL5, C5, b, threshold=-1.0, basis_budget=b)
    hb = max(r["half_bubble_ratio"] for r in out["reports"])
    report(5, out["slope_ok"] and out["half_bubble_ok"],
           f"slope {out['slope']:.3f} (ok={out['slope_ok']}), max |phi1|/(U/2) {hb:.2f} "
           f"(ok={out['half_bubble_ok']})")


def test_c06_reduced_system():
    rows = []
    ok = True
    for N in (5, 6):
        for beta in (0.0, 0.5):
            st, ts, c, pp = newton_t(N, beta)
            fn = float(np.linalg.norm(st.F))
            d1 = reduced_degree(pp, c, st, 0.2, (0.5 * ts, 2 * ts), resolution=16)
            d2 = reduced_degree(pp, c, st, 0.2, (0.5 * ts, 2 * ts), resolution=32)
            good = (st.converged and fn < 1e-10 and abs(st.t / ts - 1) < 1e-8 and d1["degree"]
                    and d1["degree"] == d2["degree"] and d1["agree"])
            ok &= bool(good)
            rows.append(f"N={N} beta={beta}: |F|={fn:.1e} deg={d1['degree']}")
    report(6, ok, "; ".join(rows))


def test_c07_pohozaev():
    ctr = np.array([1.0, 0.0, 0.2, 0.0, 0.0])
    b = QuadratureBudget(n_samples=1 << 18)
    exact, control = [], []
    for rho in (0.3, 0.35, 0.4):
        D = TubeDomain(1.0, (0.0, 0.0, 0.0), rho)
        for kap, dest in ((None, exact), (C5.kappa + 0.5, control)):
            f = bubble_pair(C5, ctr, 2.0, kap)
            dest.append(pohozaev_translation(f, None, D, 2, C5, b, ctr, 2.0).sigma)
            dest.append(pohozaev_dilation(f, None, D, C5, b, ctr, 2.0).sigma)
    report(7, max(exact) < 5 and min(control) > 10,
           f"exact max {max(exact):.2f} sigma, wrong-kappa min {min(control):.1f} sigma")


def test_c08_concentration():
    ts = t_star(WELL5, C5)
    out = concentration_study([6, 8, 12], ts, WELL5, C5, tol=0.15)
    ratios = [r["ratio"] for r in out["rows"]]
    report(8, out["passed"], "ratios " + ", ".join(f"{r:.4f}" for r in ratios) + f", monotone={out['monotone']}")


def test_c09_interaction():
    start = time.perf_counter()
    worst = 0.0
    for k in range(2, 129):
        cfg = PolygonConfig(k, 1.0, (0.0, 0.0, 0.0), 10.0, C5)
        worst = max(worst, abs(interaction_sum(k, 1.0, 10.0, 5)[1] / interaction_brute(cfg) - 1))
    dt = time.perf_counter() - start
    report(9, worst < 1e-13 and dt < 1.0, f"max rel error {worst:.1e} for k <= 128, {dt:.2f} s")


def test_c10_determinism(tmp_path):
    cfg = str(ROOT / "configs" / "well_n5.json")
    codes = [main(["full-audit", "--config", cfg, "--out", str(tmp_path / d)]) for d in ("a", "b")]
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    _, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", names, shallow=False)
    report(10, codes[0] == codes[1] and not mismatch and not errors and len(names) >= 9,
           f"{len(names)} files byte-identical, exit codes {codes}")
