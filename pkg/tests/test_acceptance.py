"""Acceptance criteria, one test per criterion.

Each test prints a single pass/fail line (visible with ``pytest -s``) and
asserts the criterion at its stated tolerance.  Tolerances are fixed here,
not calibrated against the implementation.
"""

import json
import math
import time

import numpy as np
import pytest

import ns3d as m
from ns3d.cli import main as cli_main
from ns3d.harness import RunConfig, run

from conftest import random_divfree_field, random_gradient_field, random_raw_field

C = m.ConstantsSet()


def _criterion(num, description, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    suffix = f"  [{detail}]" if detail else ""
    print(f"[{status}] criterion {num:02d}: {description}{suffix}")
    assert ok, f"criterion {num} failed: {description} {detail}"


def test_c01_closed_form_decay_oracle():
    t0 = time.perf_counter()
    worst = 0.0
    for scheme in (m.SEMI_IMPLICIT, m.FULLY_IMPLICIT):
        report = run(
            RunConfig(
                n=16,
                scheme=m.SchemeConfig(k=0.01, nu=1.0, scheme=scheme),
                initial=m.Shear(1.0),
                forcing=m.Zero(),
                n_steps=100,
                monitor="none",
            )
        )
        l2_0 = math.sqrt(4 * math.pi**3)
        for row in report.rows:
            exact = l2_0 / 1.01**row.n
            err = abs(math.sqrt(row.norms.l2_sq) - exact) / exact
            worst = max(worst, err)
    elapsed = time.perf_counter() - t0
    _criterion(
        1,
        "closed-form shear decay matches both schemes to 1e-10",
        worst <= 1e-10 and elapsed < 5.0,
        f"max rel err {worst:.2e}, {elapsed:.2f}s",
    )


def test_c02_skew_symmetry():
    t0 = time.perf_counter()
    grid = m.Grid(16)
    worst = 0.0
    for i in range(100):
        u = random_divfree_field(grid, seed=1000 + i)
        v = random_divfree_field(grid, seed=2000 + i)
        val = abs(m.inner(m.nonlinear_term(u, v), v))
        nu_, nv = m.norms(u), m.norms(v)
        scale = math.sqrt(nu_.l2_sq) * math.sqrt(nv.h1_sq) * math.sqrt(nv.l2_sq)
        worst = max(worst, val / scale)
    elapsed = time.perf_counter() - t0
    _criterion(
        2,
        "advection is orthogonal to the advected field (100 random pairs)",
        worst <= 1e-10 and elapsed < 10.0,
        f"max normalized {worst:.2e}, {elapsed:.2f}s",
    )


def test_c03_leray_projector():
    grid = m.Grid(16)
    worst_idem = 0.0
    worst_grad = 0.0
    for i in range(100):
        w = random_raw_field(grid, seed=3000 + i)
        pw = m.project_leray(w)
        ppw = m.project_leray(pw)
        scale = float(np.max(np.abs(w.coeffs)))
        worst_idem = max(
            worst_idem, float(np.max(np.abs(ppw.coeffs - pw.coeffs))) / scale
        )
        g = random_gradient_field(grid, seed=4000 + i)
        pg = m.project_leray(g)
        worst_grad = max(
            worst_grad,
            float(np.max(np.abs(pg.coeffs))) / float(np.max(np.abs(g.coeffs))),
        )
    _criterion(
        3,
        "projector idempotence and gradient annihilation to 1e-12 (100 fields)",
        worst_idem <= 1e-12 and worst_grad <= 1e-12,
        f"idem {worst_idem:.2e}, grad {worst_grad:.2e}",
    )


def test_c04_energy_identity_200_steps():
    worst = 0.0
    for scheme in (m.SEMI_IMPLICIT, m.FULLY_IMPLICIT):
        report = run(
            RunConfig(
                n=16,
                scheme=m.SchemeConfig(k=0.01, nu=1.0, scheme=scheme),
                initial=m.RandomDivFree(seed=5, slope=-1.0, amplitude=0.2),
                forcing=m.RandomDivFree(seed=6, slope=-1.0, amplitude=0.02),
                n_steps=200,
                monitor="none",
            )
        )
        assert len(report.rows) == 200
        worst = max(worst, max(row.energy_residual for row in report.rows))
    _criterion(
        4,
        "per-step energy identity residual <= 1e-9 over 200 steps, both schemes",
        worst <= 1e-9,
        f"max residual {worst:.2e}",
    )


def test_c05_small_data_monitor_semi():
    t0 = time.perf_counter()
    config = RunConfig(
        n=16,
        scheme=m.SchemeConfig(k=0.01, nu=1.0, scheme=m.SEMI_IMPLICIT),
        initial=m.RandomDivFree(seed=11, slope=-1.0, amplitude=0.05),
        forcing=m.Zero(),
        t_end=10.0,
        n_steps=None,
        monitor="semi_small",
    )
    report = run(config)
    elapsed = time.perf_counter() - t0
    violations = sum(0 if row.verdict.bound.ok else 1 for row in report.rows)
    ceiling = report.bounds.K1 + (2 * 0.01 / 1.0) * report.bounds.f_l2_sup_sq
    worst = max(row.norms.h1_sq for row in report.rows)
    _criterion(
        5,
        "small-data gradient ceiling holds at every step over T=10",
        report.termination == "completed"
        and len(report.rows) == 1000
        and violations == 0
        and elapsed < 60.0,
        f"max h1_sq {worst:.3e} vs ceiling {ceiling:.3e}, {elapsed:.1f}s",
    )


def test_c06_lemma_membership_fully_implicit():
    config = RunConfig(
        n=16,
        scheme=m.SchemeConfig(k=0.01, nu=1.0, scheme=m.FULLY_IMPLICIT),
        initial=m.RandomDivFree(seed=12, slope=-1.0, amplitude=0.1),
        forcing=m.RandomDivFree(seed=13, slope=-1.0, amplitude=0.01),
        n_steps=100,
        monitor="full_small",
    )
    report = run(config)
    assert report.termination == "completed"
    hyps_ok = all(row.verdict.lemma_hypotheses_ok for row in report.rows)
    member_ok = all(row.verdict.y1_membership.ok for row in report.rows)
    # explicit one-step ceiling wherever its own restriction admits it
    e02_ok = True
    prev_h1 = report.bounds.u0_h1_sq
    checked = 0
    for row in report.rows:
        try:
            ceiling = m.one_step_explicit_bound(
                prev_h1, report.bounds.f_l2_sup_sq, 1.0, 0.01, C.c4
            )
        except m.RestrictionViolated:
            prev_h1 = row.norms.h1_sq
            continue
        checked += 1
        if row.norms.h1_sq > ceiling * (1 + 1e-12):
            e02_ok = False
        prev_h1 = row.norms.h1_sq
    _criterion(
        6,
        "per-step root ceiling y1 and explicit (1+ak)x ceiling hold",
        hyps_ok and member_ok and e02_ok and checked == len(report.rows),
        f"{len(report.rows)} steps, {checked} explicit checks",
    )


def test_c07_cubic_oracle():
    cub = m.cubic_analyze(0.5, 0.0, 1.0, 1.0, C)
    exact_ok = (
        abs(cub.y1 - (math.sqrt(3) - 1) / 2) <= 1e-12
        and abs(cub.y2 - 1.0) <= 1e-12
        and abs(cub.y0 + (1 + math.sqrt(3)) / 2) <= 1e-12
    )
    rng = np.random.default_rng(7)
    worst = 0.0
    flags_ok = True
    for _ in range(1000):
        nu = float(rng.uniform(0.25, 4.0))
        k = float(10.0 ** rng.uniform(-4, 0))
        probe = m.cubic_analyze(0.0, 0.0, nu, k, C)
        frac = float(rng.uniform(1e-3, 1.3))  # above 1: no positive roots
        x = frac * probe.x_threshold
        cub = m.cubic_analyze(x, 0.0, nu, k, C)
        g_yplus = cub.g(cub.y_plus)
        if cub.has_positive_roots != (g_yplus < 0.0):
            flags_ok = False
        if cub.has_positive_roots:
            tol = 1e-10 * max(1.0, x)
            for root in (cub.y0, cub.y1, cub.y2):
                worst = max(worst, abs(cub.g(root)) / max(1.0, x))
    _criterion(
        7,
        "cubic roots: factored case to 1e-12, residuals <= 1e-10, existence iff G(y+)<0",
        exact_ok and worst <= 1e-10 and flags_ok,
        f"max residual {worst:.2e}",
    )


def test_c08_gronwall_and_comparison():
    rng = np.random.default_rng(8)
    env_ok = True
    for _ in range(1000):
        b = float(10.0 ** rng.uniform(-3, 1))
        x0 = float(rng.uniform(0, 10))
        r_max = float(rng.uniform(0, 5))
        n = int(rng.integers(1, 200))
        rs = rng.uniform(0.0, r_max, size=n)
        x = x0
        for j in range(n):
            x = (x + rs[j]) / (1.0 + b)
            if x > m.gronwall_envelope(b, x0, r_max, j + 1) * (1 + 1e-12):
                env_ok = False
    seq_ok = True
    for _ in range(100):
        z0 = float(rng.uniform(0.1, 3.0))
        nu = float(rng.uniform(0.5, 2.0))
        c4 = float(rng.uniform(0.5, 2.0))
        n = int(rng.integers(5, 200))
        t_blow = m.comparison_blowup_time(z0, nu, 2.0 * c4)
        k = 0.9 * t_blow / n
        seq = m.comparison_seq(z0, nu, c4, k, n)
        for j in range(n + 1):
            zsq = m.comparison_ode(z0, nu, 2.0 * c4, j * k)
            if seq[j] ** 2 > zsq * (1 + 1e-12):
                seq_ok = False
    doubling = m.comparison_ode(1.0, 1.0, 1.0, 0.25)
    doubling_ok = abs(doubling - 2.0) <= 1e-12
    _criterion(
        8,
        "envelope dominates recursion; Euler iterates below matching growth; doubling exact",
        env_ok and seq_ok and doubling_ok,
        f"z(t*)^2 = {doubling!r}",
    )


def test_c09_temporal_order():
    t0 = time.perf_counter()
    T = 0.2
    ks = [0.04, 0.02, 0.01]
    orders = {}
    for scheme in (m.SEMI_IMPLICIT, m.FULLY_IMPLICIT):
        def final_field(k):
            report = run(
                RunConfig(
                    n=16,
                    scheme=m.SchemeConfig(k=k, nu=1.0, scheme=scheme),
                    initial=m.RandomDivFree(seed=21, slope=-2.0, amplitude=0.3, kmax=3),
                    forcing=m.RandomDivFree(seed=22, slope=-2.0, amplitude=0.05, kmax=3),
                    n_steps=round(T / k),
                    monitor="none",
                )
            )
            return report.final_field

        ref = final_field(0.00125)
        errors = [math.sqrt(m.norms(final_field(k) - ref).l2_sq) for k in ks]
        orders[scheme] = m.fitted_order(ks, errors)
    elapsed = time.perf_counter() - t0
    ok = all(0.8 <= order <= 1.2 for order in orders.values()) and elapsed < 180.0
    _criterion(
        9,
        "observed temporal order in [0.8, 1.2] against a fine reference, both schemes",
        ok,
        ", ".join(f"{s}: {o:.3f}" for s, o in orders.items()) + f", {elapsed:.1f}s",
    )


def test_c10_cli_determinism(tmp_path):
    cfg = tmp_path / "det.cfg"
    cfg.write_text(
        "[grid]\nn = 16\n\n[scheme]\nscheme = semi_implicit\nk = 0.01\nnu = 1.0\n\n"
        "[initial]\nkind = random_divfree\nseed = 9\namplitude = 0.2\nslope = -1.0\n\n"
        "[forcing]\nkind = zero\n\n[run]\nn_steps = 25\nmonitor = none\n"
    )
    out = tmp_path / "out"
    argv = ["run", "--config", str(cfg), "--out", str(out), "--deterministic"]
    assert cli_main(argv) == 0
    csv1 = (out / "run.csv").read_bytes()
    json1 = (out / "run.json").read_bytes()
    assert cli_main(argv) == 0
    ok = (out / "run.csv").read_bytes() == csv1 and (out / "run.json").read_bytes() == json1
    _criterion(10, "deterministic reruns produce byte-identical CSV and JSON", ok)


def test_c11_admissible_dt_consistency():
    cases = {
        "semi_short": (0.0, 1.0, 0.0, 0.0),
        "semi_small": (0.2, 0.3, 0.5, 0.4),
        "full_short": (0.04, 0.09, 0.3, 0.2),
        "full_small": (0.02, 0.05, 0.3, 0.1),
    }
    consistent = True
    detail = []
    for variant, args in cases.items():
        bounds = m.compute_bounds(*args, 1.0, C)
        rep = m.dt_restrictions(bounds, C, 1.0, variant)
        at_kmax = all(chk.ok for chk in rep.checks_at(rep.k_max))
        beyond = any(not chk.ok for chk in rep.checks_at(rep.k_max * 1.01))
        consistent = consistent and at_kmax and beyond
        detail.append(f"{variant}: k_max={rep.k_max:.4g} ({rep.binding})")
    hand = m.dt_restrictions(
        m.compute_bounds(0.0, 1.0, 0.0, 0.0, 1.0, C), C, 1.0, "semi_short"
    )
    exact = hand.k_max == 0.125
    _criterion(
        11,
        "all constraints pass at k_max, fail at 1.01 k_max; hand case exactly 0.125",
        consistent and exact,
        "; ".join(detail),
    )
