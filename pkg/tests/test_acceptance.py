"""End-to-end acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line (shown in the terminal summary) before asserting.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from diracmech import autodiff as ad
from diracmech import chaplygin as ch
from diracmech import geometry as geo
from diracmech import hamilton_jacobi as hj
from diracmech import integrator as integ
from diracmech import systems
from diracmech.errors import SingularKKT

RR = systems.roller_racer()
P = RR.params
E, V_THETA = 1.0, 0.5


def record(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


@pytest.fixture(autouse=True)
def _always_report(request):
    before = len(ACCEPTANCE_LINES)
    yield
    if len(ACCEPTANCE_LINES) == before:
        record(request.node.name.split("_")[2], False, "raised before its metrics were measured")


def rr_points(n, seed):
    rng = np.random.default_rng(seed)
    return np.column_stack([rng.uniform(-5, 5, (n, 2)), rng.uniform(-math.pi, math.pi, n), rng.uniform(0.3, math.pi - 0.3, n)])


@pytest.fixture(scope="module")
def lc_run():
    sysm = systems.lc_circuit()
    q0, v0 = systems.initial_state(sysm)
    start = time.perf_counter()
    tr = integ.integrate(sysm.L, sysm.dist, q0, v0, 50.0, 1e-3)
    nu = integ.zero_crossing_frequency(tr.t, tr.q[:, 0])
    return sysm, tr, nu, time.perf_counter() - start


@pytest.fixture(scope="module")
def rr_direct():
    q0, v0 = systems.initial_state(RR)
    return integ.integrate(RR.L, RR.dist, q0, v0, 10.0, 1e-3)


def test_criterion_1_lc_frequency(lc_run):
    _, _, nu, elapsed = lc_run
    rel = abs(nu / math.sqrt(1.5) - 1.0)
    ok = rel < 1e-5 and elapsed < 5.0
    record(1, ok, f"LC frequency rel. error {rel:.2e} (< 1e-5), runtime {elapsed:.2f} s (< 5 s)")
    assert ok


def test_criterion_2_lc_leaf_relation(lc_run):
    sysm, tr, _, _ = lc_run
    ratio = systems.lc_ratio(sysm.params)
    dev = float(np.abs(tr.q[:, 1] - ratio * tr.q[:, 0]).max())
    ok = dev < 1e-6 and ratio == 0.5
    record(2, ok, f"max |q_c1 - {ratio:g} q_ell| = {dev:.2e} (< 1e-6)")
    assert ok


def test_criterion_3_hj_flow_vs_direct(rr_direct):
    sec = systems.roller_racer_hj_section(P, E, V_THETA)
    q0 = rr_direct.q[0]
    flow = hj.integrate_hj_flow(sec, q0, 10.0, 1e-3, RR.L, RR.dist)
    gap = hj.trajectory_deviation(flow, rr_direct)
    vr = systems.roller_racer_vr(P, E, V_THETA)
    closed_form = systems.roller_racer_phi_rate(P, E, V_THETA, rr_direct.q[:, 3])
    phi_dev = float(np.abs(rr_direct.v[:, 3] - closed_form).max())
    ok = gap < 1e-6 and phi_dev < 1e-6 and abs(vr - math.sqrt(1.75)) < 1e-15
    record(3, ok, f"HJ flow vs direct sup gap {gap:.2e} (< 1e-6), phi-equation dev {phi_dev:.2e}, v_r = {vr:.10f}")
    assert ok


def test_criterion_4_conservation(rr_direct):
    vt_dev = float(np.abs(rr_direct.v[:, 2] - rr_direct.v[0, 2]).max())
    drift = integ.energy_drift(rr_direct)
    q0, v0 = systems.initial_state(RR)
    hs = (1e-2, 5e-3, 2.5e-3)
    drifts = [integ.energy_drift(integ.integrate(RR.L, RR.dist, q0, v0, 10.0, h)) for h in hs]
    orders = [math.log2(drifts[i] / drifts[i + 1]) for i in range(len(hs) - 1)]
    ok = vt_dev < 1e-8 and drift < 1e-8 and min(orders) >= 3.5
    record(
        4,
        ok,
        f"v_theta dev {vt_dev:.2e}, energy drift {drift:.2e} (< 1e-8), drift orders {', '.join(f'{o:.2f}' for o in orders)} (>= 3.5)",
    )
    assert ok


def _relifted(p, X_fn, gamma_fn=None):
    """Section with the given ``(X_theta, X_phi)`` rule; planar components follow the constraints."""

    def X(q):
        xt, xp = X_fn(q)
        vx, vy = systems.roller_racer_lift_xy(p, q[2], q[3], xt, xp)
        return [vx, vy, xt, xp]

    def gamma(q):
        if gamma_fn is not None:
            return gamma_fn(q, X(q))
        vx, vy, xt, _ = X(q)
        return [p.m1 * vx, p.m1 * vy, p.I1 * xt, 0.0 * q[3]]

    return hj.HJSection(4, X, gamma, E)


def perturbed_sections():
    base = systems.roller_racer_hj_section(P, E, V_THETA)

    def raw_phi(q):
        vx, vy, xt, xp = base.X(q)
        return [vx, vy, xt, 1.01 * xp]

    def scaled_gamma(q):
        return [1.01 * c for c in base.gamma(q)]

    def shifted_gamma(q):
        g = base.gamma(q)
        return [g[0], g[1], g[2] + 0.01, g[3]]

    return {
        "theta profile 1 + 0.01 cos phi": systems.roller_racer_hj_section(P, E, V_THETA, theta_profile=lambda ph: 1.0 + 0.01 * ad.cos(ph)),
        "X_phi scaled 1.01, relifted": systems.roller_racer_hj_section(P, E, V_THETA, phi_scale=1.01),
        "X_phi + 0.01, relifted": _relifted(P, lambda q: (base.X(q)[2], base.X(q)[3] + 0.01)),
        "X_phi scaled 1.01, raw": hj.HJSection(4, raw_phi, base.gamma, E),
        "gamma scaled 1.01": hj.HJSection(4, base.X, scaled_gamma, E),
        "gamma_theta + 0.01": hj.HJSection(4, base.X, shifted_gamma, E),
    }


def _checks(sec, q):
    return {
        "in_K": hj.check_in_K(sec, RR.L, RR.dist, q),
        "closedness": hj.check_closedness_on_delta(sec, RR.dist, q),
        "dhj": float(np.abs(hj.dhj_residual(sec, RR.L, RR.dist, q)).max()),
        "energy": hj.dhj_energy_constancy(sec, RR.L, q)[1],
    }


def test_criterion_5_residual_suite():
    q = rr_points(1000, 42)
    exact = _checks(systems.roller_racer_hj_section(P, E, V_THETA), q)
    ok = max(exact.values()) < 1e-9
    worst = {}
    for name, sec in perturbed_sections().items():
        res = _checks(sec, q)
        worst[name] = max(res.values())
        ok = ok and worst[name] > 1e-4
    detail = ", ".join(f"{k} {v:.1e}" for k, v in exact.items())
    weakest = min(worst, key=worst.get)
    record(5, ok, f"exact: {detail} (< 1e-9); {len(worst)} perturbations, weakest '{weakest}' fails by {worst[weakest]:.2e} (> 1e-4)")
    assert ok


def test_criterion_6_chaplygin_pipeline():
    bundle = ch.build_bundle(RR.L, RR.dist, RR.group)
    q = rr_points(1000, 7)
    pbar = np.random.default_rng(8).normal(size=(1000, 2))
    energy_gap = float(np.abs(ch.lifted_energy_residual(bundle, q, pbar)).max())
    C = systems.roller_racer_C(P, E, V_THETA)
    gb = systems.roller_racer_gamma_bar(P, E, V_THETA, C)
    edev, form = ch.reduced_dhj_check(bundle, gb, q[:, 2:], E=E)
    lifted = ch.lift_reduced_solution(bundle, gb, E)
    ref = systems.roller_racer_hj_section(P, E, V_THETA)
    field_dev = max(
        float(np.abs(lifted.vector_field(q) - ref.vector_field(q)).max()),
        float(np.abs(lifted.covector(q) - ref.covector(q)).max()),
    )
    ok = energy_gap < 1e-12 and max(edev, form) < 1e-10 and field_dev < 1e-10
    record(6, ok, f"lifted energy vs Hbar {energy_gap:.2e} (< 1e-12), reduced HJ ({edev:.1e}, {form:.1e}) (< 1e-10), lifted vs full fields {field_dev:.2e} (< 1e-10)")
    assert ok


def test_criterion_7_reduction_commutes(rr_direct):
    bundle = ch.build_bundle(RR.L, RR.dist, RR.group)
    q0, v0 = rr_direct.q[0], rr_direct.v[0]
    r0, pb0 = ch.reduced_initial_state(bundle, q0, v0)
    red = ch.integrate_reduced(bundle, r0, pb0, 10.0, 1e-3)
    full = ch.reconstruct(bundle, red, q0[list(bundle.group)])
    gap = hj.trajectory_deviation(full, rr_direct)
    ok = gap < 1e-6
    record(7, ok, f"reduce + reconstruct vs direct sup gap {gap:.2e} (< 1e-6)")
    assert ok


def _central_difference(f, x, step=1e-6):
    g = np.empty_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (f(x + e) - f(x - e)) / (2 * step)
    return g


def test_criterion_8_structure():
    rng = np.random.default_rng(2024)
    pairing = 0.0
    for name in systems.BUILDERS:
        sysm = systems.make_system(name)
        n, k = sysm.n, sysm.dist.rank
        q = rng.uniform(0.3, 1.3, (1000, n))
        e1, e2 = (
            geo.induced_dirac_element(sysm.dist, q, rng.normal(size=(1000, n - k)), rng.normal(size=(1000, n)), rng.normal(size=(1000, k)))
            for _ in range(2)
        )
        pairing = max(pairing, float(np.abs(geo.dirac_pairing(e1, e2)).max()))
    bundle = ch.build_bundle(RR.L, RR.dist, RR.group)
    z = np.column_stack([rr_points(100, 3), rng.normal(size=(100, 2))])
    rep = ch.appendix_consistency(bundle, z, rng.normal(size=(100, 4)), rng.normal(size=(100, 4)))
    fd_err = 0.0
    for name in ("roller-racer", "bicycle", "lc-circuit"):
        sysm = systems.make_system(name)
        n = sysm.n
        for _ in range(50):
            x = np.concatenate([rng.uniform(0.3, 1.3, n), rng.normal(size=n)])
            g = ad.grad_scalar(lambda c: sysm.L.func(c[:n], c[n:]), x)
            fd = _central_difference(lambda y: float(sysm.L(y[:n], y[n:])), x)
            fd_err = max(fd_err, float(np.abs(g - fd).max() / max(1.0, np.abs(g).max())))
    ok = pairing < 1e-12 and rep["checked"] == 100 and rep["max_deviation"] < 1e-10 and fd_err < 1e-6
    record(
        8,
        ok,
        f"self-duality {pairing:.2e} (< 1e-12), cotangent consistency {rep['max_deviation']:.2e} over {rep['checked']} (< 1e-10), autodiff vs FD {fd_err:.2e} (< 1e-6)",
    )
    assert ok


def test_criterion_9_degeneracy():
    pv = systems.point_vortex()
    rng = np.random.default_rng(5)
    flagged = hj.linear_velocity_diagnostic(pv.L, (rng.normal(size=(20, 2)), rng.normal(size=(20, 2))))
    try:
        integ.integrate(pv.L, pv.dist, [1.0, 0.0], [0.0, 0.0], 1.0, 1e-3)
        raised = ""
    except SingularKKT as exc:
        raised = str(exc)
    bike = systems.bicycle()
    q0, v0 = systems.initial_state(bike)
    tr = integ.integrate(bike.L, bike.dist, q0, v0, 5.0, 1e-3)
    degenerate = np.linalg.matrix_rank(geo.velocity_hessian(bike.L, q0, v0)) < bike.n
    resid = float(tr.constraint_residual.max())
    ok = flagged and "linear_velocity_diagnostic" in raised and degenerate and resid < 1e-9
    record(9, ok, f"linear-velocity diagnostic {flagged}, SingularKKT raised {bool(raised)}, bicycle degenerate {degenerate}, residual {resid:.2e} (< 1e-9)")
    assert ok
