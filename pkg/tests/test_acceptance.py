"""Acceptance suite: each test prints one PASS/FAIL line and then asserts."""
import itertools
import json
import math

import numpy as np
import pytest

from wassaction.classical import minimize_classical, solve_a_ode, t_p_estimate
from wassaction.cli import main
from wassaction.ensemble import (EnsemblePath, closed_form_flow, dp_check_report, minimize_generalized,
                                 poincare_check, poincare_constant, reduce_linear, wasserstein_hopf_lax)
from wassaction.eulerpoisson import (boundary_momentum_check, closed_form_evaluator, euler_poisson_residual,
                                     optimality_condition_check)
from wassaction.fields import linear, p_power, quadratic
from wassaction.functionals import integral
from wassaction.lagrangian import power
from wassaction.measure import random_measure, uniform_measure
from wassaction.problem import ProblemSpec, horizon
from wassaction.transport import brute_force_wasserstein, wasserstein_distance
from wassaction.viscosity import (TestCotangent, closed_form_value, default_directions,
                                  hje_residual_wasserstein, legendre, subsolution_probe,
                                  supersolution_probe)

HARMONIC = ProblemSpec(p=2.0, V=quadratic(0.5))
CUBIC = ProblemSpec(p=3.0, V=p_power(3.0))


@pytest.fixture
def verdict(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {k}: {detail}")
        assert ok, detail
    return emit


def test_criterion_01_quadratic_closed_form(verdict):
    worst = 0.0
    for x, t in itertools.product((0.5, 1.0, 2.0), (0.3, 0.6, 1.0)):
        rep = minimize_classical([x], t, HARMONIC, N=400)
        worst = max(worst, abs(rep.value + math.tan(t) * x * x / 2))
    verdict(1, worst <= 1e-4, f"max |u_N - (-tan(t)|x|^2/2)| = {worst:.2e} (tol 1e-4)")


def test_criterion_02_riccati_profile(verdict):
    sol = solve_a_ode(2.0, 1.0, 100_000)
    err_a = abs(sol.a[-1] + math.tan(1.0))
    err_T = abs(t_p_estimate(2.0).blowup_time - math.pi / 2)
    a04 = solve_a_ode(3.0, 0.4, 100_000).a[-1]
    err_3 = max(abs(minimize_classical([x], 0.4, CUBIC, N=400).value - a04 * x**3 / 3) for x in (0.5, 1.0, 1.5))
    ok = err_a <= 1e-8 and err_T <= 1e-3 and err_3 <= 5e-4
    verdict(2, ok, f"|a(1)+tan 1| = {err_a:.1e} (1e-8), |T_est - pi/2| = {err_T:.1e} (1e-3), "
                   f"p=3 max err = {err_3:.1e} (5e-4)")


def test_criterion_03_reduction_to_classical(verdict):
    rng = np.random.default_rng(0)
    lin = ProblemSpec(p=2.0, g=linear([0.7, -0.4]))
    worst = {"harmonic": 0.0, "linear": 0.0}
    for _ in range(20):
        mu = random_measure(10, 1, rng)
        worst["harmonic"] = max(worst["harmonic"],
                                 abs(minimize_generalized(mu, 0.6, HARMONIC).value - reduce_linear(mu, 0.6, HARMONIC)))
        mu = random_measure(10, 2, rng)
        worst["linear"] = max(worst["linear"],
                              abs(minimize_generalized(mu, 0.8, lin).value - reduce_linear(mu, 0.8, lin)))
    ok = max(worst.values()) <= 2e-3
    verdict(3, ok, f"max gap harmonic {worst['harmonic']:.1e}, linear {worst['linear']:.1e} (tol 2e-3)")


def test_criterion_04_hopf_lax(verdict):
    rng = np.random.default_rng(0)
    c = np.array([0.7, -0.4])
    t = 0.8
    worst_exact = worst_solver = 0.0
    for p in (1.5, 2.0, 3.0):
        spec = ProblemSpec(p=p, g=linear(c))
        q = p / (p - 1)
        mu = random_measure(6, 2, rng)
        hl = wasserstein_hopf_lax(mu, t, integral(spec.g), spec)
        exact = mu.weights @ (mu.points @ c) - t * np.linalg.norm(c) ** q / q
        worst_exact = max(worst_exact, abs(hl - exact))
        worst_solver = max(worst_solver, abs(hl - minimize_generalized(mu, t, spec).value))
    ok = worst_exact <= 1e-5 and worst_solver <= 1e-4
    verdict(4, ok, f"vs formula {worst_exact:.1e} (1e-5), vs path solver {worst_solver:.1e} (1e-4)")


def test_criterion_05_dynamic_programming(verdict):
    mu = random_measure(10, 1, np.random.default_rng(0))
    rep = dp_check_report(mu, 0.6, 0.3, HARMONIC, N=400)
    verdict(5, abs(rep.residual) <= 5e-3, f"|rhs - lhs| = {abs(rep.residual):.1e} (tol 5e-3)")


def test_criterion_06_exact_transport(verdict):
    rng = np.random.default_rng(0)
    worst = 0.0
    for p in (1.5, 2.0, 3.0):
        for _ in range(200):
            mu = random_measure(5, 2, rng, uniform=True)
            nu = random_measure(5, 2, rng, uniform=True)
            worst = max(worst, abs(wasserstein_distance(mu, nu, p) - brute_force_wasserstein(mu, nu, p)))
    sym = tri = 0.0
    for i in range(200):
        p = (1.5, 2.0, 3.0)[i % 3]
        a, b, c = (random_measure(int(rng.integers(1, 6)), 2, rng) for _ in range(3))
        ab, ba = wasserstein_distance(a, b, p), wasserstein_distance(b, a, p)
        sym = max(sym, abs(ab - ba))
        tri = max(tri, ab - wasserstein_distance(a, c, p) - wasserstein_distance(c, b, p))
    ok = worst <= 1e-8 and sym <= 1e-8 and tri <= 1e-8
    verdict(6, ok, f"LP vs brute force {worst:.1e} (1e-8), asymmetry {sym:.1e}, triangle excess {tri:.1e}")


def test_criterion_07_poincare(verdict):
    rng = np.random.default_rng(0)
    worst = -math.inf
    for i in range(100):
        p = (1.5, 2.0, 3.0)[i % 3]
        pos = np.cumsum(rng.normal(scale=0.3, size=(21, 5, 2)), axis=0)
        w = rng.uniform(0.2, 1.0, 5)
        lhs, rhs = poincare_check(EnsemblePath(w / w.sum(), pos, rng.uniform(0.1, 2.0)), p)
        worst = max(worst, lhs - rhs)
    ok = worst <= 1e-6 and horizon(1.0, 2.0) == 0.5 and poincare_constant(2.0) == 2 ** -0.5
    verdict(7, ok, f"max lhs - rhs = {worst:.2e} (<= 1e-6), horizon(1, 2) = {horizon(1.0, 2.0)}")


def test_criterion_08_euler_poisson(verdict):
    mu = random_measure(10, 1, np.random.default_rng(0))
    res = [euler_poisson_residual(closed_form_flow(mu, 0.6, N, HARMONIC), HARMONIC) for N in (100, 200, 400)]
    cont = [r.continuity for r in res]
    mom = [r.momentum for r in res]
    ratio = max(cont[1] / cont[0], cont[2] / cont[1], mom[1] / mom[0], mom[2] / mom[1])
    ok = cont[-1] <= 1e-2 and mom[-1] <= 1e-2 and ratio <= 0.6
    verdict(8, ok, f"N=400 continuity {cont[-1]:.1e}, momentum {mom[-1]:.1e} (1e-2); worst ratio {ratio:.2f} (0.6)")


def test_criterion_09_optimality(verdict):
    mu = random_measure(10, 1, np.random.default_rng(0))
    e_harm = optimality_condition_check(closed_form_flow(mu, 0.6, 400, HARMONIC), HARMONIC, closed_form_evaluator(HARMONIC))
    sigma34 = minimize_generalized(uniform_measure([[0.0], [1.0]]), 0.4, CUBIC, 400).path
    e_cubic = optimality_condition_check(sigma34, CUBIC, closed_form_evaluator(CUBIC))
    lin = ProblemSpec(p=2.0, g=linear([0.6, -0.3]))
    sigma = minimize_generalized(random_measure(5, 2, np.random.default_rng(0)), 0.7, lin, 200).path
    bnd = boundary_momentum_check(sigma, lin)
    ok = e_harm <= 1e-6 and e_cubic <= 5e-3 and bnd <= 1e-5
    verdict(9, ok, f"harmonic {e_harm:.1e} (1e-6), cubic {e_cubic:.1e} (5e-3), boundary {bnd:.1e} (1e-5)")


def test_criterion_10_viscosity(verdict):
    mu = random_measure(10, 1, np.random.default_rng(0))
    t = 0.6
    m2 = float(mu.weights @ np.sum(mu.points**2, axis=1))
    cand = TestCotangent(-math.tan(t) * mu.points, -m2 / (2 * math.cos(t) ** 2))
    U = closed_form_value(HARMONIC)
    hs = [0.04, 0.02, 0.01]

    def sub(c):
        return subsolution_probe(U, mu, t, c, default_directions(mu, c, 1.0, 2.0), hs, HARMONIC)

    def sup(c):
        return supersolution_probe(U, mu, t, c, hs, HARMONIC, N=400)

    sub0, sup0 = sub(cand), sup(cand)
    sub_up, sup_down = sub(cand.shifted(0.1)), sup(cand.shifted(-0.1))
    hje2 = hje_residual_wasserstein(HARMONIC, mu, t)
    hje3 = hje_residual_wasserstein(CUBIC, uniform_measure([[0.0], [1.0]]), 0.4)
    ok = (abs(sub0.closed_form) <= 1e-6 and abs(sup0.slack) <= 5e-3 and sub_up.violation >= 0.05
          and -sup_down.slack >= 0.05 and hje2 <= 1e-8 and hje3 <= 1e-6)
    verdict(10, ok, f"sub {sub0.closed_form:.1e} (1e-6), super {sup0.slack:.1e} (5e-3), "
                    f"a+0.1 margin {sub_up.violation:.3f}, a-0.1 margin {-sup_down.slack:.3f} (>= 0.05), "
                    f"HJE p=2 {hje2:.1e} (1e-8), p=3 {hje3:.1e} (1e-6)")


def test_criterion_11_legendre(verdict):
    worst = fy = 0.0
    grid = np.linspace(0.0, 50.0, 50_001)
    for p in (1.5, 2.0, 3.0):
        q = p / (p - 1)
        star = legendre(power(p), grid)
        for z in (0.5, 1.0, 2.0):
            val = star(z)
            worst = max(worst, abs(val - z**q / q))
            fy = max(fy, float(np.max(z * grid - star.ell_grid - val)))
    ok = worst <= 1e-6 and fy <= 1e-9
    verdict(11, ok, f"max |l*(z) - z^q/q| = {worst:.1e} (1e-6), Fenchel-Young excess {fy:.1e} (1e-9)")


def test_criterion_12_determinism(verdict, tmp_path):
    doc = tmp_path / "run.json"
    doc.write_text(json.dumps({"p": 2.0, "V": {"kind": "quadratic", "c": 0.5},
                               "measure": {"random": {"n": 10, "d": 1}}, "t": 0.6, "s": 0.3, "N": 200}))
    outs = []
    for name in ("first.json", "second.json"):
        target = tmp_path / name
        assert main(["dp-check", "--spec", str(doc), "--seed", "0", "--out", str(target)]) == 0
        outs.append(target.read_bytes())
    verdict(12, outs[0] == outs[1], f"two dp-check runs byte-identical: {outs[0] == outs[1]}")
